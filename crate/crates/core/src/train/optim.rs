use std::collections::{BTreeMap, HashMap};

use crate::blocks::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay:
/// `θ ← θ - lr·wd·θ - lr·m̂ / (√v̂ + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(cfg: AdamWConfig) -> Self {
        OptimState {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update of every trainable parameter that has a gradient.
    ///
    /// Gradients are validated first; on a non-finite entry nothing is
    /// modified.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &HashMap<String, Vec<T>>,
    ) -> Result<()> {
        for (name, g) in grads {
            let entry = store
                .get(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
            if entry.value.len() != g.len() {
                return Err(Error::Shape {
                    op: "adamw",
                    msg: format!(
                        "{name}: {} values vs {} gradients",
                        entry.value.len(),
                        g.len()
                    ),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let c = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let names: Vec<String> = store
            .entries()
            .iter()
            .filter(|e| e.trainable && grads.contains_key(&e.name))
            .map(|e| e.name.clone())
            .collect();
        for name in names {
            let g = &grads[&name];
            let theta = store.get(&name).expect("checked above").value.to_vec();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            let mut out = Vec::with_capacity(g.len());
            for i in 0..g.len() {
                let gi = g[i].as_f64();
                let mi = c.beta1 * m[i].as_f64() + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i].as_f64() + (1.0 - c.beta2) * gi * gi;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let (m_hat, v_hat) = (mi / bc1, vi / bc2);
                let th = theta[i].as_f64();
                out.push(T::lit(
                    th - c.lr * c.weight_decay * th - c.lr * m_hat / (v_hat.sqrt() + c.eps),
                ));
            }
            store.set(&name, out)?;
        }
        Ok(())
    }
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut HashMap<String, Vec<T>>, max_norm: f64) -> f64 {
    let mut names: Vec<&String> = grads.keys().collect();
    names.sort();
    let norm = names
        .iter()
        .flat_map(|n| grads[*n].iter())
        .map(|v| v.as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        for g in grads.values_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
