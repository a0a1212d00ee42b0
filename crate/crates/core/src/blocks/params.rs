//! Named parameter storage and the per-forward parameter context.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, RunningStats, Tensor};

/// Initialization rule for a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`
    KaimingUniform {
        fan_in: usize,
    },
    Normal {
        mean: f64,
        std: f64,
    },
    Zeros,
    Ones,
}

/// Declared parameter or buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// buffers (batch-norm running statistics) are not optimized
    pub trainable: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            trainable: false,
            ..Self::new(name, shape, init)
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub value: Arc<Vec<T>>,
}

/// Ordered, name-addressable set of parameters and buffers.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    /// Initialize every spec from one seeded stream, in declaration order.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore {
            entries: Vec::with_capacity(specs.len()),
            index: HashMap::new(),
        };
        for spec in specs {
            let n = spec.numel();
            let values: Vec<T> = match spec.init {
                Init::KaimingUniform { fan_in } => {
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    (0..n)
                        .map(|_| T::lit(rng.gen_range(-bound..bound)))
                        .collect()
                }
                Init::Normal { mean, std } => {
                    let dist = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                    (0..n).map(|_| T::lit(dist.sample(&mut rng))).collect()
                }
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
            };
            store.insert(ParamEntry {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                trainable: spec.trainable,
                value: Arc::new(values),
            })?;
        }
        Ok(store)
    }

    pub fn empty() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, entry: ParamEntry<T>) -> Result<()> {
        if self.index.contains_key(&entry.name) {
            return Err(Error::Config(format!("duplicate parameter {}", entry.name)));
        }
        if entry.shape.iter().product::<usize>() != entry.value.len() {
            return Err(Error::Config(format!(
                "parameter {} has wrong length",
                entry.name
            )));
        }
        self.index.insert(entry.name.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replace the values of an existing entry.
    pub fn set(&mut self, name: &str, values: Vec<T>) -> Result<()> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        if self.entries[i].value.len() != values.len() {
            return Err(Error::Config(format!("size mismatch for {name}")));
        }
        self.entries[i].value = Arc::new(values);
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Persist batch-norm statistics collected during a training forward.
    pub fn apply_updates(&mut self, updates: StatUpdates<T>) -> Result<()> {
        for (prefix, stats) in updates {
            self.set(&format!("{prefix}.running_mean"), stats.mean)?;
            self.set(&format!("{prefix}.running_var"), stats.var)?;
        }
        Ok(())
    }

    /// Same names and values in another precision.
    pub fn convert<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::empty();
        for e in &self.entries {
            out.insert(ParamEntry {
                name: e.name.clone(),
                shape: e.shape.clone(),
                trainable: e.trainable,
                value: Arc::new(e.value.iter().map(|v| U::lit(v.as_f64())).collect()),
            })
            .expect("unique names");
        }
        out
    }
}

/// Per-forward view of the parameters.
///
/// Hands out one leaf tensor per parameter (shared across uses), records
/// batch-norm statistic updates, and lets tests substitute their own
/// tensors for chosen parameters.
/// Batch-norm running statistics produced by one training forward, by layer prefix.
pub type StatUpdates<T> = Vec<(String, RunningStats<T>)>;

pub struct Ctx<'a, T: Real> {
    store: &'a ParamStore<T>,
    pub training: bool,
    track_grads: bool,
    leaves: HashMap<String, Tensor<T>>,
    overrides: HashMap<String, Tensor<T>>,
    updates: StatUpdates<T>,
}

impl<'a, T: Real> Ctx<'a, T> {
    pub fn new(store: &'a ParamStore<T>, training: bool, track_grads: bool) -> Self {
        Ctx {
            store,
            training,
            track_grads,
            leaves: HashMap::new(),
            overrides: HashMap::new(),
            updates: Vec::new(),
        }
    }

    /// Inference: no gradient tracking, running statistics.
    pub fn eval(store: &'a ParamStore<T>) -> Self {
        Self::new(store, false, false)
    }

    pub fn with_override(mut self, name: impl Into<String>, t: Tensor<T>) -> Self {
        self.overrides.insert(name.into(), t);
        self
    }

    pub fn param(&mut self, name: &str) -> Result<Tensor<T>> {
        if let Some(t) = self.overrides.get(name) {
            return Ok(t.clone());
        }
        if let Some(t) = self.leaves.get(name) {
            return Ok(t.clone());
        }
        let entry = self
            .store
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
        let t = Tensor::from_shared(
            &entry.shape,
            Arc::clone(&entry.value),
            self.track_grads && entry.trainable,
        )?;
        self.leaves.insert(name.to_string(), t.clone());
        Ok(t)
    }

    pub fn running_stats(&self, prefix: &str) -> Result<RunningStats<T>> {
        let get = |suffix: &str| {
            self.store
                .get(&format!("{prefix}.{suffix}"))
                .map(|e| e.value.to_vec())
                .ok_or_else(|| Error::Config(format!("missing buffer {prefix}.{suffix}")))
        };
        Ok(RunningStats {
            mean: get("running_mean")?,
            var: get("running_var")?,
        })
    }

    pub fn record_stats(&mut self, prefix: &str, stats: RunningStats<T>) {
        self.updates.push((prefix.to_string(), stats));
    }

    /// Leaves created during this forward, by parameter name.
    pub fn into_parts(self) -> (HashMap<String, Tensor<T>>, StatUpdates<T>) {
        (self.leaves, self.updates)
    }
}
