//! The assembled network: five encoder blocks, multi-scale aggregation,
//! multi-scale upsampling, five global attention modules and six decoder
//! blocks with deep supervision.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::blocks::gam::DEFAULT_DILATIONS;
use crate::blocks::ghpa::DEFAULT_GRID;
use crate::blocks::shapes::{
    decoder_shape, global_feature_shape, prediction_size, StageShapeSpec, SIZE_MULTIPLE,
};
use crate::blocks::{
    Ctx, DecoderBlock, EncoderBlock, Gam, Mab, Mub, ParamSpec, ParamStore, StatUpdates,
};
use crate::error::{Error, Result};
use crate::tensor::elementwise::sigmoid_scalar;
use crate::tensor::{Real, Tensor};

/// Deep-supervision weights `λ_0..λ_5`, finest prediction first.
pub const DEFAULT_LAMBDA: [f64; 6] = [1.0, 0.5, 0.4, 0.3, 0.2, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub c0: usize,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub use_mdb: bool,
    pub use_mub: bool,
    pub use_mab: bool,
    pub gam_dilations: [usize; 4],
    pub ghpa_grid: usize,
    pub lambda: [f64; 6],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            c0: 32,
            height: 512,
            width: 512,
            in_channels: 1,
            num_classes: 1,
            use_mdb: true,
            use_mub: true,
            use_mab: true,
            gam_dilations: DEFAULT_DILATIONS,
            ghpa_grid: DEFAULT_GRID,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Scaled-down configuration: `c0 = 8` on `64×64` inputs.
    pub fn desk() -> Self {
        ModelConfig {
            c0: 8,
            height: 64,
            width: 64,
            ..Self::default()
        }
    }

    /// Encoder widths `c0·2^(i-1)` for `i = 1..=5`.
    pub fn channel_ladder(&self) -> [usize; 5] {
        std::array::from_fn(|i| self.c0 << i)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(SIZE_MULTIPLE)
            || !self.width.is_multiple_of(SIZE_MULTIPLE)
        {
            return bad(format!(
                "input size {}x{} must be a positive multiple of {SIZE_MULTIPLE}",
                self.height, self.width
            ));
        }
        if self.c0 == 0 || !self.c0.is_multiple_of(4) {
            return bad(format!("c0 = {} must be a positive multiple of 4", self.c0));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be positive".into());
        }
        if self.num_classes != 1 {
            return bad(format!(
                "num_classes = {} unsupported (binary only)",
                self.num_classes
            ));
        }
        if self.gam_dilations.contains(&0) {
            return bad("GAM dilations must be positive".into());
        }
        if self.ghpa_grid == 0 {
            return bad("ghpa_grid must be positive".into());
        }
        if self.lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad("lambda weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Pipeline stage identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    E(u8),
    F,
    G(u8),
    Q(u8),
    D(u8),
    P(u8),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::E(i) => write!(f, "E{i}"),
            Stage::F => write!(f, "F"),
            Stage::G(i) => write!(f, "G{i}"),
            Stage::Q(i) => write!(f, "Q{i}"),
            Stage::D(i) => write!(f, "D{i}"),
            Stage::P(i) => write!(f, "P{i}"),
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown stage {s:?}"));
        if s == "F" {
            return Ok(Stage::F);
        }
        let (kind, idx) = s.split_at(1);
        let i: u8 = idx.parse().map_err(|_| bad())?;
        let (stage, ok) = match kind {
            "E" => (Stage::E(i), (1..=6).contains(&i)),
            "G" => (Stage::G(i), (1..=5).contains(&i)),
            "Q" => (Stage::Q(i), (1..=5).contains(&i)),
            "D" => (Stage::D(i), (1..=6).contains(&i)),
            "P" => (Stage::P(i), i <= 5),
            _ => return Err(bad()),
        };
        if ok {
            Ok(stage)
        } else {
            Err(bad())
        }
    }
}

impl Stage {
    /// Per-sample shape `(C, H, W)` under `cfg`, for stages present in the
    /// full model.
    pub fn expected_shape(&self, cfg: &ModelConfig) -> [usize; 3] {
        let (c0, h, w) = (cfg.c0, cfg.height, cfg.width);
        let level = |i: u8| StageShapeSpec::new(c0, h, w, i as usize);
        match *self {
            Stage::E(6) | Stage::F => global_feature_shape(c0, h, w),
            Stage::E(i) | Stage::Q(i) => level(i).encoder,
            Stage::G(i) => level(i).global,
            Stage::D(i) => decoder_shape(c0, h, w, i as usize),
            Stage::P(i) => {
                let (ph, pw) = prediction_size(h, w, i as usize);
                [1, ph, pw]
            }
        }
    }
}

/// Captured intermediate tensors of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct StageActivations<T: Real> {
    pub map: BTreeMap<Stage, Tensor<T>>,
}

impl<T: Real> StageActivations<T> {
    pub fn get(&self, stage: Stage) -> Option<&Tensor<T>> {
        self.map.get(&stage)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn put(&mut self, stage: Stage, t: &Tensor<T>) {
        self.map.insert(stage, t.clone());
    }
}

pub struct ForwardOutput<T: Real> {
    /// logits `P_0..P_5`
    pub logits: Vec<Tensor<T>>,
    pub stages: Option<StageActivations<T>>,
    /// parameter leaves used by this pass, for reading gradients
    pub leaves: HashMap<String, Tensor<T>>,
    /// batch-norm running statistics to commit after a training step
    pub updates: StatUpdates<T>,
}

#[derive(Debug, Clone)]
pub struct HesUnet {
    pub config: ModelConfig,
    encoders: Vec<EncoderBlock>,
    mab: Mab,
    mub: Option<Mub>,
    gams: Vec<Gam>,
    decoders: Vec<DecoderBlock>,
}

fn at<R>(stage: impl fmt::Display, r: Result<R>) -> Result<R> {
    r.map_err(|e| match e {
        Error::NonFinite(op) => Error::NonFinite(format!("{stage}: {op}")),
        other => other,
    })
}

impl HesUnet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (c0, h, w, grid) = (config.c0, config.height, config.width, config.ghpa_grid);
        let encoders = (1..=5)
            .map(|l| EncoderBlock::new(l, config.in_channels, c0, grid, config.use_mdb))
            .collect::<Result<_>>()?;
        let mub = if config.use_mub {
            Some(Mub::new(c0, h, w, grid)?)
        } else {
            None
        };
        Ok(HesUnet {
            encoders,
            mab: Mab::new(c0, h, w, grid, config.use_mab)?,
            mub,
            gams: (1..=5)
                .map(|l| Gam::new(l, c0, config.gam_dilations))
                .collect::<Result<_>>()?,
            decoders: (1..=6)
                .map(|l| DecoderBlock::new(l, c0, grid))
                .collect::<Result<_>>()?,
            config,
        })
    }

    /// Every parameter and buffer in declaration order.
    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v: Vec<ParamSpec> = self.encoders.iter().flat_map(|e| e.specs()).collect();
        v.extend(self.mab.specs());
        if let Some(m) = &self.mub {
            v.extend(m.specs());
        }
        for g in &self.gams {
            v.extend(g.specs());
        }
        for d in self.decoders.iter().rev() {
            v.extend(d.specs());
        }
        v
    }

    /// Trainable parameters as `(name, shape)`, in declaration order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.specs()
            .into_iter()
            .filter(|s| s.trainable)
            .map(|s| (s.name, s.shape))
            .collect()
    }

    pub fn init_params<T: Real>(&self) -> Result<ParamStore<T>> {
        ParamStore::init(&self.specs(), self.config.seed)
    }

    fn check_input<T: Real>(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let want = [
            self.config.in_channels,
            self.config.height,
            self.config.width,
        ];
        if !(s.len() == 3 || s.len() == 4) || s[s.len() - 3..] != want {
            return Err(Error::Shape {
                op: "forward",
                msg: format!("input {s:?} does not match configured {want:?}"),
            });
        }
        Ok(())
    }

    /// Run the network inside an existing parameter context.
    ///
    /// Returns the six logit maps `P_0..P_5` and, when `capture` is set,
    /// every named intermediate.
    pub fn forward_ctx<T: Real>(
        &self,
        ctx: &mut Ctx<'_, T>,
        x: &Tensor<T>,
        capture: bool,
    ) -> Result<(Vec<Tensor<T>>, Option<StageActivations<T>>)> {
        self.check_input(x)?;
        let mut acts = StageActivations::default();
        let mut keep = |stage: Stage, t: &Tensor<T>| {
            if capture {
                acts.put(stage, t);
            }
        };

        let mut encoded = Vec::with_capacity(5);
        let mut cur = x.clone();
        for (i, eb) in self.encoders.iter().enumerate() {
            let stage = Stage::E(i as u8 + 1);
            cur = at(stage, eb.forward(ctx, &cur))?;
            keep(stage, &cur);
            encoded.push(cur.clone());
        }
        let agg = at(Stage::F, self.mab.forward(ctx, &encoded))?;
        keep(Stage::E(6), &agg.e6);
        keep(Stage::F, &agg.f);

        let batch: Vec<usize> = x.shape()[..x.rank() - 3].to_vec();
        let globals: Vec<Tensor<T>> = match &self.mub {
            Some(mub) => at("MUB", mub.forward(ctx, &agg.f))?.globals,
            None => (1..=5)
                .map(|l| {
                    let s = StageShapeSpec::new(
                        self.config.c0,
                        self.config.height,
                        self.config.width,
                        l,
                    )
                    .global;
                    let mut shape = batch.clone();
                    shape.extend_from_slice(&s);
                    Tensor::zeros(&shape)
                })
                .collect::<Result<_>>()?,
        };
        for (i, g) in globals.iter().enumerate() {
            keep(Stage::G(i as u8 + 1), g);
        }

        let mut logits: Vec<Option<Tensor<T>>> = vec![None; 6];
        let deepest = if self.mub.is_some() {
            globals[4].clone()
        } else {
            let [_, gh, gw] =
                StageShapeSpec::new(self.config.c0, self.config.height, self.config.width, 5)
                    .global;
            agg.f.bilinear_resize(gh, gw)?
        };
        let out = at(Stage::D(6), self.decoders[5].forward(ctx, &deepest))?;
        keep(Stage::D(6), &out.d);
        keep(Stage::P(5), &out.p);
        let mut d = out.d;
        let mut p = out.p;
        logits[5] = Some(p.clone());

        for level in (1..=5).rev() {
            let q_stage = Stage::Q(level as u8);
            let q = at(
                q_stage,
                self.gams[level - 1].forward(ctx, &encoded[level - 1], &globals[level - 1], &p),
            )?
            .q;
            keep(q_stage, &q);
            let input = d.add(&q)?;
            let out = at(
                Stage::D(level as u8),
                self.decoders[level - 1].forward(ctx, &input),
            )?;
            keep(Stage::D(level as u8), &out.d);
            keep(Stage::P(level as u8 - 1), &out.p);
            d = out.d;
            p = out.p;
            logits[level - 1] = Some(p.clone());
        }
        let logits = logits
            .into_iter()
            .map(|p| p.expect("every level produced"))
            .collect();
        Ok((logits, capture.then_some(acts)))
    }

    /// Forward pass with a fresh context over `store`.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        training: bool,
        track_grads: bool,
        capture: bool,
    ) -> Result<ForwardOutput<T>> {
        let mut ctx = Ctx::new(store, training, track_grads);
        let (logits, stages) = self.forward_ctx(&mut ctx, x, capture)?;
        let (leaves, updates) = ctx.into_parts();
        Ok(ForwardOutput {
            logits,
            stages,
            leaves,
            updates,
        })
    }

    /// Inference logits `P_0` with running statistics and no graph.
    pub fn logits<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.forward(store, x, false, false, false)?;
        Ok(out.logits.into_iter().next().expect("six logit maps"))
    }

    /// Binary mask `sigmoid(P_0) >= threshold`.
    pub fn predict<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        threshold: f64,
    ) -> Result<Tensor<T>> {
        threshold_logits(&self.logits(store, x)?, threshold)
    }
}

/// `sigmoid(logit) >= threshold` as a `{0, 1}` tensor of the same shape.
pub fn threshold_logits<T: Real>(logits: &Tensor<T>, threshold: f64) -> Result<Tensor<T>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let mask = logits
        .data()
        .iter()
        .map(|&v| {
            if sigmoid_scalar(v.as_f64()) >= threshold {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::from_vec(logits.shape(), mask)
}
