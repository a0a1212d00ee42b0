//! Catalogue of finite-difference cases: every tensor operator, every
//! block, and the assembled network probed at one scalar per block.

use std::collections::BTreeMap;

use super::{check, sample_values, GradCheck, GradReport};
use crate::blocks::{
    Cbam, Conv, Ctx, DecoderBlock, EncoderBlock, Gam, Ghpa, Mab, Mdb, Mub, Norm, NormKind,
    ParamSpec, ParamStore,
};
use crate::error::Result;
use crate::loss::{bce_loss, composite_loss, dice_loss, GroundTruthPyramid};
use crate::network::{HesUnet, ModelConfig};
use crate::tensor::{Conv2dArgs, RunningStats, Tensor};

type Scalar = Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + Send + Sync>;

pub struct GradCase {
    pub name: String,
    pub inputs: Vec<(Vec<usize>, Vec<f64>)>,
    pub f: Scalar,
    pub cfg: GradCheck,
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub name: String,
    pub reports: Vec<GradReport>,
    pub passed: bool,
    pub max_rel_err: f64,
}

impl GradCase {
    pub fn run(&self) -> Result<CaseOutcome> {
        let reports = check(&self.inputs, &self.f, self.cfg)?;
        Ok(CaseOutcome {
            name: self.name.clone(),
            passed: reports.iter().all(|r| r.passed),
            max_rel_err: reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max),
            reports,
        })
    }
}

fn input(shape: &[usize], seed: u64) -> (Vec<usize>, Vec<f64>) {
    let n = shape.iter().product();
    (shape.to_vec(), sample_values(n, seed, 1.0))
}

/// Contract `t` with fixed pseudo-random weights into a scalar.
pub fn project(t: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let r = Tensor::from_vec(t.shape(), sample_values(t.numel(), seed ^ 0x9e37, 1.0))?;
    t.mul(&r)?.sum()
}

fn case<F>(name: &str, inputs: Vec<(Vec<usize>, Vec<f64>)>, f: F) -> GradCase
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + Send + Sync + 'static,
{
    GradCase {
        name: name.to_string(),
        inputs,
        f: Box::new(f),
        cfg: GradCheck::default(),
    }
}

fn unary<F>(name: &str, shape: &[usize], seed: u64, f: F) -> GradCase
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>> + Send + Sync + 'static,
{
    case(name, vec![input(shape, seed)], move |t| {
        project(&f(&t[0])?, seed)
    })
}

/// Values of magnitude at least 0.05 so ReLU kinks sit outside the FD step.
fn away_from_zero(shape: &[usize], seed: u64) -> (Vec<usize>, Vec<f64>) {
    let (s, v) = input(shape, seed);
    (
        s,
        v.into_iter()
            .map(|x| {
                if x.abs() < 0.05 {
                    x.signum() * 0.05 + x
                } else {
                    x
                }
            })
            .collect(),
    )
}

/// One case per tensor operator, on inputs of at most 4×8×8 elements.
pub fn operator_cases() -> Vec<GradCase> {
    let sq = [1, 2, 6, 6];
    let mut v = vec![
        case(
            "add_broadcast",
            vec![input(&[2, 3, 4, 4], 1), input(&[1, 3, 1, 1], 2)],
            |t| project(&t[0].add(&t[1])?, 3),
        ),
        case(
            "sub_broadcast",
            vec![input(&[2, 3, 4, 4], 4), input(&[3, 1, 1], 5)],
            |t| project(&t[0].sub(&t[1])?, 6),
        ),
        case(
            "mul_broadcast",
            vec![input(&[2, 3, 4, 4], 7), input(&[1, 3, 4, 4], 8)],
            |t| project(&t[0].mul(&t[1])?, 9),
        ),
        unary("mul_scalar", &[3, 4, 4], 10, |x| x.mul_scalar(-2.5)),
        unary("add_scalar", &[3, 4, 4], 11, |x| x.add_scalar(0.75)),
        case("relu", vec![away_from_zero(&[2, 3, 4, 4], 12)], |t| {
            project(&t[0].relu()?, 12)
        }),
        unary("sigmoid", &[2, 3, 4, 4], 13, |x| x.sigmoid()),
        unary("square", &[2, 3, 4, 4], 14, |x| x.square()),
        case(
            "conv2d_same_bias",
            vec![input(&sq, 20), input(&[3, 2, 3, 3], 21), input(&[3], 22)],
            |t| {
                project(
                    &t[0].conv2d(&t[1], Some(&t[2]), Conv2dArgs::padding(1))?,
                    23,
                )
            },
        ),
        case(
            "conv2d_stride2",
            vec![input(&[1, 2, 8, 8], 24), input(&[2, 2, 3, 3], 25)],
            |t| {
                let args = Conv2dArgs {
                    stride: 2,
                    padding: 1,
                    ..Default::default()
                };
                project(&t[0].conv2d(&t[1], None, args)?, 26)
            },
        ),
        case(
            "conv2d_dilated",
            vec![input(&[1, 2, 8, 8], 27), input(&[2, 2, 3, 3], 28)],
            |t| project(&t[0].conv2d(&t[1], None, Conv2dArgs::dilated(2))?, 29),
        ),
        case(
            "conv2d_groups",
            vec![input(&[1, 4, 6, 6], 30), input(&[4, 2, 3, 3], 31)],
            |t| {
                let args = Conv2dArgs {
                    padding: 1,
                    groups: 2,
                    ..Default::default()
                };
                project(&t[0].conv2d(&t[1], None, args)?, 32)
            },
        ),
        case(
            "depthwise_conv2d",
            vec![input(&[2, 2, 6, 6], 33), input(&[2, 1, 3, 3], 34)],
            |t| project(&t[0].depthwise_conv2d(&t[1], 1)?, 35),
        ),
        unary("haar_dwt2", &[1, 2, 8, 8], 40, |x| x.haar_dwt2_stacked()),
        unary("haar_idwt2", &[1, 8, 4, 4], 41, |x| x.haar_idwt2_stacked()),
        case(
            "batch_norm_train",
            vec![input(&[2, 3, 4, 4], 50), input(&[3], 51), input(&[3], 52)],
            |t| {
                let mut stats = RunningStats::new(3);
                project(&t[0].batch_norm(&t[1], &t[2], &mut stats, true)?, 53)
            },
        ),
        case(
            "batch_norm_eval",
            vec![input(&[2, 3, 4, 4], 54), input(&[3], 55), input(&[3], 56)],
            |t| {
                let mut stats = RunningStats {
                    mean: vec![0.1, -0.2, 0.3],
                    var: vec![0.5, 1.5, 2.0],
                };
                project(&t[0].batch_norm(&t[1], &t[2], &mut stats, false)?, 57)
            },
        ),
        case(
            "group_norm",
            vec![input(&[2, 4, 4, 4], 58), input(&[4], 59), input(&[4], 60)],
            |t| project(&t[0].group_norm(2, &t[1], &t[2])?, 61),
        ),
        case(
            "layer_norm",
            vec![input(&[2, 3, 4, 4], 62), input(&[3], 63), input(&[3], 64)],
            |t| project(&t[0].layer_norm(&t[1], &t[2])?, 65),
        ),
        case("sum", vec![input(&[2, 3, 4], 70)], |t| t[0].square()?.sum()),
        case("mean", vec![input(&[2, 3, 4], 71)], |t| {
            t[0].square()?.mean()
        }),
        unary("sum_axis", &[2, 3, 4], 72, |x| x.sum_axis(1, false)),
        unary("mean_axis", &[2, 3, 4], 73, |x| x.mean_axis(2, true)),
        unary("max_axis", &[2, 3, 4], 74, |x| x.max_axis(1, true)),
        unary("bilinear_up", &[1, 2, 4, 4], 80, |x| {
            x.bilinear_resize(8, 8)
        }),
        unary("bilinear_down", &[1, 2, 8, 8], 81, |x| {
            x.bilinear_resize(3, 5)
        }),
        unary("adaptive_avg_pool", &[1, 2, 8, 8], 82, |x| {
            x.adaptive_avg_pool(3, 3)
        }),
        unary("max_pool2x2", &[1, 2, 8, 8], 83, |x| x.max_pool2x2()),
        unary("reshape", &[2, 3, 4], 90, |x| x.reshape(&[4, 6])),
        unary("narrow", &[2, 6, 4], 91, |x| x.narrow(1, 2, 3)),
        unary("chunk", &[2, 6, 4], 92, |x| {
            let parts = x.chunk(3, 1)?;
            parts[0].mul(&parts[2])?.add(&parts[1])
        }),
        case(
            "concat",
            vec![input(&[2, 2, 4], 93), input(&[2, 3, 4], 94)],
            |t| project(&Tensor::concat(&[t[0].clone(), t[1].clone()], 1)?, 95),
        ),
        case(
            "cat_channels",
            vec![input(&[1, 2, 4, 4], 96), input(&[1, 1, 4, 4], 97)],
            |t| project(&Tensor::cat_channels(&[t[0].clone(), t[1].clone()])?, 98),
        ),
        unary("pixel_shuffle", &[1, 8, 4, 4], 100, |x| x.pixel_shuffle(2)),
        unary("pixel_unshuffle", &[1, 2, 8, 8], 101, |x| {
            x.pixel_unshuffle(2)
        }),
    ];
    let mask: Vec<f64> = (0..64)
        .map(|i| ((i * 7 + 3) % 5 < 2) as u8 as f64)
        .collect();
    let m2 = mask.clone();
    v.push(case(
        "bce_loss",
        vec![input(&[1, 1, 8, 8], 110)],
        move |t| {
            let y = Tensor::from_vec(&[1, 1, 8, 8], mask.clone())?;
            bce_loss(&y, &t[0].sigmoid()?)
        },
    ));
    v.push(case(
        "dice_loss",
        vec![input(&[2, 1, 4, 8], 111)],
        move |t| {
            let y = Tensor::from_vec(&[2, 1, 4, 8], m2.clone())?;
            dice_loss(&y, &t[0].sigmoid()?)
        },
    ));
    v
}

/// FD over the block input and every trainable parameter.
///
/// `forward` sees a training-mode context whose parameters are the case
/// inputs; at most `probes` entries of each input are perturbed.
fn block_case<F>(
    name: &str,
    specs: Vec<ParamSpec>,
    inputs: Vec<(Vec<usize>, Vec<f64>)>,
    probes: usize,
    forward: F,
) -> Result<GradCase>
where
    F: Fn(&mut Ctx<'_, f64>, &[Tensor<f64>]) -> Result<Tensor<f64>> + Send + Sync + 'static,
{
    let store = ParamStore::<f64>::init(&specs, 7)?;
    let names: Vec<String> = store
        .entries()
        .iter()
        .filter(|e| e.trainable)
        .map(|e| e.name.clone())
        .collect();
    let n_data = inputs.len();
    let mut all = inputs;
    for (i, e) in store.entries().iter().filter(|e| e.trainable).enumerate() {
        // perturb initial values so constant inits (ones, zeros) are generic
        let jitter = sample_values(e.value.len(), 1000 + i as u64, 0.2);
        all.push((
            e.shape.clone(),
            e.value.iter().zip(jitter).map(|(v, j)| v + j).collect(),
        ));
    }
    let tag = name.len() as u64;
    let f = move |t: &[Tensor<f64>]| {
        let mut ctx = Ctx::new(&store, true, true);
        for (n, p) in names.iter().zip(&t[n_data..]) {
            ctx = ctx.with_override(n.clone(), p.clone());
        }
        project(&forward(&mut ctx, &t[..n_data])?, tag)
    };
    Ok(GradCase {
        name: name.to_string(),
        inputs: all,
        f: Box::new(f),
        cfg: GradCheck {
            max_probes: Some(probes),
            ..Default::default()
        },
    })
}

/// One case per building block at the smallest legal sizes.
pub fn block_cases() -> Result<Vec<GradCase>> {
    let c0 = 4;
    let (h, w) = (64, 64);
    let grid = ModelConfig::default().ghpa_grid;
    let p = 8;
    let mut v = Vec::new();

    let conv = Conv::same("conv", 2, 3, 3);
    v.push(block_case(
        "conv",
        conv.specs(),
        vec![input(&[2, 2, 6, 6], 1)],
        p,
        move |c, x| conv.forward(c, &x[0]),
    )?);
    for (label, kind) in [
        ("batch", NormKind::Batch),
        ("group", NormKind::Group(2)),
        ("layer", NormKind::Layer),
    ] {
        let norm = Norm::new("norm", 4, kind);
        v.push(block_case(
            &format!("norm_{label}"),
            norm.specs(),
            vec![input(&[2, 4, 4, 4], 2)],
            p,
            move |c, x| norm.forward(c, &x[0]),
        )?);
    }
    let ghpa = Ghpa::new("ghpa", 8, 4, grid)?;
    v.push(block_case(
        "ghpa",
        ghpa.specs(),
        vec![input(&[2, 8, 8, 8], 3)],
        p,
        move |c, x| ghpa.forward(c, &x[0]),
    )?);
    let cbam = Cbam::new("cbam", 8)?;
    v.push(block_case(
        "cbam",
        cbam.specs(),
        vec![input(&[2, 8, 8, 8], 4)],
        p,
        move |c, x| cbam.forward(c, &x[0]),
    )?);
    let mdb = Mdb::new("mdb", 4);
    v.push(block_case(
        "mdb",
        mdb.specs(),
        vec![input(&[2, 4, 8, 8], 5)],
        p,
        move |c, x| mdb.forward(c, &x[0]),
    )?);
    for (level, cin, use_mdb) in [(1, 1, true), (2, 4, true), (2, 4, false)] {
        let eb = EncoderBlock::new(level, cin, c0, grid, use_mdb)?;
        let name = format!("encoder{level}{}", if use_mdb { "" } else { "_maxpool" });
        v.push(block_case(
            &name,
            eb.specs(),
            vec![input(&[2, cin, 8, 8], 6)],
            p,
            move |c, x| eb.forward(c, &x[0]),
        )?);
    }
    let encoded: Vec<(Vec<usize>, Vec<f64>)> = (1..=5)
        .map(|l| input(&[1, c0 << (l - 1), h >> l, w >> l], 10 + l as u64))
        .collect();
    for aggregate in [true, false] {
        let mab = Mab::new(c0, h, w, grid, aggregate)?;
        let name = if aggregate { "mab" } else { "mab_single_path" };
        v.push(block_case(
            name,
            mab.specs(),
            encoded.clone(),
            p,
            move |c, x| Ok(mab.forward(c, x)?.f),
        )?);
    }
    let mub = Mub::new(c0, h, w, grid)?;
    v.push(block_case(
        "mub",
        mub.specs(),
        vec![input(&[1, c0 << 5, h >> 5, w >> 5], 20)],
        p,
        move |c, x| {
            let out = mub.forward(c, &x[0])?;
            let parts: Vec<Tensor<f64>> = out
                .globals
                .iter()
                .map(|g| g.reshape(&[g.numel()]))
                .collect::<Result<_>>()?;
            Tensor::concat(&parts, 0)
        },
    )?);
    let gam = Gam::new(1, c0, crate::blocks::gam::DEFAULT_DILATIONS)?;
    v.push(block_case(
        "gam",
        gam.specs(),
        vec![
            input(&[1, c0, 8, 8], 21),
            input(&[1, 2 * c0, 8, 8], 22),
            input(&[1, 1, 8, 8], 23),
        ],
        p,
        move |c, x| Ok(gam.forward(c, &x[0], &x[1], &x[2])?.q),
    )?);
    for level in [1, 3, 6] {
        let db = DecoderBlock::new(level, c0, grid)?;
        let cin = crate::blocks::shapes::decoder_input_channels(c0, level);
        v.push(block_case(
            &format!("decoder{level}"),
            db.specs(),
            vec![input(&[1, cin, 4, 4], 24)],
            p,
            move |c, x| {
                let out = db.forward(c, &x[0])?;
                let d = out.d.reshape(&[out.d.numel()])?;
                let pr = out.p.reshape(&[out.p.numel()])?;
                Tensor::concat(&[d, pr], 0)
            },
        )?);
    }
    Ok(v)
}

/// Composite loss of a small network, differentiated with respect to one
/// scalar parameter in each block.
pub fn network_case(config: &ModelConfig) -> Result<GradCase> {
    let model = HesUnet::new(config.clone())?;
    let store = model.init_params::<f64>()?;
    let mut chosen: BTreeMap<String, (String, Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for e in store.entries().iter().filter(|e| e.trainable) {
        let block = e.name.split('.').next().unwrap_or(&e.name).to_string();
        chosen
            .entry(block)
            .or_insert_with(|| (e.name.clone(), e.shape.clone(), e.value.to_vec()));
    }
    let names: Vec<String> = chosen.values().map(|(n, _, _)| n.clone()).collect();
    let mut inputs: Vec<(Vec<usize>, Vec<f64>)> =
        chosen.into_values().map(|(_, s, v)| (s, v)).collect();
    let (h, w) = (config.height, config.width);
    inputs.insert(
        0,
        (
            vec![2, config.in_channels, h, w],
            sample_values(2 * config.in_channels * h * w, 5, 0.5),
        ),
    );
    let mask: Vec<f64> = (0..2 * h * w)
        .map(|i| {
            let (y, x) = ((i / w) % h, i % w);
            let (dy, dx) = (y as f64 - h as f64 / 2.0, x as f64 - w as f64 / 2.0);
            (dy * dy + dx * dx < (h * w) as f64 / 16.0) as u8 as f64
        })
        .collect();
    let pyramid = GroundTruthPyramid::build(&Tensor::from_vec(&[2, 1, h, w], mask)?)?;
    let lambda = config.lambda;
    let f = move |t: &[Tensor<f64>]| {
        let mut ctx = Ctx::new(&store, true, true);
        for (n, p) in names.iter().zip(&t[1..]) {
            ctx = ctx.with_override(n.clone(), p.clone());
        }
        let (logits, _) = model.forward_ctx(&mut ctx, &t[0], false)?;
        composite_loss(&pyramid, &logits, &lambda)
    };
    Ok(GradCase {
        name: "network".into(),
        inputs,
        f: Box::new(f),
        // thousands of ReLU and max-pool units: a short step keeps every
        // unit on one side of its kink
        cfg: GradCheck {
            step: 1e-7,
            max_probes: Some(1),
            ..Default::default()
        },
    })
}

/// Smallest legal network: `c0 = 4`, 64×64.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        c0: 4,
        ..ModelConfig::desk()
    }
}
