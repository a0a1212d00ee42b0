use hesunet::blocks::{Cbam, Ctx, Gam, Ghpa, Mdb, ParamSpec, ParamStore};
use hesunet::gradcheck::sample_values;
use hesunet::Tensor;

fn t64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, sample_values(n, seed, 1.0)).unwrap()
}

fn trainable(specs: &[ParamSpec]) -> usize {
    specs
        .iter()
        .filter(|s| s.trainable)
        .map(ParamSpec::numel)
        .sum()
}

#[test]
fn ghpa_parameter_count_is_linear_in_channels() {
    for (cin, cout, g) in [(32, 64, 8), (64, 128, 8), (16, 16, 4)] {
        let block = Ghpa::new("g", cin, cout, g).unwrap();
        let n = trainable(&block.specs());
        let q = cin / 4;
        let exact = q * (g * g + 2 * g) + 4 * 9 * q + 2 * cin + cin * cout + cout;
        assert_eq!(n, exact);
        assert!(n < cin * cout + cin * (g * g + 2 * g) + 9 * cin + 3 * cin + cout + 1);
    }
}

#[test]
fn cbam_with_zero_weights_scales_by_quarter() {
    let block = Cbam::new("cbam", 8).unwrap();
    let mut store = ParamStore::<f64>::init(&block.specs(), 1).unwrap();
    for spec in block.specs() {
        store.set(&spec.name, vec![0.0; spec.numel()]).unwrap();
    }
    let x = t64(&[2, 8, 6, 6], 2);
    let mut ctx = Ctx::eval(&store);
    let y = block.forward(&mut ctx, &x).unwrap();
    for (a, b) in x.data().iter().zip(y.data()) {
        assert!((0.25 * a - b).abs() < 1e-12);
    }
}

#[test]
fn mdb_subband_stack_is_lossless() {
    for seed in 0..5 {
        let x = t64(&[2, 3, 8, 8], seed);
        let stack = Mdb::subbands(&x).unwrap();
        assert_eq!(stack.shape(), &[2, 12, 4, 4]);
        let back = Mdb::reconstruct(&stack).unwrap();
        let err = x
            .data()
            .iter()
            .zip(back.data())
            .fold(0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn gam_groups_are_independent() {
    let gam = Gam::new(1, 8, [1, 2, 3, 4]).unwrap();
    let store = ParamStore::<f64>::init(&gam.specs(), 3).unwrap();
    let e = t64(&[1, 8, 8, 8], 4);
    let g = t64(&[1, 16, 4, 4], 5);
    let p = t64(&[1, 1, 8, 8], 6);
    let run = |e: &Tensor<f64>| {
        gam.forward(&mut Ctx::eval(&store), e, &g, &p)
            .unwrap()
            .groups
    };
    let base = run(&e);
    for j in 0..4 {
        let mut v = e.to_vec();
        for c in 2 * j..2 * j + 2 {
            for i in 0..64 {
                v[c * 64 + i] += 0.5;
            }
        }
        let moved = run(&Tensor::from_vec(e.shape(), v).unwrap());
        for k in 0..4 {
            let changed = base[k].data() != moved[k].data();
            assert_eq!(changed, k == j, "perturbing quarter {j} touched group {k}");
        }
    }
}
