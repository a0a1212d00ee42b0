use std::collections::HashSet;

use hesunet::gradcheck::sample_values;
use hesunet::network::threshold_logits;
use hesunet::train::ablation::combinations;
use hesunet::{HesUnet, ModelConfig, Stage, Tensor};

fn desk_input(n: usize, seed: u64) -> Tensor<f32> {
    Tensor::from_f64(&[n, 1, 64, 64], &sample_values(n * 64 * 64, seed, 1.0)).unwrap()
}

fn all_stages() -> Vec<Stage> {
    let mut v = vec![Stage::F];
    v.extend((1..=6).map(Stage::E));
    v.extend((1..=5).flat_map(|i| [Stage::G(i), Stage::Q(i)]));
    v.extend((1..=6).map(Stage::D));
    v.extend((0..=5).map(Stage::P));
    v
}

#[test]
fn desk_forward_matches_stage_formulas() {
    let cfg = ModelConfig::desk();
    let net = HesUnet::new(cfg.clone()).unwrap();
    let store = net.init_params::<f32>().unwrap();
    let out = net
        .forward(&store, &desk_input(2, 1), false, false, true)
        .unwrap();
    let stages = out.stages.unwrap();
    for s in all_stages() {
        let t = stages.get(s).unwrap_or_else(|| panic!("{s} not captured"));
        assert_eq!(&t.shape()[1..], &s.expected_shape(&cfg), "{s}");
        assert_eq!(t.shape()[0], 2);
    }
    assert_eq!(stages.get(Stage::E(1)).unwrap().shape(), &[2, 8, 32, 32]);
    assert_eq!(stages.get(Stage::F).unwrap().shape(), &[2, 256, 2, 2]);
    let sides: Vec<usize> = out.logits.iter().map(|p| p.shape()[3]).collect();
    assert_eq!(sides, [64, 32, 16, 8, 4, 2]);
}

#[test]
fn ablated_variants_keep_output_contract() {
    let full = ModelConfig::desk();
    let x = desk_input(1, 2);
    let full_names: HashSet<String> = HesUnet::new(full.clone())
        .unwrap()
        .manifest()
        .into_iter()
        .map(|p| p.0)
        .collect();
    for (mdb, mub, mab) in combinations() {
        let cfg = ModelConfig {
            use_mdb: mdb,
            use_mub: mub,
            use_mab: mab,
            ..full.clone()
        };
        let net = HesUnet::new(cfg).unwrap();
        let store = net.init_params::<f32>().unwrap();
        let out = net.forward(&store, &x, false, false, true).unwrap();
        for (i, p) in out.logits.iter().enumerate() {
            assert_eq!(&p.shape()[1..], &Stage::P(i as u8).expected_shape(&full));
            assert!(p.data().iter().all(|v| v.is_finite()));
        }
        let stages = out.stages.unwrap();
        for i in 1..=5 {
            assert_eq!(
                &stages.get(Stage::E(i)).unwrap().shape()[1..],
                &Stage::E(i).expected_shape(&full)
            );
        }
        let names: HashSet<String> = net.manifest().into_iter().map(|p| p.0).collect();
        assert!(names.iter().any(|n| n.starts_with("mub")) == mub);
        if !(mdb && mub && mab) {
            assert!(names.len() < full_names.len());
        }
    }
}

#[test]
fn manifest_names_are_unique_and_sized() {
    let net = HesUnet::new(ModelConfig::desk()).unwrap();
    let m = net.manifest();
    let names: HashSet<&str> = m.iter().map(|p| p.0.as_str()).collect();
    assert_eq!(names.len(), m.len());
    assert!(m
        .iter()
        .all(|(_, s)| !s.is_empty() && s.iter().all(|&d| d > 0)));
    let store = net.init_params::<f32>().unwrap();
    let total: usize = m.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    assert_eq!(store.trainable_count(), total);
}

#[test]
fn predict_is_thresholded_sigmoid() {
    let net = HesUnet::new(ModelConfig::desk()).unwrap();
    let store = net.init_params::<f32>().unwrap();
    let x = desk_input(1, 3);
    let logits = net.logits(&store, &x).unwrap();
    let mask = net.predict(&store, &x, 0.5).unwrap();
    assert_eq!(mask.shape(), &[1, 1, 64, 64]);
    for (l, m) in logits.data().iter().zip(mask.data()) {
        assert_eq!(*m, if *l >= 0.0 { 1.0 } else { 0.0 });
    }
    let t = Tensor::<f64>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    assert_eq!(
        threshold_logits(&t, sig(1.0)).unwrap().data(),
        &[0.0, 0.0, 1.0]
    );
    assert!(threshold_logits(&t, 0.0).is_err());
    assert!(threshold_logits(&t, 1.0).is_err());
}

#[test]
fn wrong_input_size_is_shape_error() {
    let net = HesUnet::new(ModelConfig::desk()).unwrap();
    let store = net.init_params::<f32>().unwrap();
    let x = Tensor::<f32>::zeros(&[1, 1, 32, 32]).unwrap();
    assert!(matches!(
        net.logits(&store, &x),
        Err(hesunet::Error::Shape { .. })
    ));
}
