#[path = "common/oracles.rs"]
mod oracles;

#[test]
fn losses_match_loop_oracles() {
    let worst = oracles::check_losses().unwrap();
    assert!(worst <= 1e-6);
}

#[test]
fn metrics_match_counting_oracle() {
    assert_eq!(oracles::check_metrics().unwrap(), oracles::CASES as usize);
}
