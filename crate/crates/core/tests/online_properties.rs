use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplex_core::online::{train_online, train_online_observed, OnlineOptions};
use simplex_core::srls::linear_objective;
use simplex_core::{CodeBook, LossKind};

fn noisy_problem() -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 300;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let x = DMatrix::from_fn(n, 5, |i, k| {
        let center = if k == labels[i] { 2.0 } else { 0.0 };
        center + rng.random_range(-1.5..1.5)
    });
    (x, labels)
}

#[test]
fn regularized_risk_drops_between_epoch_one_and_ten() {
    let (x, labels) = noisy_problem();
    let cb = CodeBook::new(4).unwrap();
    let lambda = 1e-2;
    for loss in LossKind::ALL {
        let (mut first, mut tenth) = (0.0, 0.0);
        for seed in 0..10 {
            let one = OnlineOptions { epochs: 1, seed, ..OnlineOptions::default() };
            let ten = OnlineOptions { epochs: 10, seed, ..OnlineOptions::default() };
            let m1 = train_online(&x, &labels, &cb, lambda, loss, &one).unwrap();
            let m10 = train_online(&x, &labels, &cb, lambda, loss, &ten).unwrap();
            first += linear_objective(&m1, &x, &labels, loss).unwrap();
            tenth += linear_objective(&m10, &x, &labels, loss).unwrap();
        }
        assert!(tenth < first, "{loss}: {tenth} vs {first}");
    }
}

#[test]
fn longer_runs_extend_shorter_ones() {
    let (x, labels) = noisy_problem();
    let cb = CodeBook::new(4).unwrap();
    let short = OnlineOptions { epochs: 2, seed: 9, ..OnlineOptions::default() };
    let long = OnlineOptions { epochs: 3, ..short };
    let m2 = train_online(&x, &labels, &cb, 0.1, LossKind::ShSvm, &short).unwrap();
    let mut at_two = None;
    train_online_observed(&x, &labels, &cb, 0.1, LossKind::ShSvm, &long, |s| {
        if s.step == 2 * labels.len() {
            at_two = Some(s.weights.clone());
        }
    })
    .unwrap();
    assert_eq!(at_two.unwrap(), m2.weights);
}
