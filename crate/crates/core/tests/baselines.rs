use rand::Rng;

use danl::baselines::{fedavg_warmstart, newton_reference};
use danl::data::{shard_dataset, synth_logistic};
use danl::linalg::norm;
use danl::loss::{global_grad, global_value, LogisticObjective, LossConfig};
use danl::pruning::round_rng;

fn instance(seed: u64) -> Vec<LogisticObjective> {
    let (ds, _) = synth_logistic(30, 2000, seed).unwrap();
    let loss = LossConfig::new(1e-4).unwrap();
    shard_dataset(&ds, 10, seed).unwrap().into_iter().map(|s| LogisticObjective::new(s, loss)).collect()
}

#[test]
fn reference_is_stationary_and_optimal() {
    for seed in 0..3 {
        let objs = instance(seed);
        let r = newton_reference(&objs, 20).unwrap();
        assert!(norm(&global_grad(&objs, &r.w_star).unwrap()) <= 1e-10);
        assert_eq!(r.losses.len(), 21);
        assert!(r.losses[1..].windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(r.halvings, 0);

        let mut rng = round_rng(seed, 99);
        for _ in 0..100 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let probe: Vec<f64> = r.w_star.iter().map(|w| w + scale * rng.random_range(-1.0..1.0)).collect();
            assert!(r.f_star <= global_value(&objs, &probe).unwrap());
        }
    }
}

#[test]
fn fedavg_is_deterministic_and_improves_on_zero() {
    let objs = instance(4);
    let a = fedavg_warmstart(&objs, 10, 0.1).unwrap();
    assert_eq!(a, fedavg_warmstart(&objs, 10, 0.1).unwrap());
    let zero = vec![0.0; 30];
    assert!(global_value(&objs, &a).unwrap() < global_value(&objs, &zero).unwrap());
}
