//! Post-hoc analyses on a trained network and their counting identities.

use lottery::analysis::{connectivity, init_histogram, movement_from_zero, weight_movement, Direction, Histogram};
use lottery::data::{split, synthetic_blobs, DataSplits};
use lottery::experiment::{Strategy, TrainConfig, Trial};
use lottery::nn::{build_network, InitSpec, NetworkSpec, ParamSet};
use lottery::pruning::{random_mask, sparsity, Mask, PruneConfig};
use proptest::prelude::*;

#[test]
fn ticket_weights_move_more_and_away_from_zero() {
    let all = synthetic_blobs(4, 300, 16, 3.0, 1).unwrap();
    let train_all = all.subset(&(0..800).collect::<Vec<_>>()).unwrap();
    let test = all.subset(&(800..1200).collect::<Vec<_>>()).unwrap();
    let (train, validation) = split(&train_all, 160, 1).unwrap();
    let data = DataSplits {
        train,
        validation,
        test,
    };
    let spec = NetworkSpec::mlp(16, &[64, 32], 4);
    let train_cfg = TrainConfig {
        batch_size: 20,
        ..TrainConfig::adam(2e-3, 1_000)
    };
    let prune_cfg = PruneConfig::layerwise(0.2, 0.0, 5);
    let trial = Trial {
        spec: &spec,
        init: InitSpec::GaussianGlorot,
        train: &train_cfg,
        prune: &prune_cfg,
        data: &data,
        seed: 3,
        index: 0,
    };
    let rounds = trial.iterative::<f64>(Strategy::Reset, 5).unwrap();
    let theta0 = trial.theta0::<f64>().unwrap();
    let dense = rounds[0].trained.as_ref().unwrap();
    let ticket = &rounds[5].mask;

    let moved = weight_movement(&theta0, dense, ticket, 50).unwrap();
    assert_eq!(moved.in_count + moved.out_count, spec.weight_count());
    assert_eq!(moved.in_count, ticket.ones());
    let (inside, outside) = (moved.in_ticket.unwrap(), moved.out_of_ticket.unwrap());
    assert!(inside.mean > outside.mean, "in {} vs out {}", inside.mean, outside.mean);

    let away = movement_from_zero(&theta0, dense, ticket, 50).unwrap();
    let (inside, outside) = (away.in_ticket.unwrap(), away.out_of_ticket.unwrap());
    assert!(inside.mass_above(0.0) > outside.mass_above(0.0));
    for h in [&inside, &outside] {
        assert!((h.area() - 1.0).abs() <= 1e-9);
    }

    for l in 0..3 {
        let h = init_histogram(&theta0, ticket, l, 50).unwrap();
        assert_eq!(h.count, ticket.layers()[l].ones());
        assert!((h.area() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn scaled_and_negated_networks() {
    let spec = NetworkSpec::mlp(20, &[10], 3);
    let theta0: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 4).unwrap();
    let mask = random_mask(&Mask::full(&spec), &[0.5, 0.5], 5).unwrap();
    let map = |p: &ParamSet<f64>, f: &dyn Fn(f64) -> f64| {
        let layers = p
            .layers()
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.weights.data_mut().iter_mut().for_each(|w| *w = f(*w));
                l
            })
            .collect();
        p.with_layers(layers).unwrap()
    };
    let doubled = map(&theta0, &|w| 2.0 * w);
    let away = movement_from_zero(&theta0, &doubled, &mask, 20).unwrap();
    let mut expected: Vec<f64> = Vec::new();
    for (l, keep) in theta0.layers().iter().zip(mask.layers()) {
        expected.extend(l.weights.data().iter().zip(keep.bits()).filter(|(_, &k)| k).map(|(w, _)| w.abs()));
    }
    let mean = expected.iter().sum::<f64>() / expected.len() as f64;
    assert!((away.in_ticket.unwrap().mean - mean).abs() < 1e-15);

    let trained = map(&theta0, &|w| w * 1.5 - 0.01);
    let a = movement_from_zero(&theta0, &trained, &mask, 20).unwrap();
    let b = movement_from_zero(&map(&theta0, &|w| -w), &map(&trained, &|w| -w), &mask, 20).unwrap();
    assert_eq!(a, b);
    let still = weight_movement(&theta0, &theta0, &mask, 20).unwrap();
    assert_eq!(still.in_ticket.unwrap().mean, 0.0);
}

proptest! {
    #[test]
    fn incoming_mean_is_the_layer_survival_rate(keep in 0.01f64..1.0, seed in any::<u64>()) {
        let spec = NetworkSpec::vgg_like([2, 4, 4], &[3], &[7], 5);
        let mask = random_mask(&Mask::full(&spec), &[keep; 4], seed).unwrap();
        let report = sparsity(&mask);
        for (l, layer) in report.layers.iter().enumerate() {
            let p = connectivity(&mask, l, Direction::Incoming).unwrap();
            prop_assert_eq!(p.mean(), layer.remaining as f64 / layer.total as f64);
            prop_assert_eq!(p.kept.iter().sum::<usize>(), layer.remaining);
            let q = connectivity(&mask, l, Direction::Outgoing).unwrap();
            prop_assert_eq!(q.kept.iter().sum::<usize>(), layer.remaining);
            prop_assert!(p.fractions.iter().chain(&q.fractions).all(|f| (0.0..=1.0).contains(f)));
        }
    }

    #[test]
    fn histogram_area_is_one(values in prop::collection::vec(-1e3f64..1e3, 1..200), bins in 2usize..80) {
        let h = Histogram::new(&values, bins).unwrap();
        prop_assert!((h.area() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(h.count, values.len());
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
    }
}
