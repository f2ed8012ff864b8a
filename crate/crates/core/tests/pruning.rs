//! Magnitude pruning against an independent rank-counting oracle, and the
//! sparsity arithmetic of repeated rounds.

use lottery::nn::{build_network, InitSpec, LayerClass, LayerParams, NetworkSpec, ParamSet};
use lottery::pruning::{prune, prune_global, sparsity, LayerMask, Mask, PruneConfig, PruneMode};
use lottery::Tensor;
use proptest::prelude::*;

/// `round(rate * s)` half away from zero, for the non-negative products
/// that occur here.
fn oracle_count(rate: f64, s: usize) -> usize {
    (rate * s as f64 + 0.5).floor() as usize
}

/// A survivor is pruned iff fewer than `k` survivors precede it in the
/// order (|w|, position). Positions are compared as `(layer, index)`.
fn oracle_pruned(
    candidates: &[(f64, (usize, usize))],
    k: usize,
) -> Vec<(usize, usize)> {
    candidates
        .iter()
        .filter(|(m, pos)| {
            let rank = candidates
                .iter()
                .filter(|(m2, pos2)| m2 < m || (m2 == m && pos2 < pos))
                .count();
            rank < k
        })
        .map(|&(_, pos)| pos)
        .collect()
}

fn with_weights(spec: &NetworkSpec, weights: &[Vec<f64>]) -> ParamSet<f64> {
    let base: ParamSet<f64> = build_network(spec, InitSpec::GaussianGlorot, 0).unwrap();
    let layers = base
        .layers()
        .iter()
        .zip(weights)
        .map(|(l, w)| LayerParams {
            weights: Tensor::new(l.weights.shape().to_vec(), w.clone()).unwrap(),
            bias: l.bias.clone(),
        })
        .collect();
    base.with_layers(layers).unwrap()
}

fn mask_from(spec: &NetworkSpec, bits: &[Vec<bool>]) -> Mask {
    let full = Mask::full(spec);
    Mask::new(
        full.layers()
            .iter()
            .zip(bits)
            .map(|(l, b)| LayerMask::new(l.name(), l.shape().to_vec(), b.clone()).unwrap())
            .collect(),
    )
}

fn survivors(m: &Mask, layer: usize) -> Vec<usize> {
    (0..m.layers()[layer].len()).filter(|&i| m.layers()[layer].bits()[i]).collect()
}

/// Weights drawn from a coarse grid so magnitude ties are common.
fn layer_strategy(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (
        prop::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.25), n),
        prop::collection::vec(prop::bool::weighted(0.8), n),
    )
}

fn small_net() -> NetworkSpec {
    // 5x4 = 20 and 4x3 = 12 weights, plus an output layer of 3x2 = 6.
    NetworkSpec::mlp(5, &[4, 3], 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn layerwise_matches_oracle(
        l0 in layer_strategy(20),
        l1 in layer_strategy(12),
        l2 in layer_strategy(6),
        rate in prop::sample::select(vec![0.0, 0.1, 0.2, 0.25, 0.5, 0.75, 0.9, 0.99]),
    ) {
        let spec = small_net();
        let params = with_weights(&spec, &[l0.0.clone(), l1.0.clone(), l2.0.clone()]);
        let mask = mask_from(&spec, &[l0.1.clone(), l1.1.clone(), l2.1.clone()]);
        let config = PruneConfig::layerwise(rate, 0.0, 1);
        let out = prune(&spec, &params, &mask, &config).unwrap();
        prop_assert!(out.mask.is_nested_in(&mask));
        for (l, layer) in [&l0, &l1, &l2].into_iter().enumerate() {
            let layer_rate = if l == 2 { rate / 2.0 } else { rate };
            let before = survivors(&mask, l);
            let candidates: Vec<(f64, (usize, usize))> =
                before.iter().map(|&i| (layer.0[i].abs(), (l, i))).collect();
            let requested = oracle_count(layer_rate, before.len());
            // Never empty a layer that had survivors.
            let k = requested.min(before.len().saturating_sub(1));
            let pruned = oracle_pruned(&candidates, k);
            let expected: Vec<usize> = before.iter().copied().filter(|i| !pruned.contains(&(l, *i))).collect();
            prop_assert_eq!(survivors(&out.mask, l), expected, "layer {}", l);
            prop_assert_eq!(out.warnings.iter().any(|w| w.layer == mask.layers()[l].name()), k < requested);
        }
    }

    #[test]
    fn global_matches_oracle(
        l0 in layer_strategy(20),
        l1 in layer_strategy(12),
        l2 in layer_strategy(6),
        rate in prop::sample::select(vec![0.0, 0.2, 0.5, 0.8, 0.95]),
    ) {
        let spec = small_net();
        let params = with_weights(&spec, &[l0.0.clone(), l1.0.clone(), l2.0.clone()]);
        let mask = mask_from(&spec, &[l0.1.clone(), l1.1.clone(), l2.1.clone()]);
        let out = prune_global(&params, &mask, rate, &[0, 1]).unwrap();
        let mut candidates = Vec::new();
        for (l, layer) in [&l0, &l1].into_iter().enumerate() {
            candidates.extend(survivors(&mask, l).into_iter().map(|i| (layer.0[i].abs(), (l, i))));
        }
        let k = oracle_count(rate, candidates.len());
        let pruned = oracle_pruned(&candidates, k);
        for (l, layer) in [&l0, &l1].into_iter().enumerate() {
            let before = survivors(&mask, l);
            let mut expected: Vec<usize> =
                before.iter().copied().filter(|i| !pruned.contains(&(l, *i))).collect();
            if expected.is_empty() && !before.is_empty() {
                // The guard restores the largest weight, last in the order.
                let largest = before
                    .iter()
                    .copied()
                    .max_by(|&a, &b| layer.0[a].abs().total_cmp(&layer.0[b].abs()).then(a.cmp(&b)))
                    .unwrap();
                expected.push(largest);
            }
            prop_assert_eq!(survivors(&out.mask, l), expected, "layer {}", l);
        }
        // Layers outside the scope are untouched.
        prop_assert_eq!(out.mask.layers()[2].bits(), mask.layers()[2].bits());
    }

    #[test]
    fn repeated_rounds_give_nested_masks(
        l0 in layer_strategy(20),
        l1 in layer_strategy(12),
        l2 in layer_strategy(6),
        rounds in 1usize..6,
    ) {
        let spec = small_net();
        let params = with_weights(&spec, &[l0.0, l1.0, l2.0]);
        let config = PruneConfig::layerwise(0.2, 0.0, rounds as u32);
        let mut mask = Mask::full(&spec);
        for _ in 0..rounds {
            let next = prune(&spec, &params, &mask, &config).unwrap().mask;
            prop_assert!(next.is_nested_in(&mask));
            prop_assert!(next.layers().iter().all(|l| l.ones() >= 1));
            mask = next;
        }
    }
}

/// Survivor counts per layer after each round, by integer arithmetic:
/// `round(s / 5)` and `round(s / 10)` half up.
fn lenet_oracle(rounds: usize) -> Vec<[usize; 3]> {
    let mut s = [235_200usize, 30_000, 1_000];
    let mut out = vec![s];
    for _ in 0..rounds {
        s = [s[0] - (2 * s[0] + 5) / 10, s[1] - (2 * s[1] + 5) / 10, s[2] - (s[2] + 5) / 10];
        out.push(s);
    }
    out
}

#[test]
fn lenet_sparsity_sequence_matches_iterated_rounding() {
    let spec = NetworkSpec::lenet_300_100();
    let params: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 3).unwrap();
    let config = PruneConfig::for_preset("lenet", 15).unwrap();
    let oracle = lenet_oracle(15);
    let mut mask = Mask::full(&spec);
    let mut percents = vec![100.0];
    for (round, expected) in oracle.iter().enumerate().skip(1) {
        mask = prune(&spec, &params, &mask, &config).unwrap().mask;
        let report = sparsity(&mask);
        let counts: Vec<usize> = report.layers.iter().map(|l| l.remaining).collect();
        assert_eq!(counts, expected.to_vec(), "round {round}");
        assert_eq!(report.remaining, expected.iter().sum::<usize>());
        assert_eq!(report.total, 266_200);
        percents.push(100.0 * report.fraction());
    }
    let label = |r: usize| format!("{:.1}", percents[r]);
    assert_eq!(label(1), "80.0");
    assert_eq!(label(2), "64.1");
    assert_eq!(label(3), "51.3");
    assert_eq!(label(4), "41.1");
    assert_eq!(label(7), "21.1");
    assert_eq!(label(9), "13.5");
    assert_eq!(label(15), "3.6");
    assert!(percents.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn conv_classes_use_their_own_rates() {
    let spec = NetworkSpec::vgg_like([1, 4, 4], &[4], &[8], 3);
    let params: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 4).unwrap();
    let config = PruneConfig::layerwise(0.2, 0.1, 1);
    let out = prune(&spec, &params, &Mask::full(&spec), &config).unwrap().mask;
    let classes: Vec<LayerClass> = spec.prunable_layers().iter().map(|l| l.class).collect();
    for ((layer, class), m) in spec.prunable_layers().iter().zip(classes).zip(out.layers()) {
        let n = layer.weight_count();
        let rate = match class {
            LayerClass::Conv => 0.1,
            LayerClass::Fc => 0.2,
            LayerClass::Output => 0.1,
        };
        assert_eq!(m.ones(), n - oracle_count(rate, n), "{}", layer.name);
    }
}

#[test]
fn global_mode_prunes_scope_jointly_and_rest_layerwise() {
    let spec = NetworkSpec::vgg_like([1, 4, 4], &[4], &[8], 3);
    let params: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 5).unwrap();
    let config = PruneConfig {
        mode: PruneMode::Global {
            scope: vec![LayerClass::Conv, LayerClass::Fc],
            rate: 0.3,
        },
        ..PruneConfig::layerwise(0.2, 0.1, 1)
    };
    let out = prune(&spec, &params, &Mask::full(&spec), &config).unwrap().mask;
    let layers = spec.prunable_layers();
    let scoped: usize = layers[..3].iter().map(|l| l.weight_count()).sum();
    let kept: usize = out.layers()[..3].iter().map(|l| l.ones()).sum();
    assert_eq!(kept, scoped - oracle_count(0.3, scoped));
    let n_out = layers[3].weight_count();
    assert_eq!(out.layers()[3].ones(), n_out - oracle_count(0.1, n_out));
}
