//! Property tests for the invariants each module promises.

use std::collections::BTreeSet;

use proptest::prelude::*;
use weightscape::adversarial::fgsm;
use weightscape::hopfield::{iterative_train, HopfieldNet, IterTrainConfig};
use weightscape::landscape::{basin_depth_report, geodesic_grid};
use weightscape::mlp::{Activation, DenseLayer, Mlp};
use weightscape::patterns::{enumerate_space, flip_bits, hamming, space_index, BipolarPattern, GrayImage, PatternSet};
use weightscape::seed;
use weightscape::weightspace::{
    apply_transform, default_probes, kendall_tau, max_output_deviation, partition_space, EquioutputTransform,
    LookupClassifier, OracleLabel,
};

fn bipolar(n: std::ops::Range<usize>) -> impl Strategy<Value = BipolarPattern> {
    prop::collection::vec(prop::bool::ANY, n).prop_map(BipolarPattern::from_bools)
}

fn random_net(n: usize, count: usize, seed_: u64) -> (HopfieldNet, PatternSet) {
    let ps = PatternSet::random(n, count, &mut seed::rng(seed_)).unwrap();
    (HopfieldNet::hebbian(&ps).unwrap(), ps)
}

fn assert_net_invariants(net: &HopfieldNet) {
    let n = net.dim();
    for i in 0..n {
        assert_eq!(net.weight(i, i), 0.0);
        for j in 0..n {
            assert_eq!(net.weight(i, j), net.weight(j, i));
        }
    }
}

/// Quadratic-time Kendall tau-a.
fn kendall_naive(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                score += s as i64;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flipping_twice_restores_the_pattern(p in bipolar(1..80), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..20)) {
        let set: BTreeSet<usize> = picks.iter().map(|i| i.index(p.len())).collect();
        let once = flip_bits(&p, &set).unwrap();
        prop_assert_eq!(hamming(&p, &once).unwrap(), set.len());
        prop_assert_eq!(flip_bits(&once, &set).unwrap(), p);
    }

    #[test]
    fn hamming_is_a_metric(seed_ in any::<u64>(), n in 1usize..70) {
        let mut rng = seed::rng(seed_);
        let a = BipolarPattern::random(n, &mut rng);
        let b = BipolarPattern::random(n, &mut rng);
        let c = BipolarPattern::random(n, &mut rng);
        let d = |x: &BipolarPattern, y: &BipolarPattern| hamming(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn space_enumeration_is_a_bijection(n in 0usize..11) {
        let all: Vec<_> = enumerate_space(n).unwrap().collect();
        prop_assert_eq!(all.len(), 1 << n);
        let distinct: BTreeSet<Vec<i8>> = all.iter().map(|p| p.bits().to_vec()).collect();
        prop_assert_eq!(distinct.len(), 1 << n);
        for (k, p) in all.iter().enumerate() {
            prop_assert_eq!(space_index(p).unwrap(), k);
        }
    }

    #[test]
    fn recall_descends_strictly_on_every_flip(seed_ in any::<u64>(), n in 2usize..48, count in 1usize..8) {
        let (net, _) = random_net(n, count, seed_);
        let probe = BipolarPattern::random(n, &mut seed::rng(seed_ ^ 1));
        let r = net.recall(&probe, 10 * n, seed_).unwrap();
        prop_assert!(r.converged);
        prop_assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        // Replay the flips and recompute energies from scratch.
        let mut state = probe.clone();
        let mut energy = net.energy(&state).unwrap();
        for &i in &r.flips {
            let delta = 2.0 * f64::from(state.get(i)) * net.local_field(&state, i).unwrap();
            prop_assert!(delta < 0.0);
            state = flip_bits(&state, &BTreeSet::from([i])).unwrap();
            let next = net.energy(&state).unwrap();
            prop_assert!(next < energy);
            energy = next;
        }
        prop_assert_eq!(&state, &r.final_state);
        prop_assert_eq!(*r.energy_trace.last().unwrap(), net.energy(&state).unwrap());
        prop_assert!(net.is_stable(&state).unwrap() || (0..n).any(|i| net.local_field(&state, i).unwrap() == 0.0));
    }

    #[test]
    fn energy_and_recall_commute_with_global_flip(seed_ in any::<u64>(), n in 2usize..40) {
        let (net, _) = random_net(n, 3, seed_);
        let s = BipolarPattern::random(n, &mut seed::rng(seed_ ^ 2));
        prop_assert_eq!(net.energy(&s).unwrap(), net.energy(&s.negated()).unwrap());
        let a = net.recall(&s, 10 * n, 9).unwrap();
        let b = net.recall(&s.negated(), 10 * n, 9).unwrap();
        prop_assert_eq!(b.final_state, a.final_state.negated());
    }

    #[test]
    fn iterative_training_keeps_matrix_invariants_and_stability(seed_ in any::<u64>(), n in 8usize..40, count in 1usize..12) {
        let ps = PatternSet::random(n, count, &mut seed::rng(seed_)).unwrap();
        let cfg = IterTrainConfig { max_iters: 50, seed: seed_, ..IterTrainConfig::default() };
        let (net, log) = iterative_train(&ps, &cfg).unwrap();
        assert_net_invariants(&net);
        assert_net_invariants(&HopfieldNet::hebbian(&ps).unwrap());
        prop_assert!(log.final_stable() >= log.initial_stable);
        prop_assert_eq!(log.final_stable(), net.stable_count(&ps).unwrap());
    }

    #[test]
    fn stable_patterns_have_positive_basin_gaps(seed_ in any::<u64>(), n in 8usize..64, count in 1usize..6) {
        let (net, ps) = random_net(n, count, seed_);
        for b in basin_depth_report(&net, &ps, 0, seed_).unwrap() {
            if net.is_stable(&ps.patterns()[b.pattern]).unwrap() {
                prop_assert!(b.gap > 0.0);
            }
        }
    }

    #[test]
    fn grid_energies_match_a_reloaded_net(seed_ in any::<u64>(), n in 4usize..40, res in 2usize..5) {
        let (net, ps) = random_net(n, 2, seed_);
        let grid = geodesic_grid(&net, &ps.patterns()[0], &ps.patterns()[1], res, seed_).unwrap();
        let reloaded = HopfieldNet::from_text(&net.to_text()).unwrap();
        prop_assert_eq!(&reloaded, &net);
        let csv = grid.to_csv();
        let rows: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        prop_assert_eq!(rows.len(), res * res);
        prop_assert_eq!(grid.point(0, 0).energy, reloaded.energy(&ps.patterns()[0]).unwrap());
        for (p, e) in grid.points.iter().zip(&rows) {
            prop_assert_eq!(p.energy, *e);
        }
    }

    #[test]
    fn transforms_compose_and_preserve_outputs(seed_ in any::<u64>(), hidden in 1usize..7, hidden2 in 1usize..5) {
        let mut m = Mlp::init(&[3, hidden, hidden2, 2], seed_).unwrap();
        let mut rng = seed::rng(seed_ ^ 3);
        for l in m.layers_mut() {
            for b in l.bias_mut() {
                *b = rand::Rng::gen_range(&mut rng, -0.5..0.5);
            }
        }
        let probes = default_probes(3, 30, seed_);
        for (layer, width) in [(0, hidden), (1, hidden2)] {
            let t1 = EquioutputTransform::random(layer, width, &mut rng);
            let t2 = EquioutputTransform::random(layer, width, &mut rng);
            let once = apply_transform(&m, &t1).unwrap();
            prop_assert!(max_output_deviation(&m, &once, &probes).unwrap() <= 1e-10);
            let seq = apply_transform(&once, &t2).unwrap();
            let comp = apply_transform(&m, &t1.compose(&t2).unwrap()).unwrap();
            prop_assert!(max_output_deviation(&seq, &comp, &probes).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn kendall_tau_matches_the_quadratic_count(a in prop::collection::vec(-3i32..4, 2..60), seed_ in any::<u64>()) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let mut rng = seed::rng(seed_);
        let b: Vec<f64> = a.iter().map(|x| x + f64::from(rand::Rng::gen_range(&mut rng, -2i32..3))).collect();
        let (tau, _) = kendall_tau(&a, &b).unwrap();
        prop_assert!((tau - kendall_naive(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn partition_labels_every_pattern_once(n in 1usize..7, seed_ in any::<u64>(), radius in 0usize..3) {
        let mut rng = seed::rng(seed_);
        let size = 1usize << n;
        let oracle: Vec<OracleLabel> = (0..size)
            .map(|_| match rand::Rng::gen_range(&mut rng, 0..4) {
                0 => OracleLabel::Irrelevant,
                c => OracleLabel::Class(c - 1),
            })
            .collect();
        let model = LookupClassifier::new((0..size).map(|_| rand::Rng::gen_range(&mut rng, 0..3)).collect()).unwrap();
        let space: Vec<_> = enumerate_space(n).unwrap().collect();
        let train: Vec<_> = (0..size)
            .filter_map(|k| match oracle[k] {
                OracleLabel::Class(c) if rand::Rng::gen_bool(&mut rng, 0.3) => Some((space[k].clone(), c)),
                _ => None,
            })
            .collect();
        let r = partition_space(&model, &train, &oracle, radius, true).unwrap();
        prop_assert!(r.identity_holds());
        prop_assert_eq!(r.labels.as_ref().unwrap().len(), size);
        prop_assert_eq!(r.p_t + r.p_g + r.p_a + r.p_r, size);
    }

    #[test]
    fn fgsm_stays_inside_the_budget(seed_ in any::<u64>(), eps in 0.0f64..0.6) {
        let m = Mlp::init(&[12, 6, 3], seed_).unwrap();
        let mut rng = seed::rng(seed_);
        let pixels = (0..12).map(|_| rand::Rng::gen_range(&mut rng, 0.0..=1.0)).collect();
        let img = GrayImage::new(pixels, (seed_ % 3) as u8).unwrap();
        let adv = fgsm(&m, &img, eps).unwrap();
        for (a, x) in adv.pixels().iter().zip(img.pixels()) {
            prop_assert!((a - x).abs() <= eps);
            prop_assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn tanh_outputs_stay_in_the_open_interval(seed_ in any::<u64>(), x in prop::collection::vec(-50.0f64..50.0, 4)) {
        let hidden = Mlp::init(&[4, 5], seed_).unwrap().layers()[0].clone();
        let out = Mlp::init(&[5, 3], seed_ ^ 1).unwrap().layers()[0].clone();
        let out = DenseLayer::new(5, 3, out.weights().to_vec(), vec![0.1; 3], Activation::Tanh).unwrap();
        let hidden = DenseLayer::new(4, 5, hidden.weights().to_vec(), vec![0.0; 5], Activation::Tanh).unwrap();
        let m = Mlp::from_layers(vec![hidden, out], seed_).unwrap();
        for y in m.forward(&x).unwrap() {
            prop_assert!(y > -1.0 && y < 1.0);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic(seed_ in any::<u64>()) {
        use weightscape::mlp::{Sample, TrainConfig};
        let mut rng = seed::rng(seed_);
        let data: Vec<Sample> = (0..20)
            .map(|i| Sample::labeled((0..4).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect(), i % 2, 2))
            .collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 3, learning_rate: 0.1, seed: seed_ };
        let mut a = Mlp::init(&[4, 3, 2], seed_).unwrap();
        let mut b = a.clone();
        let ha = a.train(&data, &cfg, &mut ()).unwrap();
        let hb = b.train(&data, &cfg, &mut ()).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert_eq!(ha, hb);
    }
}
