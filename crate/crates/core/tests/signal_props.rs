mod common;

use loopdwell::digraph::{Digraph, LoopCatalog, SubgraphPartition};
use loopdwell::signal::{
    SignalClassSpec, SwitchingSignal, check_admissible, class_membership, standard_decomposition,
    streaming_decomposition, switch_counters, synthesize_signal,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=5, 1usize..=60)
}

fn setup(seed: u64, k: usize, len: usize) -> (ChaCha8Rng, LoopCatalog, SwitchingSignal) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = common::ring_backbone(&mut rng, k, 0.35);
    let sig = common::random_signal(&mut rng, &g, len, (0.1, 2.0));
    (rng, LoopCatalog::new(g), sig)
}

fn random_mask(rng: &mut ChaCha8Rng, k: usize) -> SubgraphPartition {
    SubgraphPartition::from_mask((0..k).map(|_| rng.random_bool(0.5)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_partitions_the_edges((seed, k, len) in instance()) {
        let (_, catalog, sig) = setup(seed, k, len);
        let d = standard_decomposition(&sig, &catalog).unwrap();
        let mut seen = vec![0; sig.edge_count()];
        for inst in &d.instances {
            let l = &catalog.loops()[inst.loop_index];
            prop_assert_eq!(inst.vertices.len(), l.len());
            prop_assert_eq!(catalog.index_of(&inst.vertices), Some(inst.loop_index));
            prop_assert!(inst.edge_indices.windows(2).all(|w| w[0] < w[1]));
            for (j, &e) in inst.edge_indices.iter().enumerate() {
                seen[e] += 1;
                prop_assert_eq!(sig.modes()[e], inst.vertices[j]);
                let (_, to) = sig.edge(e);
                prop_assert_eq!(to, inst.vertices[(j + 1) % inst.vertices.len()]);
            }
            let time: f64 = inst.edge_indices.iter().map(|&e| sig.durations()[e]).sum();
            prop_assert!((time - inst.total_time).abs() < 1e-12);
        }
        for &e in &d.residual_edges {
            seen[e] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        // the residual is a path with distinct vertices ending at the last mode
        let r = &d.residual_vertices;
        prop_assert_eq!(r.len(), d.residual_edges.len() + 1);
        let mut sorted = r.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), r.len());
        prop_assert_eq!(*r.last().unwrap(), *sig.modes().last().unwrap());
        for (j, &e) in d.residual_edges.iter().enumerate() {
            prop_assert_eq!(sig.edge(e), (r[j], r[j + 1]));
        }
        let loop_vertices: usize = d.instances.iter().map(|i| i.vertices.len()).sum();
        prop_assert_eq!(loop_vertices + r.len(), sig.len());
    }

    #[test]
    fn streaming_matches_rescan((seed, k, len) in instance()) {
        let (_, catalog, sig) = setup(seed, k, len);
        prop_assert_eq!(
            streaming_decomposition(&sig, &catalog).unwrap(),
            standard_decomposition(&sig, &catalog).unwrap()
        );
    }

    #[test]
    fn prefixes_extend_monotonically((seed, k, len) in instance()) {
        let (_, catalog, sig) = setup(seed, k, len);
        let full = standard_decomposition(&sig, &catalog).unwrap();
        let mut previous = 0;
        for n in 1..=sig.len() {
            let d = standard_decomposition(&sig.prefix(n).unwrap(), &catalog).unwrap();
            prop_assert!(d.instances.len() >= previous);
            prop_assert!(d.instances.len() <= previous + 1);
            prop_assert_eq!(&d.instances[..], &full.instances[..d.instances.len()]);
            previous = d.instances.len();
        }
    }

    #[test]
    fn synthesized_signals_are_members((seed, k, len) in instance(), variant in 0usize..4) {
        let (mut rng, catalog, _) = setup(seed, k, len);
        let part = random_mask(&mut rng, k);
        let loops = catalog.len();
        let mut draw = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let spec = match variant {
            0 => SignalClassSpec::Dwell { tau: draw(0.1, 3.0) },
            1 => SignalClassSpec::SimpleLoopDwell { taus: (0..loops).map(|_| draw(0.1, 5.0)).collect() },
            2 => SignalClassSpec::DwellFlee { tau: draw(0.1, 3.0), eta: draw(0.05, 1.0) },
            _ => SignalClassSpec::LoopwiseDwellFlee {
                taus: (0..loops).map(|_| draw(0.1, 5.0)).collect(),
                etas: (0..loops).map(|_| draw(0.05, 1.0)).collect(),
            },
        };
        let sig = synthesize_signal(&catalog, &spec, len, seed, Some(&part)).unwrap();
        prop_assert_eq!(sig.len(), len);
        prop_assert!(check_admissible(&sig, catalog.graph()).admissible);
        let m = class_membership(&sig, &catalog, &spec, Some(&part)).unwrap();
        prop_assert!(m.member, "violations: {:?}", m.violations().collect::<Vec<_>>());
        let again = synthesize_signal(&catalog, &spec, len, seed, Some(&part)).unwrap();
        prop_assert_eq!(sig, again);
    }

    #[test]
    fn counters_add_up((seed, k, len) in instance()) {
        let (mut rng, _, sig) = setup(seed, k, len);
        let part = random_mask(&mut rng, k);
        for n in 0..=sig.len() {
            let (s, u) = switch_counters(&sig, &part, n).unwrap();
            prop_assert_eq!(s + u, n);
            let stable = sig.modes()[..n].iter().filter(|&&m| part.is_stable(m)).count();
            prop_assert_eq!(s, stable);
        }
        prop_assert!(switch_counters(&sig, &part, sig.len() + 1).is_err());
    }
}

#[test]
fn inadmissible_signals_are_rejected() {
    let catalog = LoopCatalog::new(Digraph::ring(3).unwrap());
    let sig = SwitchingSignal::new(vec![0, 1, 0], vec![1.0; 3]).unwrap();
    let adm = check_admissible(&sig, catalog.graph());
    assert!(!adm.admissible);
    assert_eq!(adm.first_violation, Some(1));
    assert!(standard_decomposition(&sig, &catalog).is_err());
}

#[test]
fn dwell_membership_reports_each_violation() {
    let catalog = LoopCatalog::new(Digraph::ring(2).unwrap());
    let sig = SwitchingSignal::new(vec![0, 1, 0, 1], vec![1.0, 0.2, 3.0, 0.5]).unwrap();
    let m = class_membership(&sig, &catalog, &SignalClassSpec::Dwell { tau: 0.6 }, None).unwrap();
    assert!(!m.member);
    assert_eq!(m.violations().count(), 2);
    assert!((m.min_slack().unwrap() + 0.4).abs() < 1e-12);
}
