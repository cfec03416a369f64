//! Acceptance checks, one PASS/FAIL line each. Exits non-zero on any failure.

mod common;

use std::panic::{AssertUnwindSafe, catch_unwind};
use std::process::Command;
use std::time::{Duration, Instant};

use loopdwell::certify::{
    RingUniform, certify_acyclic_rescaled, certify_commuting, certify_ring_uniform, certify_simple_loop_dwell,
    certify_switch_count, classical_bounds, nu_loop, rescale_eigenvectors, switch_count_inputs,
};
use loopdwell::digraph::{Digraph, LoopCatalog};
use loopdwell::signal::{SignalClassSpec, SwitchingSignal};
use loopdwell::simulate::{envelope, envelope_check, random_unit_vector, simulate, validate_certificate};
use loopdwell::spectral::{SpectralTolerances, SubsystemEnsemble, eigendecompose};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {took:?}, budget {budget:?}"))
}

fn six_vertex_ensemble() -> SubsystemEnsemble {
    let rows: [[f64; 4]; 6] = [
        [-1.5, 0.0, 0.0, -1.5],
        [-1.0, 0.0, 1.0, -1.0],
        [-11.0, 3.0, -18.0, 4.0],
        [3.0, -45.0, 1.0, -11.0],
        [3.0, -46.0, 1.0, -11.0],
        [-2.1, 1.0, 0.0, -2.1],
    ];
    let tol = SpectralTolerances::default();
    let spectra = rows
        .iter()
        .map(|r| eigendecompose(&DMatrix::from_row_slice(2, 2, r), &tol).unwrap())
        .collect();
    SubsystemEnsemble::from_spectra(spectra).unwrap()
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

fn table_one() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_loopdwell"))
        .args(["decompose", &common::fixture("four_vertex.json"), "--quiet"])
        .output()
        .map_err(|e| e.to_string())?;
    within(Duration::from_secs(1), start)?;
    ensure(out.status.code() == Some(0), || format!("exit {:?}", out.status.code()))?;
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let d = &v["decomposition"];
    let loops = v["loops"].as_array().ok_or("no loop catalog")?;
    let cycle_of = |index: &Value| -> Vec<u64> {
        let l = loops.iter().find(|l| l["index"] == *index).expect("listed loop");
        l["vertices"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap())
            .collect()
    };
    let got: Vec<(Vec<u64>, Vec<u64>)> = d["instances"]
        .as_array()
        .ok_or("no instances")?
        .iter()
        .map(|i| {
            let edges = i["edges"]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| e.as_u64().unwrap())
                .collect();
            (cycle_of(&i["loop_index"]), edges)
        })
        .collect();
    // 1->3->1, then 1->4->3->2->1, then 1->4->3->1
    let expected = vec![
        (vec![1, 3], vec![2, 3]),
        (vec![1, 4, 3, 2], vec![1, 4, 5, 6]),
        (vec![1, 4, 3], vec![8, 9, 10]),
    ];
    ensure(got == expected, || format!("instances {got:?}"))?;
    ensure(d["residual_edges"] == serde_json::json!([7, 11, 12]), || {
        format!("residual {}", d["residual_edges"])
    })?;
    Ok(format!("3 instances, residual [7, 11, 12] in {:?}", start.elapsed()))
}

fn nu_two() -> Outcome {
    let ens = six_vertex_ensemble();
    let nu = nu_loop(&ens, &[2, 3]).map_err(|e| e.to_string())?;
    ensure((nu - 2.73448).abs() <= 5e-4, || format!("nu = {nu}"))?;
    Ok(format!("nu = {nu:.6}"))
}

fn cycle_ratio() -> Outcome {
    let ens = six_vertex_ensemble();
    let g = Digraph::from_edges(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 2), (2, 4), (4, 5), (5, 2)]).unwrap();
    let catalog = LoopCatalog::new(g);
    let b = classical_bounds(&ens, &catalog, &[]).map_err(|e| e.to_string())?;
    let index = catalog.index_of(&[2, 3]).ok_or("loop 3->4->3 missing")?;
    let ratio = b.loops[index].cycle_ratio.ok_or("ratio unavailable")?;
    ensure((ratio - 1.36724).abs() <= 5e-4, || format!("ratio = {ratio}"))?;
    Ok(format!("ratio = {ratio:.6}"))
}

fn ring_arithmetic() -> Outcome {
    let c = RingUniform {
        ln_rho: 3.38306,
        lambda_sum: 2.1,
        mu_sum: 0.9,
    };
    let cert = certify_ring_uniform(c, 2.0, 0.1).map_err(|e| e.to_string())?;
    let text = cert.inequalities();
    ensure(text == ["3.38306 - 2.1τ + 0.9η < 0"], || {
        format!("inequality {text:?}")
    })?;
    ensure(cert.is_certified(), || "not certified".into())?;
    let margin = cert.checks[0].margin;
    ensure((margin - 0.72694).abs() <= 1e-5, || format!("margin {margin}"))?;
    Ok(format!("{}, margin {margin:.6}", text[0]))
}

fn enumeration_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..500 {
        let k = rng.random_range(1..=4);
        let p = rng.random_range(0.1..0.9);
        let edges = common::random_edges(&mut rng, k, p);
        let g = Digraph::from_edges(k, edges.iter().copied()).unwrap();
        let got: std::collections::BTreeSet<Vec<usize>> = g
            .enumerate_simple_loops()
            .iter()
            .map(|l| l.vertices().to_vec())
            .collect();
        ensure(got == common::brute_force_loops(k, &edges), || {
            format!("trial {trial}: {edges:?}")
        })?;
    }
    for trial in 0..200 {
        let k = rng.random_range(1..=5);
        let p = rng.random_range(0.1..1.0);
        let edges = common::random_edges(&mut rng, k, p);
        let g = Digraph::from_edges(k, edges.iter().copied()).unwrap();
        let bound = common::trace_bound(k, &edges);
        ensure(g.enumerate_simple_loops().len() as u128 <= bound, || {
            format!("bound trial {trial}")
        })?;
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!("500 oracle graphs, 200 bound graphs in {:?}", start.elapsed()))
}

fn envelope_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::INFINITY;
    let mut worst_identity: f64 = 0.0;
    for trial in 0..100 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(1..=4);
        let g = common::ring_backbone(&mut rng, k, 0.3);
        let ens = common::random_ensemble(&mut rng, &vec![true; k], n);
        let catalog = LoopCatalog::new(g);
        let len = rng.random_range(2..=60);
        let sig = common::random_signal(&mut rng, catalog.graph(), len, (0.05, 2.0));
        let x0 = random_unit_vector(&mut rng, n);
        let check = envelope_check(&ens, &catalog, &sig, &x0).map_err(|e| e.to_string())?;
        ensure(check.holds, || {
            format!("trial {trial}: violation at {:?}", check.first_violation)
        })?;
        worst = worst.min(check.worst_log_margin);
        let s = envelope(&ens, &catalog, &sig).map_err(|e| e.to_string())?;
        for m in 0..len {
            let gap = (s.log_a[m] - s.residual_cost[m] - s.loop_terms[m]).abs() / s.log_a[m].abs().max(1.0);
            worst_identity = worst_identity.max(gap);
        }
    }
    ensure(worst_identity <= 1e-10, || format!("identity gap {worst_identity:e}"))?;
    Ok(format!(
        "worst log margin {worst:.3e}, identity gap {worst_identity:.1e}"
    ))
}

fn loop_dwell_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_slope = f64::NEG_INFINITY;
    for trial in 0..50u64 {
        let k = rng.random_range(2..=5);
        // scalar subsystems share the basis [1], so every loop cost would vanish
        let n = rng.random_range(2..=3);
        let g = common::ring_backbone(&mut rng, k, 0.3);
        let ens = common::random_ensemble(&mut rng, &vec![true; k], n);
        let catalog = LoopCatalog::new(g);
        let mut taus = Vec::new();
        for l in catalog.loops() {
            let nu = nu_loop(&ens, l.vertices()).map_err(|e| e.to_string())?;
            ensure(nu > 0.0, || format!("trial {trial}: nu = {nu}"))?;
            taus.push(1.05 * nu);
        }
        let cert = certify_simple_loop_dwell(&ens, &catalog, &taus).map_err(|e| e.to_string())?;
        ensure(cert.is_certified(), || format!("trial {trial}: not certified"))?;
        let spec = SignalClassSpec::SimpleLoopDwell { taus };
        let report =
            validate_certificate(&ens, &catalog, &cert, &spec, None, 4, 200, trial).map_err(|e| e.to_string())?;
        ensure(report.max_slope < 0.0, || {
            format!("trial {trial}: slope {}", report.max_slope)
        })?;
        max_slope = max_slope.max(report.max_slope);
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("50 instances x 4 signals, largest slope {max_slope:.4}"))
}

fn acyclic_rescaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut instances = 0;
    let mut worst_ratio: f64 = 0.0;
    while instances < 50 {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(1..=3);
        let mask: Vec<bool> = (0..k).map(|v| v == 0 || (v > 1 && rng.random_bool(0.4))).collect();
        let ens = common::random_ensemble(&mut rng, &mask, n);
        let g = common::acyclic_unstable_graph(&mut rng, &mask, 0.4);
        // the criterion needs a switch in each direction between the classes
        let crosses = |from: bool| g.edges().any(|(a, b)| mask[a] == from && mask[b] != from);
        if !crosses(true) || !crosses(false) {
            continue;
        }
        instances += 1;
        for zeta in [0.5, 0.9, 0.99] {
            let res = rescale_eigenvectors(&ens, &g, zeta).map_err(|e| e.to_string())?;
            ensure(res.rho_prime <= zeta * (1.0 + 1e-12), || {
                format!("instance {instances}: rho' {} > {zeta}", res.rho_prime)
            })?;
            worst_ratio = worst_ratio.max(res.rho_prime / zeta);
            let (cert, _) = certify_acyclic_rescaled(&ens, &g, 1.0, 0.1, zeta).map_err(|e| e.to_string())?;
            for name in ["tau threshold", "eta threshold"] {
                let value = cert.values.iter().find(|v| v.name == name).and_then(|v| v.value);
                ensure(value.is_some_and(|x| x.is_finite() && x > 0.0), || {
                    format!("instance {instances}, zeta {zeta}: {name} = {value:?}")
                })?;
            }
        }
    }
    let quoted = 232.32f64.ln() / 0.1;
    ensure((quoted - 54.481).abs() <= 0.01, || format!("ln(232.32)/0.1 = {quoted}"))?;
    Ok(format!("max rho'/zeta {worst_ratio:.6}, ln(232.32)/0.1 = {quoted:.4}"))
}

fn commuting_axes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tol = SpectralTolerances::default();
    let catalog = LoopCatalog::new(Digraph::ring(2).unwrap());
    let mut certified = 0;
    for trial in 0..100 {
        let n = rng.random_range(1..=3);
        let alpha: Vec<f64> = (0..n).map(|_| -rng.random_range(0.1..3.0)).collect();
        let mut beta: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.1..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        beta[0] = beta[0].abs();
        let ens = SubsystemEnsemble::new(&[diag(&alpha), diag(&beta)], &tol).map_err(|e| e.to_string())?;
        let (tau, eta) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let cert = certify_commuting(&ens, &catalog, tau, eta, &tol).map_err(|e| e.to_string())?;
        let decision = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| a * tau + b * eta)
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(cert.is_certified() == (decision < 0.0), || {
            format!("trial {trial}: verdict vs {decision}")
        })?;
        let reported = cert.checks.iter().map(|c| c.lhs).fold(f64::NEG_INFINITY, f64::max);
        ensure((reported - decision).abs() <= 1e-9, || {
            format!("trial {trial}: reported {reported}")
        })?;

        // boundary members of the class: dwell exactly tau, flee exactly eta
        let periods = 5;
        let modes: Vec<usize> = (0..2 * periods).map(|i| i % 2).collect();
        let durations: Vec<f64> = (0..2 * periods).map(|i| if i % 2 == 0 { tau } else { eta }).collect();
        let sig = SwitchingSignal::new(modes, durations).unwrap();
        let mut simulated = f64::NEG_INFINITY;
        for axis in 0..n {
            let mut x0 = vec![0.0; n];
            x0[axis] = 1.0;
            let traj = simulate(&ens, &sig, &x0, 0).map_err(|e| e.to_string())?;
            simulated = simulated.max(traj.final_log_norm() / periods as f64);
        }
        ensure((simulated - decision).abs() <= 1e-9, || {
            format!("trial {trial}: simulated {simulated} vs {decision}")
        })?;
        if cert.is_certified() {
            certified += 1;
        }
    }
    Ok(format!("100 instances, {certified} certified"))
}

fn switch_count() -> Outcome {
    let tol = SpectralTolerances::default();
    let mats = [diag(&[-2.0, -1.0]), diag(&[-3.0, -0.5]), diag(&[0.7, -1.0])];
    let ens = SubsystemEnsemble::new(&mats, &tol).map_err(|e| e.to_string())?;
    let g = Digraph::from_edges(3, [(0, 1), (1, 2), (2, 0), (1, 0)]).unwrap();
    let catalog = LoopCatalog::new(g);
    let inputs = switch_count_inputs(&ens, catalog.graph()).map_err(|e| e.to_string())?;
    ensure(inputs.ln_rho1 == 0.0 && inputs.ln_rho2 == 0.0, || format!("{inputs:?}"))?;
    let (lambda, mu) = (0.5, 0.7);
    ensure(inputs.lambda == lambda && inputs.mu == mu, || format!("{inputs:?}"))?;

    let (tau, eta) = (1.5, 0.4);
    let modes = vec![0, 1, 0, 1, 2, 0, 1, 2, 0, 1];
    let durations = vec![1.5, 2.0, 1.7, 1.5, 0.4, 3.0, 1.6, 0.1, 1.5, 2.2];
    let sig = SwitchingSignal::new(modes.clone(), durations).unwrap();
    let part = ens.partition();
    let report = certify_switch_count(inputs, &catalog, &part, tau, eta, &sig, 10).map_err(|e| e.to_string())?;

    let ratio = report.threshold_ratio.ok_or("no threshold ratio")?;
    ensure(ratio == mu * eta / (lambda * tau), || format!("ratio {ratio}"))?;
    let (mut ns, mut nu) = (0.0, 0.0);
    for (m, &mode) in modes.iter().enumerate() {
        if mode == 2 {
            nu += 1.0
        } else {
            ns += 1.0
        }
        let hand = -lambda * tau * ns + mu * eta * nu;
        let got = report.series[m];
        ensure((got - hand).abs() <= 1e-12, || {
            format!("E({}) = {got}, expected {hand}", m + 1)
        })?;
    }
    Ok(format!("ratio {ratio:.6}, E(10) = {:.6}", report.series[9]))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1", "four-vertex decomposition", table_one),
        ("AC2", "loop cost of 3->4->3", nu_two),
        ("AC3", "cycle ratio of 3->4->3", cycle_ratio),
        ("AC4", "ring certificate arithmetic", ring_arithmetic),
        ("AC5", "loop enumeration oracle", enumeration_oracle),
        ("AC6", "envelope and redistribution", envelope_property),
        ("AC7", "simple loop dwell soundness", loop_dwell_soundness),
        ("AC8", "acyclic rescaling", acyclic_rescaling),
        ("AC9", "commuting two-ring", commuting_axes),
        ("AC10", "switch-count series", switch_count),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
