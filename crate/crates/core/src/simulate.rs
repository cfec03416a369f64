//! Exact simulation at switch times and the eigenbasis envelope.
//!
//! States are propagated as a unit direction plus a log-norm so that long
//! signals neither overflow nor underflow.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::certify::{StabilityCertificate, least_squares_slope};
use crate::digraph::{LoopCatalog, SubgraphPartition};
use crate::signal::{Decomposer, SignalClassSpec, SignalError, SwitchingSignal, check_admissible, synthesize_with_rng};
use crate::spectral::{SpectralError, SubsystemEnsemble, envelope_constant, matrix_exponential, rho_graph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("initial state has dimension {got}, subsystems have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("signal uses mode {}, only {k} subsystems exist", .mode + 1)]
    UnknownMode { mode: usize, k: usize },
    #[error("signal is not admissible at switch {}", .step + 1)]
    Inadmissible { step: usize },
    #[error("need at least one trial")]
    NoTrials,
}

/// Relative slack allowed when comparing a norm against its envelope.
pub const ENVELOPE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub mode: usize,
    pub state: Vec<f64>,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `t_0 = 0, ..., t_N`.
    pub switch_times: Vec<f64>,
    /// `ln ||x(t_n)||`; `-inf` for the zero state.
    pub switch_log_norms: Vec<f64>,
    /// `x(t_n) / ||x(t_n)||`, or zero.
    pub switch_directions: Vec<Vec<f64>>,
    /// Evenly spaced samples inside each interval plus the end point.
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn state_at_switch(&self, n: usize) -> Vec<f64> {
        let scale = self.switch_log_norms[n].exp();
        self.switch_directions[n].iter().map(|x| x * scale).collect()
    }

    pub fn final_log_norm(&self) -> f64 {
        *self.switch_log_norms.last().expect("at least the initial state")
    }
}

fn check_signal(ens: &SubsystemEnsemble, sig: &SwitchingSignal) -> Result<(), SimulateError> {
    let k = ens.len();
    if let Some(&mode) = sig.modes().iter().find(|&&m| m >= k) {
        return Err(SimulateError::UnknownMode { mode, k });
    }
    Ok(())
}

// Splits v into (unit direction, ln norm).
fn normalize(v: DVector<f64>) -> (DVector<f64>, f64) {
    let norm = v.norm();
    if norm > 0.0 && norm.is_finite() {
        (v / norm, norm.ln())
    } else {
        (DVector::zeros(v.len()), f64::NEG_INFINITY)
    }
}

/// Propagates `x0` through the signal with one matrix exponential per
/// interval. `samples_per_interval = 0` records switch states only.
pub fn simulate(
    ens: &SubsystemEnsemble,
    sig: &SwitchingSignal,
    x0: &[f64],
    samples_per_interval: usize,
) -> Result<Trajectory, SimulateError> {
    check_signal(ens, sig)?;
    if x0.len() != ens.dim() {
        return Err(SimulateError::DimensionMismatch {
            expected: ens.dim(),
            got: x0.len(),
        });
    }
    let (mut dir, mut log_norm) = normalize(DVector::from_column_slice(x0));
    let times = sig.switch_times();
    let mut switch_log_norms = vec![log_norm];
    let mut switch_directions = vec![dir.as_slice().to_vec()];
    let mut samples = Vec::new();

    for (n, (&mode, &d)) in sig.modes().iter().zip(sig.durations()).enumerate() {
        let a: &DMatrix<f64> = ens.spectrum(mode).matrix();
        for j in 0..samples_per_interval {
            let h = d * j as f64 / samples_per_interval as f64;
            let local = matrix_exponential(a, h) * &dir;
            let (u, l) = normalize(local);
            let scale = (log_norm + l).exp();
            samples.push(Sample {
                t: times[n] + h,
                mode,
                state: u.iter().map(|x| x * scale).collect(),
                norm: scale * u.norm(),
            });
        }
        let (u, l) = normalize(matrix_exponential(a, d) * &dir);
        dir = u;
        log_norm = if l.is_finite() { log_norm + l } else { f64::NEG_INFINITY };
        switch_log_norms.push(log_norm);
        switch_directions.push(dir.as_slice().to_vec());
    }
    if samples_per_interval > 0 {
        let scale = log_norm.exp();
        samples.push(Sample {
            t: *times.last().expect("nonempty"),
            mode: *sig.modes().last().expect("nonempty"),
            state: dir.iter().map(|x| x * scale).collect(),
            norm: scale * dir.norm(),
        });
    }
    Ok(Trajectory {
        switch_times: times,
        switch_log_norms,
        switch_directions,
        samples,
    })
}

/// `ln a_m` for every prefix `σ^(m)` and its regrouping along the standard
/// decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSeries {
    /// `ln a_m`, `m = 1..=N`: the sum over edges `j < m - 1` of
    /// `ln||P_{σ_{j+1}}^{-1} P_{σ_j}|| + r_{σ_j} d_j` with `r = -λ` or `+μ`.
    pub log_a: Vec<f64>,
    /// `b_m`: the same edge terms summed over the residual path of `σ^(m)`.
    pub residual_cost: Vec<f64>,
    /// The same edge terms summed over the loop instances of `σ^(m)`.
    pub loop_terms: Vec<f64>,
    /// Per prefix, `Σ (cost sum - λ_{s_i} · instance time)` over its loop
    /// instances, with `λ_{s_i}` the slowest decay on the loop. Bounds
    /// `loop_terms` from above. `None` once an instance meets an unstable
    /// vertex.
    pub loop_bound_terms: Vec<Option<f64>>,
    /// Instances per catalog loop in the full signal.
    pub instance_counts: Vec<usize>,
    /// Bounds `||P_end|| ||P_start^{-1}||` over admissible walks.
    pub constant: f64,
    /// `max ||P_j^{-1}|| ||P_i||` over pairs joined by a path.
    pub rho: f64,
}

impl EnvelopeSeries {
    /// `ln ||x(t_{m-1})|| <= ln constant + ln a_m + ln ||x0||`.
    pub fn log_bound(&self, m: usize, log_x0: f64) -> f64 {
        self.constant.ln() + self.log_a[m - 1] + log_x0
    }
}

pub fn envelope(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    sig: &SwitchingSignal,
) -> Result<EnvelopeSeries, SimulateError> {
    check_signal(ens, sig)?;
    let g = catalog.graph();
    if let Some(step) = check_admissible(sig, g).first_violation {
        return Err(SimulateError::Inadmissible { step });
    }
    let modes = sig.modes();
    let d = sig.durations();
    let term = |j: usize| -> Result<f64, SimulateError> {
        let r = ens.spectrum(modes[j]).signed_rate();
        Ok(ens.transition_cost(modes[j], modes[j + 1])? + r * d[j])
    };

    let mut log_a = vec![0.0];
    let mut residual_cost = vec![0.0];
    let mut loop_terms = vec![0.0];
    let mut loop_bound_terms = vec![Some(0.0)];
    let mut counts = vec![0; catalog.len()];
    let mut dec = Decomposer::new(g.vertex_count(), modes[0]);
    let mut acc = 0.0;
    let mut loops_acc = 0.0;
    let mut bound_acc = Some(0.0);

    for j in 0..sig.edge_count() {
        acc += term(j)?;
        if let Some((vertices, edges)) = dec.push(j, modes[j + 1]) {
            let index = catalog
                .index_of(&vertices)
                .expect("closed repeat-free walk is a simple loop");
            counts[index] += 1;
            let mut exact = 0.0;
            let mut cost = 0.0;
            let mut time = 0.0;
            for &e in &edges {
                exact += term(e)?;
                cost += ens.transition_cost(modes[e], modes[e + 1])?;
                time += d[e];
            }
            loops_acc += exact;
            let lambda = vertices
                .iter()
                .map(|&v| ens.spectrum(v).decay_rate())
                .try_fold(f64::INFINITY, |m, l| l.map(|l| m.min(l)));
            bound_acc = match (bound_acc, lambda) {
                (Some(b), Some(l)) => Some(b + cost - l * time),
                _ => None,
            };
        }
        let mut b = 0.0;
        for &e in dec.residual_edges() {
            b += term(e)?;
        }
        log_a.push(acc);
        residual_cost.push(b);
        loop_terms.push(loops_acc);
        loop_bound_terms.push(bound_acc);
    }

    Ok(EnvelopeSeries {
        log_a,
        residual_cost,
        loop_terms,
        loop_bound_terms,
        instance_counts: counts,
        constant: envelope_constant(ens, g)?,
        rho: rho_graph(ens, g)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    pub t: f64,
    pub log_norm: f64,
    pub log_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub holds: bool,
    /// One point per switch time `t_0..t_N`.
    pub points: Vec<EnvelopePoint>,
    pub first_violation: Option<usize>,
    /// Smallest `log_bound + ln(1 + tol) - log_norm`.
    pub worst_log_margin: f64,
}

/// Compares `||x(t_n)||` with the envelope at every switch time and at
/// the end of the last interval.
pub fn envelope_check(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    sig: &SwitchingSignal,
    x0: &[f64],
) -> Result<EnvelopeCheck, SimulateError> {
    let series = envelope(ens, catalog, sig)?;
    let traj = simulate(ens, sig, x0, 0)?;
    let log_x0 = traj.switch_log_norms[0];
    let slack = ENVELOPE_TOLERANCE.ln_1p();
    let n = sig.len();

    let mut points = Vec::with_capacity(n + 1);
    for m in 1..=n {
        points.push(EnvelopePoint {
            t: traj.switch_times[m - 1],
            log_norm: traj.switch_log_norms[m - 1],
            log_bound: series.log_bound(m, log_x0),
        });
    }
    let last = sig.modes()[n - 1];
    let tail = ens.spectrum(last).signed_rate() * sig.durations()[n - 1];
    points.push(EnvelopePoint {
        t: traj.switch_times[n],
        log_norm: traj.switch_log_norms[n],
        log_bound: series.log_bound(n, log_x0) + tail,
    });

    let mut worst = f64::INFINITY;
    let mut first_violation = None;
    for (i, p) in points.iter().enumerate() {
        if p.log_norm == f64::NEG_INFINITY {
            continue;
        }
        let margin = p.log_bound + slack - p.log_norm;
        worst = worst.min(margin);
        // NaN margins count as violations
        if margin.partial_cmp(&0.0).is_none_or(|o| o.is_lt()) && first_violation.is_none() {
            first_violation = Some(i);
        }
    }
    Ok(EnvelopeCheck {
        holds: first_violation.is_none(),
        points,
        first_violation,
        worst_log_margin: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    /// Least-squares slope of `ln ||x(t_n)||` against `t_n` over the last
    /// half of the switch times.
    pub slope: f64,
    /// `ln(||x(t_N)|| / ||x0||)`.
    pub final_log_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub certified: bool,
    pub trials: Vec<TrialResult>,
    pub max_slope: f64,
    pub max_final_log_ratio: f64,
    pub passed: bool,
}

pub fn decay_slope(traj: &Trajectory) -> f64 {
    let n = traj.switch_times.len();
    let start = (n - 1) / 2;
    least_squares_slope(&traj.switch_times[start..], &traj.switch_log_norms[start..]).unwrap_or(f64::INFINITY)
}

/// Seeded random unit vector.
pub fn random_unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Simulates `trials` random class members of length `horizon` from random
/// unit initial states. A trial passes when the log-norm slope over the
/// last half is negative and the final norm is below the initial one.
/// Trial `i` draws from stream `i` of a generator seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn validate_certificate(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    cert: &StabilityCertificate,
    spec: &SignalClassSpec,
    part: Option<&SubgraphPartition>,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<ValidationReport, SimulateError> {
    if trials == 0 {
        return Err(SimulateError::NoTrials);
    }
    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let sig = synthesize_with_rng(catalog, spec, horizon, &mut rng, part)?;
        let x0 = random_unit_vector(&mut rng, ens.dim());
        let traj = simulate(ens, &sig, &x0, 0)?;
        let slope = decay_slope(&traj);
        let final_log_ratio = traj.final_log_norm() - traj.switch_log_norms[0];
        results.push(TrialResult {
            trial,
            slope,
            final_log_ratio,
            passed: slope < 0.0 && final_log_ratio < 0.0,
        });
    }
    let max_slope = results.iter().map(|r| r.slope).fold(f64::NEG_INFINITY, f64::max);
    let max_final_log_ratio = results
        .iter()
        .map(|r| r.final_log_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = results.iter().all(|r| r.passed);
    Ok(ValidationReport {
        certified: cert.is_certified(),
        trials: results,
        max_slope,
        max_final_log_ratio,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::Digraph;
    use crate::spectral::SpectralTolerances;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn ens(ms: &[DMatrix<f64>]) -> SubsystemEnsemble {
        SubsystemEnsemble::new(ms, &SpectralTolerances::default()).unwrap()
    }

    #[test]
    fn single_mode_decay() {
        let e = ens(&[m2(-1.0, 0.0, 0.0, -1.0)]);
        let sig = SwitchingSignal::new(vec![0], vec![1.0]).unwrap();
        let traj = simulate(&e, &sig, &[1.0, 0.0], 4).unwrap();
        let x = traj.state_at_switch(1);
        assert!((x[0] - (-1f64).exp()).abs() < 1e-15 && x[1] == 0.0);
        assert_eq!(traj.samples.len(), 5);
        assert_eq!(traj.samples[2].t, 0.5);
    }

    #[test]
    fn alternating_cancellation() {
        let e = ens(&[m2(-1.0, 0.0, 0.0, -1.0), m2(1.0, 0.0, 0.0, 1.0)]);
        let sig = SwitchingSignal::new((0..10).map(|i| i % 2).collect(), vec![1.0; 10]).unwrap();
        let traj = simulate(&e, &sig, &[0.6, 0.8], 0).unwrap();
        for m in (0..=10).step_by(2) {
            assert!(traj.switch_log_norms[m].abs() < 1e-14);
        }
    }

    #[test]
    fn long_signals_do_not_underflow() {
        let e = ens(&[m2(-5.0, 0.0, 0.0, -6.0)]);
        let ring = Digraph::from_edges(1, [(0, 0)]).unwrap();
        let cat = LoopCatalog::new(ring);
        let sig = SwitchingSignal::new(vec![0; 400], vec![1.0; 400]).unwrap();
        let traj = simulate(&e, &sig, &[1.0, 1.0], 0).unwrap();
        assert!((traj.final_log_norm() - (-2000.0)).abs() < 1e-9);
        assert!(envelope_check(&e, &cat, &sig, &[1.0, 1.0]).unwrap().holds);
    }

    #[test]
    fn diagonal_envelope_is_tight() {
        let e = ens(&[m2(-1.0, 0.0, 0.0, -1.0), m2(-2.0, 0.0, 0.0, -2.0)]);
        let cat = LoopCatalog::new(Digraph::ring(2).unwrap());
        let sig = SwitchingSignal::new(vec![0, 1, 0, 1, 0], vec![0.5, 1.0, 1.5, 0.2, 0.3]).unwrap();
        let series = envelope(&e, &cat, &sig).unwrap();
        assert_eq!(series.log_a[0], 0.0);
        let expected = -(0.5 + 2.0 * 1.0 + 1.5 + 2.0 * 0.2);
        assert!((series.log_a[4] - expected).abs() < 1e-15);
        let check = envelope_check(&e, &cat, &sig, &[0.3, -0.4]).unwrap();
        assert!(check.holds);
        for p in &check.points {
            assert!((p.log_bound - p.log_norm).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_state_satisfies_envelope() {
        let e = ens(&[m2(-11.0, 3.0, -18.0, 4.0), m2(3.0, -45.0, 1.0, -11.0)]);
        let cat = LoopCatalog::new(Digraph::ring(2).unwrap());
        let sig = SwitchingSignal::new(vec![0, 1, 0], vec![1.0; 3]).unwrap();
        let check = envelope_check(&e, &cat, &sig, &[0.0, 0.0]).unwrap();
        assert!(check.holds);
        assert!(check.points.iter().all(|p| p.log_norm == f64::NEG_INFINITY));
    }

    #[test]
    fn redistribution_on_table_one_signal() {
        let g = Digraph::from_edges(4, [(1, 0), (0, 2), (2, 0), (0, 3), (3, 2), (2, 1)]).unwrap();
        let cat = LoopCatalog::new(g);
        let e = ens(&[
            m2(-11.0, 3.0, -18.0, 4.0),
            m2(3.0, -45.0, 1.0, -11.0),
            m2(-1.0, 0.5, 0.0, -2.0),
            m2(-3.0, 0.0, 1.0, -1.5),
        ]);
        let modes = vec![1, 0, 2, 0, 3, 2, 1, 0, 3, 2, 0, 3, 2];
        let sig = SwitchingSignal::new(modes, (1..=13).map(|d| d as f64 * 0.1).collect()).unwrap();
        let series = envelope(&e, &cat, &sig).unwrap();
        for m in 0..13 {
            let regrouped = series.residual_cost[m] + series.loop_terms[m];
            assert!((series.log_a[m] - regrouped).abs() < 1e-10);
            let bound = series.loop_bound_terms[m].unwrap();
            assert!(series.loop_terms[m] <= bound + 1e-12);
        }
        assert_eq!(series.instance_counts, vec![1, 0, 1, 1]);
        assert!(envelope_check(&e, &cat, &sig, &[1.0, -2.0]).unwrap().holds);
    }

    #[test]
    fn validation_is_seeded() {
        let e = ens(&[m2(-1.0, 0.0, 0.0, -2.0), m2(1.0, 0.0, 0.0, -0.5)]);
        let cat = LoopCatalog::new(Digraph::ring(2).unwrap());
        let part = e.partition();
        let cert = crate::certify::certify_commuting(&e, &cat, 1.0, 0.5, &SpectralTolerances::default()).unwrap();
        assert!(cert.is_certified());
        let spec = SignalClassSpec::DwellFlee { tau: 1.0, eta: 0.5 };
        let a = validate_certificate(&e, &cat, &cert, &spec, Some(&part), 5, 60, 9).unwrap();
        let b = validate_certificate(&e, &cat, &cert, &spec, Some(&part), 5, 60, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.passed, "{a:?}");
    }
}
