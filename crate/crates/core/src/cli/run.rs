use std::fmt::Display;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Command;
use super::config::ProblemConfig;
use super::report::{
    BoundsDto, CertificateDto, DecompositionDto, HypothesisDto, LoopDto, MembershipDto, Report, RescalingDto,
    SignalDto, SimulationDto, Status, SubsystemDto, SwitchCountDto, ValidationDto,
};
use crate::certify::{
    CertifyError, Criterion, StabilityCertificate, Verdict, certify_acyclic_rescaled, certify_bipartite,
    certify_commuting, certify_general_loopwise, certify_general_uniform, certify_loop_aggregate,
    certify_ring_loopwise, certify_ring_uniform, certify_simple_loop_dwell, certify_switch_count, classical_bounds,
    loop_bounds, ring_loopwise_coefficients, ring_uniform_coefficients, switch_count_inputs,
};
use crate::digraph::{LoopCatalog, SubgraphPartition, validate_hypotheses};
use crate::signal::{
    SignalClassSpec, SignalError, SwitchingSignal, check_admissible, class_membership, standard_decomposition,
    synthesize_signal,
};
use crate::simulate::{SimulateError, envelope, envelope_check, random_unit_vector, simulate, validate_certificate};
use crate::spectral::{SpectralError, SubsystemEnsemble, eigendecompose};

#[derive(Debug)]
struct Failure {
    status: Status,
    message: String,
}

type Step<T> = Result<T, Failure>;

fn input(message: impl Display) -> Failure {
    Failure {
        status: Status::InputError,
        message: message.to_string(),
    }
}

fn spectral_status(e: &SpectralError) -> Status {
    match e {
        SpectralError::DefectiveEndpoint { .. } | SpectralError::EigenvalueFailure => Status::NumericalFailure,
        SpectralError::Subsystem { source, .. } => spectral_status(source),
        _ => Status::InputError,
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        Self {
            status: spectral_status(&e),
            message: e.to_string(),
        }
    }
}

impl From<SignalError> for Failure {
    fn from(e: SignalError) -> Self {
        input(e)
    }
}

impl From<CertifyError> for Failure {
    fn from(e: CertifyError) -> Self {
        let status = match &e {
            CertifyError::Spectral(s) => spectral_status(s),
            // the signal exists but lies outside the class the bound covers
            CertifyError::ClassViolation(_) => Status::NotCertified,
            _ => Status::InputError,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl From<SimulateError> for Failure {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Spectral(s) => s.into(),
            other => input(other),
        }
    }
}

pub(super) struct Flags {
    pub seed: Option<u64>,
}

pub(super) fn run(command: &Command, cfg: &ProblemConfig, flags: &Flags) -> Report {
    let mut report = Report::new(command.name());
    let seed = flags.seed.unwrap_or(cfg.seed);
    let outcome = match command {
        Command::Loops { .. } => loops(cfg, &mut report),
        Command::Decompose { .. } => decompose(cfg, &mut report),
        Command::Bounds { .. } => bounds(cfg, &mut report),
        Command::Certify { criterion, .. } => certify(cfg, *criterion, &mut report),
        Command::Simulate { trace, samples, .. } => simulate_cmd(cfg, trace.as_deref(), *samples, seed, &mut report),
        Command::Validate {
            criterion,
            trials,
            horizon,
            ..
        } => validate(cfg, *criterion, *trials, *horizon, seed, &mut report),
        Command::Synth { length, .. } => synth(cfg, *length, seed, &mut report),
    };
    if let Err(f) = outcome {
        report.fail(f.status, f.message);
    }
    report
}

fn build_ensemble(cfg: &ProblemConfig) -> Step<SubsystemEnsemble> {
    let systems = cfg
        .systems
        .as_ref()
        .ok_or_else(|| input("systems: this command needs subsystem matrices"))?;
    let mut spectra = Vec::with_capacity(systems.len());
    for (i, a) in systems.iter().enumerate() {
        let s = eigendecompose(a, &cfg.tolerances).map_err(|e| Failure {
            status: spectral_status(&e),
            message: format!("systems[{i}]: {e}"),
        })?;
        spectra.push(s);
    }
    for o in &cfg.overrides {
        let s = spectra[o.vertex].clone();
        spectra[o.vertex] = s
            .with_override(o.eigenvectors.clone(), o.rate)
            .map_err(|e| input(format!("overrides: vertex {}: {e}", o.vertex + 1)))?;
    }
    let ens = SubsystemEnsemble::from_spectra(spectra)?;
    if let Some(p) = &cfg.partition {
        let derived = ens.partition();
        if p.mask() != derived.mask() {
            let stable: Vec<String> = derived.stable_vertices().iter().map(|v| (v + 1).to_string()).collect();
            return Err(input(format!(
                "partition.stable: does not match the eigenvalues, which make [{}] stable",
                stable.join(", ")
            )));
        }
    }
    Ok(ens)
}

fn describe_ensemble(ens: &SubsystemEnsemble, catalog: &LoopCatalog, report: &mut Report) {
    report.subsystems = ens
        .spectra()
        .iter()
        .enumerate()
        .map(|(i, s)| SubsystemDto::new(i, s))
        .collect();
    if let Ok(h) = validate_hypotheses(catalog.graph(), &ens.partition()) {
        report.hypotheses = HypothesisDto::from_report(&h);
    }
    for v in ens.defective_vertices() {
        if ens.spectrum(v).is_overridden() {
            continue;
        }
        report.warn(format!(
            "subsystem {} is not diagonalizable; costs of edges touching it are undefined",
            v + 1
        ));
    }
}

/// Partition for class checks: from the eigenvalues when matrices are
/// given, otherwise the configured one.
fn class_partition(cfg: &ProblemConfig, spec: &SignalClassSpec) -> Step<Option<SubgraphPartition>> {
    if !spec.needs_partition() {
        return Ok(None);
    }
    if cfg.systems.is_some() {
        return Ok(Some(build_ensemble(cfg)?.partition()));
    }
    cfg.partition
        .clone()
        .map(Some)
        .ok_or_else(|| input(format!("class {} needs systems or partition", spec.name())))
}

fn require_signal(cfg: &ProblemConfig, report: &mut Report) -> Step<SwitchingSignal> {
    let sig = cfg
        .signal
        .clone()
        .ok_or_else(|| input("signal: this command needs a switching signal"))?;
    let adm = check_admissible(&sig, &cfg.graph);
    report.signal = Some(SignalDto::new(&sig, &adm));
    if let Some(n) = adm.first_violation {
        return Err(input(format!(
            "signal: switch {} -> {} at position {} is not an edge",
            sig.modes()[n] + 1,
            sig.modes()[n + 1] + 1,
            n + 1
        )));
    }
    Ok(sig)
}

fn loops(cfg: &ProblemConfig, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    report.loops = LoopDto::catalog(&catalog);
    if cfg.systems.is_some() {
        let ens = build_ensemble(cfg)?;
        describe_ensemble(&ens, &catalog, report);
        report.loops = catalog
            .loops()
            .iter()
            .enumerate()
            .map(|(i, l)| LoopDto::with_bounds(i, &loop_bounds(&ens, l.vertices())))
            .collect();
    }
    Ok(())
}

fn decompose(cfg: &ProblemConfig, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    report.loops = LoopDto::catalog(&catalog);
    let sig = require_signal(cfg, report)?;
    let d = standard_decomposition(&sig, &catalog)?;
    report.decomposition = Some(DecompositionDto::new(&d, catalog.len()));
    if let Some(spec) = &cfg.class {
        let part = class_partition(cfg, spec)?;
        let m = class_membership(&sig, &catalog, spec, part.as_ref())?;
        report.membership = Some(MembershipDto::new(spec.name(), &m));
    }
    Ok(())
}

fn bounds(cfg: &ProblemConfig, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    let ens = build_ensemble(cfg)?;
    describe_ensemble(&ens, &catalog, report);
    // the bounds report words its own defect warnings
    report.warnings.clear();
    let user: Vec<Vec<usize>> = cfg.certify.loops.iter().map(|(v, _)| v.clone()).collect();
    let b = classical_bounds(&ens, &catalog, &user)?;
    report.loops = b
        .loops
        .iter()
        .enumerate()
        .map(|(i, l)| LoopDto::with_bounds(i, l))
        .collect();
    report.bounds = Some(BoundsDto::from(&b));
    for w in &b.warnings {
        report.warn(w.clone());
    }
    Ok(())
}

fn dwell_flee(cfg: &ProblemConfig, criterion: Criterion) -> Step<(f64, f64)> {
    match &cfg.class {
        Some(SignalClassSpec::DwellFlee { tau, eta }) => Ok((*tau, *eta)),
        _ => Err(input(format!(
            "class: criterion {criterion} takes tau and eta from a dwell-flee class"
        ))),
    }
}

fn loopwise(cfg: &ProblemConfig, criterion: Criterion) -> Step<(Vec<f64>, Vec<f64>)> {
    match &cfg.class {
        Some(SignalClassSpec::LoopwiseDwellFlee { taus, etas }) => Ok((taus.clone(), etas.clone())),
        _ => Err(input(format!(
            "class: criterion {criterion} takes taus and etas from a loopwise-dwell-flee class"
        ))),
    }
}

fn issue(
    cfg: &ProblemConfig,
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    criterion: Criterion,
    report: &mut Report,
) -> Step<StabilityCertificate> {
    let g = catalog.graph();
    let uniform = |tau: f64, eta: f64| vec![("tau".to_string(), tau), ("eta".to_string(), eta)];
    let listed = |taus: &[f64], etas: &[f64]| {
        let mut p: Vec<(String, f64)> = taus
            .iter()
            .enumerate()
            .map(|(i, &t)| (format!("tau{}", i + 1), t))
            .collect();
        p.extend(etas.iter().enumerate().map(|(i, &e)| (format!("eta{}", i + 1), e)));
        p
    };
    let (cert, params) = match criterion {
        Criterion::SimpleLoopDwell => {
            let taus = match &cfg.class {
                Some(SignalClassSpec::SimpleLoopDwell { taus }) => taus.clone(),
                Some(SignalClassSpec::Dwell { tau }) => vec![*tau; catalog.len()],
                _ => {
                    return Err(input(
                        "class: criterion simple-loop-dwell takes taus from a simple-loop-dwell or dwell class",
                    ));
                }
            };
            (certify_simple_loop_dwell(ens, catalog, &taus)?, listed(&taus, &[]))
        }
        Criterion::LoopAggregate => {
            if cfg.certify.loops.is_empty() {
                return Err(input("certify.loops: criterion loop-aggregate needs at least one loop"));
            }
            let params = cfg
                .certify
                .loops
                .iter()
                .enumerate()
                .map(|(i, (_, t))| (format!("time{}", i + 1), *t))
                .collect();
            (certify_loop_aggregate(ens, g, &cfg.certify.loops)?, params)
        }
        Criterion::RingUniform => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            let c = ring_uniform_coefficients(ens, g)?;
            (certify_ring_uniform(c, tau, eta)?, uniform(tau, eta))
        }
        Criterion::RingLoopwise => {
            let (tau, eta) = match &cfg.class {
                Some(SignalClassSpec::LoopwiseDwellFlee { taus, etas }) if taus.len() == 1 && etas.len() == 1 => {
                    (taus[0], etas[0])
                }
                Some(SignalClassSpec::DwellFlee { tau, eta }) => (*tau, *eta),
                _ => {
                    return Err(input(
                        "class: criterion ring-loopwise takes tau and eta from a one-loop loopwise-dwell-flee or dwell-flee class",
                    ));
                }
            };
            let c = ring_loopwise_coefficients(ens, g)?;
            (certify_ring_loopwise(c, tau, eta)?, listed(&[tau], &[eta]))
        }
        Criterion::Bipartite => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            (certify_bipartite(ens, g, tau, eta)?, uniform(tau, eta))
        }
        Criterion::GeneralUniform => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            (certify_general_uniform(ens, catalog, tau, eta)?, uniform(tau, eta))
        }
        Criterion::GeneralLoopwise => {
            let (taus, etas) = loopwise(cfg, criterion)?;
            (
                certify_general_loopwise(ens, catalog, &taus, &etas)?,
                listed(&taus, &etas),
            )
        }
        Criterion::SwitchCount => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            let sig = require_signal(cfg, report)?;
            let horizon = cfg.certify.horizon.unwrap_or(sig.len());
            let inputs = switch_count_inputs(ens, g)?;
            let r = certify_switch_count(inputs, catalog, &ens.partition(), tau, eta, &sig, horizon)?;
            report.switch_count = Some(SwitchCountDto::from(&r));
            let mut params = uniform(tau, eta);
            params.push(("horizon".to_string(), horizon as f64));
            (r.certificate, params)
        }
        Criterion::AcyclicRescaled => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            let (cert, rescaled) = certify_acyclic_rescaled(ens, g, tau, eta, cfg.certify.zeta)?;
            report.rescaling = Some(RescalingDto::from(&rescaled));
            let mut params = uniform(tau, eta);
            params.push(("zeta".to_string(), cfg.certify.zeta));
            (cert, params)
        }
        Criterion::Commuting => {
            let (tau, eta) = dwell_flee(cfg, criterion)?;
            (
                certify_commuting(ens, catalog, tau, eta, &cfg.tolerances)?,
                uniform(tau, eta),
            )
        }
    };
    report.certificate = Some(CertificateDto::new(&cert, params));
    for w in &cert.warnings {
        report.warn(w.clone());
    }
    Ok(cert)
}

fn certify(cfg: &ProblemConfig, criterion: Criterion, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    let ens = build_ensemble(cfg)?;
    describe_ensemble(&ens, &catalog, report);
    let cert = issue(cfg, &ens, &catalog, criterion, report)?;
    report.set_status(match cert.verdict {
        Verdict::Certified => Status::Certified,
        Verdict::NotCertified => Status::NotCertified,
    });
    Ok(())
}

fn simulate_cmd(cfg: &ProblemConfig, trace: Option<&Path>, samples: usize, seed: u64, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    let ens = build_ensemble(cfg)?;
    describe_ensemble(&ens, &catalog, report);
    let sig = require_signal(cfg, report)?;
    let x0 = match &cfg.x0 {
        Some(x) => x.clone(),
        None => random_unit_vector(&mut ChaCha8Rng::seed_from_u64(seed), ens.dim()),
    };
    let traj = simulate(&ens, &sig, &x0, samples)?;
    let env = match (
        envelope(&ens, &catalog, &sig),
        envelope_check(&ens, &catalog, &sig, &x0),
    ) {
        (Ok(series), Ok(check)) => Some((check, series.constant, series.rho)),
        (Err(e), _) | (_, Err(e)) => {
            report.warn(format!("envelope not evaluated: {e}"));
            None
        }
    };
    report.simulation = Some(SimulationDto::new(
        &x0,
        &traj,
        env.as_ref().map(|(c, constant, rho)| (c, *constant, *rho)),
    ));
    if let Some(path) = trace {
        write_trace(path, &traj, ens.dim()).map_err(|e| input(format!("trace {}: {e}", path.display())))?;
    }
    Ok(())
}

fn write_trace(path: &Path, traj: &crate::simulate::Trajectory, n: usize) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    let mut header = vec!["t".to_string(), "mode".to_string(), "norm".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![s.t.to_string(), (s.mode + 1).to_string(), s.norm.to_string()];
        row.extend(s.state.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn validate(
    cfg: &ProblemConfig,
    criterion: Criterion,
    trials: usize,
    horizon: usize,
    seed: u64,
    report: &mut Report,
) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    let ens = build_ensemble(cfg)?;
    describe_ensemble(&ens, &catalog, report);
    let cert = issue(cfg, &ens, &catalog, criterion, report)?;
    let spec = cfg
        .class
        .as_ref()
        .ok_or_else(|| input("class: validation samples signals from the configured class"))?;
    let part = ens.partition();
    let v = validate_certificate(&ens, &catalog, &cert, spec, Some(&part), trials, horizon, seed)?;
    report.validation = Some(ValidationDto::new(&v, horizon, seed));
    report.set_status(if v.certified && v.passed {
        Status::Certified
    } else {
        Status::NotCertified
    });
    Ok(())
}

fn synth(cfg: &ProblemConfig, length: usize, seed: u64, report: &mut Report) -> Step<()> {
    let catalog = LoopCatalog::new(cfg.graph.clone());
    report.loops = LoopDto::catalog(&catalog);
    let spec = cfg
        .class
        .as_ref()
        .ok_or_else(|| input("class: synth needs a signal class"))?;
    let part = class_partition(cfg, spec)?;
    let sig = synthesize_signal(&catalog, spec, length, seed, part.as_ref())?;
    report.signal = Some(SignalDto::new(&sig, &check_admissible(&sig, &cfg.graph)));
    let m = class_membership(&sig, &catalog, spec, part.as_ref())?;
    report.membership = Some(MembershipDto::new(spec.name(), &m));
    Ok(())
}
