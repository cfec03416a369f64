//! Dwell-time bounds and stability certificates.
//!
//! Every certificate is a list of strict inequalities `lhs < rhs`. A
//! certificate is sufficient only: a failed check says nothing about
//! instability.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::digraph::{Digraph, GraphError, LoopCatalog, SubgraphPartition, validate_hypotheses};
use crate::signal::{ConstraintSite, SignalClassSpec, SignalError, SwitchingSignal, class_membership, switch_counters};
use crate::spectral::{
    Eigenbasis, SpectralError, SpectralTolerances, SubsystemEnsemble, check_pairwise_commuting, spectral_norm,
    switch_factor,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("graph has {graph} vertices but {systems} subsystems were given")]
    SizeMismatch { graph: usize, systems: usize },
    #[error("vertex {} is unstable; this bound needs stable sources", .vertex + 1)]
    UnstableSource { vertex: usize },
    #[error("loop {} is not a closed walk of the graph", .index + 1)]
    NotALoop { index: usize },
    #[error("graph is not a unidirectional ring")]
    NotARing,
    #[error("graph is not bipartite between stable and unstable vertices")]
    NotBipartite,
    #[error("subsystem matrices do not commute")]
    NotCommuting,
    #[error("commuting matrices share no computable eigenbasis")]
    NoCommonBasis,
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("parameter {name} is {value}, must be positive and finite")]
    InvalidParameter { name: String, value: f64 },
    #[error("{expected} per-loop parameters expected, got {got}")]
    LoopCountMismatch { expected: usize, got: usize },
    #[error("unstable subgraph has a loop through vertex {}", .vertex + 1)]
    CyclicUnstableSubgraph { vertex: usize },
    #[error("zeta must lie in (0, 1), got {0}")]
    InvalidZeta(f64),
    #[error("signal is not in the dwell/flee class: {0}")]
    ClassViolation(String),
    #[error("horizon {horizon} exceeds signal length {len}")]
    HorizonTooLong { horizon: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    SimpleLoopDwell,
    LoopAggregate,
    RingUniform,
    RingLoopwise,
    Bipartite,
    GeneralUniform,
    GeneralLoopwise,
    SwitchCount,
    AcyclicRescaled,
    Commuting,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Self::SimpleLoopDwell,
        Self::LoopAggregate,
        Self::RingUniform,
        Self::RingLoopwise,
        Self::Bipartite,
        Self::GeneralUniform,
        Self::GeneralLoopwise,
        Self::SwitchCount,
        Self::AcyclicRescaled,
        Self::Commuting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SimpleLoopDwell => "simple-loop-dwell",
            Self::LoopAggregate => "loop-aggregate",
            Self::RingUniform => "ring-uniform",
            Self::RingLoopwise => "ring-loopwise",
            Self::Bipartite => "bipartite",
            Self::GeneralUniform => "general-uniform",
            Self::GeneralLoopwise => "general-loopwise",
            Self::SwitchCount => "switch-count",
            Self::AcyclicRescaled => "acyclic-rescaled",
            Self::Commuting => "commuting",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// `lhs < rhs`, strict.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; positive exactly when the check holds.
    pub margin: f64,
    pub holds: bool,
}

impl InequalityCheck {
    pub fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            label: label.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            holds: lhs < rhs,
        }
    }
}

/// `constant + tau_coeff * τ + eta_coeff * η < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCondition {
    pub label: String,
    pub constant: f64,
    pub tau_coeff: f64,
    pub eta_coeff: f64,
}

impl LinearCondition {
    pub fn value(&self, tau: f64, eta: f64) -> f64 {
        self.constant + self.tau_coeff * tau + self.eta_coeff * eta
    }

    pub fn check(&self, tau: f64, eta: f64) -> InequalityCheck {
        InequalityCheck::new(self.label.clone(), self.value(tau, eta), 0.0)
    }

    /// E.g. `3.38306 - 2.1τ + 0.9η < 0`; zero coefficients are omitted.
    pub fn render(&self) -> String {
        let mut out = format_significant(self.constant, 6);
        for (coeff, symbol) in [(self.tau_coeff, "τ"), (self.eta_coeff, "η")] {
            if coeff == 0.0 {
                continue;
            }
            let sign = if coeff < 0.0 { '-' } else { '+' };
            out.push_str(&format!(" {sign} {}{symbol}", format_significant(coeff.abs(), 6)));
        }
        out.push_str(" < 0");
        out
    }
}

/// Rounds to `digits` significant digits and drops trailing zeros.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = digits as i64 - 1 - magnitude;
    if decimals <= 0 {
        let unit = 10f64.powi((-decimals) as i32);
        return format!("{}", (x / unit).round() * unit);
    }
    let s = format!("{:.*}", decimals as usize, x);
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" { "0".into() } else { s }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedValue {
    pub name: String,
    pub value: Option<f64>,
}

impl NamedValue {
    fn new(name: impl Into<String>, value: Option<f64>) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub criterion: Criterion,
    pub verdict: Verdict,
    pub checks: Vec<InequalityCheck>,
    /// Index into `checks` of the first failing inequality.
    pub first_violation: Option<usize>,
    /// Symbolic `τ`/`η` conditions behind the checks, when linear.
    pub conditions: Vec<LinearCondition>,
    /// Bound values and thresholds the checks were built from.
    pub values: Vec<NamedValue>,
    pub assumptions: Vec<Assumption>,
    pub warnings: Vec<String>,
}

impl StabilityCertificate {
    pub fn from_checks(criterion: Criterion, checks: Vec<InequalityCheck>) -> Self {
        let first_violation = checks.iter().position(|c| !c.holds);
        let mut warnings = Vec::new();
        if checks.is_empty() {
            warnings.push("no inequality to check; nothing is certified".into());
        }
        let verdict = if first_violation.is_none() && !checks.is_empty() {
            Verdict::Certified
        } else {
            Verdict::NotCertified
        };
        Self {
            criterion,
            verdict,
            checks,
            first_violation,
            conditions: Vec::new(),
            values: Vec::new(),
            assumptions: Vec::new(),
            warnings,
        }
    }

    fn from_conditions(criterion: Criterion, conditions: Vec<LinearCondition>, tau: f64, eta: f64) -> Self {
        let checks = conditions.iter().map(|c| c.check(tau, eta)).collect();
        let mut cert = Self::from_checks(criterion, checks);
        cert.conditions = conditions;
        cert
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    /// Inequalities in human-readable form.
    pub fn inequalities(&self) -> Vec<String> {
        if !self.conditions.is_empty() {
            return self.conditions.iter().map(LinearCondition::render).collect();
        }
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{}: {} < {}",
                    c.label,
                    format_significant(c.lhs, 6),
                    format_significant(c.rhs, 6)
                )
            })
            .collect()
    }

    fn with_values(mut self, values: Vec<NamedValue>) -> Self {
        self.values = values;
        self
    }

    fn with_assumptions(mut self, assumptions: Vec<Assumption>) -> Self {
        self.assumptions = assumptions;
        self
    }
}

/// Vertex list numbered from 1, for labels and warnings.
fn numbered(vs: &[usize]) -> String {
    format!("{:?}", vs.iter().map(|v| v + 1).collect::<Vec<_>>())
}

fn positive(name: &str, value: f64) -> Result<(), CertifyError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CertifyError::InvalidParameter {
            name: name.into(),
            value,
        })
    }
}

fn check_sizes(ens: &SubsystemEnsemble, g: &Digraph) -> Result<(), CertifyError> {
    if ens.len() != g.vertex_count() {
        return Err(CertifyError::SizeMismatch {
            graph: g.vertex_count(),
            systems: ens.len(),
        });
    }
    Ok(())
}

fn hypothesis_assumptions(g: &Digraph, part: &SubgraphPartition) -> Vec<Assumption> {
    let Ok(report) = validate_hypotheses(g, part) else {
        return Vec::new();
    };
    let entry = |name: &str, check: &crate::digraph::HypothesisCheck| Assumption {
        name: name.into(),
        holds: check.passed,
        detail: if !check.applicable {
            "not applicable".into()
        } else if check.witnesses.is_empty() {
            "ok".into()
        } else {
            format!("fails at vertices {}", numbered(&check.witnesses))
        },
    };
    vec![
        entry("graph has a loop", &report.has_loop),
        entry("every vertex has an outgoing edge", &report.nonzero_outdegree),
        entry(
            "every unstable vertex reaches a stable one",
            &report.unstable_reach_stable,
        ),
        entry(
            "every stable vertex reaches an unstable one",
            &report.stable_reach_unstable,
        ),
    ]
}

/// Edges of a closed walk given by its vertex sequence, closing edge last.
fn walk_edges(cycle: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = cycle.len();
    (0..n).map(move |i| (cycle[i], cycle[(i + 1) % n]))
}

/// `ν_C = (Σ ln ||P_s^{-1} P_r||) / λ_C` over the edges of the closed walk
/// `cycle`, with `λ_C` the smallest decay rate among its vertices.
pub fn nu_loop(ens: &SubsystemEnsemble, cycle: &[usize]) -> Result<f64, CertifyError> {
    let mut cost = 0.0;
    let mut lambda = f64::INFINITY;
    for (r, s) in walk_edges(cycle) {
        let spec = ens.spectrum(r);
        let decay = spec.decay_rate().ok_or(CertifyError::UnstableSource { vertex: r })?;
        lambda = lambda.min(decay);
        cost += ens.transition_cost(r, s)?;
    }
    Ok(cost / lambda)
}

/// Per-loop data shared by all bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopBounds {
    pub vertices: Vec<usize>,
    /// `ln ρ_i`, the sum of transition costs around the loop.
    pub cost_sum: Option<f64>,
    /// Sum of decay rates over stable vertices.
    pub lambda_sum: f64,
    /// Sum of growth rates over unstable vertices.
    pub mu_sum: f64,
    /// Smallest decay rate on the loop, if it has a stable vertex.
    pub lambda_min: Option<f64>,
    /// Largest growth rate on the loop, if it has an unstable vertex.
    pub mu_max: Option<f64>,
    /// Only for loops through stable vertices alone.
    pub nu: Option<f64>,
    /// `cost_sum / lambda_sum`, only for loops through stable vertices alone.
    pub cycle_ratio: Option<f64>,
    pub note: Option<String>,
}

pub fn loop_bounds(ens: &SubsystemEnsemble, vertices: &[usize]) -> LoopBounds {
    let mut cost_sum = Some(0.0);
    let mut note = None;
    for (r, s) in walk_edges(vertices) {
        match ens.transition_cost(r, s) {
            Ok(c) => cost_sum = cost_sum.map(|x| x + c),
            Err(e) => {
                cost_sum = None;
                note.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let mut lambda_sum = 0.0;
    let mut mu_sum = 0.0;
    let mut lambda_min: Option<f64> = None;
    let mut mu_max: Option<f64> = None;
    for &v in vertices {
        let spec = ens.spectrum(v);
        if let Some(l) = spec.decay_rate() {
            lambda_sum += l;
            lambda_min = Some(lambda_min.map_or(l, |m| m.min(l)));
        } else {
            let m = spec.rate();
            mu_sum += m;
            mu_max = Some(mu_max.map_or(m, |x| x.max(m)));
        }
    }
    let all_stable = mu_max.is_none();
    let nu = match (all_stable, cost_sum, lambda_min) {
        (true, Some(c), Some(l)) => Some(c / l),
        _ => None,
    };
    let cycle_ratio = match (all_stable, cost_sum) {
        (true, Some(c)) => Some(c / lambda_sum),
        _ => None,
    };
    LoopBounds {
        vertices: vertices.to_vec(),
        cost_sum,
        lambda_sum,
        mu_sum,
        lambda_min,
        mu_max,
        nu,
        cycle_ratio,
        note,
    }
}

/// Maximum over a family of terms, some of which may be unavailable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialMax {
    /// Maximum over the available terms.
    pub value: Option<f64>,
    /// Number of terms that could not be evaluated.
    pub missing: usize,
}

impl PartialMax {
    fn over<I: IntoIterator<Item = Option<f64>>>(terms: I) -> Self {
        let mut value: Option<f64> = None;
        let mut missing = 0;
        for t in terms {
            match t {
                Some(x) => value = Some(value.map_or(x, |v| v.max(x))),
                None => missing += 1,
            }
        }
        Self { value, missing }
    }

    /// The maximum when every term was available.
    pub fn complete(&self) -> Option<f64> {
        if self.missing == 0 { self.value } else { None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserLoopBound {
    pub vertices: Vec<usize>,
    pub nu: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub loops: Vec<LoopBounds>,
    pub user_loops: Vec<UserLoopBound>,
    /// `max ln||P_s^{-1} P_r|| / λ_r` over edges.
    pub mu_g: PartialMax,
    /// Maximum cycle ratio over simple loops.
    pub rho_star: PartialMax,
    /// `max (cost(i,j) + cost(j,i)) / (λ_i + λ_j)` over edges.
    pub rho2_star: PartialMax,
    /// `max ||P_j^{-1}|| ||P_i||` over pairs joined by a path.
    pub rho: Option<f64>,
    /// Largest switch factor out of stable vertices.
    pub rho1: PartialMax,
    /// Largest switch factor out of unstable vertices.
    pub rho2: PartialMax,
    pub warnings: Vec<String>,
}

/// Loop data for every simple loop and the classical dwell bounds. The
/// dwell bounds need every vertex stable; they stay empty otherwise.
pub fn classical_bounds(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    user_loops: &[Vec<usize>],
) -> Result<BoundsReport, CertifyError> {
    let g = catalog.graph();
    check_sizes(ens, g)?;
    let mut warnings = Vec::new();
    for v in ens.defective_vertices() {
        let spec = ens.spectrum(v);
        warnings.push(match spec.defect() {
            Some(d) => format!(
                "subsystem {} is not diagonalizable (lambda* = {}, beta = {}); quantities through it are unavailable",
                v + 1,
                format_significant(d.lambda_star, 6),
                format_significant(d.beta, 6)
            ),
            None => format!("subsystem {} is not diagonalizable", v + 1),
        });
    }
    for v in (0..ens.len()).filter(|&v| ens.spectrum(v).is_overridden()) {
        warnings.push(format!("subsystem {} uses a user-supplied eigenvector matrix", v + 1));
    }

    let loops: Vec<LoopBounds> = catalog.loops().iter().map(|l| loop_bounds(ens, l.vertices())).collect();
    let all_stable = (0..ens.len()).all(|v| ens.spectrum(v).is_stable());

    let user_loops = user_loops
        .iter()
        .enumerate()
        .map(|(index, c)| {
            if !is_closed_walk(g, c) {
                return Err(CertifyError::NotALoop { index });
            }
            Ok(match nu_loop(ens, c) {
                Ok(nu) => UserLoopBound {
                    vertices: c.clone(),
                    nu: Some(nu),
                    note: None,
                },
                Err(e) => UserLoopBound {
                    vertices: c.clone(),
                    nu: None,
                    note: Some(e.to_string()),
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let empty = PartialMax {
        value: None,
        missing: 0,
    };
    let (mu_g, rho_star, rho2_star) = if all_stable {
        let rate = |v: usize| ens.spectrum(v).rate();
        let mu_g = PartialMax::over(
            g.edges()
                .map(|(r, s)| ens.transition_cost(r, s).ok().map(|c| c / rate(r))),
        );
        let rho_star = PartialMax::over(loops.iter().map(|l| l.cycle_ratio));
        let rho2_star = PartialMax::over(g.edges().map(|(i, j)| {
            let a = ens.transition_cost(i, j).ok()?;
            let b = ens.transition_cost(j, i).ok()?;
            Some((a + b) / (rate(i) + rate(j)))
        }));
        for (name, bound) in [("mu_G", &mu_g), ("rho*", &rho_star), ("rho2*", &rho2_star)] {
            if bound.missing > 0 {
                warnings.push(format!(
                    "{name} omits {} term(s) through non-diagonalizable subsystems; only the partial maximum is reported",
                    bound.missing
                ));
            }
        }
        (mu_g, rho_star, rho2_star)
    } else {
        warnings.push("mixed stable/unstable ensemble: mu_G, rho* and rho2* are not defined".into());
        (empty, empty, empty)
    };
    for (l, data) in loops.iter().enumerate() {
        if data.cost_sum.is_none() {
            warnings.push(format!("loop {} {}: cost unavailable", l + 1, numbered(&data.vertices)));
        }
    }

    let part = ens.partition();
    let factor = |(r, s): (usize, usize)| ens.cost_factor(r, s).ok();
    let rho1 = PartialMax::over(g.edges().filter(|&(r, _)| part.is_stable(r)).map(factor));
    let rho2 = PartialMax::over(g.edges().filter(|&(r, _)| !part.is_stable(r)).map(factor));
    let rho = crate::spectral::rho_graph(ens, g).ok();

    Ok(BoundsReport {
        loops,
        user_loops,
        mu_g,
        rho_star,
        rho2_star,
        rho,
        rho1,
        rho2,
        warnings,
    })
}

fn is_closed_walk(g: &Digraph, cycle: &[usize]) -> bool {
    !cycle.is_empty() && cycle.iter().all(|&v| v < g.vertex_count()) && walk_edges(cycle).all(|(a, b)| g.has_edge(a, b))
}

/// Certified iff `ν_i < τ_i` for every simple loop; all subsystems stable.
pub fn certify_simple_loop_dwell(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    taus: &[f64],
) -> Result<StabilityCertificate, CertifyError> {
    let g = catalog.graph();
    check_sizes(ens, g)?;
    if let Some(v) = (0..ens.len()).find(|&v| !ens.spectrum(v).is_stable()) {
        return Err(CertifyError::UnstableSource { vertex: v });
    }
    if catalog.is_empty() {
        return Err(CertifyError::HypothesisViolation("graph has no loop".into()));
    }
    if taus.len() != catalog.len() {
        return Err(CertifyError::LoopCountMismatch {
            expected: catalog.len(),
            got: taus.len(),
        });
    }
    for (i, &t) in taus.iter().enumerate() {
        positive(&format!("taus[{i}]"), t)?;
    }
    let mut checks = Vec::new();
    let mut values = Vec::new();
    for (i, l) in catalog.loops().iter().enumerate() {
        let nu = nu_loop(ens, l.vertices())?;
        values.push(NamedValue::new(format!("nu{}", i + 1), Some(nu)));
        checks.push(InequalityCheck::new(
            format!("loop {} {}: nu < tau", i + 1, numbered(l.vertices())),
            nu,
            taus[i],
        ));
    }
    Ok(StabilityCertificate::from_checks(Criterion::SimpleLoopDwell, checks)
        .with_values(values)
        .with_assumptions(hypothesis_assumptions(g, &ens.partition())))
}

/// Certified iff each supplied closed walk `C` gets more time than `ν_C`.
pub fn certify_loop_aggregate(
    ens: &SubsystemEnsemble,
    g: &Digraph,
    loops: &[(Vec<usize>, f64)],
) -> Result<StabilityCertificate, CertifyError> {
    check_sizes(ens, g)?;
    let mut checks = Vec::new();
    let mut values = Vec::new();
    for (index, (cycle, time)) in loops.iter().enumerate() {
        if !is_closed_walk(g, cycle) {
            return Err(CertifyError::NotALoop { index });
        }
        positive(&format!("loops[{index}].time"), *time)?;
        let nu = nu_loop(ens, cycle)?;
        values.push(NamedValue::new(format!("nu{}", index + 1), Some(nu)));
        checks.push(InequalityCheck::new(
            format!("loop {} {}: nu < time", index + 1, numbered(cycle)),
            nu,
            *time,
        ));
    }
    Ok(StabilityCertificate::from_checks(Criterion::LoopAggregate, checks).with_values(values))
}

/// Coefficients of `ln ρ - (Σλ)τ + (Σμ)η < 0` on a unidirectional ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingUniform {
    pub ln_rho: f64,
    pub lambda_sum: f64,
    pub mu_sum: f64,
}

/// Coefficients of `ln ρ - λτ₁ + μη₁ < 0` on a unidirectional ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingLoopwise {
    pub ln_rho: f64,
    pub lambda: f64,
    pub mu: f64,
}

fn ring_loop(ens: &SubsystemEnsemble, g: &Digraph) -> Result<LoopBounds, CertifyError> {
    check_sizes(ens, g)?;
    if !g.is_unidirectional_ring() {
        return Err(CertifyError::NotARing);
    }
    let cycle: Vec<usize> = (0..g.vertex_count()).collect();
    let data = loop_bounds(ens, &cycle);
    if data.cost_sum.is_none() {
        let v = ens.defective_vertices()[0];
        return Err(SpectralError::DefectiveEndpoint { vertex: v }.into());
    }
    Ok(data)
}

pub fn ring_uniform_coefficients(ens: &SubsystemEnsemble, g: &Digraph) -> Result<RingUniform, CertifyError> {
    let data = ring_loop(ens, g)?;
    Ok(RingUniform {
        ln_rho: data.cost_sum.expect("checked"),
        lambda_sum: data.lambda_sum,
        mu_sum: data.mu_sum,
    })
}

pub fn ring_loopwise_coefficients(ens: &SubsystemEnsemble, g: &Digraph) -> Result<RingLoopwise, CertifyError> {
    let data = ring_loop(ens, g)?;
    Ok(RingLoopwise {
        ln_rho: data.cost_sum.expect("checked"),
        lambda: data.lambda_min.unwrap_or(0.0),
        mu: data.mu_max.unwrap_or(0.0),
    })
}

pub fn certify_ring_uniform(c: RingUniform, tau: f64, eta: f64) -> Result<StabilityCertificate, CertifyError> {
    positive("tau", tau)?;
    positive("eta", eta)?;
    let cond = LinearCondition {
        label: "ring".into(),
        constant: c.ln_rho,
        tau_coeff: -c.lambda_sum,
        eta_coeff: c.mu_sum,
    };
    Ok(
        StabilityCertificate::from_conditions(Criterion::RingUniform, vec![cond], tau, eta).with_values(vec![
            NamedValue::new("ln rho", Some(c.ln_rho)),
            NamedValue::new("lambda sum", Some(c.lambda_sum)),
            NamedValue::new("mu sum", Some(c.mu_sum)),
        ]),
    )
}

pub fn certify_ring_loopwise(c: RingLoopwise, tau1: f64, eta1: f64) -> Result<StabilityCertificate, CertifyError> {
    positive("tau", tau1)?;
    positive("eta", eta1)?;
    let cond = LinearCondition {
        label: "ring".into(),
        constant: c.ln_rho,
        tau_coeff: -c.lambda,
        eta_coeff: c.mu,
    };
    Ok(
        StabilityCertificate::from_conditions(Criterion::RingLoopwise, vec![cond], tau1, eta1).with_values(vec![
            NamedValue::new("ln rho", Some(c.ln_rho)),
            NamedValue::new("lambda", Some(c.lambda)),
            NamedValue::new("mu", Some(c.mu)),
        ]),
    )
}

/// Certified iff `ln ρ₁ + ln ρ₂ - λτ + μη < 0` on a graph whose edges all
/// join a stable and an unstable vertex.
pub fn certify_bipartite(
    ens: &SubsystemEnsemble,
    g: &Digraph,
    tau: f64,
    eta: f64,
) -> Result<StabilityCertificate, CertifyError> {
    check_sizes(ens, g)?;
    positive("tau", tau)?;
    positive("eta", eta)?;
    let part = ens.partition();
    if g.edges().any(|(a, b)| part.is_stable(a) == part.is_stable(b)) {
        return Err(CertifyError::NotBipartite);
    }
    let max_factor = |stable: bool| -> Result<f64, CertifyError> {
        let mut best: f64 = 0.0;
        for (a, b) in g.edges().filter(|&(a, _)| part.is_stable(a) == stable) {
            best = best.max(ens.cost_factor(a, b)?);
        }
        Ok(best)
    };
    let (rho1, rho2) = (max_factor(true)?, max_factor(false)?);
    let (lambda, mu) = extreme_rates(ens);
    let ln = |x: f64| if x > 0.0 { x.ln() } else { 0.0 };
    let cond = LinearCondition {
        label: "bipartite".into(),
        constant: ln(rho1) + ln(rho2),
        tau_coeff: -lambda,
        eta_coeff: mu,
    };
    Ok(
        StabilityCertificate::from_conditions(Criterion::Bipartite, vec![cond], tau, eta)
            .with_values(vec![
                NamedValue::new("rho1", Some(rho1)),
                NamedValue::new("rho2", Some(rho2)),
                NamedValue::new("lambda", Some(lambda)),
                NamedValue::new("mu", Some(mu)),
            ])
            .with_assumptions(hypothesis_assumptions(g, &part)),
    )
}

// (smallest decay rate, largest growth rate), zero when the class is empty
fn extreme_rates(ens: &SubsystemEnsemble) -> (f64, f64) {
    let lambda = ens
        .spectra()
        .iter()
        .filter_map(|s| s.decay_rate())
        .reduce(f64::min)
        .unwrap_or(0.0);
    let mu = ens.spectra().iter().filter_map(|s| s.growth_rate()).fold(0.0, f64::max);
    (lambda, mu)
}

/// One condition `ln ρ_i - λ_{s_i}τ + μ_{s_i}η < 0` per simple loop, with
/// summed rates.
pub fn general_uniform_conditions(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
) -> Result<Vec<LinearCondition>, CertifyError> {
    check_sizes(ens, catalog.graph())?;
    catalog
        .loops()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let data = loop_bounds(ens, l.vertices());
            let ln_rho = loop_cost(ens, &data)?;
            Ok(LinearCondition {
                label: format!("loop {} {}", i + 1, numbered(l.vertices())),
                constant: ln_rho,
                tau_coeff: -data.lambda_sum,
                eta_coeff: data.mu_sum,
            })
        })
        .collect()
}

fn loop_cost(ens: &SubsystemEnsemble, data: &LoopBounds) -> Result<f64, CertifyError> {
    data.cost_sum.ok_or_else(|| {
        let v = data
            .vertices
            .iter()
            .copied()
            .find(|&v| !ens.spectrum(v).is_diagonalizable())
            .unwrap_or(data.vertices[0]);
        SpectralError::DefectiveEndpoint { vertex: v }.into()
    })
}

pub fn certify_general_uniform(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    tau: f64,
    eta: f64,
) -> Result<StabilityCertificate, CertifyError> {
    positive("tau", tau)?;
    positive("eta", eta)?;
    let conditions = general_uniform_conditions(ens, catalog)?;
    Ok(
        StabilityCertificate::from_conditions(Criterion::GeneralUniform, conditions, tau, eta)
            .with_assumptions(hypothesis_assumptions(catalog.graph(), &ens.partition())),
    )
}

/// Per loop `ln ρ_i - λ_i τ_i + μ_i η_i < 0` with the smallest decay and
/// largest growth rate on the loop.
pub fn certify_general_loopwise(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    taus: &[f64],
    etas: &[f64],
) -> Result<StabilityCertificate, CertifyError> {
    check_sizes(ens, catalog.graph())?;
    for params in [taus, etas] {
        if params.len() != catalog.len() {
            return Err(CertifyError::LoopCountMismatch {
                expected: catalog.len(),
                got: params.len(),
            });
        }
    }
    for i in 0..catalog.len() {
        positive(&format!("taus[{i}]"), taus[i])?;
        positive(&format!("etas[{i}]"), etas[i])?;
    }
    let mut conditions = Vec::new();
    let mut checks = Vec::new();
    for (i, l) in catalog.loops().iter().enumerate() {
        let data = loop_bounds(ens, l.vertices());
        let cond = LinearCondition {
            label: format!("loop {} {}", i + 1, numbered(l.vertices())),
            constant: loop_cost(ens, &data)?,
            tau_coeff: -data.lambda_min.unwrap_or(0.0),
            eta_coeff: data.mu_max.unwrap_or(0.0),
        };
        checks.push(cond.check(taus[i], etas[i]));
        conditions.push(cond);
    }
    let mut cert = StabilityCertificate::from_checks(Criterion::GeneralLoopwise, checks);
    cert.conditions = conditions;
    Ok(cert.with_assumptions(hypothesis_assumptions(catalog.graph(), &ens.partition())))
}

/// Constants of the switch-count criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchCountInputs {
    /// Log of the largest switch factor out of stable vertices.
    pub ln_rho1: f64,
    /// Log of the largest switch factor out of unstable vertices; zero
    /// when no edge leaves an unstable vertex.
    pub ln_rho2: f64,
    pub lambda: f64,
    pub mu: f64,
}

pub fn switch_count_inputs(ens: &SubsystemEnsemble, g: &Digraph) -> Result<SwitchCountInputs, CertifyError> {
    check_sizes(ens, g)?;
    let part = ens.partition();
    let ln_max = |stable: bool| -> Result<f64, CertifyError> {
        let mut best: Option<f64> = None;
        for (a, b) in g.edges().filter(|&(a, _)| part.is_stable(a) == stable) {
            let c = ens.transition_cost(a, b)?;
            best = Some(best.map_or(c, |x| x.max(c)));
        }
        Ok(best.unwrap_or(0.0))
    };
    let (lambda, mu) = extreme_rates(ens);
    Ok(SwitchCountInputs {
        ln_rho1: ln_max(true)?,
        ln_rho2: ln_max(false)?,
        lambda,
        mu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCountReport {
    pub certificate: StabilityCertificate,
    /// `E(m)` for `m = 1..=horizon`.
    pub series: Vec<f64>,
    /// Slope of the least-squares line through the last half of the series.
    pub slope: Option<f64>,
    /// Required `N_s / N_u` ratio when `λτ > ln ρ₁`.
    pub threshold_ratio: Option<f64>,
    /// `N_s / N_u` over the horizon, when `N_u > 0`.
    pub observed_ratio: Option<f64>,
}

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two
/// distinct abscissae.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `E(m) = N_s(ln ρ₁ - λτ) + N_u(ln ρ₂ + μη)` along the signal. Certified
/// at the horizon when `E(horizon) < 0` and the series trends down over
/// its last half.
pub fn certify_switch_count(
    inputs: SwitchCountInputs,
    catalog: &LoopCatalog,
    part: &SubgraphPartition,
    tau: f64,
    eta: f64,
    sig: &SwitchingSignal,
    horizon: usize,
) -> Result<SwitchCountReport, CertifyError> {
    positive("tau", tau)?;
    positive("eta", eta)?;
    if horizon > sig.len() {
        return Err(CertifyError::HorizonTooLong {
            horizon,
            len: sig.len(),
        });
    }
    if horizon == 0 {
        return Err(CertifyError::InvalidParameter {
            name: "horizon".into(),
            value: 0.0,
        });
    }
    let membership = class_membership(sig, catalog, &SignalClassSpec::DwellFlee { tau, eta }, Some(part))?;
    if let Some(v) = membership.violations().next() {
        let site = match v.site {
            ConstraintSite::Position(n) => format!("position {}", n + 1),
            ConstraintSite::Instance { instance, loop_index } => {
                format!("instance {} of loop {}", instance + 1, loop_index + 1)
            }
        };
        return Err(CertifyError::ClassViolation(format!(
            "{:?} at {site}, slack {}",
            v.kind, v.slack
        )));
    }

    let stable_term = inputs.ln_rho1 - inputs.lambda * tau;
    let unstable_term = inputs.ln_rho2 + inputs.mu * eta;
    let mut series = Vec::with_capacity(horizon);
    for m in 1..=horizon {
        let (ns, nu) = switch_counters(sig, part, m)?;
        series.push(ns as f64 * stable_term + nu as f64 * unstable_term);
    }
    let start = horizon / 2;
    let xs: Vec<f64> = (start + 1..=horizon).map(|m| m as f64).collect();
    let slope = least_squares_slope(&xs, &series[start..]);

    let last = *series.last().expect("horizon >= 1");
    let mut checks = vec![InequalityCheck::new("E(horizon) < 0", last, 0.0)];
    checks.push(InequalityCheck::new(
        "slope over last half < 0",
        slope.unwrap_or(f64::INFINITY),
        0.0,
    ));
    let denominator = inputs.lambda * tau - inputs.ln_rho1;
    let threshold_ratio = (denominator > 0.0).then(|| unstable_term / denominator);
    let (ns, nu) = switch_counters(sig, part, horizon)?;
    let observed_ratio = (nu > 0).then(|| ns as f64 / nu as f64);

    let mut cert = StabilityCertificate::from_checks(Criterion::SwitchCount, checks).with_values(vec![
        NamedValue::new("ln rho1", Some(inputs.ln_rho1)),
        NamedValue::new("ln rho2", Some(inputs.ln_rho2)),
        NamedValue::new("lambda", Some(inputs.lambda)),
        NamedValue::new("mu", Some(inputs.mu)),
        NamedValue::new("threshold ratio", threshold_ratio),
        NamedValue::new("observed ratio", observed_ratio),
    ]);
    cert.assumptions = hypothesis_assumptions(catalog.graph(), part);
    cert.warnings.push(format!("verdict holds at horizon {horizon} only"));
    Ok(SwitchCountReport {
        certificate: cert,
        series,
        slope,
        threshold_ratio,
        observed_ratio,
    })
}

/// Eigenvector matrices `Q_i = base^{e_i} P_i` that shrink every switch
/// factor out of unstable vertices to at most `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledEnsemble {
    pub bases: Vec<Eigenbasis>,
    pub exponents: Vec<u32>,
    /// `ρ/ζ`, or 1 when no scaling was needed.
    pub base: f64,
    /// Largest switch factor out of unstable vertices before scaling.
    pub rho: f64,
    /// Largest switch factor out of unstable vertices after scaling.
    pub rho_prime: f64,
    /// Largest switch factor out of stable vertices after scaling.
    pub alpha_prime: Option<f64>,
    /// Topological order of the unstable subgraph, sources first.
    pub order: Vec<usize>,
}

impl RescaledEnsemble {
    pub fn factor(&self, from: usize, to: usize) -> f64 {
        switch_factor(&self.bases[from], &self.bases[to])
    }
}

pub fn rescale_eigenvectors(ens: &SubsystemEnsemble, g: &Digraph, zeta: f64) -> Result<RescaledEnsemble, CertifyError> {
    check_sizes(ens, g)?;
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(CertifyError::InvalidZeta(zeta));
    }
    let part = ens.partition();
    let gu = part.unstable_subgraph(g)?;
    let order = gu.topological_sort().map_err(|e| match e {
        GraphError::CyclicGraph { vertex } => CertifyError::CyclicUnstableSubgraph { vertex },
        other => other.into(),
    })?;

    // every vertex on a switch needs an eigenbasis
    let mut bases = Vec::with_capacity(ens.len());
    for v in 0..ens.len() {
        let touched = g.out_degree(v) > 0 || g.in_degree(v) > 0;
        match ens.basis(v) {
            Ok(b) => bases.push(b.clone()),
            Err(e) if touched => return Err(e.into()),
            Err(_) => bases.push(Eigenbasis::new(num_identity(ens.dim())).expect("identity")),
        }
    }

    let mut rho: f64 = 0.0;
    for (a, b) in gu.edges() {
        rho = rho.max(ens.cost_factor(a, b)?);
    }

    let k = ens.len();
    let mut exponents = vec![0u32; k];
    let base = if rho < 1.0 {
        1.0
    } else {
        let mut next = 0u32;
        for &v in &order {
            if !part.is_stable(v) && gu.in_degree(v) > 0 {
                next += 1;
                exponents[v] = next;
            }
        }
        for v in part.stable_vertices() {
            exponents[v] = next + 1;
        }
        rho / zeta
    };
    let bases: Vec<Eigenbasis> = bases
        .iter()
        .zip(&exponents)
        .map(|(b, &e)| b.scaled(base.powi(e as i32)))
        .collect();

    let factor = |a: usize, b: usize| switch_factor(&bases[a], &bases[b]);
    let rho_prime = gu.edges().map(|(a, b)| factor(a, b)).fold(0.0, f64::max);
    let alpha_prime = g
        .edges()
        .filter(|&(a, _)| part.is_stable(a))
        .map(|(a, b)| factor(a, b))
        .reduce(f64::max);

    Ok(RescaledEnsemble {
        bases,
        exponents,
        base,
        rho,
        rho_prime,
        alpha_prime,
        order,
    })
}

fn num_identity(n: usize) -> crate::spectral::CMatrix {
    crate::spectral::CMatrix::identity(n, n)
}

/// After rescaling: `τ > max ln||Q_j^{-1}Q_i||/λ_i` over edges out of stable
/// vertices and `η < min -ln||Q_j^{-1}Q_i||/μ_i` over edges out of unstable
/// vertices. A threshold with no edges behind it imposes nothing.
pub fn certify_acyclic_rescaled(
    ens: &SubsystemEnsemble,
    g: &Digraph,
    tau: f64,
    eta: f64,
    zeta: f64,
) -> Result<(StabilityCertificate, RescaledEnsemble), CertifyError> {
    positive("tau", tau)?;
    positive("eta", eta)?;
    let rescaled = rescale_eigenvectors(ens, g, zeta)?;
    let part = ens.partition();
    let rate = |v: usize| ens.spectrum(v).rate();

    let tau_threshold = g
        .edges()
        .filter(|&(a, _)| part.is_stable(a))
        .map(|(a, b)| rescaled.factor(a, b).ln() / rate(a))
        .reduce(f64::max);
    let eta_threshold = g
        .edges()
        .filter(|&(a, _)| !part.is_stable(a))
        .map(|(a, b)| -rescaled.factor(a, b).ln() / rate(a))
        .reduce(f64::min);

    let mut checks = Vec::new();
    if let Some(t) = tau_threshold {
        checks.push(InequalityCheck::new("tau threshold < tau", t, tau));
    }
    if let Some(e) = eta_threshold {
        checks.push(InequalityCheck::new("eta < eta threshold", eta, e));
    }
    let mut cert = StabilityCertificate::from_checks(Criterion::AcyclicRescaled, checks).with_values(vec![
        NamedValue::new("tau threshold", tau_threshold),
        NamedValue::new("eta threshold", eta_threshold),
        NamedValue::new("rho", Some(rescaled.rho)),
        NamedValue::new("scaling base", Some(rescaled.base)),
        NamedValue::new("rho'", Some(rescaled.rho_prime)),
        NamedValue::new("alpha'", rescaled.alpha_prime),
    ]);
    cert.assumptions = hypothesis_assumptions(g, &part);
    if tau_threshold.is_none() {
        cert.warnings
            .push("no edge leaves a stable vertex; tau is unconstrained".into());
    }
    if eta_threshold.is_none() {
        cert.warnings
            .push("no edge leaves an unstable vertex; eta is unconstrained".into());
    }
    Ok((cert, rescaled))
}

/// Commuting subsystems share one eigenbasis, so every switch factor is 1.
/// On a two-vertex ring with one stable and one unstable vertex, the check
/// is per eigen-axis: `α_l τ + β_l η < 0`. Otherwise the loop conditions
/// of the general uniform criterion are used with zero cost.
pub fn certify_commuting(
    ens: &SubsystemEnsemble,
    catalog: &LoopCatalog,
    tau: f64,
    eta: f64,
    tol: &SpectralTolerances,
) -> Result<StabilityCertificate, CertifyError> {
    let g = catalog.graph();
    check_sizes(ens, g)?;
    positive("tau", tau)?;
    positive("eta", eta)?;
    let check = check_pairwise_commuting(ens, tol);
    if !check.commuting {
        return Err(CertifyError::NotCommuting);
    }
    let p = check.common_basis.ok_or(CertifyError::NoCommonBasis)?;
    let p_inv = p.clone().try_inverse().ok_or(CertifyError::NoCommonBasis)?;
    let part = ens.partition();
    let axis_rates = |v: usize| -> Vec<f64> {
        let a = ens.spectrum(v).matrix().map(|x| Complex64::new(x, 0.0));
        let d = &p_inv * a * &p;
        (0..d.nrows()).map(|l| d[(l, l)].re).collect()
    };

    let two_ring = g.vertex_count() == 2 && g.is_unidirectional_ring();
    let mixed = part.stable_vertices().len() == 1 && part.unstable_vertices().len() == 1;
    let mut cert = if two_ring && mixed {
        let alpha = axis_rates(part.stable_vertices()[0]);
        let beta = axis_rates(part.unstable_vertices()[0]);
        let conditions: Vec<LinearCondition> = alpha
            .iter()
            .zip(&beta)
            .enumerate()
            .map(|(l, (&a, &b))| LinearCondition {
                label: format!("axis {}", l + 1),
                constant: 0.0,
                tau_coeff: a,
                eta_coeff: b,
            })
            .collect();
        StabilityCertificate::from_conditions(Criterion::Commuting, conditions, tau, eta)
    } else {
        let conditions = catalog
            .loops()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let data = loop_bounds(ens, l.vertices());
                LinearCondition {
                    label: format!("loop {} {}", i + 1, numbered(l.vertices())),
                    constant: 0.0,
                    tau_coeff: -data.lambda_sum,
                    eta_coeff: data.mu_sum,
                }
            })
            .collect();
        let mut cert = StabilityCertificate::from_conditions(Criterion::Commuting, conditions, tau, eta);
        cert.warnings
            .push("not a stable/unstable two-vertex ring; loop conditions evaluated with unit switch factors".into());
        cert
    };
    cert.values = vec![
        NamedValue::new("max commutator", Some(check.max_commutator)),
        NamedValue::new("common basis norm", Some(spectral_norm(&p))),
    ];
    cert.assumptions = hypothesis_assumptions(g, &part);
    Ok(cert)
}
