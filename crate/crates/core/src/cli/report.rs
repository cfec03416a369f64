//! Machine-readable run reports.
//!
//! Everything here is 1-based, like the configuration file. Non-finite
//! numbers are written as `null`.

use serde::{Deserialize, Serialize};

use crate::certify::{
    BoundsReport, LoopBounds, PartialMax, RescaledEnsemble, StabilityCertificate, SwitchCountReport, Verdict,
    format_significant,
};
use crate::digraph::{HypothesisCheck, HypothesisReport, LoopCatalog};
use crate::signal::{
    Admissibility, ConstraintKind, ConstraintSite, Membership, StandardDecomposition, SwitchingSignal,
};
use crate::simulate::{EnvelopeCheck, Trajectory, ValidationReport};
use crate::spectral::SubsystemSpectrum;

fn fin(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn one_based(xs: &[usize]) -> Vec<usize> {
    xs.iter().map(|x| x + 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Certified,
    NotCertified,
    InputError,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Ok | Self::Certified => 0,
            Self::NotCertified => 1,
            Self::InputError => 2,
            Self::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hypotheses: Vec<HypothesisDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsystems: Vec<SubsystemDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership: Option<MembershipDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_count: Option<SwitchCountDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaling: Option<RescalingDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationDto>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            status: Status::Ok,
            exit_code: 0,
            error: None,
            hypotheses: Vec::new(),
            subsystems: Vec::new(),
            loops: Vec::new(),
            signal: None,
            decomposition: None,
            membership: None,
            bounds: None,
            certificate: None,
            switch_count: None,
            rescaling: None,
            simulation: None,
            validation: None,
            warnings: Vec::new(),
        }
    }

    pub fn set_status(&mut self, status: Status) {
        self.status = status;
        self.exit_code = status.exit_code();
    }

    pub fn fail(&mut self, status: Status, error: impl Into<String>) {
        self.set_status(status);
        self.error = Some(error.into());
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisDto {
    pub name: String,
    pub passed: bool,
    pub applicable: bool,
    pub witnesses: Vec<usize>,
}

impl HypothesisDto {
    fn new(name: &str, c: &HypothesisCheck) -> Self {
        Self {
            name: name.to_string(),
            passed: c.passed,
            applicable: c.applicable,
            witnesses: one_based(&c.witnesses),
        }
    }

    pub fn from_report(r: &HypothesisReport) -> Vec<Self> {
        vec![
            Self::new("has-loop", &r.has_loop),
            Self::new("nonzero-outdegree", &r.nonzero_outdegree),
            Self::new("unstable-reaches-stable", &r.unstable_reach_stable),
            Self::new("stable-reaches-unstable", &r.stable_reach_unstable),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemDto {
    pub vertex: usize,
    pub stable: bool,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub rate: f64,
    pub diagonalizable: bool,
    pub overridden: bool,
    pub eigenvector_condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect_lambda_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect_beta: Option<f64>,
}

impl SubsystemDto {
    pub fn new(vertex: usize, s: &SubsystemSpectrum) -> Self {
        let defect = s.defect();
        Self {
            vertex: vertex + 1,
            stable: s.is_stable(),
            eigenvalues: s.eigenvalues().iter().map(|z| [z.re, z.im]).collect(),
            rate: s.rate(),
            diagonalizable: s.is_diagonalizable(),
            overridden: s.is_overridden(),
            eigenvector_condition: fin(s.eigenvector_condition()),
            defect_lambda_star: defect.map(|d| d.lambda_star),
            defect_beta: defect.and_then(|d| fin(d.beta)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDto {
    pub index: usize,
    pub vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl LoopDto {
    pub fn bare(index: usize, vertices: &[usize]) -> Self {
        Self {
            index: index + 1,
            vertices: one_based(vertices),
            cost_sum: None,
            lambda_sum: None,
            mu_sum: None,
            nu: None,
            cycle_ratio: None,
            note: None,
        }
    }

    pub fn with_bounds(index: usize, b: &LoopBounds) -> Self {
        Self {
            cost_sum: b.cost_sum.and_then(fin),
            lambda_sum: fin(b.lambda_sum),
            mu_sum: fin(b.mu_sum),
            nu: b.nu.and_then(fin),
            cycle_ratio: b.cycle_ratio.and_then(fin),
            note: b.note.clone(),
            ..Self::bare(index, &b.vertices)
        }
    }

    pub fn catalog(catalog: &LoopCatalog) -> Vec<Self> {
        catalog
            .loops()
            .iter()
            .enumerate()
            .map(|(i, l)| Self::bare(i, l.vertices()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDto {
    pub modes: Vec<usize>,
    pub durations: Vec<f64>,
    pub admissible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<usize>,
}

impl SignalDto {
    pub fn new(sig: &SwitchingSignal, adm: &Admissibility) -> Self {
        Self {
            modes: one_based(sig.modes()),
            durations: sig.durations().to_vec(),
            admissible: adm.admissible,
            first_violation: adm.first_violation.map(|i| i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDto {
    pub loop_index: usize,
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub total_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDto {
    pub instances: Vec<InstanceDto>,
    pub residual_edges: Vec<usize>,
    pub residual_vertices: Vec<usize>,
    pub instance_counts: Vec<usize>,
}

impl DecompositionDto {
    pub fn new(d: &StandardDecomposition, loops: usize) -> Self {
        Self {
            instances: d
                .instances
                .iter()
                .map(|i| InstanceDto {
                    loop_index: i.loop_index + 1,
                    vertices: one_based(&i.vertices),
                    edges: one_based(&i.edge_indices),
                    total_time: i.total_time,
                })
                .collect(),
            residual_edges: one_based(&d.residual_edges),
            residual_vertices: one_based(&d.residual_vertices),
            instance_counts: d.instance_counts(loops),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDto {
    pub kind: String,
    /// Signal position for per-interval constraints, instance number for
    /// per-loop ones.
    pub site: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_index: Option<usize>,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipDto {
    pub class: String,
    pub member: bool,
    pub constraints: usize,
    pub min_slack: Option<f64>,
    pub violations: Vec<ConstraintDto>,
}

impl MembershipDto {
    pub fn new(class: &str, m: &Membership) -> Self {
        Self {
            class: class.to_string(),
            member: m.member,
            constraints: m.constraints.len(),
            min_slack: m.min_slack().and_then(fin),
            violations: m
                .violations()
                .map(|c| {
                    let kind = match c.kind {
                        ConstraintKind::MinDwell => "min-dwell",
                        ConstraintKind::MaxFlee => "max-flee",
                        ConstraintKind::LoopDwell => "loop-dwell",
                        ConstraintKind::LoopStableTime => "loop-stable-time",
                        ConstraintKind::LoopUnstableTime => "loop-unstable-time",
                    };
                    let (site, loop_index) = match c.site {
                        ConstraintSite::Position(n) => (n + 1, None),
                        ConstraintSite::Instance { instance, loop_index } => (instance + 1, Some(loop_index + 1)),
                    };
                    ConstraintDto {
                        kind: kind.to_string(),
                        site,
                        loop_index,
                        value: c.value,
                        bound: c.bound,
                        slack: c.slack,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialMaxDto {
    pub value: Option<f64>,
    /// Terms that could not be evaluated; `value` is a lower estimate when
    /// this is nonzero.
    pub missing: usize,
}

impl From<&PartialMax> for PartialMaxDto {
    fn from(p: &PartialMax) -> Self {
        Self {
            value: p.value.and_then(fin),
            missing: p.missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLoopDto {
    pub vertices: Vec<usize>,
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDto {
    pub mu_g: PartialMaxDto,
    pub rho_star: PartialMaxDto,
    pub rho2_star: PartialMaxDto,
    pub rho: Option<f64>,
    pub rho1: PartialMaxDto,
    pub rho2: PartialMaxDto,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_loops: Vec<UserLoopDto>,
}

impl From<&BoundsReport> for BoundsDto {
    fn from(b: &BoundsReport) -> Self {
        Self {
            mu_g: (&b.mu_g).into(),
            rho_star: (&b.rho_star).into(),
            rho2_star: (&b.rho2_star).into(),
            rho: b.rho.and_then(fin),
            rho1: (&b.rho1).into(),
            rho2: (&b.rho2).into(),
            user_loops: b
                .user_loops
                .iter()
                .map(|u| UserLoopDto {
                    vertices: one_based(&u.vertices),
                    nu: u.nu.and_then(fin),
                    note: u.note.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckDto {
    pub label: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDto {
    pub label: String,
    pub constant: Option<f64>,
    pub tau_coeff: f64,
    pub eta_coeff: f64,
    pub inequality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDto {
    pub name: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionDto {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDto {
    pub criterion: String,
    pub certified: bool,
    pub parameters: Vec<ValueDto>,
    pub checks: Vec<CheckDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<ValueDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<AssumptionDto>,
}

impl CertificateDto {
    pub fn new(c: &StabilityCertificate, parameters: Vec<(String, f64)>) -> Self {
        Self {
            criterion: c.criterion.name().to_string(),
            certified: c.verdict == Verdict::Certified,
            parameters: parameters
                .into_iter()
                .map(|(name, v)| ValueDto { name, value: fin(v) })
                .collect(),
            checks: c
                .checks
                .iter()
                .map(|k| CheckDto {
                    label: k.label.clone(),
                    lhs: fin(k.lhs),
                    rhs: fin(k.rhs),
                    margin: fin(k.margin),
                    holds: k.holds,
                })
                .collect(),
            first_violation: c.first_violation.map(|i| i + 1),
            conditions: c
                .conditions
                .iter()
                .map(|l| ConditionDto {
                    label: l.label.clone(),
                    constant: fin(l.constant),
                    tau_coeff: l.tau_coeff,
                    eta_coeff: l.eta_coeff,
                    inequality: l.render(),
                })
                .collect(),
            values: c
                .values
                .iter()
                .map(|v| ValueDto {
                    name: v.name.clone(),
                    value: v.value.and_then(fin),
                })
                .collect(),
            assumptions: c
                .assumptions
                .iter()
                .map(|a| AssumptionDto {
                    name: a.name.clone(),
                    holds: a.holds,
                    detail: a.detail.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchCountDto {
    /// E(m) for m = 1..=horizon.
    pub series: Vec<Option<f64>>,
    pub slope: Option<f64>,
    pub threshold_ratio: Option<f64>,
    pub observed_ratio: Option<f64>,
}

impl From<&SwitchCountReport> for SwitchCountDto {
    fn from(r: &SwitchCountReport) -> Self {
        Self {
            series: r.series.iter().copied().map(fin).collect(),
            slope: r.slope.and_then(fin),
            threshold_ratio: r.threshold_ratio.and_then(fin),
            observed_ratio: r.observed_ratio.and_then(fin),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingDto {
    pub order: Vec<usize>,
    /// Exponent per vertex, in vertex order.
    pub exponents: Vec<u32>,
    pub base: f64,
    pub rho: Option<f64>,
    pub rho_prime: Option<f64>,
    pub alpha_prime: Option<f64>,
}

impl From<&RescaledEnsemble> for RescalingDto {
    fn from(r: &RescaledEnsemble) -> Self {
        Self {
            order: one_based(&r.order),
            exponents: r.exponents.clone(),
            base: r.base,
            rho: fin(r.rho),
            rho_prime: fin(r.rho_prime),
            alpha_prime: r.alpha_prime.and_then(fin),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDto {
    pub holds: bool,
    pub constant: Option<f64>,
    pub rho: Option<f64>,
    pub worst_log_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<usize>,
    /// ln of the bound at each switch time and at the end.
    pub log_bounds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDto {
    pub x0: Vec<f64>,
    pub switch_times: Vec<f64>,
    pub switch_log_norms: Vec<Option<f64>>,
    pub final_log_norm: Option<f64>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeDto>,
}

impl SimulationDto {
    pub fn new(x0: &[f64], t: &Trajectory, env: Option<(&EnvelopeCheck, f64, f64)>) -> Self {
        Self {
            x0: x0.to_vec(),
            switch_times: t.switch_times.clone(),
            switch_log_norms: t.switch_log_norms.iter().copied().map(fin).collect(),
            final_log_norm: fin(t.final_log_norm()),
            samples: t.samples.len(),
            envelope: env.map(|(e, constant, rho)| EnvelopeDto {
                holds: e.holds,
                constant: fin(constant),
                rho: fin(rho),
                worst_log_margin: fin(e.worst_log_margin),
                first_violation: e.first_violation.map(|i| i + 1),
                log_bounds: e.points.iter().map(|p| fin(p.log_bound)).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDto {
    pub trial: u64,
    pub slope: Option<f64>,
    pub final_log_ratio: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationDto {
    pub certified: bool,
    pub passed: bool,
    pub horizon: usize,
    pub seed: u64,
    pub max_slope: Option<f64>,
    pub max_final_log_ratio: Option<f64>,
    pub trials: Vec<TrialDto>,
}

impl ValidationDto {
    pub fn new(v: &ValidationReport, horizon: usize, seed: u64) -> Self {
        Self {
            certified: v.certified,
            passed: v.passed,
            horizon,
            seed,
            max_slope: fin(v.max_slope),
            max_final_log_ratio: fin(v.max_final_log_ratio),
            trials: v
                .trials
                .iter()
                .map(|t| TrialDto {
                    trial: t.trial,
                    slope: fin(t.slope),
                    final_log_ratio: fin(t.final_log_ratio),
                    passed: t.passed,
                })
                .collect(),
        }
    }
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format_significant(v, 6))
}

fn list(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Short plain-text rendering for the terminal.
pub fn human_summary(r: &Report) -> String {
    let mut out = Vec::new();
    let status = match r.status {
        Status::Ok => "ok",
        Status::Certified => "certified",
        Status::NotCertified => "not certified",
        Status::InputError => "input error",
        Status::NumericalFailure => "numerical failure",
    };
    out.push(format!("{}: {status}", r.command));
    if let Some(e) = &r.error {
        out.push(format!("  error: {e}"));
    }
    for h in r.hypotheses.iter().filter(|h| h.applicable && !h.passed) {
        out.push(format!(
            "  hypothesis {} fails at vertices {}",
            h.name,
            list(&h.witnesses)
        ));
    }
    for l in &r.loops {
        let mut line = format!("  loop {}: {}", l.index, list(&l.vertices));
        if l.lambda_sum.is_some() {
            line.push_str(&format!("  nu={}  ratio={}", num(l.nu), num(l.cycle_ratio)));
        }
        out.push(line);
    }
    if let Some(d) = &r.decomposition {
        for (i, inst) in d.instances.iter().enumerate() {
            out.push(format!(
                "  instance {}: loop {} via edges {}  time={}",
                i + 1,
                inst.loop_index,
                list(&inst.edges),
                num(Some(inst.total_time))
            ));
        }
        out.push(format!("  residual edges: {}", list(&d.residual_edges)));
    }
    if let Some(m) = &r.membership {
        out.push(format!(
            "  class {}: {} ({} violations)",
            m.class,
            if m.member { "member" } else { "not a member" },
            m.violations.len()
        ));
    }
    if let Some(b) = &r.bounds {
        out.push(format!(
            "  mu_G={}  rho*={}  rho2*={}  rho={}",
            num(b.mu_g.value),
            num(b.rho_star.value),
            num(b.rho2_star.value),
            num(b.rho)
        ));
    }
    if let Some(c) = &r.certificate {
        for cond in &c.conditions {
            out.push(format!("  {}: {}", cond.label, cond.inequality));
        }
        out.push(format!(
            "  {:<40} {:>12} {:>12} {:>12}",
            "check", "lhs", "rhs", "margin"
        ));
        for k in &c.checks {
            out.push(format!(
                "  {:<40} {:>12} {:>12} {:>12}{}",
                k.label,
                num(k.lhs),
                num(k.rhs),
                num(k.margin),
                if k.holds { "" } else { "  FAIL" }
            ));
        }
        for v in &c.values {
            out.push(format!("  {} = {}", v.name, num(v.value)));
        }
    }
    if let Some(s) = &r.switch_count {
        out.push(format!(
            "  switch-count slope={}  threshold={}",
            num(s.slope),
            num(s.threshold_ratio)
        ));
    }
    if let Some(s) = &r.simulation {
        out.push(format!(
            "  final ln|x|={} over {} switches",
            num(s.final_log_norm),
            s.switch_times.len()
        ));
        if let Some(e) = &s.envelope {
            out.push(format!(
                "  envelope {} (worst log margin {})",
                if e.holds { "holds" } else { "violated" },
                num(e.worst_log_margin)
            ));
        }
    }
    if let Some(v) = &r.validation {
        let passed = v.trials.iter().filter(|t| t.passed).count();
        out.push(format!(
            "  {passed}/{} trials decayed  max slope={}",
            v.trials.len(),
            num(v.max_slope)
        ));
    }
    for w in &r.warnings {
        out.push(format!("  warning: {w}"));
    }
    out.join("\n") + "\n"
}
