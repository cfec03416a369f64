//! Switching signals as timed walks on a digraph.
//!
//! A signal of length `N` visits modes `σ_0..σ_{N-1}` and stays `d_n` in
//! mode `σ_n`. Edge `e_n = (σ_n, σ_{n+1})` carries the time `d_n` spent
//! before it is traversed, so a signal has `N - 1` edges and the final
//! duration belongs to no edge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::digraph::{Digraph, LoopCatalog, SubgraphPartition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal has no modes")]
    Empty,
    #[error("{modes} modes but {durations} durations")]
    LengthMismatch { modes: usize, durations: usize },
    #[error("duration {} is {value}, must be positive and finite", .index + 1)]
    NonPositiveDuration { index: usize, value: f64 },
    #[error("mode {} at position {} is outside 1..={k}", .mode + 1, .index + 1)]
    ModeOutOfRange { index: usize, mode: usize, k: usize },
    #[error("switch {} from {} to {} is not an edge of the graph", .step + 1, .from + 1, .to + 1)]
    Inadmissible { step: usize, from: usize, to: usize },
    #[error("parameter {name} is {value}, must be positive and finite")]
    InvalidParameter { name: String, value: f64 },
    #[error("class has {got} loop parameters, graph has {expected} simple loops")]
    LoopCountMismatch { expected: usize, got: usize },
    #[error("this signal class needs a stable/unstable partition")]
    MissingPartition,
    #[error("partition covers {got} vertices, graph has {expected}")]
    PartitionMismatch { expected: usize, got: usize },
    #[error("prefix {n} is longer than the signal ({len})")]
    PrefixTooLong { n: usize, len: usize },
    #[error("cannot synthesize signal: {reason}")]
    SynthesisFailure { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    modes: Vec<usize>,
    durations: Vec<f64>,
}

impl SwitchingSignal {
    pub fn new(modes: Vec<usize>, durations: Vec<f64>) -> Result<Self, SignalError> {
        if modes.is_empty() {
            return Err(SignalError::Empty);
        }
        if modes.len() != durations.len() {
            return Err(SignalError::LengthMismatch {
                modes: modes.len(),
                durations: durations.len(),
            });
        }
        if let Some((index, &value)) = durations
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(SignalError::NonPositiveDuration { index, value });
        }
        Ok(Self { modes, durations })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn edge_count(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn edge(&self, n: usize) -> (usize, usize) {
        (self.modes[n], self.modes[n + 1])
    }

    /// `t_0 = 0, t_1, ..., t_N` with `t_{n+1} = t_n + d_n`.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for d in &self.durations {
            t += d;
            times.push(t);
        }
        times
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// The first `n` modes and durations.
    pub fn prefix(&self, n: usize) -> Result<Self, SignalError> {
        if n > self.len() {
            return Err(SignalError::PrefixTooLong { n, len: self.len() });
        }
        Self::new(self.modes[..n].to_vec(), self.durations[..n].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Index of the first edge that is missing from the graph. A mode out
    /// of range is reported at the edge entering it, or at 0 for the first
    /// mode.
    pub first_violation: Option<usize>,
}

pub fn check_admissible(sig: &SwitchingSignal, g: &Digraph) -> Admissibility {
    let k = g.vertex_count();
    let violation = if sig.modes[0] >= k {
        Some(0)
    } else {
        (0..sig.edge_count()).find(|&n| {
            let (a, b) = sig.edge(n);
            b >= k || !g.has_edge(a, b)
        })
    };
    Admissibility {
        admissible: violation.is_none(),
        first_violation: violation,
    }
}

fn require_admissible(sig: &SwitchingSignal, g: &Digraph) -> Result<(), SignalError> {
    let k = g.vertex_count();
    if let Some((index, &mode)) = sig.modes.iter().enumerate().find(|(_, m)| **m >= k) {
        return Err(SignalError::ModeOutOfRange { index, mode, k });
    }
    match check_admissible(sig, g).first_violation {
        None => Ok(()),
        Some(step) => {
            let (from, to) = sig.edge(step);
            Err(SignalError::Inadmissible { step, from, to })
        }
    }
}

/// One extracted traversal of a simple loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopInstance {
    /// Position of the loop in the catalog.
    pub loop_index: usize,
    /// Vertices in traversal order, starting where the loop was entered.
    pub vertices: Vec<usize>,
    /// Signal edge indices, ascending.
    pub edge_indices: Vec<usize>,
    pub total_time: f64,
}

impl LoopInstance {
    /// Time spent on stable and on unstable source vertices.
    pub fn split_time(&self, sig: &SwitchingSignal, part: &SubgraphPartition) -> (f64, f64) {
        let mut stable = 0.0;
        let mut unstable = 0.0;
        for &e in &self.edge_indices {
            if part.is_stable(sig.modes[e]) {
                stable += sig.durations[e];
            } else {
                unstable += sig.durations[e];
            }
        }
        (stable, unstable)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardDecomposition {
    /// Loop instances in extraction order.
    pub instances: Vec<LoopInstance>,
    /// Edges left over once no vertex repeats, ascending.
    pub residual_edges: Vec<usize>,
    /// Vertex sequence of the residual path.
    pub residual_vertices: Vec<usize>,
}

impl StandardDecomposition {
    /// How many instances of each catalog loop were extracted.
    pub fn instance_counts(&self, loops: usize) -> Vec<usize> {
        let mut counts = vec![0; loops];
        for inst in &self.instances {
            counts[inst.loop_index] += 1;
        }
        counts
    }
}

/// Repeatedly removes the earliest completed loop from the residual path,
/// rescanning from the start after each removal.
pub fn standard_decomposition(
    sig: &SwitchingSignal,
    catalog: &LoopCatalog,
) -> Result<StandardDecomposition, SignalError> {
    require_admissible(sig, catalog.graph())?;
    let k = catalog.graph().vertex_count();
    // residual path: vertices[j] --edges[j]--> vertices[j + 1]
    let mut vertices = sig.modes.clone();
    let mut edges: Vec<usize> = (0..sig.edge_count()).collect();
    let mut instances = Vec::new();

    loop {
        let mut first_seen = vec![usize::MAX; k];
        let mut repeat = None;
        for (j, &v) in vertices.iter().enumerate() {
            if first_seen[v] != usize::MAX {
                repeat = Some((first_seen[v], j));
                break;
            }
            first_seen[v] = j;
        }
        let Some((i, j)) = repeat else { break };
        let loop_vertices = vertices[i..j].to_vec();
        let loop_edges: Vec<usize> = edges[i..j].to_vec();
        instances.push(make_instance(sig, catalog, loop_vertices, loop_edges));
        vertices.drain(i + 1..=j);
        edges.drain(i..j);
    }

    Ok(StandardDecomposition {
        instances,
        residual_edges: edges,
        residual_vertices: vertices,
    })
}

fn make_instance(
    sig: &SwitchingSignal,
    catalog: &LoopCatalog,
    vertices: Vec<usize>,
    edge_indices: Vec<usize>,
) -> LoopInstance {
    let loop_index = catalog
        .index_of(&vertices)
        .expect("a repeat-free closed walk on the graph is one of its simple loops");
    let total_time = edge_indices.iter().map(|&e| sig.durations[e]).sum();
    LoopInstance {
        loop_index,
        vertices,
        edge_indices,
        total_time,
    }
}

/// Incremental standard decomposition. Feeding the edges of a signal one
/// at a time yields the loop instances of every prefix: the instances of
/// `σ^(n)` are exactly those emitted after `n - 1` edges.
#[derive(Debug, Clone)]
pub struct Decomposer {
    vertices: Vec<usize>,
    edges: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl Decomposer {
    pub fn new(k: usize, start: usize) -> Self {
        let mut position = vec![None; k];
        position[start] = Some(0);
        Self {
            vertices: vec![start],
            edges: Vec::new(),
            position,
        }
    }

    /// Appends edge `edge_index` into `next`. Returns the vertices and edge
    /// indices of the loop it closes, if any.
    pub fn push(&mut self, edge_index: usize, next: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        self.edges.push(edge_index);
        match self.position[next] {
            Some(i) => {
                let loop_vertices = self.vertices.split_off(i);
                let loop_edges = self.edges.split_off(i);
                for &v in &loop_vertices {
                    self.position[v] = None;
                }
                self.position[next] = Some(i);
                self.vertices.push(next);
                Some((loop_vertices, loop_edges))
            }
            None => {
                self.position[next] = Some(self.vertices.len());
                self.vertices.push(next);
                None
            }
        }
    }

    pub fn residual_vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn residual_edges(&self) -> &[usize] {
        &self.edges
    }
}

/// Same result as [`standard_decomposition`] in linear time.
pub fn streaming_decomposition(
    sig: &SwitchingSignal,
    catalog: &LoopCatalog,
) -> Result<StandardDecomposition, SignalError> {
    require_admissible(sig, catalog.graph())?;
    let mut dec = Decomposer::new(catalog.graph().vertex_count(), sig.modes[0]);
    let mut instances = Vec::new();
    for n in 0..sig.edge_count() {
        if let Some((vertices, edges)) = dec.push(n, sig.modes[n + 1]) {
            instances.push(make_instance(sig, catalog, vertices, edges));
        }
    }
    Ok(StandardDecomposition {
        instances,
        residual_edges: dec.edges,
        residual_vertices: dec.vertices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalClassSpec {
    /// Every duration at least `tau`.
    Dwell { tau: f64 },
    /// Every extracted instance of loop `i` lasts at least `taus[i]`.
    SimpleLoopDwell { taus: Vec<f64> },
    /// Stable modes last at least `tau`, unstable modes at most `eta`.
    DwellFlee { tau: f64, eta: f64 },
    /// Per instance of loop `i`: stable time at least `taus[i]`, unstable
    /// time at most `etas[i]`.
    LoopwiseDwellFlee { taus: Vec<f64>, etas: Vec<f64> },
}

impl SignalClassSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dwell { .. } => "dwell",
            Self::SimpleLoopDwell { .. } => "simple-loop-dwell",
            Self::DwellFlee { .. } => "dwell-flee",
            Self::LoopwiseDwellFlee { .. } => "loopwise-dwell-flee",
        }
    }

    pub fn needs_partition(&self) -> bool {
        matches!(self, Self::DwellFlee { .. } | Self::LoopwiseDwellFlee { .. })
    }

    /// Checks positivity and, for loop classes, one parameter per loop.
    pub fn validate(&self, loops: usize) -> Result<(), SignalError> {
        let check = |name: String, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(SignalError::InvalidParameter { name, value })
            }
        };
        let check_len = |got: usize| {
            if got == loops {
                Ok(())
            } else {
                Err(SignalError::LoopCountMismatch { expected: loops, got })
            }
        };
        match self {
            Self::Dwell { tau } => check("tau".into(), *tau),
            Self::DwellFlee { tau, eta } => {
                check("tau".into(), *tau)?;
                check("eta".into(), *eta)
            }
            Self::SimpleLoopDwell { taus } => {
                check_len(taus.len())?;
                taus.iter()
                    .enumerate()
                    .try_for_each(|(i, &t)| check(format!("taus[{i}]"), t))
            }
            Self::LoopwiseDwellFlee { taus, etas } => {
                check_len(taus.len())?;
                check_len(etas.len())?;
                taus.iter()
                    .enumerate()
                    .try_for_each(|(i, &t)| check(format!("taus[{i}]"), t))?;
                etas.iter()
                    .enumerate()
                    .try_for_each(|(i, &e)| check(format!("etas[{i}]"), e))
            }
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Self::Dwell { tau } => *tau,
            Self::DwellFlee { tau, eta } => tau.max(*eta),
            Self::SimpleLoopDwell { taus } => taus.iter().copied().fold(1.0, f64::max),
            Self::LoopwiseDwellFlee { taus, etas } => taus.iter().chain(etas.iter()).copied().fold(1.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `d_n >= tau`
    MinDwell,
    /// `d_n <= eta`
    MaxFlee,
    /// instance time `>= tau_i`
    LoopDwell,
    /// stable time in an instance `>= tau_i`
    LoopStableTime,
    /// unstable time in an instance `<= eta_i`
    LoopUnstableTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSite {
    Position(usize),
    Instance { instance: usize, loop_index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    pub site: ConstraintSite,
    pub value: f64,
    pub bound: f64,
    /// Non-negative when satisfied.
    pub slack: f64,
}

impl ConstraintCheck {
    pub fn satisfied(&self) -> bool {
        self.slack >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub constraints: Vec<ConstraintCheck>,
}

impl Membership {
    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.constraints.iter().filter(|c| !c.satisfied())
    }

    pub fn min_slack(&self) -> Option<f64> {
        self.constraints.iter().map(|c| c.slack).reduce(f64::min)
    }
}

fn lower(kind: ConstraintKind, site: ConstraintSite, value: f64, bound: f64) -> ConstraintCheck {
    ConstraintCheck {
        kind,
        site,
        value,
        bound,
        slack: value - bound,
    }
}

fn upper(kind: ConstraintKind, site: ConstraintSite, value: f64, bound: f64) -> ConstraintCheck {
    ConstraintCheck {
        kind,
        site,
        value,
        bound,
        slack: bound - value,
    }
}

fn checked_partition<'a>(
    spec: &SignalClassSpec,
    part: Option<&'a SubgraphPartition>,
    k: usize,
) -> Result<Option<&'a SubgraphPartition>, SignalError> {
    match part {
        None if spec.needs_partition() => Err(SignalError::MissingPartition),
        Some(p) if p.vertex_count() != k => Err(SignalError::PartitionMismatch {
            expected: k,
            got: p.vertex_count(),
        }),
        other => Ok(other),
    }
}

/// Lists every constraint of the class with its slack. Loop constraints
/// are read off the full decomposition, whose instances contain those of
/// every prefix.
pub fn class_membership(
    sig: &SwitchingSignal,
    catalog: &LoopCatalog,
    spec: &SignalClassSpec,
    part: Option<&SubgraphPartition>,
) -> Result<Membership, SignalError> {
    spec.validate(catalog.len())?;
    let part = checked_partition(spec, part, catalog.graph().vertex_count())?;
    require_admissible(sig, catalog.graph())?;

    let mut constraints = Vec::new();
    match spec {
        SignalClassSpec::Dwell { tau } => {
            for (n, &d) in sig.durations.iter().enumerate() {
                constraints.push(lower(ConstraintKind::MinDwell, ConstraintSite::Position(n), d, *tau));
            }
        }
        SignalClassSpec::DwellFlee { tau, eta } => {
            let part = part.expect("checked above");
            for (n, &d) in sig.durations.iter().enumerate() {
                let site = ConstraintSite::Position(n);
                constraints.push(if part.is_stable(sig.modes[n]) {
                    lower(ConstraintKind::MinDwell, site, d, *tau)
                } else {
                    upper(ConstraintKind::MaxFlee, site, d, *eta)
                });
            }
        }
        SignalClassSpec::SimpleLoopDwell { taus } => {
            let dec = streaming_decomposition(sig, catalog)?;
            for (i, inst) in dec.instances.iter().enumerate() {
                let site = ConstraintSite::Instance {
                    instance: i,
                    loop_index: inst.loop_index,
                };
                constraints.push(lower(
                    ConstraintKind::LoopDwell,
                    site,
                    inst.total_time,
                    taus[inst.loop_index],
                ));
            }
        }
        SignalClassSpec::LoopwiseDwellFlee { taus, etas } => {
            let part = part.expect("checked above");
            let dec = streaming_decomposition(sig, catalog)?;
            for (i, inst) in dec.instances.iter().enumerate() {
                let site = ConstraintSite::Instance {
                    instance: i,
                    loop_index: inst.loop_index,
                };
                let (stable, unstable) = inst.split_time(sig, part);
                let vertices = catalog.loops()[inst.loop_index].vertices();
                if vertices.iter().any(|&v| part.is_stable(v)) {
                    constraints.push(lower(
                        ConstraintKind::LoopStableTime,
                        site,
                        stable,
                        taus[inst.loop_index],
                    ));
                }
                if vertices.iter().any(|&v| !part.is_stable(v)) {
                    constraints.push(upper(
                        ConstraintKind::LoopUnstableTime,
                        site,
                        unstable,
                        etas[inst.loop_index],
                    ));
                }
            }
        }
    }
    let member = constraints.iter().all(ConstraintCheck::satisfied);
    Ok(Membership { member, constraints })
}

// Keeps repaired values strictly inside their bounds despite rounding.
const REPAIR_MARGIN: f64 = 1e-9;

/// Seeded random member of a signal class: a uniform random walk with
/// random durations, repaired until every constraint holds.
pub fn synthesize_signal(
    catalog: &LoopCatalog,
    spec: &SignalClassSpec,
    length: usize,
    seed: u64,
    part: Option<&SubgraphPartition>,
) -> Result<SwitchingSignal, SignalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_with_rng(catalog, spec, length, &mut rng, part)
}

/// As [`synthesize_signal`], drawing from a caller-owned generator.
pub fn synthesize_with_rng<R: Rng>(
    catalog: &LoopCatalog,
    spec: &SignalClassSpec,
    length: usize,
    rng: &mut R,
    part: Option<&SubgraphPartition>,
) -> Result<SwitchingSignal, SignalError> {
    let failure = |reason: String| SignalError::SynthesisFailure { reason };
    if length == 0 {
        return Err(SignalError::Empty);
    }
    spec.validate(catalog.len())?;
    let g = catalog.graph();
    let part = checked_partition(spec, part, g.vertex_count())?;

    let starts: Vec<usize> = (0..g.vertex_count()).filter(|&v| g.out_degree(v) > 0).collect();
    if starts.is_empty() && length > 1 {
        return Err(failure("graph has no edges".into()));
    }
    let mut modes = Vec::with_capacity(length);
    let mut current = if starts.is_empty() {
        0
    } else {
        starts[rng.random_range(0..starts.len())]
    };
    modes.push(current);
    for _ in 1..length {
        let next = g.successors(current);
        if next.is_empty() {
            return Err(failure(format!(
                "walk reached vertex {}, which has no outgoing edge",
                current + 1
            )));
        }
        current = next[rng.random_range(0..next.len())];
        modes.push(current);
    }

    let scale = spec.scale();
    let mut durations: Vec<f64> = (0..length).map(|_| rng.random_range(0.1..1.0) * scale).collect();

    match spec {
        SignalClassSpec::Dwell { tau } => {
            for d in durations.iter_mut() {
                *d = d.max(*tau);
            }
        }
        SignalClassSpec::DwellFlee { tau, eta } => {
            let part = part.expect("checked above");
            for (d, &m) in durations.iter_mut().zip(&modes) {
                *d = if part.is_stable(m) { d.max(*tau) } else { d.min(*eta) };
            }
        }
        SignalClassSpec::SimpleLoopDwell { taus } => {
            let sig = SwitchingSignal::new(modes.clone(), durations.clone())?;
            for inst in streaming_decomposition(&sig, catalog)?.instances {
                let need = taus[inst.loop_index];
                if inst.total_time < need {
                    let factor = need / inst.total_time * (1.0 + REPAIR_MARGIN);
                    for &e in &inst.edge_indices {
                        durations[e] *= factor;
                    }
                }
            }
        }
        SignalClassSpec::LoopwiseDwellFlee { taus, etas } => {
            let part = part.expect("checked above");
            let sig = SwitchingSignal::new(modes.clone(), durations.clone())?;
            for inst in streaming_decomposition(&sig, catalog)?.instances {
                let (stable, unstable) = inst.split_time(&sig, part);
                let (tau, eta) = (taus[inst.loop_index], etas[inst.loop_index]);
                let up = if stable < tau && stable > 0.0 {
                    tau / stable * (1.0 + REPAIR_MARGIN)
                } else {
                    1.0
                };
                let down = if unstable > eta {
                    eta / unstable * (1.0 - REPAIR_MARGIN)
                } else {
                    1.0
                };
                for &e in &inst.edge_indices {
                    durations[e] *= if part.is_stable(modes[e]) { up } else { down };
                }
            }
        }
    }

    let sig = SwitchingSignal::new(modes, durations)?;
    let membership = class_membership(&sig, catalog, spec, part)?;
    if let Some(v) = membership.violations().next() {
        return Err(failure(format!(
            "repair left a {:?} constraint violated by {}",
            v.kind, -v.slack
        )));
    }
    Ok(sig)
}

/// Number of stable and unstable modes among the first `n`.
pub fn switch_counters(
    sig: &SwitchingSignal,
    part: &SubgraphPartition,
    n: usize,
) -> Result<(usize, usize), SignalError> {
    if n > sig.len() {
        return Err(SignalError::PrefixTooLong { n, len: sig.len() });
    }
    let stable = sig.modes[..n].iter().filter(|&&m| part.is_stable(m)).count();
    Ok((stable, n - stable))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_vertex() -> LoopCatalog {
        LoopCatalog::new(Digraph::from_edges(4, [(1, 0), (0, 2), (2, 0), (0, 3), (3, 2), (2, 1)]).unwrap())
    }

    fn sigma13() -> SwitchingSignal {
        let modes = vec![1, 0, 2, 0, 3, 2, 1, 0, 3, 2, 0, 3, 2];
        let durations = (1..=13).map(f64::from).collect();
        SwitchingSignal::new(modes, durations).unwrap()
    }

    #[test]
    fn signal_validation() {
        assert_eq!(SwitchingSignal::new(vec![], vec![]), Err(SignalError::Empty));
        assert!(matches!(
            SwitchingSignal::new(vec![0, 1], vec![1.0]),
            Err(SignalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            SwitchingSignal::new(vec![0, 1], vec![1.0, 0.0]),
            Err(SignalError::NonPositiveDuration { index: 1, .. })
        ));
        let s = SwitchingSignal::new(vec![0, 1, 0], vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(s.switch_times(), vec![0.0, 0.5, 1.5, 3.5]);
        assert_eq!(s.edge(1), (1, 0));
    }

    #[test]
    fn admissibility() {
        let g = four_vertex();
        assert!(check_admissible(&sigma13(), g.graph()).admissible);
        let s = SwitchingSignal::new(vec![0, 0], vec![1.0, 1.0]).unwrap();
        assert_eq!(check_admissible(&s, g.graph()).first_violation, Some(0));
        let ring = Digraph::ring(3).unwrap();
        let s = SwitchingSignal::new(vec![0, 1, 2, 0, 1], vec![1.0; 5]).unwrap();
        assert!(check_admissible(&s, &ring).admissible);
    }

    #[test]
    fn table_one() {
        let cat = four_vertex();
        let dec = standard_decomposition(&sigma13(), &cat).unwrap();
        let edges: Vec<Vec<usize>> = dec.instances.iter().map(|i| i.edge_indices.clone()).collect();
        assert_eq!(edges, vec![vec![1, 2], vec![0, 3, 4, 5], vec![7, 8, 9]]);
        let loops: Vec<&[usize]> = dec
            .instances
            .iter()
            .map(|i| cat.loops()[i.loop_index].vertices())
            .collect();
        assert_eq!(loops, vec![&[0, 2][..], &[0, 3, 2, 1][..], &[0, 3, 2][..]]);
        assert_eq!(dec.residual_edges, vec![6, 10, 11]);
        assert_eq!(dec.residual_vertices, vec![1, 0, 3, 2]);
        // d2+d3, d1+d4+d5+d6, d8+d9+d10 in one-based durations
        let times: Vec<f64> = dec.instances.iter().map(|i| i.total_time).collect();
        assert_eq!(times, vec![5.0, 16.0, 27.0]);
        assert_eq!(streaming_decomposition(&sigma13(), &cat).unwrap(), dec);
    }

    #[test]
    fn repeated_two_loop() {
        let cat = four_vertex();
        let s = SwitchingSignal::new(vec![0, 2, 0, 2, 0], vec![1.0; 5]).unwrap();
        let dec = standard_decomposition(&s, &cat).unwrap();
        assert_eq!(dec.instances.len(), 2);
        assert!(dec.instances.iter().all(|i| i.loop_index == 0));
        assert!(dec.residual_edges.is_empty());
        assert_eq!(dec.residual_vertices, vec![0]);
    }

    #[test]
    fn distinct_path_has_no_loops() {
        let cat = four_vertex();
        let s = SwitchingSignal::new(vec![1, 0, 3, 2], vec![1.0; 4]).unwrap();
        let dec = standard_decomposition(&s, &cat).unwrap();
        assert!(dec.instances.is_empty());
        assert_eq!(dec.residual_edges, vec![0, 1, 2]);
    }

    #[test]
    fn inadmissible_is_rejected() {
        let cat = four_vertex();
        let s = SwitchingSignal::new(vec![0, 1], vec![1.0; 2]).unwrap();
        assert_eq!(
            standard_decomposition(&s, &cat),
            Err(SignalError::Inadmissible {
                step: 0,
                from: 0,
                to: 1
            })
        );
    }

    #[test]
    fn loop_dwell_membership() {
        let cat = four_vertex();
        // loop order: [0,2], [0,2,1], [0,3,2], [0,3,2,1]
        let spec = SignalClassSpec::SimpleLoopDwell {
            taus: vec![5.0, 1.0, 27.0, 16.0],
        };
        let m = class_membership(&sigma13(), &cat, &spec, None).unwrap();
        assert!(m.member);
        assert_eq!(m.constraints.len(), 3);
        assert_eq!(m.min_slack(), Some(0.0));
        let spec = SignalClassSpec::SimpleLoopDwell {
            taus: vec![5.5, 1.0, 27.0, 16.0],
        };
        let m = class_membership(&sigma13(), &cat, &spec, None).unwrap();
        assert!(!m.member);
        let v: Vec<_> = m.violations().collect();
        assert_eq!(v.len(), 1);
        assert_eq!(
            v[0].site,
            ConstraintSite::Instance {
                instance: 0,
                loop_index: 0
            }
        );
        assert_eq!(v[0].slack, -0.5);
    }

    #[test]
    fn loopwise_dwell_flee_membership() {
        let cat = four_vertex();
        let part = SubgraphPartition::from_mask(vec![true, true, false, false]);
        let spec = SignalClassSpec::LoopwiseDwellFlee {
            taus: vec![2.0, 1.0, 8.0, 1.0],
            etas: vec![3.0, 100.0, 19.0, 100.0],
        };
        let m = class_membership(&sigma13(), &cat, &spec, Some(&part)).unwrap();
        assert!(m.member);
        let by_site = |loop_index: usize, kind: ConstraintKind| {
            m.constraints
                .iter()
                .find(|c| {
                    c.kind == kind
                        && matches!(c.site, ConstraintSite::Instance { loop_index: l, .. } if l == loop_index)
                })
                .map(|c| c.value)
        };
        // one-based: d2 >= tau, d3 <= eta on the two-loop
        assert_eq!(by_site(0, ConstraintKind::LoopStableTime), Some(2.0));
        assert_eq!(by_site(0, ConstraintKind::LoopUnstableTime), Some(3.0));
        // d8 stable, d9 + d10 unstable on the loop through 1, 4, 3
        assert_eq!(by_site(2, ConstraintKind::LoopStableTime), Some(8.0));
        assert_eq!(by_site(2, ConstraintKind::LoopUnstableTime), Some(19.0));
        assert_eq!(
            class_membership(&sigma13(), &cat, &spec, None),
            Err(SignalError::MissingPartition)
        );
    }

    #[test]
    fn constant_dwell_has_zero_slack() {
        let ring = LoopCatalog::new(Digraph::ring(2).unwrap());
        let s = SwitchingSignal::new(vec![0, 1, 0, 1], vec![0.7; 4]).unwrap();
        let m = class_membership(&s, &ring, &SignalClassSpec::Dwell { tau: 0.7 }, None).unwrap();
        assert!(m.member);
        assert_eq!(m.min_slack(), Some(0.0));
    }

    #[test]
    fn parameters_are_validated() {
        assert!(SignalClassSpec::Dwell { tau: 0.0 }.validate(0).is_err());
        assert!(
            SignalClassSpec::DwellFlee {
                tau: 1.0,
                eta: f64::NAN
            }
            .validate(0)
            .is_err()
        );
        assert_eq!(
            SignalClassSpec::SimpleLoopDwell { taus: vec![1.0] }.validate(2),
            Err(SignalError::LoopCountMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn synthesis() {
        let ring = LoopCatalog::new(Digraph::ring(2).unwrap());
        let s = synthesize_signal(&ring, &SignalClassSpec::Dwell { tau: 1.0 }, 6, 3, None).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.modes().windows(2).all(|w| w[0] != w[1]));
        assert!(s.durations().iter().all(|&d| d >= 1.0));

        let cat = four_vertex();
        let spec = SignalClassSpec::SimpleLoopDwell {
            taus: vec![2.5, 3.0, 2.0, 4.0],
        };
        let a = synthesize_signal(&cat, &spec, 50, 11, None).unwrap();
        let b = synthesize_signal(&cat, &spec, 50, 11, None).unwrap();
        assert_eq!(a, b);
        assert!(class_membership(&a, &cat, &spec, None).unwrap().member);

        let part = SubgraphPartition::from_mask(vec![true, true, false, false]);
        let spec = SignalClassSpec::LoopwiseDwellFlee {
            taus: vec![2.0; 4],
            etas: vec![0.3; 4],
        };
        let s = synthesize_signal(&cat, &spec, 80, 5, Some(&part)).unwrap();
        assert!(class_membership(&s, &cat, &spec, Some(&part)).unwrap().member);
    }

    #[test]
    fn synthesis_fails_at_sinks() {
        let g = Digraph::from_edges(2, [(0, 1)]).unwrap();
        let cat = LoopCatalog::new(g);
        let err = synthesize_signal(&cat, &SignalClassSpec::Dwell { tau: 1.0 }, 5, 0, None);
        assert!(matches!(err, Err(SignalError::SynthesisFailure { .. })));
    }

    #[test]
    fn counters() {
        let part = SubgraphPartition::from_mask(vec![true, true, false, false]);
        assert_eq!(switch_counters(&sigma13(), &part, 13), Ok((6, 7)));
        let ring = SwitchingSignal::new(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], vec![1.0; 10]).unwrap();
        let part = SubgraphPartition::from_mask(vec![true, false]);
        assert_eq!(switch_counters(&ring, &part, 10), Ok((5, 5)));
        assert_eq!(switch_counters(&ring, &SubgraphPartition::all_stable(2), 4), Ok((4, 0)));
        assert!(switch_counters(&ring, &part, 11).is_err());
    }
}
