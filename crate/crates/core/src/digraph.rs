//! Directed graphs that constrain which subsystem may follow which.
//!
//! Vertices are zero-based indices `0..k`. At most one edge exists per
//! ordered pair; self-loops are allowed.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("a graph needs at least one vertex")]
    Empty,
    #[error("edge ({}, {}) references a vertex outside 1..={k}", .from + 1, .to + 1)]
    VertexOutOfRange { from: usize, to: usize, k: usize },
    #[error("duplicate edge ({}, {})", .from + 1, .to + 1)]
    DuplicateEdge { from: usize, to: usize },
    #[error("graph contains a loop through vertex {}", .vertex + 1)]
    CyclicGraph { vertex: usize },
    #[error("partition mask has {got} entries, graph has {k} vertices")]
    PartitionSize { got: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    k: usize,
    edges: BTreeSet<(usize, usize)>,
    successors: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn from_edges<I>(k: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if k == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (from, to) in edges {
            if from >= k || to >= k {
                return Err(GraphError::VertexOutOfRange { from, to, k });
            }
            if !set.insert((from, to)) {
                return Err(GraphError::DuplicateEdge { from, to });
            }
        }
        let mut successors = vec![Vec::new(); k];
        for &(from, to) in &set {
            successors[from].push(to);
        }
        Ok(Self {
            k,
            edges: set,
            successors,
        })
    }

    /// Unidirectional ring `0 -> 1 -> ... -> k-1 -> 0`.
    pub fn ring(k: usize) -> Result<Self, GraphError> {
        Self::from_edges(k, (0..k).map(|i| (i, (i + 1) % k)))
    }

    pub fn vertex_count(&self) -> usize {
        self.k
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.successors[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.successors[v].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(_, to)| to == v).count()
    }

    /// `k x k` 0/1 matrix, entry `[i][j] = 1` iff `(i, j)` is an edge.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.k]; self.k];
        for &(i, j) in &self.edges {
            a[i][j] = 1;
        }
        a
    }

    /// `sum_{r=1..k} trace(A^r)`, an upper bound on the number of simple loops.
    pub fn loop_count_bound(&self) -> u128 {
        let k = self.k;
        let a: Vec<Vec<u128>> = self
            .adjacency_matrix()
            .into_iter()
            .map(|row| row.into_iter().map(u128::from).collect())
            .collect();
        let mut power = a.clone();
        let mut total: u128 = 0;
        for r in 1..=k {
            total = total.saturating_add((0..k).map(|i| power[i][i]).fold(0, u128::saturating_add));
            if r == k {
                break;
            }
            let mut next = vec![vec![0u128; k]; k];
            for i in 0..k {
                for l in 0..k {
                    if power[i][l] == 0 {
                        continue;
                    }
                    for j in 0..k {
                        next[i][j] = next[i][j].saturating_add(power[i][l].saturating_mul(a[l][j]));
                    }
                }
            }
            power = next;
        }
        total
    }

    /// Vertices reachable from `start` by a path of length at least one.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.k];
        let mut queue: VecDeque<usize> = self.successors[start].iter().copied().collect();
        for &v in &self.successors[start] {
            seen[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.successors[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// True iff a directed path of length >= 1 leads from `from` to `to`.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.reachable_from(from)[to]
    }

    pub fn is_strongly_connected(&self) -> bool {
        (0..self.k).all(|i| {
            let reach = self.reachable_from(i);
            (0..self.k).all(|j| i == j || reach[j])
        })
    }

    pub fn has_loop(&self) -> bool {
        self.topological_sort().is_err()
    }

    /// Kahn's algorithm; every edge's source precedes its target. Ties are
    /// broken by smallest vertex index so the output is deterministic.
    pub fn topological_sort(&self) -> Result<Vec<usize>, GraphError> {
        let mut indegree = vec![0usize; self.k];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..self.k).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(self.k);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in &self.successors[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(Reverse(w));
                }
            }
        }
        if order.len() == self.k {
            Ok(order)
        } else {
            let vertex = (0..self.k).find(|&v| indegree[v] > 0).unwrap_or(0);
            Err(GraphError::CyclicGraph { vertex })
        }
    }

    /// Single directed cycle through every vertex, each with in- and
    /// out-degree one.
    pub fn is_unidirectional_ring(&self) -> bool {
        if (0..self.k).any(|v| self.out_degree(v) != 1 || self.in_degree(v) != 1) {
            return false;
        }
        let mut v = 0;
        for step in 1..=self.k {
            v = self.successors[v][0];
            if v == 0 {
                return step == self.k;
            }
        }
        false
    }

    /// Every simple loop exactly once, see [`SimpleLoop`] for the canonical
    /// form. Sorted by length, then lexicographically.
    pub fn enumerate_simple_loops(&self) -> Vec<SimpleLoop> {
        let mut loops = Vec::new();
        let mut on_path = vec![false; self.k];
        let mut path = Vec::with_capacity(self.k);
        for start in 0..self.k {
            path.push(start);
            on_path[start] = true;
            self.extend_loops(start, start, &mut path, &mut on_path, &mut loops);
            on_path[start] = false;
            path.pop();
        }
        loops.sort_by(|a: &SimpleLoop, b: &SimpleLoop| a.len().cmp(&b.len()).then_with(|| a.vertices.cmp(&b.vertices)));
        loops
    }

    // Backtracking restricted to vertices larger than `start`, so each loop
    // is found once, rooted at its minimum vertex.
    fn extend_loops(
        &self,
        start: usize,
        current: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<SimpleLoop>,
    ) {
        for &next in &self.successors[current] {
            if next == start {
                out.push(SimpleLoop { vertices: path.clone() });
            } else if next > start && !on_path[next] {
                path.push(next);
                on_path[next] = true;
                self.extend_loops(start, next, path, on_path, out);
                on_path[next] = false;
                path.pop();
            }
        }
    }
}

/// A closed path with distinct vertices, stored rotated so that the
/// smallest vertex comes first. The closing edge back to the first vertex
/// is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimpleLoop {
    vertices: Vec<usize>,
}

impl SimpleLoop {
    /// Builds the canonical rotation of a cyclic vertex sequence. Returns
    /// `None` if the sequence is empty or repeats a vertex.
    pub fn from_cycle(cycle: &[usize]) -> Option<Self> {
        if cycle.is_empty() {
            return None;
        }
        let distinct: BTreeSet<_> = cycle.iter().collect();
        if distinct.len() != cycle.len() {
            return None;
        }
        let pivot = cycle.iter().enumerate().min_by_key(|&(_, v)| *v).map(|(i, _)| i)?;
        let mut vertices = cycle[pivot..].to_vec();
        vertices.extend_from_slice(&cycle[..pivot]);
        Some(Self { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Number of edges, equal to the number of vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Traversed edges, including the closing one.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn is_loop_of(&self, g: &Digraph) -> bool {
        self.edges().all(|(a, b)| g.has_edge(a, b))
    }
}

/// The simple loops of one graph, indexed in enumeration order.
#[derive(Debug, Clone)]
pub struct LoopCatalog {
    graph: Digraph,
    loops: Vec<SimpleLoop>,
    index: HashMap<Vec<usize>, usize>,
}

impl LoopCatalog {
    pub fn new(graph: Digraph) -> Self {
        let loops = graph.enumerate_simple_loops();
        let index = loops.iter().enumerate().map(|(i, l)| (l.vertices.clone(), i)).collect();
        Self { graph, loops, index }
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn loops(&self) -> &[SimpleLoop] {
        &self.loops
    }

    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    /// Index of the simple loop traversing `cycle` (any rotation).
    pub fn index_of(&self, cycle: &[usize]) -> Option<usize> {
        let canonical = SimpleLoop::from_cycle(cycle)?;
        self.index.get(&canonical.vertices).copied()
    }
}

/// Split of the vertices into stable and unstable subsystems. The stable
/// subgraph holds the edges leaving stable vertices, the unstable subgraph
/// the edges leaving unstable ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphPartition {
    stable: Vec<bool>,
}

impl SubgraphPartition {
    pub fn from_mask(stable: Vec<bool>) -> Self {
        Self { stable }
    }

    /// Vertices `0..r` stable, the rest unstable.
    pub fn from_stable_prefix(r: usize, k: usize) -> Self {
        Self {
            stable: (0..k).map(|v| v < r).collect(),
        }
    }

    pub fn all_stable(k: usize) -> Self {
        Self { stable: vec![true; k] }
    }

    pub fn vertex_count(&self) -> usize {
        self.stable.len()
    }

    pub fn is_stable(&self, v: usize) -> bool {
        self.stable[v]
    }

    pub fn mask(&self) -> &[bool] {
        &self.stable
    }

    pub fn stable_vertices(&self) -> Vec<usize> {
        (0..self.stable.len()).filter(|&v| self.stable[v]).collect()
    }

    pub fn unstable_vertices(&self) -> Vec<usize> {
        (0..self.stable.len()).filter(|&v| !self.stable[v]).collect()
    }

    /// `r` when the stable vertices are exactly `0..r`.
    pub fn stable_index_bound(&self) -> Option<usize> {
        let r = self.stable.iter().take_while(|&&s| s).count();
        self.stable[r..].iter().all(|&s| !s).then_some(r)
    }

    fn check(&self, g: &Digraph) -> Result<(), GraphError> {
        if self.stable.len() == g.vertex_count() {
            Ok(())
        } else {
            Err(GraphError::PartitionSize {
                got: self.stable.len(),
                k: g.vertex_count(),
            })
        }
    }

    pub fn stable_subgraph(&self, g: &Digraph) -> Result<Digraph, GraphError> {
        self.check(g)?;
        Digraph::from_edges(g.k, g.edges().filter(|&(a, _)| self.stable[a]))
    }

    pub fn unstable_subgraph(&self, g: &Digraph) -> Result<Digraph, GraphError> {
        self.check(g)?;
        Digraph::from_edges(g.k, g.edges().filter(|&(a, _)| !self.stable[a]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisCheck {
    pub passed: bool,
    /// False when the check is vacuous for this partition, e.g. reachability
    /// of unstable vertices in an all-stable system.
    pub applicable: bool,
    /// Offending vertices.
    pub witnesses: Vec<usize>,
}

impl HypothesisCheck {
    fn from_witnesses(witnesses: Vec<usize>) -> Self {
        Self {
            passed: witnesses.is_empty(),
            applicable: true,
            witnesses,
        }
    }

    fn vacuous() -> Self {
        Self {
            passed: true,
            applicable: false,
            witnesses: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisReport {
    pub has_loop: HypothesisCheck,
    pub nonzero_outdegree: HypothesisCheck,
    pub unstable_reach_stable: HypothesisCheck,
    pub stable_reach_unstable: HypothesisCheck,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.has_loop.passed
            && self.nonzero_outdegree.passed
            && self.unstable_reach_stable.passed
            && self.stable_reach_unstable.passed
    }
}

pub fn validate_hypotheses(g: &Digraph, part: &SubgraphPartition) -> Result<HypothesisReport, GraphError> {
    part.check(g)?;
    let k = g.vertex_count();
    let has_loop = HypothesisCheck {
        passed: g.has_loop(),
        applicable: true,
        witnesses: Vec::new(),
    };
    let sinks = (0..k).filter(|&v| g.out_degree(v) == 0).collect();
    let stable = part.stable_vertices();
    let unstable = part.unstable_vertices();
    let mixed = !stable.is_empty() && !unstable.is_empty();
    let reaches_any = |v: usize, targets: &[usize]| {
        let reach = g.reachable_from(v);
        targets.iter().any(|&t| reach[t])
    };
    let unstable_reach_stable = if mixed {
        HypothesisCheck::from_witnesses(unstable.iter().copied().filter(|&v| !reaches_any(v, &stable)).collect())
    } else if stable.is_empty() {
        HypothesisCheck::from_witnesses(unstable.clone())
    } else {
        HypothesisCheck::vacuous()
    };
    let stable_reach_unstable = if mixed {
        HypothesisCheck::from_witnesses(stable.iter().copied().filter(|&v| !reaches_any(v, &unstable)).collect())
    } else {
        HypothesisCheck::vacuous()
    };
    Ok(HypothesisReport {
        has_loop,
        nonzero_outdegree: HypothesisCheck::from_witnesses(sinks),
        unstable_reach_stable,
        stable_reach_unstable,
    })
}
