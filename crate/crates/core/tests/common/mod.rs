//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use loopdwell::digraph::Digraph;
use loopdwell::signal::SwitchingSignal;
use loopdwell::spectral::{CMatrix, SpectralTolerances, SubsystemEnsemble};
use nalgebra::DMatrix;
use rand::Rng;

pub const STABLE_RATES: (f64, f64) = (0.3, 3.0);
pub const UNSTABLE_RATES: (f64, f64) = (0.2, 1.5);

/// Well-conditioned change of basis `I + 0.5 R`, `R` uniform in [-1, 1].
pub fn random_basis<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    loop {
        let s = DMatrix::<f64>::identity(n, n) + DMatrix::from_fn(n, n, |_, _| 0.5 * rng.random_range(-1.0..1.0));
        if s.clone().try_inverse().is_some() && s.determinant().abs() > 0.2 {
            return s;
        }
    }
}

/// Real block-diagonal matrix with eigenvalue real parts on the requested
/// side of the imaginary axis: scalar blocks and, when `complex` and room
/// remains, rotation blocks `[[a, b], [-b, a]]`.
pub fn random_real_form<R: Rng>(rng: &mut R, n: usize, stable: bool, complex: bool) -> DMatrix<f64> {
    let (lo, hi) = if stable { STABLE_RATES } else { UNSTABLE_RATES };
    let sign = if stable { -1.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let a = sign * rng.random_range(lo..hi);
        if complex && i + 1 < n && rng.random_bool(0.5) {
            let b = rng.random_range(0.2..2.0);
            d[(i, i)] = a;
            d[(i + 1, i + 1)] = a;
            d[(i, i + 1)] = b;
            d[(i + 1, i)] = -b;
            i += 2;
        } else {
            d[(i, i)] = a;
            i += 1;
        }
    }
    d
}

/// `S D S^{-1}`: diagonalizable with distinct eigenvalues almost surely.
pub fn random_diagonalizable<R: Rng>(rng: &mut R, n: usize, stable: bool) -> DMatrix<f64> {
    let d = random_real_form(rng, n, stable, true);
    let s = random_basis(rng, n);
    let s_inv = s.clone().try_inverse().expect("checked invertible");
    &s * d * s_inv
}

pub fn random_diagonal<R: Rng>(rng: &mut R, n: usize, stable: bool) -> DMatrix<f64> {
    random_real_form(rng, n, stable, false)
}

/// Ring `0 -> 1 -> ... -> k-1 -> 0` plus each other ordered pair with
/// probability `p`. No self-loops, except the single vertex of a
/// one-vertex ring.
pub fn ring_backbone<R: Rng>(rng: &mut R, k: usize, p: f64) -> Digraph {
    if k == 1 {
        return Digraph::ring(1).expect("valid ring");
    }
    let mut edges = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            if b == (a + 1) % k || rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Digraph::from_edges(k, edges).expect("valid edges")
}

/// Every ordered pair, self-loops included, with probability `p`.
pub fn random_edges<R: Rng>(rng: &mut R, k: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Random walk on `g` from a random vertex. Panics on a vertex without
/// successors.
pub fn random_walk<R: Rng>(rng: &mut R, g: &Digraph, len: usize) -> Vec<usize> {
    let mut v = rng.random_range(0..g.vertex_count());
    let mut modes = vec![v];
    while modes.len() < len {
        let next = g.successors(v);
        v = next[rng.random_range(0..next.len())];
        modes.push(v);
    }
    modes
}

pub fn random_signal<R: Rng>(rng: &mut R, g: &Digraph, len: usize, durations: (f64, f64)) -> SwitchingSignal {
    let modes = random_walk(rng, g, len);
    let d = (0..len).map(|_| rng.random_range(durations.0..durations.1)).collect();
    SwitchingSignal::new(modes, d).expect("valid signal")
}

/// Simple loops by exhaustive search over vertex sequences, each rotated
/// to start at its smallest vertex.
pub fn brute_force_loops(k: usize, edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    let has = |a: usize, b: usize| edges.contains(&(a, b));
    let mut found = BTreeSet::new();
    let mut path = Vec::new();
    fn extend(k: usize, path: &mut Vec<usize>, has: &dyn Fn(usize, usize) -> bool, found: &mut BTreeSet<Vec<usize>>) {
        let first = path[0];
        let last = *path.last().unwrap();
        if has(last, first) {
            found.insert(path.clone());
        }
        for v in first + 1..k {
            if !path.contains(&v) && has(last, v) {
                path.push(v);
                extend(k, path, has, found);
                path.pop();
            }
        }
    }
    for start in 0..k {
        path.push(start);
        extend(k, &mut path, &has, &mut found);
        path.pop();
    }
    found
}

/// `Σ_{r=1..k} trace(A^r)` by plain integer matrix powers.
pub fn trace_bound(k: usize, edges: &[(usize, usize)]) -> u128 {
    let mut a = vec![vec![0u128; k]; k];
    for &(x, y) in edges {
        a[x][y] = 1;
    }
    let mut power = a.clone();
    let mut total = 0;
    for _ in 0..k {
        total += (0..k).map(|i| power[i][i]).sum::<u128>();
        let mut next = vec![vec![0u128; k]; k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = (0..k).map(|l| power[i][l] * a[l][j]).sum();
            }
        }
        power = next;
    }
    total
}

/// `||M||_2` from the largest eigenvalue of `MᵀM`.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

pub fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// `||M||_2` of a complex matrix from the largest eigenvalue of `MᴴM`.
pub fn norm2_complex(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// One random diagonalizable matrix per mask entry, stable where `true`.
pub fn random_ensemble<R: Rng>(rng: &mut R, mask: &[bool], n: usize) -> SubsystemEnsemble {
    let mats: Vec<_> = mask.iter().map(|&s| random_diagonalizable(rng, n, s)).collect();
    SubsystemEnsemble::new(&mats, &SpectralTolerances::default()).expect("well-conditioned ensemble")
}

/// Random digraph whose edges out of unstable vertices never go from an
/// unstable vertex to a lower-numbered unstable one, so the unstable
/// subgraph is acyclic. Every vertex gets an outgoing edge when some
/// stable vertex exists.
pub fn acyclic_unstable_graph<R: Rng>(rng: &mut R, mask: &[bool], p: f64) -> Digraph {
    let k = mask.len();
    let stable: Vec<usize> = (0..k).filter(|&v| mask[v]).collect();
    let mut edges = BTreeSet::new();
    for a in 0..k {
        for b in 0..k {
            if a == b || (!mask[a] && !mask[b] && b < a) {
                continue;
            }
            if rng.random_bool(p) {
                edges.insert((a, b));
            }
        }
        if !edges.iter().any(|&(x, _)| x == a) {
            let choices: Vec<usize> = stable.iter().copied().filter(|&s| s != a).collect();
            if !choices.is_empty() {
                edges.insert((a, choices[rng.random_range(0..choices.len())]));
            }
        }
    }
    Digraph::from_edges(k, edges).expect("valid edges")
}
