//! Per-subsystem spectral data.
//!
//! Every subsystem matrix `A` is factored as `A = P D P^{-1}` with complex
//! diagonal `D` and unit-norm eigenvector columns in `P`. Eigenvalues that
//! share a cluster get an orthonormal basis of their eigenspace, so the
//! transition costs `ln ||P_s^{-1} P_r||` do not depend on which unit
//! eigenvectors the solver happened to return.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::digraph::{Digraph, SubgraphPartition};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NonSquareInput { rows: usize, cols: usize },
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("eigenvalue {re}{im:+}i lies on the imaginary axis")]
    ImaginaryAxisEigenvalue { re: f64, im: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigenvalueFailure,
    #[error("subsystem {} is not diagonalizable and has no eigenvector override", .vertex + 1)]
    DefectiveEndpoint { vertex: usize },
    #[error("subsystem {} is {got}x{got}, expected {expected}x{expected}", .index + 1)]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("subsystem {}: {source}", .index + 1)]
    Subsystem {
        index: usize,
        #[source]
        source: Box<SpectralError>,
    },
    #[error("eigenvector override is singular or has the wrong shape")]
    InvalidOverride,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralTolerances {
    /// Eigenvalues with `|Re| < imaginary_axis * ||A||` are rejected.
    pub imaginary_axis: f64,
    /// Eigenvector matrices with a larger condition number count as defective.
    pub defective_condition: f64,
    /// `lambda* = max Re + defective_margin` for defective matrices.
    pub defective_margin: f64,
    /// Relative distance under which eigenvalues share an eigenspace.
    pub eigenvalue_cluster: f64,
    /// Relative commutator size treated as zero.
    pub commute: f64,
}

impl Default for SpectralTolerances {
    fn default() -> Self {
        Self {
            imaginary_axis: 1e-9,
            defective_condition: 1e8,
            defective_margin: 1e-2,
            eigenvalue_cluster: 1e-6,
            commute: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

/// `||e^{At}|| <= beta e^{lambda_star t}` for a non-diagonalizable `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectBound {
    pub lambda_star: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    vectors: CMatrix,
    inverse: CMatrix,
}

impl Eigenbasis {
    pub fn new(vectors: CMatrix) -> Option<Self> {
        if !vectors.is_square() || vectors.nrows() == 0 {
            return None;
        }
        let inverse = vectors.clone().try_inverse()?;
        if inverse.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        Some(Self { vectors, inverse })
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vectors: self.vectors.map(|z| z * factor),
            inverse: self.inverse.map(|z| z / factor),
        }
    }
}

/// `||P_to^{-1} P_from||`, the growth factor of a switch `from -> to`.
pub fn switch_factor(from: &Eigenbasis, to: &Eigenbasis) -> f64 {
    spectral_norm(&(to.inverse() * from.vectors()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemSpectrum {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<Complex64>,
    max_real: f64,
    stability: Stability,
    basis: Option<Eigenbasis>,
    defect: Option<DefectBound>,
    eigenvector_condition: f64,
    rate_override: Option<f64>,
    overridden: bool,
}

impl SubsystemSpectrum {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Diagonal of `D`, matching the columns of `P` when diagonalizable.
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn max_real(&self) -> f64 {
        self.max_real
    }

    pub fn stability(&self) -> Stability {
        self.stability
    }

    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    /// `lambda = -max Re` for stable matrices, `mu = max Re` for unstable
    /// ones. Always positive.
    pub fn rate(&self) -> f64 {
        self.rate_override.unwrap_or(self.max_real.abs())
    }

    pub fn decay_rate(&self) -> Option<f64> {
        self.is_stable().then(|| self.rate())
    }

    pub fn growth_rate(&self) -> Option<f64> {
        (!self.is_stable()).then(|| self.rate())
    }

    /// Signed exponent per unit time: `-lambda` or `+mu`.
    pub fn signed_rate(&self) -> f64 {
        match self.stability {
            Stability::Stable => -self.rate(),
            Stability::Unstable => self.rate(),
        }
    }

    pub fn basis(&self) -> Option<&Eigenbasis> {
        self.basis.as_ref()
    }

    pub fn is_diagonalizable(&self) -> bool {
        self.basis.is_some()
    }

    pub fn defect(&self) -> Option<DefectBound> {
        self.defect
    }

    pub fn eigenvector_condition(&self) -> f64 {
        self.eigenvector_condition
    }

    pub fn is_overridden(&self) -> bool {
        self.overridden
    }

    /// Replaces the eigenvector matrix, e.g. for a defective matrix whose
    /// envelope the caller bounds by other means. `rate` replaces the decay
    /// or growth rate when given.
    pub fn with_override(mut self, vectors: CMatrix, rate: Option<f64>) -> Result<Self, SpectralError> {
        if vectors.nrows() != self.dim() || vectors.ncols() != self.dim() {
            return Err(SpectralError::InvalidOverride);
        }
        if rate.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
            return Err(SpectralError::InvalidOverride);
        }
        let basis = Eigenbasis::new(vectors).ok_or(SpectralError::InvalidOverride)?;
        self.eigenvector_condition = condition_number(basis.vectors());
        self.basis = Some(basis);
        self.rate_override = rate;
        self.overridden = true;
        Ok(self)
    }
}

/// Spectral data for one matrix. Diagonal matrices get `P = I` exactly.
pub fn eigendecompose(a: &DMatrix<f64>, tol: &SpectralTolerances) -> Result<SubsystemSpectrum, SpectralError> {
    if !a.is_square() {
        return Err(SpectralError::NonSquareInput {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Err(SpectralError::EmptyMatrix);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let scale = spectral_norm_real(a);

    let diagonal = is_diagonal_real(a);
    let mut eigenvalues: Vec<Complex64> = if diagonal {
        (0..n).map(|i| Complex64::new(a[(i, i)], 0.0)).collect()
    } else {
        let schur = a
            .clone()
            .try_schur(f64::EPSILON, 100_000)
            .ok_or(SpectralError::EigenvalueFailure)?;
        schur.complex_eigenvalues().iter().copied().collect()
    };
    for z in &eigenvalues {
        if z.re == 0.0 || z.re.abs() < tol.imaginary_axis * scale {
            return Err(SpectralError::ImaginaryAxisEigenvalue { re: z.re, im: z.im });
        }
    }
    let max_real = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let stability = if max_real < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };

    let (basis, condition) = if diagonal {
        (Eigenbasis::new(CMatrix::identity(n, n)), 1.0)
    } else {
        eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then_with(|| y.im.total_cmp(&x.im)));
        match unit_eigenvectors(a, &eigenvalues, scale, tol) {
            Some((vectors, clustered)) => {
                let condition = condition_number(&vectors);
                eigenvalues = clustered;
                if condition > tol.defective_condition {
                    (None, condition)
                } else {
                    (Eigenbasis::new(vectors), condition)
                }
            }
            None => (None, f64::INFINITY),
        }
    };

    let defect = basis.is_none().then(|| defect_bound(a, max_real, tol.defective_margin));

    Ok(SubsystemSpectrum {
        matrix: a.clone(),
        eigenvalues,
        max_real,
        stability,
        basis,
        defect,
        eigenvector_condition: condition,
        rate_override: None,
        overridden: false,
    })
}

fn is_diagonal_real(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

fn is_diagonal_complex(a: &CMatrix) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == Complex64::new(0.0, 0.0)))
}

// Groups nearby eigenvalues and takes an orthonormal null-space basis of
// `A - c I` for each group. None when some group has fewer independent
// eigenvectors than its multiplicity.
fn unit_eigenvectors(
    a: &DMatrix<f64>,
    sorted: &[Complex64],
    scale: f64,
    tol: &SpectralTolerances,
) -> Option<(CMatrix, Vec<Complex64>)> {
    let n = a.nrows();
    let radius = tol.eigenvalue_cluster * scale.max(1.0);
    let null_tol = 1e-7 * scale.max(1.0);

    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for &z in sorted {
        match clusters.iter_mut().find(|c| (c[0] - z).norm() <= radius) {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }

    let ac = a.map(|x| Complex64::new(x, 0.0));
    let mut columns = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for cluster in &clusters {
        let m = cluster.len();
        let center = cluster.iter().sum::<Complex64>() / m as f64;
        let shifted = &ac - CMatrix::identity(n, n) * center;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        // singular values are sorted descending
        if svd.singular_values[n - m] > null_tol {
            return None;
        }
        for row in (n - m)..n {
            let mut col: Vec<Complex64> = v_t.row(row).iter().map(|z| z.conj()).collect();
            normalize_phase(&mut col);
            columns.push(col);
            values.push(center);
        }
    }
    let vectors = CMatrix::from_fn(n, n, |i, j| columns[j][i]);
    Some((vectors, values))
}

// Unit norm, largest-modulus component real and positive.
fn normalize_phase(col: &mut [Complex64]) {
    let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let pivot = col
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if pivot.norm() > 0.0 {
        pivot.conj() / pivot.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    for z in col.iter_mut() {
        *z = *z * phase / norm;
    }
}

fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 { max / min } else { f64::INFINITY }
}

// beta = max over a geometric time grid of ||e^{At}|| e^{-lambda* t}.
fn defect_bound(a: &DMatrix<f64>, max_real: f64, margin: f64) -> DefectBound {
    const POINTS: usize = 400;
    let lambda_star = max_real + margin;
    let (t_min, t_max) = (1e-3_f64, 50.0_f64);
    let ratio = (t_max / t_min).ln() / (POINTS - 1) as f64;
    let mut beta = 1.0_f64;
    for i in 0..POINTS {
        let t = t_min * (ratio * i as f64).exp();
        let log_value = spectral_norm_real(&matrix_exponential(a, t)).ln() - lambda_star * t;
        if log_value.is_finite() {
            beta = beta.max(log_value.exp());
        }
    }
    DefectBound { lambda_star, beta }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.is_square() && is_diagonal_complex(m) {
        return (0..m.nrows()).map(|i| m[(i, i)].norm()).fold(0.0, f64::max);
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn spectral_norm_real(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.is_square() && is_diagonal_real(m) {
        return (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    }
    m.clone().svd(false, false).singular_values.max()
}

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// 1-norm limits for each Padé degree (double precision).
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{At}` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix exponential needs a square matrix");
    let n = a.nrows();
    let at = a * t;
    if is_diagonal_real(&at) {
        return DMatrix::from_fn(n, n, |i, j| if i == j { at[(i, i)].exp() } else { 0.0 });
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = one_norm(&at);

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let a2 = &at * &at;
            let mut even = &ident * coeffs[0];
            let mut odd = &ident * coeffs[1];
            let mut power = ident.clone();
            for j in 1..=degree / 2 {
                power = &power * &a2;
                even += &power * coeffs[2 * j];
                odd += &power * coeffs[2 * j + 1];
            }
            let u = &at * odd;
            return pade_quotient(&u, &even);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = at / 2f64.powi(squarings);
    let b = &PADE_13;
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = pade_quotient(&u, &v);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn pade_quotient(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let denominator = v - u;
    let numerator = v + u;
    denominator
        .lu()
        .solve(&numerator)
        .expect("Padé denominator is nonsingular for norms below theta")
}

/// Spectra of all subsystems plus the switch factor table.
#[derive(Debug, Clone)]
pub struct SubsystemEnsemble {
    spectra: Vec<SubsystemSpectrum>,
    // factors[r][s] = ||P_s^{-1} P_r||, None when an endpoint is defective
    factors: Vec<Vec<Option<f64>>>,
}

impl SubsystemEnsemble {
    pub fn new(matrices: &[DMatrix<f64>], tol: &SpectralTolerances) -> Result<Self, SpectralError> {
        let spectra = matrices
            .iter()
            .enumerate()
            .map(|(index, a)| {
                eigendecompose(a, tol).map_err(|e| SpectralError::Subsystem {
                    index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_spectra(spectra)
    }

    pub fn from_spectra(spectra: Vec<SubsystemSpectrum>) -> Result<Self, SpectralError> {
        let Some(first) = spectra.first() else {
            return Err(SpectralError::EmptyMatrix);
        };
        let dim = first.dim();
        if let Some((index, s)) = spectra.iter().enumerate().find(|(_, s)| s.dim() != dim) {
            return Err(SpectralError::DimensionMismatch {
                index,
                expected: dim,
                got: s.dim(),
            });
        }
        let k = spectra.len();
        let factors = (0..k)
            .map(|r| {
                (0..k)
                    .map(|s| {
                        if r == s {
                            return spectra[r].basis().map(|_| 1.0);
                        }
                        match (spectra[r].basis(), spectra[s].basis()) {
                            (Some(from), Some(to)) => Some(switch_factor(from, to)),
                            _ => None,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { spectra, factors })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spectra[0].dim()
    }

    pub fn spectrum(&self, i: usize) -> &SubsystemSpectrum {
        &self.spectra[i]
    }

    pub fn spectra(&self) -> &[SubsystemSpectrum] {
        &self.spectra
    }

    /// Stable/unstable split derived from the eigenvalues.
    pub fn partition(&self) -> SubgraphPartition {
        SubgraphPartition::from_mask(self.spectra.iter().map(|s| s.is_stable()).collect())
    }

    pub fn defective_vertices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !self.spectra[i].is_diagonalizable())
            .collect()
    }

    pub fn basis(&self, vertex: usize) -> Result<&Eigenbasis, SpectralError> {
        self.spectra[vertex]
            .basis()
            .ok_or(SpectralError::DefectiveEndpoint { vertex })
    }

    /// `||P_s^{-1} P_r||` for the switch `r -> s`.
    pub fn cost_factor(&self, r: usize, s: usize) -> Result<f64, SpectralError> {
        match self.factors[r][s] {
            Some(f) => Ok(f),
            None if r == s => Ok(1.0),
            None => {
                let vertex = if self.spectra[r].is_diagonalizable() { s } else { r };
                Err(SpectralError::DefectiveEndpoint { vertex })
            }
        }
    }

    /// `ln ||P_s^{-1} P_r||`; exactly zero for self-loops.
    pub fn transition_cost(&self, r: usize, s: usize) -> Result<f64, SpectralError> {
        if r == s {
            return Ok(0.0);
        }
        self.cost_factor(r, s).map(f64::ln)
    }
}

/// `max ||P_j^{-1}|| ||P_i||` over pairs with a path `i -> j` of length at
/// least one. Zero when no such pair exists.
pub fn rho_graph(ens: &SubsystemEnsemble, g: &Digraph) -> Result<f64, SpectralError> {
    let norms = basis_norms(ens, g)?;
    let mut rho: f64 = 0.0;
    for i in 0..g.vertex_count() {
        let reach = g.reachable_from(i);
        for j in (0..g.vertex_count()).filter(|&j| reach[j]) {
            rho = rho.max(norms[j].1 * norms[i].0);
        }
    }
    Ok(rho)
}

/// Prefactor `max ||P_j|| ||P_i^{-1}||` over start vertices `i` and end
/// vertices `j` reachable from `i` by a path of any length, including zero.
/// Bounds `||P_{end}|| ||P_{start}^{-1}||` for every admissible trajectory.
pub fn envelope_constant(ens: &SubsystemEnsemble, g: &Digraph) -> Result<f64, SpectralError> {
    let norms = basis_norms(ens, g)?;
    let mut constant: f64 = 0.0;
    for i in 0..g.vertex_count() {
        let reach = g.reachable_from(i);
        for j in (0..g.vertex_count()).filter(|&j| j == i || reach[j]) {
            constant = constant.max(norms[j].0 * norms[i].1);
        }
    }
    Ok(constant)
}

// (||P_i||, ||P_i^{-1}||) per vertex
fn basis_norms(ens: &SubsystemEnsemble, g: &Digraph) -> Result<Vec<(f64, f64)>, SpectralError> {
    (0..g.vertex_count())
        .map(|i| {
            let b = ens.basis(i)?;
            Ok((spectral_norm(b.vectors()), spectral_norm(b.inverse())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingCheck {
    pub commuting: bool,
    /// Largest relative commutator `||A_i A_j - A_j A_i|| / max(1, ||A_i|| ||A_j||)`.
    pub max_commutator: f64,
    /// A single invertible matrix diagonalizing every subsystem. Columns are
    /// not necessarily unit norm.
    pub common_basis: Option<CMatrix>,
}

pub fn check_pairwise_commuting(ens: &SubsystemEnsemble, tol: &SpectralTolerances) -> CommutingCheck {
    let mats: Vec<&DMatrix<f64>> = ens.spectra().iter().map(|s| s.matrix()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            let c = mats[i] * mats[j] - mats[j] * mats[i];
            let scale = (spectral_norm_real(mats[i]) * spectral_norm_real(mats[j])).max(1.0);
            worst = worst.max(spectral_norm_real(&c) / scale);
        }
    }
    let commuting = worst <= tol.commute;
    let common_basis = if commuting && ens.spectra().iter().all(|s| s.is_diagonalizable()) {
        common_eigenbasis(&mats, tol)
    } else {
        None
    };
    CommutingCheck {
        commuting,
        max_commutator: worst,
        common_basis,
    }
}

// Eigenvectors of a generic linear combination diagonalize the whole
// commuting family.
fn common_eigenbasis(mats: &[&DMatrix<f64>], tol: &SpectralTolerances) -> Option<CMatrix> {
    let n = mats[0].nrows();
    if mats.iter().all(|m| is_diagonal_real(m)) {
        return Some(CMatrix::identity(n, n));
    }
    const WEIGHTS: [f64; 3] = [0.7548776662466927, 0.5698402909980532, 0.3141592653589793];
    for (attempt, &w) in WEIGHTS.iter().enumerate() {
        let mut combo = DMatrix::<f64>::zeros(n, n);
        for (i, m) in mats.iter().enumerate() {
            let coeff = 1.0 + (w * (i + 1 + attempt) as f64).fract();
            combo += *m * coeff;
        }
        let relaxed = SpectralTolerances {
            imaginary_axis: 0.0,
            ..*tol
        };
        let Ok(spec) = eigendecompose(&combo, &relaxed) else {
            continue;
        };
        let Some(basis) = spec.basis() else {
            continue;
        };
        let diagonalizes_all = mats.iter().all(|m| {
            let mc = m.map(|x| Complex64::new(x, 0.0));
            let d = basis.inverse() * mc * basis.vectors();
            let scale = spectral_norm_real(m).max(1.0);
            (0..n).all(|r| (0..n).all(|c| r == c || d[(r, c)].norm() <= 1e-8 * scale))
        });
        if diagonalizes_all {
            return Some(basis.vectors().clone());
        }
    }
    None
}
