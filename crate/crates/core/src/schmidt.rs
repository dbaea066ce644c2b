//! Schmidt decomposition of bipartite electron-nuclear amplitude tables,
//! von Neumann entropies, reduced density matrices and the simplified
//! extrema-based density model.

use log::warn;

use crate::bo::{electronic_overlap, ElectronicScan, VibronicState};
use crate::grid::{symmetric_eigenvalues, SymmetricMatrix};
use crate::{Error, Matrix, Result};

/// Eigenvalues below this are treated as zero in entropies.
pub const LAMBDA_FLOOR: f64 = 1e-14;

/// Schmidt spectrum and modes of one bipartite state `Ψ(x_i, R_j)`.
#[derive(Debug, Clone)]
pub struct SchmidtResult {
    /// Descending Schmidt eigenvalues (squared singular values).
    pub lambdas: Vec<f64>,
    /// Electronic modes `u_k(x_i)` as columns.
    pub electronic_modes: Matrix,
    /// Nuclear modes `v_k(R_j)` as columns.
    pub nuclear_modes: Matrix,
    /// Von Neumann entropy in nats.
    pub entropy: f64,
}

impl SchmidtResult {
    /// `Σ_k √λ_k u_k v_kᵀ` over the first `n_modes` modes.
    pub fn reconstruct(&self, n_modes: usize) -> Matrix {
        let k = n_modes.min(self.lambdas.len());
        let u = &self.electronic_modes;
        let v = &self.nuclear_modes;
        Matrix::from_fn(u.nrows(), v.nrows(), |i, j| {
            (0..k)
                .map(|m| self.lambdas[m].max(0.0).sqrt() * u[(i, m)] * v[(j, m)])
                .sum()
        })
    }
}

fn prepare(psi: &Matrix) -> Result<Option<Matrix>> {
    if psi.nrows() == 0 || psi.ncols() == 0 {
        return Err(Error::Domain("empty amplitude table".into()));
    }
    let mut norm = 0.0;
    for j in 0..psi.ncols() {
        for i in 0..psi.nrows() {
            let v = psi[(i, j)];
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "amplitude table has a non-finite entry at ({i}, {j})"
                )));
            }
            norm += v * v;
        }
    }
    if norm == 0.0 {
        return Err(Error::Domain("amplitude table is identically zero".into()));
    }
    if (norm - 1.0).abs() > 1e-6 {
        warn!("renormalizing amplitude table with norm² {norm}");
        let s = 1.0 / norm.sqrt();
        return Ok(Some(Matrix::from_fn(psi.nrows(), psi.ncols(), |i, j| {
            psi[(i, j)] * s
        })));
    }
    Ok(None)
}

/// Full Schmidt decomposition by thin SVD.
pub fn schmidt_decompose(psi: &Matrix) -> Result<SchmidtResult> {
    let owned = prepare(psi)?;
    let psi = owned.as_ref().unwrap_or(psi);
    let svd = psi
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD of {}x{} table: {e:?}", psi.nrows(), psi.ncols())))?;
    let s = svd.S().column_vector();
    let lambdas: Vec<f64> = (0..s.nrows()).map(|k| s[k] * s[k]).collect();
    let entropy = von_neumann_entropy(&lambdas)?;
    Ok(SchmidtResult {
        lambdas,
        electronic_modes: svd.U().to_owned(),
        nuclear_modes: svd.V().to_owned(),
        entropy,
    })
}

/// Schmidt eigenvalues only, descending.
pub fn schmidt_spectrum(psi: &Matrix) -> Result<Vec<f64>> {
    let owned = prepare(psi)?;
    let psi = owned.as_ref().unwrap_or(psi);
    let s = psi
        .singular_values()
        .map_err(|e| Error::Numeric(format!("SVD of {}x{} table: {e:?}", psi.nrows(), psi.ncols())))?;
    Ok(s.into_iter().map(|x| x * x).collect())
}

/// `S = −Σ λ ln λ` in nats, with `0·ln 0 = 0`.
pub fn von_neumann_entropy(lambdas: &[f64]) -> Result<f64> {
    if let Some(l) = lambdas.iter().find(|l| !l.is_finite() || **l < -1e-12) {
        return Err(Error::Domain(format!("invalid Schmidt eigenvalue {l}")));
    }
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > 1e-4 {
        return Err(Error::Domain(format!("eigenvalues sum to {sum}, not 1")));
    }
    Ok(lambdas
        .iter()
        .filter(|l| **l > LAMBDA_FLOOR)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0))
}

/// Entropy from only the two leading eigenvalues `λ` and `1 − λ`.
pub fn two_eigenvalue_entropy(lambda_max: f64) -> Result<f64> {
    if !(lambda_max > 0.0 && lambda_max <= 1.0) {
        return Err(Error::Domain(format!(
            "largest eigenvalue must lie in (0, 1], got {lambda_max}"
        )));
    }
    let xlnx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    Ok(-(xlnx(lambda_max) + xlnx(1.0 - lambda_max)))
}

/// Eigenvalues of a density matrix, descending.
pub fn density_spectrum(rho: &SymmetricMatrix) -> Result<Vec<f64>> {
    let mut ev = symmetric_eigenvalues(rho)?;
    ev.reverse();
    Ok(ev)
}

/// `ρ^R = Ψᵀ Ψ` over the nuclear grid.
pub fn nuclear_density_from_table(psi: &Matrix) -> SymmetricMatrix {
    let g = psi.transpose() * psi;
    SymmetricMatrix::from_lower_fn(g.nrows(), |i, j| g[(i, j)])
}

/// `ρ^x = Ψ Ψᵀ` over the electronic grid.
pub fn electronic_density_from_table(psi: &Matrix) -> SymmetricMatrix {
    let g = psi * psi.transpose();
    SymmetricMatrix::from_lower_fn(g.nrows(), |i, j| g[(i, j)])
}

/// `ρ^R_ij = χ(R_i) χ(R_j) S_n(R_i, R_j)` for a Born-Oppenheimer state.
pub fn reduced_density_nuclear_bo(
    scan: &ElectronicScan,
    state: &VibronicState,
) -> Result<SymmetricMatrix> {
    if state.surface >= scan.n_states() || state.chi.grid != scan.r_grid {
        return Err(Error::Domain(format!(
            "state ({}, {}) does not belong to this scan",
            state.surface, state.index
        )));
    }
    let s = scan.overlap_matrix(state.surface);
    let chi = &state.chi.values;
    Ok(SymmetricMatrix::from_lower_fn(chi.len(), |i, j| {
        chi[i] * chi[j] * s[(i, j)]
    }))
}

/// Nuclear reduced density of a Born-Huang state with channel weights
/// `coefficients` over `channels`.
///
/// `ρ^R_ij = Σ Λ_c Λ_c' χ_c(R_i) χ_c'(R_j) ⟨φ_{n_c}(R_i)|φ_{n_c'}(R_j)⟩`,
/// evaluated as `Ψᵀ Ψ` of the total wave function.
pub fn reduced_density_bh(
    scan: &ElectronicScan,
    channels: &[VibronicState],
    coefficients: &[f64],
) -> Result<SymmetricMatrix> {
    let psi = crate::born_huang::bh_total_wavefunction(scan, channels, coefficients)?;
    Ok(nuclear_density_from_table(&psi))
}

/// Grid locations of the interior extrema of a vibrational state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaPoints {
    pub indices: Vec<usize>,
    pub positions: Vec<f64>,
    /// `χ̃(R_k)`, renormalized so that `Σ χ̃² = 1`.
    pub amplitudes: Vec<f64>,
}

/// Relative amplitude below which extrema are ignored.
pub const EXTREMUM_THRESHOLD: f64 = 1e-3;

/// Interior extrema of `χ` by sign change of the discrete derivative.
/// Expects exactly `m + 1` of them for vibrational index `m`.
pub fn simplified_vibrational(state: &VibronicState) -> Result<ExtremaPoints> {
    let chi = &state.chi.values;
    let max = chi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut indices = Vec::new();
    for i in 1..chi.len().saturating_sub(1) {
        let left = chi[i] - chi[i - 1];
        let right = chi[i + 1] - chi[i];
        if left * right < 0.0 && chi[i].abs() > EXTREMUM_THRESHOLD * max {
            indices.push(i);
        }
    }
    if indices.len() != state.index + 1 {
        return Err(Error::Extraction(format!(
            "state ({}, {}): found {} extrema, expected {} (grid too coarse?)",
            state.surface,
            state.index,
            indices.len(),
            state.index + 1
        )));
    }
    let raw: Vec<f64> = indices.iter().map(|&i| chi[i]).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(ExtremaPoints {
        positions: indices.iter().map(|&i| state.chi.grid.point(i)).collect(),
        amplitudes: raw.iter().map(|v| v / norm).collect(),
        indices,
    })
}

/// Small density matrix built on the extrema of a vibrational state.
#[derive(Debug, Clone)]
pub struct SimplifiedDensity {
    pub points: ExtremaPoints,
    /// Electronic overlaps between the extrema.
    pub overlaps: Vec<Vec<f64>>,
    /// `ρ̃_kl = χ̃_k χ̃_l S(R_k, R_l)`.
    pub matrix: SymmetricMatrix,
}

impl SimplifiedDensity {
    /// Builds `ρ̃` from extrema and an overlap function of point indices.
    pub fn with_overlaps(points: ExtremaPoints, overlap: impl Fn(usize, usize) -> f64) -> Self {
        let n = points.amplitudes.len();
        let overlaps: Vec<Vec<f64>> = (0..n)
            .map(|k| (0..n).map(|l| if k == l { 1.0 } else { overlap(k.max(l), k.min(l)) }).collect())
            .collect();
        let a = &points.amplitudes;
        let matrix = SymmetricMatrix::from_lower_fn(n, |k, l| a[k] * a[l] * overlaps[k][l]);
        Self {
            points,
            overlaps,
            matrix,
        }
    }

    pub fn spectrum(&self) -> Result<Vec<f64>> {
        density_spectrum(&self.matrix)
    }

    pub fn entropy(&self) -> Result<f64> {
        von_neumann_entropy(&self.spectrum()?)
    }
}

/// `ρ̃` using the scan's electronic overlaps on surface `n`.
pub fn simplified_density(
    points: ExtremaPoints,
    scan: &ElectronicScan,
    n: usize,
) -> SimplifiedDensity {
    let idx = points.indices.clone();
    SimplifiedDensity::with_overlaps(points, |k, l| electronic_overlap(scan, n, idx[k], idx[l]))
}

/// First-order estimate `λ_max = 1 + 2 Σ_{k<l} ε_kl χ̃_k χ̃_l` with
/// `ε_kl = −χ̃_k χ̃_l (1 − S_kl)`.
pub fn perturbative_lambda_max(sd: &SimplifiedDensity) -> f64 {
    let a = &sd.points.amplitudes;
    let mut sum = 0.0;
    for k in 0..a.len() {
        for l in k + 1..a.len() {
            let eps = -a[k] * a[l] * (1.0 - sd.overlaps[k][l]);
            sum += eps * a[k] * a[l];
        }
    }
    (1.0 + 2.0 * sum).min(1.0)
}
