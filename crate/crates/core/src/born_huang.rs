//! Coupled-channel Born-Huang problem in the basis of Born-Oppenheimer
//! vibronic states.
//!
//! With `Ψ = Σ_n φ_n(x; R) f_n(R)` and `f_n = Σ_m Λ_nm χ_nm`, projecting the
//! full Hamiltonian onto the electronic states gives
//! `H = diag(W) + C` with
//! `C_{nm,n'm'} = −(1/2M) ⟨χ_nm| A_nn' ∂_R + ∂_R A_nn' + B_nn' |χ_n'm'⟩`,
//! where `A_nn' = ⟨φ_n|∂_R φ_n'⟩` and `B = A·A`.

use faer::Mat;
use log::warn;

use crate::bo::{ElectronicScan, VibronicState};
use crate::diabatic::MatrixField;
use crate::grid::{solve_symmetric, spectral_derivative_matrix, SymmetricMatrix};
use crate::parallel::map_indexed;
use crate::{Error, Matrix, Result};

/// Asymmetry tolerated before symmetrizing the assembled matrix.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-8;

/// Assembled coupled-channel Hamiltonian.
#[derive(Debug, Clone)]
pub struct BhMatrix {
    /// `(surface, vibrational index)` of every channel, in matrix order.
    pub channels: Vec<(usize, usize)>,
    pub hamiltonian: SymmetricMatrix,
    /// `‖H − Hᵀ‖∞` before symmetrization.
    pub asymmetry: f64,
}

/// Eigenstates of the coupled-channel problem.
#[derive(Debug, Clone)]
pub struct BhSolution {
    pub channels: Vec<(usize, usize)>,
    /// Ascending Born-Huang energies.
    pub energies: Vec<f64>,
    /// `coefficients[state][channel] = Λ`.
    pub coefficients: Vec<Vec<f64>>,
    /// Channel index and weight `Λ²` of the largest component per state.
    pub dominant: Vec<(usize, f64)>,
}

impl BhSolution {
    /// Channel weights `Λ²` of one state, largest first.
    pub fn leading_weights(&self, state: usize) -> Vec<((usize, usize), f64)> {
        let mut w: Vec<_> = self.coefficients[state]
            .iter()
            .enumerate()
            .map(|(c, l)| (self.channels[c], l * l))
            .collect();
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        w
    }
}

/// Builds `diag(W) + C` over `channels`, using the spectral derivative
/// matrix for `∂_R` and grid quadrature for the integrals.
pub fn assemble_bh_matrix(
    channels: &[VibronicState],
    a: &MatrixField,
    b: &MatrixField,
    nuclear_mass: f64,
) -> Result<BhMatrix> {
    if channels.is_empty() {
        return Err(Error::Assembly("no channels".into()));
    }
    let r_grid = a.r_grid;
    if b.r_grid != r_grid || channels.iter().any(|c| c.chi.grid != r_grid) {
        return Err(Error::Assembly("channels and couplings use different R grids".into()));
    }
    let mut surfaces: Vec<usize> = channels.iter().map(|c| c.surface).collect();
    surfaces.sort_unstable();
    surfaces.dedup();
    if surfaces.len() < 2 {
        return Err(Error::Assembly(
            "channels must come from at least two surfaces".into(),
        ));
    }
    if let Some(s) = surfaces.iter().find(|&&s| s >= a.dim() || s >= b.dim()) {
        return Err(Error::Assembly(format!("no couplings for surface {s}")));
    }
    if !(nuclear_mass > 0.0) {
        return Err(Error::config("mass", "nuclear mass must be positive"));
    }

    let nr = r_grid.n_points();
    let nc = channels.len();
    let d = spectral_derivative_matrix(&r_grid)?;
    let x = Mat::from_fn(nr, nc, |i, c| channels[c].chi.values[i]);
    let dx = &d * &x;
    let pref = -0.5 / nuclear_mass;

    // rows of H, one channel at a time
    let rows = map_indexed(nc, |c| {
        let n = channels[c].surface;
        (0..nc)
            .map(|c2| {
                let n2 = channels[c2].surface;
                let mut s = 0.0;
                for i in 0..nr {
                    let aij = a.get(i, n, n2);
                    let bij = b.get(i, n, n2);
                    // χ A (Dχ') − (Dχ) A χ' + χ B χ'
                    s += x[(i, c)] * (aij * dx[(i, c2)] + bij * x[(i, c2)])
                        - dx[(i, c)] * aij * x[(i, c2)];
                }
                let w = if c == c2 { channels[c].energy } else { 0.0 };
                w + pref * s
            })
            .collect::<Vec<f64>>()
    });
    let h = Mat::from_fn(nc, nc, |i, j| rows[i][j]);
    let asymmetry = asymmetry_inf_norm(&h);
    if !(asymmetry < ASYMMETRY_TOLERANCE) {
        return Err(Error::Assembly(format!(
            "coupling matrix asymmetry {asymmetry:e} exceeds {ASYMMETRY_TOLERANCE:e}"
        )));
    }
    Ok(BhMatrix {
        channels: channels.iter().map(|c| (c.surface, c.index)).collect(),
        hamiltonian: SymmetricMatrix::from_dense(&h, f64::INFINITY)?,
        asymmetry,
    })
}

fn asymmetry_inf_norm(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| (m[(i, j)] - m[(j, i)]).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Diagonalizes the assembled matrix.
pub fn solve_bh(matrix: &BhMatrix) -> Result<BhSolution> {
    let dim = matrix.hamiltonian.dim();
    let pairs = solve_symmetric(&matrix.hamiltonian, dim)?;
    let mut energies = Vec::with_capacity(dim);
    let mut coefficients = Vec::with_capacity(dim);
    let mut dominant = Vec::with_capacity(dim);
    for p in pairs {
        let norm = p.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v: Vec<f64> = p.vector.iter().map(|x| x / norm).collect();
        let (best, w) = v
            .iter()
            .enumerate()
            .map(|(c, l)| (c, l * l))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        energies.push(p.value);
        coefficients.push(v);
        dominant.push((best, w));
    }
    Ok(BhSolution {
        channels: matrix.channels.clone(),
        energies,
        coefficients,
        dominant,
    })
}

/// `Ψ(x_i, R_j) = Σ_n φ_n(x_i; R_j) Σ_m Λ_nm χ_nm(R_j)`.
///
/// Coefficients are renormalized (with a warning) when `ΣΛ²` deviates from 1
/// by more than 1e−6.
pub fn bh_total_wavefunction(
    scan: &ElectronicScan,
    channels: &[VibronicState],
    coefficients: &[f64],
) -> Result<Matrix> {
    if channels.len() != coefficients.len() {
        return Err(Error::Domain(format!(
            "{} coefficients for {} channels",
            coefficients.len(),
            channels.len()
        )));
    }
    if let Some(c) = channels
        .iter()
        .find(|c| c.surface >= scan.n_states() || c.chi.grid != scan.r_grid)
    {
        return Err(Error::Domain(format!(
            "channel ({}, {}) does not belong to this scan",
            c.surface, c.index
        )));
    }
    let norm: f64 = coefficients.iter().map(|l| l * l).sum();
    let scale = if (norm - 1.0).abs() > 1e-6 {
        warn!("renormalizing Born-Huang coefficients with norm² {norm}");
        1.0 / norm.sqrt()
    } else {
        1.0
    };
    let nr = scan.r_grid.n_points();
    let mut f = vec![vec![0.0; nr]; scan.n_states()];
    for (c, l) in channels.iter().zip(coefficients) {
        for (fj, chi) in f[c.surface].iter_mut().zip(&c.chi.values) {
            *fj += scale * l * chi;
        }
    }
    let active: Vec<usize> = (0..scan.n_states())
        .filter(|n| f[*n].iter().any(|v| *v != 0.0))
        .collect();
    Ok(Mat::from_fn(scan.x_grid.n_points(), nr, |i, j| {
        active.iter().map(|&n| scan.state(n, j)[i] * f[n][j]).sum()
    }))
}
