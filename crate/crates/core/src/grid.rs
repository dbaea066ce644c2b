//! Uniform grids, Fourier-grid (FGH) Hamiltonians and dense symmetric
//! eigensolves.
//!
//! Wave functions are stored as raw grid amplitudes with the discrete norm
//! `Σ ψ_i² = 1`. Multiply by `1/√Δr` only when exporting continuum-normalized
//! values.

use std::f64::consts::PI;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Uniform 1D grid `r_i = r_min + i·delta_r`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    r_min: f64,
    delta_r: f64,
    n_points: usize,
}

impl Grid1D {
    /// Builds a grid from its origin, spacing and (odd) point count.
    pub fn new(r_min: f64, delta_r: f64, n_points: usize) -> Result<Self> {
        if n_points % 2 == 0 {
            return Err(Error::config(
                "n_points",
                format!("FGH grids need an odd point count, got {n_points}"),
            ));
        }
        if !(delta_r.is_finite() && delta_r > 0.0) {
            return Err(Error::config(
                "delta_r",
                format!("spacing must be positive and finite, got {delta_r}"),
            ));
        }
        if !r_min.is_finite() {
            return Err(Error::config("r_min", "grid origin must be finite"));
        }
        Ok(Self {
            r_min,
            delta_r,
            n_points,
        })
    }

    /// Builds a grid whose first and last points are `r_min` and `r_max`.
    pub fn spanning(r_min: f64, r_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::config(
                "n_points",
                format!("need at least 3 points to span an interval, got {n_points}"),
            ));
        }
        if !(r_max > r_min) {
            return Err(Error::config(
                "r_max",
                format!("interval [{r_min}, {r_max}] is empty"),
            ));
        }
        Self::new(r_min, (r_max - r_min) / (n_points - 1) as f64, n_points)
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.point(self.n_points - 1)
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Reciprocal-space spacing `2π / (N·Δr)`.
    pub fn delta_k(&self) -> f64 {
        2.0 * PI / (self.n_points as f64 * self.delta_r)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.delta_r
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Same spacing and size, shifted origin.
    pub fn translated(&self, shift: f64) -> Self {
        Self {
            r_min: self.r_min + shift,
            ..*self
        }
    }

    /// Index of the grid point closest to `r`, clamped to the grid.
    pub fn nearest_index(&self, r: f64) -> usize {
        let t = ((r - self.r_min) / self.delta_r).round();
        t.clamp(0.0, (self.n_points - 1) as f64) as usize
    }
}

/// Real amplitudes sampled on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Domain(format!(
                "grid function has {} values for a {}-point grid",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sq() - 1.0).abs() <= tol
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }

    /// Amplitudes rescaled to continuum normalization `∫|ψ|² dr = 1`.
    pub fn continuum_values(&self) -> Vec<f64> {
        let s = 1.0 / self.grid.delta_r().sqrt();
        self.values.iter().map(|v| v * s).collect()
    }
}

/// Dense real symmetric matrix. Every constructor writes mirrored pairs
/// from a single value, so `M_ij == M_ji` holds bit-for-bit.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    data: Matrix,
}

impl SymmetricMatrix {
    /// Fills entry `(i, j)` and its mirror from `f(i, j)` evaluated for `i ≥ j`.
    pub fn from_lower_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Mat::zeros(dim, dim);
        for j in 0..dim {
            for i in j..dim {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    /// Symmetrizes a dense matrix after checking `max |M − Mᵀ| ≤ tol`.
    pub fn from_dense(m: &Matrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Domain(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = max_asymmetry(m);
        if !(asym <= tol) {
            return Err(Error::Assembly(format!(
                "asymmetry {asym:e} exceeds tolerance {tol:e}"
            )));
        }
        Ok(Self::from_lower_fn(m.nrows(), |i, j| {
            0.5 * (m[(i, j)] + m[(j, i)])
        }))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_mat(&self) -> &Matrix {
        &self.data
    }

    /// Returns a copy with `diag[i]` added to each diagonal entry.
    pub fn with_diagonal_added(&self, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), self.dim(), "diagonal length mismatch");
        let mut data = self.data.clone();
        for (i, d) in diag.iter().enumerate() {
            data[(i, i)] += d;
        }
        Self { data }
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.data[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.data, v)
    }
}

/// One eigenvalue with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// FGH kinetic matrix entry as a function of `|i − j|`, for all offsets.
pub fn fgh_kinetic_offsets(grid: &Grid1D, mass: f64) -> Vec<f64> {
    let n = grid.n_points();
    let dk = grid.delta_k();
    let t: Vec<f64> = (1..=(n - 1) / 2)
        .map(|l| (l as f64 * dk).powi(2) / (2.0 * mass))
        .collect();
    (0..n)
        .map(|d| {
            let s: f64 = t
                .iter()
                .enumerate()
                .map(|(l, tl)| (2.0 * PI * (l + 1) as f64 * d as f64 / n as f64).cos() * tl)
                .sum();
            2.0 * s / n as f64
        })
        .collect()
}

/// Kinetic-only FGH matrix.
pub fn fgh_kinetic_matrix(grid: &Grid1D, mass: f64) -> Result<SymmetricMatrix> {
    check_mass(mass)?;
    let offsets = fgh_kinetic_offsets(grid, mass);
    Ok(SymmetricMatrix::from_lower_fn(grid.n_points(), |i, j| {
        offsets[i - j]
    }))
}

/// FGH Hamiltonian `H_ij = (2/N) Σ_l cos(2πl(i−j)/N) T_l + V_i δ_ij`
/// with `T_l = (lΔk)² / (2·mass)`.
pub fn build_fgh_hamiltonian(
    grid: &Grid1D,
    mass: f64,
    potential: &GridFunction,
) -> Result<SymmetricMatrix> {
    if potential.values.len() != grid.n_points() {
        return Err(Error::Domain(format!(
            "potential has {} values for a {}-point grid",
            potential.values.len(),
            grid.n_points()
        )));
    }
    check_finite_potential(&potential.values)?;
    Ok(fgh_kinetic_matrix(grid, mass)?.with_diagonal_added(&potential.values))
}

fn check_mass(mass: f64) -> Result<()> {
    if mass.is_finite() && mass > 0.0 {
        Ok(())
    } else {
        Err(Error::config("mass", format!("must be positive, got {mass}")))
    }
}

pub(crate) fn check_finite_potential(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!(
            "potential is not finite at grid index {i} ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// The `n_lowest` eigenpairs of `matrix`, ascending in eigenvalue.
pub fn solve_symmetric(matrix: &SymmetricMatrix, n_lowest: usize) -> Result<Vec<Eigenpair>> {
    let dim = matrix.dim();
    if n_lowest == 0 || n_lowest > dim {
        return Err(Error::Domain(format!(
            "requested {n_lowest} eigenpairs of a {dim}x{dim} matrix"
        )));
    }
    let evd = matrix
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigensolver ({dim}x{dim}): {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    Ok((0..n_lowest)
        .map(|k| Eigenpair {
            value: s[k],
            vector: (0..dim).map(|i| u[(i, k)]).collect(),
        })
        .collect())
}

/// All eigenvalues of `matrix`, ascending.
pub fn symmetric_eigenvalues(matrix: &SymmetricMatrix) -> Result<Vec<f64>> {
    let dim = matrix.dim();
    matrix
        .as_mat()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigensolver ({dim}x{dim}): {e:?}")))
}

/// Fourier-grid first-derivative matrix, exactly antisymmetric:
/// `D_ij = (π/L)(−1)^(i−j) / sin(π(i−j)/N)` with `L = N·Δr`.
pub fn spectral_derivative_matrix(grid: &Grid1D) -> Result<Matrix> {
    let n = grid.n_points();
    if n % 2 == 0 {
        return Err(Error::config("n_points", "derivative matrix needs an odd grid"));
    }
    let scale = PI / (n as f64 * grid.delta_r());
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let k = i - j;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let v = scale * sign / (PI * k as f64 / n as f64).sin();
            d[(i, j)] = v;
            d[(j, i)] = -v;
        }
    }
    Ok(d)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), v.len(), "matrix-vector shape mismatch");
    let mut out = vec![0.0; m.nrows()];
    for (j, vj) in v.iter().enumerate() {
        if *vj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
