//! Born-Oppenheimer electronic scans over the nuclear grid and nuclear
//! eigenproblems on the resulting potential energy curves.

use faer::Mat;
use log::warn;

use crate::grid::{
    check_finite_potential, dot, fgh_kinetic_matrix, solve_symmetric, Grid1D, GridFunction,
};
use crate::parallel::try_map_indexed;
use crate::potentials::ElectronicModel;
use crate::{Error, Matrix, Result};

/// Electronic eigenpairs at every nuclear grid point, sign-aligned along R.
#[derive(Debug, Clone)]
pub struct ElectronicScan {
    pub x_grid: Grid1D,
    pub r_grid: Grid1D,
    n_states: usize,
    /// `energies[j][n] = E_n(R_j)`
    energies: Vec<Vec<f64>>,
    /// `states[j][n][i] = φ_n(x_i; R_j)`
    states: Vec<Vec<Vec<f64>>>,
}

impl ElectronicScan {
    /// Assembles a scan from precomputed data and applies the phase sweep.
    pub fn from_parts(
        x_grid: Grid1D,
        r_grid: Grid1D,
        energies: Vec<Vec<f64>>,
        states: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_r = r_grid.n_points();
        if energies.len() != n_r || states.len() != n_r {
            return Err(Error::Domain(format!(
                "scan has {} energy rows and {} state rows for {n_r} R points",
                energies.len(),
                states.len()
            )));
        }
        let n_states = energies.first().map_or(0, Vec::len);
        for j in 0..n_r {
            if energies[j].len() != n_states || states[j].len() != n_states {
                return Err(Error::Domain(format!("ragged scan data at R index {j}")));
            }
            if states[j].iter().any(|s| s.len() != x_grid.n_points()) {
                return Err(Error::Domain(format!(
                    "electronic state length mismatch at R index {j}"
                )));
            }
        }
        let mut scan = Self {
            x_grid,
            r_grid,
            n_states,
            energies,
            states,
        };
        scan.align_phases();
        Ok(scan)
    }

    fn align_phases(&mut self) {
        for n in 0..self.n_states {
            if let Some(first) = self.states.first_mut() {
                let v = &mut first[n];
                let lead = v
                    .iter()
                    .copied()
                    .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
                if lead < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            for j in 1..self.states.len() {
                let (prev, cur) = self.states.split_at_mut(j);
                if dot(&prev[j - 1][n], &cur[0][n]) < 0.0 {
                    cur[0][n].iter_mut().for_each(|x| *x = -*x);
                }
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn energy(&self, n: usize, j: usize) -> f64 {
        self.energies[j][n]
    }

    pub fn state(&self, n: usize, j: usize) -> &[f64] {
        &self.states[j][n]
    }

    /// Potential energy curve `E_n(R_j)` over the whole R grid.
    pub fn pec(&self, n: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[n]).collect()
    }

    /// `φ_n(x_i; R_j)` as an `N_x × N_R` matrix.
    pub fn state_matrix(&self, n: usize) -> Matrix {
        Mat::from_fn(self.x_grid.n_points(), self.r_grid.n_points(), |i, j| {
            self.states[j][n][i]
        })
    }

    /// Overlaps `S_n(R_k, R_l)` for all grid pairs.
    pub fn overlap_matrix(&self, n: usize) -> Matrix {
        self.cross_overlap_matrix(n, n)
    }

    /// `Σ_i φ_n(x_i; R_k) φ_n'(x_i; R_l)` for all grid pairs.
    pub fn cross_overlap_matrix(&self, n: usize, n_prime: usize) -> Matrix {
        let a = self.state_matrix(n);
        if n == n_prime {
            a.transpose() * &a
        } else {
            let b = self.state_matrix(n_prime);
            a.transpose() * &b
        }
    }
}

/// One nuclear eigenfunction on one electronic surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VibronicState {
    pub surface: usize,
    pub index: usize,
    pub energy: f64,
    pub chi: GridFunction,
}

/// Solves the electronic problem at every `R_j` and keeps the `n_states`
/// lowest eigenpairs, sign-aligned so consecutive overlaps are positive.
pub fn scan_electronic<M: ElectronicModel + ?Sized>(
    model: &M,
    x_grid: &Grid1D,
    r_grid: &Grid1D,
    n_states: usize,
) -> Result<ElectronicScan> {
    if n_states == 0 || n_states > x_grid.n_points() {
        return Err(Error::config(
            "states.n_electronic",
            format!(
                "must be in 1..={}, got {n_states}",
                x_grid.n_points()
            ),
        ));
    }
    let kinetic = fgh_kinetic_matrix(x_grid, model.electron_mass())?;
    let solved = try_map_indexed(r_grid.n_points(), |j| {
        let r = r_grid.point(j);
        let at_r = |e: Error| Error::Numeric(format!("electronic solve at R = {r}: {e}"));
        let v = model.potential_on_grid(x_grid, r).map_err(at_r)?;
        check_finite_potential(&v.values).map_err(at_r)?;
        let pairs = solve_symmetric(&kinetic.with_diagonal_added(&v.values), n_states)
            .map_err(at_r)?;
        let energies: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        let states: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.vector).collect();
        Ok::<_, Error>((energies, states))
    })?;
    let (energies, states) = solved.into_iter().unzip();
    ElectronicScan::from_parts(*x_grid, *r_grid, energies, states)
}

/// Vibrational states on surface `n` of the scan below `cutoff`.
pub fn solve_nuclear(
    scan: &ElectronicScan,
    n: usize,
    nuclear_mass: f64,
    cutoff: f64,
) -> Result<Vec<VibronicState>> {
    if n >= scan.n_states() {
        return Err(Error::Domain(format!(
            "surface {n} requested from a scan with {} states",
            scan.n_states()
        )));
    }
    solve_nuclear_on_curve(&scan.r_grid, &scan.pec(n), n, nuclear_mass, cutoff)
}

/// Vibrational states of an arbitrary curve sampled on `r_grid`.
pub fn solve_nuclear_on_curve(
    r_grid: &Grid1D,
    curve: &[f64],
    surface: usize,
    nuclear_mass: f64,
    cutoff: f64,
) -> Result<Vec<VibronicState>> {
    let v = GridFunction::new(*r_grid, curve.to_vec())?;
    let h = crate::grid::build_fgh_hamiltonian(r_grid, nuclear_mass, &v)?;
    let pairs = solve_symmetric(&h, h.dim())?;
    let states: Vec<VibronicState> = pairs
        .into_iter()
        .take_while(|p| p.value < cutoff)
        .enumerate()
        .map(|(m, p)| VibronicState {
            surface,
            index: m,
            energy: p.value,
            chi: GridFunction {
                grid: *r_grid,
                values: canonical_sign(p.vector),
            },
        })
        .collect();
    if states.is_empty() {
        warn!("surface {surface}: no vibrational state below cutoff {cutoff}");
    }
    Ok(states)
}

/// Flips the vector so its first non-negligible amplitude is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Sign changes of `values`, skipping samples below `rel_threshold·max|v|`.
pub fn node_count(values: &[f64], rel_threshold: f64) -> usize {
    let max = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut last_sign = 0.0;
    let mut nodes = 0;
    for v in values.iter().filter(|v| v.abs() > rel_threshold * max) {
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            nodes += 1;
        }
        last_sign = s;
    }
    nodes
}

/// `Ψ(x_i, R_j) = φ_n(x_i; R_j) χ(R_j)` as an `N_x × N_R` matrix.
pub fn bo_total_wavefunction(scan: &ElectronicScan, state: &VibronicState) -> Result<Matrix> {
    if state.surface >= scan.n_states() || state.chi.grid != scan.r_grid {
        return Err(Error::Domain(format!(
            "state ({}, {}) does not belong to this scan",
            state.surface, state.index
        )));
    }
    let chi = &state.chi.values;
    Ok(Mat::from_fn(
        scan.x_grid.n_points(),
        scan.r_grid.n_points(),
        |i, j| scan.state(state.surface, j)[i] * chi[j],
    ))
}

/// `S_n(R_k, R_l) = Σ_i φ_n(x_i; R_k) φ_n(x_i; R_l)`.
pub fn electronic_overlap(scan: &ElectronicScan, n: usize, k: usize, l: usize) -> f64 {
    dot(scan.state(n, k), scan.state(n, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_scan(r_grid: Grid1D, curve: &[f64]) -> ElectronicScan {
        let x = Grid1D::new(0.0, 1.0, 3).unwrap();
        let phi = vec![0.6, 0.0, 0.8];
        ElectronicScan::from_parts(
            x,
            r_grid,
            curve.iter().map(|e| vec![*e]).collect(),
            vec![vec![phi]; r_grid.n_points()],
        )
        .unwrap()
    }

    #[test]
    fn harmonic_curve_spacing() {
        let mass = 1836.0;
        let omega = 0.01;
        let r = Grid1D::spanning(-1.5, 1.5, 201).unwrap();
        let curve: Vec<f64> = r.points().iter().map(|x| 0.5 * mass * omega * omega * x * x).collect();
        let scan = constant_scan(r, &curve);
        let st = solve_nuclear(&scan, 0, mass, 0.055).unwrap();
        assert!(st.len() >= 5);
        for (m, s) in st.iter().enumerate() {
            assert!((s.energy - omega * (m as f64 + 0.5)).abs() < 1e-6 * omega, "{m}");
            assert_eq!(node_count(&s.chi.values, 1e-6), m);
        }
    }

    #[test]
    fn separable_product_and_norms() {
        let r = Grid1D::spanning(-1.0, 1.0, 41).unwrap();
        let curve: Vec<f64> = r.points().iter().map(|x| 50.0 * x * x).collect();
        let scan = constant_scan(r, &curve);
        let st = solve_nuclear(&scan, 0, 10.0, 1e9).unwrap();
        let psi = bo_total_wavefunction(&scan, &st[2]).unwrap();
        let mut total = 0.0;
        for j in 0..r.n_points() {
            let col: f64 = (0..3).map(|i| psi[(i, j)].powi(2)).sum();
            assert!((col - st[2].chi.values[j].powi(2)).abs() < 1e-14);
            total += col;
        }
        assert!((total - 1.0).abs() < 1e-10);
        let sv = psi.singular_values().unwrap();
        assert!(sv[1] < 1e-12 * sv[0]);
    }

    #[test]
    fn empty_when_cutoff_below_ground() {
        let r = Grid1D::spanning(-1.0, 1.0, 21).unwrap();
        let scan = constant_scan(r, &vec![0.0; 21]);
        assert!(solve_nuclear(&scan, 0, 1.0, -1.0).unwrap().is_empty());
        assert!(solve_nuclear(&scan, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn phase_sweep_makes_overlaps_positive() {
        let x = Grid1D::new(0.0, 1.0, 3).unwrap();
        let r = Grid1D::new(0.0, 1.0, 3).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let states = vec![
            vec![vec![1.0, 0.0, 0.0]],
            vec![vec![-s, -s, 0.0]],
            vec![vec![0.0, 1.0, 0.0]],
        ];
        let scan = ElectronicScan::from_parts(x, r, vec![vec![0.0]; 3], states).unwrap();
        for j in 0..2 {
            assert!(electronic_overlap(&scan, 0, j, j + 1) > 0.0);
        }
        assert!((electronic_overlap(&scan, 0, 1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn node_count_ignores_tail_noise() {
        let v = [1e-9, -1e-9, 0.5, 1.0, 0.2, -0.7, -1.0, 1e-9, -1e-9];
        assert_eq!(node_count(&v, 1e-6), 1);
    }
}
