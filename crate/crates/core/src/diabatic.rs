//! Three-state diabatization by two successive plane rotations, first-order
//! non-adiabatic couplings (Hellmann-Feynman and rotation model) and the
//! second-order couplings `B = A·A`.

use std::f64::consts::{FRAC_PI_4, PI};

use log::warn;

use crate::bo::{solve_nuclear_on_curve, ElectronicScan, VibronicState};
use crate::grid::{dot, Grid1D};
use crate::parallel::try_map_indexed;
use crate::potentials::ElectronicModel;
use crate::{Error, Result};

/// Gap below which Hellmann-Feynman couplings are masked.
pub const GAP_THRESHOLD: f64 = 1e-8;

/// A small square matrix at every point of a nuclear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub r_grid: Grid1D,
    dim: usize,
    data: Vec<f64>,
}

impl MatrixField {
    pub fn zeros(r_grid: Grid1D, dim: usize) -> Self {
        Self {
            r_grid,
            dim,
            data: vec![0.0; r_grid.n_points() * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, j: usize, a: usize, b: usize) -> usize {
        (j * self.dim + a) * self.dim + b
    }

    pub fn get(&self, j: usize, a: usize, b: usize) -> f64 {
        self.data[self.offset(j, a, b)]
    }

    pub fn set(&mut self, j: usize, a: usize, b: usize, v: f64) {
        let k = self.offset(j, a, b);
        self.data[k] = v;
    }

    /// Element `(a, b)` along the grid.
    pub fn component(&self, a: usize, b: usize) -> Vec<f64> {
        (0..self.r_grid.n_points()).map(|j| self.get(j, a, b)).collect()
    }

    fn from_blocks(r_grid: Grid1D, dim: usize, blocks: Vec<Vec<f64>>) -> Self {
        Self {
            r_grid,
            dim,
            data: blocks.into_iter().flatten().collect(),
        }
    }
}

/// Hellmann-Feynman couplings with the grid points where a gap was too small.
#[derive(Debug, Clone)]
pub struct NacResult {
    pub a: MatrixField,
    /// `(j, n, n')` triples that were masked to zero.
    pub masked: Vec<(usize, usize, usize)>,
}

/// `A_nn'(R) = ⟨φ_n|∂_R H_e|φ_n'⟩ / (E_n' − E_n)`, antisymmetric, zero diagonal.
pub fn nac_hellmann_feynman<M: ElectronicModel + ?Sized>(
    scan: &ElectronicScan,
    model: &M,
) -> Result<NacResult> {
    let ns = scan.n_states();
    let r_grid = scan.r_grid;
    let rows = try_map_indexed(r_grid.n_points(), |j| {
        let r = r_grid.point(j);
        let dv = model.potential_dr_on_grid(&scan.x_grid, r)?;
        let mut block = vec![0.0; ns * ns];
        let mut masked = Vec::new();
        for n in 0..ns {
            let hphi: Vec<f64> = scan.state(n, j).iter().zip(&dv).map(|(p, d)| p * d).collect();
            for m in n + 1..ns {
                let gap = scan.energy(m, j) - scan.energy(n, j);
                if gap.abs() < GAP_THRESHOLD {
                    masked.push((j, n, m));
                    continue;
                }
                let a = dot(&hphi, scan.state(m, j)) / gap;
                block[n * ns + m] = a;
                block[m * ns + n] = -a;
            }
        }
        Ok::<_, Error>((block, masked))
    })?;
    let mut masked = Vec::new();
    let mut blocks = Vec::with_capacity(rows.len());
    for (b, m) in rows {
        blocks.push(b);
        masked.extend(m);
    }
    if !masked.is_empty() {
        warn!("{} near-degenerate couplings masked", masked.len());
    }
    Ok(NacResult {
        a: MatrixField::from_blocks(r_grid, ns, blocks),
        masked,
    })
}

/// `angle(R) = K·erf((R − R_c)/Γ) + K₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationAngleModel {
    pub k: f64,
    pub k0: f64,
    pub rc: f64,
    pub gamma: f64,
}

impl RotationAngleModel {
    pub fn angle(&self, r: f64) -> f64 {
        self.k * libm::erf((r - self.rc) / self.gamma) + self.k0
    }

    /// `2K/(√π Γ) · exp(−(R − R_c)²/Γ²)`.
    pub fn derivative(&self, r: f64) -> f64 {
        gaussian(self.k, self.rc, self.gamma, r)
    }

    pub fn constant(angle: f64) -> Self {
        Self {
            k: 0.0,
            k0: angle,
            rc: 0.0,
            gamma: 1.0,
        }
    }
}

fn gaussian(k: f64, rc: f64, gamma: f64, r: f64) -> f64 {
    let u = (r - rc) / gamma;
    2.0 * k / (PI.sqrt() * gamma) * (-u * u).exp()
}

/// Least-squares Gaussian fit of an angle derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub k: f64,
    pub rc: f64,
    pub gamma: f64,
    /// Root-mean-square residual over the fitted samples.
    pub rms: f64,
    pub iterations: usize,
}

/// Fits `y ≈ 2K/(√πΓ) exp(−(R − R_c)²/Γ²)`. With `fixed_k` the amplitude is
/// held and only `R_c`, `Γ` are adjusted.
///
/// Levenberg-Marquardt in `(K, R_c, ln Γ)` from a deterministic start at
/// the largest `|y|` sample.
pub fn fit_gaussian(r: &[f64], y: &[f64], fixed_k: Option<f64>) -> Result<GaussianFit> {
    if r.len() != y.len() || r.len() < 4 {
        return Err(Error::Fit(format!(
            "need matching samples (at least 4), got {} and {}",
            r.len(),
            y.len()
        )));
    }
    let (peak, &h) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty");
    if h == 0.0 {
        return Err(Error::Fit("coupling is identically zero".into()));
    }
    let cut = h.abs() / std::f64::consts::E;
    let left = (0..peak).rev().find(|&i| y[i].abs() < cut).unwrap_or(0);
    let right = (peak..y.len()).find(|&i| y[i].abs() < cut).unwrap_or(y.len() - 1);
    let gamma0 = (0.5 * (r[right] - r[left])).max(1e-3 * (r[r.len() - 1] - r[0]) / r.len() as f64);
    let k0 = fixed_k.unwrap_or(h * PI.sqrt() * gamma0 / 2.0);

    let free_k = fixed_k.is_none();
    let mut p = [k0, r[peak], gamma0.ln()];
    let cost = |p: &[f64; 3]| -> f64 {
        r.iter()
            .zip(y)
            .map(|(ri, yi)| (gaussian(p[0], p[1], p[2].exp(), *ri) - yi).powi(2))
            .sum()
    };
    let mut c = cost(&p);
    let mut mu = 1e-3;
    let mut history = vec![c];
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..500 {
        iterations = it + 1;
        let g = p[2].exp();
        // normal equations over the active parameters
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (ri, yi) in r.iter().zip(y) {
            let u = (ri - p[1]) / g;
            let base = gaussian(1.0, p[1], g, *ri);
            let f = p[0] * base;
            let jac = [
                if free_k { base } else { 0.0 },
                f * 2.0 * u / g,
                f * (2.0 * u * u - 1.0),
            ];
            let res = f - yi;
            for a in 0..3 {
                jtr[a] += jac[a] * res;
                for b in 0..3 {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        if !free_k {
            jtj[0] = [0.0; 3];
            jtj[1][0] = 0.0;
            jtj[2][0] = 0.0;
            jtj[0][0] = 1.0;
            jtr[0] = 0.0;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut m = jtj;
            for a in 0..3 {
                m[a][a] += mu * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve3(m, jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial = [p[0] - step[0], p[1] - step[1], p[2] - step[2]];
            let ct = cost(&trial);
            if ct.is_finite() && ct <= c {
                let rel = (c - ct) / c.max(1e-300);
                p = trial;
                c = ct;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if rel < 1e-15 || step.iter().all(|s| s.abs() < 1e-13) {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        history.push(c);
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged || !c.is_finite() {
        return Err(Error::Fit(format!(
            "Gaussian fit did not converge; residual history {:?}",
            &history[history.len().saturating_sub(8)..]
        )));
    }
    Ok(GaussianFit {
        k: p[0],
        rc: p[1],
        gamma: p[2].exp(),
        rms: (c / r.len() as f64).sqrt(),
        iterations,
    })
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if !(d.abs() > 1e-300) {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = b[row];
        }
        *xc = det(&mc) / d;
    }
    Some(x)
}

/// How the fitted angle amplitudes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeMode {
    /// `θ` spans `π/2` and `φ` spans `−∫A₂₃dR`; only `R_c`, `Γ` are fitted.
    Pinned,
    /// Amplitude, centre and width all fitted.
    Free,
}

/// Fitted rotation angles with their residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleFits {
    pub theta: RotationAngleModel,
    pub phi: RotationAngleModel,
    pub theta_fit: GaussianFit,
    pub phi_fit: GaussianFit,
}

/// Fits both rotation angles to the couplings of states (1,2) and (2,3).
///
/// The smooth-diabatic condition for the rotations used here is
/// `∂θ/∂R = −A₁₂` and `∂φ/∂R = −A₂₃`. `θ` runs from `±π/2` on the left of
/// its crossing to 0 on the right; `φ` runs from 0 on the left to its full
/// value on the right.
pub fn fit_rotation_angles(a: &MatrixField, mode: AmplitudeMode) -> Result<AngleFits> {
    if a.dim() < 3 {
        return Err(Error::Fit(format!("need 3 coupled states, got {}", a.dim())));
    }
    let r = a.r_grid.points();
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    let t_data = neg(a.component(0, 1));
    let p_data = neg(a.component(1, 2));

    let (t_k, p_k) = match mode {
        AmplitudeMode::Free => (None, None),
        AmplitudeMode::Pinned => {
            let peak = t_data.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            let total: f64 = p_data.iter().sum::<f64>() * a.r_grid.delta_r();
            (Some(peak.signum() * FRAC_PI_4), Some(0.5 * total))
        }
    };
    let theta_fit = fit_gaussian(&r, &t_data, t_k)?;
    let phi_fit = fit_gaussian(&r, &p_data, p_k)?;
    Ok(AngleFits {
        theta: RotationAngleModel {
            k: theta_fit.k,
            k0: -theta_fit.k,
            rc: theta_fit.rc,
            gamma: theta_fit.gamma,
        },
        phi: RotationAngleModel {
            k: phi_fit.k,
            k0: phi_fit.k,
            rc: phi_fit.rc,
            gamma: phi_fit.gamma,
        },
        theta_fit,
        phi_fit,
    })
}

pub type Mat3 = [[f64; 3]; 3];

/// `U₁(θ)`, mixing states 1 and 2.
pub fn rotation_12(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// `U₂(φ)`, mixing states 2 and 3.
pub fn rotation_23(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Total rotation `U_T = U₁(θ) U₂(φ)`.
pub fn total_rotation(theta: f64, phi: f64) -> Mat3 {
    mat3_mul(&rotation_12(theta), &rotation_23(phi))
}

/// Diabatic potential matrix from adiabatic energies and the two angles.
pub fn diabatic_matrix(v: [f64; 3], theta: f64, phi: f64) -> Mat3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (st2, ct2) = (st * st, ct * ct);
    let (sp2, cp2) = (sp * sp, cp * cp);
    let mixed = v[0] * st2 + v[1] * ct2;
    let d1 = v[0] * ct2 + v[1] * st2;
    let d2 = mixed * cp2 + v[2] * sp2;
    let d3 = mixed * sp2 + v[2] * cp2;
    let half_split = 0.5 * (v[0] - v[1]) * (2.0 * theta).sin();
    let v12 = half_split * cp;
    let v13 = half_split * sp;
    let v23 = 0.5 * (mixed - v[2]) * (2.0 * phi).sin();
    [[d1, v12, v13], [v12, d2, v23], [v13, v23, d3]]
}

/// Couplings implied by the angle model:
/// `A = U_T ∂_R U_Tᵀ` and `B = A·A`.
pub fn rotation_model_couplings(
    r_grid: &Grid1D,
    theta: &RotationAngleModel,
    phi: &RotationAngleModel,
) -> (MatrixField, MatrixField) {
    let mut a = MatrixField::zeros(*r_grid, 3);
    for j in 0..r_grid.n_points() {
        let r = r_grid.point(j);
        let (t, p) = (theta.angle(r), phi.angle(r));
        let (dt, dp) = (theta.derivative(r), phi.derivative(r));
        let u = total_rotation(t, p);
        let du1 = scale3(&drotation_12(t), dt);
        let du2 = scale3(&drotation_23(p), dp);
        let du = add3(
            &mat3_mul(&du1, &rotation_23(p)),
            &mat3_mul(&rotation_12(t), &du2),
        );
        let am = mat3_mul(&u, &mat3_transpose(&du));
        for n in 0..3 {
            for m in 0..3 {
                // exact antisymmetry
                let v = if n == m { 0.0 } else { 0.5 * (am[n][m] - am[m][n]) };
                a.set(j, n, m, v);
            }
        }
    }
    let b = second_order_b(&a);
    (a, b)
}

fn drotation_12(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    [[-s, c, 0.0], [-c, -s, 0.0], [0.0, 0.0, 0.0]]
}

fn drotation_23(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    [[0.0, 0.0, 0.0], [0.0, -s, c], [0.0, -c, -s]]
}

fn scale3(a: &Mat3, s: f64) -> Mat3 {
    a.map(|row| row.map(|x| x * s))
}

fn add3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = *a;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] += b[i][j];
        }
    }
    c
}

/// `B_nn'(R) = Σ_l A_nl(R) A_ln'(R)`.
pub fn second_order_b(a: &MatrixField) -> MatrixField {
    let d = a.dim();
    let mut b = MatrixField::zeros(a.r_grid, d);
    for j in 0..a.r_grid.n_points() {
        for n in 0..d {
            for m in 0..=n {
                let v: f64 = (0..d).map(|l| a.get(j, n, l) * a.get(j, l, m)).sum();
                b.set(j, n, m, v);
                b.set(j, m, n, v);
            }
        }
    }
    b
}

/// Diabatic potentials, couplings and rotation angles on the nuclear grid.
#[derive(Debug, Clone)]
pub struct DiabaticResult {
    pub fits: AngleFits,
    /// `V^D` at every grid point.
    pub vd: MatrixField,
    /// First-order couplings of the rotation model.
    pub a: MatrixField,
    /// Second-order couplings `A·A`.
    pub b: MatrixField,
}

impl DiabaticResult {
    pub fn curve(&self, n: usize) -> Vec<f64> {
        self.vd.component(n, n)
    }

    pub fn angles_at(&self, r: f64) -> (f64, f64) {
        (self.fits.theta.angle(r), self.fits.phi.angle(r))
    }
}

/// Builds diabatic curves from a three-state scan and fitted angles.
pub fn diabatize(scan: &ElectronicScan, fits: AngleFits) -> Result<DiabaticResult> {
    if scan.n_states() < 3 {
        return Err(Error::Domain(format!(
            "diabatization needs 3 electronic states, scan has {}",
            scan.n_states()
        )));
    }
    let r_grid = scan.r_grid;
    let mut vd = MatrixField::zeros(r_grid, 3);
    for j in 0..r_grid.n_points() {
        let r = r_grid.point(j);
        let v = [scan.energy(0, j), scan.energy(1, j), scan.energy(2, j)];
        let m = diabatic_matrix(v, fits.theta.angle(r), fits.phi.angle(r));
        for n in 0..3 {
            for k in 0..3 {
                vd.set(j, n, k, m[n][k]);
            }
        }
    }
    let (a, b) = rotation_model_couplings(&r_grid, &fits.theta, &fits.phi);
    Ok(DiabaticResult { fits, vd, a, b })
}

/// Scan whose states are the diabatic electronic functions
/// `φ^D_k = Σ_n φ^A_n (U_T)_nk` and whose energies are the diagonal of `V^D`.
pub fn diabatic_scan(scan: &ElectronicScan, result: &DiabaticResult) -> Result<ElectronicScan> {
    let r_grid = scan.r_grid;
    let nx = scan.x_grid.n_points();
    let mut energies = Vec::with_capacity(r_grid.n_points());
    let mut states = Vec::with_capacity(r_grid.n_points());
    for j in 0..r_grid.n_points() {
        let (t, p) = result.angles_at(r_grid.point(j));
        let u = total_rotation(t, p);
        energies.push((0..3).map(|k| result.vd.get(j, k, k)).collect());
        states.push(
            (0..3)
                .map(|k| {
                    (0..nx)
                        .map(|i| (0..3).map(|n| scan.state(n, j)[i] * u[n][k]).sum())
                        .collect()
                })
                .collect(),
        );
    }
    ElectronicScan::from_parts(scan.x_grid, r_grid, energies, states)
}

/// Vibrational states on each diabatic curve below `cutoff`.
pub fn diabatic_nuclear_solve(
    result: &DiabaticResult,
    nuclear_mass: f64,
    cutoff: f64,
) -> Result<Vec<Vec<VibronicState>>> {
    (0..3)
        .map(|n| solve_nuclear_on_curve(&result.vd.r_grid, &result.curve(n), n, nuclear_mass, cutoff))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sandwich(v: [f64; 3], u: &Mat3) -> Mat3 {
        let d = [[v[0], 0.0, 0.0], [0.0, v[1], 0.0], [0.0, 0.0, v[2]]];
        mat3_mul(&mat3_transpose(u), &mat3_mul(&d, u))
    }

    #[test]
    fn closed_forms_match_rotation() {
        let v = [-0.41, -0.3, -0.12];
        for &(t, p) in &[(0.3, 1.1), (-0.7, 0.2), (1.4, -0.9)] {
            let m = diabatic_matrix(v, t, p);
            let s = sandwich(v, &total_rotation(t, p));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((m[i][j] - s[i][j]).abs() < 1e-15, "({i},{j})");
                }
            }
            let tr: f64 = (0..3).map(|i| m[i][i]).sum();
            assert!((tr - v.iter().sum::<f64>()).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_and_swap() {
        let v = [1.0, 2.0, 3.0];
        let m = diabatic_matrix(v, 0.0, 0.0);
        assert_eq!(m, [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let m = diabatic_matrix(v, FRAC_PI_2, 0.0);
        assert!((m[0][0] - 2.0).abs() < 1e-15 && (m[1][1] - 1.0).abs() < 1e-15);
        assert!(m[0][1].abs() < 1e-15 && m[0][2].abs() < 1e-15 && m[1][2].abs() < 1e-15);
    }

    #[test]
    fn fit_round_trip() {
        let g = Grid1D::spanning(-6.0, 6.0, 601).unwrap();
        let r = g.points();
        let (k, rc, gamma) = (-0.63, 0.8, 0.45);
        let y: Vec<f64> = r.iter().map(|x| gaussian(k, rc, gamma, *x)).collect();
        let f = fit_gaussian(&r, &y, None).unwrap();
        assert!((f.k - k).abs() < 1e-6 && (f.rc - rc).abs() < 1e-6 && (f.gamma - gamma).abs() < 1e-6);
        let area: f64 = y.iter().sum::<f64>() * g.delta_r();
        assert!((area - 2.0 * k).abs() < 1e-10);
        let pinned = fit_gaussian(&r, &y, Some(k)).unwrap();
        assert!((pinned.rc - rc).abs() < 1e-8 && (pinned.gamma - gamma).abs() < 1e-8);
    }

    #[test]
    fn model_couplings_follow_angles() {
        let g = Grid1D::spanning(-8.0, 8.0, 161).unwrap();
        let theta = RotationAngleModel { k: -FRAC_PI_4, k0: FRAC_PI_4, rc: -3.0, gamma: 0.3 };
        let phi = RotationAngleModel { k: 0.6, k0: 0.6, rc: 1.2, gamma: 1.0 };
        let (a, b) = rotation_model_couplings(&g, &theta, &phi);
        for j in 0..g.n_points() {
            let r = g.point(j);
            // near each crossing the other angle is constant
            if r < -1.0 {
                assert!((a.get(j, 0, 1) + theta.derivative(r)).abs() < 1e-6);
            }
            if r > -1.0 {
                assert!((a.get(j, 1, 2) + phi.derivative(r)).abs() < 1e-12);
            }
            for n in 0..3 {
                assert_eq!(a.get(j, n, n), 0.0);
                for m in 0..3 {
                    assert_eq!(a.get(j, n, m), -a.get(j, m, n));
                    assert_eq!(b.get(j, n, m), b.get(j, m, n));
                }
            }
        }
    }

    #[test]
    fn b_of_single_rotation() {
        let g = Grid1D::new(0.0, 1.0, 1).unwrap();
        let mut a = MatrixField::zeros(g, 2);
        let c = 0.37;
        a.set(0, 0, 1, c);
        a.set(0, 1, 0, -c);
        let b = second_order_b(&a);
        assert_eq!(b.get(0, 0, 0), -c * c);
        assert_eq!(b.get(0, 1, 1), -c * c);
        assert_eq!(b.get(0, 0, 1), 0.0);
        assert_eq!(second_order_b(&MatrixField::zeros(g, 3)), MatrixField::zeros(g, 3));
    }
}
