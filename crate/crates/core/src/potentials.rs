//! Model potentials: soft-core H₂⁺ with an R-dependent softening parameter,
//! and the erf-screened Shin-Metiu model. Includes calibration of the
//! softening table against a reference ground-state curve.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::grid::{build_fgh_hamiltonian, symmetric_eigenvalues, Grid1D, GridFunction};
use crate::parallel::try_map_indexed;
use crate::{Error, Result};

/// Proton mass in electron masses.
pub const PROTON_MASS: f64 = 1836.152673;

/// Reference ground-state curve of 3D H₂⁺ shipped with the crate.
pub const H2P_REFERENCE_CURVE: &str = include_str!("../data/h2p_1s_sigma_g.dat");

/// Softening table calibrated on the default H₂⁺ electron grid.
pub const H2P_SOFTENING_CACHE: &str = include_str!("../data/h2p_softening.dat");

/// An electron-nuclear model on one electronic and one nuclear coordinate.
pub trait ElectronicModel: Sync {
    /// Potential energy `U(x, R)` including nuclear repulsion.
    fn potential(&self, x: f64, r: f64) -> Result<f64>;

    /// `∂U/∂R`, needed for Hellmann-Feynman couplings.
    fn potential_dr(&self, x: f64, r: f64) -> Result<f64> {
        let _ = (x, r);
        Err(Error::Domain("model provides no analytic ∂U/∂R".into()))
    }

    /// Mass entering the electronic kinetic energy.
    fn electron_mass(&self) -> f64;

    /// Mass entering the nuclear kinetic energy `−(1/2M) ∂²/∂R²`.
    fn nuclear_mass(&self) -> f64;

    /// Canonical parameter string, used for cache keys.
    fn fingerprint(&self) -> String;

    fn potential_on_grid(&self, x_grid: &Grid1D, r: f64) -> Result<GridFunction> {
        let values = x_grid
            .points()
            .into_iter()
            .map(|x| self.potential(x, r))
            .collect::<Result<Vec<_>>>()?;
        GridFunction::new(*x_grid, values)
    }

    fn potential_dr_on_grid(&self, x_grid: &Grid1D, r: f64) -> Result<Vec<f64>> {
        x_grid
            .points()
            .into_iter()
            .map(|x| self.potential_dr(x, r))
            .collect()
    }
}

/// Piecewise-linear softening parameter `a(R)`, clamped outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct SofteningTable {
    rows: Vec<(f64, f64)>,
}

impl SofteningTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("softening_table", "table is empty"));
        }
        if let Some(w) = rows.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config(
                "softening_table",
                format!("R values must strictly increase ({} then {})", w[0].0, w[1].0),
            ));
        }
        if let Some(r) = rows.iter().find(|r| !(r.1 > 0.0 && r.1.is_finite())) {
            return Err(Error::config(
                "softening_table",
                format!("a(R) must be positive, got {} at R = {}", r.1, r.0),
            ));
        }
        Ok(Self { rows })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::new(vec![(1.0, a)])
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn eval(&self, r: f64) -> f64 {
        let rows = &self.rows;
        if r <= rows[0].0 {
            return rows[0].1;
        }
        let last = rows[rows.len() - 1];
        if r >= last.0 {
            return last.1;
        }
        let k = rows.partition_point(|row| row.0 <= r);
        let (r0, a0) = rows[k - 1];
        let (r1, a1) = rows[k];
        a0 + (a1 - a0) * (r - r0) / (r1 - r0)
    }
}

/// Soft-core 1D H₂⁺.
#[derive(Debug, Clone, PartialEq)]
pub struct H2pModel {
    pub z_alpha: f64,
    pub z_beta: f64,
    pub proton_mass: f64,
    pub electron_mass: f64,
    pub softening: SofteningTable,
}

impl H2pModel {
    /// Unit charges, physical proton mass, electron reduced mass `2M/(2M+1)`.
    pub fn new(softening: SofteningTable) -> Self {
        Self {
            z_alpha: 1.0,
            z_beta: 1.0,
            proton_mass: PROTON_MASS,
            electron_mass: electron_reduced_mass(PROTON_MASS),
            softening,
        }
    }
}

/// Electron reduced mass against two nuclei of mass `proton_mass`.
pub fn electron_reduced_mass(proton_mass: f64) -> f64 {
    2.0 * proton_mass / (2.0 * proton_mass + 1.0)
}

/// `Z_αZ_β/R − Z_α/√((x+R/2)²+a) − Z_β/√((x−R/2)²+a)`.
pub fn h2p_potential(model: &H2pModel, x: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("H2+ needs R > 0, got {r}")));
    }
    let a = model.softening.eval(r);
    Ok(h2p_potential_with(model.z_alpha, model.z_beta, a, x, r))
}

fn h2p_potential_with(za: f64, zb: f64, a: f64, x: f64, r: f64) -> f64 {
    let h = 0.5 * r;
    za * zb / r - za / ((x + h).powi(2) + a).sqrt() - zb / ((x - h).powi(2) + a).sqrt()
}

impl ElectronicModel for H2pModel {
    fn potential(&self, x: f64, r: f64) -> Result<f64> {
        h2p_potential(self, x, r)
    }

    fn electron_mass(&self) -> f64 {
        self.electron_mass
    }

    fn nuclear_mass(&self) -> f64 {
        0.5 * self.proton_mass
    }

    fn fingerprint(&self) -> String {
        let mut s = format!(
            "h2p z=({:e},{:e}) mp={:e} mu={:e} a=[",
            self.z_alpha, self.z_beta, self.proton_mass, self.electron_mass
        );
        for (r, a) in self.softening.rows() {
            let _ = write!(s, "({r:e},{a:e})");
        }
        s.push(']');
        s
    }
}

/// Shin-Metiu model: two fixed ions at `±L/2`, one moving ion at `R`, one
/// electron, all interactions with the electron erf-screened.
#[derive(Debug, Clone, PartialEq)]
pub struct ShinMetiuModel {
    pub l: f64,
    pub z_alpha: f64,
    pub z_beta: f64,
    pub z_gamma: f64,
    pub rc_alpha: f64,
    pub rc_beta: f64,
    pub rc_gamma: f64,
    pub moving_ion_mass: f64,
    /// Distance the moving ion must keep from either fixed ion.
    pub margin: f64,
}

impl Default for ShinMetiuModel {
    fn default() -> Self {
        Self {
            l: 18.897,
            z_alpha: 1.0,
            z_beta: 1.0,
            z_gamma: 1.0,
            rc_alpha: 3.0,
            rc_beta: 2.2,
            rc_gamma: 4.0,
            moving_ion_mass: PROTON_MASS,
            margin: 0.5,
        }
    }
}

impl ShinMetiuModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) {
            return Err(Error::config("model.L", format!("must be positive, got {}", self.l)));
        }
        for (name, rc) in [
            ("model.rc_alpha", self.rc_alpha),
            ("model.rc_beta", self.rc_beta),
            ("model.rc_gamma", self.rc_gamma),
        ] {
            if !(rc > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {rc}")));
            }
        }
        if !(self.margin > 0.0 && self.margin < 0.5 * self.l) {
            return Err(Error::config(
                "model.margin",
                format!("must lie in (0, L/2), got {}", self.margin),
            ));
        }
        Ok(())
    }

    /// Largest admissible `|R|`.
    pub fn r_limit(&self) -> f64 {
        0.5 * self.l - self.margin
    }

    fn check_r(&self, r: f64) -> Result<()> {
        if r.abs() < self.r_limit() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "|R| = {} is not below L/2 - margin = {}",
                r.abs(),
                self.r_limit()
            )))
        }
    }
}

/// `erf(d/Rc)/d`, continued to `2/(√π·Rc)` at contact.
pub fn screened_coulomb(d: f64, rc: f64) -> f64 {
    let d = d.abs();
    if d < 1e-8 {
        2.0 / (PI.sqrt() * rc)
    } else {
        libm::erf(d / rc) / d
    }
}

/// Derivative of [`screened_coulomb`] with respect to the distance.
pub fn screened_coulomb_derivative(d: f64, rc: f64) -> f64 {
    let d = d.abs();
    let s = d / rc;
    if s < 1e-2 {
        let s2 = s * s;
        2.0 / (PI.sqrt() * rc * rc) * s * (-2.0 / 3.0 + s2 * (2.0 / 5.0 - s2 / 7.0))
    } else {
        2.0 / (PI.sqrt() * rc) * (-s * s).exp() / d - libm::erf(s) / (d * d)
    }
}

/// Shin-Metiu `U(x, R)`.
pub fn shin_metiu_potential(model: &ShinMetiuModel, x: f64, r: f64) -> Result<f64> {
    model.check_r(r)?;
    let h = 0.5 * model.l;
    let nuclear = model.z_alpha * model.z_gamma / (r + h).abs()
        + model.z_beta * model.z_gamma / (r - h).abs();
    let electronic = model.z_alpha * screened_coulomb(x + h, model.rc_alpha)
        + model.z_beta * screened_coulomb(x - h, model.rc_beta)
        + model.z_gamma * screened_coulomb(x - r, model.rc_gamma);
    Ok(nuclear - electronic)
}

/// Shin-Metiu `∂U/∂R`.
pub fn shin_metiu_potential_dr(model: &ShinMetiuModel, x: f64, r: f64) -> Result<f64> {
    model.check_r(r)?;
    let h = 0.5 * model.l;
    let nuclear = -model.z_alpha * model.z_gamma * (r + h).signum() / (r + h).powi(2)
        - model.z_beta * model.z_gamma * (r - h).signum() / (r - h).powi(2);
    let u = x - r;
    let electronic = model.z_gamma * screened_coulomb_derivative(u, model.rc_gamma) * u.signum();
    Ok(nuclear + electronic)
}

impl ElectronicModel for ShinMetiuModel {
    fn potential(&self, x: f64, r: f64) -> Result<f64> {
        shin_metiu_potential(self, x, r)
    }

    fn potential_dr(&self, x: f64, r: f64) -> Result<f64> {
        shin_metiu_potential_dr(self, x, r)
    }

    fn electron_mass(&self) -> f64 {
        1.0
    }

    fn nuclear_mass(&self) -> f64 {
        self.moving_ion_mass
    }

    fn fingerprint(&self) -> String {
        format!(
            "shin_metiu L={:e} z=({:e},{:e},{:e}) rc=({:e},{:e},{:e}) m={:e} margin={:e}",
            self.l,
            self.z_alpha,
            self.z_beta,
            self.z_gamma,
            self.rc_alpha,
            self.rc_beta,
            self.rc_gamma,
            self.moving_ion_mass,
            self.margin
        )
    }
}

/// Parses two-column `R E` text with `#` comments.
pub fn parse_two_columns(text: &str, origin: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: k + 1,
            message,
        };
        let mut it = line.split_whitespace();
        let mut next = || -> Result<f64> {
            let tok = it.next().ok_or_else(|| parse_err("expected two columns".into()))?;
            tok.parse::<f64>()
                .map_err(|e| parse_err(format!("bad number `{tok}`: {e}")))
        };
        let r = next()?;
        let e = next()?;
        rows.push((r, e));
    }
    Ok(rows)
}

/// Value of a `# key: value` header line, if present.
pub fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty())
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            (k.trim() == key).then(|| v.trim())
        })
}

/// Replaces the energy of the last (largest-R) row.
pub fn with_dissociation_limit(mut reference: Vec<(f64, f64)>, limit: f64) -> Vec<(f64, f64)> {
    if let Some(last) = reference.last_mut() {
        last.1 = limit;
    }
    reference
}

/// Hash of every input that determines a calibrated softening table.
pub fn calibration_hash(model: &H2pModel, reference: &[(f64, f64)], x_grid: &Grid1D) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "z=({:e},{:e}) mu={:e} grid=({:e},{:e},{})\n",
        model.z_alpha,
        model.z_beta,
        model.electron_mass,
        x_grid.r_min(),
        x_grid.delta_r(),
        x_grid.n_points()
    ));
    for (r, e) in reference {
        h.update(format!("{r:e} {e:e}\n"));
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Serializes a calibrated table with its input hash.
pub fn format_softening_cache(table: &SofteningTable, hash: &str) -> String {
    let mut s = String::new();
    s.push_str("# H2+ softening parameter a(R) calibrated against the reference curve\n");
    let _ = writeln!(s, "# hash: {hash}");
    s.push_str("# columns: R (bohr), a (bohr^2)\n");
    for (r, a) in table.rows() {
        let _ = writeln!(s, "{r:.16e} {a:.16e}");
    }
    s
}

/// Parses a cached table, returning it with its recorded hash.
pub fn parse_softening_cache(text: &str, origin: &Path) -> Result<(SofteningTable, Option<String>)> {
    let rows = parse_two_columns(text, origin)?;
    let hash = header_value(text, "hash").map(str::to_owned);
    Ok((SofteningTable::new(rows)?, hash))
}

pub fn read_softening_cache(path: &Path) -> Result<(SofteningTable, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_softening_cache(&text, path)
}

const A_LOWER: f64 = 1e-3;
const A_UPPER: f64 = 1e3;

/// Lowest electronic eigenvalue of the soft-core model at fixed `(R, a)`.
fn lowest_energy(model: &H2pModel, x_grid: &Grid1D, r: f64, a: f64) -> Result<f64> {
    let v = GridFunction::from_fn(*x_grid, |x| {
        h2p_potential_with(model.z_alpha, model.z_beta, a, x, r)
    });
    let h = build_fgh_hamiltonian(x_grid, model.electron_mass, &v)?;
    Ok(symmetric_eigenvalues(&h)?[0])
}

/// Per-row softening parameter such that the lowest eigenvalue of the 1D
/// electronic Hamiltonian reproduces `E_ref(R)` within 1e−6 hartree.
///
/// Each row is solved independently: a bracket around `a = 1` is widened
/// geometrically inside `[1e−3, 1e3]` until the residual changes sign, then
/// bisected in `ln a`.
pub fn calibrate_softening(
    model: &H2pModel,
    reference: &[(f64, f64)],
    x_grid: &Grid1D,
) -> Result<SofteningTable> {
    let rows = try_map_indexed(reference.len(), |k| {
        let (r, e_ref) = reference[k];
        calibrate_row(model, x_grid, r, e_ref).map(|a| (r, a))
    })?;
    SofteningTable::new(rows)
}

fn calibrate_row(model: &H2pModel, x_grid: &Grid1D, r: f64, e_ref: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Calibration {
            r,
            message: "R must be positive".into(),
        });
    }
    let f = |a: f64| lowest_energy(model, x_grid, r, a).map(|e| e - e_ref);
    // the lowest level rises monotonically with the softening
    let (mut lo, mut hi) = (0.5, 2.0);
    let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
    while f_lo > 0.0 && lo > A_LOWER {
        hi = lo;
        f_hi = f_lo;
        lo = (lo / 4.0).max(A_LOWER);
        f_lo = f(lo)?;
    }
    while f_hi < 0.0 && hi < A_UPPER {
        lo = hi;
        f_lo = f_hi;
        hi = (hi * 4.0).min(A_UPPER);
        f_hi = f(hi)?;
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Calibration {
            r,
            message: format!(
                "no sign change for a in [{A_LOWER}, {A_UPPER}] (residuals {f_lo:e}, {f_hi:e})"
            ),
        });
    }
    let mut mid = lo;
    let mut f_mid = f_lo;
    for _ in 0..200 {
        mid = (lo * hi).sqrt();
        f_mid = f(mid)?;
        if f_mid.abs() < 1e-11 || hi / lo - 1.0 < 1e-13 {
            break;
        }
        if f_mid > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if f_mid.abs() > 1e-6 {
        return Err(Error::Calibration {
            r,
            message: format!("bisection stalled with residual {f_mid:e}"),
        });
    }
    Ok(mid)
}
