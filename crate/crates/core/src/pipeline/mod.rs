//! Config-driven end-to-end runs: electronic scan, nuclear solves, optional
//! diabatization and Born-Huang coupling, entanglement analysis, and CSV
//! output with provenance headers.

mod cache;
pub mod config;
pub mod goldens;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::bo::{bo_total_wavefunction, scan_electronic, solve_nuclear, ElectronicScan, VibronicState};
use crate::born_huang::{assemble_bh_matrix, bh_total_wavefunction, solve_bh, BhSolution};
use crate::diabatic::{
    diabatic_nuclear_solve, diabatic_scan, diabatize, fit_rotation_angles, nac_hellmann_feynman,
    second_order_b, AmplitudeMode, DiabaticResult, MatrixField, NacResult,
};
use crate::grid::Grid1D;
use crate::parallel::map_indexed;
use crate::potentials::{
    calibrate_softening, calibration_hash, format_softening_cache, parse_softening_cache,
    parse_two_columns, with_dissociation_limit, ElectronicModel, H2pModel, ShinMetiuModel,
    SofteningTable, H2P_REFERENCE_CURVE, H2P_SOFTENING_CACHE,
};
use crate::schmidt::{
    perturbative_lambda_max, schmidt_decompose, schmidt_spectrum, simplified_density,
    simplified_vibrational, two_eigenvalue_entropy, von_neumann_entropy, SchmidtResult,
};
use crate::{Error, Result};

pub use config::{
    BoundCriterion, CouplingSource, EntropyBase, ModeSelection, ModelKind, Picture, RunConfig,
};
pub use goldens::{diff_goldens, DiffReport, FileDiff, Tolerances};

/// Entanglement measures of one vibronic state.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    /// 0-based electronic surface.
    pub surface: usize,
    pub index: usize,
    pub energy: f64,
    /// Entropy of the full state (nats).
    pub s_full: f64,
    /// Largest Schmidt eigenvalue.
    pub lambda_1: f64,
    /// Entropy of the extrema-based density (nats).
    pub s_simplified: Option<f64>,
    /// First-order largest eigenvalue of the extrema-based density.
    pub lambda_max_perturbative: Option<f64>,
    /// Two-eigenvalue entropy from the perturbative estimate (nats).
    pub s_two_eigenvalue: Option<f64>,
}

/// Retained vibrational states of one surface.
#[derive(Debug, Clone)]
pub struct SurfaceStates {
    pub surface: usize,
    /// Energy below which states were kept.
    pub threshold: f64,
    pub states: Vec<VibronicState>,
}

/// Schmidt modes kept for export.
#[derive(Debug, Clone)]
pub struct ModeExport {
    pub picture: Picture,
    pub surface: usize,
    pub index: usize,
    pub energy: f64,
    pub result: SchmidtResult,
}

#[derive(Debug, Clone)]
pub struct DiabaticRun {
    pub nac: NacResult,
    pub result: DiabaticResult,
    /// Diabatic electronic states and curves in scan form.
    pub scan: Option<ElectronicScan>,
    pub surfaces: Vec<SurfaceStates>,
    pub entropies: Vec<EntropyRow>,
}

#[derive(Debug, Clone)]
pub struct BhRun {
    pub channels: Vec<VibronicState>,
    pub solution: BhSolution,
    pub entropies: Vec<f64>,
    pub asymmetry: f64,
    pub coupling_source: CouplingSource,
}

/// Everything computed by one run, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: RunConfig,
    pub config_hash: String,
    pub scan: ElectronicScan,
    pub nuclear_mass: f64,
    pub softening: Option<SofteningTable>,
    pub surfaces: Vec<SurfaceStates>,
    pub entropies: Vec<EntropyRow>,
    pub modes: Vec<ModeExport>,
    pub diabatic: Option<DiabaticRun>,
    pub born_huang: Option<BhRun>,
    pub notes: Vec<String>,
}

/// Files written and a human-readable summary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.summary {
            writeln!(f, "{line}")?;
        }
        write!(f, "wrote {} files to {}", self.files.len(), self.out_dir.display())
    }
}

enum Model {
    H2p(H2pModel),
    ShinMetiu(ShinMetiuModel),
}

impl Model {
    fn as_dyn(&self) -> &dyn ElectronicModel {
        match self {
            Model::H2p(m) => m,
            Model::ShinMetiu(m) => m,
        }
    }
}

/// Computes, writes outputs, and reports.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let results = compute(config)?;
    let files = output::write_all(&results, &config.out_dir).map_err(|e| e.in_stage("pipeline"))?;
    Ok(RunReport {
        out_dir: config.out_dir.clone(),
        files,
        summary: summarize(&results),
    })
}

/// Runs every stage requested by `config` and returns the results in memory.
pub fn compute(config: &RunConfig) -> Result<RunResults> {
    config.validate().map_err(|e| e.in_stage("pipeline"))?;
    let config_hash = config.hash();
    let x_grid = config.x_grid.build("grid.x_points")?;
    let r_grid = config.r_grid.build("grid.r_points")?;
    let mut notes = Vec::new();

    let (model, softening) = build_model(config, &x_grid, &mut notes).map_err(|e| e.in_stage("model_potentials"))?;
    let nuclear_mass = model.as_dyn().nuclear_mass();
    let scan = cached_scan(config, model.as_dyn(), &x_grid, &r_grid, &mut notes)
        .map_err(|e| e.in_stage("bo_solver"))?;

    let surfaces = config
        .surfaces
        .iter()
        .map(|&label| {
            let n = label - 1;
            let threshold = match config.bound {
                BoundCriterion::Dissociation => scan.energy(n, r_grid.n_points() - 1),
                BoundCriterion::Cutoff => config.energy_cutoff,
            };
            let states = solve_nuclear(&scan, n, nuclear_mass, threshold)?;
            Ok(SurfaceStates { surface: n, threshold, states })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("bo_solver"))?;

    let (entropies, modes) = analyse(config, &scan, &surfaces, Picture::Adiabatic)
        .map_err(|e| e.in_stage("schmidt_entanglement"))?;

    let mut diabatic = None;
    let mut born_huang = None;
    if config.picture != Picture::Adiabatic {
        let run = run_diabatic(config, model.as_dyn(), &scan, nuclear_mass)
            .map_err(|e| e.in_stage("diabatization"))?;
        if config.picture == Picture::BornHuang {
            born_huang = Some(
                run_born_huang(config, &scan, &run, nuclear_mass).map_err(|e| e.in_stage("born_huang"))?,
            );
        }
        diabatic = Some(run);
    }

    Ok(RunResults {
        config: config.clone(),
        config_hash,
        scan,
        nuclear_mass,
        softening,
        surfaces,
        entropies,
        modes,
        diabatic,
        born_huang,
        notes,
    })
}

fn build_model(
    config: &RunConfig,
    x_grid: &Grid1D,
    notes: &mut Vec<String>,
) -> Result<(Model, Option<SofteningTable>)> {
    match config.model {
        ModelKind::ShinMetiu => {
            let m = ShinMetiuModel {
                l: config.ion_separation,
                z_alpha: config.z_alpha,
                z_beta: config.z_beta,
                z_gamma: config.z_gamma,
                rc_alpha: config.rc_alpha,
                rc_beta: config.rc_beta,
                rc_gamma: config.rc_gamma,
                moving_ion_mass: config.moving_ion_mass,
                margin: config.margin,
            };
            m.validate()?;
            let lim = m.r_limit();
            if config.r_grid.min <= -lim || config.r_grid.max >= lim {
                return Err(Error::config(
                    "grid.r_max",
                    format!("nuclear grid must stay inside (-{lim}, {lim})"),
                ));
            }
            Ok((Model::ShinMetiu(m), None))
        }
        ModelKind::H2p => {
            let table = resolve_softening(config, x_grid, notes)?;
            let mut m = H2pModel::new(table.clone());
            m.z_alpha = config.z_alpha;
            m.z_beta = config.z_beta;
            m.proton_mass = config.proton_mass;
            m.electron_mass = crate::potentials::electron_reduced_mass(config.proton_mass);
            Ok((Model::H2p(m), Some(table)))
        }
    }
}

/// Reference curve from the config path or the shipped data file, with the
/// dissociation limit imposed on its last row.
pub fn load_reference(config: &RunConfig) -> Result<Vec<(f64, f64)>> {
    let rows = match &config.reference_curve {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_two_columns(&text, p)?
        }
        None => parse_two_columns(H2P_REFERENCE_CURVE, Path::new("h2p_1s_sigma_g.dat"))?,
    };
    if rows.is_empty() {
        return Err(Error::config("model.reference_curve", "reference curve is empty"));
    }
    Ok(with_dissociation_limit(rows, config.dissociation_limit))
}

fn calibration_model(config: &RunConfig) -> H2pModel {
    let mut m = H2pModel::new(SofteningTable::constant(1.0).expect("positive"));
    m.z_alpha = config.z_alpha;
    m.z_beta = config.z_beta;
    m.proton_mass = config.proton_mass;
    m.electron_mass = crate::potentials::electron_reduced_mass(config.proton_mass);
    m
}

/// Hash identifying the calibration inputs of `config`.
pub fn softening_hash(config: &RunConfig) -> Result<String> {
    let x_grid = config.x_grid.build("grid.x_points")?;
    Ok(calibration_hash(&calibration_model(config), &load_reference(config)?, &x_grid))
}

/// Calibrates the softening table for `config` from scratch.
pub fn calibrate(config: &RunConfig) -> Result<(SofteningTable, String)> {
    let x_grid = config.x_grid.build("grid.x_points")?;
    let reference = load_reference(config)?;
    let model = calibration_model(config);
    let hash = calibration_hash(&model, &reference, &x_grid);
    let table = calibrate_softening(&model, &reference, &x_grid)?;
    Ok((table, hash))
}

fn resolve_softening(config: &RunConfig, x_grid: &Grid1D, notes: &mut Vec<String>) -> Result<SofteningTable> {
    let reference = load_reference(config)?;
    let model = calibration_model(config);
    let hash = calibration_hash(&model, &reference, x_grid);
    let cache_file = config.cache_dir().join(format!("h2p_softening_{}.dat", &hash[..16]));

    let mut candidates: Vec<(String, String)> = Vec::new();
    if let Some(p) = &config.softening_cache {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        candidates.push((p.display().to_string(), text));
    }
    candidates.push(("built-in table".into(), H2P_SOFTENING_CACHE.into()));
    if config.cache {
        if let Ok(text) = std::fs::read_to_string(&cache_file) {
            candidates.push((cache_file.display().to_string(), text));
        }
    }
    for (origin, text) in &candidates {
        if text.trim().is_empty() {
            continue;
        }
        let (table, recorded) = parse_softening_cache(text, Path::new(origin))?;
        if recorded.as_deref() == Some(hash.as_str()) {
            info!("softening table: cache hit ({origin})");
            notes.push(format!("softening table from {origin}"));
            return Ok(table);
        }
        if config.softening_cache.as_ref().map(|p| p.display().to_string()).as_deref() == Some(origin) {
            warn!("{origin}: hash does not match the current inputs; recalibrating");
        }
    }
    info!("calibrating softening table ({} rows); this takes a while", reference.len());
    let table = calibrate_softening(&model, &reference, x_grid)?;
    if config.cache {
        let dir = config.cache_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        std::fs::write(&cache_file, format_softening_cache(&table, &hash)).map_err(|e| Error::io(&cache_file, e))?;
    }
    notes.push("softening table calibrated for this run".into());
    Ok(table)
}

fn cached_scan(
    config: &RunConfig,
    model: &dyn ElectronicModel,
    x_grid: &Grid1D,
    r_grid: &Grid1D,
    notes: &mut Vec<String>,
) -> Result<ElectronicScan> {
    let key = cache::scan_key(&model.fingerprint(), x_grid, r_grid, config.n_electronic);
    let path = cache::scan_path(&config.cache_dir(), &key);
    if config.cache {
        if let Some(scan) = cache::read_scan(&path, &key, x_grid, r_grid)? {
            info!("electronic scan: cache hit ({})", path.display());
            notes.push(format!("electronic scan: cache hit ({})", path.display()));
            return Ok(scan);
        }
    }
    info!(
        "electronic scan: {} R points x {} x points",
        r_grid.n_points(),
        x_grid.n_points()
    );
    let scan = scan_electronic(model, x_grid, r_grid, config.n_electronic)?;
    if config.cache {
        cache::write_scan(&path, &key, &scan)?;
    }
    Ok(scan)
}

fn mode_wanted(config: &RunConfig, index: usize, count: usize) -> bool {
    config.schmidt_modes > 0
        && match config.mode_states {
            ModeSelection::None => false,
            ModeSelection::All => true,
            ModeSelection::Ends => index == 0 || index + 1 == count,
        }
}

fn analyse(
    config: &RunConfig,
    scan: &ElectronicScan,
    surfaces: &[SurfaceStates],
    picture: Picture,
) -> Result<(Vec<EntropyRow>, Vec<ModeExport>)> {
    let jobs: Vec<(&VibronicState, usize)> = surfaces
        .iter()
        .flat_map(|s| s.states.iter().map(move |st| (st, s.states.len())))
        .collect();
    let out = map_indexed(jobs.len(), |k| {
        let (state, count) = jobs[k];
        analyse_state(config, scan, state, mode_wanted(config, state.index, count), picture)
    });
    let mut rows = Vec::with_capacity(out.len());
    let mut modes = Vec::new();
    for r in out {
        let (row, mode) = r?;
        rows.push(row);
        modes.extend(mode);
    }
    Ok((rows, modes))
}

fn analyse_state(
    config: &RunConfig,
    scan: &ElectronicScan,
    state: &VibronicState,
    keep_modes: bool,
    picture: Picture,
) -> Result<(EntropyRow, Option<ModeExport>)> {
    let mut mode = None;
    let (s_full, lambda_1) = if keep_modes || config.full_density {
        let psi = bo_total_wavefunction(scan, state)?;
        if keep_modes {
            let mut r = schmidt_decompose(&psi)?;
            let k = config.schmidt_modes.min(r.lambdas.len());
            r.electronic_modes = r.electronic_modes.subcols(0, k).to_owned();
            r.nuclear_modes = r.nuclear_modes.subcols(0, k).to_owned();
            let out = (r.entropy, r.lambdas[0]);
            mode = Some(ModeExport {
                picture,
                surface: state.surface,
                index: state.index,
                energy: state.energy,
                result: r,
            });
            out
        } else {
            let lambdas = schmidt_spectrum(&psi)?;
            (von_neumann_entropy(&lambdas)?, lambdas[0])
        }
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut s_simplified = None;
    let mut lambda_max_perturbative = None;
    let mut s_two_eigenvalue = None;
    if config.simplified || config.perturbative {
        match simplified_vibrational(state) {
            Ok(points) => {
                let sd = simplified_density(points, scan, state.surface);
                if config.simplified {
                    s_simplified = Some(sd.entropy()?);
                }
                if config.perturbative {
                    let lm = perturbative_lambda_max(&sd);
                    lambda_max_perturbative = Some(lm);
                    s_two_eigenvalue = two_eigenvalue_entropy(lm).ok();
                }
            }
            Err(e) => warn!("{e}"),
        }
    }
    Ok((
        EntropyRow {
            surface: state.surface,
            index: state.index,
            energy: state.energy,
            s_full,
            lambda_1,
            s_simplified,
            lambda_max_perturbative,
            s_two_eigenvalue,
        },
        mode,
    ))
}

fn run_diabatic(
    config: &RunConfig,
    model: &dyn ElectronicModel,
    scan: &ElectronicScan,
    nuclear_mass: f64,
) -> Result<DiabaticRun> {
    let nac = nac_hellmann_feynman(scan, model)?;
    let a3 = leading_block(&nac.a, 3);
    let mode = if config.pinned_amplitudes {
        AmplitudeMode::Pinned
    } else {
        AmplitudeMode::Free
    };
    let fits = fit_rotation_angles(&a3, mode)?;
    let result = diabatize(scan, fits)?;
    if config.picture != Picture::Diabatic {
        return Ok(DiabaticRun {
            nac,
            result,
            scan: None,
            surfaces: Vec::new(),
            entropies: Vec::new(),
        });
    }
    let dscan = diabatic_scan(scan, &result)?;
    let threshold = config.energy_cutoff;
    let solved = diabatic_nuclear_solve(&result, nuclear_mass, threshold)?;
    let surfaces: Vec<SurfaceStates> = solved
        .into_iter()
        .enumerate()
        .filter(|(n, _)| config.surfaces.contains(&(n + 1)))
        .map(|(n, states)| SurfaceStates { surface: n, threshold, states })
        .collect();
    let (entropies, _) = analyse(
        &RunConfig { mode_states: ModeSelection::None, ..config.clone() },
        &dscan,
        &surfaces,
        Picture::Diabatic,
    )?;
    Ok(DiabaticRun {
        nac,
        result,
        scan: Some(dscan),
        surfaces,
        entropies,
    })
}

fn leading_block(a: &MatrixField, dim: usize) -> MatrixField {
    if a.dim() == dim {
        return a.clone();
    }
    let mut out = MatrixField::zeros(a.r_grid, dim);
    for j in 0..a.r_grid.n_points() {
        for n in 0..dim {
            for m in 0..dim {
                out.set(j, n, m, a.get(j, n, m));
            }
        }
    }
    out
}

fn run_born_huang(
    config: &RunConfig,
    scan: &ElectronicScan,
    diabatic: &DiabaticRun,
    nuclear_mass: f64,
) -> Result<BhRun> {
    let mut channels = Vec::new();
    for n in 0..3 {
        channels.extend(solve_nuclear(scan, n, nuclear_mass, config.bh_cutoff)?);
    }
    let (a, b) = match config.bh_coupling {
        CouplingSource::RotationModel => (diabatic.result.a.clone(), diabatic.result.b.clone()),
        CouplingSource::HellmannFeynman => {
            let a = leading_block(&diabatic.nac.a, 3);
            let b = second_order_b(&a);
            (a, b)
        }
    };
    let matrix = assemble_bh_matrix(&channels, &a, &b, nuclear_mass)?;
    let solution = solve_bh(&matrix)?;
    let entropies = map_indexed(solution.energies.len(), |k| {
        let psi = bh_total_wavefunction(scan, &channels, &solution.coefficients[k])?;
        von_neumann_entropy(&schmidt_spectrum(&psi)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(BhRun {
        channels,
        solution,
        entropies,
        asymmetry: matrix.asymmetry,
        coupling_source: config.bh_coupling,
    })
}

fn summarize(r: &RunResults) -> Vec<String> {
    let mut out = vec![format!(
        "model {} picture {} config {}",
        r.config.model.name(),
        r.config.picture.name(),
        &r.config_hash[..16]
    )];
    for s in &r.surfaces {
        out.push(format!(
            "surface {}: {} states below {:.6}",
            s.surface + 1,
            s.states.len(),
            s.threshold
        ));
    }
    if let Some(d) = &r.diabatic {
        let t = &d.result.fits;
        out.push(format!(
            "theta: K={:.6} Rc={:.6} Gamma={:.6} rms={:.3e}",
            t.theta.k, t.theta.rc, t.theta.gamma, t.theta_fit.rms
        ));
        out.push(format!(
            "phi: K={:.6} Rc={:.6} Gamma={:.6} rms={:.3e}",
            t.phi.k, t.phi.rc, t.phi.gamma, t.phi_fit.rms
        ));
        for s in &d.surfaces {
            out.push(format!("diabatic surface {}: {} states", s.surface + 1, s.states.len()));
        }
    }
    if let Some(b) = &r.born_huang {
        out.push(format!(
            "born-huang: {} channels below {}, asymmetry {:.3e}",
            b.channels.len(),
            r.config.bh_cutoff,
            b.asymmetry
        ));
    }
    out.extend(r.notes.iter().cloned());
    out
}
