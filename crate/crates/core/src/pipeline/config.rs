//! Run configuration: a sectioned key-value file (TOML syntax) layered over
//! per-model defaults, with `VIBRONIC_<SECTION>__<KEY>` environment
//! overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use sha2::{Digest, Sha256};
use toml::Value;

use crate::grid::Grid1D;
use crate::potentials::{hex, PROTON_MASS};
use crate::{Error, Result};

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "VIBRONIC_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    H2p,
    ShinMetiu,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::H2p => "h2p",
            ModelKind::ShinMetiu => "shin_metiu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    Adiabatic,
    Diabatic,
    BornHuang,
}

impl Picture {
    pub fn name(self) -> &'static str {
        match self {
            Picture::Adiabatic => "adiabatic",
            Picture::Diabatic => "diabatic",
            Picture::BornHuang => "born_huang",
        }
    }
}

/// Which vibrational states count as retained on each surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundCriterion {
    /// `W < E_n(R_max)`: below the surface's own dissociation threshold.
    Dissociation,
    /// `W < energy_cutoff` on every surface.
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingSource {
    RotationModel,
    HellmannFeynman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyBase {
    Nats,
    Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    None,
    /// Lowest and highest retained state of each surface.
    Ends,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self, field: &str) -> Result<Grid1D> {
        Grid1D::spanning(self.min, self.max, self.points).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(field, message),
            e => e,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    // H2+
    pub z_alpha: f64,
    pub z_beta: f64,
    pub proton_mass: f64,
    pub reference_curve: Option<PathBuf>,
    pub softening_cache: Option<PathBuf>,
    pub dissociation_limit: f64,
    // Shin-Metiu
    pub z_gamma: f64,
    pub ion_separation: f64,
    pub rc_alpha: f64,
    pub rc_beta: f64,
    pub rc_gamma: f64,
    pub moving_ion_mass: f64,
    pub margin: f64,

    pub x_grid: GridSpec,
    pub r_grid: GridSpec,

    pub n_electronic: usize,
    /// 1-based adiabatic surface labels to analyse.
    pub surfaces: Vec<usize>,
    pub bound: BoundCriterion,
    pub energy_cutoff: f64,

    pub picture: Picture,
    pub full_density: bool,
    pub simplified: bool,
    pub perturbative: bool,
    pub schmidt_modes: usize,
    pub mode_states: ModeSelection,
    pub entropy_base: EntropyBase,

    pub pinned_amplitudes: bool,
    pub bh_coupling: CouplingSource,
    pub bh_cutoff: f64,
    pub bh_coefficients: bool,

    pub out_dir: PathBuf,
    pub cache: bool,
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults reproducing the reference setups of each model.
    pub fn defaults(model: ModelKind) -> Self {
        let common = Self {
            model,
            z_alpha: 1.0,
            z_beta: 1.0,
            proton_mass: PROTON_MASS,
            reference_curve: None,
            softening_cache: None,
            dissociation_limit: -0.5,
            z_gamma: 1.0,
            ion_separation: 18.897,
            rc_alpha: 3.0,
            rc_beta: 2.2,
            rc_gamma: 4.0,
            moving_ion_mass: PROTON_MASS,
            margin: 0.5,
            x_grid: GridSpec { min: -30.0, max: 30.0, points: 501 },
            r_grid: GridSpec { min: 0.4, max: 40.0, points: 1601 },
            n_electronic: 3,
            surfaces: vec![1, 3],
            bound: BoundCriterion::Dissociation,
            energy_cutoff: -0.15,
            picture: Picture::Adiabatic,
            full_density: true,
            simplified: true,
            perturbative: true,
            schmidt_modes: 2,
            mode_states: ModeSelection::Ends,
            entropy_base: EntropyBase::Nats,
            pinned_amplitudes: true,
            bh_coupling: CouplingSource::RotationModel,
            bh_cutoff: -0.15,
            bh_coefficients: false,
            out_dir: PathBuf::from("out"),
            cache: true,
            cache_dir: None,
        };
        match model {
            ModelKind::H2p => common,
            ModelKind::ShinMetiu => Self {
                x_grid: GridSpec { min: -22.0, max: 22.0, points: 501 },
                r_grid: GridSpec { min: -8.9, max: 8.9, points: 1001 },
                surfaces: vec![1, 2, 3],
                bound: BoundCriterion::Cutoff,
                simplified: false,
                perturbative: false,
                ..common
            },
        }
    }

    /// Loads a config file (if any), applying `env` overrides on top.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut entries = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            flatten(&text, path, &mut entries)?;
        }
        for (k, v) in env {
            let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
            let Some((section, key)) = rest.split_once("__") else { continue };
            let key = format!("{}.{}", section.to_ascii_lowercase(), key.to_ascii_lowercase());
            entries.insert(key, parse_env_value(&v));
        }
        Self::from_entries(&entries)
    }

    /// Builds a config from a TOML string.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        flatten(text, Path::new("<inline>"), &mut entries)?;
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &BTreeMap<String, Value>) -> Result<Self> {
        let model = match entries.get("model.name") {
            None => ModelKind::H2p,
            Some(v) => match v.as_str() {
                Some("h2p") => ModelKind::H2p,
                Some("shin_metiu") => ModelKind::ShinMetiu,
                _ => {
                    return Err(Error::config(
                        "model.name",
                        format!("unknown model {v}; expected \"h2p\" or \"shin_metiu\""),
                    ))
                }
            },
        };
        let mut cfg = Self::defaults(model);
        for (key, value) in entries {
            if key != "model.name" {
                cfg.set(key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one `section.key` entry.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let f = |v: &Value| as_f64(key, v);
        let b = |v: &Value| v.as_bool().ok_or_else(|| type_err(key, "a boolean", v));
        let s = |v: &Value| v.as_str().map(str::to_owned).ok_or_else(|| type_err(key, "a string", v));
        let path = |v: &Value| -> Result<Option<PathBuf>> {
            let s = s(v)?;
            Ok((!s.is_empty()).then(|| PathBuf::from(s)))
        };
        match key {
            "model.z_alpha" => self.z_alpha = f(v)?,
            "model.z_beta" => self.z_beta = f(v)?,
            "model.z_gamma" => self.z_gamma = f(v)?,
            "model.proton_mass" => self.proton_mass = f(v)?,
            "model.reference_curve" => self.reference_curve = path(v)?,
            "model.softening_cache" => self.softening_cache = path(v)?,
            "model.dissociation_limit" => self.dissociation_limit = f(v)?,
            "model.ion_separation" => self.ion_separation = f(v)?,
            "model.rc_alpha" => self.rc_alpha = f(v)?,
            "model.rc_beta" => self.rc_beta = f(v)?,
            "model.rc_gamma" => self.rc_gamma = f(v)?,
            "model.moving_ion_mass" => self.moving_ion_mass = f(v)?,
            "model.margin" => self.margin = f(v)?,
            "grid.x_min" => self.x_grid.min = f(v)?,
            "grid.x_max" => self.x_grid.max = f(v)?,
            "grid.x_points" => self.x_grid.points = odd_points(key, v)?,
            "grid.r_min" => self.r_grid.min = f(v)?,
            "grid.r_max" => self.r_grid.max = f(v)?,
            "grid.r_points" => self.r_grid.points = odd_points(key, v)?,
            "states.n_electronic" => self.n_electronic = as_count(key, v)?,
            "states.surfaces" => {
                let arr = v.as_array().ok_or_else(|| type_err(key, "an array of integers", v))?;
                self.surfaces = arr.iter().map(|x| as_count(key, x)).collect::<Result<_>>()?;
            }
            "states.bound" => {
                self.bound = match s(v)?.as_str() {
                    "dissociation" => BoundCriterion::Dissociation,
                    "cutoff" => BoundCriterion::Cutoff,
                    o => return Err(Error::config(key, format!("unknown criterion \"{o}\""))),
                }
            }
            "states.energy_cutoff" => self.energy_cutoff = f(v)?,
            "analysis.picture" => {
                self.picture = match s(v)?.as_str() {
                    "adiabatic" => Picture::Adiabatic,
                    "diabatic" => Picture::Diabatic,
                    "born_huang" => Picture::BornHuang,
                    o => return Err(Error::config(key, format!("unknown picture \"{o}\""))),
                }
            }
            "analysis.full_density" => self.full_density = b(v)?,
            "analysis.simplified" => self.simplified = b(v)?,
            "analysis.perturbative" => self.perturbative = b(v)?,
            "analysis.schmidt_modes" => self.schmidt_modes = as_count(key, v)?,
            "analysis.mode_states" => {
                self.mode_states = match s(v)?.as_str() {
                    "none" => ModeSelection::None,
                    "ends" => ModeSelection::Ends,
                    "all" => ModeSelection::All,
                    o => return Err(Error::config(key, format!("unknown selection \"{o}\""))),
                }
            }
            "analysis.entropy_base" => self.entropy_base = parse_entropy_base(key, &s(v)?)?,
            "diabatic.amplitudes" => {
                self.pinned_amplitudes = match s(v)?.as_str() {
                    "pinned" => true,
                    "free" => false,
                    o => return Err(Error::config(key, format!("unknown mode \"{o}\""))),
                }
            }
            "born_huang.coupling" => {
                self.bh_coupling = match s(v)?.as_str() {
                    "rotation_model" => CouplingSource::RotationModel,
                    "hellmann_feynman" => CouplingSource::HellmannFeynman,
                    o => return Err(Error::config(key, format!("unknown source \"{o}\""))),
                }
            }
            "born_huang.cutoff" => self.bh_cutoff = f(v)?,
            "born_huang.coefficients" => self.bh_coefficients = b(v)?,
            "output.dir" => self.out_dir = PathBuf::from(s(v)?),
            "output.cache" => self.cache = b(v)?,
            "output.cache_dir" => self.cache_dir = path(v)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.x_grid.build("grid.x_points")?;
        self.r_grid.build("grid.r_points")?;
        if self.n_electronic == 0 || self.n_electronic > self.x_grid.points {
            return Err(Error::config(
                "states.n_electronic",
                format!("must be in 1..={}", self.x_grid.points),
            ));
        }
        if self.surfaces.is_empty() {
            return Err(Error::config("states.surfaces", "at least one surface is required"));
        }
        if let Some(s) = self.surfaces.iter().find(|&&s| s == 0 || s > self.n_electronic) {
            return Err(Error::config(
                "states.surfaces",
                format!("surface {s} outside 1..={}", self.n_electronic),
            ));
        }
        if self.model == ModelKind::H2p && self.r_grid.min <= 0.0 {
            return Err(Error::config("grid.r_min", "H2+ needs R > 0"));
        }
        if self.picture != Picture::Adiabatic {
            if self.model != ModelKind::ShinMetiu {
                return Err(Error::config(
                    "analysis.picture",
                    format!("{} picture is only available for shin_metiu", self.picture.name()),
                ));
            }
            if self.n_electronic < 3 {
                return Err(Error::config(
                    "states.n_electronic",
                    "diabatic and Born-Huang pictures need 3 electronic states",
                ));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting that affects results.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.name", self.model.name().into());
        match self.model {
            ModelKind::H2p => {
                kv("model.z_alpha", num(self.z_alpha));
                kv("model.z_beta", num(self.z_beta));
                kv("model.proton_mass", num(self.proton_mass));
                kv("model.reference_curve", path_str(&self.reference_curve));
                kv("model.softening_cache", path_str(&self.softening_cache));
                kv("model.dissociation_limit", num(self.dissociation_limit));
            }
            ModelKind::ShinMetiu => {
                kv("model.z_alpha", num(self.z_alpha));
                kv("model.z_beta", num(self.z_beta));
                kv("model.z_gamma", num(self.z_gamma));
                kv("model.ion_separation", num(self.ion_separation));
                kv("model.rc_alpha", num(self.rc_alpha));
                kv("model.rc_beta", num(self.rc_beta));
                kv("model.rc_gamma", num(self.rc_gamma));
                kv("model.moving_ion_mass", num(self.moving_ion_mass));
                kv("model.margin", num(self.margin));
            }
        }
        kv("grid.x_min", num(self.x_grid.min));
        kv("grid.x_max", num(self.x_grid.max));
        kv("grid.x_points", self.x_grid.points.to_string());
        kv("grid.r_min", num(self.r_grid.min));
        kv("grid.r_max", num(self.r_grid.max));
        kv("grid.r_points", self.r_grid.points.to_string());
        kv("states.n_electronic", self.n_electronic.to_string());
        kv("states.surfaces", format!("{:?}", self.surfaces));
        kv(
            "states.bound",
            match self.bound {
                BoundCriterion::Dissociation => "\"dissociation\"",
                BoundCriterion::Cutoff => "\"cutoff\"",
            }
            .into(),
        );
        kv("states.energy_cutoff", num(self.energy_cutoff));
        kv("analysis.picture", format!("\"{}\"", self.picture.name()));
        kv("analysis.full_density", self.full_density.to_string());
        kv("analysis.simplified", self.simplified.to_string());
        kv("analysis.perturbative", self.perturbative.to_string());
        kv("analysis.schmidt_modes", self.schmidt_modes.to_string());
        kv(
            "analysis.mode_states",
            match self.mode_states {
                ModeSelection::None => "\"none\"",
                ModeSelection::Ends => "\"ends\"",
                ModeSelection::All => "\"all\"",
            }
            .into(),
        );
        kv(
            "analysis.entropy_base",
            match self.entropy_base {
                EntropyBase::Nats => "\"e\"",
                EntropyBase::Bits => "\"2\"",
            }
            .into(),
        );
        if self.picture != Picture::Adiabatic {
            kv(
                "diabatic.amplitudes",
                if self.pinned_amplitudes { "\"pinned\"" } else { "\"free\"" }.into(),
            );
        }
        if self.picture == Picture::BornHuang {
            kv(
                "born_huang.coupling",
                match self.bh_coupling {
                    CouplingSource::RotationModel => "\"rotation_model\"",
                    CouplingSource::HellmannFeynman => "\"hellmann_feynman\"",
                }
                .into(),
            );
            kv("born_huang.cutoff", num(self.bh_cutoff));
            kv("born_huang.coefficients", self.bh_coefficients.to_string());
        }
        s
    }

    /// SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("cache"))
    }
}

pub fn parse_entropy_base(field: &str, s: &str) -> Result<EntropyBase> {
    match s {
        "e" => Ok(EntropyBase::Nats),
        "2" => Ok(EntropyBase::Bits),
        o => Err(Error::config(field, format!("expected \"e\" or \"2\", got \"{o}\""))),
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn path_str(p: &Option<PathBuf>) -> String {
    format!("\"{}\"", p.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
}

fn flatten(text: &str, origin: &Path, out: &mut BTreeMap<String, Value>) -> Result<()> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: origin.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1))
            .unwrap_or(0),
        message: e.message().to_owned(),
    })?;
    for (section, body) in table {
        let Value::Table(body) = body else {
            return Err(Error::config(section, "top-level keys must live in a [section]"));
        };
        for (key, v) in body {
            out.insert(format!("{section}.{key}"), v);
        }
    }
    Ok(())
}

fn parse_env_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

fn type_err(key: &str, want: &str, v: &Value) -> Error {
    Error::config(key, format!("expected {want}, got {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_err(key, "a number", v)),
    }
}

fn as_count(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(type_err(key, "a non-negative integer", v)),
    }
}

fn odd_points(key: &str, v: &Value) -> Result<usize> {
    let n = as_count(key, v)?;
    if n % 2 == 0 {
        warn!("{key} = {n} is even; using {}", n + 1);
        Ok(n + 1)
    } else {
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::from_toml_str("[model]\nname = \"shin_metiu\"\n[grid]\nr_points = 400\n").unwrap();
        assert_eq!(cfg.model, ModelKind::ShinMetiu);
        assert_eq!(cfg.r_grid.points, 401);
        assert_eq!(cfg.x_grid.points, 501);
        assert_eq!(cfg.surfaces, vec![1, 2, 3]);

        let env = vec![
            ("VIBRONIC_GRID__X_POINTS".to_string(), "101".to_string()),
            ("VIBRONIC_ANALYSIS__PICTURE".to_string(), "diabatic".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[model]\nname = \"shin_metiu\"\n").unwrap();
        let cfg = RunConfig::load(Some(&p), env).unwrap();
        assert_eq!(cfg.x_grid.points, 101);
        assert_eq!(cfg.picture, Picture::Diabatic);
    }

    #[test]
    fn unknown_model_and_key_name_the_field() {
        let e = RunConfig::from_toml_str("[model]\nname = \"helium\"\n").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("model.name"), "{e}");
        let e = RunConfig::from_toml_str("[grid]\nx_pts = 3\n").unwrap_err();
        assert!(e.to_string().contains("grid.x_pts"), "{e}");
        let e = RunConfig::from_toml_str("[analysis]\npicture = \"diabatic\"\n").unwrap_err();
        assert!(e.to_string().contains("analysis.picture"), "{e}");
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = RunConfig::defaults(ModelKind::H2p);
        let h = a.hash();
        a.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), h);
        a.r_grid.points = 801;
        assert_ne!(a.hash(), h);
    }
}
