//! CSV and JSON output with provenance headers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EntropyRow, EntropyBase, RunResults, SurfaceStates};
use crate::grid::Grid1D;
use crate::{Error, Result};

/// Formats a float with 17 significant digits; non-finite values become `nan`.
pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".into()
    }
}

fn opt(v: Option<f64>) -> String {
    num(v.unwrap_or(f64::NAN))
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(results: &RunResults, notes: &[String], columns: &[&str]) -> Self {
        let mut text = String::new();
        for line in header(results).iter().chain(notes) {
            let _ = writeln!(text, "# {line}");
        }
        let _ = writeln!(text, "{}", columns.join(","));
        Csv { text }
    }

    fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    fn write(self, path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
        std::fs::write(path, self.text).map_err(|e| Error::io(path, e))?;
        files.push(path.to_path_buf());
        Ok(())
    }
}

fn grid_line(name: &str, g: &Grid1D) -> String {
    format!(
        "{name}: min={} max={} points={} step={}",
        num(g.r_min()),
        num(g.r_max()),
        g.n_points(),
        num(g.delta_r())
    )
}

fn header(r: &RunResults) -> Vec<String> {
    vec![
        format!("generator: vibronic-core {}", env!("CARGO_PKG_VERSION")),
        format!("config_hash: {}", r.config_hash),
        format!("model: {}", r.config.model.name()),
        format!("picture: {}", r.config.picture.name()),
        grid_line("x_grid", &r.scan.x_grid),
        grid_line("r_grid", &r.scan.r_grid),
        format!("nuclear_mass: {}", num(r.nuclear_mass)),
    ]
}

fn entropy_scale(base: EntropyBase) -> (f64, &'static str) {
    match base {
        EntropyBase::Nats => (1.0, "nats"),
        EntropyBase::Bits => (std::f64::consts::LN_2.recip(), "bits"),
    }
}

fn threshold_notes(surfaces: &[SurfaceStates]) -> Vec<String> {
    surfaces
        .iter()
        .map(|s| {
            format!(
                "surface {}: {} states below {}",
                s.surface + 1,
                s.states.len(),
                num(s.threshold)
            )
        })
        .collect()
}

fn write_vibronic(r: &RunResults, surfaces: &[SurfaceStates], path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut csv = Csv::new(r, &threshold_notes(surfaces), &["surface", "m", "W"]);
    for s in surfaces {
        for st in &s.states {
            csv.row(&[(s.surface + 1).to_string(), st.index.to_string(), num(st.energy)]);
        }
    }
    csv.write(path, files)
}

fn write_entropy(
    r: &RunResults,
    surfaces: &[SurfaceStates],
    rows: &[EntropyRow],
    path: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let (scale, unit) = entropy_scale(r.config.entropy_base);
    let mut notes = threshold_notes(surfaces);
    notes.push(format!("entropy_unit: {unit}"));
    let mut csv = Csv::new(
        r,
        &notes,
        &[
            "surface",
            "m",
            "W",
            "S_full",
            "S_simplified",
            "S_two_eigenvalue",
            "lambda_1",
            "lambda_max_perturbative",
        ],
    );
    for e in rows {
        csv.row(&[
            (e.surface + 1).to_string(),
            e.index.to_string(),
            num(e.energy),
            num(e.s_full * scale),
            opt(e.s_simplified.map(|s| s * scale)),
            opt(e.s_two_eigenvalue.map(|s| s * scale)),
            num(e.lambda_1),
            opt(e.lambda_max_perturbative),
        ]);
    }
    csv.write(path, files)
}

#[derive(Serialize)]
struct LambdaSidecar<'a> {
    picture: &'a str,
    surface: usize,
    index: usize,
    energy: f64,
    entropy_nats: f64,
    lambdas: &'a [f64],
}

#[derive(Serialize)]
struct BhStateJson<'a> {
    index: usize,
    energy: f64,
    coefficients: &'a [f64],
}

#[derive(Serialize)]
struct BhJson<'a> {
    channels: Vec<[usize; 2]>,
    states: Vec<BhStateJson<'a>>,
}

fn write_json<T: Serialize>(value: &T, path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Writes every output file of `r` into `dir` and returns their paths.
pub fn write_all(r: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let path = dir.join("config.resolved.toml");
    std::fs::write(&path, r.config.canonical()).map_err(|e| Error::io(&path, e))?;
    files.push(path);

    let ns = r.scan.n_states();
    let mut cols = vec!["R".to_string()];
    cols.extend((1..=ns).map(|n| format!("E_{n}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut notes = Vec::new();
    if let Some(t) = &r.softening {
        notes.push(format!("softening_rows: {}", t.rows().len()));
    }
    let mut csv = Csv::new(r, &notes, &cols);
    for j in 0..r.scan.r_grid.n_points() {
        let mut row = vec![num(r.scan.r_grid.point(j))];
        row.extend((0..ns).map(|n| num(r.scan.energy(n, j))));
        csv.row(&row);
    }
    csv.write(&dir.join("pec.csv"), &mut files)?;

    write_vibronic(r, &r.surfaces, &dir.join("vibronic.csv"), &mut files)?;
    write_entropy(r, &r.surfaces, &r.entropies, &dir.join("entropy.csv"), &mut files)?;

    if !r.modes.is_empty() {
        let mdir = dir.join("schmidt_modes");
        std::fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
        for m in &r.modes {
            let stem = format!("{}_s{}_m{}", m.picture.name(), m.surface + 1, m.index);
            let k = m.result.electronic_modes.ncols();
            let mut cols = vec!["x".to_string()];
            cols.extend((1..=k).map(|i| format!("u_{i}")));
            let cols_e: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut csv = Csv::new(r, &[], &cols_e);
            for i in 0..r.scan.x_grid.n_points() {
                let mut row = vec![num(r.scan.x_grid.point(i))];
                row.extend((0..k).map(|c| num(m.result.electronic_modes[(i, c)])));
                csv.row(&row);
            }
            csv.write(&mdir.join(format!("{stem}_electronic.csv")), &mut files)?;

            let mut cols = vec!["R".to_string()];
            cols.extend((1..=k).map(|i| format!("v_{i}")));
            let cols_n: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut csv = Csv::new(r, &[], &cols_n);
            for j in 0..r.scan.r_grid.n_points() {
                let mut row = vec![num(r.scan.r_grid.point(j))];
                row.extend((0..k).map(|c| num(m.result.nuclear_modes[(j, c)])));
                csv.row(&row);
            }
            csv.write(&mdir.join(format!("{stem}_nuclear.csv")), &mut files)?;

            let sidecar = LambdaSidecar {
                picture: m.picture.name(),
                surface: m.surface + 1,
                index: m.index,
                energy: m.energy,
                entropy_nats: m.result.entropy,
                lambdas: &m.result.lambdas,
            };
            write_json(&sidecar, &mdir.join(format!("{stem}_lambdas.json")), &mut files)?;
        }
    }

    if let Some(d) = &r.diabatic {
        let f = &d.result.fits;
        let notes = vec![
            format!(
                "theta: K={} Rc={} Gamma={} k0={}",
                num(f.theta.k),
                num(f.theta.rc),
                num(f.theta.gamma),
                num(f.theta.k0)
            ),
            format!(
                "phi: K={} Rc={} Gamma={} k0={}",
                num(f.phi.k),
                num(f.phi.rc),
                num(f.phi.gamma),
                num(f.phi.k0)
            ),
            format!("masked_couplings: {}", d.nac.masked.len()),
        ];
        let mut csv = Csv::new(
            r,
            &notes,
            &[
                "R", "V1D", "V2D", "V3D", "V12", "V13", "V23", "A12", "A13", "A23", "A12_model", "A13_model",
                "A23_model", "theta", "phi",
            ],
        );
        for j in 0..r.scan.r_grid.n_points() {
            let rr = r.scan.r_grid.point(j);
            let (th, ph) = d.result.angles_at(rr);
            let vd = |a, b| num(d.result.vd.get(j, a, b));
            let hf = |a, b| num(d.nac.a.get(j, a, b));
            let md = |a, b| num(d.result.a.get(j, a, b));
            csv.row(&[
                num(rr),
                vd(0, 0),
                vd(1, 1),
                vd(2, 2),
                vd(0, 1),
                vd(0, 2),
                vd(1, 2),
                hf(0, 1),
                hf(0, 2),
                hf(1, 2),
                md(0, 1),
                md(0, 2),
                md(1, 2),
                num(th),
                num(ph),
            ]);
        }
        csv.write(&dir.join("couplings.csv"), &mut files)?;

        if !d.surfaces.is_empty() {
            write_vibronic(r, &d.surfaces, &dir.join("vibronic_diabatic.csv"), &mut files)?;
            write_entropy(r, &d.surfaces, &d.entropies, &dir.join("entropy_diabatic.csv"), &mut files)?;
        }
    }

    if let Some(b) = &r.born_huang {
        let (scale, unit) = entropy_scale(r.config.entropy_base);
        let notes = vec![
            format!("channels: {} below {}", b.channels.len(), num(r.config.bh_cutoff)),
            format!("coupling_source: {:?}", b.coupling_source),
            format!("asymmetry: {}", num(b.asymmetry)),
            format!("entropy_unit: {unit}"),
        ];
        let mut csv = Csv::new(
            r,
            &notes,
            &[
                "state",
                "W",
                "S",
                "dominant_n",
                "dominant_m",
                "dominant_weight",
                "second_n",
                "second_m",
                "second_weight",
            ],
        );
        for (k, (&e, &s)) in b.solution.energies.iter().zip(&b.entropies).enumerate() {
            let w = b.solution.leading_weights(k);
            let cell = |i: usize| match w.get(i) {
                Some(&((n, m), wt)) => [(n + 1).to_string(), m.to_string(), num(wt)],
                None => ["0".into(), "0".into(), num(f64::NAN)],
            };
            let mut row = vec![k.to_string(), num(e), num(s * scale)];
            row.extend(cell(0));
            row.extend(cell(1));
            csv.row(&row);
        }
        csv.write(&dir.join("bh_report.csv"), &mut files)?;

        if r.config.bh_coefficients {
            let json = BhJson {
                channels: b.solution.channels.iter().map(|&(n, m)| [n + 1, m]).collect(),
                states: b
                    .solution
                    .energies
                    .iter()
                    .zip(&b.solution.coefficients)
                    .enumerate()
                    .map(|(index, (&energy, c))| BhStateJson { index, energy, coefficients: c })
                    .collect(),
            };
            write_json(&json, &dir.join("bh_coefficients.json"), &mut files)?;
        }
    }
    Ok(files)
}
