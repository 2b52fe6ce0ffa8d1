//! Deterministic CSV/JSON emission. Floats carry 17 significant digits,
//! files are written to a temporary sibling and renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

use crate::config::SCHEMA_VERSION;
use crate::error::Result;
use crate::experiment::{CheckReport, EvolveResult, InstabilityResult, RunRecord, SweepRow};
use crate::polytrope::{vacuum_exponent, LaneEmdenProfile};
use crate::spectral::GrowingMode;

/// `x` with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// Compact JSON with every float printed by [`fmt_f64`]; non-finite
/// values become `null`.
struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            CompactFormatter.write_null(writer)
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// JSON document stamped with the schema version and config hash.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    schema_version: u32,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, body: &T) -> Result<()> {
    let doc = Stamped {
        schema_version: SCHEMA_VERSION,
        config_hash,
        body,
    };
    write_atomic(path, to_json(&doc)?.as_bytes())
}

/// CSV table. The first line is a `#` comment carrying the config hash.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        let mut text = format!("# schema_version={SCHEMA_VERSION} config_hash={config_hash}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width differs from header");
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&parts.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(n) => n.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `r,w,w_r,phi` plus the JSON sidecar.
pub fn write_profile(dir: &Path, hash: &str, profile: &LaneEmdenProfile) -> Result<()> {
    let mut csv = Csv::new(hash, &["r", "w", "w_r", "phi"]);
    for j in 0..profile.n_nodes() {
        csv.row(&[
            Cell::F(profile.grid[j]),
            Cell::F(profile.w[j]),
            Cell::F(profile.w_r[j]),
            Cell::F(profile.phi[j]),
        ]);
    }
    csv.write(&dir.join("profile.csv"))?;
    let c = &profile.config;
    let sidecar = json!({
        "gamma": c.gamma,
        "alpha": c.alpha,
        "K": c.k_entropy,
        "c_frak": c.c_frak,
        "R": profile.radius,
        "mass": profile.mass,
        "vacuum_exponent": vacuum_exponent(profile).ok(),
        "n_nodes": profile.n_nodes(),
    });
    write_json(&dir.join("profile.json"), hash, &sidecar)
}

/// `r,phi0` plus the JSON sidecar.
pub fn write_mode(
    dir: &Path,
    hash: &str,
    profile: &LaneEmdenProfile,
    mode: &GrowingMode,
) -> Result<()> {
    let mut csv = Csv::new(hash, &["r", "phi0"]);
    for (r, p) in profile.grid.iter().zip(&mode.phi0) {
        csv.row(&[Cell::F(*r), Cell::F(*p)]);
    }
    csv.write(&dir.join("mode.csv"))?;
    let sidecar = json!({
        "gamma": mode.gamma,
        "mu0": mode.mu0,
        "rate": mode.rate,
        "residual": mode.residual,
        "norm_X": mode.norm_x,
        "norm_Y": mode.norm_y,
        "gap": mode.gap,
        "near_degenerate": mode.near_degenerate,
    });
    write_json(&dir.join("mode.json"), hash, &sidecar)
}

pub fn trajectory_csv(hash: &str, record: &RunRecord) -> Csv {
    let mut csv = Csv::new(
        hash,
        &[
            "t",
            "E0",
            "sqrtE0",
            "H",
            "boundary_radius",
            "sup_zeta",
            "sup_zeta_r",
            "exceeded",
        ],
    );
    for r in &record.series {
        csv.row(&[
            Cell::F(r.t),
            Cell::F(r.e0),
            Cell::F(r.sqrt_e0),
            Cell::F(r.h),
            Cell::F(r.boundary_radius),
            Cell::F(r.sup_zeta),
            Cell::F(r.sup_zeta_r),
            Cell::B(r.exceeded),
        ]);
    }
    csv
}

/// Run metadata and status, without the series.
fn run_summary(record: &RunRecord) -> serde_json::Value {
    json!({
        "metadata": record.metadata,
        "status": record.status,
        "n_rows": record.series.len(),
    })
}

/// Trajectory, run summary, final energies and one `r,zeta,zeta_t` file per recorded row.
pub fn write_evolve(dir: &Path, hash: &str, grid: &[f64], result: &EvolveResult) -> Result<()> {
    trajectory_csv(hash, &result.record).write(&dir.join("trajectory.csv"))?;
    write_json(&dir.join("run.json"), hash, &run_summary(&result.record))?;
    write_json(&dir.join("energy.json"), hash, &result.final_energy)?;
    let snaps = dir.join("snapshots");
    for (i, s) in result.record.snapshots.iter().enumerate() {
        let mut csv = Csv::new(hash, &["r", "zeta", "zeta_t"]);
        for j in 0..grid.len() {
            csv.row(&[Cell::F(grid[j]), Cell::F(s.zeta[j]), Cell::F(s.zeta_t[j])]);
        }
        csv.write(&snaps.join(format!("snapshot_{i:05}.csv")))?;
    }
    Ok(())
}

/// Directory name for one `δ`, e.g. `delta_1e-4`.
pub fn delta_dir(delta: f64) -> String {
    format!("delta_{delta:e}")
}

pub fn write_instability(dir: &Path, hash: &str, results: &[InstabilityResult]) -> Result<()> {
    let mut summary = Vec::new();
    for res in results {
        let sub = dir.join(delta_dir(res.delta));
        trajectory_csv(hash, &res.record).write(&sub.join("trajectory.csv"))?;
        write_json(&sub.join("run.json"), hash, &run_summary(&res.record))?;
        let fit = json!({
            "rate": res.fit.as_ref().map(|f| f.rate),
            "window": res.fit.as_ref().map(|f| f.window),
            "r_squared": res.fit.as_ref().map(|f| f.r_squared),
            "n_samples": res.fit.as_ref().map(|f| f.n_samples),
            "fit_error": res.fit_error,
            "escape_time": res.escape_time,
            "predicted_escape": res.predicted_escape,
        });
        write_json(&sub.join("fit.json"), hash, &fit)?;
        if let Some(e) = &res.final_energy {
            write_json(&sub.join("energy.json"), hash, e)?;
        }
        if let Some(lin) = &res.linear {
            trajectory_csv(hash, lin).write(&sub.join("linear_trajectory.csv"))?;
        }
        if let Some(d) = &res.duhamel {
            let mut csv = Csv::new(hash, &["t", "remainder", "ratio", "linear_amplitude"]);
            for p in d {
                csv.row(&[
                    Cell::F(p.t),
                    Cell::F(p.remainder),
                    Cell::F(p.ratio),
                    Cell::F(p.linear_amplitude),
                ]);
            }
            csv.write(&sub.join("duhamel.csv"))?;
        }
        summary.push(json!({
            "delta": res.delta,
            "status": res.record.status,
            "fitted_rate": res.fit.as_ref().map(|f| f.rate),
            "escape_time": res.escape_time,
            "predicted_escape": res.predicted_escape,
            "H_drift": res.record.metadata.h_drift,
        }));
    }
    let first = results.first();
    let doc = json!({
        "gamma": first.map(|r| r.gamma),
        "mu0": first.map(|r| r.mu0),
        "rate": first.map(|r| r.rate),
        "theta0": first.map(|r| r.theta0),
        "runs": summary,
    });
    write_json(&dir.join("instability.json"), hash, &doc)
}

pub fn write_sweep(dir: &Path, hash: &str, rows: &[SweepRow]) -> Result<()> {
    let mut csv = Csv::new(
        hash,
        &[
            "gamma",
            "status",
            "mu0",
            "rate",
            "fitted_rate",
            "escape_ratio",
            "spacing_ratio",
            "detail",
        ],
    );
    for r in rows {
        csv.row(&[
            Cell::F(r.gamma),
            Cell::S(r.status.clone()),
            Cell::F(r.mu0),
            Cell::F(r.rate),
            Cell::F(r.fitted_rate),
            Cell::F(r.escape_ratio),
            Cell::F(r.spacing_ratio),
            Cell::S(r.detail.clone()),
        ]);
    }
    csv.write(&dir.join("sweep.csv"))?;
    write_json(&dir.join("sweep.json"), hash, &json!({ "rows": rows }))
}

/// `check.json` and the Hardy family table.
pub fn write_check(dir: &Path, hash: &str, report: &CheckReport) -> Result<()> {
    write_json(&dir.join("check.json"), hash, report)?;
    let mut csv = Csv::new(hash, &["family", "ratio_max", "ratio_mean", "n_samples"]);
    for f in &report.hardy {
        csv.row(&[
            Cell::S(f.family.clone()),
            Cell::F(f.ratio_max),
            Cell::F(f.ratio_mean),
            Cell::U(f.n_samples as u64),
        ]);
    }
    csv.write(&dir.join("hardy.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn json_floats_and_non_finite() {
        #[derive(Serialize)]
        struct T {
            a: f64,
            b: f64,
            c: u32,
        }
        let s = to_json(&T {
            a: 0.5,
            b: f64::NAN,
            c: 3,
        })
        .unwrap();
        assert_eq!(s, "{\"a\":5.0000000000000000e-1,\"b\":null,\"c\":3}\n");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"], 0.5);
    }

    #[test]
    fn csv_quotes_and_header() {
        let mut c = Csv::new("abc", &["x", "note"]);
        c.row(&[Cell::F(1.0), Cell::S("a,b".into())]);
        let lines: Vec<&str> = c.as_str().lines().collect();
        assert_eq!(lines[0], "# schema_version=1 config_hash=abc");
        assert_eq!(lines[1], "x,note");
        assert_eq!(lines[2], "1.0000000000000000e0,\"a,b\"");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
