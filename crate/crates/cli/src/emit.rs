//! Artifact emission: atomic file writes, metadata stamping, the sweep CSV
//! round trip, and plot-ready column files.
//!
//! Every artifact carries the full configuration it was produced from —
//! JSON documents as a `meta` object, text tables as `#`-prefixed comment
//! lines — so a results directory is self-describing. Writes go through a
//! temp-file-then-rename so readers never observe a half-written file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::{json, Value};

use kerrgap_core::{ModelParams, SweepRecord, SWEEP_CSV_HEADER};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Write `bytes` to `path` atomically (temp file in the same directory,
/// then rename), creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// The `meta` object stamped into JSON artifacts.
pub fn meta_object(cfg: &RunConfig) -> Value {
    json!({ "tool": "kerrgap", "version": VERSION, "config": cfg })
}

/// A JSON artifact `{ "meta": …, <key>: payload }`, pretty-printed with a
/// trailing newline. `extra_meta` pairs (e.g. cutoffs used, fit windows)
/// are merged into the meta object.
pub fn json_doc(cfg: &RunConfig, key: &str, payload: Value, extra_meta: &[(&str, Value)]) -> String {
    let mut meta = meta_object(cfg);
    for (k, v) in extra_meta {
        meta[*k] = v.clone();
    }
    let doc = json!({ "meta": meta, key: payload });
    let mut text = serde_json::to_string_pretty(&doc).expect("artifact serialization");
    text.push('\n');
    text
}

/// `#`-prefixed metadata lines for text tables. The config echo is a single
/// line of JSON so the file stays trivially parseable.
pub fn comment_header(cfg: &RunConfig, description: &str) -> String {
    let echo = serde_json::to_string(cfg).expect("config echo");
    format!("# kerrgap {VERSION}\n# {description}\n# config: {echo}\n")
}

/// Parse a sweep CSV (as produced by [`kerrgap_core::sweep_csv`], possibly
/// preceded by `#` comments) back into records. Wall time is not stored in
/// the file and comes back as zero.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRecord>, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h == SWEEP_CSV_HEADER => {}
        Some(h) => return Err(format!("unexpected CSV header: {h}")),
        None => return Err("empty sweep CSV".into()),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(format!("row {}: expected 8 columns, got {}", i + 2, fields.len()));
        }
        let req = |s: &str, name: &str| -> Result<f64, String> {
            s.parse::<f64>().map_err(|e| format!("row {}: bad {name}: {e}", i + 2))
        };
        let opt = |s: &str, name: &str| -> Result<Option<f64>, String> {
            if s.is_empty() { Ok(None) } else { req(s, name).map(Some) }
        };
        let re = opt(fields[2], "Re_lambda")?;
        let im = opt(fields[3], "Im_lambda")?;
        let lambda = match (re, im) {
            (Some(re), Some(im)) => Some(Complex64::new(re, im)),
            (None, None) => None,
            _ => return Err(format!("row {}: half-missing eigenvalue", i + 2)),
        };
        records.push(SweepRecord {
            n_scale: req(fields[0], "N")?,
            f_tilde: req(fields[1], "F_tilde")?,
            lambda,
            n_rescaled: opt(fields[4], "n_over_N")?,
            g2: opt(fields[5], "g2")?,
            cutoff_used: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse::<usize>().map_err(|e| format!("row {}: bad cutoff: {e}", i + 2))?)
            },
            wall_time: 0.0,
            err: if fields[7].is_empty() { None } else { Some(fields[7].to_string()) },
        });
    }
    Ok(records)
}

/// Filename-safe label for a size value: integers render bare, fractional
/// sizes swap the decimal point for `p`.
pub fn size_label(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}").replace('.', "p").replace('-', "m")
    }
}

/// Plot-ready figure families derived from stored artifacts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureId {
    /// Rescaled photon number n/N against drive, one file per size.
    Fig1,
    /// Gap real and imaginary parts against drive per size, plus the
    /// semiclassical linear-response overlay.
    Fig2gap,
    /// Relaxation time at threshold against size, plus the exponential fit.
    Fig3,
}

impl std::fmt::Display for FigureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2gap => "fig2gap",
            FigureId::Fig3 => "fig3",
        })
    }
}

/// Distinct sizes in first-appearance order.
fn sizes_of(records: &[SweepRecord]) -> Vec<f64> {
    let mut sizes: Vec<f64> = Vec::new();
    for r in records {
        if !sizes.contains(&r.n_scale) {
            sizes.push(r.n_scale);
        }
    }
    sizes
}

/// Render the figure files for `fig` into (path, contents) pairs.
/// `records` feeds fig1/fig2gap; `fit_doc` (the parsed fits.json) feeds
/// fig3. Missing inputs are reported, not defaulted.
pub fn figure_files(
    cfg: &RunConfig,
    fig: FigureId,
    records: Option<&[SweepRecord]>,
    fit_doc: Option<&Value>,
) -> Result<Vec<(PathBuf, String)>, String> {
    match fig {
        FigureId::Fig1 => {
            let records = records.ok_or("fig1 needs sweep output (sweep.csv)")?;
            let mut files = Vec::new();
            for n in sizes_of(records) {
                let mut body = comment_header(
                    cfg,
                    &format!("columns: F_tilde  n_over_N   (drive in gamma; steady state at N = {n})"),
                );
                for r in records.iter().filter(|r| r.n_scale == n) {
                    if let Some(nn) = r.n_rescaled {
                        body.push_str(&format!("{:.16e} {:.16e}\n", r.f_tilde, nn));
                    }
                }
                files.push((PathBuf::from(format!("n_over_N_N{}.dat", size_label(n))), body));
            }
            Ok(files)
        }
        FigureId::Fig2gap => {
            let records = records.ok_or("fig2gap needs sweep output (sweep.csv)")?;
            let mut files = Vec::new();
            for n in sizes_of(records) {
                let mut body = comment_header(
                    cfg,
                    &format!(
                        "columns: F_tilde  Re_lambda  Im_lambda   (gap in gamma at N = {n})"
                    ),
                );
                for r in records.iter().filter(|r| r.n_scale == n) {
                    if let Some(l) = r.lambda {
                        body.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", r.f_tilde, l.re, l.im));
                    }
                }
                files.push((PathBuf::from(format!("gap_N{}.dat", size_label(n))), body));
            }
            files.push((PathBuf::from("lambda_lr.dat"), lambda_lr_overlay(cfg, records)?));
            Ok(files)
        }
        FigureId::Fig3 => {
            let doc = fit_doc.ok_or("fig3 needs fit output (fits.json)")?;
            let fit = doc.get("fit").ok_or("fits.json: missing `fit` object")?;
            let per_size = fit
                .get("per_size")
                .and_then(Value::as_array)
                .ok_or("fits.json: missing per_size table")?;
            let mut pts = Vec::new();
            for row in per_size {
                let n = row.get("n_scale").and_then(Value::as_f64);
                let tau = row.get("tau_c").and_then(Value::as_f64);
                match (n, tau) {
                    (Some(n), Some(tau)) => pts.push((n, tau)),
                    _ => return Err("fits.json: per_size row missing n_scale/tau_c".into()),
                }
            }
            if pts.is_empty() {
                return Err("fits.json: empty per_size table".into());
            }
            let kappa = fit.get("kappa").and_then(Value::as_f64).ok_or("fits.json: missing kappa")?;
            let tau0 = fit.get("tau0").and_then(Value::as_f64).ok_or("fits.json: missing tau0")?;

            let mut tau_body = comment_header(
                cfg,
                "columns: N  tau   (relaxation time at the critical drive, units 1/gamma)",
            );
            for &(n, tau) in &pts {
                tau_body.push_str(&format!("{n:.16e} {tau:.16e}\n"));
            }
            let (n_min, n_max) = pts
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(n, _)| (lo.min(n), hi.max(n)));
            let mut fit_body = comment_header(
                cfg,
                &format!(
                    "columns: N  tau_fit   (exponential fit tau0*exp(kappa*N), tau0 = {tau0:.6e}, kappa = {kappa:.6e})"
                ),
            );
            for i in 0..60 {
                let n = n_min + (n_max - n_min) * i as f64 / 59.0;
                fit_body.push_str(&format!("{:.16e} {:.16e}\n", n, tau0 * (kappa * n).exp()));
            }
            Ok(vec![
                (PathBuf::from("tau_vs_N.dat"), tau_body),
                (PathBuf::from("tau_fit.dat"), fit_body),
            ])
        }
    }
}

/// Semiclassical linear-response eigenvalue along the drive grid of the
/// sweep. The linearization is taken about the dynamically stable root of
/// lowest density (the branch continuously connected to the vacuum) and the
/// reported member of the pair is the slower one (larger Re; ties broken
/// toward Im ≥ 0). In rescaled variables this curve is independent of N.
fn lambda_lr_overlay(cfg: &RunConfig, records: &[SweepRecord]) -> Result<String, String> {
    let mut drives: Vec<f64> = Vec::new();
    for r in records {
        if !drives.contains(&r.f_tilde) {
            drives.push(r.f_tilde);
        }
    }
    let mut body = comment_header(
        cfg,
        "columns: F_tilde  Re_lambda_LR  Im_lambda_LR   (linearization about the stable low-density branch)",
    );
    for &f in &drives {
        let params = ModelParams {
            delta: cfg.model.delta,
            u_tilde: cfg.model.u_tilde,
            f_tilde: f,
            gamma: cfg.model.gamma,
            n_scale: 1.0,
        };
        if params.validate().is_err() {
            continue;
        }
        let roots = kerrgap_core::steady_roots(&params).map_err(|e| e.to_string())?;
        let Some(root) = roots
            .iter()
            .filter(|r| r.stable)
            .min_by(|a, b| a.n_sc.partial_cmp(&b.n_sc).unwrap())
        else {
            continue;
        };
        let (l1, l2) = root.lambda_lr;
        let slow = if l1.re > l2.re || (l1.re == l2.re && l1.im >= 0.0) { l1 } else { l2 };
        body.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", f, slow.re, slow.im));
    }
    Ok(body)
}
