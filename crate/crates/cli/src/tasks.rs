//! Task execution: each configured task computes its artifact(s) and
//! writes them into the output directory. Tasks run in declared order;
//! a failing task is recorded and the remaining tasks still run, so a long
//! campaign never loses finished work to one bad point. Parallelism lives
//! inside the heavy tasks (grid sweeps fan out over a bounded worker pool).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use kerrgap_core::{
    bistability_edges, build_liouvillian, count_peaks, critical_analysis, default_grid,
    extrapolate_1overn, gap_dense, gap_krylov, hamiltonian, k0_reduce, observables_numeric,
    steady_roots, steady_state_numeric, sweep_csv, sweep_gap, wigner, BoseHubbardParams,
    CriticalAnalysis, CriticalScan, GapResult, GridSpec, ModelParams, SweepPlan, SweepRecord,
};

use crate::config::{RunConfig, Task};
use crate::emit::{comment_header, json_doc, write_atomic};

/// In-memory results shared between tasks of one run (e.g. `extrapolate`
/// reuses the tables `fit` just produced instead of re-reading the file).
#[derive(Default)]
pub struct Store {
    pub sweep: Option<Vec<SweepRecord>>,
    pub analysis: Option<CriticalAnalysis>,
}

pub struct TaskReport {
    pub task: Task,
    pub outcome: Result<Vec<PathBuf>, String>,
    pub seconds: f64,
}

/// Run `tasks` in order against `cfg`, writing artifacts under `out`.
/// Always writes a `run.json` manifest; failures additionally produce an
/// `errors.json` manifest. Returns the reports (used for the exit status).
pub fn execute(cfg: &RunConfig, out: &Path, tasks: &[Task]) -> (Store, Vec<TaskReport>) {
    let mut store = Store::default();
    let mut reports = Vec::with_capacity(tasks.len());
    for &task in tasks {
        let t0 = Instant::now();
        let outcome = run_task(cfg, out, task, &mut store);
        let seconds = t0.elapsed().as_secs_f64();
        match &outcome {
            Ok(files) => {
                let names: Vec<String> =
                    files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
                println!("task {task}: ok ({}) [{seconds:.2}s]", names.join(", "));
            }
            Err(e) => eprintln!("task {task}: FAILED: {e}"),
        }
        reports.push(TaskReport { task, outcome, seconds });
    }
    write_manifests(cfg, out, &reports);
    (store, reports)
}

fn write_manifests(cfg: &RunConfig, out: &Path, reports: &[TaskReport]) {
    let entries: Vec<Value> = reports
        .iter()
        .map(|r| match &r.outcome {
            Ok(files) => json!({
                "task": r.task.to_string(),
                "status": "ok",
                "seconds": r.seconds,
                "files": files.iter().map(|p| p.to_string_lossy()).collect::<Vec<_>>(),
            }),
            Err(e) => json!({
                "task": r.task.to_string(),
                "status": "failed",
                "seconds": r.seconds,
                "error": e,
            }),
        })
        .collect();
    let doc = json_doc(cfg, "tasks", Value::Array(entries.clone()), &[]);
    let _ = write_atomic(&out.join("run.json"), doc.as_bytes());

    let failed: Vec<Value> =
        entries.into_iter().filter(|e| e["status"] == "failed").collect();
    if !failed.is_empty() {
        let doc = json_doc(cfg, "failures", Value::Array(failed), &[]);
        let _ = write_atomic(&out.join("errors.json"), doc.as_bytes());
    }
}

fn run_task(cfg: &RunConfig, out: &Path, task: Task, store: &mut Store) -> Result<Vec<PathBuf>, String> {
    match task {
        Task::Semiclassical => task_semiclassical(cfg, out),
        Task::Steady => task_steady(cfg, out),
        Task::Gap => task_gap(cfg, out),
        Task::Sweep => task_sweep(cfg, out, store),
        Task::Wigner => task_wigner(cfg, out),
        Task::Fit => task_fit(cfg, out, store),
        Task::Extrapolate => task_extrapolate(cfg, out, store),
        Task::Mapcheck => task_mapcheck(cfg, out),
    }
}

/// Gap at one operating point, honoring the configured dense/Krylov
/// dispatch threshold.
pub fn gap_at_point(cfg: &RunConfig, params: &ModelParams, cutoff: usize) -> Result<GapResult, String> {
    let l = build_liouvillian(&hamiltonian(params, cutoff), params.gamma).map_err(|e| e.to_string())?;
    let res = if l.dim <= cfg.solver.dense_dim_threshold {
        gap_dense(&l)
    } else {
        gap_krylov(&l, &cfg.solver.krylov_opts())
    };
    res.map_err(|e| e.to_string())
}

pub fn resolve_cutoff(cfg: &RunConfig, params: &ModelParams) -> Result<usize, String> {
    cfg.cutoff.to_spec().resolve(params).map_err(|e| e.to_string())
}

fn task_semiclassical(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, String> {
    let m = &cfg.model;
    let edges = bistability_edges(m.delta, m.u_tilde, m.gamma);
    let params = cfg.point_params()?;
    let roots = steady_roots(&params).map_err(|e| e.to_string())?;
    let payload = json!({
        "delta": m.delta,
        "u_tilde": m.u_tilde,
        "gamma": m.gamma,
        "f_minus": edges.f_minus,
        "f_plus": edges.f_plus,
        "exists": edges.exists,
        "roots_at_point": { "f_tilde": params.f_tilde, "roots": roots },
    });
    let path = out.join("edges.json");
    write_atomic(&path, json_doc(cfg, "edges", payload, &[]).as_bytes()).map_err(|e| e.to_string())?;
    Ok(vec![path])
}

fn task_steady(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, String> {
    let params = cfg.point_params()?;
    let cutoff = resolve_cutoff(cfg, &params)?;
    let l = build_liouvillian(&hamiltonian(&params, cutoff), params.gamma).map_err(|e| e.to_string())?;
    let rho = steady_state_numeric(&l).map_err(|e| e.to_string())?;
    let obs = observables_numeric(&rho, params.n_scale);
    let payload = json!({
        "params": params,
        "cutoff_used": cutoff,
        "observables": obs,
        "populations": rho.fock_populations(),
    });
    let doc = json_doc(cfg, "steady", payload, &[("cutoffs_used", json!({ "point": cutoff }))]);
    let path = out.join("steady.json");
    write_atomic(&path, doc.as_bytes()).map_err(|e| e.to_string())?;
    Ok(vec![path])
}

fn task_gap(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, String> {
    let params = cfg.point_params()?;
    let cutoff = resolve_cutoff(cfg, &params)?;
    let gap = gap_at_point(cfg, &params, cutoff)?;
    let payload = json!({ "params": params, "result": gap });
    let doc = json_doc(cfg, "gap", payload, &[("cutoffs_used", json!({ "point": cutoff }))]);
    let path = out.join("gap.json");
    write_atomic(&path, doc.as_bytes()).map_err(|e| e.to_string())?;
    Ok(vec![path])
}

pub fn sweep_plan(cfg: &RunConfig) -> SweepPlan {
    SweepPlan {
        delta: cfg.model.delta,
        u_tilde: cfg.model.u_tilde,
        n_list: cfg.sweep.n_list.clone(),
        f_grid: cfg.sweep.f_grid(),
        cutoff: cfg.cutoff.to_spec(),
        krylov: cfg.solver.krylov_opts(),
    }
}

fn task_sweep(cfg: &RunConfig, out: &Path, store: &mut Store) -> Result<Vec<PathBuf>, String> {
    let records = sweep_gap(&sweep_plan(cfg));
    let csv_path = out.join("sweep.csv");
    let mut body = comment_header(cfg, "gap and steady-state observables over the (N, F_tilde) grid");
    body.push_str(&sweep_csv(&records));
    write_atomic(&csv_path, body.as_bytes()).map_err(|e| e.to_string())?;

    // Per-point wall time and the resolved cutoffs live in the sidecar so
    // the CSV itself stays byte-identical across reruns.
    let mut cutoffs = serde_json::Map::new();
    for r in &records {
        if let Some(c) = r.cutoff_used {
            cutoffs.entry(crate::emit::size_label(r.n_scale)).or_insert(json!(c));
        }
    }
    let failed = records.iter().filter(|r| r.lambda.is_none()).count();
    let payload = json!({
        "rows": records.len(),
        "failed_rows": failed,
        "wall_time_total": records.iter().map(|r| r.wall_time).sum::<f64>(),
        "wall_times": records.iter().map(|r| r.wall_time).collect::<Vec<_>>(),
    });
    let meta_path = out.join("sweep.meta.json");
    let doc = json_doc(cfg, "sweep", payload, &[("cutoffs_used", Value::Object(cutoffs))]);
    write_atomic(&meta_path, doc.as_bytes()).map_err(|e| e.to_string())?;

    store.sweep = Some(records);
    Ok(vec![csv_path, meta_path])
}

fn task_wigner(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, String> {
    let params = cfg.point_params()?;
    let cutoff = resolve_cutoff(cfg, &params)?;
    let l = build_liouvillian(&hamiltonian(&params, cutoff), params.gamma).map_err(|e| e.to_string())?;
    let rho = steady_state_numeric(&l).map_err(|e| e.to_string())?;
    let grid = match cfg.wigner.half_width {
        Some(hw) => GridSpec { half_width: hw, points: cfg.wigner.points },
        None => {
            let mut g = default_grid(&params).map_err(|e| e.to_string())?;
            g.points = cfg.wigner.points;
            g
        }
    };
    let field = wigner(&rho, &grid, params.n_scale).map_err(|e| e.to_string())?;
    field.validate().map_err(|e| e.to_string())?;
    let peaks = count_peaks(&field, cfg.wigner.rel_threshold);

    let csv_path = out.join("wigner.csv");
    let mut body = comment_header(
        cfg,
        "Wigner function over the rescaled phase-space grid; columns re,im,w",
    );
    let mut csv = Vec::new();
    field.write_csv(&mut csv).map_err(|e| e.to_string())?;
    body.push_str(&String::from_utf8(csv).expect("wigner csv is ascii"));
    write_atomic(&csv_path, body.as_bytes()).map_err(|e| e.to_string())?;

    let payload = json!({
        "params": params,
        "cutoff_used": cutoff,
        "grid": { "half_width": field.half_width, "points": field.points },
        "integral": field.integral(),
        "max_value": field.max_value(),
        "peaks": peaks,
        "rel_threshold": cfg.wigner.rel_threshold,
    });
    let json_path = out.join("wigner.json");
    let doc = json_doc(cfg, "wigner", payload, &[("cutoffs_used", json!({ "point": cutoff }))]);
    write_atomic(&json_path, doc.as_bytes()).map_err(|e| e.to_string())?;
    Ok(vec![csv_path, json_path])
}

pub fn critical_scan(cfg: &RunConfig) -> CriticalScan {
    CriticalScan {
        delta: cfg.model.delta,
        u_tilde: cfg.model.u_tilde,
        n_list: cfg.sweep.n_list.clone(),
        bracket: (cfg.fit.bracket_lo, cfg.fit.bracket_hi),
        power_distances: cfg.fit.power_distances(),
        extrapolate_min_n: cfg.fit.extrapolate_min_n,
        cutoff: cfg.cutoff.to_spec(),
        krylov: cfg.solver.krylov_opts(),
    }
}

fn task_fit(cfg: &RunConfig, out: &Path, store: &mut Store) -> Result<Vec<PathBuf>, String> {
    let analysis = critical_analysis(&critical_scan(cfg)).map_err(|e| e.to_string())?;

    let windows: Vec<Value> = analysis
        .fit
        .per_size
        .iter()
        .map(|s| json!({ "n_scale": s.n_scale, "window": s.window, "robust": s.window_robust }))
        .collect();
    let cutoffs: serde_json::Map<String, Value> = analysis
        .fit
        .per_size
        .iter()
        .map(|s| (crate::emit::size_label(s.n_scale), json!(s.cutoff_used)))
        .collect();
    let fits_path = out.join("fits.json");
    let doc = json_doc(
        cfg,
        "fit",
        serde_json::to_value(&analysis.fit).map_err(|e| e.to_string())?,
        &[("cutoffs_used", Value::Object(cutoffs)), ("fit_windows", Value::Array(windows))],
    );
    write_atomic(&fits_path, doc.as_bytes()).map_err(|e| e.to_string())?;

    let samples_path = out.join("fit_samples.csv");
    let mut body =
        comment_header(cfg, "relaxation-time samples above each size's critical drive");
    body.push_str(&sweep_csv(&analysis.records));
    write_atomic(&samples_path, body.as_bytes()).map_err(|e| e.to_string())?;

    store.analysis = Some(analysis);
    Ok(vec![fits_path, samples_path])
}

/// The per-size table needed by the extrapolation task: (N, f_c, b, f,
/// b_stderr, f_stderr) rows, from memory or from a stored fits.json.
pub fn per_size_table(
    store: &Store,
    out: &Path,
) -> Result<Vec<(f64, f64, f64, f64, f64, f64)>, String> {
    if let Some(a) = &store.analysis {
        return Ok(a
            .fit
            .per_size
            .iter()
            .map(|s| (s.n_scale, s.f_c, s.b, s.f, s.b_stderr, s.f_stderr))
            .collect());
    }
    let path = out.join("fits.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| format!("missing input {}: run the fit task first", path.display()))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let rows = doc
        .get("fit")
        .and_then(|f| f.get("per_size"))
        .and_then(Value::as_array)
        .ok_or("fits.json: missing per_size table")?;
    let mut table = Vec::with_capacity(rows.len());
    for row in rows {
        let get = |k: &str| {
            row.get(k).and_then(Value::as_f64).ok_or_else(|| format!("fits.json: per_size missing {k}"))
        };
        table.push((get("n_scale")?, get("f_c")?, get("b")?, get("f")?, get("b_stderr")?, get("f_stderr")?));
    }
    Ok(table)
}

fn task_extrapolate(cfg: &RunConfig, out: &Path, store: &mut Store) -> Result<Vec<PathBuf>, String> {
    let table = per_size_table(store, out)?;
    let min_n = cfg.fit.extrapolate_min_n;
    let rows: Vec<_> = table.iter().filter(|r| r.0 >= min_n).collect();
    if rows.len() < 3 {
        return Err(format!(
            "extrapolate: only {} sizes with N >= {min_n}; need at least 3",
            rows.len()
        ));
    }
    let fc_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let b_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
    let f_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.3)).collect();
    let b_sig: Vec<f64> = rows.iter().map(|r| r.4.max(1e-9)).collect();
    let f_sig: Vec<f64> = rows.iter().map(|r| r.5.max(1e-9)).collect();
    let fc = extrapolate_1overn(&fc_pts, None).map_err(|e| e.to_string())?;
    let b = extrapolate_1overn(&b_pts, Some(&b_sig)).map_err(|e| e.to_string())?;
    let f = extrapolate_1overn(&f_pts, Some(&f_sig)).map_err(|e| e.to_string())?;
    let payload = json!({
        "from_sizes": fc_pts.iter().map(|&(n, _)| n).collect::<Vec<_>>(),
        "f_c_inf": fc,
        "b_inf": b,
        "f_inf": f,
        "model": "y(N) = y_inf + c/N, weighted fit over the largest-N half",
    });
    let path = out.join("extrapolation.json");
    write_atomic(&path, json_doc(cfg, "extrapolation", payload, &[]).as_bytes())
        .map_err(|e| e.to_string())?;
    Ok(vec![path])
}

fn task_mapcheck(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, String> {
    let lat = cfg.lattice.as_ref().ok_or("lattice: required by the mapcheck task")?;
    let bh = BoseHubbardParams {
        hopping: lat.hopping,
        dimension: lat.dimension,
        n_sites: lat.n_sites,
        detuning: lat.detuning,
        u_tilde: cfg.model.u_tilde,
        f_tilde: cfg.point.f_tilde,
        gamma: cfg.model.gamma,
    };
    bh.validate().map_err(|e| e.to_string())?;
    let reduced = k0_reduce(&bh);
    let payload = json!({ "lattice": bh, "reduced": reduced });
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "lattice": bh, "reduced": reduced }))
            .expect("mapcheck echo")
    );
    let path = out.join("mapcheck.json");
    write_atomic(&path, json_doc(cfg, "mapcheck", payload, &[]).as_bytes())
        .map_err(|e| e.to_string())?;
    Ok(vec![path])
}

/// `emit-fig`: render figure files from stored artifacts.
pub fn emit_figures(
    cfg: &RunConfig,
    out: &Path,
    fig: crate::emit::FigureId,
    store: &Store,
) -> Result<Vec<(PathBuf, String)>, String> {
    let records: Option<Vec<SweepRecord>> = match (&store.sweep, fig) {
        (_, crate::emit::FigureId::Fig3) => None,
        (Some(r), _) => Some(r.clone()),
        (None, _) => {
            let path = out.join("sweep.csv");
            let text = std::fs::read_to_string(&path)
                .map_err(|_| format!("missing input {}: run the sweep task first", path.display()))?;
            Some(crate::emit::parse_sweep_csv(&text)?)
        }
    };
    let fit_doc: Option<Value> = if fig == crate::emit::FigureId::Fig3 {
        match &store.analysis {
            Some(a) => Some(json!({ "fit": serde_json::to_value(&a.fit).map_err(|e| e.to_string())? })),
            None => {
                let path = out.join("fits.json");
                let text = std::fs::read_to_string(&path).map_err(|_| {
                    format!("missing input {}: run the fit task first", path.display())
                })?;
                Some(serde_json::from_str(&text).map_err(|e| e.to_string())?)
            }
        }
    } else {
        None
    };
    crate::emit::figure_files(cfg, fig, records.as_deref(), fit_doc.as_ref())
}
