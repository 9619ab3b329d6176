//! The `solve`, `diagnose`, `figure1`, `homogeneous` and `hodograph` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fbmin_core::diagnostics::DiagnosticsReport;
use fbmin_core::hodograph::{
    ellipticity_margin, fb_bc_residual, hodograph_transform, operator_residual, HodographWindow,
};
use fbmin_core::homogeneous::classify_homogeneous_2d;
use fbmin_core::io::{encode_csv, encode_field_pgm, encode_fbm, encode_mask_pgm, read_fbm};
use fbmin_core::solver::trace_csv;
use fbmin_core::{minimize, GridSpec, ScalarField, Solution, VectorField};
use serde_json::{json, Value};

use crate::checks::run_checks;
use crate::config::RunConfig;
use crate::error::CliError;

/// Version tag of `summary.json`.
pub const SUMMARY_SCHEMA: &str = "fbmin-summary/1";
/// Default node count per axis of `figure1`.
pub const FIGURE1_RESOLUTION: usize = 257;
/// Default arc discretization of `homogeneous`.
pub const HOMOGENEOUS_NODES: usize = 2048;

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn derived(u: &VectorField<f64>) -> (ScalarField<f64>, ScalarField<f64>) {
    let g = u.grid();
    let norm = (0..g.len()).map(|p| u.norm_at(p)).collect();
    let sum = (0..g.len())
        .map(|p| (0..u.m()).map(|k| u.comp(k)[p]).sum())
        .collect();
    (
        ScalarField::new(g.clone(), norm).expect("grid sized"),
        ScalarField::new(g.clone(), sum).expect("grid sized"),
    )
}

fn grid_json(g: &GridSpec<f64>) -> Value {
    json!({ "lo": g.lo(), "hi": g.hi(), "nodes": g.dims() })
}

/// Components, `|u|`, `Σuᵢ` (FBM1, CSV and PGM), the positivity mask, the
/// trace and the summary.
fn write_solution(dir: &Path, cfg: &RunConfig, sol: &Solution<f64>) -> Result<Value, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let (norm, sum) = derived(&sol.u);
    let mut fields: Vec<(String, ScalarField<f64>)> = (0..sol.u.m())
        .map(|k| (format!("u{}", k + 1), sol.u.component(k)))
        .collect();
    fields.push(("norm".into(), norm));
    fields.push(("sum".into(), sum));
    let mut files = Vec::new();
    for (name, f) in &fields {
        write(dir, &format!("{name}.fbm"), encode_fbm(f))?;
        write(dir, &format!("{name}.csv"), encode_csv(f))?;
        write(dir, &format!("{name}.pgm"), encode_field_pgm(f))?;
        files.extend(["fbm", "csv", "pgm"].map(|e| format!("{name}.{e}")));
    }
    write(dir, "mask.pgm", encode_mask_pgm(&sol.mask))?;
    write(dir, "trace.csv", trace_csv(&sol.trace))?;
    files.extend(["mask.pgm".to_string(), "trace.csv".to_string()]);

    let mut moves: BTreeMap<String, usize> = BTreeMap::new();
    for r in &sol.trace {
        *moves.entry(r.kind.to_string()).or_default() += 1;
    }
    let d_total: f64 = sol.trace.iter().map(|r| r.d_moved).sum();
    let d_max = sol.trace.iter().map(|r| r.d_moved).fold(0.0, f64::max);
    files.push("summary.json".into());
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "grid": grid_json(&cfg.grid),
        "m": cfg.m,
        "seed": cfg.solver.seed,
        "energy": {
            "dirichlet": sol.energy.dirichlet,
            "volume": sol.energy.volume,
            "total": sol.energy.total,
        },
        "iterations": sol.trace.len(),
        "moves": moves,
        "d_total": d_total,
        "d_max": d_max,
        "positive_nodes": sol.mask.count(),
        "files": files,
    });
    write(dir, "summary.json", to_json(&summary))?;
    Ok(summary)
}

/// Minimizes for the configured problem and writes the artifacts into the
/// output directory. Solver failures leave `error.json` there.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Value, CliError> {
    let q = cfg.weight.build(&cfg.grid)?;
    let bd = cfg.boundary.build(&cfg.grid, cfg.m)?;
    match minimize(&cfg.grid, &q, &bd, &cfg.solver) {
        Ok(sol) => write_solution(&cfg.output, cfg, &sol),
        Err(e) => {
            let _ = fs::create_dir_all(&cfg.output);
            let report = json!({
                "schema": SUMMARY_SCHEMA,
                "stage": "solve",
                "error": e.to_string(),
                "grid": grid_json(&cfg.grid),
                "m": cfg.m,
            });
            let _ = write(&cfg.output, "error.json", to_json(&report));
            Err(CliError::Runtime(format!("solver failed: {e}")))
        }
    }
}

/// Reads `u1.fbm … um.fbm` from `dir`.
pub fn load_solution(dir: &Path, m: usize) -> Result<VectorField<f64>, CliError> {
    let comps = (1..=m)
        .map(|k| {
            let path = dir.join(format!("u{k}.fbm"));
            read_fbm::<f64>(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorField::from_components(comps)?)
}

/// Runs the configured checks on the solution in `solution` and writes
/// `report.json` plus `weiss_<k>.csv` there.
pub fn cmd_diagnose(cfg: &RunConfig, solution: &Path) -> Result<DiagnosticsReport, CliError> {
    let u = load_solution(solution, cfg.m)?;
    if !u.grid().same_as(&cfg.grid) {
        return Err(CliError::Runtime(format!(
            "solution grid {:?} does not match the configured grid {:?}",
            u.grid().dims(),
            cfg.grid.dims()
        )));
    }
    let q = cfg.weight.build(&cfg.grid)?;
    let bd = cfg.boundary.build(&cfg.grid, cfg.m)?;
    let out = run_checks(&u, &q, &bd, &cfg.diagnostics, cfg.solver.seed);
    for (name, csv) in &out.weiss_csv {
        write(solution, name, csv)?;
    }
    write(solution, "report.json", out.report.to_json())?;
    if out.report.passed() {
        Ok(out.report)
    } else {
        Err(CliError::Checks(
            out.report.failures().iter().map(|s| s.to_string()).collect(),
        ))
    }
}

/// Solves the built-in two-component problem and runs every diagnostic.
pub fn cmd_figure1(resolution: usize, out: &Path, seed: u64) -> Result<DiagnosticsReport, CliError> {
    let mut cfg = RunConfig::figure1(resolution)?;
    cfg.output = out.to_path_buf();
    cfg.solver.seed = seed;
    cmd_solve(&cfg)?;
    cmd_diagnose(&cfg, out)
}

/// Eigenvalue sweep of the arc problem; fails unless only half-planes remain.
pub fn cmd_homogeneous(nodes: usize) -> Result<Value, CliError> {
    let c = classify_homogeneous_2d(nodes)?;
    let v = serde_json::to_value(&c).map_err(|e| CliError::Runtime(e.to_string()))?;
    if c.half_plane_only {
        Ok(v)
    } else {
        Err(CliError::Checks(vec!["homogeneous".into()]))
    }
}

/// Hodograph study on the axis box `[lo, hi]` of the solution in `solution`;
/// the patch covers the middle half of the box width and levels up to half
/// the smallest value of the lead component along the top edge. The ratio
/// compares the residual at the coarse nodes on both grids.
pub fn cmd_hodograph(
    cfg: &RunConfig,
    solution: &Path,
    lo: [f64; 2],
    hi: [f64; 2],
    lead: Option<usize>,
    ny: usize,
) -> Result<Value, CliError> {
    let u = load_solution(solution, cfg.m)?;
    let window = HodographWindow::axis_box(lo, hi).map_err(|e| CliError::Config(e.to_string()))?;
    let a = 0.25 * (hi[0] - lo[0]);
    let t_top = hi[1] - lo[1];
    let lead = match lead {
        Some(k) if k >= 1 && k <= u.m() => k - 1,
        Some(k) => return Err(CliError::Config(format!("lead component {k} out of range 1..={}", u.m()))),
        None => {
            let v = u.sample(window.point(0.0, t_top))?;
            (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b })
        }
    };
    let mut top = f64::INFINITY;
    for yp in [-a, 0.0, a] {
        top = top.min(u.sample(window.point(yp, t_top))?[lead]);
    }
    top *= 0.5;
    if !(top > 0.0) {
        return Err(CliError::Runtime(format!(
            "component {} vanishes along the top of the window",
            lead + 1
        )));
    }
    let q = cfg.weight.build(u.grid())?;
    let mut levels = Vec::new();
    for (s, n) in [ny, 2 * ny - 1].into_iter().enumerate() {
        let yg = GridSpec::new([-a, 0.0], [a, top], [n, n])?;
        let patch = hodograph_transform(&u, lead, &window, &yg)?;
        let op = operator_residual(&patch)?;
        let bc = fb_bc_residual(&patch, &q)?;
        levels.push(json!({
            "ny": n,
            "operator_max": op.max.iter().copied().fold(0.0, f64::max),
            "operator_shared": op.max_on_subgrid(&yg, 1 << s),
            "fb_bc_max": bc.max,
            "ellipticity_margin": ellipticity_margin(&patch),
            "round_trip": patch.round_trip,
        }));
    }
    let coarse = levels[0]["operator_shared"].as_f64().unwrap_or(f64::NAN);
    let fine = levels[1]["operator_shared"].as_f64().unwrap_or(f64::NAN);
    let v = json!({
        "window": { "lo": lo, "hi": hi },
        "lead": lead + 1,
        "patch": { "half_width": a, "top_level": top },
        "levels": levels,
        "ratio": if fine > 0.0 { coarse / fine } else { f64::INFINITY },
    });
    write(solution, "hodograph.json", to_json(&v))?;
    Ok(v)
}

/// Caps the rayon pool at `FBMIN_THREADS` workers when the variable is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FBMIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("FBMIN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Solution directory: the explicit one or the configured output directory.
pub fn solution_dir(cfg: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| cfg.output.clone())
}
