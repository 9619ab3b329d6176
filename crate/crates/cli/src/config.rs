//! Run configuration: a TOML file with `[grid]`, `[weight]`, `[boundary]`,
//! `[solver]`, `[output]` and `[diagnostics]` sections plus a top-level `m`.
//!
//! ```toml
//! m = 2
//!
//! [grid]
//! lo = [-1.0, -1.0]
//! hi = [1.0, 1.0]
//! resolution = 129        # or nodes = [nx, ny]
//!
//! [weight]
//! kind = "constant"       # constant | radial | file
//! value = 1.0             # constant: Q ≡ value
//! # radial: Q(x) = q0 + q1 |x|
//! # file: path = "q.fbm" (or .csv), optional q_min / q_max bounds
//!
//! [boundary]
//! preset = "figure1"      # figure1 | constant | halfplane | tabulated
//! # constant: values = [..] per component
//! # halfplane: q0, normal = [ν₁, ν₂], direction = [e₁, ..]
//! # tabulated: [boundary.edges] with bottom, top (nx values, left to right)
//! #   and left, right (ny values, bottom to top), one list per component;
//! #   or files = [..] per component, of which the boundary nodes are used
//!
//! [solver]
//! seed = 0
//!
//! [output]
//! dir = "out"
//!
//! [diagnostics]
//! checks = ["all"]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fbmin_core::homogeneous::HalfPlaneSpec;
use fbmin_core::io::{read_csv, read_fbm};
use fbmin_core::{BoundaryData, GridSpec, ScalarField, SolverConfig, WeightField};
use serde::Deserialize;

use crate::error::CliError;

/// Every diagnostic `cmd_diagnose` can run, in report order.
pub const ALL_CHECKS: [&str; 10] = [
    "admissibility",
    "scaling",
    "weiss",
    "fb-condition",
    "traces",
    "identities",
    "nta",
    "flatness",
    "blowup-classify",
    "hodograph",
];

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    m: Option<usize>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    weight: RawWeight,
    #[serde(default)]
    boundary: RawBoundary,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    diagnostics: RawDiagnostics,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawGrid {
    lo: [f64; 2],
    hi: [f64; 2],
    resolution: Option<usize>,
    nodes: Option<[usize; 2]>,
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid {
            lo: [-1.0, -1.0],
            hi: [1.0, 1.0],
            resolution: None,
            nodes: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawWeight {
    kind: String,
    value: Option<f64>,
    q0: Option<f64>,
    q1: Option<f64>,
    path: Option<String>,
    q_min: Option<f64>,
    q_max: Option<f64>,
}

impl Default for RawWeight {
    fn default() -> Self {
        RawWeight {
            kind: "constant".into(),
            value: None,
            q0: None,
            q1: None,
            path: None,
            q_min: None,
            q_max: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawBoundary {
    preset: String,
    values: Option<Vec<f64>>,
    q0: Option<f64>,
    normal: Option<[f64; 2]>,
    direction: Option<Vec<f64>>,
    files: Option<Vec<String>>,
    edges: Option<EdgeTables>,
}

/// Boundary values along the four sides, one list per component.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTables {
    pub bottom: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub top: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
}

impl EdgeTables {
    fn sides(&self) -> [(&'static str, &Vec<Vec<f64>>); 4] {
        [
            ("bottom", &self.bottom),
            ("right", &self.right),
            ("top", &self.top),
            ("left", &self.left),
        ]
    }

    fn check(&self, grid: Option<&GridSpec<f64>>, errs: &mut Vec<String>) {
        let m = self.bottom.len();
        for (name, side) in self.sides() {
            if side.len() != m {
                errs.push(format!("boundary.edges.{name} has {} components, bottom has {m}", side.len()));
            }
            if side.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                errs.push(format!("boundary.edges.{name} has negative or non-finite values"));
            }
        }
        let Some(g) = grid else { return };
        let (nx, ny) = (g.nx(), g.ny());
        for (name, side, n) in [
            ("bottom", &self.bottom, nx),
            ("top", &self.top, nx),
            ("left", &self.left, ny),
            ("right", &self.right, ny),
        ] {
            if side.iter().any(|c| c.len() != n) {
                errs.push(format!("boundary.edges.{name} lists need {n} values each"));
                return;
            }
        }
        if self.sides().iter().any(|(_, s)| s.len() != m) {
            return;
        }
        for k in 0..m {
            let corners = [
                ("bottom-left", self.bottom[k][0], self.left[k][0]),
                ("bottom-right", self.bottom[k][nx - 1], self.right[k][0]),
                ("top-left", self.top[k][0], self.left[k][ny - 1]),
                ("top-right", self.top[k][nx - 1], self.right[k][ny - 1]),
            ];
            for (name, a, b) in corners {
                if a != b {
                    errs.push(format!(
                        "boundary.edges: component {} disagrees at the {name} corner ({a} vs {b})",
                        k + 1
                    ));
                }
            }
        }
    }

    fn values(&self, grid: &GridSpec<f64>) -> Vec<Vec<f64>> {
        let (nx, ny) = (grid.nx(), grid.ny());
        (0..self.bottom.len())
            .map(|k| {
                let mut v = vec![0.0; grid.len()];
                for i in 0..nx {
                    v[grid.idx(i, 0)] = self.bottom[k][i];
                    v[grid.idx(i, ny - 1)] = self.top[k][i];
                }
                for j in 0..ny {
                    v[grid.idx(0, j)] = self.left[k][j];
                    v[grid.idx(nx - 1, j)] = self.right[k][j];
                }
                v
            })
            .collect()
    }
}

impl Default for RawBoundary {
    fn default() -> Self {
        RawBoundary {
            preset: "figure1".into(),
            values: None,
            q0: None,
            normal: None,
            direction: None,
            files: None,
            edges: None,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawSolver {
    seed: Option<u64>,
    eps_schedule: Option<Vec<f64>>,
    descent_iters: Option<usize>,
    max_outer: Option<usize>,
    harmonic_tol: Option<f64>,
    flip_radius: Option<usize>,
    kick_rounds: Option<usize>,
    multilevel: Option<bool>,
    step_initial: Option<f64>,
    step_backtrack: Option<f64>,
    step_c_dec: Option<f64>,
    step_min: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawOutput {
    dir: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { dir: "out".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawDiagnostics {
    checks: Vec<String>,
    points: usize,
    r_min: Option<f64>,
    r_max: f64,
    density_floor: f64,
    growth_ratio: f64,
    fb_median: f64,
    weiss_slack: Option<f64>,
    nta_m: f64,
    nta_c: f64,
    identity_tol: f64,
    blowup_tol: f64,
    hodograph_ratio: f64,
}

impl Default for RawDiagnostics {
    fn default() -> Self {
        let d = DiagnosticsConfig::defaults(1.0);
        RawDiagnostics {
            checks: vec!["all".into()],
            points: d.points,
            r_min: None,
            r_max: d.r_max,
            density_floor: d.density_floor,
            growth_ratio: d.growth_ratio,
            fb_median: d.fb_median,
            weiss_slack: None,
            nta_m: d.nta_m,
            nta_c: d.nta_c,
            identity_tol: d.identity_tol,
            blowup_tol: d.blowup_tol,
            hodograph_ratio: d.hodograph_ratio,
        }
    }
}

#[derive(Debug, Clone)]
pub enum WeightSpec {
    Constant(f64),
    /// `Q(x) = q0 + q1 |x|`.
    Radial { q0: f64, q1: f64 },
    Field(WeightField<f64>),
}

impl WeightSpec {
    pub fn build(&self, grid: &GridSpec<f64>) -> Result<WeightField<f64>, CliError> {
        let w = match self {
            WeightSpec::Constant(q) => WeightField::constant(grid.clone(), *q),
            WeightSpec::Radial { q0, q1 } => WeightField::from_fn(grid.clone(), |p| {
                q0 + q1 * (p[0] * p[0] + p[1] * p[1]).sqrt()
            }),
            WeightSpec::Field(w) => {
                if !w.grid().same_as(grid) {
                    return Err(CliError::Runtime(
                        "tabulated weight grid differs from the solution grid".into(),
                    ));
                }
                Ok(w.clone())
            }
        };
        w.map_err(|e| CliError::Runtime(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub enum BoundarySpec {
    /// `g₁ = x₂⁻`, `g₂ = x₁⁺`.
    Figure1,
    Constant(Vec<f64>),
    HalfPlane(HalfPlaneSpec<f64>),
    Tabulated(Vec<ScalarField<f64>>),
    Edges(EdgeTables),
}

impl BoundarySpec {
    pub fn build(&self, grid: &GridSpec<f64>, m: usize) -> Result<BoundaryData<f64>, CliError> {
        let b = match self {
            BoundarySpec::Figure1 => BoundaryData::from_fn(grid.clone(), m, |p, o| {
                o[0] = (-p[1]).max(0.0);
                o[1] = p[0].max(0.0);
            }),
            BoundarySpec::Constant(v) => {
                BoundaryData::from_fn(grid.clone(), m, |_, o| o.copy_from_slice(v))
            }
            BoundarySpec::HalfPlane(spec) => {
                BoundaryData::from_fn(grid.clone(), m, |p, o| spec.eval(p, o))
            }
            BoundarySpec::Tabulated(fields) => {
                if fields.iter().any(|f| !f.grid().same_as(grid)) {
                    return Err(CliError::Runtime(
                        "tabulated boundary grid differs from the solution grid".into(),
                    ));
                }
                BoundaryData::new(
                    grid.clone(),
                    fields.iter().map(|f| f.values().to_vec()).collect(),
                )
            }
            BoundarySpec::Edges(t) => {
                if t.bottom.iter().any(|c| c.len() != grid.nx())
                    || t.left.iter().any(|c| c.len() != grid.ny())
                {
                    return Err(CliError::Runtime(
                        "edge tables do not match the solution grid".into(),
                    ));
                }
                BoundaryData::new(grid.clone(), t.values(grid))
            }
        };
        b.map_err(|e| CliError::Runtime(e.to_string()))
    }
}

/// Thresholds and sampling for `cmd_diagnose`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub checks: Vec<String>,
    /// Number of free boundary test points.
    pub points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub density_floor: f64,
    /// Bound on `C/c` for the growth sandwich.
    pub growth_ratio: f64,
    pub fb_median: f64,
    pub weiss_slack: f64,
    pub nta_m: f64,
    pub nta_c: f64,
    pub identity_tol: f64,
    pub blowup_tol: f64,
    /// Required decrease of the hodograph operator residual under refinement.
    pub hodograph_ratio: f64,
}

impl DiagnosticsConfig {
    pub fn defaults(h: f64) -> Self {
        DiagnosticsConfig {
            checks: ALL_CHECKS.iter().map(|s| s.to_string()).collect(),
            points: 3,
            r_min: 8.0 * h,
            r_max: 0.25,
            density_floor: 0.05,
            growth_ratio: 10.0,
            fb_median: 0.15,
            weiss_slack: 5.0 * h,
            nta_m: 3.0,
            nta_c: 0.05,
            identity_tol: 0.1,
            blowup_tol: 0.25,
            hodograph_ratio: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridSpec<f64>,
    pub m: usize,
    pub weight: WeightSpec,
    pub boundary: BoundarySpec,
    pub solver: SolverConfig<f64>,
    pub output: PathBuf,
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    /// The built-in two-component preset on `[-1, 1]²` with `Q ≡ 1`.
    pub fn figure1(resolution: usize) -> Result<Self, CliError> {
        let grid = GridSpec::square(-1.0, 1.0, resolution)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let h = grid.h_max();
        Ok(RunConfig {
            solver: SolverConfig::for_spacing(h),
            diagnostics: DiagnosticsConfig::defaults(h),
            grid,
            m: 2,
            weight: WeightSpec::Constant(1.0),
            boundary: BoundarySpec::Figure1,
            output: PathBuf::from("figure1"),
        })
    }

    /// Replaces the check list, expanding `all`; unknown names are errors.
    pub fn select_checks(&mut self, names: &[String]) -> Result<(), CliError> {
        self.diagnostics.checks = expand_checks(names).map_err(CliError::Config)?;
        Ok(())
    }
}

fn expand_checks(names: &[String]) -> Result<Vec<String>, String> {
    let mut out: Vec<String> = Vec::new();
    let mut unknown = Vec::new();
    for n in names {
        let n = n.trim();
        if n == "all" {
            out.extend(ALL_CHECKS.iter().map(|s| s.to_string()));
        } else if ALL_CHECKS.contains(&n) {
            out.push(n.to_string());
        } else {
            unknown.push(n.to_string());
        }
    }
    if !unknown.is_empty() {
        return Err(format!(
            "unknown checks: {} (expected any of {} or all)",
            unknown.join(", "),
            ALL_CHECKS.join(", ")
        ));
    }
    Ok(ALL_CHECKS
        .iter()
        .filter(|c| out.iter().any(|o| o == *c))
        .map(|s| s.to_string())
        .collect())
}

fn load_field(path: &Path) -> Result<ScalarField<f64>, String> {
    let res = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_fbm(path),
    };
    res.map_err(|e| format!("{}: {e}", path.display()))
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses config text, resolving relative paths against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, String> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    validate(raw, base)
}

fn validate(raw: RawConfig, base: &Path) -> Result<RunConfig, String> {
    let mut errs: Vec<String> = Vec::new();
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let g = &raw.grid;
    let nodes = match (g.resolution, g.nodes) {
        (Some(_), Some(_)) => {
            errs.push("grid: give either resolution or nodes, not both".into());
            [129, 129]
        }
        (Some(n), None) => [n, n],
        (None, Some(n)) => n,
        (None, None) => [129, 129],
    };
    let grid = match GridSpec::new(g.lo, g.hi, nodes) {
        Ok(grid) => Some(grid),
        Err(e) => {
            errs.push(format!("grid: {e}"));
            None
        }
    };
    let h = grid.as_ref().map_or(1.0, |g| g.h_max());

    let preset_m = match raw.boundary.preset.as_str() {
        "figure1" => Some(2),
        "constant" => raw.boundary.values.as_ref().map(|v| v.len()),
        "halfplane" => Some(raw.boundary.direction.as_ref().map_or(1, |d| d.len())),
        "tabulated" => match (&raw.boundary.edges, &raw.boundary.files) {
            (Some(t), _) => Some(t.bottom.len()),
            (None, f) => f.as_ref().map(|f| f.len()),
        },
        _ => None,
    };
    let m = raw.m.or(preset_m).unwrap_or(1);
    if m == 0 {
        errs.push("m must be at least 1".into());
    }
    if let Some(pm) = preset_m {
        if pm != m {
            errs.push(format!(
                "m = {m} but boundary preset {} provides {pm} components",
                raw.boundary.preset
            ));
        }
    }

    let weight = validate_weight(&raw.weight, grid.as_ref(), &resolve, &mut errs);
    let boundary = validate_boundary(&raw.boundary, grid.as_ref(), &resolve, &mut errs);

    let mut solver = SolverConfig::for_spacing(h);
    let s = &raw.solver;
    if let Some(v) = s.seed {
        solver.seed = v;
    }
    if let Some(v) = &s.eps_schedule {
        solver.eps_schedule = v.clone();
    }
    if let Some(v) = s.descent_iters {
        solver.descent_iters = v;
    }
    if let Some(v) = s.max_outer {
        solver.max_outer = v;
    }
    if let Some(v) = s.harmonic_tol {
        solver.harmonic_tol = v;
    }
    if let Some(v) = s.flip_radius {
        solver.flip_radius = v;
    }
    if let Some(v) = s.kick_rounds {
        solver.kick_rounds = v;
    }
    if let Some(v) = s.multilevel {
        solver.multilevel = v;
    }
    if let Some(v) = s.step_initial {
        solver.step.initial = v;
    }
    if let Some(v) = s.step_backtrack {
        solver.step.backtrack = v;
    }
    if let Some(v) = s.step_c_dec {
        solver.step.c_dec = v;
    }
    if let Some(v) = s.step_min {
        solver.step.min_step = v;
    }
    if grid.is_some() {
        if let Err(e) = solver.validate(h) {
            errs.push(format!("solver: {e}"));
        }
    }

    let d = &raw.diagnostics;
    let checks = expand_checks(&d.checks).unwrap_or_else(|e| {
        errs.push(format!("diagnostics: {e}"));
        Vec::new()
    });
    let diagnostics = DiagnosticsConfig {
        checks,
        points: d.points,
        r_min: d.r_min.unwrap_or((8.0 * h).min(d.r_max)),
        r_max: d.r_max,
        density_floor: d.density_floor,
        growth_ratio: d.growth_ratio,
        fb_median: d.fb_median,
        weiss_slack: d.weiss_slack.unwrap_or(5.0 * h),
        nta_m: d.nta_m,
        nta_c: d.nta_c,
        identity_tol: d.identity_tol,
        blowup_tol: d.blowup_tol,
        hodograph_ratio: d.hodograph_ratio,
    };
    if diagnostics.points == 0 {
        errs.push("diagnostics.points must be positive".into());
    }
    if !(diagnostics.r_min > 0.0 && diagnostics.r_min <= diagnostics.r_max) {
        errs.push(format!(
            "diagnostics: need 0 < r_min ({}) <= r_max ({})",
            diagnostics.r_min, diagnostics.r_max
        ));
    }
    for (name, v) in [
        ("density_floor", diagnostics.density_floor),
        ("growth_ratio", diagnostics.growth_ratio),
        ("fb_median", diagnostics.fb_median),
        ("weiss_slack", diagnostics.weiss_slack),
        ("nta_m", diagnostics.nta_m),
        ("nta_c", diagnostics.nta_c),
        ("identity_tol", diagnostics.identity_tol),
        ("blowup_tol", diagnostics.blowup_tol),
        ("hodograph_ratio", diagnostics.hodograph_ratio),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            errs.push(format!("diagnostics.{name} must be finite and nonnegative"));
        }
    }

    if raw.output.dir.is_empty() {
        errs.push("output.dir is empty".into());
    }
    let output = resolve(&raw.output.dir);

    if !errs.is_empty() {
        let mut msg = format!("{} configuration error(s):", errs.len());
        for e in &errs {
            let _ = write!(msg, "\n  - {e}");
        }
        return Err(msg);
    }
    Ok(RunConfig {
        grid: grid.expect("checked above"),
        m,
        weight: weight.expect("checked above"),
        boundary: boundary.expect("checked above"),
        solver,
        output,
        diagnostics,
    })
}

fn positive(name: &str, v: Option<f64>, default: Option<f64>, errs: &mut Vec<String>) -> f64 {
    match v.or(default) {
        Some(x) if x.is_finite() && x > 0.0 => x,
        Some(x) => {
            errs.push(format!("{name} must be positive and finite, got {x}"));
            f64::NAN
        }
        None => {
            errs.push(format!("{name} is required"));
            f64::NAN
        }
    }
}

fn validate_weight(
    w: &RawWeight,
    grid: Option<&GridSpec<f64>>,
    resolve: &dyn Fn(&str) -> PathBuf,
    errs: &mut Vec<String>,
) -> Option<WeightSpec> {
    let n0 = errs.len();
    if let Some(q) = w.q_min {
        if !(q > 0.0) {
            errs.push(format!("weight.q_min must be positive, got {q}"));
        }
    }
    if let (Some(a), Some(b)) = (w.q_min, w.q_max) {
        if b < a {
            errs.push(format!("weight.q_max ({b}) is below weight.q_min ({a})"));
        }
    }
    let within = |lo: f64, hi: f64, errs: &mut Vec<String>| {
        if let Some(q) = w.q_min {
            if lo < q {
                errs.push(format!("weight falls to {lo}, below q_min = {q}"));
            }
        }
        if let Some(q) = w.q_max {
            if hi > q {
                errs.push(format!("weight rises to {hi}, above q_max = {q}"));
            }
        }
    };
    let spec = match w.kind.as_str() {
        "constant" => {
            let q = positive("weight.value", w.value, Some(1.0), errs);
            within(q, q, errs);
            Some(WeightSpec::Constant(q))
        }
        "radial" => {
            let q0 = positive("weight.q0", w.q0, None, errs);
            let q1 = w.q1.unwrap_or(0.0);
            if !q1.is_finite() {
                errs.push("weight.q1 must be finite".into());
            }
            if let Some(g) = grid {
                let f = |p: [f64; 2]| q0 + q1 * (p[0] * p[0] + p[1] * p[1]).sqrt();
                let vals: Vec<f64> = (0..g.len()).map(|p| f(g.node_at(p))).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(lo > 0.0) {
                    errs.push(format!("radial weight reaches {lo} on the grid; Q must stay positive"));
                }
                within(lo, hi, errs);
            }
            Some(WeightSpec::Radial { q0, q1 })
        }
        "file" => match (&w.path, grid) {
            (None, _) => {
                errs.push("weight.path is required for kind = \"file\"".into());
                None
            }
            (Some(p), g) => match load_field(&resolve(p)) {
                Err(e) => {
                    errs.push(format!("weight.path: {e}"));
                    None
                }
                Ok(f) => {
                    if let Some(g) = g {
                        if !f.grid().same_as(g) {
                            errs.push("weight.path: field grid differs from [grid]".into());
                        }
                    }
                    let vals = f.values();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    within(lo, hi, errs);
                    let qmin = w.q_min.unwrap_or(lo);
                    let qmax = w.q_max.unwrap_or(hi);
                    match WeightField::new(f.grid().clone(), vals.to_vec(), qmin, qmax) {
                        Ok(wf) => Some(WeightSpec::Field(wf)),
                        Err(e) => {
                            errs.push(format!("weight.path: {e}"));
                            None
                        }
                    }
                }
            },
        },
        other => {
            errs.push(format!(
                "weight.kind \"{other}\" is not one of constant, radial, file"
            ));
            None
        }
    };
    if errs.len() > n0 {
        None
    } else {
        spec
    }
}

fn validate_boundary(
    b: &RawBoundary,
    grid: Option<&GridSpec<f64>>,
    resolve: &dyn Fn(&str) -> PathBuf,
    errs: &mut Vec<String>,
) -> Option<BoundarySpec> {
    let n0 = errs.len();
    let spec = match b.preset.as_str() {
        "figure1" => Some(BoundarySpec::Figure1),
        "constant" => match &b.values {
            None => {
                errs.push("boundary.values is required for preset = \"constant\"".into());
                None
            }
            Some(v) => {
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    errs.push("boundary.values must be finite and nonnegative".into());
                }
                Some(BoundarySpec::Constant(v.clone()))
            }
        },
        "halfplane" => {
            let q0 = b.q0.unwrap_or(1.0);
            let nu = b.normal.unwrap_or([0.0, 1.0]);
            let e = b.direction.clone().unwrap_or_else(|| vec![1.0]);
            match HalfPlaneSpec::new(q0, nu, e) {
                Ok(s) => Some(BoundarySpec::HalfPlane(s)),
                Err(err) => {
                    errs.push(format!("boundary: {err}"));
                    None
                }
            }
        }
        "tabulated" => match (&b.edges, &b.files) {
            (None, None) => {
                errs.push(
                    "boundary.edges or boundary.files is required for preset = \"tabulated\"".into(),
                );
                None
            }
            (Some(_), Some(_)) => {
                errs.push("boundary.edges and boundary.files are mutually exclusive".into());
                None
            }
            (Some(t), None) => {
                t.check(grid, errs);
                Some(BoundarySpec::Edges(t.clone()))
            }
            (None, Some(files)) => {
                let mut fields = Vec::new();
                for f in files {
                    match load_field(&resolve(f)) {
                        Ok(field) => {
                            if let Some(g) = grid {
                                if !field.grid().same_as(g) {
                                    errs.push(format!(
                                        "boundary.files: {f} has a grid different from [grid]"
                                    ));
                                }
                            }
                            if field.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                                errs.push(format!("boundary.files: {f} has negative or non-finite values"));
                            }
                            fields.push(field);
                        }
                        Err(e) => errs.push(format!("boundary.files: {e}")),
                    }
                }
                Some(BoundarySpec::Tabulated(fields))
            }
        },
        other => {
            errs.push(format!(
                "boundary.preset \"{other}\" is not one of figure1, constant, halfplane, tabulated"
            ));
            None
        }
    };
    if errs.len() > n0 {
        None
    } else {
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, String> {
        parse_config_str(s, Path::new("/tmp"))
    }

    #[test]
    fn minimal_figure1() {
        let c = parse("[boundary]\npreset = \"figure1\"\n").unwrap();
        assert_eq!(c.m, 2);
        assert!(matches!(c.weight, WeightSpec::Constant(q) if q == 1.0));
        assert_eq!(c.grid.dims(), [129, 129]);
        assert_eq!(c.diagnostics.checks.len(), ALL_CHECKS.len());
        assert_eq!(c.output, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn zero_q_min_is_rejected() {
        let e = parse("[weight]\nkind = \"constant\"\nq_min = 0.0\n").unwrap_err();
        assert!(e.contains("q_min must be positive"), "{e}");
        let e = parse("[weight]\nvalue = 0.0\n").unwrap_err();
        assert!(e.contains("weight.value"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("foo = 1\n").unwrap_err();
        assert!(e.contains("foo"), "{e}");
        let e = parse("[grid]\nresolution = 33\nfoo = 2\n").unwrap_err();
        assert!(e.contains("foo") && e.contains("line 3"), "{e}");
    }

    #[test]
    fn violations_are_listed_together() {
        let e = parse(
            "[grid]\nresolution = 2\n[weight]\nvalue = -1.0\n[boundary]\npreset = \"nope\"\n[diagnostics]\nchecks = [\"weiss\", \"bogus\"]\n",
        )
        .unwrap_err();
        for needle in ["grid", "weight.value", "nope", "bogus"] {
            assert!(e.contains(needle), "{needle} missing from {e}");
        }
    }

    #[test]
    fn missing_files_are_reported() {
        let e = parse("[boundary]\npreset = \"tabulated\"\nfiles = [\"absent.fbm\"]\n").unwrap_err();
        assert!(e.contains("absent.fbm"), "{e}");
    }

    #[test]
    fn edge_tables_fill_the_boundary() {
        let text = "[grid]\nnodes = [4, 3]\n[boundary]\npreset = \"tabulated\"\n\
            [boundary.edges]\nbottom = [[1.0, 2.0, 3.0, 4.0]]\ntop = [[7.0, 0.0, 0.0, 5.0]]\n\
            left = [[1.0, 9.0, 7.0]]\nright = [[4.0, 6.0, 5.0]]\n";
        let c = parse(text).unwrap();
        assert_eq!(c.m, 1);
        let bd = c.boundary.build(&c.grid, c.m).unwrap();
        let g = &c.grid;
        let v = bd.comp(0);
        assert_eq!(v[g.idx(1, 0)], 2.0);
        assert_eq!(v[g.idx(0, 1)], 9.0);
        assert_eq!(v[g.idx(3, 1)], 6.0);
        assert_eq!(v[g.idx(3, 2)], 5.0);
        assert_eq!(v[g.idx(1, 1)], 0.0);

        let bad = text.replace("right = [[4.0,", "right = [[4.5,");
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("bottom-right"), "{e}");
        let short = text.replace("bottom = [[1.0, 2.0, 3.0, 4.0]]", "bottom = [[1.0, 2.0]]");
        let e = parse(&short).unwrap_err();
        assert!(e.contains("need 4 values"), "{e}");
    }

    #[test]
    fn components_must_agree() {
        let e = parse("m = 3\n").unwrap_err();
        assert!(e.contains("provides 2"), "{e}");
        let c = parse("[boundary]\npreset = \"constant\"\nvalues = [1.0, 0.5, 0.0]\n").unwrap();
        assert_eq!(c.m, 3);
    }

    #[test]
    fn overrides_apply() {
        let c = parse(
            "[grid]\nnodes = [33, 17]\nlo = [0.0, 0.0]\nhi = [2.0, 1.0]\n[solver]\nseed = 7\nkick_rounds = 0\n[diagnostics]\nchecks = [\"weiss\", \"admissibility\"]\nr_max = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.grid.dims(), [33, 17]);
        assert_eq!(c.solver.seed, 7);
        assert_eq!(c.solver.kick_rounds, 0);
        assert_eq!(c.diagnostics.checks, vec!["admissibility", "weiss"]);
        assert!((c.diagnostics.weiss_slack - 5.0 * 0.0625).abs() < 1e-15);
    }

    #[test]
    fn radial_weight_must_stay_positive() {
        let e = parse("[weight]\nkind = \"radial\"\nq0 = 1.0\nq1 = -1.0\n").unwrap_err();
        assert!(e.contains("positive"), "{e}");
        let c = parse("[weight]\nkind = \"radial\"\nq0 = 1.0\nq1 = 0.5\n").unwrap();
        let w = c.weight.build(&c.grid).unwrap();
        assert!((w.q_max() - (1.0 + 0.5 * 2f64.sqrt())).abs() < 1e-12);
    }
}
