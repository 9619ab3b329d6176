//! Runs the configured diagnostics on a solution and assembles the report.

use fbmin_core::blowup::{blowup_sequence, classify_regular};
use fbmin_core::diagnostics::{
    bump, bump_field, dyadic_radii, extract_free_boundary, fb_condition_residual, flatness,
    identity_residuals, measure_residual, nta_check, scaling_report, weight_traces, weiss_curve,
    CheckStatus, DiagnosticsReport, FreeBoundary,
};
use fbmin_core::hodograph::{
    ellipticity_margin, fb_bc_residual, hodograph_transform, operator_residual, HodographWindow,
};
use fbmin_core::{BoundaryData, FbError, GridSpec, VectorField, WeightField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::DiagnosticsConfig;

/// Nodes per axis of the blowup frames.
pub const BLOWUP_NODES: usize = 65;
/// Candidate interface points scanned for the hodograph patch.
pub const HODOGRAPH_CANDIDATES: usize = 40;
/// Clearance from the domain boundary required of hodograph candidates.
pub const HODOGRAPH_CLEARANCE: f64 = 0.3;
/// Radius of the flatness test that ranks hodograph candidates.
pub const HODOGRAPH_FLATNESS_RADIUS: f64 = 0.1;
/// Hodograph columns run over `t ∈ [T_MIN, T_MAX]` along the inner normal.
pub const HODOGRAPH_T: [f64; 2] = [-0.1, 0.6];
/// Half-width in `y′` and top level of the hodograph patch.
pub const HODOGRAPH_PATCH: [f64; 2] = [0.1, 0.1];
/// Coarse nodes per axis of the hodograph patch; the fine grid has `2n − 1`.
pub const HODOGRAPH_COARSE: usize = 5;

/// Report plus the Weiss curves as `(file name, csv)` pairs.
#[derive(Debug, Clone)]
pub struct DiagnoseOutput {
    pub report: DiagnosticsReport,
    pub weiss_csv: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HodographStudy {
    pub point: [f64; 2],
    /// Unit normal pointing into the positivity set.
    pub inner_normal: [f64; 2],
    pub flatness: f64,
    pub lead: usize,
    pub ny: [usize; 2],
    /// Largest residual over each grid.
    pub operator_max: [f64; 2],
    /// Largest residual over the coarse nodes, on both grids.
    pub operator_shared: [f64; 2],
    /// `operator_shared[0] / operator_shared[1]`.
    pub ratio: f64,
    pub ellipticity_margin: f64,
    pub fb_bc_max: f64,
    pub round_trip: f64,
}

impl HodographStudy {
    pub fn passes(&self, ratio: f64) -> bool {
        self.ellipticity_margin > 0.0 && (self.operator_shared[1] <= 1e-10 || self.ratio >= ratio)
    }
}

fn hodograph_window_fits(grid: &GridSpec<f64>, w: &HodographWindow<f64>, a: f64) -> bool {
    [-a, a]
        .iter()
        .all(|&yp| HODOGRAPH_T.iter().all(|&t| grid.contains(w.point(yp, t))))
}

fn hodograph_lead(u: &VectorField<f64>, x: [f64; 2], inner: [f64; 2]) -> Result<usize, FbError> {
    let p = [x[0] + 0.1 * inner[0], x[1] + 0.1 * inner[1]];
    let v = u.sample(p)?;
    let mut lead = 0;
    for k in 1..v.len() {
        if v[k] >= v[lead] {
            lead = k;
        }
    }
    Ok(lead)
}

/// Operator residual of the hodograph patch at the flattest candidate
/// interface point, on a coarse and a refined `y`-grid. Convergence is read
/// off the nodes the two grids share.
///
/// Candidates are spread interface points whose window fits the domain; the
/// first with the smallest flatness wins.
pub fn flattest_hodograph_study(
    u: &VectorField<f64>,
    q: &WeightField<f64>,
    fb: &FreeBoundary<f64>,
) -> Result<HodographStudy, FbError> {
    let grid = u.grid();
    let [a, top] = HODOGRAPH_PATCH;
    let mut best: Option<(f64, [f64; 2], [f64; 2])> = None;
    for k in fb.spread_points(grid, HODOGRAPH_CLEARANCE, HODOGRAPH_CANDIDATES) {
        let x = fb.points[k];
        let Ok((sigma, nu)) = flatness(u, fb, x, HODOGRAPH_FLATNESS_RADIUS) else {
            continue;
        };
        let inner = [-nu[0], -nu[1]];
        let w = HodographWindow::new(x, inner, HODOGRAPH_T[0], HODOGRAPH_T[1])?;
        if !hodograph_window_fits(grid, &w, a) {
            continue;
        }
        if best.is_none_or(|b| sigma < b.0) {
            best = Some((sigma, x, inner));
        }
    }
    let (sigma, x, inner) = best.ok_or_else(|| {
        FbError::EmptyFreeBoundary("no interface point admits a hodograph window".into())
    })?;
    let lead = hodograph_lead(u, x, inner)?;
    let window = HodographWindow::new(x, inner, HODOGRAPH_T[0], HODOGRAPH_T[1])?;
    let ny = [HODOGRAPH_COARSE, 2 * HODOGRAPH_COARSE - 1];
    let mut operator_max = [0.0; 2];
    let mut operator_shared = [0.0; 2];
    let mut fine = None;
    for (s, &n) in ny.iter().enumerate() {
        let yg = GridSpec::new([-a, 0.0], [a, top], [n, n])?;
        let patch = hodograph_transform(u, lead, &window, &yg)?;
        let op = operator_residual(&patch)?;
        operator_max[s] = op.max.iter().copied().fold(0.0, f64::max);
        operator_shared[s] = op.max_on_subgrid(&yg, 1 << s);
        fine = Some(patch);
    }
    let patch = fine.expect("two resolutions");
    Ok(HodographStudy {
        point: x,
        inner_normal: inner,
        flatness: sigma,
        lead,
        ny,
        operator_max,
        operator_shared,
        ratio: if operator_shared[1] > 0.0 {
            operator_shared[0] / operator_shared[1]
        } else {
            f64::INFINITY
        },
        ellipticity_margin: ellipticity_margin(&patch),
        fb_bc_max: fb_bc_residual(&patch, q)?.max,
        round_trip: patch.round_trip,
    })
}

struct Context<'a> {
    u: &'a VectorField<f64>,
    q: &'a WeightField<f64>,
    cfg: &'a DiagnosticsConfig,
    fb: Result<FreeBoundary<f64>, FbError>,
    points: Vec<[f64; 2]>,
    radii: Vec<f64>,
    seed: u64,
}

impl Context<'_> {
    fn fb(&self) -> Result<&FreeBoundary<f64>, String> {
        self.fb.as_ref().map_err(|e| e.to_string())
    }

    fn points(&self) -> Result<&[[f64; 2]], String> {
        self.fb()?;
        if self.points.is_empty() {
            return Err(format!(
                "no free boundary point admits a ball of radius {}",
                self.cfg.r_max
            ));
        }
        Ok(&self.points)
    }
}

type Outcome = Result<(CheckStatus, Value), String>;

fn err<E: ToString>(e: E) -> String {
    e.to_string()
}

fn admissibility(u: &VectorField<f64>, bd: &BoundaryData<f64>) -> Outcome {
    let mut problems = Vec::new();
    if let Err(e) = u.check_admissible() {
        problems.push(e.to_string());
    }
    let boundary_exact = bd.matches(u);
    if !boundary_exact {
        problems.push("boundary values differ from the configured data".into());
    }
    Ok((
        CheckStatus::from_pass(problems.is_empty()),
        json!({ "boundary_exact": boundary_exact, "problems": problems }),
    ))
}

fn scaling(ctx: &Context, out: &mut DiagnosticsReport) {
    let run = || -> Result<(Vec<Value>, bool, bool), String> {
        let fb = ctx.fb()?;
        let mut rows = Vec::new();
        let (mut growth, mut density) = (true, true);
        for &x in ctx.points()? {
            let s = scaling_report(ctx.u, fb, x, &ctx.radii).map_err(err)?;
            let ratio = s.sup_max / s.sup_min;
            let g = s.sup_min > 0.0 && s.sup_max.is_finite() && ratio <= ctx.cfg.growth_ratio;
            let d = s.density_min >= ctx.cfg.density_floor;
            growth &= g;
            density &= d;
            rows.push(json!({
                "center": x,
                "c": s.sup_min,
                "C": s.sup_max,
                "ratio": ratio,
                "density_min": s.density_min,
                "growth_pass": g,
                "density_pass": d,
                "report": s,
            }));
        }
        Ok((rows, growth, density))
    };
    match run() {
        Ok((rows, growth, density)) => {
            out.push(
                "growth",
                "linear growth and nondegeneracy",
                CheckStatus::from_pass(growth),
                json!({ "bound": ctx.cfg.growth_ratio, "points": rows }),
            );
            out.push(
                "density",
                "positive density of the zero set",
                CheckStatus::from_pass(density),
                json!({ "floor": ctx.cfg.density_floor }),
            );
        }
        Err(e) => {
            for (name, what) in [
                ("growth", "linear growth and nondegeneracy"),
                ("density", "positive density of the zero set"),
            ] {
                out.push(name, what, CheckStatus::Fail, json!({ "error": e }));
            }
        }
    }
}

fn weiss(ctx: &Context, csv: &mut Vec<(String, String)>) -> Outcome {
    let mut curves = Vec::new();
    let mut ok = true;
    for (k, &x) in ctx.points()?.iter().enumerate() {
        let c = weiss_curve(ctx.u, ctx.q, x, &ctx.radii).map_err(err)?;
        let pass = c.monotone_within(ctx.cfg.weiss_slack);
        ok &= pass;
        csv.push((format!("weiss_{}.csv", k + 1), c.to_csv()));
        curves.push(json!({ "curve": c, "max_drop": c.max_drop(), "pass": pass }));
    }
    Ok((
        CheckStatus::from_pass(ok),
        json!({ "slack": ctx.cfg.weiss_slack, "curves": curves }),
    ))
}

fn fb_condition(ctx: &Context) -> Outcome {
    let rep = fb_condition_residual(ctx.u, ctx.q, ctx.fb()?).map_err(err)?;
    let pass = rep.median <= ctx.cfg.fb_median;
    Ok((
        CheckStatus::from_pass(pass),
        json!({
            "bound": ctx.cfg.fb_median,
            "median": rep.median,
            "max": rep.max,
            "max_uncut": rep.max_uncut,
            "points": rep.points.len(),
            "cut": rep.points.iter().filter(|p| p.cut).count(),
            "skipped": rep.skipped.len(),
        }),
    ))
}

fn traces(ctx: &Context) -> Outcome {
    let fb = ctx.fb()?;
    let r = ctx.cfg.r_max;
    let mut rows = Vec::new();
    let mut ok = true;
    for &x in ctx.points()? {
        let w = weight_traces(ctx.u, x, r, ctx.seed).map_err(err)?;
        let m = measure_residual(ctx.u, ctx.q, fb, bump(x, r)).map_err(err)?;
        let pass = w.normalization_error <= 1e-8 && w.min_weight >= 0.0;
        ok &= pass;
        rows.push(json!({
            "center": x,
            "nodes": w.nodes.len(),
            "normalization_error": w.normalization_error,
            "min_weight": w.min_weight,
            "holder": w.holder,
            "pairs": w.pairs,
            "measure": m,
        }));
    }
    Ok((CheckStatus::from_pass(ok), json!({ "radius": r, "points": rows })))
}

fn identities(ctx: &Context) -> Outcome {
    let fb = ctx.fb()?;
    let r = ctx.cfg.r_max;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &x in ctx.points()? {
        let (_, nu) = flatness(ctx.u, fb, x, r).map_err(err)?;
        let psi = bump_field(x, r, nu);
        let res = identity_residuals(ctx.u, ctx.q, fb, x, r, &psi).map_err(err)?;
        worst = worst
            .max(res.energy.residual)
            .max(res.pohozaev.residual)
            .max(res.domain_variation.residual);
        rows.push(res);
    }
    Ok((
        CheckStatus::from_pass(worst <= ctx.cfg.identity_tol),
        json!({ "bound": ctx.cfg.identity_tol, "max_residual": worst, "points": rows }),
    ))
}

fn nta(ctx: &Context) -> Outcome {
    let fb = ctx.fb()?;
    let mask = ctx.u.positivity_mask();
    let mut rows = Vec::new();
    let mut ok = true;
    for &x in ctx.points()? {
        let rep = nta_check(&mask, fb, x, &ctx.radii, ctx.cfg.nta_m, ctx.cfg.nta_c).map_err(err)?;
        ok &= rep.pass;
        rows.push(rep);
    }
    Ok((CheckStatus::from_pass(ok), json!({ "points": rows })))
}

fn flatness_check(ctx: &Context) -> Outcome {
    let fb = ctx.fb()?;
    let mut rows = Vec::new();
    for &x in ctx.points()? {
        let per_radius = ctx
            .radii
            .iter()
            .map(|&r| flatness(ctx.u, fb, x, r).map(|(s, nu)| json!({ "r": r, "sigma": s, "normal": nu })))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        rows.push(json!({ "center": x, "radii": per_radius }));
    }
    Ok((CheckStatus::Info, json!({ "points": rows })))
}

fn blowup(ctx: &Context) -> Outcome {
    let fb = ctx.fb()?;
    let target = GridSpec::square(-1.0, 1.0, BLOWUP_NODES).map_err(err)?;
    let radii: Vec<f64> = ctx.radii.iter().rev().copied().collect();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &x in ctx.points()? {
        let seq = blowup_sequence(ctx.u, fb, x, &radii, &target).map_err(err)?;
        let last = seq.frames.last().expect("at least two frames");
        let fit = classify_regular(last, ctx.q.at(x).map_err(err)?).map_err(err)?;
        worst = worst.max(fit.residual);
        rows.push(json!({
            "center": x,
            "radii": radii,
            "distances": seq.distances,
            "tolerances": seq.frames.iter().map(|f| f.tolerance).collect::<Vec<_>>(),
            "direction": fit.direction,
            "e": fit.e,
            "residual": fit.residual,
        }));
    }
    Ok((
        CheckStatus::from_pass(worst <= ctx.cfg.blowup_tol),
        json!({ "bound": ctx.cfg.blowup_tol, "max_residual": worst, "points": rows }),
    ))
}

fn hodograph(ctx: &Context) -> Outcome {
    let study = flattest_hodograph_study(ctx.u, ctx.q, ctx.fb()?).map_err(err)?;
    Ok((
        CheckStatus::from_pass(study.passes(ctx.cfg.hodograph_ratio)),
        json!({ "required_ratio": ctx.cfg.hodograph_ratio, "study": study }),
    ))
}

const DESCRIPTIONS: [(&str, &str); 10] = [
    ("admissibility", "nonnegative, finite and boundary-exact fields"),
    ("scaling", "linear growth, nondegeneracy and zero-set density"),
    ("weiss", "monotone Weiss energy"),
    ("fb-condition", "gradient jump equals Q across the free boundary"),
    ("traces", "unit weight traces and the interface measure"),
    ("identities", "energy, Pohozaev and domain variation identities"),
    ("nta", "corkscrew and complement density"),
    ("flatness", "flatness of the positivity set"),
    ("blowup-classify", "blowups are half-plane solutions"),
    ("hodograph", "hodograph equations and their convergence"),
];

fn describe(name: &str) -> &'static str {
    DESCRIPTIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
        .unwrap_or("")
}

/// Runs admissibility and then each selected check in the canonical order.
pub fn run_checks(
    u: &VectorField<f64>,
    q: &WeightField<f64>,
    bd: &BoundaryData<f64>,
    cfg: &DiagnosticsConfig,
    seed: u64,
) -> DiagnoseOutput {
    let grid = u.grid();
    let fb = extract_free_boundary(&u.positivity_mask());
    let points = match &fb {
        Ok(fb) => fb
            .spread_points(grid, cfg.r_max, cfg.points)
            .into_iter()
            .map(|k| fb.points[k])
            .collect(),
        Err(_) => Vec::new(),
    };
    let radii = dyadic_radii(cfg.r_min, cfg.r_max);
    let ctx = Context {
        u,
        q,
        cfg,
        fb,
        points,
        radii,
        seed,
    };
    let mut report = DiagnosticsReport::new();
    report.set_provenance("schema_tool", concat!("fbmin ", env!("CARGO_PKG_VERSION")));
    report.set_provenance("grid", json!({ "lo": grid.lo(), "hi": grid.hi(), "nodes": grid.dims() }));
    report.set_provenance("m", u.m());
    report.set_provenance("seed", seed);
    report.set_provenance("checks", &cfg.checks);
    report.set_provenance("radii", &ctx.radii);
    report.set_provenance("points", &ctx.points);
    if let Ok(fb) = &ctx.fb {
        report.set_provenance("free_boundary_points", fb.len());
    }

    let mut weiss_csv = Vec::new();
    let record = |report: &mut DiagnosticsReport, name: &str, o: Outcome| match o {
        Ok((status, values)) => report.push(name, describe(name), status, values),
        Err(e) => report.push(name, describe(name), CheckStatus::Fail, json!({ "error": e })),
    };
    record(&mut report, "admissibility", admissibility(u, bd));
    for name in &cfg.checks {
        match name.as_str() {
            "admissibility" => {}
            "scaling" => scaling(&ctx, &mut report),
            "weiss" => record(&mut report, name, weiss(&ctx, &mut weiss_csv)),
            "fb-condition" => record(&mut report, name, fb_condition(&ctx)),
            "traces" => record(&mut report, name, traces(&ctx)),
            "identities" => record(&mut report, name, identities(&ctx)),
            "nta" => record(&mut report, name, nta(&ctx)),
            "flatness" => record(&mut report, name, flatness_check(&ctx)),
            "blowup-classify" => record(&mut report, name, blowup(&ctx)),
            "hodograph" => record(&mut report, name, hodograph(&ctx)),
            other => record(&mut report, other, Err(format!("unknown check {other}"))),
        }
    }
    DiagnoseOutput { report, weiss_csv }
}
