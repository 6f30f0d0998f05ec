//! Config-driven experiment runner behind the `lattice-vortex` binary.
//!
//! A run reads a JSON [`ExperimentConfig`], performs one experiment, writes
//! CSV tables plus `summary.json` into the output directory and reports
//! whether every certificate passed.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::{
    check_large_lambda_bound, check_small_lambda_limit, sweep_lambda, uniqueness_probe,
};
use crate::error::Error;
use crate::exhaustion::{
    default_radii_for, estimate_decay_rate, solve_maximal, MaximalSolution, DEFAULT_EXT_TOL,
    DEFAULT_WINDOW_RADIUS,
};
use crate::green::{green_sup_norm_sweep, GreenTable};
use crate::lattice::{LatticeBox, LatticePoint, VertexKind, DEFAULT_MAX_DIM};
use crate::linear_solver::SolverParams;
use crate::monotone::{SchemeParams, SolveReport, DEFAULT_SHIFT_FACTOR};
use crate::newton::NewtonParams;
use crate::operators::LatticeFunction;
use crate::vortex::VortexConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LATTICE_VORTEX_OUT";

/// Exit status for solver failures.
pub const EXIT_SOLVER: i32 = 1;
/// Exit status for unreadable or invalid configs.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when the run finished but a certificate failed.
pub const EXIT_CERTIFICATE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    SweepLambda,
    SmallLambda,
    GreenTable,
    Decay,
    Uniqueness,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::SweepLambda => "sweep_lambda",
            ExperimentKind::SmallLambda => "small_lambda",
            ExperimentKind::GreenTable => "green_table",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethodChoice {
    HeatKernel,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub point: Vec<i32>,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

/// Experiment description. Fields a kind does not use are ignored; missing
/// optional fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    pub dim: usize,
    #[serde(default)]
    pub u_vortices: Vec<VortexSpec>,
    #[serde(default)]
    pub v_vortices: Vec<VortexSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_radius: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_tol: Option<f64>,
    /// `L / λ`; must exceed 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_radius: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_method: Option<GreenMethodChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    /// Dimensions for the `|G_n(0)|` sweep of a green_table run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solver(_) | RunError::Io(_) => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Solver(e) => write!(f, "solver error: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Solver(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Parse a config, reporting the JSON location or the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde names the field in messages such as "unknown field `x`"
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("<document>")
            .to_string();
        ConfigError {
            field,
            message: format!("line {}, column {}: {msg}", e.line(), e.column()),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn positive(field: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::new(
            field,
            format!("{x} must be a positive number"),
        )),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// A config for `kind` with only the dimension set.
    pub fn minimal(kind: ExperimentKind, dim: usize) -> Self {
        Self {
            kind: Some(kind),
            dim,
            u_vortices: Vec::new(),
            v_vortices: Vec::new(),
            lambda: None,
            lambdas: None,
            radii: None,
            window_radius: None,
            box_radius: None,
            ext_tol: None,
            stop_tol: None,
            linear_tol: None,
            shift_factor: None,
            max_outer: None,
            newton_tol: None,
            axis: None,
            green_tol: None,
            green_radius: None,
            green_method: None,
            mc_samples: None,
            dims: None,
            workers: None,
            seed: None,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<ExperimentKind, ConfigError> {
        let kind = self
            .kind
            .ok_or_else(|| ConfigError::new("kind", "missing experiment kind"))?;
        if self.dim < 2 || self.dim > DEFAULT_MAX_DIM {
            return Err(ConfigError::new(
                "dim",
                format!(
                    "{} outside the supported range 2..={DEFAULT_MAX_DIM}",
                    self.dim
                ),
            ));
        }
        for (field, list) in [
            ("u_vortices", &self.u_vortices),
            ("v_vortices", &self.v_vortices),
        ] {
            if let Some(v) = list.iter().find(|v| v.point.len() != self.dim) {
                return Err(ConfigError::new(
                    field,
                    format!("point {:?} does not have {} coordinates", v.point, self.dim),
                ));
            }
        }
        positive("lambda", self.lambda)?;
        for (f, v) in [
            ("ext_tol", self.ext_tol),
            ("stop_tol", self.stop_tol),
            ("linear_tol", self.linear_tol),
            ("newton_tol", self.newton_tol),
            ("green_tol", self.green_tol),
        ] {
            positive(f, v)?;
        }
        if let Some(l) = &self.lambdas {
            if l.is_empty() {
                return Err(ConfigError::new("lambdas", "must not be empty"));
            }
            for &x in l {
                positive("lambdas", Some(x))?;
            }
        }
        if let Some(f) = self.shift_factor {
            if !(f > 2.0 && f.is_finite()) {
                return Err(ConfigError::new(
                    "shift_factor",
                    format!("{f} must exceed 2"),
                ));
            }
        }
        if self.max_outer == Some(0) {
            return Err(ConfigError::new("max_outer", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        if self.mc_samples.is_some_and(|s| s < 2) {
            return Err(ConfigError::new("mc_samples", "must be at least 2"));
        }
        let w = self.window_radius();
        if w < 1 {
            return Err(ConfigError::new(
                "window_radius",
                format!("{w} must be at least 1"),
            ));
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r.windows(2).any(|p| p[0] >= p[1]) {
                return Err(ConfigError::new(
                    "radii",
                    "must be nonempty and strictly increasing",
                ));
            }
            if r[0] < w {
                return Err(ConfigError::new(
                    "radii",
                    format!("smallest radius {} is below window radius {w}", r[0]),
                ));
            }
        }
        if let Some(b) = self.box_radius {
            if b < w {
                return Err(ConfigError::new(
                    "box_radius",
                    format!("{b} is below window radius {w}"),
                ));
            }
        }
        if let Some(a) = self.axis {
            if a >= self.dim {
                return Err(ConfigError::new("axis", format!("{a} out of range")));
            }
        }

        match kind {
            ExperimentKind::Solve | ExperimentKind::Decay | ExperimentKind::Uniqueness => {
                if self.lambda.is_none() {
                    return Err(ConfigError::new("lambda", "required for this experiment"));
                }
            }
            ExperimentKind::SweepLambda => {
                if self.lambdas.is_none() {
                    return Err(ConfigError::new("lambdas", "required for this experiment"));
                }
            }
            ExperimentKind::SmallLambda => {
                if let Some(l) = &self.lambdas {
                    if l.windows(2).any(|p| p[0] <= p[1]) {
                        return Err(ConfigError::new("lambdas", "must be strictly decreasing"));
                    }
                }
            }
            ExperimentKind::GreenTable => {
                if self.dim < 3 {
                    return Err(ConfigError::new(
                        "dim",
                        "Green's function with zero limit exists only for n >= 3",
                    ));
                }
                if let Some(d) = &self.dims {
                    if let Some(bad) = d.iter().find(|&&n| n < 3) {
                        return Err(ConfigError::new("dims", format!("{bad} is below 3")));
                    }
                }
                if self.green_method == Some(GreenMethodChoice::MonteCarlo) && self.dim < 5 {
                    return Err(ConfigError::new(
                        "green_method",
                        "Monte Carlo needs dim >= 5 for finite variance",
                    ));
                }
            }
        }
        self.vortex_config()?;
        if kind != ExperimentKind::GreenTable {
            let window = self.window()?;
            let cfg = self.vortex_config()?;
            let outside = cfg
                .all_points()
                .find(|p| !window.contains_interior(p))
                .cloned();
            if let Some(p) = outside {
                return Err(ConfigError::new(
                    "window_radius",
                    format!("vortex at {p} lies outside the observation window"),
                ));
            }
        }
        Ok(kind)
    }

    pub fn window_radius(&self) -> i32 {
        self.window_radius.unwrap_or(DEFAULT_WINDOW_RADIUS)
    }

    pub fn vortex_config(&self) -> Result<VortexConfig, ConfigError> {
        let conv = |l: &[VortexSpec]| {
            l.iter()
                .map(|v| (LatticePoint::new(v.point.clone()), v.multiplicity))
                .collect()
        };
        VortexConfig::new(self.dim, conv(&self.u_vortices), conv(&self.v_vortices))
            .map_err(|e| ConfigError::new("u_vortices", e.to_string()))
    }

    pub fn window(&self) -> Result<LatticeBox, ConfigError> {
        let cfg = self.vortex_config()?;
        LatticeBox::centered(&cfg.centroid(), self.window_radius())
            .map_err(|e| ConfigError::new("window_radius", e.to_string()))
    }

    pub fn scheme_params(&self, lambda: f64) -> SchemeParams {
        let mut p = SchemeParams::new(lambda);
        p.shift = self.shift_factor.unwrap_or(DEFAULT_SHIFT_FACTOR) * lambda;
        if let Some(t) = self.stop_tol {
            p.stop_tol = t;
        }
        if let Some(m) = self.max_outer {
            p.max_outer = m;
        }
        if let Some(t) = self.linear_tol {
            p.linear = SolverParams::with_tol(t);
        }
        p
    }

    fn radii_for(&self, window: &LatticeBox) -> Vec<i32> {
        self.radii
            .clone()
            .unwrap_or_else(|| default_radii_for(window))
    }
}

/// Overrides given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

pub fn apply_overrides(mut cfg: ExperimentConfig, o: &Overrides) -> ExperimentConfig {
    if let Some(d) = &o.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if o.seed.is_some() {
        cfg.seed = o.seed;
    }
    if o.workers.is_some() {
        cfg.workers = o.workers;
    }
    cfg
}

/// Resolve the output directory: config (after overrides), then the
/// environment variable, then `./out`.
pub fn resolve_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub certificates: BTreeMap<String, bool>,
}

/// Write `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn coords_header(dim: usize) -> String {
    (1..=dim)
        .map(|i| format!("x{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Rows `x1..xn,u,v` over Ω̄ of the functions' domain.
fn fields_csv(u: &LatticeFunction, v: &LatticeFunction, prefix: Option<f64>) -> String {
    let d = u.domain();
    let mut s = String::new();
    for i in 0..d.padded_len() {
        if d.kind_at(i) == VertexKind::Outside {
            continue;
        }
        if let Some(l) = prefix {
            s.push_str(&num(l));
            s.push(',');
        }
        let p = d.point_at(i);
        for c in p.coords() {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{},{}", num(u.values()[i]), num(v.values()[i]));
    }
    s
}

struct Run {
    files: Vec<(String, String)>,
    results: Value,
    certificates: BTreeMap<String, bool>,
}

impl Run {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            results: json!({}),
            certificates: BTreeMap::new(),
        }
    }

    fn cert(&mut self, name: &str, ok: bool) {
        self.certificates.insert(name.to_string(), ok);
    }

    /// AND `ok` into a certificate shared by several solves.
    fn cert_all(&mut self, name: &str, ok: bool) {
        *self.certificates.entry(name.to_string()).or_insert(true) &= ok;
    }

    fn report_certs(
        &mut self,
        reports: &[SolveReport],
        lambda: f64,
        cfg: &VortexConfig,
        stop_tol: f64,
        sizes: &[usize],
    ) {
        let b = cfg.total_mass();
        for (r, &n) in reports.iter().zip(sizes) {
            self.cert_all("iterates_monotone", r.monotone_ok);
            self.cert_all(
                "flux_identity",
                r.flux_defect_u.abs().max(r.flux_defect_v.abs()) <= 1e-8 * (lambda * n as f64 + b),
            );
            self.cert_all(
                "nonlinear_residual",
                r.residual_u.max(r.residual_v) <= 10.0 * stop_tol * (lambda + b),
            );
            self.cert_all(
                "collar_sum_below_mass",
                b == 0.0 || r.collar_sum_u.max(r.collar_sum_v) < b,
            );
        }
    }
}

fn box_sizes(sol: &MaximalSolution) -> Vec<usize> {
    sol.box_radii
        .iter()
        .map(|&r| (2 * r as usize + 1).pow(sol.window.dim() as u32))
        .collect()
}

fn maximal_json(sol: &MaximalSolution) -> Value {
    json!({
        "center": sol.center.coords(),
        "box_radii": sol.box_radii,
        "sup_diffs": sol.sup_diffs,
        "monotone_excess": sol.monotone_excess,
        "reports": sol.reports,
        "sup_u": sol.u_star.sup_norm(),
        "sup_v": sol.v_star.sup_norm(),
    })
}

fn run_solve(cfg: &ExperimentConfig, decay: bool) -> Result<Run, RunError> {
    let vc = cfg.vortex_config()?;
    let window = cfg.window()?;
    let lambda = cfg.lambda.unwrap();
    let params = cfg.scheme_params(lambda);
    let sol = solve_maximal(
        &vc,
        &params,
        &cfg.radii_for(&window),
        &window,
        cfg.ext_tol.unwrap_or(DEFAULT_EXT_TOL),
    )?;
    let mut run = Run::new();
    run.report_certs(&sol.reports, lambda, &vc, params.stop_tol, &box_sizes(&sol));
    run.cert("domain_monotone", sol.domain_monotone());
    let header = format!("{},u,v\n", coords_header(cfg.dim));
    run.files.push((
        "fields.csv".into(),
        header + &fields_csv(&sol.u_star, &sol.v_star, None),
    ));
    let mut results = maximal_json(&sol);
    if decay {
        let axis = cfg.axis.unwrap_or(0);
        let fit = estimate_decay_rate(&sol, axis)?;
        let floor = 0.8 * fit.theoretical;
        run.cert("decay_rate_floor", fit.rate >= floor);
        run.cert("decay_fit_r2", fit.r2 >= 0.98);
        results["decay_fit"] = json!(fit);
        results["decay_floor"] = json!(floor);
        let mut prof = String::from("t,u,v\n");
        let lb = &sol.last_box;
        let reach = lb.domain().hi()[axis] - sol.center.0[axis];
        for t in 0..=reach {
            let x = sol.center.offset(axis, t);
            let _ = writeln!(
                prof,
                "{t},{},{}",
                num(lb.u.get(&x).unwrap_or(0.0)),
                num(lb.v.get(&x).unwrap_or(0.0))
            );
        }
        run.files.push(("profile.csv".into(), prof));
    }
    run.results = results;
    Ok(run)
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Run, RunError> {
    let vc = cfg.vortex_config()?;
    let window = cfg.window()?;
    let lambdas = cfg.lambdas.clone().unwrap();
    let base = cfg.scheme_params(1.0);
    let sweep = sweep_lambda(
        &vc,
        &lambdas,
        &window,
        &base,
        &cfg.radii_for(&window),
        cfg.ext_tol.unwrap_or(DEFAULT_EXT_TOL),
    )?;
    let mut run = Run::new();
    run.cert("sweep_complete", sweep.failures.is_empty());
    run.cert("lambda_monotone", sweep.lambda_monotone);
    run.cert("energy_bound", sweep.energy_ok);
    let mut table = String::from("lambda,sup_u,sup_v,min_sum,energy,energy_bound,final_diff\n");
    let mut fields = format!("lambda,{},u,v\n", coords_header(cfg.dim));
    let mut bounds = Vec::new();
    for s in &sweep.snapshots {
        let sol = &s.solution;
        run.report_certs(&sol.reports, s.lambda, &vc, base.stop_tol, &box_sizes(sol));
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            num(s.lambda),
            num(s.sup_u),
            num(s.sup_v),
            num(s.min_sum),
            num(s.energy),
            num(s.energy_bound),
            s.final_diff.map(num).unwrap_or_default()
        );
        fields.push_str(&fields_csv(&sol.u_star, &sol.v_star, Some(s.lambda)));
        if s.lambda > 2.0 * vc.total_mass() {
            let rep = check_large_lambda_bound(s, &vc)?;
            if let Some(h) = rep.holds {
                run.cert(&format!("large_lambda_bound@{}", s.lambda), h);
            }
            bounds.push(rep);
        }
    }
    run.files.push(("sweep.csv".into(), table));
    run.files.push(("fields.csv".into(), fields));
    run.results = json!({
        "lambdas": sweep.lambdas,
        "snapshots": sweep.snapshots,
        "failures": sweep.failures,
        "max_lambda_excess": sweep.max_lambda_excess,
        "large_lambda_bounds": bounds,
    });
    Ok(run)
}

fn run_small_lambda(cfg: &ExperimentConfig) -> Result<Run, RunError> {
    let vc = cfg.vortex_config()?;
    let window = cfg.window()?;
    let lambdas = cfg
        .lambdas
        .clone()
        .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]);
    let report = check_small_lambda_limit(
        &vc,
        &window,
        &cfg.scheme_params(1.0),
        &lambdas,
        &cfg.radii_for(&window),
    )?;
    let mut run = Run::new();
    run.cert("small_lambda_limit", report.passed());
    let mut table = String::from("lambda,side,value\n");
    for s in &report.sides {
        for (l, v) in report.lambdas.iter().zip(&s.values) {
            let side = match s.side {
                crate::vortex::Side::U => "u",
                crate::vortex::Side::V => "v",
            };
            let _ = writeln!(table, "{},{side},{}", num(*l), num(*v));
        }
    }
    run.files.push(("small_lambda.csv".into(), table));
    run.results = json!(report);
    Ok(run)
}

fn run_green(cfg: &ExperimentConfig) -> Result<Run, RunError> {
    let n = cfg.dim;
    let radius = cfg.green_radius.unwrap_or(5);
    let tol = cfg.green_tol.unwrap_or(1e-10);
    let method = cfg.green_method.unwrap_or(GreenMethodChoice::HeatKernel);
    let table = match method {
        GreenMethodChoice::HeatKernel => GreenTable::build(n, radius, tol)?,
        GreenMethodChoice::MonteCarlo => GreenTable::build_monte_carlo(
            n,
            radius,
            cfg.mc_samples.unwrap_or(100_000),
            cfg.seed.unwrap_or(0),
        )?,
    };
    let mut run = Run::new();
    let g0 = table.get(&LatticePoint::origin(n)).unwrap();
    let sign = table.iter().all(|(_, v)| v.value <= v.err_est);
    let min_origin = table
        .iter()
        .all(|(_, v)| g0.value - g0.err_est <= v.value + v.err_est);
    run.cert("nonpositive", sign);
    run.cert("minimum_at_origin", min_origin);
    if method == GreenMethodChoice::HeatKernel {
        run.cert("error_within_tol", table.max_err_est() <= tol);
    }
    run.files.push(("green_table.csv".into(), table.to_csv()));
    let mut results = json!({
        "dim": n,
        "radius": radius,
        "entries": table.len(),
        "origin": g0,
        "max_err_est": table.max_err_est(),
    });
    if let Some(dims) = &cfg.dims {
        let sweep = green_sup_norm_sweep(dims, tol)?;
        run.cert("sup_norm_decreasing", sweep.strictly_decreasing);
        run.cert("sup_norm_within_bound", sweep.within_bound);
        run.cert("sup_norm_above_floor", sweep.above_floor);
        let mut s = String::from("n,sup_norm,err_est,bound,bound_l,floor\n");
        for e in &sweep.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.n,
                num(e.sup_norm),
                num(e.err_est),
                num(e.bound),
                num(e.bound_l),
                num(e.floor)
            );
        }
        run.files.push(("sup_norm.csv".into(), s));
        results["sup_norm_sweep"] = json!(sweep);
    }
    run.results = results;
    Ok(run)
}

fn run_uniqueness(cfg: &ExperimentConfig) -> Result<Run, RunError> {
    let vc = cfg.vortex_config()?;
    let window = cfg.window()?;
    let lambda = cfg.lambda.unwrap();
    let newton = NewtonParams {
        tol: cfg.newton_tol.unwrap_or(NewtonParams::default().tol),
        ..NewtonParams::default()
    };
    let radius = cfg.box_radius.unwrap_or(cfg.window_radius() + 2);
    let rep = uniqueness_probe(
        &vc,
        lambda,
        &window,
        radius,
        &cfg.scheme_params(lambda),
        &newton,
    )?;
    let mut run = Run::new();
    run.cert("uniqueness", rep.passed);
    let mut s = String::from("start_a,start_b,distance\n");
    for (a, b, d) in &rep.pairwise {
        let _ = writeln!(s, "{a},{b},{}", num(*d));
    }
    run.files.push(("uniqueness.csv".into(), s));
    run.results = json!(rep);
    Ok(run)
}

/// Validate, run and write outputs. The config should already carry any
/// command-line overrides.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let kind = cfg.validate()?;
    let out_dir = resolve_out_dir(cfg);
    let start = Instant::now();
    let exec = || match kind {
        ExperimentKind::Solve => run_solve(cfg, false),
        ExperimentKind::Decay => run_solve(cfg, true),
        ExperimentKind::SweepLambda => run_sweep(cfg),
        ExperimentKind::SmallLambda => run_small_lambda(cfg),
        ExperimentKind::GreenTable => run_green(cfg),
        ExperimentKind::Uniqueness => run_uniqueness(cfg),
    };
    let run = match cfg.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| ConfigError::new("workers", e.to_string()))?
            .install(exec)?,
        None => exec()?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let passed = run.certificates.values().all(|&ok| ok);

    let mut files = Vec::new();
    for (name, contents) in &run.files {
        files.push(write_atomic(&out_dir, name, contents)?);
    }
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "kind": kind.name(),
        "config": cfg,
        "timing": { "seconds": elapsed },
        "certificates": run.certificates,
        "passed": passed,
        "results": run.results,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n";
    files.push(write_atomic(&out_dir, "summary.json", &text)?);
    Ok(Outcome {
        passed,
        out_dir,
        files,
        certificates: run.certificates,
    })
}
