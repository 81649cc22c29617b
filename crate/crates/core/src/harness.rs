//! Experiment orchestration: replica-averaged empirical densities compared
//! with a macroscopic target, suite files, and the CSV/JSON/SVG outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{exact_linear_profile, LinearCaseParams};
use crate::pde::{compose_theorem_solution, FluxModel, SolverOptions};
use crate::profile::{DensityProfile, Rho0};
use crate::rate::RateFunction;
use crate::replicas::{jackknife_se, try_run_replicas};
use crate::sim::{build_initial, choose_window, empirical_density, EngineOptions, EventEngine, ModelParams, Window};
use crate::thermo::ThermoTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pde,
    Oracle,
    #[default]
    None,
}

fn default_rate() -> String {
    "linear".into()
}

fn default_ell() -> u32 {
    10
}

fn default_du() -> f64 {
    0.01
}

fn default_delta() -> f64 {
    0.05
}

fn default_replicas() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_rate")]
    pub rate: String,
    pub p: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub n: Vec<u32>,
    pub rho0: String,
    pub times: Vec<f64>,
    #[serde(default = "default_ell")]
    pub ell: u32,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Cell width of the comparison grid.
    #[serde(default = "default_du")]
    pub du: f64,
    #[serde(default)]
    pub target: Target,
    pub interval: [f64; 2],
    /// Drop cells within `delta` of `u = 0` and `u = (2p-1)t`.
    #[serde(default)]
    pub exclude_singular: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub instant_kill: bool,
}

/// A spec with its strings parsed.
struct Resolved {
    rate: RateFunction,
    rho0: Rho0,
    params: Vec<ModelParams>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Resolved> {
        let bad = |m: String| Error::InvalidParams(format!("experiment {:?}: {m}", self.name));
        let rate = RateFunction::parse(&self.rate)?;
        let rho0 = Rho0::parse(&self.rho0)?;
        if !rho0.max_value().is_finite() {
            return Err(bad("rho0 must be bounded".into()));
        }
        if self.n.is_empty() {
            return Err(bad("empty N list".into()));
        }
        let params = self
            .n
            .iter()
            .map(|&n| ModelParams::new(self.p, self.alpha, self.beta, n))
            .collect::<Result<Vec<_>>>()?;
        if self.times.is_empty() || self.times.iter().any(|&t| !(t >= 0.0)) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("times must be non-negative and increasing".into()));
        }
        let [a, b] = self.interval;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(bad(format!("bad interval [{a}, {b}]")));
        }
        let cells = (b - a) / self.du;
        if !(self.du > 0.0) || (cells - cells.round()).abs() > 1e-9 {
            return Err(bad(format!("du = {} does not tile [{a}, {b}]", self.du)));
        }
        if self.replicas == 0 {
            return Err(bad("need at least one replica".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.delta >= 0.0) {
            return Err(bad("tolerance and delta must be non-negative".into()));
        }
        if self.target == Target::Oracle && !rate.is_linear() {
            return Err(bad("the oracle target needs the linear rate".into()));
        }
        if self.target == Target::Pde && self.alpha > 0.0 && self.beta >= 0.0 {
            let k = -a / self.du;
            if !(a < 0.0 && b > 0.0) || (k - k.round()).abs() > 1e-9 {
                return Err(bad("the PDE target needs u = 0 on a cell edge inside the interval".into()));
            }
        }
        Ok(Resolved { rate, rho0, params })
    }

    fn window(&self, rho0: &Rho0, params: &ModelParams) -> Result<Window> {
        let [a, b] = self.interval;
        let t_max = *self.times.last().expect("validated");
        let (lo, hi) = match rho0.support() {
            Some((lo, hi)) => (lo.max(a - 1.0), hi.min(b + 1.0)),
            None => (a, b),
        };
        let w = choose_window((lo.min(a), hi.max(b)), params, t_max, 0.5)?;
        // Room for the block average at the edges.
        Window::new(w.x_min - i64::from(self.ell), w.x_max + i64::from(self.ell))
    }

    fn engine_options(&self) -> EngineOptions {
        let base = if self.closed { EngineOptions::closed() } else { EngineOptions::default() };
        EngineOptions {
            instant_kill: self.instant_kill,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: u32,
    pub t: f64,
    /// `None` when the spec has no target.
    pub l1: Option<f64>,
    pub se: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub n: u32,
    pub t: f64,
    pub u: Vec<f64>,
    pub empirical: Vec<f64>,
    pub target: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ComparisonRow>,
    pub profiles: Vec<ProfileSeries>,
    /// Set when the run itself failed; the report is still written.
    pub error: Option<String>,
    pub pass: bool,
}

fn stream_seed(seed: u64, n: u32) -> u64 {
    seed ^ (u64::from(n).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn target_profile(spec: &ExperimentSpec, res: &Resolved, params: &ModelParams, t: f64) -> Result<Option<DensityProfile>> {
    let [a, b] = spec.interval;
    match spec.target {
        Target::None => Ok(None),
        Target::Oracle => exact_linear_profile(&res.rho0, &LinearCaseParams::new(*params), t, a, b, spec.du).map(Some),
        Target::Pde => {
            let thermo = ThermoTable::new(res.rate.clone(), (2.0 * res.rho0.max_value()).max(1.0))?;
            let flux = FluxModel::new(&thermo, params.p)?;
            // Extend the domain so no information enters through its edges.
            let reach = params.drift() * t + 0.5;
            let (lo, hi) = match res.rho0.support() {
                Some((s0, s1)) => (s0.max(a - reach - 1.0).min(a), s1.min(b + 1.0).max(b)),
                None => (a, b),
            };
            let lo = a - ((a - (lo - reach)) / spec.du).ceil() * spec.du;
            let hi = b + (((hi + reach) - b) / spec.du).ceil().max(0.0) * spec.du;
            let sol = compose_theorem_solution(&res.rho0, params, &flux, (lo, hi), spec.du, t, SolverOptions::default())?;
            let prof = sol.glued.profile_near(t)?;
            prof.resample(a, b, spec.du).map(Some)
        }
    }
}

fn excluded(spec: &ExperimentSpec, params: &ModelParams, t: f64, cell: (f64, f64)) -> bool {
    if !spec.exclude_singular {
        return false;
    }
    let s = params.drift() * t;
    [0.0, s].iter().any(|&z| cell.1 > z - spec.delta && cell.0 < z + spec.delta)
}

fn l1_distance(x: &[f64], y: &[f64], mask: &[bool], du: f64) -> f64 {
    x.iter()
        .zip(y)
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|((a, b), _)| (a - b).abs())
        .sum::<f64>()
        * du
}

fn run_comparison(spec: &ExperimentSpec, res: &Resolved, report: &mut ComparisonReport) -> Result<()> {
    let [a, b] = spec.interval;
    let options = spec.engine_options();
    for params in &res.params {
        let start = Instant::now();
        let window = spec.window(&res.rho0, params)?;
        // per_replica[r][k] = empirical profile at times[k] on the comparison grid.
        let per_replica: Vec<Vec<Vec<f64>>> = try_run_replicas(spec.replicas, stream_seed(spec.seed, params.n), |_, mut rng| {
            let config = build_initial(&res.rho0, params, window, &mut rng)?;
            let mut engine = EventEngine::new(config, *params, res.rate.clone(), options, rng)?;
            let mut out = Vec::with_capacity(spec.times.len());
            let mut err = None;
            engine.run(*spec.times.last().expect("validated"), &spec.times, |_, c| {
                match empirical_density(c, params, spec.ell).and_then(|p| p.resample(a, b, spec.du)) {
                    Ok(p) => out.push(p.values().to_vec()),
                    Err(e) => err = Some(e),
                }
            })?;
            match err {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })?;
        let wall = start.elapsed().as_secs_f64();
        let r = per_replica.len() as f64;
        for (k, &t) in spec.times.iter().enumerate() {
            let cells = per_replica[0][k].len();
            let mut mean = vec![0.0; cells];
            for rep in &per_replica {
                for (m, v) in mean.iter_mut().zip(&rep[k]) {
                    *m += v / r;
                }
            }
            let grid = DensityProfile::zeros(a, b, spec.du)?;
            let u: Vec<f64> = (0..cells).map(|j| grid.center(j)).collect();
            let target = target_profile(spec, res, params, t)?;
            let (l1, se, pass) = match &target {
                None => (None, None, true),
                Some(tp) => {
                    let mask: Vec<bool> = (0..cells).map(|j| !excluded(spec, params, t, grid.cell(j))).collect();
                    let d = l1_distance(&mean, tp.values(), &mask, spec.du);
                    let se = if per_replica.len() > 1 {
                        let loo: Vec<f64> = per_replica
                            .iter()
                            .map(|rep| {
                                let m: Vec<f64> = mean.iter().zip(&rep[k]).map(|(m, v)| (m * r - v) / (r - 1.0)).collect();
                                l1_distance(&m, tp.values(), &mask, spec.du)
                            })
                            .collect();
                        jackknife_se(&loo)
                    } else {
                        f64::NAN
                    };
                    (Some(d), Some(se), d <= spec.tolerance)
                }
            };
            report.rows.push(ComparisonRow {
                n: params.n,
                t,
                l1,
                se,
                tolerance: spec.tolerance,
                pass,
                wall_seconds: wall,
            });
            report.profiles.push(ProfileSeries {
                n: params.n,
                t,
                u,
                empirical: mean,
                target: target.map(|p| p.values().to_vec()),
            });
        }
    }
    Ok(())
}

/// Runs the replicas of `spec` and compares their averaged block densities
/// with the target. A failed run still yields a report (with `error` set).
pub fn compare(spec: &ExperimentSpec) -> ComparisonReport {
    let mut report = ComparisonReport {
        spec: spec.clone(),
        rows: Vec::new(),
        profiles: Vec::new(),
        error: None,
        pass: false,
    };
    let outcome = spec.resolve().and_then(|res| run_comparison(spec, &res, &mut report));
    match outcome {
        Ok(()) => report.pass = report.rows.iter().all(|r| r.pass),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Decimal with at most 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn rows_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("name,n,t,l1,se,tolerance,pass\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            report.spec.name,
            r.n,
            fmt_sig(r.t),
            fmt_opt(r.l1),
            fmt_opt(r.se),
            fmt_sig(r.tolerance),
            r.pass
        );
    }
    s
}

pub fn profiles_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("n,t,u,empirical,target\n");
    for p in &report.profiles {
        for (j, u) in p.u.iter().enumerate() {
            let target = p.target.as_ref().map(|t| t[j]);
            let _ = writeln!(s, "{},{},{},{},{}", p.n, fmt_sig(p.t), fmt_sig(*u), fmt_sig(p.empirical[j]), fmt_opt(target));
        }
    }
    s
}

/// Overlay of empirical (solid) and target (dashed) profiles.
pub fn profiles_svg(report: &ComparisonReport) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let all = report
        .profiles
        .iter()
        .flat_map(|p| p.empirical.iter().chain(p.target.iter().flatten()))
        .copied();
    let y_max = all.fold(0.0, f64::max).max(1e-9) * 1.1;
    let [a, b] = report.spec.interval;
    let sx = |u: f64| pad + (u - a) / (b - a) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - v / y_max * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{pad}\" y=\"20\" font-size=\"14\">{} (y max {})</text>\n",
        h - pad,
        w - pad,
        h - pad,
        report.spec.name,
        fmt_sig(y_max)
    );
    let poly = |ys: &[f64], u: &[f64]| {
        u.iter()
            .zip(ys)
            .map(|(&u, &v)| format!("{:.2},{:.2}", sx(u), sy(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (k, p) in report.profiles.iter().enumerate() {
        let c = colors[k % colors.len()];
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{c}\" points=\"{}\"><title>N={} t={}</title></polyline>",
            poly(&p.empirical, &p.u),
            p.n,
            fmt_sig(p.t)
        );
        if let Some(t) = &p.target {
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{c}\" stroke-dasharray=\"4 3\" points=\"{}\"/>",
                poly(t, &p.u)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<name>.csv`, `<name>_profiles.csv`, `<name>.json` and optionally
/// `<name>.svg` into `dir`.
pub fn write_report(report: &ComparisonReport, dir: &Path, plot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = &report.spec.name;
    fs::write(dir.join(format!("{name}.csv")), rows_csv(report))?;
    fs::write(dir.join(format!("{name}_profiles.csv")), profiles_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join(format!("{name}.json")), json + "\n")?;
    if plot {
        fs::write(dir.join(format!("{name}.svg")), profiles_svg(report))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default)]
    pub experiment: Vec<ExperimentSpec>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parses a suite; errors carry the 1-based line of the offending entry.
pub fn parse_suite(src: &str) -> Result<SuiteFile> {
    let suite: SuiteFile = toml::from_str(src).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(src, s.start)),
        msg: e.message().to_string(),
    })?;
    // Semantic errors point at the experiment's header.
    let headers: Vec<usize> = src
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[experiment]]"))
        .map(|(i, _)| i + 1)
        .collect();
    for (k, spec) in suite.experiment.iter().enumerate() {
        if let Err(e) = spec.validate() {
            return Err(Error::Parse {
                line: headers.get(k).copied().unwrap_or(0),
                msg: e.to_string(),
            });
        }
    }
    Ok(suite)
}

/// Parses a single experiment given as top-level keys.
pub fn parse_experiment(src: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(src).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(src, s.start)),
        msg: e.message().to_string(),
    })?;
    spec.validate().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub n: u32,
    pub t: f64,
    pub l1: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub rows: Vec<SummaryRow>,
    /// Experiments whose run failed, with the error.
    pub errors: Vec<(String, String)>,
    pub pass: bool,
}

impl SuiteSummary {
    pub fn from_reports(reports: &[ComparisonReport]) -> Self {
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for r in reports {
            if let Some(e) = &r.error {
                errors.push((r.spec.name.clone(), e.clone()));
            }
            rows.extend(r.rows.iter().map(|row| SummaryRow {
                experiment: r.spec.name.clone(),
                n: row.n,
                t: row.t,
                l1: row.l1,
                tolerance: row.tolerance,
                pass: row.pass,
            }));
        }
        let pass = reports.iter().all(|r| r.pass);
        Self { rows, errors, pass }
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("experiment,n,t,l1,tolerance,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.experiment,
                r.n,
                fmt_sig(r.t),
                fmt_opt(r.l1),
                fmt_sig(r.tolerance),
                r.pass
            );
        }
        for (name, e) in &self.errors {
            let _ = writeln!(s, "{name},,,,,error: {}", e.replace(',', ";"));
        }
        s
    }
}

/// Runs every experiment of the suite at `path`, writing per-experiment
/// outputs and `summary.csv` into `out_dir` when given.
pub fn run_suite(path: &Path, out_dir: Option<&Path>, plot: bool) -> Result<SuiteSummary> {
    let src = fs::read_to_string(path)?;
    let suite = parse_suite(&src)?;
    let mut reports = Vec::with_capacity(suite.experiment.len());
    for spec in &suite.experiment {
        let report = compare(spec);
        if let Some(dir) = out_dir {
            write_report(&report, dir, plot)?;
        }
        reports.push(report);
    }
    let summary = SuiteSummary::from_reports(&reports);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.csv"), summary.to_csv())?;
    }
    Ok(summary)
}
