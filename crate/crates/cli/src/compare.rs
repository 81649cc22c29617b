use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use zrh_core::harness::{compare, fmt_sig, parse_experiment, rows_csv, run_suite as run_suite_file, write_report};
use zrh_core::replicas::jackknife_se;
use zrh_core::DensityProfile;

use crate::common::{emit, parse_interval};
use crate::Outcome;

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    /// Experiment file (TOML keys of one experiment).
    #[arg(long, conflicts_with_all = ["empirical", "target"])]
    pub config: Option<PathBuf>,
    /// CSV with columns `t, u, density` (and optionally `replica`).
    #[arg(long, requires = "target")]
    pub empirical: Option<PathBuf>,
    /// CSV of the target in the same layout (`rho` also accepted).
    #[arg(long, requires = "empirical")]
    pub target: Option<PathBuf>,
    /// Comparison interval `a:b` of the CSV mode.
    #[arg(long, allow_hyphen_values = true, default_value = "-2:2")]
    pub interval: String,
    /// Cell width of the comparison grid of the CSV mode.
    #[arg(long, default_value_t = 0.01)]
    pub du: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Points whose `delta`-neighbourhoods are left out, e.g. `0,0.4`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub exclude: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Output directory (config mode) or CSV file (CSV mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG overlay (config mode with `--out`).
    #[arg(long)]
    pub plot: bool,
}

#[derive(clap::Args, Debug)]
pub struct SuiteArgs {
    pub path: PathBuf,
    /// Directory for per-experiment outputs and `summary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: bool,
}

pub fn run(a: Args) -> Outcome {
    match (&a.config, &a.empirical, &a.target) {
        (Some(cfg), None, None) => run_config(cfg, a.out.as_deref(), a.plot),
        (None, Some(e), Some(t)) => run_csv(&a, e, t),
        _ => bail!("give --config, or --empirical with --target"),
    }
}

fn run_config(path: &Path, out: Option<&Path>, plot: bool) -> Outcome {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = parse_experiment(&src).with_context(|| path.display().to_string())?;
    let report = compare(&spec);
    match out {
        Some(dir) => write_report(&report, dir, plot)?,
        None if plot => bail!("--plot needs --out"),
        None => print!("{}", rows_csv(&report)),
    }
    if let Some(e) = &report.error {
        eprintln!("experiment {} failed: {e}", spec.name);
    }
    Ok(report.pass)
}

/// Per time: per replica, `(u, value)` pairs.
type Series = BTreeMap<String, (f64, BTreeMap<i64, Vec<(f64, f64)>>)>;

fn read_series(path: &Path) -> Result<Series> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let ct = col(&["t"]).context("missing column t")?;
    let cu = col(&["u"]).context("missing column u")?;
    let cv = col(&["density", "rho"]).context("missing column density")?;
    let cr = col(&["replica"]);
    let mut out = Series::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .context("short row")?
                .trim()
                .parse()
                .with_context(|| format!("{}: bad number on data row {}", path.display(), line + 1))
        };
        let t = field(ct)?;
        let replica = match cr {
            Some(i) => field(i)? as i64,
            None => 0,
        };
        out.entry(fmt_sig(t))
            .or_insert_with(|| (t, BTreeMap::new()))
            .1
            .entry(replica)
            .or_default()
            .push((field(cu)?, field(cv)?));
    }
    Ok(out)
}

/// Cell-centred values on a uniform grid.
fn to_profile(mut pts: Vec<(f64, f64)>) -> Result<DensityProfile> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 2 {
        bail!("need at least two cells per profile");
    }
    let du = pts[1].0 - pts[0].0;
    let uniform = pts.windows(2).all(|w| ((w[1].0 - w[0].0) - du).abs() <= 1e-6 * du.abs().max(1e-12));
    if !(du > 0.0) || !uniform {
        bail!("cell centres are not evenly spaced");
    }
    Ok(DensityProfile::new(pts[0].0 - 0.5 * du, du, pts.into_iter().map(|p| p.1).collect())?)
}

fn run_csv(a: &Args, emp: &Path, tgt: &Path) -> Outcome {
    let (lo, hi) = parse_interval(&a.interval)?;
    let empirical = read_series(emp)?;
    let target = read_series(tgt)?;
    let grid = DensityProfile::zeros(lo, hi, a.du)?;
    let mask: Vec<bool> = (0..grid.len())
        .map(|j| {
            let (c0, c1) = grid.cell(j);
            !a.exclude.iter().any(|&z| c1 > z - a.delta && c0 < z + a.delta)
        })
        .collect();
    let l1 = |x: &[f64], y: &[f64]| -> f64 {
        x.iter().zip(y).zip(&mask).filter(|(_, &k)| k).map(|((p, q), _)| (p - q).abs()).sum::<f64>() * a.du
    };

    let mut csv = String::from("t,l1,se,tolerance,pass\n");
    let mut all = true;
    let mut matched = 0;
    for (key, (t, reps)) in &empirical {
        let Some((_, treps)) = target.get(key) else { continue };
        matched += 1;
        // The target is averaged over its replicas too (usually just one).
        let tavg: Vec<Vec<f64>> = treps
            .values()
            .map(|p| Ok(to_profile(p.clone())?.resample(lo, hi, a.du)?.values().to_vec()))
            .collect::<Result<_>>()?;
        let tv: Vec<f64> = (0..grid.len()).map(|j| tavg.iter().map(|r| r[j]).sum::<f64>() / tavg.len() as f64).collect();
        let per: Vec<Vec<f64>> = reps
            .values()
            .map(|p| Ok(to_profile(p.clone())?.resample(lo, hi, a.du)?.values().to_vec()))
            .collect::<Result<_>>()?;
        let r = per.len() as f64;
        let mean: Vec<f64> = (0..grid.len()).map(|j| per.iter().map(|p| p[j]).sum::<f64>() / r).collect();
        let d = l1(&mean, &tv);
        let se = if per.len() > 1 {
            let loo: Vec<f64> = per
                .iter()
                .map(|p| {
                    let m: Vec<f64> = mean.iter().zip(p).map(|(m, v)| (m * r - v) / (r - 1.0)).collect();
                    l1(&m, &tv)
                })
                .collect();
            fmt_sig(jackknife_se(&loo))
        } else {
            String::new()
        };
        let pass = d <= a.tolerance;
        all &= pass;
        let _ = writeln!(csv, "{},{},{},{},{}", fmt_sig(*t), fmt_sig(d), se, fmt_sig(a.tolerance), pass);
    }
    if matched == 0 {
        bail!("no common times between the two files");
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(all)
}

pub fn run_suite(a: SuiteArgs) -> Outcome {
    let summary = run_suite_file(&a.path, a.out.as_deref(), a.plot).with_context(|| a.path.display().to_string())?;
    print!("{}", summary.to_csv());
    for (name, e) in &summary.errors {
        eprintln!("experiment {name} failed: {e}");
    }
    Ok(summary.exit_code() == 0)
}
