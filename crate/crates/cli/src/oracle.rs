use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Serialize;
use zrh_core::harness::fmt_sig;
use zrh_core::oracle::{
    alpha_tilde, alpha_tilde_n, correlation_field, correlation_scan, dual_rw_estimate, exact_linear_profile,
    integrate_density_ode, killing_probability_experiment, simulate_snapshots, CorrelationScan, LinearCaseParams,
    McEstimate, OdeOptions, OdeScheme,
};
use zrh_core::{EngineOptions, ModelParams};

use crate::common::{
    emit, emit_with_sidecar, parse_interval, parse_rho0, push_density_rows, to_json, window_for, Model, DENSITY_HEADER,
};
use crate::Outcome;

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
#[group(id = "which", required = true, multiple = false, args = ["exact", "ode", "dual", "killprob", "correlation"])]
pub struct Args {
    #[command(flatten)]
    pub model: Model,
    /// Closed-form linear-case solution, as cell averages.
    #[arg(long)]
    pub exact: bool,
    /// Integrate the lattice density equations.
    #[arg(long)]
    pub ode: bool,
    /// Dual random-walk estimate of the lattice density at `--sites`.
    #[arg(long)]
    pub dual: bool,
    /// Fraction of dual walks killed at the origin.
    #[arg(long)]
    pub killprob: bool,
    /// Two-point correlations of the particle system.
    #[arg(long)]
    pub correlation: bool,
    #[arg(long, allow_hyphen_values = true, default_value = "-1:0:1")]
    pub rho0: String,
    /// Observation times.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub times: Vec<f64>,
    /// Grid of the exact solution.
    #[arg(long, allow_hyphen_values = true, default_value = "-2:2")]
    pub interval: String,
    #[arg(long, default_value_t = 0.01)]
    pub du: f64,
    /// Fourth-order Runge-Kutta instead of explicit Euler.
    #[arg(long)]
    pub rk4: bool,
    #[arg(long = "window-margin", default_value_t = 1.0)]
    pub window_margin: f64,
    /// Lattice sites for `--dual` and `--correlation`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sites: Vec<i64>,
    /// Start of the dual walks of `--killprob`.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub start: i64,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Smallest pair distance (sites) of `--correlation`; defaults to `N/5`.
    #[arg(long = "min-sep")]
    pub min_sep: Option<i64>,
    /// Standard errors allowed by `--correlation`.
    #[arg(long = "k-se", default_value_t = 4.0)]
    pub k_se: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DualRow {
    x: i64,
    t: f64,
    #[serde(flatten)]
    estimate: McEstimate,
}

#[derive(Serialize)]
struct PairRow {
    x: i64,
    y: i64,
    estimate: f64,
    se: f64,
}

#[derive(Serialize)]
struct CorrelationReport {
    params: ModelParams,
    t: f64,
    replicas: u64,
    min_sep: i64,
    k_se: f64,
    scan: CorrelationScan,
    pairs: Vec<PairRow>,
    pass: bool,
}

pub fn run(a: Args) -> Outcome {
    let params = a.model.params()?;
    let rho0 = parse_rho0(&a.rho0)?;
    if a.times.is_empty() || a.times.iter().any(|&t| !(t >= 0.0)) || a.times.windows(2).any(|w| w[1] <= w[0]) {
        bail!("times must be non-negative and increasing");
    }
    let t_max = *a.times.last().expect("non-empty");
    let out = a.out.as_deref();
    if a.exact {
        let (lo, hi) = parse_interval(&a.interval)?;
        let lin = LinearCaseParams::new(params);
        let mut csv = String::from(DENSITY_HEADER);
        for &t in &a.times {
            push_density_rows(&mut csv, 0, t, &exact_linear_profile(&rho0, &lin, t, lo, hi, a.du)?);
        }
        let meta = serde_json::json!({ "params": params, "alpha_tilde": alpha_tilde(&params), "rho0": a.rho0 });
        emit_with_sidecar(out, &csv, &to_json(&meta)?)?;
    } else if a.ode {
        let window = window_for(&rho0, &params, t_max, a.window_margin)?;
        let options = OdeOptions {
            scheme: if a.rk4 { OdeScheme::Rk4 } else { OdeScheme::Euler },
            ..OdeOptions::default()
        };
        let sol = integrate_density_ode(&rho0, &params, window, &a.times, options)?;
        let mut csv = String::from(DENSITY_HEADER);
        for (k, &t) in sol.times.iter().enumerate() {
            push_density_rows(&mut csv, 0, t, &sol.profile(k)?);
        }
        let meta = serde_json::json!({
            "params": params,
            "window": window,
            "initial_mass": sol.initial_mass,
            "killed": sol.killed,
            "exited": sol.exited,
        });
        emit_with_sidecar(out, &csv, &to_json(&meta)?)?;
    } else if a.dual {
        if a.sites.is_empty() {
            bail!("--dual needs --sites");
        }
        let n = params.scale();
        let mut csv = String::from(DENSITY_HEADER);
        let mut rows = Vec::new();
        for &t in &a.times {
            let mut values = Vec::with_capacity(a.sites.len());
            for (k, &x) in a.sites.iter().enumerate() {
                let seed = a.seed ^ ((k as u64) << 32) ^ t.to_bits();
                let estimate = dual_rw_estimate(x, t, &params, &rho0, a.replicas, seed);
                values.push((x, estimate.mean));
                rows.push(DualRow { x, t, estimate });
            }
            for (x, v) in values {
                let _ = writeln!(csv, "0,{},{},{}", fmt_sig(t), fmt_sig((x as f64 + 0.5) / n), fmt_sig(v));
            }
        }
        emit_with_sidecar(out, &csv, &to_json(&rows)?)?;
    } else if a.killprob {
        let k = killing_probability_experiment(&params, a.start, a.horizon, a.replicas, a.seed);
        let z = if k.se > 0.0 { (k.fraction - k.expected) / k.se } else { f64::NAN };
        let pass = k.se > 0.0 && z.abs() <= 3.0;
        let report = serde_json::json!({
            "params": params,
            "start": a.start,
            "replicas": a.replicas,
            "estimate": k,
            "alpha_tilde_n": alpha_tilde_n(&params),
            "z": z,
            "pass": pass,
        });
        emit(out, &to_json(&report)?)?;
        return Ok(pass);
    } else {
        let rate = a.model.rate()?;
        let window = window_for(&rho0, &params, t_max, a.window_margin)?;
        let samples = simulate_snapshots(&rho0, &params, &rate, window, EngineOptions::default(), t_max, a.replicas, a.seed)?;
        let min_sep = a.min_sep.unwrap_or(i64::from(params.n) / 5);
        let sites = if a.sites.is_empty() { (window.x_min..=window.x_max).collect() } else { a.sites.clone() };
        let scan = correlation_scan(&samples, &window, &sites, min_sep, a.k_se)?;
        let mut pairs = Vec::new();
        if sites.len() <= 64 {
            for (i, &x) in sites.iter().enumerate() {
                for &y in &sites[i + 1..] {
                    if (x - y).abs() >= min_sep {
                        let (ix, iy) = (window.index(x).context("site")?, window.index(y).context("site")?);
                        let c = correlation_field(&samples, ix, iy)?;
                        pairs.push(PairRow { x, y, estimate: c.estimate, se: c.se });
                    }
                }
            }
        }
        let pass = scan.exceed == 0;
        let report = CorrelationReport {
            params,
            t: t_max,
            replicas: a.replicas,
            min_sep,
            k_se: a.k_se,
            scan,
            pairs,
            pass,
        };
        emit(out, &to_json(&report)?)?;
        return Ok(pass);
    }
    Ok(true)
}
