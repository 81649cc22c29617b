use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use zrh_core::harness::fmt_sig;
use zrh_core::sim::choose_window;
use zrh_core::{DensityProfile, ModelParams, RateFunction, Rho0, Window};

/// Model flags shared by the subcommands.
#[derive(clap::Args, Debug, Clone)]
pub struct Model {
    /// Rate function: linear, indicator, bounded:c or table:g1,g2,..@a0.
    #[arg(long, default_value = "linear")]
    pub g: String,
    #[arg(long, default_value_t = 0.75)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Scaling parameter.
    #[arg(long = "N", visible_alias = "n", default_value_t = 100)]
    pub n: u32,
}

impl Model {
    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.p, self.alpha, self.beta, self.n)?)
    }

    pub fn rate(&self) -> Result<RateFunction> {
        Ok(RateFunction::parse(&self.g)?)
    }
}

pub fn parse_rho0(s: &str) -> Result<Rho0> {
    Ok(Rho0::parse(s)?)
}

/// Parses `a:b`.
pub fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').context("expected a:b")?;
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    if !(a < b) {
        bail!("empty interval {s}");
    }
    Ok((a, b))
}

/// Window covering the support of `rho0`, the drift up to `t_end` and a
/// margin.
pub fn window_for(rho0: &Rho0, params: &ModelParams, t_end: f64, margin: f64) -> Result<Window> {
    let support = rho0.support().unwrap_or((0.0, 0.0));
    Ok(choose_window(support, params, t_end, margin)?)
}

/// Observation times: `t_end` alone, or a grid with spacing `dt`.
pub fn observation_times(t_end: f64, dt: Option<f64>) -> Result<Vec<f64>> {
    if !(t_end >= 0.0) {
        bail!("t_end = {t_end} must be non-negative");
    }
    match dt {
        None => Ok(vec![t_end]),
        Some(dt) if dt > 0.0 => Ok(zrh_core::sim::time_grid(t_end, dt)),
        Some(dt) => bail!("observation spacing {dt} must be positive"),
    }
}

pub const DENSITY_HEADER: &str = "replica,t,u,density\n";

/// Appends `replica,t,u,density` rows at the cell centres of `profile`.
pub fn push_density_rows(csv: &mut String, replica: u64, t: f64, profile: &DensityProfile) {
    for (j, v) in profile.values().iter().enumerate() {
        let _ = writeln!(csv, "{replica},{},{},{}", fmt_sig(t), fmt_sig(profile.center(j)), fmt_sig(*v));
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Writes `text` to `out`, or to stdout without one.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV to `out` (or stdout) and JSON next to it (or on stderr).
pub fn emit_with_sidecar(out: Option<&Path>, csv: &str, json: &str) -> Result<()> {
    emit(out, csv)?;
    match out {
        Some(path) => emit(Some(&sidecar_path(path)), json),
        None => {
            eprint!("{json}");
            Ok(())
        }
    }
}
