use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use zrh_core::replicas::try_run_replicas;
use zrh_core::sim::{build_initial, empirical_density, TrajectoryRecord};
use zrh_core::{EngineOptions, EventEngine, ModelParams, Window};

use crate::common::{emit_with_sidecar, observation_times, parse_rho0, push_density_rows, to_json, window_for, Model, DENSITY_HEADER};
use crate::Outcome;

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    #[command(flatten)]
    pub model: Model,
    #[arg(long = "t-end")]
    pub t_end: f64,
    /// Piecewise-constant `a:b:v,...` or `cos:center:half_width:height`.
    #[arg(long, allow_hyphen_values = true)]
    pub rho0: String,
    /// Block half-width of the empirical density.
    #[arg(long, default_value_t = 10)]
    pub ell: u32,
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra macroscopic room on both sides of the window.
    #[arg(long = "window-margin", default_value_t = 0.5)]
    pub window_margin: f64,
    /// Reflect at the window edges instead of letting particles exit.
    #[arg(long)]
    pub closed: bool,
    /// Destroy particles as soon as they land on the origin.
    #[arg(long = "instant-kill")]
    pub instant_kill: bool,
    /// Record every `dt-obs` instead of only at `t-end`.
    #[arg(long = "dt-obs")]
    pub dt_obs: Option<f64>,
    /// CSV path; the JSON sidecar goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar {
    params: ModelParams,
    rate: String,
    rho0: String,
    window: Window,
    ell: u32,
    seed: u64,
    replicas: Vec<ReplicaCounts>,
    destroyed_count: u64,
    exited_left: u64,
    exited_right: u64,
    events: u64,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct ReplicaCounts {
    replica: u64,
    #[serde(flatten)]
    record: TrajectoryRecord,
}

pub fn run(a: Args) -> Outcome {
    let start = Instant::now();
    let params = a.model.params()?;
    let rate = a.model.rate()?;
    let rho0 = parse_rho0(&a.rho0)?;
    let window = window_for(&rho0, &params, a.t_end, a.window_margin)?;
    let times = observation_times(a.t_end, a.dt_obs)?;
    let base = if a.closed { EngineOptions::closed() } else { EngineOptions::default() };
    let options = EngineOptions {
        instant_kill: a.instant_kill,
        ..base
    };
    let runs = try_run_replicas(a.replicas, a.seed, |_, mut rng| -> zrh_core::Result<_> {
        let config = build_initial(&rho0, &params, window, &mut rng)?;
        let mut engine = EventEngine::new(config, params, rate.clone(), options, rng)?;
        let mut profiles = Vec::with_capacity(times.len());
        let mut err = None;
        let record = engine.run(a.t_end, &times, |t, c| match empirical_density(c, &params, a.ell) {
            Ok(p) => profiles.push((t, p)),
            Err(e) => err = Some(e),
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok((profiles, record)),
        }
    })?;

    let mut csv = String::from(DENSITY_HEADER);
    let mut replicas = Vec::with_capacity(runs.len());
    for (r, (profiles, record)) in runs.into_iter().enumerate() {
        for (t, p) in &profiles {
            push_density_rows(&mut csv, r as u64, *t, p);
        }
        replicas.push(ReplicaCounts { replica: r as u64, record });
    }
    let sum = |f: fn(&TrajectoryRecord) -> u64| replicas.iter().map(|c| f(&c.record)).sum::<u64>();
    let sidecar = Sidecar {
        params,
        rate: a.model.g.clone(),
        rho0: a.rho0.clone(),
        window,
        ell: a.ell,
        seed: a.seed,
        destroyed_count: sum(|r| r.destroyed),
        exited_left: sum(|r| r.exited_left),
        exited_right: sum(|r| r.exited_right),
        events: sum(|r| r.events),
        replicas,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    emit_with_sidecar(a.out.as_deref(), &csv, &to_json(&sidecar)?)?;
    Ok(true)
}
