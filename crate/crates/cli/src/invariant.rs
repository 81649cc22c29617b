use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Serialize;
use zrh_core::invariant::{
    build_from_coefficients, max_admissible_window, resolve, stationarity_test, Coefficients, ProfileSpec,
    StationarityReport,
};
use zrh_core::{EngineOptions, ModelParams, ThermoTable, Window};

use crate::common::{emit, parse_interval, to_json, Model};
use crate::couple::Preset;
use crate::Outcome;

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    #[command(flatten)]
    pub model: Model,
    /// Named profile; overrides `--beta`.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Density constant of the preset.
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Right level of the `p = 1` two-level profile.
    #[arg(long = "m-plus")]
    pub m_plus: Option<f64>,
    /// Sites `a:b`; defaults to the admissible part of `[-2N, 2N]`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Run the stationarity test.
    #[arg(long)]
    pub validate: bool,
    #[arg(long = "t-end", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long = "dt-obs", default_value_t = 0.01)]
    pub dt_obs: f64,
    #[arg(long, default_value_t = 200)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sites tested for stationarity.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-5i64, -1, 0, 1, 5])]
    pub sites: Vec<i64>,
    /// Reflect at the window edges during the stationarity test.
    #[arg(long)]
    pub closed: bool,
    /// JSON report path (stdout without one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    params: ModelParams,
    rate: String,
    spec: ProfileSpec,
    coefficients: Coefficients,
    /// Defects of the two origin identities between the coefficients.
    identity_defects: (f64, f64),
    admissible: Option<(i64, i64)>,
    window: Window,
    residual: f64,
    m: Vec<f64>,
    stationarity: Option<StationarityReport>,
    pass: bool,
}

pub fn run(a: Args) -> Outcome {
    let mut model = a.model.clone();
    let spec = match (a.preset, a.c1, a.c2, a.m_plus) {
        (Some(p), None, None, None) => {
            model.beta = p.beta();
            p.spec(a.c)
        }
        (None, Some(c1), Some(c2), None) => ProfileSpec::Coefficients { c1, c2 },
        (None, None, None, Some(m_plus)) => ProfileSpec::TwoLevel { m_plus },
        _ => bail!("give exactly one of --preset, --c1 with --c2, or --m-plus"),
    };
    let params = model.params()?;
    let rate = model.rate()?;
    let thermo = match spec {
        ProfileSpec::Lemma44 { .. } | ProfileSpec::Lemma46 { .. } => Some(ThermoTable::new(rate.clone(), (2.0 * a.c).max(4.0))?),
        _ => None,
    };
    let coef = resolve(&params, &spec, thermo.as_ref())?;
    let limit = 2 * i64::from(params.n);
    let admissible = max_admissible_window(&params, &coef, rate.zeta_star(), limit);
    let window = match &a.window {
        Some(s) => {
            let (lo, hi) = parse_interval(s)?;
            Window::new(lo as i64, hi as i64)?
        }
        None => {
            let (lo, hi) = admissible.context("no admissible site around the origin")?;
            Window::new(lo, hi)?
        }
    };
    let profile = build_from_coefficients(&params, coef, window, &rate)?;
    let stationarity = if a.validate {
        let options = if a.closed {
            EngineOptions::closed()
        } else {
            EngineOptions {
                leakage_fraction: None,
                ..EngineOptions::default()
            }
        };
        Some(stationarity_test(&profile, &rate, options, a.t_end, a.dt_obs, a.replicas, &a.sites, a.seed)?)
    } else {
        None
    };
    let pass = stationarity.as_ref().is_none_or(|s| s.pass);
    let report = Report {
        params,
        rate: model.g.clone(),
        spec,
        identity_defects: coef.identity_defects(&params),
        coefficients: coef,
        admissible,
        window,
        residual: profile.residual,
        m: profile.m.clone(),
        stationarity,
        pass,
    };
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(pass)
}
