use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::bail;
use clap::ValueEnum;
use serde::Serialize;
use zrh_core::coupling::{
    micro_entropy_integrand, second_class_left_mass, BasicCouplingEngine, LabeledCoupling, PairConfiguration,
    SecondClassEngine,
};
use zrh_core::harness::fmt_sig;
use zrh_core::invariant::{build_profile, sample_stationary, ProfileSpec};
use zrh_core::replicas::{mean_se, try_run_replicas};
use zrh_core::sim::build_initial;
use zrh_core::testfn::Bump;
use zrh_core::{Configuration, EngineOptions, ModelParams, ThermoTable};

use crate::common::{emit_with_sidecar, observation_times, parse_interval, parse_rho0, to_json, window_for, Model};
use crate::Outcome;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SecondClass,
    Basic,
    Labeled,
}

/// Stationary second marginals used against the destruction process.
#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `beta = 0`, `c3 = 0`, right fugacity `Phi(c)`.
    #[value(name = "lemma44-beta0")]
    Lemma44Beta0,
    /// `beta = 1/2`, `c3 = 0`, left fugacity `Phi(c)`.
    #[value(name = "lemma46-beta-mid")]
    Lemma46BetaMid,
}

impl Preset {
    pub fn beta(self) -> f64 {
        match self {
            Preset::Lemma44Beta0 => 0.0,
            Preset::Lemma46BetaMid => 0.5,
        }
    }

    pub fn spec(self, c: f64) -> ProfileSpec {
        match self {
            Preset::Lemma44Beta0 => ProfileSpec::Lemma44 { c },
            Preset::Lemma46BetaMid => ProfileSpec::Lemma46 { c },
        }
    }
}

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    #[command(flatten)]
    pub model: Model,
    #[arg(long, value_enum, default_value = "second-class")]
    pub mode: Mode,
    /// Second copy of the basic coupling drawn from a stationary profile;
    /// overrides `--beta`.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Density constant of the preset.
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long, allow_hyphen_values = true, default_value = "-1:0:1")]
    pub rho0: String,
    /// Initial profile of the second copy of the basic coupling (instead of
    /// a preset).
    #[arg(long = "rho0-second", allow_hyphen_values = true)]
    pub rho0_second: Option<String>,
    #[arg(long = "t-end", default_value_t = 1.0)]
    pub t_end: f64,
    /// Observation spacing; also the quadrature step of the entropy functional.
    #[arg(long = "dt-obs", default_value_t = 0.01)]
    pub dt_obs: f64,
    #[arg(long, default_value_t = 10)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub ell: u32,
    /// Spatial box `u0:u1` of the bump test function of the entropy
    /// functional (time box `[0, t-end]`).
    #[arg(long = "h-box", allow_hyphen_values = true)]
    pub h_box: Option<String>,
    #[arg(long = "window-margin", default_value_t = 0.5)]
    pub window_margin: f64,
    #[arg(long)]
    pub closed: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One observation of one replica; `None` where the mode has no such
/// statistic.
#[derive(Debug, Clone, Copy, Default)]
struct Obs {
    k_t: Option<f64>,
    left_mass: Option<f64>,
    discrepancy: Option<f64>,
    entropy: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar {
    mode: Mode,
    preset: Option<Preset>,
    params: ModelParams,
    rate: String,
    rho0: String,
    replicas: u64,
    seed: u64,
    /// Basic coupling: events after which the order between the copies
    /// failed, summed over replicas.
    order_violations: Option<u64>,
    final_means: Vec<(String, f64, f64)>,
}

/// Accumulates `int_0^t` of the integrand by the trapezoid rule.
struct Running {
    last: Option<(f64, f64)>,
    total: f64,
}

impl Running {
    fn push(&mut self, t: f64, v: f64) -> f64 {
        if let Some((t0, v0)) = self.last {
            self.total += 0.5 * (t - t0) * (v + v0);
        }
        self.last = Some((t, v));
        self.total
    }
}

pub fn run(a: Args) -> Outcome {
    let mut model = a.model.clone();
    if let Some(p) = a.preset {
        model.beta = p.beta();
    }
    let params = model.params()?;
    let rate = model.rate()?;
    let rho0 = parse_rho0(&a.rho0)?;
    let window = window_for(&rho0, &params, a.t_end, a.window_margin)?;
    let times = observation_times(a.t_end, Some(a.dt_obs))?;
    let mut options = if a.closed { EngineOptions::closed() } else { EngineOptions::default() };
    if a.preset.is_some() {
        // A stationary copy fills the whole window and keeps leaving it.
        options.leakage_fraction = None;
    }
    let (w0, w1) = window.image(params.n);
    let (h0, h1) = match &a.h_box {
        Some(s) => parse_interval(s)?,
        None => {
            let q = 0.25 * (w1 - w0);
            (w0 + q, w1 - q)
        }
    };
    let h = Bump::on_box(0.0, a.t_end.max(f64::MIN_POSITIVE), h0, h1);
    let thermo = ThermoTable::new(rate.clone(), 4.0 * rho0.max_value().max(a.c) + 4.0)?;
    let second = match (a.mode, a.preset, &a.rho0_second) {
        (Mode::Basic, Some(p), None) => Some(Second::Stationary(build_profile(
            &params,
            &p.spec(a.c),
            window,
            &rate,
            Some(&thermo),
        )?)),
        (Mode::Basic, None, Some(s)) => Some(Second::Profile(parse_rho0(s)?)),
        (Mode::Basic, None, None) => Some(Second::Profile(rho0.clone())),
        (Mode::Basic, Some(_), Some(_)) => bail!("give either --preset or --rho0-second"),
        _ => None,
    };

    let runs = try_run_replicas(a.replicas, a.seed, |_, mut rng| -> zrh_core::Result<(Vec<Obs>, u64)> {
        let init = build_initial(&rho0, &params, window, &mut rng)?;
        let n = params.scale();
        let mut out = Vec::with_capacity(times.len());
        let mut violations = 0;
        let mut err = None;
        let mut phi = thermo.block_phi(a.ell as usize);
        let mut ent = Running { last: None, total: 0.0 };
        let mut entropy = |t: f64, pair: &PairConfiguration| -> Option<f64> {
            match micro_entropy_integrand(t, pair, &params, a.ell, &mut phi, &h) {
                Ok(v) => Some(ent.push(t, v)),
                Err(e) => {
                    err.get_or_insert(e);
                    None
                }
            }
        };
        match a.mode {
            Mode::SecondClass => {
                let mut e = SecondClassEngine::new(init, params, rate.clone(), options, rng)?;
                e.run(a.t_end, &times, |t, s| {
                    let k = s.k_t() as f64;
                    let sum = s.omega.occupations.iter().zip(&s.zeta.occupations).map(|(w, z)| w + z).collect();
                    let upper = Configuration::from_occupations(s.omega.window, sum).expect("same window");
                    let pair = PairConfiguration::new(s.omega.clone(), upper).expect("same window");
                    out.push(Obs {
                        k_t: Some(k),
                        left_mass: Some(second_class_left_mass(s, params.n)),
                        discrepancy: Some(k / n),
                        entropy: entropy(t, &pair),
                    });
                })?;
            }
            Mode::Basic => {
                let varpi = match second.as_ref().expect("basic mode has a second copy") {
                    Second::Stationary(profile) => sample_stationary(profile, &rate, &mut rng)?,
                    Second::Profile(r) => build_initial(r, &params, window, &mut rng)?,
                };
                let pair = PairConfiguration::new(init, varpi)?;
                let mut e = BasicCouplingEngine::new(pair, params, rate.clone(), options, rng)?;
                e.run(a.t_end, &times, |t, pair| {
                    let d: u64 = pair
                        .omega
                        .occupations
                        .iter()
                        .zip(&pair.varpi.occupations)
                        .map(|(x, y)| u64::from(x.abs_diff(*y)))
                        .sum();
                    out.push(Obs {
                        discrepancy: Some(d as f64 / n),
                        entropy: entropy(t, pair),
                        ..Obs::default()
                    });
                })?;
                violations = e.violations();
            }
            Mode::Labeled => {
                let mut e = LabeledCoupling::new(init, params, rate.clone(), options, rng)?;
                for &t in &times {
                    e.advance_to(t)?;
                    out.push(Obs {
                        discrepancy: Some(e.discrepancy() as f64 / n),
                        ..Obs::default()
                    });
                }
            }
        }
        match err {
            Some(e) => Err(e),
            None => Ok((out, violations)),
        }
    })?;

    let column = |k: usize, f: fn(&Obs) -> Option<f64>| -> Option<(f64, f64)> {
        let xs: Option<Vec<f64>> = runs.iter().map(|(obs, _)| f(&obs[k])).collect();
        xs.map(|xs| mean_se(&xs))
    };
    let fields: [(&str, fn(&Obs) -> Option<f64>); 4] = [
        ("K_t", |o| o.k_t),
        ("left_mass", |o| o.left_mass),
        ("discrepancy", |o| o.discrepancy),
        ("entropy_functional", |o| o.entropy),
    ];
    let mut csv = String::from("t,K_t,left_mass,discrepancy,entropy_functional\n");
    for (k, &t) in times.iter().enumerate() {
        csv.push_str(&fmt_sig(t));
        for (_, f) in &fields {
            let _ = write!(csv, ",{}", column(k, *f).map_or(String::new(), |(m, _)| fmt_sig(m)));
        }
        csv.push('\n');
    }
    let last = times.len() - 1;
    let sidecar = Sidecar {
        mode: a.mode,
        preset: a.preset,
        params,
        rate: model.g.clone(),
        rho0: a.rho0.clone(),
        replicas: a.replicas,
        seed: a.seed,
        order_violations: (a.mode == Mode::Basic).then(|| runs.iter().map(|(_, v)| v).sum()),
        final_means: fields
            .iter()
            .filter_map(|(name, f)| column(last, *f).map(|(m, se)| (name.to_string(), m, se)))
            .collect(),
    };
    emit_with_sidecar(a.out.as_deref(), &csv, &to_json(&sidecar)?)?;
    Ok(true)
}

enum Second {
    Stationary(zrh_core::invariant::StationaryProfile),
    Profile(zrh_core::Rho0),
}
