//! Inhomogeneous product measures with site-dependent fugacity `m_x` that
//! are invariant for the dynamics with destruction at the origin.
//!
//! `m` solves `p m_{x-1} + (1-p) m_{x+1} = m_x` away from the origin and
//! `p m_{-1} + (1-p) m_1 = (1 + alpha N^beta) m_0` at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::replicas::{mean_se, try_run_replicas};
use crate::rng::Stream;
use crate::sim::{time_grid, Configuration, EngineOptions, EventEngine, ModelParams, Window};
use crate::thermo::{mean_density, MarginalSampler, ThermoTable};

/// How the profile is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileSpec {
    /// `p = 1`: `m = (1 + alpha N^beta) m_plus` left of the origin, `m_plus`
    /// from the origin on.
    TwoLevel { m_plus: f64 },
    /// `1/2 < p < 1`: `m_x = c1 r^x + c2` for `x <= 0`, with `r = p/(1-p)`;
    /// `c3, c4` follow from the origin equation.
    Coefficients { c1: f64, c2: f64 },
    /// Second marginal used against the destruction process at `beta = 0`:
    /// `c3 = 0`, right-hand fugacity `Phi(c)`.
    Lemma44 { c: f64 },
    /// Second marginal used for `0 < beta < 1`: left-hand fugacity `Phi(c)`,
    /// `c3 = 0`.
    Lemma46 { c: f64 },
}

impl ProfileSpec {
    /// Parses `two-level:m_plus`, `coef:c1:c2`, `lemma44:c` or `lemma46:c`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("bad profile spec {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> { parts.get(i).ok_or_else(bad)?.trim().parse().map_err(|_| bad()) };
        match (parts[0], parts.len()) {
            ("two-level", 2) => Ok(Self::TwoLevel { m_plus: num(1)? }),
            ("coef", 3) => Ok(Self::Coefficients { c1: num(1)?, c2: num(2)? }),
            ("lemma44", 2) => Ok(Self::Lemma44 { c: num(1)? }),
            ("lemma46", 2) => Ok(Self::Lemma46 { c: num(1)? }),
            _ => Err(bad()),
        }
    }
}

/// Coefficients of `m_x = c1 r^x + c2` (`x <= 0`), `c3 r^x + c4` (`x >= 0`).
/// For `p = 1`, `r = infinity`: `c2` is the left level and `c4` the right
/// level, with `c1 = -(c2 - c4)` and `c3 = 0` recording the jump at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Coefficients {
    /// `c3, c4` from `c1, c2`.
    pub fn complete(params: &ModelParams, c1: f64, c2: f64) -> Self {
        let k = params.kill_factor() / params.drift();
        Self {
            c1,
            c2,
            c3: c1 + k * (c1 + c2),
            c4: c2 - k * (c1 + c2),
        }
    }

    /// Relative defects of `c1 + c2 = c3 + c4` and
    /// `c1(1-p) + c2 p + c3 p + c4(1-p) = (1 + a)(c1 + c2)`.
    pub fn identity_defects(&self, params: &ModelParams) -> (f64, f64) {
        let p = params.p;
        let a = params.kill_factor();
        let scale = self.c1.abs() + self.c2.abs() + self.c3.abs() + self.c4.abs();
        let scale = scale.max(f64::MIN_POSITIVE);
        let e1 = (self.c1 + self.c2 - self.c3 - self.c4).abs() / scale;
        let lhs = self.c1 * (1.0 - p) + self.c2 * p + self.c3 * p + self.c4 * (1.0 - p);
        let e2 = (lhs - (1.0 + a) * (self.c1 + self.c2)).abs() / (scale * (1.0 + a));
        (e1, e2)
    }

    fn eval(&self, p: f64, x: i64) -> f64 {
        if p == 1.0 {
            return if x < 0 { self.c2 } else { self.c4 };
        }
        let log_r = (p / (1.0 - p)).ln();
        let geo = |c: f64| if c == 0.0 { 0.0 } else { c * (x as f64 * log_r).exp() };
        if x <= 0 {
            geo(self.c1) + self.c2
        } else {
            geo(self.c3) + self.c4
        }
    }
}

/// Resolves a spec to coefficients; presets need `Phi(c)`.
pub fn resolve(params: &ModelParams, spec: &ProfileSpec, thermo: Option<&ThermoTable>) -> Result<Coefficients> {
    let a = params.kill_factor();
    let d = params.drift();
    let phi = |c: f64| -> Result<f64> {
        thermo
            .ok_or_else(|| Error::InvalidParams("preset profiles need a thermodynamic table".into()))?
            .phi(c)
    };
    if params.p == 1.0 {
        let (left, right) = match *spec {
            ProfileSpec::TwoLevel { m_plus } => ((1.0 + a) * m_plus, m_plus),
            ProfileSpec::Lemma44 { c } => {
                let f = phi(c)?;
                ((1.0 + a) * f, f)
            }
            ProfileSpec::Lemma46 { c } => {
                let f = phi(c)?;
                (f, f / (1.0 + a))
            }
            ProfileSpec::Coefficients { .. } => {
                return Err(Error::InvalidParams("p = 1 profiles are two-level; give m_plus".into()))
            }
        };
        return Ok(Coefficients {
            c1: right - left,
            c2: left,
            c3: 0.0,
            c4: right,
        });
    }
    Ok(match *spec {
        ProfileSpec::TwoLevel { .. } => {
            return Err(Error::InvalidParams("two-level profiles need p = 1".into()));
        }
        ProfileSpec::Coefficients { c1, c2 } => Coefficients::complete(params, c1, c2),
        ProfileSpec::Lemma44 { c } => {
            let f = phi(c)?;
            Coefficients {
                c1: -a * f / d,
                c2: (a + d) * f / d,
                c3: 0.0,
                c4: f,
            }
        }
        ProfileSpec::Lemma46 { c } => {
            let f = phi(c)?;
            Coefficients {
                c1: -a * f / (d + a),
                c2: f,
                c3: 0.0,
                c4: d * f / (d + a),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub params: ModelParams,
    pub coefficients: Coefficients,
    pub window: Window,
    pub m: Vec<f64>,
    /// Largest residual of the discrete system on the window interior.
    pub residual: f64,
}

impl StationaryProfile {
    pub fn at(&self, x: i64) -> f64 {
        self.m[self.window.index(x).expect("site inside profile window")]
    }
}

/// Largest window inside `[-limit, limit]` around the origin on which the
/// coefficients give admissible fugacities `0 <= m < zeta_star`.
pub fn max_admissible_window(params: &ModelParams, coef: &Coefficients, zeta_star: f64, limit: i64) -> Option<(i64, i64)> {
    let ok = |x: i64| {
        let m = coef.eval(params.p, x);
        m.is_finite() && m >= -NEG_TOL * (1.0 + m.abs()) && m < zeta_star
    };
    if !ok(0) {
        return None;
    }
    let mut lo = 0;
    while lo > -limit && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = 0;
    while hi < limit && ok(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

const NEG_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Builds `m` on `window` and validates non-negativity, admissibility and
/// the discrete equations.
pub fn build_profile(
    params: &ModelParams,
    spec: &ProfileSpec,
    window: Window,
    rate: &RateFunction,
    thermo: Option<&ThermoTable>,
) -> Result<StationaryProfile> {
    let coef = resolve(params, spec, thermo)?;
    build_from_coefficients(params, coef, window, rate)
}

pub fn build_from_coefficients(
    params: &ModelParams,
    coef: Coefficients,
    window: Window,
    rate: &RateFunction,
) -> Result<StationaryProfile> {
    let zeta_star = rate.zeta_star();
    let limit = window.x_min.abs().max(window.x_max.abs());
    let admissible = || max_admissible_window(params, &coef, zeta_star, limit);
    let mut m = Vec::with_capacity(window.len());
    for i in 0..window.len() {
        let x = window.site(i);
        let v = coef.eval(params.p, x);
        if !v.is_finite() || v >= zeta_star {
            return Err(Error::InadmissibleFugacity {
                site: x,
                value: v,
                zeta_star,
                admissible: admissible(),
            });
        }
        if v < 0.0 {
            if v < -NEG_TOL * (1.0 + coef.c2.abs() + coef.c4.abs()) {
                return Err(Error::Negativity {
                    site: x,
                    value: v,
                    admissible: admissible(),
                });
            }
            m.push(0.0);
        } else {
            m.push(v);
        }
    }
    let residual = residual(params, window, &m);
    if residual > RESIDUAL_TOL {
        return Err(Error::InvalidParams(format!(
            "profile residual {residual:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok(StationaryProfile {
        params: *params,
        coefficients: coef,
        window,
        m,
        residual,
    })
}

/// Largest residual of the discrete system over interior sites, relative to
/// `max(1, |m_x|)`.
pub fn residual(params: &ModelParams, window: Window, m: &[f64]) -> f64 {
    let p = params.p;
    let a = params.kill_factor();
    let mut worst: f64 = 0.0;
    for i in 1..m.len().saturating_sub(1) {
        let x = window.site(i);
        let lhs = p * m[i - 1] + (1.0 - p) * m[i + 1];
        let rhs = if x == 0 { (1.0 + a) * m[i] } else { m[i] };
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    worst
}

/// Independent draws with fugacity `m_x` at each site.
pub fn sample_stationary(profile: &StationaryProfile, rate: &RateFunction, rng: &mut Stream) -> Result<Configuration> {
    let mut occ = Vec::with_capacity(profile.m.len());
    let mut cache: Option<(f64, MarginalSampler)> = None;
    for &zeta in &profile.m {
        let sampler = match &cache {
            Some((z, s)) if *z == zeta => s,
            _ => {
                cache = Some((zeta, MarginalSampler::new(rate, zeta)?));
                &cache.as_ref().unwrap().1
            }
        };
        occ.push(sampler.sample(rng));
    }
    Configuration::from_occupations(profile.window, occ)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub x: i64,
    pub fugacity: f64,
    pub density: f64,
    pub mean_occupation: f64,
    pub se_occupation: f64,
    pub mean_rate: f64,
    pub se_rate: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub t_end: f64,
    pub replicas: u64,
    pub sites: Vec<SiteReport>,
    pub pass: bool,
}

/// Runs the dynamics from the product measure and compares, at each site of
/// `sites`, the replica mean of the time-averaged `g(omega_x)` with `m_x`.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_test(
    profile: &StationaryProfile,
    rate: &RateFunction,
    options: EngineOptions,
    t_end: f64,
    dt_obs: f64,
    replicas: u64,
    sites: &[i64],
    seed: u64,
) -> Result<StationarityReport> {
    if let Some(&x) = sites.iter().find(|&&x| !profile.window.contains(x)) {
        return Err(Error::InvalidParams(format!("site {x} outside the profile window")));
    }
    let times = if t_end > 0.0 { time_grid(t_end, dt_obs) } else { vec![0.0] };
    let per_replica = try_run_replicas(replicas, seed, |_, mut rng| {
        let c = sample_stationary(profile, rate, &mut rng)?;
        let mut e = EventEngine::new(c, profile.params, rate.clone(), options, rng)?;
        let mut sum_occ = vec![0.0; sites.len()];
        let mut sum_g = vec![0.0; sites.len()];
        e.run(t_end, &times, |_, cfg| {
            for (k, &x) in sites.iter().enumerate() {
                let w = cfg.at(x);
                sum_occ[k] += f64::from(w);
                sum_g[k] += rate.g(w);
            }
        })?;
        let n = times.len() as f64;
        Ok((
            sum_occ.into_iter().map(|v| v / n).collect::<Vec<_>>(),
            sum_g.into_iter().map(|v| v / n).collect::<Vec<_>>(),
        ))
    })?;
    let mut reports = Vec::with_capacity(sites.len());
    for (k, &x) in sites.iter().enumerate() {
        let occ: Vec<f64> = per_replica.iter().map(|r| r.0[k]).collect();
        let gs: Vec<f64> = per_replica.iter().map(|r| r.1[k]).collect();
        let (mo, so) = mean_se(&occ);
        let (mg, sg) = mean_se(&gs);
        let m = profile.at(x);
        let pass = (mg - m).abs() <= 3.0 * sg || (mg - m).abs() <= 1e-12;
        reports.push(SiteReport {
            x,
            fugacity: m,
            density: mean_density(rate, m)?,
            mean_occupation: mo,
            se_occupation: so,
            mean_rate: mg,
            se_rate: sg,
            pass,
        });
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(StationarityReport {
        t_end,
        replicas,
        sites: reports,
        pass,
    })
}
