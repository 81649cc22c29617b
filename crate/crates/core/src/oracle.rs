//! Exact machinery for the linear rate `g(k) = k`: the closed-form
//! macroscopic solution, the density ODE, the killed dual walk and
//! two-point correlations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{DensityProfile, Rho0};
use crate::rate::RateFunction;
use crate::replicas::{jackknife_se, mean_se, run_replicas, try_run_replicas};
use crate::rng::Stream;
use crate::sim::{build_initial, exp_wait, EngineOptions, EventEngine, ModelParams, Window};

/// `alpha~`: 1 if `beta > 0`, `alpha / (alpha + 2p - 1)` if `beta = 0`, 0 if
/// `beta < 0` (and 0 whenever `alpha = 0`).
pub fn alpha_tilde(params: &ModelParams) -> f64 {
    if params.alpha == 0.0 || params.beta < 0.0 {
        0.0
    } else if params.beta == 0.0 {
        params.alpha / (params.alpha + params.drift())
    } else {
        1.0
    }
}

/// `alpha~_N = a / (a + 2p - 1)` with `a = alpha N^beta`, the probability
/// that the dual walk started at 0 is ever killed.
pub fn alpha_tilde_n(params: &ModelParams) -> f64 {
    let a = params.kill_factor();
    a / (a + params.drift())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCaseParams {
    pub params: ModelParams,
    pub alpha_tilde: f64,
    pub alpha_tilde_n: f64,
}

impl LinearCaseParams {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            alpha_tilde: alpha_tilde(&params),
            alpha_tilde_n: alpha_tilde_n(&params),
        }
    }
}

/// `(1 - alpha~ 1{0 <= u < (2p-1)t}) rho0(u - (2p-1)t)`.
pub fn exact_linear_solution(rho0: &Rho0, lin: &LinearCaseParams, t: f64, u: f64) -> f64 {
    let s = lin.params.drift() * t;
    let drop = if (0.0..s).contains(&u) { lin.alpha_tilde } else { 0.0 };
    (1.0 - drop) * rho0.value(u - s)
}

/// Exact cell averages of [`exact_linear_solution`] on a grid.
pub fn exact_linear_profile(
    rho0: &Rho0,
    lin: &LinearCaseParams,
    t: f64,
    u_min: f64,
    u_max: f64,
    du: f64,
) -> Result<DensityProfile> {
    let mut prof = DensityProfile::zeros(u_min, u_max, du)?;
    let s = lin.params.drift() * t;
    for j in 0..prof.len() {
        let (a, b) = prof.cell(j);
        let mut v = rho0.cell_average(a - s, b - s);
        let (lo, hi) = (a.max(0.0), b.min(s));
        if hi > lo {
            v -= lin.alpha_tilde * (hi - lo) / (b - a) * rho0.cell_average(lo - s, hi - s);
        }
        prof.values_mut()[j] = v;
    }
    Ok(prof)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OdeScheme {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub scheme: OdeScheme,
    /// Defaults to the stability bound `0.5 / (N (1 + alpha N^beta))`.
    pub dt: Option<f64>,
    /// Largest tolerated change of the edge sites, relative to `max rho0`.
    pub edge_tolerance: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            scheme: OdeScheme::Euler,
            dt: None,
            edge_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub window: Window,
    pub n: u32,
    pub times: Vec<f64>,
    /// `densities[k][i]` is `rho^N_x(times[k])` at the `i`-th window site.
    pub densities: Vec<Vec<f64>>,
    pub initial_mass: f64,
    /// Mass absorbed at the origin up to each observation time.
    pub killed: Vec<f64>,
    /// Net mass that crossed the window edges up to each observation time.
    pub exited: Vec<f64>,
}

impl OdeSolution {
    pub fn at(&self, k: usize, x: i64) -> Option<f64> {
        self.window.index(x).map(|i| self.densities[k][i])
    }

    /// Densities at observation `k` as a macroscopic profile with cells
    /// `[x/N, (x+1)/N)`.
    pub fn profile(&self, k: usize) -> Result<DensityProfile> {
        let n = f64::from(self.n);
        DensityProfile::new(self.window.x_min as f64 / n, 1.0 / n, self.densities[k].clone())
    }
}

struct OdeSystem {
    n: f64,
    p: f64,
    kill: f64,
    origin: Option<usize>,
    ghost: (f64, f64),
}

impl OdeSystem {
    /// Writes the derivative of `(rho, killed, exited)` into `out`.
    fn rhs(&self, rho: &[f64], out: &mut [f64]) {
        let m = rho.len();
        let (gl, gr) = self.ghost;
        let (p, q, n) = (self.p, 1.0 - self.p, self.n);
        for i in 0..m {
            let left = if i > 0 { rho[i - 1] } else { gl };
            let right = if i + 1 < m { rho[i + 1] } else { gr };
            out[i] = n * (q * right + p * left - rho[i]);
        }
        let mut killed = 0.0;
        if let Some(o) = self.origin {
            out[o] -= n * self.kill * rho[o];
            killed = n * self.kill * rho[o];
        }
        out[m] = killed;
        out[m + 1] = n * (p * rho[m - 1] - q * gr) + n * (q * rho[0] - p * gl);
    }
}

/// Integrates the linear density system from `rho_x(0) = rho0(x/N)` on the
/// window, holding the sites just outside at their initial values, and
/// records the solution at each time in `observe_at` (sorted).
pub fn integrate_density_ode(
    rho0: &Rho0,
    params: &ModelParams,
    window: Window,
    observe_at: &[f64],
    options: OdeOptions,
) -> Result<OdeSolution> {
    let n = params.scale();
    let a = params.kill_factor();
    let bound = 0.5 / (n * (1.0 + a));
    let dt_max = match options.dt {
        Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(Error::StepBound { dt, bound }),
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidParams(format!("ODE step {dt} must be positive"))),
        None => bound,
    };
    if observe_at.windows(2).any(|w| w[1] < w[0]) || observe_at.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParams("observation times must be sorted and non-negative".into()));
    }
    let m = window.len();
    let site_value = |x: i64| rho0.value(x as f64 / n);
    let mut state: Vec<f64> = (0..m).map(|i| site_value(window.site(i))).collect();
    let initial = state.clone();
    state.extend([0.0, 0.0]);
    let sys = OdeSystem {
        n,
        p: params.p,
        kill: a,
        origin: window.index(0),
        ghost: (site_value(window.x_min - 1), site_value(window.x_max + 1)),
    };
    let initial_mass: f64 = initial.iter().sum();
    let scale = rho0.max_value().max(1e-300);
    let limit = options.edge_tolerance * scale;

    let mut sol = OdeSolution {
        window,
        n: params.n,
        times: Vec::new(),
        densities: Vec::new(),
        initial_mass,
        killed: Vec::new(),
        exited: Vec::new(),
    };
    let mut k1 = vec![0.0; m + 2];
    let (mut k2, mut k3, mut k4, mut tmp) = (k1.clone(), k1.clone(), k1.clone(), k1.clone());
    let mut t = 0.0;
    for &t_obs in observe_at {
        let span = t_obs - t;
        let steps = if span > 0.0 { (span / dt_max).ceil() as usize } else { 0 };
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            match options.scheme {
                OdeScheme::Euler => {
                    sys.rhs(&state[..m], &mut k1);
                    for (s, d) in state.iter_mut().zip(&k1) {
                        *s += h * d;
                    }
                }
                OdeScheme::Rk4 => {
                    sys.rhs(&state[..m], &mut k1);
                    for i in 0..m + 2 {
                        tmp[i] = state[i] + 0.5 * h * k1[i];
                    }
                    sys.rhs(&tmp[..m], &mut k2);
                    for i in 0..m + 2 {
                        tmp[i] = state[i] + 0.5 * h * k2[i];
                    }
                    sys.rhs(&tmp[..m], &mut k3);
                    for i in 0..m + 2 {
                        tmp[i] = state[i] + h * k3[i];
                    }
                    sys.rhs(&tmp[..m], &mut k4);
                    for i in 0..m + 2 {
                        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
            }
        }
        t = t_obs;
        let deviation = (state[0] - initial[0]).abs().max((state[m - 1] - initial[m - 1]).abs());
        if deviation > limit {
            return Err(Error::EdgeDensity { deviation, limit });
        }
        sol.times.push(t_obs);
        sol.densities.push(state[..m].to_vec());
        sol.killed.push(state[m]);
        sol.exited.push(state[m + 1]);
    }
    Ok(sol)
}

/// Position of the dual walk at time `t`, or `None` if it was killed.
///
/// The walk steps left at rate `Np`, right at rate `N(1-p)`, and is killed at
/// rate `N alpha N^beta` while at 0.
fn dual_walk(x0: i64, t: f64, params: &ModelParams, rng: &mut Stream) -> Option<i64> {
    let n = params.scale();
    let a = params.kill_factor();
    let kill = a / (1.0 + a);
    let mut x = x0;
    let mut time = 0.0;
    loop {
        let at_origin = x == 0 && a > 0.0;
        let rate = if at_origin { n * (1.0 + a) } else { n };
        time += exp_wait(rng, rate);
        if time > t {
            return Some(x);
        }
        if at_origin && rng.random::<f64>() < kill {
            return None;
        }
        x += if rng.random::<f64>() < params.p { -1 } else { 1 };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub replicas: u64,
}

/// Feynman-Kac estimate of `rho^N_x(t) = E_x[rho0(X_t / N) 1{tau > t}]`.
pub fn dual_rw_estimate(x: i64, t: f64, params: &ModelParams, rho0: &Rho0, replicas: u64, seed: u64) -> McEstimate {
    let n = params.scale();
    let xs = run_replicas(replicas, seed, |_, mut rng| {
        dual_walk(x, t, params, &mut rng).map_or(0.0, |y| rho0.value(y as f64 / n))
    });
    let (mean, se) = mean_se(&xs);
    McEstimate { mean, se, replicas }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KillEstimate {
    pub fraction: f64,
    pub se: f64,
    /// `alpha~_N`.
    pub expected: f64,
    pub killed: u64,
    pub escaped: u64,
    /// Walks neither killed nor escaped by the horizon.
    pub undecided: u64,
    pub horizon: f64,
}

enum WalkFate {
    Killed,
    Escaped,
    Undecided,
}

/// Fraction of dual walks from `start` killed before the horizon. A walk
/// that gets `4 sqrt(N)` sites left of the origin counts as escaped. The
/// default horizon is the larger of `10 / (N (2p-1))` and twice the mean time
/// the drift needs to carry a walk to the escape line.
pub fn killing_probability_experiment(
    params: &ModelParams,
    start: i64,
    horizon: Option<f64>,
    replicas: u64,
    seed: u64,
) -> KillEstimate {
    let n = params.scale();
    let escape = -(4.0 * n.sqrt()).ceil() as i64;
    let horizon =
        horizon.unwrap_or((10.0 / (n * params.drift())).max(2.0 * (start - escape) as f64 / (n * params.drift())));
    let a = params.kill_factor();
    let kill = a / (1.0 + a);
    let fates = run_replicas(replicas, seed, |_, mut rng| {
        if a == 0.0 {
            return WalkFate::Undecided;
        }
        let mut x = start;
        let mut time = 0.0;
        loop {
            if x <= escape {
                return WalkFate::Escaped;
            }
            let rate = if x == 0 { n * (1.0 + a) } else { n };
            time += exp_wait(&mut rng, rate);
            if time > horizon {
                return WalkFate::Undecided;
            }
            if x == 0 && rng.random::<f64>() < kill {
                return WalkFate::Killed;
            }
            x += if rng.random::<f64>() < params.p { -1 } else { 1 };
        }
    });
    let (mut killed, mut escaped, mut undecided) = (0, 0, 0);
    for f in &fates {
        match f {
            WalkFate::Killed => killed += 1,
            WalkFate::Escaped => escaped += 1,
            WalkFate::Undecided => undecided += 1,
        }
    }
    let r = replicas.max(1) as f64;
    let fraction = killed as f64 / r;
    KillEstimate {
        fraction,
        se: (fraction * (1.0 - fraction) / r).sqrt(),
        expected: alpha_tilde_n(params),
        killed,
        escaped,
        undecided,
        horizon,
    }
}

pub const MIN_CORRELATION_REPLICAS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub estimate: f64,
    pub se: f64,
}

/// Unbiased covariance of `(omega_x, omega_y)` across replicas with its
/// delete-one jackknife standard error. `samples[r][i]` is the occupation of
/// window site `i` in replica `r`.
pub fn correlation_field(samples: &[Vec<u32>], i: usize, j: usize) -> Result<CorrelationEstimate> {
    let n = samples.len();
    if n < MIN_CORRELATION_REPLICAS {
        return Err(Error::InsufficientReplicas {
            needed: MIN_CORRELATION_REPLICAS,
            got: n,
        });
    }
    let xs: Vec<f64> = samples.iter().map(|s| f64::from(s[i])).collect();
    let ys: Vec<f64> = samples.iter().map(|s| f64::from(s[j])).collect();
    Ok(covariance_with_jackknife(&xs, &ys))
}

fn covariance_with_jackknife(xs: &[f64], ys: &[f64]) -> CorrelationEstimate {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let cov = |sx: f64, sy: f64, sxy: f64, n: f64| (sxy - sx * sy / n) / (n - 1.0);
    let estimate = cov(sx, sy, sxy, n);
    let loo: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| cov(sx - x, sy - y, sxy - x * y, n - 1.0))
        .collect();
    CorrelationEstimate {
        estimate,
        se: jackknife_se(&loo),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScan {
    pub pairs: usize,
    /// Largest `|estimate|` and largest `|estimate| / se` over the pairs.
    pub max_abs: f64,
    pub max_ratio: f64,
    pub worst: Option<(i64, i64)>,
    /// Pairs whose estimate exceeds `k_se` standard errors.
    pub exceed: usize,
}

/// Scans all pairs of `sites` at distance at least `min_sep`.
pub fn correlation_scan(samples: &[Vec<u32>], window: &Window, sites: &[i64], min_sep: i64, k_se: f64) -> Result<CorrelationScan> {
    let idx: Vec<(i64, usize)> = sites
        .iter()
        .map(|&x| {
            window
                .index(x)
                .map(|i| (x, i))
                .ok_or_else(|| Error::InvalidParams(format!("site {x} outside window")))
        })
        .collect::<Result<_>>()?;
    let mut scan = CorrelationScan {
        pairs: 0,
        max_abs: 0.0,
        max_ratio: 0.0,
        worst: None,
        exceed: 0,
    };
    for (a, &(x, i)) in idx.iter().enumerate() {
        for &(y, j) in &idx[a + 1..] {
            if (x - y).abs() < min_sep {
                continue;
            }
            let c = correlation_field(samples, i, j)?;
            scan.pairs += 1;
            scan.max_abs = scan.max_abs.max(c.estimate.abs());
            let ratio = if c.se > 0.0 {
                c.estimate.abs() / c.se
            } else if c.estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if ratio > scan.max_ratio || scan.worst.is_none() {
                scan.max_ratio = scan.max_ratio.max(ratio);
                scan.worst = Some((x, y));
            }
            if ratio > k_se {
                scan.exceed += 1;
            }
        }
    }
    Ok(scan)
}

/// Occupations at time `t` of independent replicas started from the product
/// Poisson measure with profile `rho0`.
pub fn simulate_snapshots(
    rho0: &Rho0,
    params: &ModelParams,
    rate: &RateFunction,
    window: Window,
    options: EngineOptions,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    try_run_replicas(replicas, seed, |_, mut rng| {
        let config = build_initial(rho0, params, window, &mut rng)?;
        let mut engine = EventEngine::new(config, *params, rate.clone(), options, rng)?;
        engine.advance_to(t)?;
        Ok(engine.into_parts().0.occupations)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, alpha: f64, beta: f64, n: u32) -> ModelParams {
        ModelParams::new(p, alpha, beta, n).unwrap()
    }

    #[test]
    fn alpha_tilde_table() {
        assert_eq!(alpha_tilde(&params(0.75, 1.0, 0.0, 10)), 2.0 / 3.0);
        assert_eq!(alpha_tilde(&params(0.75, 1.0, 1.0, 10)), 1.0);
        assert_eq!(alpha_tilde(&params(0.75, 1.0, -1.0, 10)), 0.0);
        assert_eq!(alpha_tilde(&params(0.75, 0.0, 1.0, 10)), 0.0);
        let ns = [10, 100, 1000, 10000];
        let up: Vec<f64> = ns.iter().map(|&n| alpha_tilde_n(&params(0.75, 1.0, 0.5, n))).collect();
        let down: Vec<f64> = ns.iter().map(|&n| alpha_tilde_n(&params(0.75, 1.0, -0.5, n))).collect();
        assert!(up.windows(2).all(|w| w[1] > w[0] && w[1] < 1.0));
        assert!(down.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        assert!(ns.iter().all(|&n| (alpha_tilde_n(&params(0.75, 1.0, 0.0, n)) - 2.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn exact_solution_examples() {
        let lin = LinearCaseParams::new(params(0.75, 1.0, 0.0, 100));
        let r = Rho0::parse("-1:0:1").unwrap();
        assert!((exact_linear_solution(&r, &lin, 0.8, 0.2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact_linear_solution(&r, &lin, 0.8, -0.3), 1.0);
        let transport = LinearCaseParams::new(params(0.75, 1.0, -1.0, 100));
        assert_eq!(exact_linear_solution(&r, &transport, 0.8, 0.2), 1.0);
        let prof = exact_linear_profile(&r, &lin, 0.8, -2.0, 2.0, 0.01).unwrap();
        // Mass: 0.6 uncrossed plus a third of the 0.4 that crossed.
        assert!((prof.integral() - (0.6 + 0.4 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn ode_trivial_cases() {
        let p = params(0.75, 0.0, 0.0, 20);
        let w = Window::new(-40, 40).unwrap();
        let s = integrate_density_ode(&Rho0::parse("-inf:inf:0.7").unwrap(), &p, w, &[0.5, 1.0], OdeOptions::default())
            .unwrap();
        assert!(s.densities[1].iter().all(|&v| (v - 0.7).abs() < 1e-12));
        let s = integrate_density_ode(&Rho0::parse("-1:0:0").unwrap(), &params(0.75, 1.0, 0.0, 20), w, &[1.0], OdeOptions::default())
            .unwrap();
        assert!(s.densities[0].iter().all(|&v| v == 0.0));
        let bad = OdeOptions {
            dt: Some(1.0),
            ..OdeOptions::default()
        };
        assert!(matches!(
            integrate_density_ode(&Rho0::parse("-1:0:1").unwrap(), &p, w, &[1.0], bad),
            Err(Error::StepBound { .. })
        ));
        // Window too small: density reaches the edge.
        let small = Window::new(-25, 5).unwrap();
        assert!(matches!(
            integrate_density_ode(&Rho0::parse("-1:0:1").unwrap(), &p, small, &[1.0], OdeOptions::default()),
            Err(Error::EdgeDensity { .. })
        ));
    }

    #[test]
    fn ode_mass_balance_and_positivity() {
        for scheme in [OdeScheme::Euler, OdeScheme::Rk4] {
            let p = params(0.75, 1.0, 0.0, 50);
            let w = Window::new(-120, 120).unwrap();
            let opts = OdeOptions {
                scheme,
                ..OdeOptions::default()
            };
            let s = integrate_density_ode(&Rho0::parse("-1:0:1").unwrap(), &p, w, &[0.3, 0.8], opts).unwrap();
            for k in 0..2 {
                let mass: f64 = s.densities[k].iter().sum();
                assert!((mass + s.killed[k] + s.exited[k] - s.initial_mass).abs() < 1e-9 * s.initial_mass);
                assert!(s.densities[k].iter().all(|&v| v >= 0.0));
            }
            assert!(s.killed[1] > 0.0);
        }
    }

    #[test]
    fn ode_matches_exact_away_from_singular_lines() {
        let p = params(0.75, 1.0, 0.0, 100);
        let lin = LinearCaseParams::new(p);
        // Lipschitz data: a jump in rho0 would be a third singular line.
        let r = Rho0::parse("cos:-0.5:0.5:1").unwrap();
        let w = Window::new(-200, 150).unwrap();
        let s = integrate_density_ode(&r, &p, w, &[0.8], OdeOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for x in w.x_min..=w.x_max {
            let u = x as f64 / 100.0;
            let a = u.abs();
            if (0.05..=0.35).contains(&a) || (0.45..=0.9).contains(&a) {
                worst = worst.max((s.at(0, x).unwrap() - exact_linear_solution(&r, &lin, 0.8, u)).abs());
            }
        }
        assert!(worst <= 0.1, "{worst}");
    }

    #[test]
    fn dual_trivial_and_consistent() {
        let p = params(0.75, 0.0, 0.0, 50);
        let one = dual_rw_estimate(3, 0.5, &p, &Rho0::parse("-inf:inf:1").unwrap(), 200, 1);
        assert_eq!((one.mean, one.se), (1.0, 0.0));
        let zero = dual_rw_estimate(3, 0.5, &p, &Rho0::parse("-1:0:0").unwrap(), 200, 1);
        assert_eq!(zero.mean, 0.0);

        let p = params(0.75, 1.0, 0.0, 100);
        let r = Rho0::parse("-1:0:1").unwrap();
        let w = Window::new(-200, 150).unwrap();
        let s = integrate_density_ode(&r, &p, w, &[0.8], OdeOptions::default()).unwrap();
        let est = dual_rw_estimate(20, 0.8, &p, &r, 10_000, 7);
        let ode = s.at(0, 20).unwrap();
        assert!((est.mean - ode).abs() <= 3.0 * est.se, "{est:?} vs {ode}");
    }

    #[test]
    fn killing_probability() {
        let none = killing_probability_experiment(&params(0.75, 0.0, 0.0, 100), 0, None, 100, 1);
        assert_eq!(none.fraction, 0.0);
        for p in [1.0, 0.75] {
            let k = killing_probability_experiment(&params(p, 1.0, 0.0, 100), 0, None, 10_000, 3);
            assert!((k.fraction - k.expected).abs() <= 3.0 * k.se, "{k:?}");
        }
    }

    #[test]
    fn correlation_needs_replicas_and_sees_poisson_variance() {
        let few = vec![vec![1u32, 2]; 50];
        assert!(matches!(
            correlation_field(&few, 0, 1),
            Err(Error::InsufficientReplicas { needed: 100, got: 50 })
        ));
        let p = params(0.75, 0.0, 0.0, 100);
        let w = Window::new(-20, 20).unwrap();
        let snaps = simulate_snapshots(
            &Rho0::parse("-inf:inf:1").unwrap(),
            &p,
            &RateFunction::linear(),
            w,
            EngineOptions::default(),
            0.0,
            400,
            5,
        )
        .unwrap();
        let var = correlation_field(&snaps, 5, 5).unwrap();
        assert!((var.estimate - 1.0).abs() <= 3.0 * var.se, "{var:?}");
        let cov = correlation_field(&snaps, 5, 30).unwrap();
        assert!(cov.estimate.abs() <= 3.0 * cov.se, "{cov:?}");
    }

    #[test]
    fn jackknife_matches_direct_leave_one_out() {
        let xs = [1.0, 3.0, 2.0, 5.0, 4.0];
        let ys = [2.0, 1.0, 4.0, 3.0, 6.0];
        let c = covariance_with_jackknife(&xs, &ys);
        let direct = |x: &[f64], y: &[f64]| {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0)
        };
        assert!((c.estimate - direct(&xs, &ys)).abs() < 1e-12);
        let loo: Vec<f64> = (0..5)
            .map(|k| {
                let x: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
                let y: Vec<f64> = ys.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
                direct(&x, &y)
            })
            .collect();
        assert!((c.se - jackknife_se(&loo)).abs() < 1e-12);
    }
}
