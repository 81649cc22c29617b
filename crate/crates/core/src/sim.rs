//! Exact kinetic Monte Carlo for the accelerated dynamics on a finite window.
//!
//! Time is macroscopic: a site `x != 0` fires at rate `N g(omega_x)`, the
//! origin at `N (1 + alpha N^beta) g(omega_0)`, and a Bernoulli draw at the
//! origin decides between destruction and a jump.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fenwick::SumTree;
use crate::profile::{DensityProfile, Rho0};
use crate::rate::RateFunction;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: u32,
}

impl ModelParams {
    pub fn new(p: f64, alpha: f64, beta: f64, n: u32) -> Result<Self> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::InvalidParams(format!("p = {p} must lie in (1/2, 1]")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must be finite and >= 0")));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidParams(format!("beta = {beta} must be finite")));
        }
        if n == 0 {
            return Err(Error::InvalidParams("N must be positive".into()));
        }
        Ok(Self { p, alpha, beta, n })
    }

    pub fn scale(&self) -> f64 {
        f64::from(self.n)
    }

    /// `2p - 1`.
    pub fn drift(&self) -> f64 {
        2.0 * self.p - 1.0
    }

    /// `alpha N^beta`.
    pub fn kill_factor(&self) -> f64 {
        self.alpha * self.scale().powf(self.beta)
    }

    /// Probability that an origin event destroys the particle.
    pub fn kill_probability(&self) -> f64 {
        let a = self.kill_factor();
        a / (1.0 + a)
    }

    pub fn with_n(&self, n: u32) -> Self {
        Self { n, ..*self }
    }
}

/// Integer interval `[x_min, x_max]` of lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: i64,
    pub x_max: i64,
}

impl Window {
    pub fn new(x_min: i64, x_max: i64) -> Result<Self> {
        if x_min > x_max {
            return Err(Error::InvalidParams(format!("empty window [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max })
    }

    pub fn len(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64) -> bool {
        self.x_min <= x && x <= self.x_max
    }

    pub fn index(&self, x: i64) -> Option<usize> {
        self.contains(x).then(|| (x - self.x_min) as usize)
    }

    pub fn site(&self, i: usize) -> i64 {
        self.x_min + i as i64
    }

    /// Macroscopic image `[x_min / N, (x_max + 1) / N]`; site `x` owns the
    /// cell `[x/N, (x+1)/N)`.
    pub fn image(&self, n: u32) -> (f64, f64) {
        let n = f64::from(n);
        (self.x_min as f64 / n, (self.x_max + 1) as f64 / n)
    }
}

/// What happens to a particle jumping out of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Boundary {
    /// Exiting particles are removed and counted.
    #[default]
    Open,
    /// Outward jumps are suppressed.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub window: Window,
    pub occupations: Vec<u32>,
    pub destroyed: u64,
    pub exited_left: u64,
    pub exited_right: u64,
}

impl Configuration {
    pub fn empty(window: Window) -> Self {
        Self::from_occupations(window, vec![0; window.len()]).expect("sizes match")
    }

    pub fn from_occupations(window: Window, occupations: Vec<u32>) -> Result<Self> {
        if occupations.len() != window.len() {
            return Err(Error::WindowMismatch(format!(
                "{} occupations for a window of {} sites",
                occupations.len(),
                window.len()
            )));
        }
        Ok(Self {
            window,
            occupations,
            destroyed: 0,
            exited_left: 0,
            exited_right: 0,
        })
    }

    /// Occupation at site `x`, zero outside the window.
    pub fn at(&self, x: i64) -> u32 {
        self.window.index(x).map_or(0, |i| self.occupations[i])
    }

    pub fn mass(&self) -> u64 {
        self.occupations.iter().map(|&k| u64::from(k)).sum()
    }

    pub fn exited(&self) -> u64 {
        self.exited_left + self.exited_right
    }

    /// Mass in the window plus everything destroyed or exited.
    pub fn accounted_mass(&self) -> u64 {
        self.mass() + self.destroyed + self.exited()
    }

    pub fn max_occupation(&self) -> u32 {
        self.occupations.iter().copied().max().unwrap_or(0)
    }

    /// Block sum `sum_{|y - x| <= ell} omega_y`, sites outside the window
    /// counted as empty.
    pub fn block_sum(&self, x: i64, ell: u32) -> u64 {
        let ell = i64::from(ell);
        (x - ell..=x + ell).map(|y| u64::from(self.at(y))).sum()
    }

    /// Block sums for every site of the window, by a sliding window.
    pub fn block_sums(&self, ell: u32) -> Vec<u64> {
        let n = self.occupations.len();
        let ell = ell as usize;
        let mut prefix = vec![0u64; n + 1];
        for (i, &k) in self.occupations.iter().enumerate() {
            prefix[i + 1] = prefix[i] + u64::from(k);
        }
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(ell);
                let hi = (i + ell + 1).min(n);
                prefix[hi] - prefix[lo]
            })
            .collect()
    }
}

/// Independent Poisson(`rho0(x / N)`) occupations on the window.
pub fn build_initial(rho0: &Rho0, params: &ModelParams, window: Window, rng: &mut Stream) -> Result<Configuration> {
    let rho_max = rho0.max_value();
    if !rho_max.is_finite() {
        return Err(Error::InvalidParams("initial profile must be bounded".into()));
    }
    if let Some((a, b)) = rho0.support() {
        let (lo, hi) = window.image(params.n);
        let slack = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        // Compactly supported data must fit; data with unbounded support is
        // truncated to the window by construction.
        if a.is_finite() && b.is_finite() && (a < lo - slack || b > hi + slack) {
            return Err(Error::WindowMismatch(format!(
                "profile support [{a}, {b}] exceeds window image [{lo}, {hi}]"
            )));
        }
    }
    let n = params.scale();
    let mut occ = Vec::with_capacity(window.len());
    for i in 0..window.len() {
        let lambda = rho0.value(window.site(i) as f64 / n);
        let k = if lambda > 0.0 {
            let d = Poisson::new(lambda).map_err(|e| Error::InvalidParams(e.to_string()))?;
            d.sample(rng) as u32
        } else {
            0
        };
        occ.push(k);
    }
    Configuration::from_occupations(window, occ)
}

/// Window whose image covers the support, the drift over `[0, t_end]`, and a
/// margin on both sides.
pub fn choose_window(support: (f64, f64), params: &ModelParams, t_end: f64, margin: f64) -> Result<Window> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParams(format!("margin = {margin} must be positive")));
    }
    let n = params.scale();
    let lo = (support.0 - margin) * n;
    let hi = (support.1 + params.drift() * t_end.max(0.0) + margin) * n;
    Window::new((lo + 1e-9).floor() as i64, (hi - 1e-9).ceil() as i64)
}

/// Block-averaged field: site `x` contributes the cell `[x/N, (x+1)/N)` with
/// value `omega^ell_x`.
pub fn empirical_density(config: &Configuration, params: &ModelParams, ell: u32) -> Result<DensityProfile> {
    let width = 2 * ell as usize + 1;
    if width > config.window.len() {
        return Err(Error::InvalidParams(format!(
            "block of {width} sites exceeds window of {}",
            config.window.len()
        )));
    }
    let values = config
        .block_sums(ell)
        .into_iter()
        .map(|s| s as f64 / width as f64)
        .collect();
    let (lo, _) = config.window.image(params.n);
    DensityProfile::new(lo, 1.0 / params.scale(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub boundary: Boundary,
    /// Maximal exited fraction of the initial mass before the run is
    /// rejected; `None` disables the guard.
    pub leakage_fraction: Option<f64>,
    pub max_events: u64,
    /// Destroy particles the moment they land on the origin.
    pub instant_kill: bool,
    /// Conservation check and sum-tree rebuild cadence, in events.
    pub check_every: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            boundary: Boundary::Open,
            leakage_fraction: Some(1e-3),
            max_events: 20_000_000_000,
            instant_kill: false,
            check_every: 100_000,
        }
    }
}

impl EngineOptions {
    pub fn closed() -> Self {
        Self {
            boundary: Boundary::Closed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t_end: f64,
    pub events: u64,
    pub initial_mass: u64,
    pub final_mass: u64,
    pub destroyed: u64,
    pub exited_left: u64,
    pub exited_right: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// What one event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Jump { from: i64, to: i64 },
    Exit { from: i64, to: i64 },
    Suppressed { from: i64 },
    Destroyed { at: i64 },
}

/// Draw shared by every engine so coupled processes consume randomness in
/// the same order as the single one.
pub(crate) fn exp_wait(rng: &mut Stream, total: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / total
}

pub(crate) fn pick_site(rng: &mut Stream, tree: &SumTree) -> usize {
    loop {
        let u: f64 = rng.random();
        if let Some(i) = tree.find(u * tree.total()) {
            return i;
        }
    }
}

pub struct EventEngine {
    config: Configuration,
    params: ModelParams,
    rate: RateFunction,
    options: EngineOptions,
    tree: SumTree,
    origin: Option<usize>,
    origin_factor: f64,
    kill_probability: f64,
    time: f64,
    events: u64,
    initial_mass: u64,
    rng: Stream,
}

impl EventEngine {
    pub fn new(
        mut config: Configuration,
        params: ModelParams,
        rate: RateFunction,
        options: EngineOptions,
        rng: Stream,
    ) -> Result<Self> {
        let origin = config.window.index(0);
        if options.instant_kill && params.alpha > 0.0 {
            if let Some(i) = origin {
                config.destroyed += u64::from(config.occupations[i]);
                config.occupations[i] = 0;
            }
        }
        let initial_mass = config.accounted_mass();
        let mut engine = Self {
            tree: SumTree::new(vec![0.0; config.window.len()]),
            origin,
            origin_factor: 1.0 + params.kill_factor(),
            kill_probability: params.kill_probability(),
            config,
            params,
            rate,
            options,
            time: 0.0,
            events: 0,
            initial_mass,
            rng,
        };
        engine.rebuild();
        Ok(engine)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn into_parts(self) -> (Configuration, Stream) {
        (self.config, self.rng)
    }

    fn site_rate(&self, i: usize) -> f64 {
        let base = self.params.scale() * self.rate.g(self.config.occupations[i]);
        if Some(i) == self.origin && !self.options.instant_kill {
            base * self.origin_factor
        } else {
            base
        }
    }

    fn rebuild(&mut self) {
        let rates = (0..self.config.window.len()).map(|i| self.site_rate(i)).collect();
        self.tree = SumTree::new(rates);
    }

    /// Largest relative gap between the sum tree and rates recomputed from
    /// scratch.
    pub fn check_rates(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.config.window.len() {
            let exact = self.site_rate(i);
            let gap = (self.tree.get(i) - exact).abs() / exact.max(1.0);
            worst = worst.max(gap);
        }
        worst.max(self.tree.drift())
    }

    fn refresh(&mut self, i: usize) {
        let r = self.site_rate(i);
        self.tree.set(i, r);
    }

    /// Performs one event if it happens before `t_end`; otherwise moves the
    /// clock to `t_end` and returns `None`.
    pub fn step(&mut self, t_end: f64) -> Result<Option<Move>> {
        let total = self.tree.total();
        if total <= 0.0 {
            self.time = t_end;
            return Ok(None);
        }
        let dt = exp_wait(&mut self.rng, total);
        if self.time + dt > t_end {
            self.time = t_end;
            return Ok(None);
        }
        if self.events >= self.options.max_events {
            return Err(Error::EventBudget(self.options.max_events));
        }
        self.time += dt;
        let i = pick_site(&mut self.rng, &self.tree);
        let x = self.config.window.site(i);
        let at_origin = Some(i) == self.origin;
        let mv = if at_origin
            && !self.options.instant_kill
            && self.kill_probability > 0.0
            && self.rng.random::<f64>() < self.kill_probability
        {
            Move::Destroyed { at: x }
        } else {
            let to = if self.rng.random::<f64>() < self.params.p { x + 1 } else { x - 1 };
            match self.config.window.index(to) {
                Some(_) => Move::Jump { from: x, to },
                None if self.options.boundary == Boundary::Closed => Move::Suppressed { from: x },
                None => Move::Exit { from: x, to },
            }
        };
        self.apply(i, mv)?;
        self.events += 1;
        if self.events % self.options.check_every == 0 {
            self.periodic_check()?;
        }
        Ok(Some(mv))
    }

    fn apply(&mut self, i: usize, mv: Move) -> Result<()> {
        match mv {
            Move::Suppressed { .. } => return Ok(()),
            Move::Destroyed { .. } => {
                self.config.occupations[i] -= 1;
                self.config.destroyed += 1;
            }
            Move::Exit { to, .. } => {
                self.config.occupations[i] -= 1;
                if to < self.config.window.x_min {
                    self.config.exited_left += 1;
                } else {
                    self.config.exited_right += 1;
                }
                self.check_leakage()?;
            }
            Move::Jump { to, .. } => {
                self.config.occupations[i] -= 1;
                let j = self.config.window.index(to).expect("jump inside window");
                if self.options.instant_kill && Some(j) == self.origin && self.params.alpha > 0.0 {
                    self.config.destroyed += 1;
                } else {
                    self.config.occupations[j] += 1;
                    self.refresh(j);
                }
            }
        }
        self.refresh(i);
        Ok(())
    }

    fn check_leakage(&self) -> Result<()> {
        if let Some(frac) = self.options.leakage_fraction {
            let limit = frac * self.initial_mass as f64;
            if self.config.exited() as f64 > limit {
                return Err(Error::Leakage {
                    exited: self.config.exited(),
                    limit,
                });
            }
        }
        Ok(())
    }

    fn periodic_check(&mut self) -> Result<()> {
        assert_eq!(
            self.config.accounted_mass(),
            self.initial_mass,
            "particle bookkeeping broken"
        );
        self.rebuild();
        Ok(())
    }

    /// Runs to exactly `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.step(t_end)?.is_some() {}
        Ok(())
    }

    /// Runs to `t_end`, calling `observer` at each requested time in
    /// `[now, t_end]` (in increasing order).
    pub fn run<F>(&mut self, t_end: f64, observe_at: &[f64], mut observer: F) -> Result<TrajectoryRecord>
    where
        F: FnMut(f64, &Configuration),
    {
        if !(t_end >= self.time) {
            return Err(Error::InvalidParams(format!(
                "t_end = {t_end} is before the current time {}",
                self.time
            )));
        }
        let start = Instant::now();
        let events0 = self.events;
        for &t in observe_at {
            if t < self.time || t > t_end {
                continue;
            }
            self.advance_to(t)?;
            observer(t, &self.config);
        }
        self.advance_to(t_end)?;
        assert_eq!(self.config.accounted_mass(), self.initial_mass);
        Ok(TrajectoryRecord {
            t_end,
            events: self.events - events0,
            initial_mass: self.initial_mass,
            final_mass: self.config.mass(),
            destroyed: self.config.destroyed,
            exited_left: self.config.exited_left,
            exited_right: self.config.exited_right,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Evenly spaced times `0, dt, 2 dt, ..` up to and including `t_end`.
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt).round() as usize;
    (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect()
}
