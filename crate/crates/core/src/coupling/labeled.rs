//! Coupling of the instant-kill process `eta` with the `beta = 1/2` process
//! `omega` through labeled particle pairs.
//!
//! Labels are exchangeable within a site, so the state keeps counts only:
//! `coupled[x]` pairs `(Y, Z)` sharing site `x`, and `loose[x]` uncoupled
//! `Z`-particles (whose `Y` died at the origin). Then `eta = coupled` and
//! `omega = coupled + loose`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fenwick::SumTree;
use crate::rate::RateFunction;
use crate::rng::Stream;
use crate::sim::{exp_wait, pick_site, Boundary, Configuration, EngineOptions, ModelParams, Window};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledOutcome {
    /// `sum_x |eta_x - omega_x|`, counting uncoupled `Z`s that left the window.
    pub discrepancy: u64,
    pub y_deaths: u64,
    pub z_deaths: u64,
    pub events: u64,
}

pub struct LabeledCoupling {
    window: Window,
    coupled: Vec<u32>,
    loose: Vec<u32>,
    loose_exited: u64,
    coupled_exited: u64,
    y_deaths: u64,
    z_deaths: u64,
    params: ModelParams,
    rate: RateFunction,
    options: EngineOptions,
    tree: SumTree,
    origin: Option<usize>,
    /// `alpha N^{1/2}`; zero disables every origin effect.
    a_half: f64,
    initial_mass: u64,
    time: f64,
    events: u64,
    rng: Stream,
}

impl LabeledCoupling {
    /// `params.beta` is only checked to be at least 1: the `omega` copy of
    /// this coupling always runs with exponent `1/2`.
    pub fn new(
        initial: Configuration,
        params: ModelParams,
        rate: RateFunction,
        options: EngineOptions,
        rng: Stream,
    ) -> Result<Self> {
        if params.beta < 1.0 {
            return Err(Error::InvalidParams(format!(
                "labeled coupling needs beta >= 1, got {}",
                params.beta
            )));
        }
        let window = initial.window;
        let origin = window.index(0);
        let a_half = params.alpha * params.scale().sqrt();
        let initial_mass = initial.mass();
        let mut coupled = initial.occupations;
        let mut loose = vec![0; window.len()];
        let mut y_deaths = 0;
        if let (Some(i), true) = (origin, a_half > 0.0) {
            // Y-particles die the instant they sit at the origin.
            y_deaths = u64::from(coupled[i]);
            loose[i] = coupled[i];
            coupled[i] = 0;
        }
        let mut e = Self {
            window,
            coupled,
            loose,
            loose_exited: 0,
            coupled_exited: 0,
            y_deaths,
            z_deaths: 0,
            params,
            rate,
            options,
            tree: SumTree::new(Vec::new()),
            origin,
            a_half,
            initial_mass,
            time: 0.0,
            events: 0,
            rng,
        };
        e.rebuild();
        Ok(e)
    }

    pub fn eta(&self) -> &[u32] {
        &self.coupled
    }

    pub fn omega(&self) -> Vec<u32> {
        self.coupled.iter().zip(&self.loose).map(|(a, b)| a + b).collect()
    }

    pub fn discrepancy(&self) -> u64 {
        self.loose.iter().map(|&k| u64::from(k)).sum::<u64>() + self.loose_exited
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn is_kill_site(&self, i: usize) -> bool {
        Some(i) == self.origin && self.a_half > 0.0
    }

    fn site_rate(&self, i: usize) -> f64 {
        let n = self.params.scale();
        let omega = self.coupled[i] + self.loose[i];
        if self.is_kill_site(i) {
            n * (1.0 + self.a_half) * self.rate.g(omega)
        } else {
            n * self.rate.g(omega)
        }
    }

    fn rebuild(&mut self) {
        let rates = (0..self.window.len()).map(|i| self.site_rate(i)).collect();
        self.tree = SumTree::new(rates);
    }

    fn refresh(&mut self, i: usize) {
        let r = self.site_rate(i);
        self.tree.set(i, r);
    }

    fn accounted(&self) -> u64 {
        let inside: u64 = self.omega().iter().map(|&k| u64::from(k)).sum();
        inside + self.loose_exited + self.coupled_exited + self.z_deaths
    }

    pub fn step(&mut self, t_end: f64) -> Result<bool> {
        let total = self.tree.total();
        if total <= 0.0 {
            self.time = t_end;
            return Ok(false);
        }
        let dt = exp_wait(&mut self.rng, total);
        if self.time + dt > t_end {
            self.time = t_end;
            return Ok(false);
        }
        if self.events >= self.options.max_events {
            return Err(Error::EventBudget(self.options.max_events));
        }
        self.time += dt;
        let i = pick_site(&mut self.rng, &self.tree);
        let x = self.window.site(i);
        if self.is_kill_site(i) {
            // Only uncoupled Z-particles can sit at the origin.
            let death = self.a_half / (1.0 + self.a_half);
            if self.rng.random::<f64>() < death {
                self.loose[i] -= 1;
                self.z_deaths += 1;
            } else {
                let to = self.direction(x);
                self.move_loose(i, to)?;
            }
        } else {
            let n = self.params.scale();
            let eta = self.coupled[i];
            let g_eta = self.rate.g(eta);
            let g_omega = self.rate.g(eta + self.loose[i]);
            if g_omega < g_eta {
                return Err(Error::NonMonotone(eta));
            }
            let u = self.rng.random::<f64>() * n * g_omega;
            let to = self.direction(x);
            if u < n * g_eta {
                self.move_pair(i, to)?;
            } else {
                self.move_loose(i, to)?;
            }
        }
        self.refresh(i);
        self.events += 1;
        if self.events % self.options.check_every == 0 {
            assert_eq!(self.accounted(), self.initial_mass, "labeled bookkeeping broken");
            self.rebuild();
        }
        Ok(true)
    }

    fn direction(&mut self, x: i64) -> i64 {
        if self.rng.random::<f64>() < self.params.p {
            x + 1
        } else {
            x - 1
        }
    }

    fn move_pair(&mut self, i: usize, to: i64) -> Result<()> {
        match self.window.index(to) {
            Some(j) => {
                self.coupled[i] -= 1;
                if self.is_kill_site(j) {
                    self.loose[j] += 1;
                    self.y_deaths += 1;
                } else {
                    self.coupled[j] += 1;
                }
                self.refresh(j);
            }
            None if self.options.boundary == Boundary::Closed => {}
            None => {
                self.coupled[i] -= 1;
                self.coupled_exited += 1;
                self.check_leakage()?;
            }
        }
        Ok(())
    }

    fn move_loose(&mut self, i: usize, to: i64) -> Result<()> {
        match self.window.index(to) {
            Some(j) => {
                self.loose[i] -= 1;
                self.loose[j] += 1;
                self.refresh(j);
            }
            None if self.options.boundary == Boundary::Closed => {}
            None => {
                self.loose[i] -= 1;
                self.loose_exited += 1;
                self.check_leakage()?;
            }
        }
        Ok(())
    }

    fn check_leakage(&self) -> Result<()> {
        if let Some(frac) = self.options.leakage_fraction {
            let exited = self.loose_exited + self.coupled_exited;
            let limit = frac * self.initial_mass as f64;
            if exited as f64 > limit {
                return Err(Error::Leakage { exited, limit });
            }
        }
        Ok(())
    }

    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.step(t_end)? {}
        Ok(())
    }

    pub fn outcome(&self) -> LabeledOutcome {
        LabeledOutcome {
            discrepancy: self.discrepancy(),
            y_deaths: self.y_deaths,
            z_deaths: self.z_deaths,
            events: self.events,
        }
    }
}

/// Runs the labeled coupling from `eta(0) = omega(0) = initial`.
pub fn run_labeled_coupling(
    initial: Configuration,
    params: ModelParams,
    rate: &RateFunction,
    options: EngineOptions,
    t_end: f64,
    rng: Stream,
) -> Result<LabeledOutcome> {
    let mut e = LabeledCoupling::new(initial, params, rate.clone(), options, rng)?;
    e.advance_to(t_end)?;
    Ok(e.outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Rho0;
    use crate::rng::replica_stream;
    use crate::sim::build_initial;

    fn initial(params: &ModelParams, seed: u64) -> (Configuration, Stream) {
        let w = Window::new(-2 * params.n as i64, 2 * params.n as i64).unwrap();
        let mut rng = replica_stream(seed, 0);
        let c = build_initial(&Rho0::parse("-1:0:1").unwrap(), params, w, &mut rng).unwrap();
        (c, rng)
    }

    #[test]
    fn no_alpha_no_discrepancy() {
        let params = ModelParams::new(1.0, 0.0, 1.0, 50).unwrap();
        let (c, rng) = initial(&params, 1);
        let out = run_labeled_coupling(c, params, &RateFunction::linear(), EngineOptions::default(), 1.0, rng).unwrap();
        assert_eq!(out.discrepancy, 0);
        assert_eq!(out.y_deaths, 0);
    }

    #[test]
    fn particles_far_from_origin_never_decouple() {
        let params = ModelParams::new(1.0, 1.0, 2.0, 50).unwrap();
        let w = Window::new(-200, 20).unwrap();
        let mut rng = replica_stream(2, 0);
        let c = build_initial(&Rho0::parse("-4:-3:1").unwrap(), &params, w, &mut rng).unwrap();
        let out = run_labeled_coupling(c, params, &RateFunction::linear(), EngineOptions::default(), 1.0, rng).unwrap();
        assert_eq!(out.discrepancy, 0);
    }

    #[test]
    fn eta_is_dominated_and_origin_has_no_pairs() {
        let params = ModelParams::new(0.75, 1.0, 1.0, 40).unwrap();
        let (c, rng) = initial(&params, 3);
        let opts = EngineOptions {
            check_every: 200,
            ..EngineOptions::default()
        };
        let mut e = LabeledCoupling::new(c, params, RateFunction::linear(), opts, rng).unwrap();
        for _ in 0..20_000 {
            if !e.step(2.0).unwrap() {
                break;
            }
            assert_eq!(e.eta()[e.window.index(0).unwrap()], 0);
        }
        let omega = e.omega();
        assert!(e.eta().iter().zip(&omega).all(|(a, b)| a <= b));
        let out = e.outcome();
        assert!(out.y_deaths > 0);
        assert!(out.discrepancy <= out.y_deaths);
    }

    #[test]
    fn rejects_small_beta() {
        let params = ModelParams::new(0.75, 1.0, 0.5, 40).unwrap();
        let (c, rng) = initial(&params, 4);
        assert!(LabeledCoupling::new(c, params, RateFunction::linear(), EngineOptions::default(), rng).is_err());
    }
}
