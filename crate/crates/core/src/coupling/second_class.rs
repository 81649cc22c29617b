//! The `(omega, zeta)` process: destroyed particles become second-class
//! instead of disappearing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fenwick::SumTree;
use crate::rate::RateFunction;
use crate::rng::Stream;
use crate::sim::{exp_wait, pick_site, Boundary, Configuration, EngineOptions, ModelParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecondClassState {
    pub omega: Configuration,
    pub zeta: Configuration,
    /// Conversions at the origin so far (`K_t` on the infinite lattice).
    pub conversions: u64,
}

impl SecondClassState {
    /// `sum_x zeta_x`, including second-class particles that left the window.
    pub fn k_t(&self) -> u64 {
        self.zeta.mass() + self.zeta.exited()
    }

    pub fn pair_mass(&self) -> u64 {
        self.omega.mass() + self.zeta.mass()
    }
}

/// `N^{-1} sum_{x <= 0} zeta_x`.
pub fn second_class_left_mass(state: &SecondClassState, n: u32) -> f64 {
    let w = state.zeta.window;
    let left: u64 = (w.x_min..=w.x_max.min(0)).map(|x| u64::from(state.zeta.at(x))).sum();
    (left + state.zeta.exited_left) as f64 / f64::from(n)
}

pub struct SecondClassEngine {
    state: SecondClassState,
    params: ModelParams,
    rate: RateFunction,
    options: EngineOptions,
    tree: SumTree,
    origin: Option<usize>,
    conversion_rate: f64,
    initial_mass: u64,
    time: f64,
    events: u64,
    rng: Stream,
}

impl SecondClassEngine {
    pub fn new(
        initial: Configuration,
        params: ModelParams,
        rate: RateFunction,
        options: EngineOptions,
        rng: Stream,
    ) -> Result<Self> {
        if options.instant_kill {
            return Err(Error::InvalidParams("the pair process has no instant-kill mode".into()));
        }
        let zeta = Configuration::empty(initial.window);
        let origin = initial.window.index(0);
        let initial_mass = initial.accounted_mass();
        let mut e = Self {
            tree: SumTree::new(vec![0.0; initial.window.len()]),
            state: SecondClassState {
                omega: initial,
                zeta,
                conversions: 0,
            },
            origin,
            conversion_rate: params.scale() * params.kill_factor(),
            params,
            rate,
            options,
            initial_mass,
            time: 0.0,
            events: 0,
            rng,
        };
        let rates = (0..e.state.omega.window.len()).map(|i| e.site_rate(i)).collect();
        e.tree = SumTree::new(rates);
        Ok(e)
    }

    pub fn state(&self) -> &SecondClassState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn site_rate(&self, i: usize) -> f64 {
        let w = self.state.omega.occupations[i];
        let z = self.state.zeta.occupations[i];
        let mut r = self.params.scale() * self.rate.g(w + z);
        if Some(i) == self.origin {
            r += self.conversion_rate * self.rate.g(w);
        }
        r
    }

    fn refresh(&mut self, i: usize) {
        let r = self.site_rate(i);
        self.tree.set(i, r);
    }

    /// Moves one particle of `cfg` from index `i` in direction `to`.
    fn transfer(cfg: &mut Configuration, boundary: Boundary, i: usize, to: i64) -> Option<usize> {
        match cfg.window.index(to) {
            Some(j) => {
                cfg.occupations[i] -= 1;
                cfg.occupations[j] += 1;
                Some(j)
            }
            None if boundary == Boundary::Closed => None,
            None => {
                cfg.occupations[i] -= 1;
                if to < cfg.window.x_min {
                    cfg.exited_left += 1;
                } else {
                    cfg.exited_right += 1;
                }
                None
            }
        }
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
        let x = self.state.omega.window.site(i);
        let w = self.state.omega.occupations[i];
        let z = self.state.zeta.occupations[i];
        let n = self.params.scale();
        let g_w = self.rate.g(w);
        let g_wz = self.rate.g(w + z);
        if g_wz < g_w {
            return Err(Error::NonMonotone(w));
        }
        let u = self.rng.random::<f64>() * self.tree.get(i);
        if u >= n * g_wz {
            // Conversion at the origin.
            self.state.omega.occupations[i] -= 1;
            self.state.zeta.occupations[i] += 1;
            self.state.conversions += 1;
        } else {
            let to = if self.rng.random::<f64>() < self.params.p { x + 1 } else { x - 1 };
            let cfg = if u < n * g_w {
                &mut self.state.omega
            } else {
                &mut self.state.zeta
            };
            if let Some(j) = Self::transfer(cfg, self.options.boundary, i, to) {
                self.refresh(j);
            }
            self.check_leakage()?;
        }
        self.refresh(i);
        self.events += 1;
        if self.events % self.options.check_every == 0 {
            let accounted = self.state.omega.accounted_mass() + self.state.zeta.accounted_mass();
            assert_eq!(accounted, self.initial_mass, "pair bookkeeping broken");
            let rates = (0..self.state.omega.window.len()).map(|k| self.site_rate(k)).collect();
            self.tree = SumTree::new(rates);
        }
        Ok(true)
    }

    fn check_leakage(&self) -> Result<()> {
        if let Some(frac) = self.options.leakage_fraction {
            let exited = self.state.omega.exited() + self.state.zeta.exited();
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

    pub fn run<F>(&mut self, t_end: f64, observe_at: &[f64], mut observer: F) -> Result<()>
    where
        F: FnMut(f64, &SecondClassState),
    {
        for &t in observe_at {
            if t < self.time || t > t_end {
                continue;
            }
            self.advance_to(t)?;
            observer(t, &self.state);
        }
        self.advance_to(t_end)
    }
}

/// Runs the pair process from `initial` (with no second-class particles) to
/// `t_end` and returns the final state.
pub fn run_second_class<F>(
    initial: Configuration,
    params: ModelParams,
    rate: &RateFunction,
    options: EngineOptions,
    t_end: f64,
    observe_at: &[f64],
    observer: F,
    rng: Stream,
) -> Result<SecondClassState>
where
    F: FnMut(f64, &SecondClassState),
{
    let mut e = SecondClassEngine::new(initial, params, rate.clone(), options, rng)?;
    e.run(t_end, observe_at, observer)?;
    Ok(e.state)
}
