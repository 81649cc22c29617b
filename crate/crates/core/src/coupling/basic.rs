//! Basic coupling of two copies of the destruction process: shared moves at
//! the minimum rate, solo moves of the larger copy at the rate difference.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fenwick::SumTree;
use crate::rate::RateFunction;
use crate::rng::Stream;
use crate::sim::{exp_wait, pick_site, Boundary, Configuration, EngineOptions, ModelParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairConfiguration {
    pub omega: Configuration,
    pub varpi: Configuration,
}

impl PairConfiguration {
    pub fn new(omega: Configuration, varpi: Configuration) -> Result<Self> {
        if omega.window != varpi.window {
            return Err(Error::WindowMismatch("coupled copies live on different windows".into()));
        }
        Ok(Self { omega, varpi })
    }

    /// `omega <= varpi` at every site.
    pub fn is_ordered(&self) -> bool {
        self.omega
            .occupations
            .iter()
            .zip(&self.varpi.occupations)
            .all(|(a, b)| a <= b)
    }
}

/// Which copies act in a coupled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actors {
    Both,
    Omega,
    Varpi,
}

pub struct BasicCouplingEngine {
    pair: PairConfiguration,
    params: ModelParams,
    rate: RateFunction,
    options: EngineOptions,
    tree: SumTree,
    origin: Option<usize>,
    origin_factor: f64,
    kill_probability: f64,
    initial_mass: (u64, u64),
    track_order: bool,
    violations: u64,
    time: f64,
    events: u64,
    rng: Stream,
}

impl BasicCouplingEngine {
    pub fn new(
        pair: PairConfiguration,
        params: ModelParams,
        rate: RateFunction,
        options: EngineOptions,
        rng: Stream,
    ) -> Result<Self> {
        if options.instant_kill {
            return Err(Error::InvalidParams("the basic coupling has no instant-kill mode".into()));
        }
        let origin = pair.omega.window.index(0);
        let initial_mass = (pair.omega.accounted_mass(), pair.varpi.accounted_mass());
        let track_order = pair.is_ordered();
        let mut e = Self {
            tree: SumTree::new(Vec::new()),
            origin,
            origin_factor: 1.0 + params.kill_factor(),
            kill_probability: params.kill_probability(),
            pair,
            params,
            rate,
            options,
            initial_mass,
            track_order,
            violations: 0,
            time: 0.0,
            events: 0,
            rng,
        };
        e.rebuild();
        Ok(e)
    }

    pub fn pair(&self) -> &PairConfiguration {
        &self.pair
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Events after which `omega <= varpi` failed somewhere (only tracked
    /// when the pair started ordered).
    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn into_pair(self) -> PairConfiguration {
        self.pair
    }

    fn factor(&self, i: usize) -> f64 {
        if Some(i) == self.origin {
            self.origin_factor
        } else {
            1.0
        }
    }

    fn site_rate(&self, i: usize) -> f64 {
        let g = self
            .rate
            .g(self.pair.omega.occupations[i])
            .max(self.rate.g(self.pair.varpi.occupations[i]));
        self.params.scale() * g * self.factor(i)
    }

    fn rebuild(&mut self) {
        let rates = (0..self.pair.omega.window.len()).map(|i| self.site_rate(i)).collect();
        self.tree = SumTree::new(rates);
    }

    fn refresh(&mut self, i: usize) {
        let r = self.site_rate(i);
        self.tree.set(i, r);
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
        let x = self.pair.omega.window.site(i);
        let g_w = self.rate.g(self.pair.omega.occupations[i]);
        let g_v = self.rate.g(self.pair.varpi.occupations[i]);
        let (lo, hi) = (g_w.min(g_v), g_w.max(g_v));
        // The channel draw is skipped when there is no solo rate, so equal
        // copies consume exactly the single engine's random numbers.
        let actors = if hi > lo && self.rng.random::<f64>() * hi >= lo {
            if g_w > g_v {
                Actors::Omega
            } else {
                Actors::Varpi
            }
        } else {
            Actors::Both
        };
        let destroy = Some(i) == self.origin
            && self.kill_probability > 0.0
            && self.rng.random::<f64>() < self.kill_probability;
        let to = if destroy {
            None
        } else if self.rng.random::<f64>() < self.params.p {
            Some(x + 1)
        } else {
            Some(x - 1)
        };
        let boundary = self.options.boundary;
        let mut dest = None;
        if actors != Actors::Varpi {
            dest = apply(&mut self.pair.omega, boundary, i, to);
        }
        if actors != Actors::Omega {
            dest = apply(&mut self.pair.varpi, boundary, i, to);
        }
        if let Some(j) = dest {
            self.refresh(j);
        }
        self.check_leakage()?;
        self.refresh(i);
        if self.track_order {
            let bad = |k: usize| self.pair.omega.occupations[k] > self.pair.varpi.occupations[k];
            if bad(i) || dest.is_some_and(bad) {
                self.violations += 1;
            }
        }
        self.events += 1;
        if self.events % self.options.check_every == 0 {
            assert_eq!(
                (self.pair.omega.accounted_mass(), self.pair.varpi.accounted_mass()),
                self.initial_mass,
                "coupled bookkeeping broken"
            );
            self.rebuild();
        }
        Ok(true)
    }

    fn check_leakage(&self) -> Result<()> {
        if let Some(frac) = self.options.leakage_fraction {
            for (cfg, m0) in [(&self.pair.omega, self.initial_mass.0), (&self.pair.varpi, self.initial_mass.1)] {
                let limit = frac * m0 as f64;
                if cfg.exited() as f64 > limit {
                    return Err(Error::Leakage {
                        exited: cfg.exited(),
                        limit,
                    });
                }
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
        F: FnMut(f64, &PairConfiguration),
    {
        for &t in observe_at {
            if t < self.time || t > t_end {
                continue;
            }
            self.advance_to(t)?;
            observer(t, &self.pair);
        }
        self.advance_to(t_end)
    }
}

/// Applies one move to one copy; returns the destination index when a
/// particle landed inside the window.
fn apply(cfg: &mut Configuration, boundary: Boundary, i: usize, to: Option<i64>) -> Option<usize> {
    match to {
        None => {
            cfg.occupations[i] -= 1;
            cfg.destroyed += 1;
            None
        }
        Some(y) => match cfg.window.index(y) {
            Some(j) => {
                cfg.occupations[i] -= 1;
                cfg.occupations[j] += 1;
                Some(j)
            }
            None if boundary == Boundary::Closed => None,
            None => {
                cfg.occupations[i] -= 1;
                if y < cfg.window.x_min {
                    cfg.exited_left += 1;
                } else {
                    cfg.exited_right += 1;
                }
                None
            }
        },
    }
}

/// Runs the basic coupling and returns the final pair with the number of
/// order violations observed.
pub fn run_basic_coupling<F>(
    pair: PairConfiguration,
    params: ModelParams,
    rate: &RateFunction,
    options: EngineOptions,
    t_end: f64,
    observe_at: &[f64],
    observer: F,
    rng: Stream,
) -> Result<(PairConfiguration, u64)>
where
    F: FnMut(f64, &PairConfiguration),
{
    let mut e = BasicCouplingEngine::new(pair, params, rate.clone(), options, rng)?;
    e.run(t_end, observe_at, observer)?;
    let v = e.violations();
    Ok((e.into_pair(), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Rho0;
    use crate::rng::replica_stream;
    use crate::sim::{build_initial, EventEngine, Window};

    #[test]
    fn equal_copies_reproduce_single_engine() {
        let params = ModelParams::new(0.7, 0.8, 0.3, 40).unwrap();
        let rate = RateFunction::parse("table:0,1,1.7,2.1@0.3").unwrap();
        let w = Window::new(-70, 90).unwrap();
        let mut rng = replica_stream(21, 3);
        let c = build_initial(&Rho0::parse("-1:0.5:1.2").unwrap(), &params, w, &mut rng).unwrap();
        let opts = EngineOptions {
            check_every: 500,
            ..EngineOptions::default()
        };
        let times = crate::sim::time_grid(1.0, 0.1);

        let mut single = EventEngine::new(c.clone(), params, rate.clone(), opts, rng.clone()).unwrap();
        let mut snaps = Vec::new();
        single.run(1.0, &times, |_, s| snaps.push(s.clone())).unwrap();

        let pair = PairConfiguration::new(c.clone(), c).unwrap();
        let mut coupled = BasicCouplingEngine::new(pair, params, rate, opts, rng).unwrap();
        let mut k = 0;
        coupled
            .run(1.0, &times, |_, p| {
                assert_eq!(p.omega, p.varpi);
                assert_eq!(p.omega, snaps[k]);
                k += 1;
            })
            .unwrap();
        assert_eq!(coupled.events(), single.events());
        assert_eq!(&coupled.pair().omega, single.config());
    }

    #[test]
    fn ordered_pairs_stay_ordered() {
        let params = ModelParams::new(0.75, 1.0, 0.0, 50).unwrap();
        let rate = RateFunction::parse("table:0,1,1.5,1.75,1.875@0").unwrap();
        let w = Window::new(-100, 150).unwrap();
        let mut rng = replica_stream(5, 0);
        let lo = build_initial(&Rho0::parse("-1:0:0.5").unwrap(), &params, w, &mut rng).unwrap();
        let extra = build_initial(&Rho0::parse("-1.5:1:1").unwrap(), &params, w, &mut rng).unwrap();
        let hi_occ = lo.occupations.iter().zip(&extra.occupations).map(|(a, b)| a + b).collect();
        let hi = Configuration::from_occupations(w, hi_occ).unwrap();
        let pair = PairConfiguration::new(lo, hi).unwrap();
        assert!(pair.is_ordered());
        let (end, violations) = run_basic_coupling(
            pair,
            params,
            &rate,
            EngineOptions::closed(),
            1.0,
            &[],
            |_, _| {},
            rng,
        )
        .unwrap();
        assert_eq!(violations, 0);
        assert!(end.is_ordered());
    }

    #[test]
    fn mismatched_windows_rejected() {
        let a = Configuration::empty(Window::new(0, 3).unwrap());
        let b = Configuration::empty(Window::new(0, 4).unwrap());
        assert!(PairConfiguration::new(a, b).is_err());
    }
}
