//! Equilibrium thermodynamics of the zero-range process: partition function
//! `Z`, density `R` as a function of fugacity, its inverse `Phi` (the mean
//! jump rate at a given density) and sampling of the product-measure
//! marginals.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rate::RateFunction;

/// Relative truncation threshold of the series.
pub const SERIES_TOL: f64 = 1e-12;
/// Term budget before a series is declared divergent.
pub const MAX_TERMS: usize = 10_000;
/// Absolute bisection tolerance on the fugacity.
pub const BISECTION_TOL: f64 = 1e-10;

const GRID_POINTS: usize = 257;

#[derive(Debug, Clone, Copy)]
struct Moments {
    z: f64,
    first: f64,
    second: f64,
}

fn moments(rate: &RateFunction, zeta: f64, tol: f64) -> Result<Moments> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::InvalidParams(format!("fugacity must be finite and >= 0, got {zeta}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let zeta_star = rate.zeta_star();
    if zeta >= zeta_star {
        return Err(Error::Divergence { zeta, zeta_star });
    }
    let mut m = Moments {
        z: 1.0,
        first: 0.0,
        second: 0.0,
    };
    if zeta == 0.0 {
        return Ok(m);
    }
    let mut term = 1.0;
    for k in 1..=MAX_TERMS {
        let gk = rate.g(k as u32);
        term *= zeta / gk;
        let kf = k as f64;
        m.z += term;
        m.first += kf * term;
        m.second += kf * kf * term;
        if !m.z.is_finite() {
            break;
        }
        if zeta < gk && term * (1.0 + kf * kf) < tol * m.z {
            return Ok(m);
        }
    }
    Err(Error::Divergence { zeta, zeta_star })
}

/// `Z(zeta) = sum_k zeta^k / g(k)!`, truncated once the current term drops
/// below `tol` times the partial sum.
pub fn partition_function(rate: &RateFunction, zeta: f64, tol: f64) -> Result<f64> {
    moments(rate, zeta, tol).map(|m| m.z)
}

/// `R(zeta)`, the mean occupation under the fugacity-`zeta` marginal.
pub fn mean_density(rate: &RateFunction, zeta: f64) -> Result<f64> {
    moments(rate, zeta, SERIES_TOL).map(|m| m.first / m.z)
}

/// Variance of the occupation under the fugacity-`zeta` marginal.
pub fn density_variance(rate: &RateFunction, zeta: f64) -> Result<f64> {
    let m = moments(rate, zeta, SERIES_TOL)?;
    let mean = m.first / m.z;
    Ok((m.second / m.z - mean * mean).max(0.0))
}

/// Tabulated `(zeta, Z, R)` samples for one rate function, covering densities
/// in `[0, rho_max]`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ThermoTable {
    rate: RateFunction,
    zeta_star: f64,
    zetas: Vec<f64>,
    partition: Vec<f64>,
    densities: Vec<f64>,
    tolerance: f64,
}

impl ThermoTable {
    pub fn new(rate: RateFunction, rho_max: f64) -> Result<Self> {
        if !(rho_max > 0.0) || !rho_max.is_finite() {
            return Err(Error::InvalidParams(format!("rho_max must be positive, got {rho_max}")));
        }
        let zeta_star = rate.zeta_star();
        let zeta_max = Self::fugacity_covering(&rate, rho_max)?;
        let mut zetas = Vec::with_capacity(GRID_POINTS);
        let mut partition = Vec::with_capacity(GRID_POINTS);
        let mut densities = Vec::with_capacity(GRID_POINTS);
        for i in 0..GRID_POINTS {
            let zeta = zeta_max * i as f64 / (GRID_POINTS - 1) as f64;
            let m = moments(&rate, zeta, SERIES_TOL)?;
            zetas.push(zeta);
            partition.push(m.z);
            densities.push(m.first / m.z);
        }
        if let Some(i) = densities.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidRate(format!(
                "density not strictly increasing near fugacity {}",
                zetas[i + 1]
            )));
        }
        Ok(Self {
            rate,
            zeta_star,
            zetas,
            partition,
            densities,
            tolerance: BISECTION_TOL,
        })
    }

    fn fugacity_covering(rate: &RateFunction, rho_max: f64) -> Result<f64> {
        let zeta_star = rate.zeta_star();
        if zeta_star.is_infinite() {
            let mut hi = 1.0;
            while mean_density(rate, hi)? < rho_max {
                hi *= 2.0;
            }
            return Ok(hi);
        }
        // R blows up at zeta*, so some fugacity below it reaches rho_max.
        let (mut lo, mut hi) = (0.0, zeta_star);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match mean_density(rate, mid) {
                Ok(r) if r < rho_max => lo = mid,
                _ => hi = mid,
            }
        }
        match mean_density(rate, hi) {
            Ok(r) if r >= rho_max => Ok(hi),
            _ => Err(Error::OutOfRange {
                rho: rho_max,
                max: mean_density(rate, lo).unwrap_or(0.0),
            }),
        }
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn zeta_star(&self) -> f64 {
        self.zeta_star
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Largest density covered by the table.
    pub fn rho_max(&self) -> f64 {
        *self.densities.last().unwrap()
    }

    /// Largest fugacity covered by the table.
    pub fn zeta_max(&self) -> f64 {
        *self.zetas.last().unwrap()
    }

    /// The tabulated `(zeta, Z(zeta), R(zeta))` samples.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.zetas
            .iter()
            .zip(&self.partition)
            .zip(&self.densities)
            .map(|((&a, &b), &c)| (a, b, c))
    }

    /// `Phi(rho)`: the fugacity whose density is `rho`, by bisection.
    pub fn phi(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::OutOfRange { rho, max: self.rho_max() });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let max = self.rho_max();
        if rho > max {
            return Err(Error::OutOfRange { rho, max });
        }
        let i = self.densities.partition_point(|&r| r < rho);
        if self.densities[i] == rho {
            return Ok(self.zetas[i]);
        }
        let (mut lo, mut hi) = (self.zetas[i - 1], self.zetas[i]);
        while hi - lo > self.tolerance {
            let mid = 0.5 * (lo + hi);
            if mean_density(&self.rate, mid)? < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `R(zeta)`, the inverse of `phi`.
    pub fn phi_inverse(&self, flux_value: f64) -> Result<f64> {
        mean_density(&self.rate, flux_value)
    }

    /// Draws an occupation from `nu_rho`.
    pub fn sample_marginal<R: Rng + ?Sized>(&self, rho: f64, rng: &mut R) -> Result<u32> {
        let zeta = self.phi(rho)?;
        Ok(MarginalSampler::new(&self.rate, zeta)?.sample(rng))
    }

    /// Draws an occupation from the fugacity-`zeta` marginal.
    pub fn sample_fugacity<R: Rng + ?Sized>(&self, zeta: f64, rng: &mut R) -> Result<u32> {
        Ok(MarginalSampler::new(&self.rate, zeta)?.sample(rng))
    }

    /// `Phi` evaluated on the lattice `k / (2l+1)` of block averages, memoized.
    pub fn block_phi(&self, ell: usize) -> BlockPhi<'_> {
        BlockPhi {
            table: self,
            width: (2 * ell + 1) as f64,
            cache: Vec::new(),
        }
    }
}

/// `Phi` memoized on block averages `k / (2l+1)`.
pub struct BlockPhi<'a> {
    table: &'a ThermoTable,
    width: f64,
    cache: Vec<f64>,
}

impl BlockPhi<'_> {
    /// `Phi(block_sum / (2l+1))`.
    pub fn get(&mut self, block_sum: u64) -> Result<f64> {
        let k = block_sum as usize;
        while self.cache.len() <= k {
            let rho = self.cache.len() as f64 / self.width;
            self.cache.push(self.table.phi(rho)?);
        }
        Ok(self.cache[k])
    }
}

/// Inversion sampler over the truncated pmf `zeta^k / (Z g(k)!)`.
#[derive(Debug, Clone)]
pub struct MarginalSampler {
    cdf: Vec<f64>,
}

impl MarginalSampler {
    pub fn new(rate: &RateFunction, zeta: f64) -> Result<Self> {
        // Validates the fugacity and the convergence of the series.
        moments(rate, zeta, SERIES_TOL)?;
        let mut cdf = vec![1.0];
        if zeta > 0.0 {
            let mut term = 1.0;
            let mut total = 1.0;
            for k in 1..=MAX_TERMS {
                let gk = rate.g(k as u32);
                term *= zeta / gk;
                total += term;
                cdf.push(total);
                if zeta < gk && term < 1e-17 * total {
                    break;
                }
            }
            for c in cdf.iter_mut() {
                *c /= total;
            }
        }
        Ok(Self { cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.cdf.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u32
    }
}
