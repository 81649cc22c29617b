//! Observables of coupled and single configurations.

use crate::error::{Error, Result};
use crate::profile::DensityProfile;
use crate::sim::{Configuration, ModelParams};
use crate::testfn::TestFunction;
use crate::thermo::{BlockPhi, ThermoTable};

use super::basic::PairConfiguration;

/// `1{omega_x < varpi_x, omega_y > varpi_y} + 1{omega_x > varpi_x, omega_y < varpi_y}`.
pub fn ordering_defect(pair: &PairConfiguration, x: i64, y: i64) -> u8 {
    let (wx, vx) = (pair.omega.at(x), pair.varpi.at(x));
    let (wy, vy) = (pair.omega.at(y), pair.varpi.at(y));
    u8::from(wx < vx && wy > vy) + u8::from(wx > vx && wy < vy)
}

fn check_support(h: &dyn TestFunction, config: &Configuration, params: &ModelParams, ell: u32) -> Result<()> {
    let (_, (u0, u1)) = h.support();
    let n = params.scale();
    let lo = (config.window.x_min + i64::from(ell)) as f64 / n;
    let hi = (config.window.x_max - i64::from(ell)) as f64 / n;
    if u0 < lo || u1 > hi {
        return Err(Error::Support(format!(
            "test function support [{u0}, {u1}] leaves the window interior [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Integrand of the microscopic entropy functional at time `t`:
/// `N^{-1} sum_x { H_t |w^l_x - v^l_x| + (2p-1) H_u |Phi(w^l_x) - Phi(v^l_x)| }`.
pub fn micro_entropy_integrand(
    t: f64,
    pair: &PairConfiguration,
    params: &ModelParams,
    ell: u32,
    phi: &mut BlockPhi<'_>,
    h: &dyn TestFunction,
) -> Result<f64> {
    check_support(h, &pair.omega, params, ell)?;
    let ((t0, t1), (u0, u1)) = h.support();
    if t < t0 || t > t1 {
        return Ok(0.0);
    }
    let n = params.scale();
    let width = f64::from(2 * ell + 1);
    let x_lo = (u0 * n).floor() as i64;
    let x_hi = (u1 * n).ceil() as i64;
    let mut acc = 0.0;
    for x in x_lo..=x_hi {
        let u = x as f64 / n;
        let (ht, hu) = (h.dt(t, u), h.du(t, u));
        if ht == 0.0 && hu == 0.0 {
            continue;
        }
        let sw = pair.omega.block_sum(x, ell);
        let sv = pair.varpi.block_sum(x, ell);
        if sw == sv {
            continue;
        }
        let density_gap = (sw as f64 - sv as f64).abs() / width;
        let flux_gap = (phi.get(sw)? - phi.get(sv)?).abs();
        acc += ht * density_gap + params.drift() * hu * flux_gap;
    }
    Ok(acc / n)
}

/// Trapezoid rule over `(t, value)` samples.
pub fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Time integral of [`micro_entropy_integrand`] over pair snapshots.
pub fn micro_entropy_functional(
    snapshots: &[(f64, PairConfiguration)],
    h: &dyn TestFunction,
    ell: u32,
    thermo: &ThermoTable,
    params: &ModelParams,
) -> Result<f64> {
    let mut phi = thermo.block_phi(ell as usize);
    let samples = snapshots
        .iter()
        .map(|(t, pair)| Ok((*t, micro_entropy_integrand(*t, pair, params, ell, &mut phi, h)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&samples))
}

/// `x -> | (2l+1)^{-1} sum_{|y-x|<=l} g(omega_y) - Phi(omega^l_x) |` on the
/// window grid.
pub fn one_block_statistic(
    config: &Configuration,
    params: &ModelParams,
    ell: u32,
    thermo: &ThermoTable,
) -> Result<DensityProfile> {
    if ell < 1 {
        return Err(Error::InvalidParams("block half-width must be at least 1".into()));
    }
    let rate = thermo.rate();
    let g: Vec<f64> = config.occupations.iter().map(|&k| rate.g(k)).collect();
    let sums = config.block_sums(ell);
    let width = 2 * ell as usize + 1;
    let mut g_prefix = vec![0.0; g.len() + 1];
    for (i, v) in g.iter().enumerate() {
        g_prefix[i + 1] = g_prefix[i] + v;
    }
    let mut phi = thermo.block_phi(ell as usize);
    let ell = ell as usize;
    let values = (0..g.len())
        .map(|i| {
            let lo = i.saturating_sub(ell);
            let hi = (i + ell + 1).min(g.len());
            let g_avg = (g_prefix[hi] - g_prefix[lo]) / width as f64;
            Ok((g_avg - phi.get(sums[i])?).abs())
        })
        .collect::<Result<Vec<_>>>()?;
    let (u0, _) = config.window.image(params.n);
    DensityProfile::new(u0, 1.0 / params.scale(), values)
}

/// `<pi^{N,l}, G> = N^{-1} sum_{x > l} G(x/N, omega^l_x)`.
pub fn young_measure_eval<G>(config: &Configuration, params: &ModelParams, ell: u32, g: G) -> Result<f64>
where
    G: Fn(f64, f64) -> f64,
{
    if ell < 1 {
        return Err(Error::InvalidParams("block half-width must be at least 1".into()));
    }
    let n = params.scale();
    let width = f64::from(2 * ell + 1);
    let sums = config.block_sums(ell);
    let first = (i64::from(ell) + 1).max(config.window.x_min);
    let mut acc = 0.0;
    for x in first..=config.window.x_max {
        let i = config.window.index(x).expect("inside window");
        acc += g(x as f64 / n, sums[i] as f64 / width);
    }
    Ok(acc / n)
}
