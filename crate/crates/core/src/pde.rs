//! Finite-volume solver for `d_t rho + (2p-1) d_u Phi(rho) = 0` on the line
//! and half-line, and a quadrature check of the Kruzhkov entropy
//! inequalities.
//!
//! The flux `F = (2p-1) Phi` is non-decreasing, so the Godunov flux at every
//! interface is the upwind value `F(rho_{j-1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{DensityProfile, Rho0};
use crate::rate::RateFunction;
use crate::sim::ModelParams;
use crate::testfn::TestFunction;
use crate::thermo::{mean_density, ThermoTable};

const PHI_TABLE_POINTS: usize = 4096;

#[derive(Debug, Clone)]
enum PhiRepr {
    Identity,
    /// `Phi` at `k h`, linearly interpolated.
    Table { h: f64, values: Vec<f64> },
}

/// `F(rho) = (2p-1) Phi(rho)` with `Phi` tabulated once.
#[derive(Debug, Clone)]
pub struct FluxModel {
    p: f64,
    rate: RateFunction,
    repr: PhiRepr,
    rho_max: f64,
}

impl FluxModel {
    pub fn new(thermo: &ThermoTable, p: f64) -> Result<Self> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::InvalidParams(format!("p = {p} must lie in (1/2, 1]")));
        }
        let rate = thermo.rate().clone();
        let rho_max = thermo.rho_max();
        let repr = if rate.is_linear() {
            PhiRepr::Identity
        } else {
            let h = rho_max / PHI_TABLE_POINTS as f64;
            let values = (0..=PHI_TABLE_POINTS)
                .map(|k| thermo.phi((k as f64 * h).min(rho_max)))
                .collect::<Result<Vec<_>>>()?;
            PhiRepr::Table { h, values }
        };
        Ok(Self { p, rate, repr, rho_max })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn drift(&self) -> f64 {
        2.0 * self.p - 1.0
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Lipschitz constant of `F`, `(2p-1) a0`.
    pub fn lipschitz(&self) -> f64 {
        self.drift() * self.rate.lipschitz()
    }

    pub fn phi(&self, rho: f64) -> f64 {
        match &self.repr {
            PhiRepr::Identity => rho,
            PhiRepr::Table { h, values } => {
                let s = rho.max(0.0) / h;
                let k = (s.floor() as usize).min(values.len() - 2);
                let w = s - k as f64;
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    pub fn flux(&self, rho: f64) -> f64 {
        self.drift() * self.phi(rho)
    }

    /// `R`, the inverse of `Phi`.
    pub fn r(&self, zeta: f64) -> Result<f64> {
        match self.repr {
            PhiRepr::Identity => Ok(zeta),
            PhiRepr::Table { .. } => mean_density(&self.rate, zeta),
        }
    }
}

/// Piecewise-constant function of time: `values[k]` on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trace {
    pub fn constant(v: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![v],
        }
    }

    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("trace needs increasing times, one value each".into()));
        }
        Ok(Self { times, values })
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        self.values[k.saturating_sub(1)]
    }

    pub fn map<F: Fn(f64) -> Result<f64>>(&self, f: F) -> Result<Self> {
        Ok(Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect::<Result<_>>()?,
        })
    }

    fn range(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundarySpec {
    /// No boundary at the origin; the left edge of the grid is fed with the
    /// initial left value.
    WholeLine,
    /// Density imposed at `u = 0`.
    Dirichlet(Trace),
    /// No flux through `u = 0`.
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub cfl: f64,
    /// Explicit time step; must respect the CFL bound.
    pub dt: Option<f64>,
    /// Keep every `store_every`-th time level (the last one is always kept).
    pub store_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            dt: None,
            store_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub u_min: f64,
    pub du: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Stored time levels and cell values there.
    pub slice_times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    /// Per step `n`: value fed through the left edge at `t^n`.
    pub ghost: Vec<f64>,
    /// Per step: mass entering at the left edge and leaving at the right edge.
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
    /// Per time level: value of the cell just left of `u = 0` (the ghost
    /// when the grid starts at 0) and mass on `u >= 0`.
    pub zero_trace: Vec<f64>,
    pub mass_right: Vec<f64>,
    /// Per time level: total mass on the grid.
    pub mass: Vec<f64>,
    pub bounds: (f64, f64),
    pub max_principle_violations: usize,
}

impl PdeGrid {
    pub fn len(&self) -> usize {
        self.slices.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_max(&self) -> f64 {
        self.u_min + self.du * self.len() as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.u_min + self.du * (j as f64 + 0.5)
    }

    pub fn steps(&self) -> usize {
        self.inflow.len()
    }

    pub fn final_slice(&self) -> &[f64] {
        self.slices.last().expect("grid has slices")
    }

    /// Stored slice closest to `t`.
    pub fn slice_near(&self, t: f64) -> (f64, &[f64]) {
        let k = self
            .slice_times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap())
            .map(|(k, _)| k)
            .expect("grid has slices");
        (self.slice_times[k], &self.slices[k])
    }

    pub fn profile_near(&self, t: f64) -> Result<DensityProfile> {
        let (_, s) = self.slice_near(t);
        DensityProfile::new(self.u_min, self.du, s.iter().map(|v| v.max(0.0)).collect())
    }

    /// Index of the first cell whose left edge is at or right of `u = 0`.
    fn zero_index(u_min: f64, du: f64, n: usize) -> usize {
        let k = (-u_min / du).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(n)
        }
    }

    /// Cell averages of `f(t, .)` at the given times, as a grid that was not
    /// produced by the solver (for checker tests).
    pub fn tabulate<F: Fn(f64, f64) -> f64>(u_min: f64, u_max: f64, du: f64, times: &[f64], f: F) -> Result<Self> {
        let n = ((u_max - u_min) / du).round() as usize;
        let sub = 16;
        let slices = times
            .iter()
            .map(|&t| {
                (0..n)
                    .map(|j| {
                        let a = u_min + du * j as f64;
                        (0..sub).map(|s| f(t, a + du * (s as f64 + 0.5) / sub as f64)).sum::<f64>() / sub as f64
                    })
                    .collect()
            })
            .collect();
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Ok(Self {
            u_min,
            du,
            dt,
            t_end: *times.last().unwrap_or(&0.0),
            slice_times: times.to_vec(),
            slices,
            ghost: Vec::new(),
            inflow: Vec::new(),
            outflow: Vec::new(),
            zero_trace: Vec::new(),
            mass_right: Vec::new(),
            mass: Vec::new(),
            bounds: (f64::NEG_INFINITY, f64::INFINITY),
            max_principle_violations: 0,
        })
    }
}

/// Core explicit upwind march.
fn march(init: &DensityProfile, flux: &FluxModel, boundary: &BoundarySpec, t_end: f64, opts: SolverOptions) -> Result<PdeGrid> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("T = {t_end} must be >= 0")));
    }
    let du = init.du();
    let lip = flux.lipschitz();
    let dt_max = opts.cfl.min(0.9) * du / lip;
    let dt = match opts.dt {
        Some(dt) => {
            let nu = dt * lip / du;
            if nu > 0.9 + 1e-12 {
                return Err(Error::Cfl(nu));
            }
            dt
        }
        None => dt_max,
    };
    let steps = if t_end > 0.0 { (t_end / dt).ceil() as usize } else { 0 };
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };
    let lambda = dt / du;
    let n = init.len();
    let zero = PdeGrid::zero_index(init.u_min(), du, n);
    let store_every = opts.store_every.max(1);

    let mut rho = init.values().to_vec();
    let left_value = rho.first().copied().unwrap_or(0.0);
    let ghost_at = |t: f64| match boundary {
        BoundarySpec::WholeLine => left_value,
        BoundarySpec::Dirichlet(tr) => tr.at(t),
        BoundarySpec::ZeroFlux => 0.0,
    };
    let (mut lo, mut hi) = rho.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    match boundary {
        BoundarySpec::WholeLine => {}
        BoundarySpec::Dirichlet(tr) => {
            let (a, b) = tr.range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        BoundarySpec::ZeroFlux => lo = lo.min(0.0),
    }
    if n == 0 {
        lo = 0.0;
        hi = 0.0;
    }
    let slack = 1e-12 * hi.abs().max(1.0);

    let total = |r: &[f64]| r.iter().sum::<f64>() * du;
    let right_mass = |r: &[f64]| r[zero..].iter().sum::<f64>() * du;
    let mut grid = PdeGrid {
        u_min: init.u_min(),
        du,
        dt,
        t_end,
        slice_times: vec![0.0],
        slices: vec![rho.clone()],
        ghost: Vec::with_capacity(steps),
        inflow: Vec::with_capacity(steps),
        outflow: Vec::with_capacity(steps),
        zero_trace: Vec::with_capacity(steps + 1),
        mass_right: vec![right_mass(&rho)],
        mass: vec![total(&rho)],
        bounds: (lo, hi),
        max_principle_violations: 0,
    };
    let trace_value = |r: &[f64], g: f64| if zero == 0 { g } else { r[zero - 1] };
    grid.zero_trace.push(trace_value(&rho, ghost_at(0.0)));

    let mut fluxes = vec![0.0; n + 1];
    for step in 0..steps {
        let t = step as f64 * dt;
        let g = ghost_at(t);
        fluxes[0] = flux.flux(g);
        for j in 0..n {
            fluxes[j + 1] = flux.flux(rho[j]);
        }
        for j in 0..n {
            rho[j] -= lambda * (fluxes[j + 1] - fluxes[j]);
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite(step));
        }
        grid.max_principle_violations += rho.iter().filter(|&&v| v < lo - slack || v > hi + slack).count();
        grid.ghost.push(g);
        grid.inflow.push(fluxes[0] * dt);
        grid.outflow.push(fluxes[n] * dt);
        grid.mass.push(total(&rho));
        grid.mass_right.push(right_mass(&rho));
        let t_next = (step + 1) as f64 * dt;
        grid.zero_trace.push(trace_value(&rho, ghost_at(t_next)));
        if (step + 1) % store_every == 0 || step + 1 == steps {
            grid.slice_times.push(if step + 1 == steps { t_end } else { t_next });
            grid.slices.push(rho.clone());
        }
    }
    Ok(grid)
}

pub fn solve_whole_line(rho0: &DensityProfile, flux: &FluxModel, t_end: f64, opts: SolverOptions) -> Result<PdeGrid> {
    march(rho0, flux, &BoundarySpec::WholeLine, t_end, opts)
}

/// Half-line problem on a grid starting at `u = 0`.
pub fn solve_half_line(
    rho0: &DensityProfile,
    flux: &FluxModel,
    boundary: &BoundarySpec,
    t_end: f64,
    opts: SolverOptions,
) -> Result<PdeGrid> {
    if rho0.u_min().abs() > 1e-12 {
        return Err(Error::InvalidParams(format!(
            "half-line grid must start at 0, starts at {}",
            rho0.u_min()
        )));
    }
    if *boundary == BoundarySpec::WholeLine {
        return Err(Error::InvalidParams("half-line problems need a boundary condition".into()));
    }
    march(rho0, flux, boundary, t_end, opts)
}

/// `t -> R((2p-1) Phi(rho_L(t, 0-)) / (2p-1+alpha))`.
pub fn boundary_density_from_left_trace(left: &Trace, params: &ModelParams, flux: &FluxModel) -> Result<Trace> {
    let d = params.drift();
    let factor = d / (d + params.alpha);
    left.map(|rho| flux.r(factor * flux.phi(rho)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedSolution {
    /// Solution on the whole grid.
    pub glued: PdeGrid,
    /// Whole-line solution, whose left part is `rho_L`.
    pub whole: PdeGrid,
    /// Half-line solution on `u >= 0` when the origin acts as a boundary.
    pub right: Option<PdeGrid>,
    pub left_trace: Option<Trace>,
    pub boundary_density: Option<Trace>,
}

/// Glues the whole-line solution left of the origin to the half-line
/// solution selected by the sign of `beta`.
pub fn compose_theorem_solution(
    rho0: &Rho0,
    params: &ModelParams,
    flux: &FluxModel,
    u_range: (f64, f64),
    du: f64,
    t_end: f64,
    opts: SolverOptions,
) -> Result<ComposedSolution> {
    let (u_min, u_max) = u_range;
    let init = DensityProfile::from_rho0(rho0, u_min, u_max, du)?;
    let whole = solve_whole_line(&init, flux, t_end, opts)?;
    if params.alpha == 0.0 || params.beta < 0.0 {
        return Ok(ComposedSolution {
            glued: whole.clone(),
            whole,
            right: None,
            left_trace: None,
            boundary_density: None,
        });
    }
    let k = -u_min / du;
    if !(u_min < 0.0 && u_max > 0.0) || (k - k.round()).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "u = 0 must be an interior cell edge of [{u_min}, {u_max}] with du = {du}"
        )));
    }
    let zero = k.round() as usize;
    let steps = whole.steps();
    let times: Vec<f64> = (0..steps.max(1)).map(|s| s as f64 * whole.dt).collect();
    let values: Vec<f64> = (0..steps.max(1)).map(|s| whole.zero_trace[s]).collect();
    let left_trace = Trace::new(times, values)?;
    let (boundary, boundary_density) = if params.beta == 0.0 {
        let rho_b = boundary_density_from_left_trace(&left_trace, params, flux)?;
        (BoundarySpec::Dirichlet(rho_b.clone()), Some(rho_b))
    } else {
        (BoundarySpec::ZeroFlux, None)
    };
    let right_init = DensityProfile::new(0.0, du, init.values()[zero..].to_vec())?;
    let right = march(&right_init, flux, &boundary, t_end, SolverOptions { dt: Some(whole.dt), ..opts })?;
    debug_assert_eq!(right.slice_times, whole.slice_times);

    let slices = whole
        .slices
        .iter()
        .zip(&right.slices)
        .map(|(l, r)| l[..zero].iter().chain(r.iter()).copied().collect::<Vec<f64>>())
        .collect::<Vec<_>>();
    let mass = whole
        .mass
        .iter()
        .zip(&whole.mass_right)
        .zip(&right.mass)
        .map(|((m, mr), r)| m - mr + r)
        .collect();
    let glued = PdeGrid {
        slices,
        mass,
        outflow: right.outflow.clone(),
        mass_right: right.mass.clone(),
        bounds: (whole.bounds.0.min(right.bounds.0), whole.bounds.1.max(right.bounds.1)),
        max_principle_violations: whole.max_principle_violations + right.max_principle_violations,
        ..whole.clone()
    };
    Ok(ComposedSolution {
        glued,
        whole,
        right: Some(right),
        left_trace: Some(left_trace),
        boundary_density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntropyForm {
    Abs,
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruzhkovEntry {
    pub test: usize,
    pub c: f64,
    pub form: EntropyForm,
    pub interior: f64,
    pub boundary: f64,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruzhkovReport {
    pub entries: Vec<KruzhkovEntry>,
    pub m: f64,
    /// Smallest `M` for which every `(H, c, +/-)` passes, for Dirichlet
    /// boundaries (infinite if some entry fails regardless of `M`).
    pub min_passing_m: Option<f64>,
    /// Smallest value of the reporting grid `{0, 1/8, 1/4, ..., 64}` at or
    /// above `min_passing_m`.
    pub min_passing_m_grid: Option<f64>,
    /// `int_0^T |F(rho(t, u_k)) - f(t)| dt` for the first cells of a
    /// half-line grid.
    pub boundary_residuals: Vec<f64>,
    pub worst_margin: f64,
    pub pass: bool,
}

/// Default constants: 9 points spanning `[0, 1.2 max rho]`.
pub fn default_c_values(grid: &PdeGrid) -> Vec<f64> {
    let max = grid
        .slices
        .iter()
        .flat_map(|s| s.iter())
        .copied()
        .fold(0.0, f64::max);
    (0..9).map(|k| 1.2 * max * k as f64 / 8.0).collect()
}

/// Default `M = a0 (alpha + 2p - 1) / (2p - 1)`.
pub fn default_m(params: &ModelParams, rate: &RateFunction) -> f64 {
    rate.lipschitz() * (params.alpha + params.drift()) / params.drift()
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let k = times.len();
    let mut w = vec![0.0; k];
    for i in 0..k.saturating_sub(1) {
        let h = times[i + 1] - times[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Evaluates the entropy inequalities selected by `boundary` (absolute form
/// on the line and for zero flux, one-sided forms plus the boundary term for
/// a Dirichlet trace) by midpoint quadrature in `u` and trapezoid in `t`.
pub fn kruzhkov_check(
    grid: &PdeGrid,
    flux: &FluxModel,
    boundary: &BoundarySpec,
    tests: &[&dyn TestFunction],
    c_values: &[f64],
    m: f64,
) -> Result<KruzhkovReport> {
    let u_lo = grid.u_min;
    let u_hi = grid.u_max();
    let eps = 1e-12 * (1.0 + u_hi.abs().max(u_lo.abs()) + grid.t_end);
    for (k, h) in tests.iter().enumerate() {
        let ((t0, t1), (a, b)) = h.support();
        let u_ok = match boundary {
            BoundarySpec::Dirichlet(_) => b <= u_hi + eps && (a >= u_lo - eps || u_lo.abs() < 1e-12),
            _ => a >= u_lo - eps && b <= u_hi + eps,
        };
        if !(t0 >= -eps && t1 <= grid.t_end + eps) || !u_ok {
            return Err(Error::Support(format!(
                "test {k} with support [{t0}, {t1}] x [{a}, {b}] is not inside [0, {}] x [{u_lo}, {u_hi}]",
                grid.t_end
            )));
        }
    }
    let d = flux.drift();
    let wt = trapezoid_weights(&grid.slice_times);
    let n = grid.len();
    let centers: Vec<f64> = (0..n).map(|j| grid.center(j)).collect();
    let rho_scale = grid
        .slices
        .iter()
        .flat_map(|s| s.iter())
        .copied()
        .fold(0.0, f64::max)
        .max(c_values.iter().copied().fold(0.0, f64::max))
        .max(1e-300);
    let forms: &[EntropyForm] = match boundary {
        BoundarySpec::Dirichlet(_) => &[EntropyForm::Plus, EntropyForm::Minus],
        _ => &[EntropyForm::Abs],
    };
    let entropy = |form: EntropyForm, x: f64| match form {
        EntropyForm::Abs => x.abs(),
        EntropyForm::Plus => x.max(0.0),
        EntropyForm::Minus => (-x).max(0.0),
    };

    let mut entries = Vec::new();
    for (k, h) in tests.iter().enumerate() {
        // Tolerance from the quadrature error of a first-order scheme.
        let mut l1_t = 0.0;
        let mut l1_u = 0.0;
        for (s, &t) in grid.slice_times.iter().enumerate() {
            for &u in &centers {
                l1_t += wt[s] * grid.du * h.dt(t, u).abs();
                l1_u += wt[s] * grid.du * h.du(t, u).abs();
            }
        }
        let tol = TOL_FACTOR * grid.du * (l1_t + flux.lipschitz() * l1_u) * rho_scale;
        for &c in c_values {
            let phi_c = flux.phi(c);
            for &form in forms {
                let mut interior = 0.0;
                for (s, &t) in grid.slice_times.iter().enumerate() {
                    if wt[s] == 0.0 {
                        continue;
                    }
                    let slice = &grid.slices[s];
                    let mut acc = 0.0;
                    for (j, &u) in centers.iter().enumerate() {
                        let (ht, hu) = (h.dt(t, u), h.du(t, u));
                        if ht == 0.0 && hu == 0.0 {
                            continue;
                        }
                        let r = slice[j];
                        acc += ht * entropy(form, r - c) + d * hu * entropy(form, flux.phi(r) - phi_c);
                    }
                    interior += wt[s] * acc * grid.du;
                }
                let boundary_term = match boundary {
                    BoundarySpec::Dirichlet(tr) => grid
                        .slice_times
                        .iter()
                        .zip(&wt)
                        .map(|(&t, &w)| w * h.value(t, 0.0) * entropy(form, tr.at(t) - c))
                        .sum::<f64>(),
                    _ => 0.0,
                };
                let value = interior + m * boundary_term;
                entries.push(KruzhkovEntry {
                    test: k,
                    c,
                    form,
                    interior,
                    boundary: boundary_term,
                    value,
                    tol,
                    pass: value >= -tol,
                });
            }
        }
    }

    let (min_passing_m, min_passing_m_grid) = if let BoundarySpec::Dirichlet(_) = boundary {
        let mut need: f64 = 0.0;
        for e in &entries {
            if e.interior < -e.tol {
                need = if e.boundary > 0.0 {
                    need.max((-e.tol - e.interior) / e.boundary)
                } else {
                    f64::INFINITY
                };
            }
        }
        let grid_vals = std::iter::once(0.0).chain((0..10).map(|k| 0.125 * 2f64.powi(k)));
        let on_grid = grid_vals.into_iter().find(|&g| g >= need);
        (Some(need), on_grid)
    } else {
        (None, None)
    };

    let boundary_residuals = if grid.u_min.abs() < 1e-12 {
        let target = |t: f64| match boundary {
            BoundarySpec::Dirichlet(tr) => flux.flux(tr.at(t)),
            _ => 0.0,
        };
        (0..3.min(n))
            .map(|j| {
                grid.slice_times
                    .iter()
                    .zip(&wt)
                    .zip(&grid.slices)
                    .map(|((&t, &w), s)| w * (flux.flux(s[j]) - target(t)).abs())
                    .sum()
            })
            .collect()
    } else {
        Vec::new()
    };

    let worst_margin = entries.iter().map(|e| e.value + e.tol).fold(f64::INFINITY, f64::min);
    let pass = entries.iter().all(|e| e.pass);
    Ok(KruzhkovReport {
        entries,
        m,
        min_passing_m,
        min_passing_m_grid,
        boundary_residuals,
        worst_margin,
        pass,
    })
}

const TOL_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxTraceReport {
    pub times: Vec<f64>,
    /// `d/dt int_{u>0} rho` plus the rate of mass leaving at the right edge.
    pub mass_rate: Vec<f64>,
    /// `F` at the trace left of `u = 0`.
    pub boundary_flux: Vec<f64>,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
}

/// Both sides of `d/dt int_{u>0} (rho - rho0) du = F(rho(t, 0))`, per step.
pub fn boundary_flux_trace(grid: &PdeGrid, flux: &FluxModel) -> FluxTraceReport {
    let steps = grid.steps();
    let mut times = Vec::with_capacity(steps);
    let mut mass_rate = Vec::with_capacity(steps);
    let mut boundary_flux = Vec::with_capacity(steps);
    for s in 0..steps {
        times.push(s as f64 * grid.dt);
        mass_rate.push((grid.mass_right[s + 1] - grid.mass_right[s] + grid.outflow[s]) / grid.dt);
        boundary_flux.push(flux.flux(grid.zero_trace[s]));
    }
    let max_abs_gap = mass_rate
        .iter()
        .zip(&boundary_flux)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = boundary_flux.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let max_rel_gap = if scale > 0.0 { max_abs_gap / scale } else { max_abs_gap };
    FluxTraceReport {
        times,
        mass_rate,
        boundary_flux,
        max_abs_gap,
        max_rel_gap,
    }
}
