use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::bail;
use serde::Serialize;
use zrh_core::harness::fmt_sig;
use zrh_core::pde::{
    boundary_flux_trace, compose_theorem_solution, default_c_values, default_m, kruzhkov_check, BoundarySpec,
    FluxModel, KruzhkovReport, PdeGrid, SolverOptions,
};
use zrh_core::testfn::{bump_family, TestFunction};
use zrh_core::{ModelParams, ThermoTable};

use crate::common::{emit_with_sidecar, parse_interval, parse_rho0, to_json, Model};
use crate::Outcome;

#[derive(clap::Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    #[command(flatten)]
    pub model: Model,
    #[arg(long, allow_hyphen_values = true)]
    pub rho0: String,
    #[arg(long, default_value_t = 0.01)]
    pub du: f64,
    /// Final time.
    #[arg(long = "T", visible_alias = "t-end")]
    pub t_end: f64,
    /// Domain `a:b`; defaults to the support of rho0 widened by the drift.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Spacing of the output time levels (defaults to `T/10`).
    #[arg(long = "dt-out")]
    pub dt_out: Option<f64>,
    /// Run the entropy (Kruzhkov) checks and report them.
    #[arg(long)]
    pub check: bool,
    /// CSV of `(t, u, rho)`; the JSON report goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    params: ModelParams,
    rate: String,
    rho0: String,
    u_range: (f64, f64),
    du: f64,
    dt: f64,
    steps: usize,
    initial_mass: f64,
    final_mass: f64,
    max_principle_violations: usize,
    /// Largest relative gap of the boundary mass balance on `u > 0`.
    boundary_flux_gap: Option<f64>,
    whole_line_check: Option<KruzhkovReport>,
    right_check: Option<KruzhkovReport>,
    pass: bool,
}

fn default_domain(rho0: &zrh_core::Rho0, params: &ModelParams, t: f64, du: f64) -> (f64, f64) {
    let (s0, s1) = rho0.support().unwrap_or((-1.0, 1.0));
    let reach = params.drift() * t + 0.5;
    let lo = ((s0.min(0.0) - reach) / du).floor() * du;
    let hi = ((s1.max(0.0) + reach) / du).ceil() * du;
    (lo, hi)
}

fn check(grid: &PdeGrid, flux: &FluxModel, boundary: &BoundarySpec, m: f64) -> zrh_core::Result<KruzhkovReport> {
    let width = grid.u_max() - grid.u_min;
    // Stay clear of the open edges; a boundary at u = 0 may be touched.
    let lo = match boundary {
        BoundarySpec::WholeLine => grid.u_min + 0.1 * width,
        _ => grid.u_min,
    };
    let bumps = bump_family(0.0, grid.t_end, lo, grid.u_max() - 0.1 * width, 3, 8);
    let tests: Vec<&dyn TestFunction> = bumps.iter().map(|b| b as &dyn TestFunction).collect();
    kruzhkov_check(grid, flux, boundary, &tests, &default_c_values(grid), m)
}

pub fn run(a: Args) -> Outcome {
    let params = a.model.params()?;
    let rate = a.model.rate()?;
    let rho0 = parse_rho0(&a.rho0)?;
    if !(a.du > 0.0) || !(a.t_end > 0.0) {
        bail!("need du > 0 and T > 0");
    }
    let (lo, hi) = match &a.domain {
        Some(s) => parse_interval(s)?,
        None => default_domain(&rho0, &params, a.t_end, a.du),
    };
    let thermo = ThermoTable::new(rate.clone(), (2.0 * rho0.max_value()).max(1.0))?;
    let flux = FluxModel::new(&thermo, params.p)?;
    let sol = compose_theorem_solution(&rho0, &params, &flux, (lo, hi), a.du, a.t_end, SolverOptions::default())?;
    let grid = &sol.glued;

    let dt_out = a.dt_out.unwrap_or(a.t_end / 10.0);
    if !(dt_out > 0.0) {
        bail!("--dt-out must be positive");
    }
    let mut csv = String::from("t,u,rho\n");
    let mut last = f64::NEG_INFINITY;
    for t in zrh_core::sim::time_grid(a.t_end, dt_out) {
        let (ts, slice) = grid.slice_near(t);
        if ts == last {
            continue;
        }
        last = ts;
        for (j, v) in slice.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", fmt_sig(ts), fmt_sig(grid.center(j)), fmt_sig(*v));
        }
    }

    let (whole_line_check, right_check) = if a.check {
        let whole = check(&sol.whole, &flux, &BoundarySpec::WholeLine, 0.0)?;
        let right = match (&sol.right, &sol.boundary_density) {
            (Some(r), Some(rho_b)) => Some(check(r, &flux, &BoundarySpec::Dirichlet(rho_b.clone()), default_m(&params, &rate))?),
            (Some(r), None) => Some(check(r, &flux, &BoundarySpec::ZeroFlux, 0.0)?),
            _ => None,
        };
        (Some(whole), right)
    } else {
        (None, None)
    };
    let pass = whole_line_check.as_ref().is_none_or(|r| r.pass) && right_check.as_ref().is_none_or(|r| r.pass);
    let report = Report {
        params,
        rate: a.model.g.clone(),
        rho0: a.rho0.clone(),
        u_range: (grid.u_min, grid.u_max()),
        du: grid.du,
        dt: grid.dt,
        steps: grid.steps(),
        initial_mass: grid.mass[0],
        final_mass: *grid.mass.last().expect("at least one level"),
        max_principle_violations: grid.max_principle_violations,
        boundary_flux_gap: sol.right.as_ref().map(|r| boundary_flux_trace(r, &flux).max_rel_gap),
        whole_line_check,
        right_check,
        pass,
    };
    emit_with_sidecar(a.out.as_deref(), &csv, &to_json(&report)?)?;
    Ok(pass)
}
