//! Smooth compactly supported test functions `H(t, u)` with analytic
//! derivatives.

use serde::{Deserialize, Serialize};

pub trait TestFunction: Sync {
    fn value(&self, t: f64, u: f64) -> f64;
    fn dt(&self, t: f64, u: f64) -> f64;
    fn du(&self, t: f64, u: f64) -> f64;
    /// `((t_min, t_max), (u_min, u_max))` outside of which `H` vanishes.
    fn support(&self) -> ((f64, f64), (f64, f64));
}

/// `b(s) = (1 - s^2)^3` on `|s| < 1`: non-negative and `C^2`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        w * w * w
    }
}

fn bump_prime(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        -6.0 * s * w * w
    }
}

/// Tensor-product bump centred at `(t_c, u_c)` with half-widths
/// `(t_w, u_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub t_center: f64,
    pub t_half: f64,
    pub u_center: f64,
    pub u_half: f64,
}

impl Bump {
    pub fn new(t_center: f64, t_half: f64, u_center: f64, u_half: f64) -> Self {
        Self {
            t_center,
            t_half,
            u_center,
            u_half,
        }
    }

    /// Bump filling the box `[t0, t1] x [u0, u1]`.
    pub fn on_box(t0: f64, t1: f64, u0: f64, u1: f64) -> Self {
        Self::new(0.5 * (t0 + t1), 0.5 * (t1 - t0), 0.5 * (u0 + u1), 0.5 * (u1 - u0))
    }

    fn st(&self, t: f64) -> f64 {
        (t - self.t_center) / self.t_half
    }

    fn su(&self, u: f64) -> f64 {
        (u - self.u_center) / self.u_half
    }
}

impl TestFunction for Bump {
    fn value(&self, t: f64, u: f64) -> f64 {
        bump(self.st(t)) * bump(self.su(u))
    }

    fn dt(&self, t: f64, u: f64) -> f64 {
        bump_prime(self.st(t)) / self.t_half * bump(self.su(u))
    }

    fn du(&self, t: f64, u: f64) -> f64 {
        bump(self.st(t)) * bump_prime(self.su(u)) / self.u_half
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.t_center - self.t_half, self.t_center + self.t_half),
            (self.u_center - self.u_half, self.u_center + self.u_half),
        )
    }
}

/// Test function from closures, for callers with their own `H`.
pub struct ClosureTest<F, Ft, Fu> {
    pub h: F,
    pub h_t: Ft,
    pub h_u: Fu,
    pub support: ((f64, f64), (f64, f64)),
}

impl<F, Ft, Fu> TestFunction for ClosureTest<F, Ft, Fu>
where
    F: Fn(f64, f64) -> f64 + Sync,
    Ft: Fn(f64, f64) -> f64 + Sync,
    Fu: Fn(f64, f64) -> f64 + Sync,
{
    fn value(&self, t: f64, u: f64) -> f64 {
        (self.h)(t, u)
    }

    fn dt(&self, t: f64, u: f64) -> f64 {
        (self.h_t)(t, u)
    }

    fn du(&self, t: f64, u: f64) -> f64 {
        (self.h_u)(t, u)
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        self.support
    }
}

/// A default family: bumps on a `k_t x k_u` grid of overlapping boxes
/// tiling `[t0, t1] x [u0, u1]`.
pub fn bump_family(t0: f64, t1: f64, u0: f64, u1: f64, k_t: usize, k_u: usize) -> Vec<Bump> {
    let mut out = Vec::with_capacity(k_t * k_u);
    let ht = (t1 - t0) / (k_t as f64 + 1.0);
    let hu = (u1 - u0) / (k_u as f64 + 1.0);
    for i in 0..k_t {
        for j in 0..k_u {
            out.push(Bump::new(t0 + ht * (i as f64 + 1.0), ht, u0 + hu * (j as f64 + 1.0), hu));
        }
    }
    out
}
