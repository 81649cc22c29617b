//! Macroscopic density profiles: initial data `rho0` given as functions of
//! `u`, and piecewise-constant `DensityProfile`s on uniform grids.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One constant piece `v` on the closed interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub v: f64,
}

/// Initial density profile, bounded with compact (or explicitly infinite)
/// support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rho0 {
    /// Piecewise constant; the first piece containing `u` wins.
    Pieces(Vec<Piece>),
    /// `h (1 + cos(pi (u - c) / w)) / 2` on `|u - c| <= w`, zero elsewhere.
    CosineBump { center: f64, half_width: f64, height: f64 },
}

impl Rho0 {
    pub fn constant_on(a: f64, b: f64, v: f64) -> Self {
        Rho0::Pieces(vec![Piece { a, b, v }])
    }

    /// Parses `a:b:v,a:b:v,...` or `cos:center:half_width:height`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let bad = |m: &str| Error::InvalidParams(format!("bad rho0 {spec:?}: {m}"));
        if let Some(rest) = spec.strip_prefix("cos:") {
            let f: Vec<f64> = rest
                .split(':')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected cos:center:half_width:height"))?;
            if f.len() != 3 || !(f[1] > 0.0) || !(f[2] >= 0.0) {
                return Err(bad("expected cos:center:half_width:height"));
            }
            return Ok(Rho0::CosineBump {
                center: f[0],
                half_width: f[1],
                height: f[2],
            });
        }
        if spec.is_empty() {
            return Ok(Rho0::Pieces(Vec::new()));
        }
        let mut pieces = Vec::new();
        for part in spec.split(',') {
            let f: Vec<f64> = part
                .split(':')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected a:b:v"))?;
            if f.len() != 3 {
                return Err(bad("expected a:b:v"));
            }
            if !(f[0] <= f[1]) || !(f[2] >= 0.0) || !f[2].is_finite() {
                return Err(bad("need a <= b and finite v >= 0"));
            }
            pieces.push(Piece { a: f[0], b: f[1], v: f[2] });
        }
        Ok(Rho0::Pieces(pieces))
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            Rho0::Pieces(ps) => ps
                .iter()
                .find(|p| p.a <= u && u <= p.b)
                .map_or(0.0, |p| p.v),
            Rho0::CosineBump {
                center,
                half_width,
                height,
            } => {
                let s = (u - center) / half_width;
                if s.abs() <= 1.0 {
                    0.5 * height * (1.0 + (PI * s).cos())
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact average of the profile over `[a, b]`.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.value(a);
        }
        match self {
            Rho0::Pieces(ps) => {
                // First-match semantics: walk the cut points and evaluate at
                // each sub-interval midpoint.
                let mut cuts = vec![a, b];
                for p in ps {
                    for c in [p.a, p.b] {
                        if c > a && c < b {
                            cuts.push(c);
                        }
                    }
                }
                cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let mut acc = 0.0;
                for w in cuts.windows(2) {
                    if w[1] > w[0] {
                        acc += self.value(0.5 * (w[0] + w[1])) * (w[1] - w[0]);
                    }
                }
                acc / (b - a)
            }
            Rho0::CosineBump {
                center,
                half_width,
                height,
            } => {
                let lo = a.max(center - half_width);
                let hi = b.min(center + half_width);
                if hi <= lo {
                    return 0.0;
                }
                let prim = |u: f64| {
                    0.5 * height * (u + half_width / PI * (PI * (u - center) / half_width).sin())
                };
                (prim(hi) - prim(lo)) / (b - a)
            }
        }
    }

    /// Smallest interval outside which the profile vanishes.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Rho0::Pieces(ps) => {
                let nz: Vec<&Piece> = ps.iter().filter(|p| p.v > 0.0).collect();
                if nz.is_empty() {
                    return None;
                }
                let lo = nz.iter().map(|p| p.a).fold(f64::INFINITY, f64::min);
                let hi = nz.iter().map(|p| p.b).fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            Rho0::CosineBump {
                center,
                half_width,
                height,
            } => (*height > 0.0).then(|| (center - half_width, center + half_width)),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Rho0::Pieces(ps) => ps.iter().map(|p| p.v).fold(0.0, f64::max),
            Rho0::CosineBump { height, .. } => *height,
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            Rho0::Pieces(ps) if !ps.is_empty() => ps.iter().map(|p| p.v).fold(f64::INFINITY, f64::min).min(0.0),
            _ => 0.0,
        }
    }

    /// `int rho0 du`.
    pub fn mass(&self) -> f64 {
        match self.support() {
            None => 0.0,
            Some((a, b)) if a.is_finite() && b.is_finite() => self.cell_average(a, b) * (b - a),
            Some(_) => f64::INFINITY,
        }
    }
}

impl fmt::Display for Rho0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho0::Pieces(ps) => {
                let parts: Vec<String> = ps.iter().map(|p| format!("{}:{}:{}", p.a, p.b, p.v)).collect();
                f.write_str(&parts.join(","))
            }
            Rho0::CosineBump {
                center,
                half_width,
                height,
            } => write!(f, "cos:{center}:{half_width}:{height}"),
        }
    }
}

/// Piecewise-constant function of `u` on uniform cells covering
/// `[u_min, u_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    u_min: f64,
    du: f64,
    values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(u_min: f64, du: f64, values: Vec<f64>) -> Result<Self> {
        if !(du > 0.0) || !u_min.is_finite() {
            return Err(Error::InvalidParams(format!("bad grid u_min={u_min} du={du}")));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("profile value {v} is not a finite density")));
        }
        Ok(Self { u_min, du, values })
    }

    /// Uniform grid over `[u_min, u_max]`; the cell count must tile the
    /// interval exactly.
    pub fn zeros(u_min: f64, u_max: f64, du: f64) -> Result<Self> {
        let n = ((u_max - u_min) / du).round();
        if n < 1.0 || ((n * du) - (u_max - u_min)).abs() > 1e-9 * (u_max - u_min).abs().max(1.0) {
            return Err(Error::InvalidParams(format!(
                "cell width {du} does not tile [{u_min}, {u_max}]"
            )));
        }
        Self::new(u_min, du, vec![0.0; n as usize])
    }

    /// Cell averages of `rho0` on a grid over `[u_min, u_max]`.
    pub fn from_rho0(rho0: &Rho0, u_min: f64, u_max: f64, du: f64) -> Result<Self> {
        let mut p = Self::zeros(u_min, u_max, du)?;
        for j in 0..p.values.len() {
            let (a, b) = p.cell(j);
            p.values[j] = rho0.cell_average(a, b);
        }
        Ok(p)
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_min + self.du * self.values.len() as f64
    }

    pub fn du(&self) -> f64 {
        self.du
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        let a = self.u_min + self.du * j as f64;
        (a, a + self.du)
    }

    pub fn center(&self, j: usize) -> f64 {
        self.u_min + self.du * (j as f64 + 0.5)
    }

    /// Value of the cell containing `u`, zero outside the grid.
    pub fn value_at(&self, u: f64) -> f64 {
        let j = ((u - self.u_min) / self.du).floor();
        if j < 0.0 || j >= self.values.len() as f64 {
            0.0
        } else {
            self.values[j as usize]
        }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.du
    }

    /// Average of this piecewise-constant function over `[a, b]`.
    pub fn average_over(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.value_at(a);
        }
        let j0 = (((a - self.u_min) / self.du).floor().max(0.0)) as usize;
        let j1 = ((((b - self.u_min) / self.du).ceil()).max(0.0) as usize).min(self.values.len());
        let mut acc = 0.0;
        for j in j0..j1 {
            let (ca, cb) = self.cell(j);
            let overlap = cb.min(b) - ca.max(a);
            if overlap > 0.0 {
                acc += overlap * self.values[j];
            }
        }
        acc / (b - a)
    }

    /// Resamples onto another grid by cell averaging.
    pub fn resample(&self, u_min: f64, u_max: f64, du: f64) -> Result<Self> {
        let mut out = Self::zeros(u_min, u_max, du)?;
        for j in 0..out.values.len() {
            let (a, b) = out.cell(j);
            out.values[j] = self.average_over(a, b);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_evaluate_pieces() {
        let r = Rho0::parse("-1:0:1").unwrap();
        assert_eq!(r.value(-0.5), 1.0);
        assert_eq!(r.value(0.0), 1.0);
        assert_eq!(r.value(0.01), 0.0);
        assert_eq!(r.support(), Some((-1.0, 0.0)));
        assert!((r.mass() - 1.0).abs() < 1e-12);

        let two = Rho0::parse("0:1.5:2, -1:0:0.5").unwrap();
        assert_eq!(two.value(0.0), 2.0);
        assert_eq!(two.value(-0.5), 0.5);
        assert!((two.mass() - 3.5).abs() < 1e-12);
        assert!(Rho0::parse("1:0:1").is_err());
        assert!(Rho0::parse("0:1").is_err());
        assert!(Rho0::parse("0:1:-2").is_err());
        assert_eq!(Rho0::parse("").unwrap().support(), None);
    }

    #[test]
    fn cosine_bump_average_is_exact() {
        let r = Rho0::parse("cos:-0.7:0.6:1").unwrap();
        assert!((r.mass() - 0.6).abs() < 1e-12);
        // Midpoint rule on a fine grid as an independent check.
        let (a, b) = (-1.0, -0.4);
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mid: f64 = (0..n).map(|i| r.value(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((r.cell_average(a, b) * (b - a) - mid).abs() < 1e-9);
        assert_eq!(r.to_string(), "cos:-0.7:0.6:1");
    }

    #[test]
    fn grid_must_tile_interval() {
        assert!(DensityProfile::zeros(-1.0, 1.0, 0.3).is_err());
        let p = DensityProfile::zeros(-1.0, 1.0, 0.25).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p.u_max(), 1.0);
    }

    #[test]
    fn resample_preserves_integral() {
        let r = Rho0::parse("-1:0:1,0:0.5:0.25").unwrap();
        let fine = DensityProfile::from_rho0(&r, -2.0, 2.0, 0.01).unwrap();
        let coarse = fine.resample(-2.0, 2.0, 0.1).unwrap();
        assert!((fine.integral() - coarse.integral()).abs() < 1e-12);
        assert!((coarse.integral() - 1.125).abs() < 1e-12);
        assert!((fine.value_at(-0.5) - 1.0).abs() < 1e-12);
        assert_eq!(fine.value_at(5.0), 0.0);
    }
}
