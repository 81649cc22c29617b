//! Jump-rate functions `g` satisfying the Lipschitz and attractiveness
//! assumptions.

use std::fmt;

use crate::error::{Error, Result};

/// Tabulated jump rate `g(k)` for `k = 0..=k_max`, continued affinely past the
/// table with a slope in `[0, a0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    values: Vec<f64>,
    lipschitz_a0: f64,
    slope: f64,
    label: String,
}

impl RateFunction {
    /// Builds a rate from an explicit table. `a0` defaults to the largest
    /// increment of the table and `slope` to its last increment.
    pub fn from_table(values: Vec<f64>, a0: Option<f64>, slope: Option<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidRate("table needs g(0) and g(1)".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRate("non-finite table entry".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidRate(format!("g(0) = {} but must be 0", values[0])));
        }
        if let Some(k) = values.iter().skip(1).position(|&v| v <= 0.0) {
            return Err(Error::InvalidRate(format!("g({}) must be positive", k + 1)));
        }
        let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(k) = increments.iter().position(|&d| d < 0.0) {
            return Err(Error::NonMonotone(k as u32));
        }
        let max_inc = increments.iter().cloned().fold(0.0, f64::max);
        let a0 = a0.unwrap_or(max_inc);
        if !(a0 > 0.0) {
            return Err(Error::InvalidRate("Lipschitz constant must be positive".into()));
        }
        if max_inc > a0 * (1.0 + 1e-12) {
            return Err(Error::InvalidRate(format!(
                "increment {max_inc} exceeds Lipschitz constant {a0}"
            )));
        }
        let slope = slope.unwrap_or(*increments.last().unwrap());
        if !(0.0..=a0 * (1.0 + 1e-12)).contains(&slope) {
            return Err(Error::InvalidRate(format!("continuation slope {slope} not in [0, {a0}]")));
        }
        for (k, &v) in values.iter().enumerate() {
            if v > a0 * k as f64 * (1.0 + 1e-12) {
                return Err(Error::InvalidRate(format!("g({k}) = {v} exceeds a0*k")));
            }
        }
        Ok(Self {
            values,
            lipschitz_a0: a0,
            slope,
            label: "table".into(),
        })
    }

    /// `g(k) = k`.
    pub fn linear() -> Self {
        let values = (0..=64).map(f64::from).collect();
        Self {
            values,
            lipschitz_a0: 1.0,
            slope: 1.0,
            label: "linear".into(),
        }
    }

    /// `g(k) = 1{k >= 1}`.
    pub fn indicator() -> Self {
        Self::bounded(1.0).map(|mut r| {
            r.label = "indicator".into();
            r
        })
        .expect("unit rate is valid")
    }

    /// `g(k) = c 1{k >= 1}`.
    pub fn bounded(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidRate(format!("bounded rate needs c > 0, got {c}")));
        }
        Ok(Self {
            values: vec![0.0, c],
            lipschitz_a0: c,
            slope: 0.0,
            label: format!("bounded:{c}"),
        })
    }

    /// Parses `linear`, `indicator`, `bounded:c` or `table:g0,g1,...[@slope]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "linear" => return Ok(Self::linear()),
            "indicator" => return Ok(Self::indicator()),
            _ => {}
        }
        if let Some(c) = spec.strip_prefix("bounded:") {
            let c: f64 = c
                .parse()
                .map_err(|_| Error::InvalidRate(format!("bad bound in {spec:?}")))?;
            return Self::bounded(c);
        }
        if let Some(body) = spec.strip_prefix("table:") {
            let (list, slope) = match body.split_once('@') {
                Some((l, s)) => (
                    l,
                    Some(
                        s.parse::<f64>()
                            .map_err(|_| Error::InvalidRate(format!("bad slope in {spec:?}")))?,
                    ),
                ),
                None => (body, None),
            };
            let values = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidRate(format!("bad table in {spec:?}")))?;
            let mut rate = Self::from_table(values, None, slope)?;
            rate.label = spec.to_string();
            return Ok(rate);
        }
        Err(Error::InvalidRate(format!("unknown rate {spec:?}")))
    }

    #[inline]
    pub fn g(&self, k: u32) -> f64 {
        let k = k as usize;
        match self.values.get(k) {
            Some(&v) => v,
            None => {
                let last = self.values.len() - 1;
                self.values[last] + self.slope * (k - last) as f64
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz_a0
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn k_max(&self) -> u32 {
        (self.values.len() - 1) as u32
    }

    /// Radius of convergence of the partition function. The ratio of
    /// consecutive terms is `zeta / g(k)`, so it is `lim g = g(k_max)` when
    /// the continuation is flat and infinite otherwise.
    pub fn zeta_star(&self) -> f64 {
        if self.slope > 0.0 {
            f64::INFINITY
        } else {
            *self.values.last().unwrap()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.slope == 1.0 && self.values.iter().enumerate().all(|(k, &v)| v == k as f64)
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}
