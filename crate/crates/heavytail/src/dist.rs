//! The closed set of distribution objects the library works with.
//!
//! Every concrete distribution is a [`PiecewiseTail`], an [`Exponential`]
//! (the analytic test and inter-arrival family), or a transform stack on
//! top of one ([`crate::distops::TransformedDist`]). All of them expose
//! the same evaluation surface:
//!
//! * `ln_tail` / `ln_tail_at_ln` for log-domain tail values;
//! * `window(x, T)` for the local mass `P(X in (x, x+T])`, always computed
//!   from nonnegative per-segment drops rather than tail differences;
//! * `tail_integral` / `tail_integral_window` for partial integrals of the
//!   tail, exact per segment for piecewise bases;
//! * `density_at_ln`, `mean`, `mean_pos`, `sample`, `breakpoints`.

use serde::{Deserialize, Serialize};

use crate::distops::{Transform, TransformedDist};
use crate::error::{Error, Result};
use crate::logmag::Mag;
use crate::tailfn::{PiecewiseTail, TailSpec};

/// Exponential distribution with the given rate; the memoryless member of
/// the toolkit, used for inter-arrival times and closed-form oracles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Exponential> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid_parameter("rate > 0", format!("rate = {rate}")));
        }
        Ok(Exponential { rate })
    }

    pub fn ln_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -self.rate * x
        }
    }

    pub fn window(&self, x: f64, t: f64) -> Mag {
        let lo = x.max(0.0);
        let hi = x + t;
        if hi <= 0.0 {
            return Mag::ZERO;
        }
        let w = hi - lo;
        // e^{-r lo} (1 - e^{-r w})
        Mag::from_ln(-self.rate * lo) * Mag::from_f64(-(-self.rate * w).exp_m1())
    }

    pub fn tail_integral(&self, lo: f64, hi: f64) -> Mag {
        let mut total = Mag::ZERO;
        if lo < 0.0 {
            total = total + Mag::from_f64(hi.min(0.0) - lo);
        }
        if hi <= 0.0 {
            return total;
        }
        let a = lo.max(0.0);
        if hi.is_finite() {
            total + self.window(a, hi - a) / Mag::from_f64(self.rate)
        } else {
            total + Mag::from_ln(-self.rate * a) / Mag::from_f64(self.rate)
        }
    }
}

/// A distribution value: concrete family or transform stack.
#[derive(Debug, Clone)]
pub enum HtDist {
    Piecewise(PiecewiseTail),
    Exponential(Exponential),
    Transformed(Box<TransformedDist>),
}

/// Serialized form: base document plus the transform stack applied to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistSpec {
    pub base: BaseSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseSpec {
    Piecewise(TailSpec),
    Exponential { exponential: f64 },
}

impl HtDist {
    pub fn piecewise(d: PiecewiseTail) -> HtDist {
        HtDist::Piecewise(d)
    }

    pub fn exponential(rate: f64) -> Result<HtDist> {
        Ok(HtDist::Exponential(Exponential::new(rate)?))
    }

    /// ln of the tail at `x`.
    pub fn ln_tail(&self, x: f64) -> f64 {
        match self {
            HtDist::Piecewise(d) => d.ln_tail(x),
            HtDist::Exponential(d) => d.ln_tail(x),
            HtDist::Transformed(t) => t.ln_tail(x),
        }
    }

    /// ln of the tail at a positive point given as `ln x`.
    pub fn ln_tail_at_ln(&self, ln_x: f64) -> f64 {
        match self {
            HtDist::Piecewise(d) => d.ln_tail_at_ln(ln_x),
            HtDist::Exponential(d) => d.ln_tail(ln_x.exp()),
            HtDist::Transformed(t) => t.ln_tail_at_ln(ln_x),
        }
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.ln_tail(x).exp()
    }

    pub fn tail_mag(&self, x: f64) -> Mag {
        Mag::from_ln(self.ln_tail(x))
    }

    /// Local mass `P(X in (x, x+T])`.
    pub fn window(&self, x: f64, t: f64) -> Mag {
        debug_assert!(t > 0.0, "window length must be positive");
        match self {
            HtDist::Piecewise(d) => d.window(x, t),
            HtDist::Exponential(d) => d.window(x, t),
            HtDist::Transformed(tr) => tr.window(x, t),
        }
    }

    /// Density at `x` (left-derivative policy at breakpoints).
    pub fn density(&self, x: f64) -> Mag {
        match self {
            HtDist::Piecewise(d) => d.density(x),
            HtDist::Exponential(d) => {
                if x <= 0.0 {
                    Mag::ZERO
                } else {
                    Mag::from_f64(d.rate) * Mag::from_ln(-d.rate * x)
                }
            }
            HtDist::Transformed(t) => t.density(x),
        }
    }

    pub fn density_at_ln(&self, ln_x: f64) -> Mag {
        match self {
            HtDist::Piecewise(d) => d.density_at_ln(ln_x),
            HtDist::Exponential(d) => {
                let x = ln_x.exp();
                Mag::from_f64(d.rate) * Mag::from_ln(-d.rate * x)
            }
            HtDist::Transformed(t) => t.density_at_ln(ln_x),
        }
    }

    /// Integral of the tail over `[lo, hi]`; `hi` may be infinite.
    pub fn tail_integral(&self, lo: f64, hi: f64) -> Mag {
        match self {
            HtDist::Piecewise(d) => d.tail_integral(lo, hi),
            HtDist::Exponential(d) => d.tail_integral(lo, hi),
            HtDist::Transformed(t) => t.tail_integral(lo, hi),
        }
    }

    /// Integral of the tail over `(x, x+t]`, width-exact at any magnitude.
    pub fn tail_integral_window(&self, x: f64, t: f64) -> Mag {
        match self {
            HtDist::Piecewise(d) => d.tail_integral_window(x, t),
            HtDist::Exponential(d) => d.tail_integral(x, x + t),
            HtDist::Transformed(tr) => tr.tail_integral_window(x, t),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            HtDist::Piecewise(d) => d.mean(),
            HtDist::Exponential(d) => 1.0 / d.rate,
            HtDist::Transformed(t) => t.mean(),
        }
    }

    /// `E X^+`.
    pub fn mean_pos(&self) -> f64 {
        match self {
            HtDist::Piecewise(d) => d.mean_pos(),
            HtDist::Exponential(d) => 1.0 / d.rate,
            HtDist::Transformed(t) => t.tail_integral(0.0, f64::INFINITY).to_f64(),
        }
    }

    /// Inverse-transform sample at uniform `u` in (0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            HtDist::Piecewise(d) => d.sample(u),
            HtDist::Exponential(d) => -u.ln() / d.rate,
            HtDist::Transformed(t) => t.sample(u),
        }
    }

    /// Finite density breakpoints in user coordinates, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            HtDist::Piecewise(d) => d.breakpoints(),
            HtDist::Exponential(_) => vec![0.0],
            HtDist::Transformed(t) => t.breakpoints(),
        }
    }

    /// Left end of the support.
    pub fn support_lo(&self) -> f64 {
        match self {
            HtDist::Piecewise(d) => -d.shift(),
            HtDist::Exponential(_) => 0.0,
            HtDist::Transformed(t) => t.support_lo(),
        }
    }

    /// The innermost piecewise construction, when there is one.
    pub fn piecewise_core(&self) -> Option<&PiecewiseTail> {
        match self {
            HtDist::Piecewise(d) => Some(d),
            HtDist::Exponential(_) => None,
            HtDist::Transformed(t) => t.base().piecewise_core(),
        }
    }

    pub fn to_spec(&self) -> DistSpec {
        let mut transforms = Vec::new();
        let mut cur = self;
        while let HtDist::Transformed(t) = cur {
            transforms.push(t.transform().clone());
            cur = t.base();
        }
        transforms.reverse();
        let base = match cur {
            HtDist::Piecewise(d) => BaseSpec::Piecewise(d.to_spec()),
            HtDist::Exponential(e) => BaseSpec::Exponential { exponential: e.rate },
            HtDist::Transformed(_) => unreachable!(),
        };
        DistSpec { base, transforms }
    }

    pub fn from_spec(spec: &DistSpec) -> Result<HtDist> {
        let mut d = match &spec.base {
            BaseSpec::Piecewise(ts) => HtDist::Piecewise(PiecewiseTail::from_spec(ts)?),
            BaseSpec::Exponential { exponential } => HtDist::exponential(*exponential)?,
        };
        for t in &spec.transforms {
            d = crate::distops::apply_transform(d, t)?;
        }
        Ok(d)
    }

    /// Short human-readable description for reports.
    pub fn describe(&self) -> String {
        match self {
            HtDist::Piecewise(d) => {
                let s = d.to_spec();
                let mut out = format!(
                    "{}(m={}, alpha={}, x1={}, n_max={})",
                    s.kind.as_str(),
                    s.m,
                    s.alpha,
                    s.x1,
                    s.n_max
                );
                if s.shift != 0.0 {
                    out.push_str(&format!(" shifted by {}", s.shift));
                }
                out
            }
            HtDist::Exponential(e) => format!("exp(rate={})", e.rate),
            HtDist::Transformed(t) => t.describe(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tailfn::Family;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_closed_forms() {
        let d = HtDist::exponential(2.0).unwrap();
        assert_relative_eq!(d.tail(1.0), (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.mean(), 0.5);
        let w = d.window(1.0, 0.5).to_f64();
        assert_relative_eq!(w, (-2.0f64).exp() - (-3.0f64).exp(), max_relative = 1e-14);
        let ti = d.tail_integral(0.0, f64::INFINITY).to_f64();
        assert_relative_eq!(ti, 0.5, max_relative = 1e-14);
        assert_relative_eq!(d.sample(0.25), -(0.25f64.ln()) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn spec_roundtrip_piecewise() {
        let p = PiecewiseTail::build_example(Family::Ex21, 1, 1.5, 100.0, 8).unwrap();
        let d = HtDist::piecewise(p);
        let json = serde_json::to_string(&d.to_spec()).unwrap();
        let spec: DistSpec = serde_json::from_str(&json).unwrap();
        let d2 = HtDist::from_spec(&spec).unwrap();
        for &x in &[0.0, 120.0, 5e4] {
            assert_relative_eq!(d.ln_tail(x), d2.ln_tail(x), max_relative = 1e-14);
        }
    }
}
