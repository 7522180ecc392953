//! Exact piecewise tail constructions.
//!
//! Three families are implemented, each defined by a breakpoint sequence
//! `x_n` and a tail that alternates between a descending ramp on
//! `[x_n, 2x_n)` and a plateau up to the next breakpoint:
//!
//! * `Ex21`: `x_{n+1} = x_n^{2 - 1/(m a)}`, ramps affine in `x`, plateau
//!   `x_n^{-2a + 1/m}`;
//! * `Ex22`: `x_{n+1} = x_n^{1 + 1/a}`, ramps affine in `sqrt(x)` on
//!   `[x_n^2, 4 x_n^2)`, plateau `x_n^{-a-1}`;
//! * `Ex25`: `x_{n+1} = (2 x_n)^2`, ramps affine in `x`, plateau
//!   `(2 x_n)^{-2a}`.
//!
//! The represented distribution is `G(x) = F(x)^m` raised segment-wise,
//! optionally shifted (tail evaluated at `x + shift`). Segment endpoint
//! values are kept as exact log-domain numbers and ramps are evaluated in
//! barycentric form `v_lo * w_lo + v_hi * w_hi`, a sum of two nonnegative
//! terms, so evaluation never cancels no matter how deep in the tail.
//!
//! Only a finite prefix of the breakpoint sequence is stored. Integrals
//! that extend past the stored horizon are completed by summing the
//! analytic continuation of the segment formulas in log space until the
//! terms are negligible, and the continuation contribution is reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmag::Mag;
use crate::quad::Pt;

const LN_2: f64 = std::f64::consts::LN_2;
/// Largest stored ln(x) for a ramp start; keeps every window computation
/// in plain f64 position arithmetic.
const LN_CAP: f64 = 700.0;

/// The three concrete tail families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ex21,
    Ex22,
    Ex25,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Ex21 => "ex21",
            Family::Ex22 => "ex22",
            Family::Ex25 => "ex25",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "ex21" => Ok(Family::Ex21),
            "ex22" => Ok(Family::Ex22),
            "ex25" => Ok(Family::Ex25),
            other => Err(Error::invalid_parameter("kind in {ex21, ex22, ex25}", other.to_string())),
        }
    }
}

/// One maximal interval on which the base tail has a single closed form.
///
/// Boundaries are realized once as exact `f64` positions (`lo_f`,
/// `hi_f`); every evaluation measures offsets against these fixed
/// numbers, so the tail is exactly piecewise-polynomial with respect to
/// them and quadrature cells anchored at the same positions never see
/// round-trip noise.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    /// ln of the left endpoint (`-inf` encodes 0).
    pub ln_lo: f64,
    /// ln of the right endpoint (`+inf` for the final plateau).
    pub ln_hi: f64,
    /// Exact f64 position of the left endpoint (0 for the head).
    pub lo_f: f64,
    /// Exact f64 position of the right endpoint (may be inf).
    pub hi_f: f64,
    pub kind: SegKind,
}

#[derive(Debug, Clone, Copy)]
pub enum SegKind {
    /// Affine in `x`, interpolating `v_lo` at `ln_lo` and `v_hi` at `ln_hi`.
    RampX { v_lo: Mag, v_hi: Mag },
    /// Affine in `sqrt(x)` between the same endpoints.
    RampSqrt { v_lo: Mag, v_hi: Mag },
    /// Constant value.
    Plateau { v: Mag },
}

impl Segment {
    fn value_hi(&self) -> Mag {
        match self.kind {
            SegKind::RampX { v_hi, .. } | SegKind::RampSqrt { v_hi, .. } => v_hi,
            SegKind::Plateau { v } => v,
        }
    }
}

/// Serialized form: parameters are the source of truth, segment tables are
/// rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TailSpec {
    pub kind: Family,
    pub m: u32,
    pub alpha: f64,
    pub x1: f64,
    pub n_max: usize,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub truncated: bool,
}

/// A piecewise tail `G(x) = F(x + shift)^m` with exact segment forms.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct PiecewiseTail {
    family: Family,
    m: u32,
    alpha: f64,
    x1: f64,
    n_max: usize,
    shift: f64,
    /// ln of the generated breakpoints `x_1 .. x_N`.
    ln_points: Vec<f64>,
    segments: Vec<Segment>,
    /// True when the requested `n_max` ran past the position cap.
    truncated: bool,
    /// Mean of the represented (power-m) distribution before shifting.
    base_mean: Mag,
    /// Portion of `base_mean` contributed by the analytic continuation
    /// beyond the stored segments.
    far_tail_mean: Mag,
}

/// Exponents describing one family generation, all in units of ln(x_n).
struct GenExponents {
    /// multiplier from ln x_n to ln x_{n+1} plus offset
    ln_next_mul: f64,
    ln_next_add: f64,
    /// tail value exponents
    ramp_lo: f64,
    plateau_exp: f64,
    plateau_add: f64,
}

impl GenExponents {
    fn new(family: Family, m: u32, alpha: f64) -> GenExponents {
        let mf = m as f64;
        match family {
            Family::Ex21 => GenExponents {
                ln_next_mul: 2.0 - 1.0 / (mf * alpha),
                ln_next_add: 0.0,
                ramp_lo: -alpha,
                plateau_exp: -2.0 * alpha + 1.0 / mf,
                plateau_add: 0.0,
            },
            Family::Ex22 => GenExponents {
                ln_next_mul: 1.0 + 1.0 / alpha,
                ln_next_add: 0.0,
                ramp_lo: -alpha,
                plateau_exp: -alpha - 1.0,
                plateau_add: 0.0,
            },
            Family::Ex25 => GenExponents {
                ln_next_mul: 2.0,
                ln_next_add: 2.0 * LN_2,
                ramp_lo: -alpha,
                plateau_exp: -2.0 * alpha,
                plateau_add: -2.0 * alpha * LN_2,
            },
        }
    }

    fn ln_next(&self, ln_x: f64) -> f64 {
        self.ln_next_mul * ln_x + self.ln_next_add
    }

    fn ramp_lo_value(&self, ln_x: f64) -> Mag {
        Mag::from_ln(self.ramp_lo * ln_x)
    }

    fn plateau_value(&self, ln_x: f64) -> Mag {
        Mag::from_ln(self.plateau_exp * ln_x + self.plateau_add)
    }
}

impl PiecewiseTail {
    /// Builds one of the example families, checking the strict parameter
    /// constraints of the chosen kind.
    pub fn build_example(family: Family, m: u32, alpha: f64, x1: f64, n_max: usize) -> Result<PiecewiseTail> {
        if m < 1 {
            return Err(Error::invalid_parameter("m >= 1", format!("m = {m}")));
        }
        if n_max < 1 {
            return Err(Error::invalid_parameter("n_max >= 1", format!("n_max = {n_max}")));
        }
        if !alpha.is_finite() || !x1.is_finite() {
            return Err(Error::invalid_parameter("finite parameters", format!("alpha = {alpha}, x1 = {x1}")));
        }
        let mf = m as f64;
        match family {
            Family::Ex21 => {
                if !(alpha > 1.0 / mf && alpha < 1.0 + 1.0 / mf) {
                    return Err(Error::invalid_parameter(
                        "alpha in (1/m, 1 + 1/m)",
                        format!("alpha = {alpha}, m = {m}"),
                    ));
                }
                let bound = 4f64.powf(mf * alpha / (mf * alpha - 1.0));
                if !(x1 > bound) {
                    return Err(Error::invalid_parameter(
                        "x1 > 4^(m alpha / (m alpha - 1))",
                        format!("x1 = {x1}, bound = {bound:.6}"),
                    ));
                }
            }
            Family::Ex22 => {
                if !(alpha > 2.0 + 2.0 / mf) {
                    return Err(Error::invalid_parameter(
                        "alpha > 2 + 2/m",
                        format!("alpha = {alpha}, m = {m}"),
                    ));
                }
                let bound = 4f64.powf(alpha);
                if !(x1 > bound) {
                    return Err(Error::invalid_parameter(
                        "x1 > 4^alpha",
                        format!("x1 = {x1}, bound = {bound:.6}"),
                    ));
                }
            }
            Family::Ex25 => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::invalid_parameter("alpha in (0, 1)", format!("alpha = {alpha}")));
                }
                if !(x1 > 1.0) {
                    return Err(Error::invalid_parameter("x1 > 1", format!("x1 = {x1}")));
                }
                if !(mf > 1.0 / alpha && mf < 2.0 / alpha) {
                    return Err(Error::invalid_parameter(
                        "m in (1/alpha, 2/alpha)",
                        format!("m = {m}, alpha = {alpha}"),
                    ));
                }
            }
        }

        let exps = GenExponents::new(family, m, alpha);
        let ln_x1 = x1.ln();
        let mut ln_points = vec![ln_x1];
        let mut truncated = false;
        while ln_points.len() < n_max {
            let next = exps.ln_next(*ln_points.last().unwrap());
            let ramp_start = match family {
                Family::Ex22 => 2.0 * next,
                _ => next,
            };
            if ramp_start > LN_CAP {
                truncated = true;
                break;
            }
            ln_points.push(next);
        }

        let segments = build_segments(family, alpha, &exps, &ln_points);
        let mut dist = PiecewiseTail {
            family,
            m,
            alpha,
            x1,
            n_max,
            shift: 0.0,
            ln_points,
            segments,
            truncated,
            base_mean: Mag::ZERO,
            far_tail_mean: Mag::ZERO,
        };
        let (mean, far) = dist.integral_from(Mag::ZERO, dist.m);
        dist.base_mean = mean;
        dist.far_tail_mean = far;
        if !dist.base_mean.is_finite() {
            return Err(Error::NonIntegrable(format!(
                "{} m={} alpha={}",
                family.as_str(),
                m,
                alpha
            )));
        }
        Ok(dist)
    }

    pub fn from_spec(spec: &TailSpec) -> Result<PiecewiseTail> {
        let mut d = PiecewiseTail::build_example(spec.kind, spec.m, spec.alpha, spec.x1, spec.n_max)?;
        d.shift = spec.shift;
        Ok(d)
    }

    pub fn to_spec(&self) -> TailSpec {
        TailSpec {
            kind: self.family,
            m: self.m,
            alpha: self.alpha,
            x1: self.x1,
            n_max: self.n_max,
            shift: self.shift,
            truncated: self.truncated,
        }
    }

    /// Returns a copy with tail evaluated at `x + a` (support moves left).
    pub fn shifted(&self, a: f64) -> PiecewiseTail {
        let mut d = self.clone();
        d.shift += a;
        d
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// ln of the generated breakpoints.
    pub fn ln_points(&self) -> &[f64] {
        &self.ln_points
    }

    /// Breakpoints of the n-th generation in x coordinates (base space):
    /// ramp start and plateau start.
    pub fn generation_bounds_ln(&self, n: usize) -> (f64, f64) {
        let ln = self.ln_points[n];
        match self.family {
            Family::Ex22 => (2.0 * ln, 2.0 * ln + 2.0 * LN_2),
            _ => (ln, ln + LN_2),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    // ------------------------------------------------------------------
    // evaluation
    // ------------------------------------------------------------------

    fn segment_index(&self, ln_x: f64, left_closed: bool) -> usize {
        // segments: ln_lo of the first is -inf, so idx >= 1 after the search
        let idx = if left_closed {
            self.segments.partition_point(|s| s.ln_lo <= ln_x)
        } else {
            self.segments.partition_point(|s| s.ln_lo < ln_x)
        };
        idx.saturating_sub(1)
    }

    /// ln of the base tail (power 1, no shift) at a positive point.
    fn base_ln_tail(&self, pt: Pt) -> f64 {
        let seg = &self.segments[self.segment_index(pt.ln_x, true)];
        match seg.kind {
            SegKind::Plateau { v } => v.ln(),
            SegKind::RampX { v_lo, v_hi } => {
                let (w_lo, w_hi) = ramp_weights_x(seg, pt);
                (v_lo * Mag::from_f64(w_lo) + v_hi * Mag::from_f64(w_hi)).ln()
            }
            SegKind::RampSqrt { v_lo, v_hi } => {
                let (w_lo, w_hi) = ramp_weights_sqrt(seg, pt);
                (v_lo * Mag::from_f64(w_lo) + v_hi * Mag::from_f64(w_hi)).ln()
            }
        }
    }

    /// ln of the represented tail at `x` (with power and shift applied).
    pub fn ln_tail(&self, x: f64) -> f64 {
        let y = x + self.shift;
        if y <= 0.0 {
            return 0.0;
        }
        self.m as f64 * self.base_ln_tail(Pt::from_f64(y))
    }

    /// Tail at a point given as `ln x` (x > 0 in user coordinates).
    pub fn ln_tail_at_ln(&self, ln_x: f64) -> f64 {
        self.ln_tail_pt(Pt::from_ln(ln_x))
    }

    /// Tail at an exact evaluation point.
    pub fn ln_tail_pt(&self, pt: Pt) -> f64 {
        match self.shift_pt(pt) {
            Some(p) => self.m as f64 * self.base_ln_tail(p),
            None => 0.0,
        }
    }

    /// Applies the shift to an evaluation point; None when nonpositive.
    fn shift_pt(&self, pt: Pt) -> Option<Pt> {
        if self.shift == 0.0 {
            return Some(pt);
        }
        if pt.x.is_finite() {
            let y = pt.x + self.shift;
            if y <= 0.0 {
                None
            } else {
                Some(Pt::from_f64(y))
            }
        } else {
            // beyond f64 the shift is below resolution
            Some(pt)
        }
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.ln_tail(x).exp()
    }

    /// Density of the represented distribution at `x`, left-derivative
    /// policy at breakpoints.
    pub fn density(&self, x: f64) -> Mag {
        let y = x + self.shift;
        if y <= 0.0 {
            return Mag::ZERO;
        }
        self.density_powered(Pt::from_f64(y), self.m)
    }

    pub fn density_at_ln(&self, ln_x: f64) -> Mag {
        self.density_pt(Pt::from_ln(ln_x))
    }

    pub fn density_pt(&self, pt: Pt) -> Mag {
        match self.shift_pt(pt) {
            Some(p) => self.density_powered(p, self.m),
            None => Mag::ZERO,
        }
    }

    fn density_powered(&self, pt: Pt, power: u32) -> Mag {
        let base_f = self.base_density(pt);
        if power == 1 || base_f.is_zero() {
            return base_f;
        }
        let ln_t = self.base_ln_tail(pt);
        Mag::from_f64(power as f64) * Mag::from_ln((power - 1) as f64 * ln_t) * base_f
    }

    /// Base density (power 1) at `ln y`; left-derivative at breakpoints.
    ///
    /// Positions that round onto a boundary from computations like
    /// `x - u` with `u` below the f64 spacing of `x` must still read the
    /// left segment, so the lookup snaps a few ulps down.
    fn base_density(&self, pt: Pt) -> Mag {
        let snap = 64.0 * f64::EPSILON * pt.ln_x.abs().max(1.0);
        let seg = &self.segments[self.segment_index(pt.ln_x - snap, false)];
        match seg.kind {
            SegKind::Plateau { .. } => Mag::ZERO,
            SegKind::RampX { v_lo, v_hi } => {
                let width = seg_width_mag(seg);
                v_lo.sub_or_zero(v_hi) / width
            }
            SegKind::RampSqrt { v_lo, v_hi } => {
                let s_width = seg_s_width_mag(seg);
                let ds = v_lo.sub_or_zero(v_hi) / s_width;
                ds * Mag::from_ln(-0.5 * pt.ln_x - LN_2)
            }
        }
    }

    /// Window mass `P(X in (x, x+T])`, computed as a sum of nonnegative
    /// per-segment drops of the base tail times the power factor, so the
    /// result keeps relative accuracy even when both tails underflow.
    ///
    /// Widths are carried separately from positions: at probes where `T`
    /// falls below the f64 spacing of `x`, the drop still comes out as
    /// slope times width instead of rounding to zero.
    pub fn window(&self, x: f64, t: f64) -> Mag {
        debug_assert!(t > 0.0);
        let lo = x + self.shift;
        let hi = x + t + self.shift;
        if hi <= 0.0 {
            return Mag::ZERO;
        }
        let (lo, width) = if lo < 0.0 { (0.0, hi) } else { (lo, t) };
        self.window_powered(lo, width, self.m)
    }

    pub(crate) fn window_powered(&self, lo: f64, width: f64, power: u32) -> Mag {
        let mut drop = Mag::ZERO;
        let mut ln_end = f64::NEG_INFINITY;
        for p in self.pieces(lo, width) {
            drop = drop + piece_drop(&p);
            ln_end = p.ln_end();
        }
        if power == 1 || drop.is_zero() {
            return drop;
        }
        // a^k - b^k = (a-b) * sum_j a^j b^{k-1-j}
        let la = if lo <= 0.0 { 0.0 } else { self.base_ln_tail(lo.ln()) };
        let lb = self.base_ln_tail(ln_end);
        let mut factor = Mag::ZERO;
        for j in 0..power {
            factor = factor + Mag::from_ln(j as f64 * la + (power - 1 - j) as f64 * lb);
        }
        drop * factor
    }

    /// Splits `[lo, lo + width]` into per-segment pieces with exact
    /// widths: the last piece gets the remainder so the widths always sum
    /// to `width` even when `lo + width` is not resolvable in f64.
    fn pieces(&self, lo: f64, width: f64) -> Vec<Piece<'_>> {
        let mut out = Vec::new();
        if !(width > 0.0) {
            return out;
        }
        let ln_lo = if lo <= 0.0 { f64::NEG_INFINITY } else { lo.ln() };
        let mut idx = self.segment_index(ln_lo, true);
        let mut start = lo;
        let mut remaining = width;
        while remaining > 0.0 && idx < self.segments.len() {
            let seg = &self.segments[idx];
            let seg_lo = if seg.ln_lo.is_finite() { seg.ln_lo.exp() } else { 0.0 };
            let seg_hi = seg.ln_hi.exp();
            let w = if seg_hi.is_finite() && seg_hi - start < remaining && seg_hi - start > 0.0 {
                seg_hi - start
            } else {
                remaining
            };
            out.push(Piece { seg, seg_lo, seg_hi, off: start - seg_lo, start, width: w });
            remaining -= w;
            // guard against stalls when a boundary coincides with start
            if w <= 0.0 {
                remaining = 0.0;
            }
            start = seg_hi;
            idx += 1;
        }
        out
    }

    // ------------------------------------------------------------------
    // integrals
    // ------------------------------------------------------------------

    /// Integral of the represented tail over `[lo, hi]` in user
    /// coordinates; `hi = f64::INFINITY` extends through the analytic
    /// continuation of the breakpoint sequence.
    pub fn tail_integral(&self, lo: f64, hi: f64) -> Mag {
        self.tail_integral_powered(lo, hi, self.m)
    }

    /// Same with an explicit total power (used by the power transform).
    pub fn tail_integral_powered(&self, lo: f64, hi: f64, power: u32) -> Mag {
        let a = lo + self.shift;
        let b = hi + self.shift;
        if !(b > a) {
            return Mag::ZERO;
        }
        let mut total = Mag::ZERO;
        // tail is 1 below the support
        if a < 0.0 {
            total = total + Mag::from_f64(b.min(0.0) - a);
        }
        if b <= 0.0 {
            return total;
        }
        let a = a.max(0.0);
        if b.is_finite() {
            total + self.integral_range(a, b, power)
        } else {
            let (full, _) = self.integral_from(Mag::from_f64(a), power);
            total + full
        }
    }

    /// Mean of the represented distribution (shift included).
    pub fn mean(&self) -> f64 {
        self.base_mean.to_f64() - self.shift
    }

    /// Mean plus the contribution of the analytic continuation beyond the
    /// stored horizon (for truncation reports).
    pub fn mean_detail(&self) -> (f64, f64) {
        (self.mean(), self.far_tail_mean.to_f64())
    }

    /// `E X^+` of the represented distribution.
    pub fn mean_pos(&self) -> f64 {
        self.tail_integral(0.0, f64::INFINITY).to_f64()
    }

    fn integral_range(&self, a: f64, b: f64, power: u32) -> Mag {
        debug_assert!(a >= 0.0 && b > a && b.is_finite());
        let mut total = Mag::ZERO;
        for p in self.pieces(a, b - a) {
            total = total + piece_integral(&p, power);
        }
        total
    }

    /// Integral of the represented tail over the window `(x, x+t]` in user
    /// coordinates, width-exact like [`PiecewiseTail::window`].
    pub fn tail_integral_window(&self, x: f64, t: f64) -> Mag {
        let lo = x + self.shift;
        let hi = x + t + self.shift;
        if hi <= 0.0 {
            return Mag::from_f64(t);
        }
        let mut total = Mag::ZERO;
        let (lo, width) = if lo < 0.0 {
            total = total + Mag::from_f64(-lo);
            (0.0, hi)
        } else {
            (lo, t)
        };
        for p in self.pieces(lo, width) {
            total = total + piece_integral(&p, self.m);
        }
        total
    }

    /// Integral of the base-power tail from position `from` (>= 0, f64)
    /// to infinity, following the analytic continuation of the breakpoint
    /// sequence past the stored segments; returns (integral, continuation
    /// part). Every f64 position falls inside the stored segments, so the
    /// continuation only involves whole virtual generations.
    fn integral_from(&self, from: Mag, power: u32) -> (Mag, Mag) {
        let ln_from = from.ln();
        let final_plat_ln = self.segments.last().unwrap().ln_lo;
        let a = if ln_from.is_finite() { ln_from.exp() } else { 0.0 };
        let b = final_plat_ln.exp();
        let mut total = Mag::ZERO;
        if b > a {
            total = self.integral_range(a, b, power);
        }
        let far = self.continuation_integral(ln_from.max(final_plat_ln), power);
        (total + far, far)
    }

    /// Integral of the continuation from `ln_from` (inside the final
    /// stored plateau) to infinity, in log space.
    fn continuation_integral(&self, ln_from: f64, power: u32) -> Mag {
        let exps = GenExponents::new(self.family, self.m, self.alpha);
        let mut ln_x = *self.ln_points.last().unwrap();
        let mut total = Mag::ZERO;
        for iter in 0..500 {
            let ln_next = exps.ln_next(ln_x);
            let (plat_lo_ln, plat_hi_ln) = match self.family {
                Family::Ex22 => (2.0 * ln_x + 2.0 * LN_2, 2.0 * ln_next),
                _ => (ln_x + LN_2, ln_next),
            };
            let mut term = Mag::ZERO;
            if iter > 0 {
                // whole virtual ramp of this generation
                let va = exps.ramp_lo_value(ln_x);
                let vb = exps.plateau_value(ln_x);
                term = match self.family {
                    Family::Ex22 => {
                        let x = Mag::from_ln(ln_x);
                        ramp_sqrt_partial(x, x, va, vb, power)
                    }
                    _ => ramp_x_partial(Mag::from_ln(ln_x), va, vb, power),
                };
            }
            let lo_ln = plat_lo_ln.max(ln_from);
            if lo_ln < plat_hi_ln {
                let width = Mag::from_ln(plat_hi_ln).sub_or_zero(Mag::from_ln(lo_ln));
                term = term + exps.plateau_value(ln_x).powi(power as i32) * width;
            }
            total = total + term;
            if iter > 0 && !total.is_zero() && term.ln() < total.ln() - 60.0 {
                break;
            }
            ln_x = ln_next;
        }
        total
    }

    // ------------------------------------------------------------------
    // sampling
    // ------------------------------------------------------------------

    /// Inverse-transform sample: returns `x` with `tail(x) = u`.
    ///
    /// `u` below the final stored plateau value falls past the truncation
    /// horizon and maps to `+inf`; with 53-bit uniforms this cannot happen
    /// for any horizon deeper than a few breakpoints.
    pub fn sample(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        // target base tail value: u^(1/m)
        let target = Mag::from_ln(u.ln() / self.m as f64);
        let idx = self.segments.partition_point(|s| s.value_hi() > target);
        if idx >= self.segments.len() {
            return f64::INFINITY;
        }
        let seg = &self.segments[idx];
        let x = match seg.kind {
            SegKind::Plateau { .. } => seg.ln_lo.exp(),
            SegKind::RampX { v_lo, v_hi } => {
                let r = v_lo.sub_or_zero(target).ratio(v_lo.sub_or_zero(v_hi));
                let lo = seg.ln_lo.exp();
                let hi = seg.ln_hi.exp();
                if !hi.is_finite() {
                    return f64::INFINITY;
                }
                lo + r.clamp(0.0, 1.0) * (hi - lo)
            }
            SegKind::RampSqrt { v_lo, v_hi } => {
                let r = v_lo.sub_or_zero(target).ratio(v_lo.sub_or_zero(v_hi));
                let s_lo = (0.5 * seg.ln_lo).exp();
                let s_hi = (0.5 * seg.ln_hi).exp();
                if !s_hi.is_finite() {
                    return f64::INFINITY;
                }
                let s = s_lo + r.clamp(0.0, 1.0) * (s_hi - s_lo);
                s * s
            }
        };
        x - self.shift
    }

    /// Finite segment boundaries in base coordinates, as ln values.
    pub fn breakpoints_ln(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            if s.ln_lo.is_finite() {
                out.push(s.ln_lo);
            }
        }
        out
    }

    /// Finite segment boundaries in user coordinates (shift applied),
    /// restricted to representable positions.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints_ln()
            .iter()
            .map(|l| l.exp() - self.shift)
            .filter(|b| b.is_finite())
            .collect()
    }
}

/// Barycentric ramp weights for a coordinate `c` in `[c_lo, c_hi]`, all
/// given as ln values. Falls back to log-space `expm1` when the endpoints
/// exceed `f64`, which is exact for the `hi = 2 lo` ramps of the families.
fn ramp_weights(ln_lo: f64, ln_hi: f64, ln_c: f64) -> (f64, f64) {
    if ln_hi <= 709.0 {
        let lo = if ln_lo.is_finite() { ln_lo.exp() } else { 0.0 };
        let hi = ln_hi.exp();
        let c = ln_c.exp();
        let w = hi - lo;
        (((hi - c) / w).clamp(0.0, 1.0), ((c - lo) / w).clamp(0.0, 1.0))
    } else {
        debug_assert!((ln_hi - ln_lo - LN_2).abs() < 1e-12, "far ramps double their start");
        let r = (ln_c - ln_lo).exp(); // in [1, 2]
        ((2.0 - r).clamp(0.0, 1.0), (r - 1.0).clamp(0.0, 1.0))
    }
}

/// Width `hi - lo` as a magnitude from ln endpoints.
fn width_mag(ln_lo: f64, ln_hi: f64) -> Mag {
    if ln_hi <= 709.0 {
        let lo = if ln_lo.is_finite() { ln_lo.exp() } else { 0.0 };
        Mag::from_f64(ln_hi.exp() - lo)
    } else {
        Mag::from_ln(ln_hi).sub_or_zero(Mag::from_ln(ln_lo))
    }
}

/// A sub-interval `[start, start + width]` of one segment, with the offset
/// from the segment's left endpoint carried explicitly so widths below the
/// f64 spacing of `start` still contribute.
struct Piece<'a> {
    seg: &'a Segment,
    seg_lo: f64,
    seg_hi: f64,
    off: f64,
    start: f64,
    width: f64,
}

impl Piece<'_> {
    fn ln_end(&self) -> f64 {
        if self.start == 0.0 {
            return self.width.ln();
        }
        self.start.ln() + (self.width / self.start).ln_1p()
    }

    /// Interpolated base tail values at the piece endpoints, evaluated
    /// from offsets so they stay exact at any magnitude.
    fn endpoint_values(&self, v_lo: Mag, v_hi: Mag) -> (Mag, Mag) {
        let w = self.seg_hi - self.seg_lo;
        let interp = |off: f64| {
            let wh = (off / w).clamp(0.0, 1.0);
            let wl = ((w - off) / w).clamp(0.0, 1.0);
            v_lo * Mag::from_f64(wl) + v_hi * Mag::from_f64(wh)
        };
        (interp(self.off), interp(self.off + self.width))
    }

    /// Same in sqrt-coordinates for `RampSqrt` segments.
    fn endpoint_values_sqrt(&self, v_lo: Mag, v_hi: Mag) -> (Mag, Mag, f64, f64) {
        let s_lo = self.seg_lo.sqrt();
        let s_hi = self.seg_hi.sqrt();
        let w = s_hi - s_lo;
        let s_a = self.start.sqrt();
        // sqrt(start + width) - sqrt(start), stable for any width
        let ds = self.width / (s_a + (self.start + self.width).sqrt());
        let interp = |off: f64| {
            let wh = (off / w).clamp(0.0, 1.0);
            let wl = ((w - off) / w).clamp(0.0, 1.0);
            v_lo * Mag::from_f64(wl) + v_hi * Mag::from_f64(wh)
        };
        let off_a = s_a - s_lo;
        (interp(off_a), interp(off_a + ds), s_a, ds)
    }
}

/// Base tail drop over one piece.
fn piece_drop(p: &Piece<'_>) -> Mag {
    match p.seg.kind {
        SegKind::Plateau { .. } => Mag::ZERO,
        SegKind::RampX { v_lo, v_hi } => {
            v_lo.sub_or_zero(v_hi) * Mag::from_f64(p.width / (p.seg_hi - p.seg_lo))
        }
        SegKind::RampSqrt { v_lo, v_hi } => {
            let s_w = p.seg_hi.sqrt() - p.seg_lo.sqrt();
            let ds = p.width / (p.start.sqrt() + (p.start + p.width).sqrt());
            v_lo.sub_or_zero(v_hi) * Mag::from_f64(ds / s_w)
        }
    }
}

/// Integral of `tail^power` over one piece.
fn piece_integral(p: &Piece<'_>, power: u32) -> Mag {
    match p.seg.kind {
        SegKind::Plateau { v } => v.powi(power as i32) * Mag::from_f64(p.width),
        SegKind::RampX { v_lo, v_hi } => {
            let (va, vb) = p.endpoint_values(v_lo, v_hi);
            ramp_x_partial(Mag::from_f64(p.width), va, vb, power)
        }
        SegKind::RampSqrt { v_lo, v_hi } => {
            let (va, vb, s_a, ds) = p.endpoint_values_sqrt(v_lo, v_hi);
            ramp_sqrt_partial(Mag::from_f64(s_a), Mag::from_f64(ds), va, vb, power)
        }
    }
}

/// `int_a^b interp(x)^k dx = w/(k+1) * sum_j va^j vb^{k-j}` for a tail
/// affine in `x` with endpoint values `va`, `vb` and width `w`.
fn ramp_x_partial(width: Mag, va: Mag, vb: Mag, k: u32) -> Mag {
    let mut s = Mag::ZERO;
    for j in 0..=k {
        s = s + va.powi(j as i32) * vb.powi((k - j) as i32);
    }
    width * s / Mag::from_f64((k + 1) as f64)
}

/// Integral in `x` of a sqrt-affine tail power over one `s`-interval
/// `[s_a, s_a + s_w]`:
/// `2 s_w * sum_j va^j vb^{k-j} (s_a/(k+1) + s_w (k-j+1)/((k+1)(k+2)))`.
fn ramp_sqrt_partial(s_a: Mag, s_w: Mag, va: Mag, vb: Mag, k: u32) -> Mag {
    let kp1 = Mag::from_f64((k + 1) as f64);
    let kp2 = Mag::from_f64((k + 2) as f64);
    let mut s = Mag::ZERO;
    for j in 0..=k {
        let coef = s_a / kp1 + s_w * Mag::from_f64((k - j + 1) as f64) / (kp1 * kp2);
        s = s + va.powi(j as i32) * vb.powi((k - j) as i32) * coef;
    }
    Mag::from_f64(2.0) * s_w * s
}

fn build_segments(family: Family, alpha: f64, exps: &GenExponents, ln_points: &[f64]) -> Vec<Segment> {
    let mut segs = Vec::with_capacity(2 * ln_points.len() + 1);
    let ln_x1 = ln_points[0];
    // head: affine (in x or sqrt x) from 1 at 0 down to x1^-alpha
    let head_hi = match family {
        Family::Ex22 => 2.0 * ln_x1,
        _ => ln_x1,
    };
    let head_kind = match family {
        Family::Ex22 => SegKind::RampSqrt { v_lo: Mag::ONE, v_hi: Mag::from_ln(-alpha * ln_x1) },
        _ => SegKind::RampX { v_lo: Mag::ONE, v_hi: Mag::from_ln(-alpha * ln_x1) },
    };
    segs.push(Segment {
        ln_lo: f64::NEG_INFINITY,
        ln_hi: head_hi,
        lo_f: 0.0,
        hi_f: head_hi.exp(),
        kind: head_kind,
    });

    for (n, &ln_x) in ln_points.iter().enumerate() {
        let v_lo = exps.ramp_lo_value(ln_x);
        let v_hi = exps.plateau_value(ln_x);
        let (ramp_lo, ramp_hi) = match family {
            Family::Ex22 => (2.0 * ln_x, 2.0 * ln_x + 2.0 * LN_2),
            _ => (ln_x, ln_x + LN_2),
        };
        let kind = match family {
            Family::Ex22 => SegKind::RampSqrt { v_lo, v_hi },
            _ => SegKind::RampX { v_lo, v_hi },
        };
        segs.push(Segment { ln_lo: ramp_lo, ln_hi: ramp_hi, lo_f: ramp_lo.exp(), hi_f: ramp_hi.exp(), kind });
        let plat_hi = if n + 1 < ln_points.len() {
            match family {
                Family::Ex22 => 2.0 * ln_points[n + 1],
                _ => ln_points[n + 1],
            }
        } else {
            f64::INFINITY
        };
        segs.push(Segment {
            ln_lo: ramp_hi,
            ln_hi: plat_hi,
            lo_f: ramp_hi.exp(),
            hi_f: plat_hi.exp(),
            kind: SegKind::Plateau { v: v_hi },
        });
    }
    segs
}

/// ln(x + shift) from ln x, or None when the shifted point is nonpositive.
fn shifted_ln(ln_x: f64, shift: f64) -> Option<f64> {
    if shift == 0.0 {
        return Some(ln_x);
    }
    if ln_x > 709.0 {
        // shift is negligible at this magnitude
        return Some(ln_x + (shift * (-ln_x).exp()).ln_1p());
    }
    let y = ln_x.exp() + shift;
    if y <= 0.0 {
        None
    } else {
        Some(y.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex21_canonical() -> PiecewiseTail {
        PiecewiseTail::build_example(Family::Ex21, 1, 1.5, 100.0, 12).unwrap()
    }

    #[test]
    fn ex21_breakpoints_follow_recurrence() {
        let d = PiecewiseTail::build_example(Family::Ex21, 1, 1.5, 100.0, 3).unwrap();
        let pts = d.ln_points();
        assert_eq!(pts.len(), 3);
        let x2 = pts[1].exp();
        assert_relative_eq!(x2, 100f64.powf(4.0 / 3.0), max_relative = 1e-13);
        assert_relative_eq!(pts[2], pts[1] * 4.0 / 3.0, max_relative = 1e-13);
        assert!(x2 > 4.0 * 100.0);
    }

    #[test]
    fn ex21_tail_values_at_ramp_endpoints() {
        let d = ex21_canonical();
        assert_relative_eq!(d.tail(0.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(d.tail(-5.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(d.tail(100.0), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(d.tail(200.0), 1e-4, max_relative = 1e-12);
        // ramp interior: x_1^-a + (x_1^{-2a-1+1/m} - x_1^{-a-1}) (x - x_1)
        let slope = 100f64.powf(-3.0) - 100f64.powf(-2.5);
        assert_relative_eq!(d.tail(150.0), 1e-3 + slope * 50.0, max_relative = 1e-12);
    }

    #[test]
    fn power_two_squares_the_base() {
        let d1 = PiecewiseTail::build_example(Family::Ex21, 2, 0.9, 2000.0, 6).unwrap();
        for &x in &[0.5f64, 1500.0, 2500.0, 5000.0, 1e5] {
            let base = d1.base_ln_tail(x.ln());
            assert_relative_eq!(d1.ln_tail(x), 2.0 * base, max_relative = 1e-13);
        }
    }

    #[test]
    fn density_matches_ramp_slope_and_left_policy() {
        let d = ex21_canonical();
        // plateau interior
        assert!(d.density(300.0).is_zero());
        // ramp interior: x_n^{-a-1} - x_n^{-2a-1+1/m}
        let expect = 100f64.powf(-2.5) - 100f64.powf(-3.0);
        assert_relative_eq!(d.density(150.0).to_f64(), expect, max_relative = 1e-12);
        // left-derivative at the plateau start keeps the ramp slope
        assert_relative_eq!(d.density(200.0).to_f64(), expect, max_relative = 1e-12);
        // left-derivative at a ramp start sees the previous plateau
        let x2 = d.ln_points()[1].exp();
        assert!(d.density(x2).is_zero());
        // one-sided difference quotient agrees
        let eps = 1e-4;
        let quotient = (d.tail(150.0 - eps) - d.tail(150.0)) / eps;
        assert_relative_eq!(d.density(150.0).to_f64(), quotient, max_relative = 1e-6);
    }

    #[test]
    fn deep_tail_monotone_and_continuous() {
        let d = ex21_canonical();
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let ln_x = -2.0 + i as f64 * (690.0 + 2.0) / 400.0;
            let lt = d.ln_tail_at_ln(ln_x);
            assert!(lt <= prev + 1e-12, "tail must be nonincreasing");
            prev = lt;
        }
        // continuity at every stored boundary: the change across [b-eps,
        // b+eps] is explained by the neighboring slopes, no extra jump
        for b_ln in d.breakpoints_ln() {
            let x = b_ln.exp();
            if !x.is_finite() {
                continue;
            }
            let eps = 1e-9 * x;
            let la = d.ln_tail(x - eps);
            let lc = d.ln_tail(x + eps);
            let change = Mag::from_ln(la).sub_or_zero(Mag::from_ln(lc));
            let slope = d.density(x - eps / 2.0).max(d.density(x + 1.5 * eps));
            let allowed = slope * Mag::from_f64(2.0 * eps) * Mag::from_f64(1.01)
                + Mag::from_ln(la) * Mag::from_f64(1e-12);
            assert!(change <= allowed, "jump at {x}: ln {la} vs {lc}");
        }
    }

    #[test]
    fn sandwich_bounds_ex21() {
        // x^{-2a+1/m} <= base tail <= 2^a x^{-a} for x1 <= x inside the
        // generated horizon
        let d = ex21_canonical();
        let a = 1.5;
        let ln_horizon = d.ln_points().last().unwrap() + LN_2;
        for i in 0..=200 {
            let ln_x = 100f64.ln() + i as f64 * (ln_horizon - 100f64.ln()) / 200.0;
            let lt = d.base_ln_tail(ln_x);
            assert!(lt >= (-2.0 * a + 1.0) * ln_x - 1e-9, "lower sandwich at ln x = {ln_x}");
            assert!(lt <= a * LN_2 - a * ln_x + 1e-9, "upper sandwich at ln x = {ln_x}");
        }
    }

    #[test]
    fn window_telescopes_exactly() {
        let d = ex21_canonical();
        let x = 95.0;
        let t = 7.0;
        let n = 64;
        let mut sum = Mag::ZERO;
        for k in 0..n {
            sum = sum + d.window(x + k as f64 * t, t);
        }
        let direct = d.window(x, n as f64 * t);
        assert_relative_eq!(sum.ln(), direct.ln(), epsilon = 1e-12);
        // plateau interior window is exactly zero
        assert!(d.window(250.0, 10.0).is_zero());
    }

    #[test]
    fn window_deep_in_tail_keeps_relative_accuracy() {
        let d = ex21_canonical();
        // probe inside a far ramp: window = slope * T exactly
        let n = 10;
        let (ramp_lo, _) = d.generation_bounds_ln(n);
        let x = ramp_lo.exp() * 1.2;
        let t = 1.0;
        let w = d.window(x, t);
        let f = d.density(x + 0.5 * t);
        assert_relative_eq!(w.ln(), f.ln(), epsilon = 1e-9);
    }

    #[test]
    fn mean_matches_quadrature_oracle() {
        let d = ex21_canonical();
        // oracle: adaptive quadrature of the closed-form tail on the
        // representable range plus a sandwich bound for the remainder
        let spec = crate::quad::QuadSpec::with_rel_tol(1e-12);
        let cells = crate::quad::split_cells(f64::NEG_INFINITY, (1e30f64).ln(), &d.breakpoints_ln());
        let f = |y: Mag| Mag::from_ln(d.ln_tail_at_ln(y.ln()));
        let r = crate::quad::integrate_cells(&f, &cells, &spec);
        let remainder_hi = 2f64.powf(1.5) * 2.0 * (1e30f64).powf(-0.5);
        assert!(remainder_hi < 1e-12);
        assert_relative_eq!(d.mean(), r.value.to_f64(), max_relative = 1e-10);
    }

    #[test]
    fn mean_shift_translation() {
        let d = ex21_canonical();
        let s = d.shifted(30.0);
        assert_relative_eq!(s.mean(), d.mean() - 30.0, max_relative = 1e-12);
        // mean_pos of the nonnegative base equals its mean
        assert_relative_eq!(d.mean_pos(), d.mean(), max_relative = 1e-12);
        // shift equivariance of tails
        assert_relative_eq!(s.tail(70.0), d.tail(100.0), max_relative = 1e-13);
    }

    #[test]
    fn ex22_continuity_and_head() {
        let d = PiecewiseTail::build_example(Family::Ex22, 1, 4.5, 600.0, 6).unwrap();
        // head is affine in sqrt(x): tail(x1^2) = x1^-alpha
        assert_relative_eq!(d.tail(600.0 * 600.0), 600f64.powf(-4.5), max_relative = 1e-11);
        // ramp end meets plateau: tail(4 x1^2) = x1^{-a-1}
        assert_relative_eq!(d.tail(4.0 * 600.0 * 600.0), 600f64.powf(-5.5), max_relative = 1e-11);
        // mean finite
        assert!(d.mean() > 0.0 && d.mean().is_finite());
    }

    #[test]
    fn ex25_plateau_values() {
        let d = PiecewiseTail::build_example(Family::Ex25, 2, 0.75, 4.0, 8).unwrap();
        // base plateau value (2 x1)^{-2a}; represented tail is its square
        let expect = (2.0 * 4.0f64).powf(-2.0 * 0.75 * 2.0);
        assert_relative_eq!(d.tail(8.0), expect, max_relative = 1e-12);
        // x2 = (2 x1)^2 = 64
        assert_relative_eq!(d.ln_points()[1].exp(), 64.0, max_relative = 1e-13);
    }

    #[test]
    fn parameter_validation_names_constraint() {
        let e = PiecewiseTail::build_example(Family::Ex21, 1, 2.5, 100.0, 3).unwrap_err();
        assert!(e.to_string().contains("alpha in (1/m, 1 + 1/m)"), "{e}");
        let e = PiecewiseTail::build_example(Family::Ex21, 1, 1.5, 50.0, 3).unwrap_err();
        assert!(e.to_string().contains("x1 > 4^(m alpha"), "{e}");
        let e = PiecewiseTail::build_example(Family::Ex22, 1, 3.0, 600.0, 3).unwrap_err();
        assert!(e.to_string().contains("alpha > 2 + 2/m"), "{e}");
        let e = PiecewiseTail::build_example(Family::Ex25, 1, 0.75, 4.0, 3).unwrap_err();
        assert!(e.to_string().contains("m in (1/alpha, 2/alpha)"), "{e}");
        // strict boundaries rejected
        let e = PiecewiseTail::build_example(Family::Ex25, 1, 0.75, 1.0, 3).unwrap_err();
        assert!(e.to_string().contains("x1 > 1"), "{e}");
    }

    #[test]
    fn truncation_flag_on_exponent_range() {
        let d = PiecewiseTail::build_example(Family::Ex25, 2, 0.75, 4.0, 100).unwrap();
        assert!(d.truncated());
        assert!(d.ln_points().len() < 100);
        let d2 = PiecewiseTail::build_example(Family::Ex25, 2, 0.75, 4.0, 5).unwrap();
        assert!(!d2.truncated());
    }

    #[test]
    fn spec_roundtrip() {
        let d = PiecewiseTail::build_example(Family::Ex22, 1, 4.5, 600.0, 6).unwrap().shifted(12.5);
        let json = serde_json::to_string(&d.to_spec()).unwrap();
        let spec: TailSpec = serde_json::from_str(&json).unwrap();
        let d2 = PiecewiseTail::from_spec(&spec).unwrap();
        assert_eq!(d.to_spec(), d2.to_spec());
        for &x in &[0.0, 100.0, 3.6e5, 1e7] {
            assert_relative_eq!(d.ln_tail(x), d2.ln_tail(x), max_relative = 1e-15);
        }
    }

    #[test]
    fn sampling_inverts_the_tail() {
        let d = ex21_canonical();
        for &u in &[0.9, 0.5, 0.1, 1e-3, 1e-4, 2.5e-4, 1e-7] {
            let x = d.sample(u);
            assert_relative_eq!(d.tail(x), u, max_relative = 1e-9);
        }
        // plateau values map to the plateau start
        let x = d.sample(1e-4);
        assert_relative_eq!(x, 200.0, max_relative = 1e-9);
    }
}
