//! Convolution and tail-integral engine.
//!
//! Quadrature-backed quantities (two-fold convolution tails, local
//! convolution masses, the star integral, windowed middle integrals) are
//! integrated over cells split at the union of both factors' breakpoints
//! and their mirror images, so piecewise-polynomial integrands are exact
//! per cell and every result carries a certified error.
//!
//! n-fold convolutions go through [`Lattice`], a left-edge mass
//! discretization: moving every atom to its cell's left edge couples the
//! lattice sum below the true sum and above it after an `n * step` shift,
//! which yields guaranteed lower/upper values for window masses. A
//! bias-corrected point estimate (suffix read at half the accumulated
//! shift, linearly interpolated) sits between the brackets.

use crate::dist::HtDist;
use crate::error::{Error, Result};
use crate::logmag::Mag;
use crate::quad::{integrate_cells, split_cells, QuadResult, QuadSpec};

/// Boundaries where either factor's integrand can kink, clipped to
/// `(lo, hi)` and returned as ln positions for cell splitting.
fn mirror_boundaries(direct: &[f64], mirrored: &[f64], x: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(direct.len() + mirrored.len());
    for &b in direct {
        if b > lo && b < hi {
            out.push(b.ln());
        }
    }
    for &b in mirrored {
        let m = x - b;
        if m > lo && m < hi {
            out.push(m.ln());
        }
    }
    out
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v <= 0.0 {
        f64::NEG_INFINITY
    } else {
        v.ln()
    }
}

/// Tail of the two-fold convolution, `P(X + Y > x)`, via
/// `tail_G(x) + int_0^x tail_F(x - y) dG(y)` (the standing term is the
/// tail of the factor integrated out: `P(Y > x)` covers every `y` whose
/// `x - y` falls below `F`'s support).
///
/// Both factors must be supported on `[0, inf)` (or shifted consistently
/// so the sum of supports still starts below `x`).
pub fn conv2_tail(f: &HtDist, g: &HtDist, x: f64, spec: &QuadSpec) -> QuadResult {
    if x <= f.support_lo() + g.support_lo() {
        return QuadResult { value: Mag::ONE, error: Mag::ZERO, degraded: false };
    }
    let f_bps = f.breakpoints();
    let g_bps = g.breakpoints();
    let integrand = |y: Mag| {
        let yy = y.to_f64();
        let dens = g.density_at_ln(y.ln());
        if dens.is_zero() {
            return Mag::ZERO;
        }
        Mag::from_ln(f.ln_tail(x - yy)) * dens
    };
    let lo = g.support_lo().max(0.0);
    let bounds = mirror_boundaries(&g_bps, &f_bps, x, lo, x);
    let cells = split_cells(ln_or_neg_inf(lo), x.ln(), &bounds);
    let mut r = integrate_cells(&integrand, &cells, spec);
    r.value = r.value + Mag::from_ln(g.ln_tail(x));
    r
}

/// Local mass of the two-fold convolution, `P(X + Y in (x, x+T])`,
/// computed as `int_0^{x+T} P(X in (x-y, x+T-y]) dG(y)`: a positive
/// integrand of stable window masses, never a difference of two tails.
pub fn conv_local(f: &HtDist, g: &HtDist, x: f64, t: f64, spec: &QuadSpec) -> Result<QuadResult> {
    if t <= 0.0 {
        return Err(Error::InvalidWindow(format!("T = {t} must be positive")));
    }
    let f_bps = f.breakpoints();
    let g_bps = g.breakpoints();
    let hi = x + t;
    let integrand = |y: Mag| {
        let yy = y.to_f64();
        let dens = g.density_at_ln(y.ln());
        if dens.is_zero() {
            return Mag::ZERO;
        }
        f.window(x - yy, t) * dens
    };
    let lo = g.support_lo().max(0.0);
    let mut bounds = mirror_boundaries(&g_bps, &f_bps, x, lo, hi);
    bounds.extend(mirror_boundaries(&[], &f_bps, hi, lo, hi));
    if x > lo && x < hi {
        bounds.push(x.ln());
    }
    let cells = split_cells(ln_or_neg_inf(lo), hi.ln(), &bounds);
    Ok(integrate_cells(&integrand, &cells, spec))
}

/// The strong-subexponentiality integrand: `int_0^x tail(x-y) tail(y) dy`,
/// computed as twice the integral over `[0, x/2]` by symmetry.
pub fn star_integral(f: &HtDist, x: f64, spec: &QuadSpec) -> QuadResult {
    if x <= 0.0 {
        return QuadResult::ZERO;
    }
    let mut r = star_half(f, x, spec);
    r.value = r.value * Mag::from_f64(2.0);
    r.error = r.error * Mag::from_f64(2.0);
    r
}

/// One symmetric half of the star integral, `int_0^{x/2} tail(u) tail(x-u) du`.
pub fn star_half(f: &HtDist, x: f64, spec: &QuadSpec) -> QuadResult {
    let f_bps = f.breakpoints();
    let integrand = |u: Mag| {
        let uu = u.to_f64();
        Mag::from_ln(f.ln_tail(uu)) * Mag::from_ln(f.ln_tail(x - uu))
    };
    let half = 0.5 * x;
    let bounds = mirror_boundaries(&f_bps, &f_bps, x, 0.0, half);
    let cells = split_cells(f64::NEG_INFINITY, half.ln(), &bounds);
    integrate_cells(&integrand, &cells, spec)
}

/// Unnormalized full star integral without the symmetry shortcut; kept as
/// an independent route for validating the halved form.
pub fn star_integral_direct(f: &HtDist, x: f64, spec: &QuadSpec) -> QuadResult {
    if x <= 0.0 {
        return QuadResult::ZERO;
    }
    let f_bps = f.breakpoints();
    let integrand = |u: Mag| {
        let uu = u.to_f64();
        Mag::from_ln(f.ln_tail(uu)) * Mag::from_ln(f.ln_tail(x - uu))
    };
    let bounds = mirror_boundaries(&f_bps, &f_bps, x, 0.0, x);
    let cells = split_cells(f64::NEG_INFINITY, x.ln(), &bounds);
    integrate_cells(&integrand, &cells, spec)
}

/// `int_{x/2}^x tail(x-y) dF(y) / tail(x)`: the quantity whose positive
/// limit along ramp-end probes certifies non-membership in the
/// subexponential class. Computed directly (never as a difference of
/// convolution ratios), so values far below quadrature error of the
/// ratios are still meaningful.
pub fn t_quantity(f: &HtDist, x: f64, spec: &QuadSpec) -> QuadResult {
    if x <= 0.0 {
        return QuadResult::ZERO;
    }
    let f_bps = f.breakpoints();
    // substitute u = x - y: int_0^{x/2} tail(u) f(x - u) du
    let integrand = |u: Mag| {
        let uu = u.to_f64();
        let dens = f.density(x - uu);
        if dens.is_zero() {
            return Mag::ZERO;
        }
        Mag::from_ln(f.ln_tail(uu)) * dens
    };
    let half = 0.5 * x;
    let bounds = mirror_boundaries(&f_bps, &f_bps, x, 0.0, half);
    let cells = split_cells(f64::NEG_INFINITY, half.ln(), &bounds);
    let mut r = integrate_cells(&integrand, &cells, spec);
    let tail = Mag::from_ln(f.ln_tail(x));
    r.value = r.value / tail;
    r.error = r.error / tail;
    r
}

/// Which integrand the middle-window integral uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowMode {
    /// `tail(x-y) tail(y) dy` over the window (the C-otimes excess).
    TailVsTail,
    /// `window(x-y, T) dF(y)` over the window (the C^T excess).
    LocalVsMass { t: f64 },
}

/// Cross integral `int_lo^hi tail(x-y) tail(y) dy` on an arbitrary
/// sub-window of `[0, x]`.
pub fn cross_tail_integral(f: &HtDist, x: f64, lo: f64, hi: f64, spec: &QuadSpec) -> QuadResult {
    if !(hi > lo) {
        return QuadResult::ZERO;
    }
    let f_bps = f.breakpoints();
    let integrand = |y: Mag| {
        let yy = y.to_f64();
        Mag::from_ln(f.ln_tail(yy)) * Mag::from_ln(f.ln_tail(x - yy))
    };
    let bounds = mirror_boundaries(&f_bps, &f_bps, x, lo, hi);
    let cells = split_cells(ln_or_neg_inf(lo), hi.ln(), &bounds);
    integrate_cells(&integrand, &cells, spec)
}

/// Middle-window integral over `[h, x-h]`, the finite-horizon estimate of
/// `C-otimes - 2 E X` (tail mode, after dividing by `tail(x)`) or
/// `C^T - 2` (local mode, after dividing by the window mass).
pub fn window_integral(
    f: &HtDist,
    x: f64,
    h: f64,
    mode: WindowMode,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if !(h > 0.0 && h < 0.5 * x) {
        return Err(Error::InvalidWindow(format!("need 0 < h < x/2, got h = {h}, x = {x}")));
    }
    match mode {
        WindowMode::TailVsTail => {
            // symmetric integrand: twice the [h, x/2] part
            let mut r = cross_tail_integral(f, x, h, 0.5 * x, spec);
            r.value = r.value * Mag::from_f64(2.0);
            r.error = r.error * Mag::from_f64(2.0);
            Ok(r)
        }
        WindowMode::LocalVsMass { t } => {
            if t <= 0.0 {
                return Err(Error::InvalidWindow(format!("T = {t} must be positive")));
            }
            let f_bps = f.breakpoints();
            let integrand = |y: Mag| {
                let yy = y.to_f64();
                let dens = f.density_at_ln(y.ln());
                if dens.is_zero() {
                    return Mag::ZERO;
                }
                f.window(x - yy, t) * dens
            };
            let hi = x - h;
            let mut bounds = mirror_boundaries(&f_bps, &f_bps, x, h, hi);
            bounds.extend(mirror_boundaries(&[], &f_bps, x + t, h, hi));
            let cells = split_cells(h.ln(), hi.ln(), &bounds);
            Ok(integrate_cells(&integrand, &cells, spec))
        }
    }
}

/// Single-probe estimate of the shift-invariant excess
/// `C-otimes(F) - 2 E X^+`: the tail-vs-tail window integral over
/// `[h(x), x - h(x)]` divided by `tail(x)`, with `h(x) = x^beta`.
pub fn c_otimes_excess(f: &HtDist, x: f64, beta: f64, spec: &QuadSpec) -> Result<f64> {
    let h = x.powf(beta);
    let r = window_integral(f, x, h, WindowMode::TailVsTail, spec)?;
    Ok(r.value.ratio(Mag::from_ln(f.ln_tail(x))))
}

// ----------------------------------------------------------------------
// lattice self-convolution
// ----------------------------------------------------------------------

/// Hard cap on lattice cells; convolution cost grows with the square.
pub const MAX_LATTICE_CELLS: usize = 1 << 23;

/// A distribution discretized on `{0, step, 2 step, ...}` with every
/// cell's mass assigned to its left edge, plus a bucket for mass beyond
/// the grid. The left-edge discipline makes the lattice sum a pathwise
/// lower coupling of the true sum: after `n` folds the true variable lies
/// in `[S_L, S_L + n step)`.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub step: f64,
    pub masses: Vec<f64>,
    /// Mass at or beyond `len * step` (treated as at +infinity, which is
    /// conservative for window brackets).
    pub tail_mass: f64,
    /// Number of base factors composed into this lattice.
    pub folds: u32,
    /// Suffix sums: `suffix[j] = sum_{i >= j} masses[i] + tail_mass`.
    suffix: Vec<f64>,
}

impl Lattice {
    /// Discretizes a distribution supported on `[0, inf)`.
    pub fn from_dist(d: &HtDist, step: f64, len: usize) -> Result<Lattice> {
        if !(step > 0.0) || len == 0 {
            return Err(Error::invalid_parameter("step > 0 and len > 0", format!("step = {step}, len = {len}")));
        }
        if len > MAX_LATTICE_CELLS {
            return Err(Error::BudgetExceeded(format!("{len} cells > {MAX_LATTICE_CELLS}")));
        }
        let masses: Vec<f64> = (0..len).map(|j| d.window(j as f64 * step, step).to_f64()).collect();
        let tail_mass = d.ln_tail(len as f64 * step).exp();
        let mut l = Lattice { step, masses, tail_mass, folds: 1, suffix: Vec::new() };
        l.rebuild_suffix();
        Ok(l)
    }

    /// Builds a lattice from binned counts (empirical ladder heights).
    pub fn from_bins(step: f64, counts: &[u64], beyond: u64, total: u64) -> Result<Lattice> {
        if total == 0 {
            return Err(Error::Degenerate("empty sample".into()));
        }
        let n = total as f64;
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let mut l = Lattice {
            step,
            masses,
            tail_mass: beyond as f64 / n,
            folds: 1,
            suffix: Vec::new(),
        };
        l.rebuild_suffix();
        Ok(l)
    }

    fn rebuild_suffix(&mut self) {
        let len = self.masses.len();
        let mut suffix = vec![0.0; len + 1];
        suffix[len] = self.tail_mass;
        for j in (0..len).rev() {
            suffix[j] = suffix[j + 1] + self.masses[j];
        }
        self.suffix = suffix;
    }

    pub fn total_mass(&self) -> f64 {
        self.suffix[0]
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `P(S_L > z)` for the lattice variable (atoms at grid points).
    pub fn prob_gt(&self, z: f64) -> f64 {
        if z < 0.0 {
            return self.total_mass();
        }
        // atoms at j*step: P(> z) = sum over j*step > z
        let j = (z / self.step).floor() as usize + 1;
        if j >= self.suffix.len() {
            return self.tail_mass;
        }
        // guard against z exactly on the grid being pushed up by rounding
        let j = if (j as f64 - 1.0) * self.step > z { j - 1 } else { j };
        self.suffix[j.min(self.suffix.len() - 1)]
    }

    /// Step-function suffix linearly interpolated between grid points
    /// (equivalent to spreading each atom uniformly over its cell).
    fn prob_gt_interp(&self, z: f64) -> f64 {
        if z < 0.0 {
            return self.total_mass();
        }
        let pos = z / self.step;
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        if j + 1 >= self.suffix.len() {
            return self.tail_mass;
        }
        let at_j = self.suffix[j];
        let at_j1 = self.suffix[j + 1];
        at_j + (at_j1 - at_j) * frac
    }

    /// Convolves with another lattice on the same step. Pair sums falling
    /// off the grid go to the tail bucket.
    pub fn convolve(&self, other: &Lattice) -> Lattice {
        assert_eq!(self.step, other.step, "lattice steps must match");
        let len = self.masses.len().max(other.masses.len());
        let mut out = vec![0.0; len];
        // outer-j accumulation: sequential writes vectorize and the
        // summation order is fixed, so results are machine-identical
        // regardless of call context
        for (j, &aj) in self.masses.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let room = len - j;
            let take = other.masses.len().min(room);
            let dst = &mut out[j..j + take];
            let src = &other.masses[..take];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += aj * s;
            }
        }
        let total = self.total_mass() * other.total_mass();
        let on_grid: f64 = out.iter().sum();
        let mut l = Lattice {
            step: self.step,
            masses: out,
            tail_mass: (total - on_grid).max(0.0),
            folds: self.folds + other.folds,
            suffix: Vec::new(),
        };
        l.rebuild_suffix();
        l
    }

    /// Window mass estimate with certified discretization brackets.
    ///
    /// With `n` composed factors, `S_L <= S < S_L + n step`, so
    /// `P(S in (x, x+T])` is bracketed by shifted lattice reads; the point
    /// estimate reads the interpolated suffix at half the maximal shift.
    pub fn window_estimate(&self, x: f64, t: f64) -> WindowEstimate {
        let shift = self.folds as f64 * self.step;
        let lower = (self.prob_gt(x) - self.prob_gt(x + t - shift)).max(0.0);
        let upper = (self.prob_gt(x - shift) - self.prob_gt(x + t)).max(0.0);
        let half = 0.5 * (self.folds as f64 - 1.0) * self.step;
        let point = (self.prob_gt_interp(x - half) - self.prob_gt_interp(x + t - half)).max(0.0);
        WindowEstimate { lower, upper, point, degenerate: t <= shift }
    }

    /// Tail estimate `P(S > x)` with the same bracket discipline.
    pub fn tail_estimate(&self, x: f64) -> WindowEstimate {
        let shift = self.folds as f64 * self.step;
        let lower = self.prob_gt(x);
        let upper = self.prob_gt(x - shift);
        let half = 0.5 * (self.folds as f64 - 1.0) * self.step;
        let point = self.prob_gt_interp(x - half);
        WindowEstimate { lower, upper, point, degenerate: false }
    }
}

/// Bracketed lattice estimate of a probability.
#[derive(Debug, Clone, Copy)]
pub struct WindowEstimate {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    /// True when the accumulated shift exceeds the window length, which
    /// makes the lower bracket vacuous.
    pub degenerate: bool,
}

impl WindowEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Default lattice step: fine enough to resolve both the window and the
/// sharpest density feature among contributing segments.
pub fn default_step(d: &HtDist, t: f64, x_hi: f64) -> f64 {
    let mut min_gap = f64::INFINITY;
    let bps: Vec<f64> = d.breakpoints().into_iter().filter(|&b| (0.0..=x_hi).contains(&b)).collect();
    for w in bps.windows(2) {
        let gap = w[1] - w[0];
        if gap > 0.0 {
            min_gap = min_gap.min(gap);
        }
    }
    let ramp_part = if min_gap.is_finite() { min_gap / 16.0 } else { f64::INFINITY };
    (t / 64.0).min(ramp_part)
}

/// `P(X1 + ... + Xn in (x, x+T])` for iid copies of `g`, with certified
/// brackets from the left-edge lattice.
pub fn nfold_local(g: &HtDist, n: u32, x: f64, t: f64, step: f64, len: usize) -> Result<WindowEstimate> {
    if n == 0 {
        return Err(Error::invalid_parameter("n >= 1", "n = 0".to_string()));
    }
    let base = Lattice::from_dist(g, step, len)?;
    if n == 1 {
        // exact analytic window; brackets collapse
        let w = g.window(x, t).to_f64();
        return Ok(WindowEstimate { lower: w, upper: w, point: w, degenerate: false });
    }
    let mut cur = base.clone();
    for _ in 1..n {
        cur = cur.convolve(&base);
    }
    Ok(cur.window_estimate(x, t))
}
