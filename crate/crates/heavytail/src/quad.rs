//! Adaptive Gauss-Kronrod quadrature over log-domain integrands.
//!
//! Integrands return [`Mag`] values, so integrals deep in the tail (where
//! every node value underflows `f64`) are still computed with full relative
//! accuracy: each panel is rescaled by its largest node before the weighted
//! sum. Cell endpoints are also `Mag`, which lets panels live beyond the
//! `f64` range; inside a panel the node positions are parametrized on
//! `[0, 1]` and mapped through stable log-domain arithmetic.
//!
//! The engine reports a certified error (the usual |K15 - G7| estimate,
//! summed over accepted panels) and flags the result as degraded when the
//! subdivision budget runs out before the tolerance is met.

use crate::logmag::Mag;

/// 15-point Kronrod abscissae on [-1, 1] (nonnegative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// 7-point Gauss weights for the odd-indexed abscissae of `XGK`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Tolerance and budget policy for one integration call.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    /// Target relative tolerance of the total integral.
    pub rel_tol: f64,
    /// Absolute floor below which error is always acceptable.
    pub abs_floor: f64,
    /// Maximum bisection depth per cell.
    pub max_subdivisions: u32,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rel_tol: 1e-9, abs_floor: 1e-300, max_subdivisions: 60 }
    }
}

impl QuadSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadSpec { rel_tol, ..Default::default() }
    }
}

/// An evaluation point carrying both the exact `f64` position (when
/// representable) and its natural log.
///
/// Keeping the position exact matters: reconstructing it as `exp(ln x)`
/// loses `|ln x| * eps` of absolute accuracy, which is fatal for
/// barycentric weights within a sliver of a segment boundary.
#[derive(Debug, Clone, Copy)]
pub struct Pt {
    pub x: f64,
    pub ln_x: f64,
}

impl Pt {
    #[inline]
    pub fn from_f64(x: f64) -> Pt {
        Pt { x, ln_x: x.ln() }
    }

    /// Point beyond the f64 range (or anywhere, from its log).
    #[inline]
    pub fn from_ln(ln_x: f64) -> Pt {
        Pt { x: ln_x.exp(), ln_x }
    }

    #[inline]
    pub fn mag(self) -> Mag {
        Mag::from_ln(self.ln_x)
    }
}

/// Integral value with its certified error bound.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Mag,
    pub error: Mag,
    /// True when the subdivision budget ran out before the tolerance held.
    pub degraded: bool,
}

impl QuadResult {
    pub const ZERO: QuadResult = QuadResult { value: Mag::ZERO, error: Mag::ZERO, degraded: false };

    fn merge(&mut self, other: QuadResult) {
        self.value = self.value + other.value;
        self.error = self.error + other.error;
        self.degraded |= other.degraded;
    }
}

/// One integration cell `[lo, hi]` in the integrand's own coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub lo: Mag,
    pub hi: Mag,
}

impl Cell {
    pub fn new(lo: Mag, hi: Mag) -> Cell {
        Cell { lo, hi }
    }

    pub fn from_f64(lo: f64, hi: f64) -> Cell {
        Cell { lo: Mag::from_f64(lo), hi: Mag::from_f64(hi) }
    }
}

struct Panel {
    t0: f64,
    t1: f64,
    depth: u32,
}

/// Maps panel parameter t in [0,1] onto the cell coordinate.
struct CellMap {
    lo: Mag,
    width: Mag,
    lo_f: f64,
    width_f: f64,
    f64_path: bool,
}

impl CellMap {
    fn new(cell: &Cell) -> Option<CellMap> {
        let width = cell.hi.sub_or_zero(cell.lo);
        if width.is_zero() {
            return None;
        }
        let lo_f = cell.lo.to_f64();
        let hi_f = cell.hi.to_f64();
        let f64_path = lo_f.is_finite() && hi_f.is_finite() && hi_f > lo_f;
        Some(CellMap {
            lo: cell.lo,
            width,
            lo_f,
            width_f: hi_f - lo_f,
            f64_path,
        })
    }

    #[inline]
    fn point(&self, t: f64) -> Pt {
        if self.f64_path {
            Pt::from_f64(self.lo_f + t * self.width_f)
        } else {
            Pt::from_ln((self.lo + self.width * Mag::from_f64(t)).ln())
        }
    }
}

/// G7/K15 on the panel `[t0, t1]`; returns (value, error) already scaled by
/// the cell width.
fn gk15<F: Fn(Pt) -> Mag>(f: &F, map: &CellMap, t0: f64, t1: f64) -> (Mag, Mag) {
    let c = 0.5 * (t0 + t1);
    let h = 0.5 * (t1 - t0);
    let mut ln_vals = [f64::NEG_INFINITY; 15];
    let mut mx = f64::NEG_INFINITY;
    for (i, &x) in XGK.iter().enumerate() {
        let tm = c - h * x;
        let v = f(map.point(tm)).ln();
        ln_vals[i] = v;
        mx = mx.max(v);
        if x != 0.0 {
            let tp = c + h * x;
            let v = f(map.point(tp)).ln();
            ln_vals[14 - i] = v;
            mx = mx.max(v);
        }
    }
    if mx == f64::NEG_INFINITY {
        return (Mag::ZERO, Mag::ZERO);
    }
    let mut k15 = 0.0;
    let mut g7 = 0.0;
    for (i, &lv) in ln_vals.iter().enumerate() {
        let e = (lv - mx).exp();
        let idx = if i < 8 { i } else { 14 - i };
        k15 += WGK[idx] * e;
        if idx % 2 == 1 {
            g7 += WG[idx / 2] * e;
        }
    }
    let scale = Mag::from_ln(mx) * map.width * Mag::from_f64(h);
    let value = scale * Mag::from_f64(k15);
    let error = scale * Mag::from_f64((k15 - g7).abs());
    (value, error)
}

/// Panel budget per cell; exhausting it accepts the remaining panels and
/// flags the result degraded rather than recursing without bound.
const MAX_PANELS: u32 = 20_000;

/// Integrates `f` over a single cell to the requested tolerance.
pub fn integrate_cell<F: Fn(Pt) -> Mag>(f: &F, cell: &Cell, spec: &QuadSpec) -> QuadResult {
    let Some(map) = CellMap::new(&cell.clone()) else {
        return QuadResult::ZERO;
    };
    let floor = Mag::from_f64(spec.abs_floor);
    let rel = Mag::from_f64(spec.rel_tol);

    // Rough pass to size the acceptance threshold for negligible panels.
    let (rough, _) = gk15(f, &map, 0.0, 1.0);

    let mut out = QuadResult::ZERO;
    let mut panels = 0u32;
    let mut stack = vec![Panel { t0: 0.0, t1: 1.0, depth: 0 }];
    while let Some(p) = stack.pop() {
        let (v, e) = gk15(f, &map, p.t0, p.t1);
        panels += 1;
        let tol = (rel * v).max(rel * rough * Mag::from_f64(1e-9)).max(floor);
        if !(e > tol) || p.depth >= spec.max_subdivisions || panels >= MAX_PANELS {
            out.merge(QuadResult { value: v, error: e, degraded: e > tol });
        } else {
            let tm = 0.5 * (p.t0 + p.t1);
            stack.push(Panel { t0: p.t0, t1: tm, depth: p.depth + 1 });
            stack.push(Panel { t0: tm, t1: p.t1, depth: p.depth + 1 });
        }
    }
    if std::env::var_os("HEAVYTAIL_QUAD_TRACE").is_some() && panels > 1000 {
        eprintln!(
            "quad trace: cell [{:.6e}, {:.6e}] used {panels} panels, value ln {:.4}, err ln {:.4}",
            map.lo.to_f64(),
            (map.lo + map.width).to_f64(),
            out.value.ln(),
            out.error.ln()
        );
    }
    out
}

/// Integrates `f` over an ordered set of cells.
pub fn integrate_cells<F: Fn(Pt) -> Mag>(f: &F, cells: &[Cell], spec: &QuadSpec) -> QuadResult {
    let mut out = QuadResult::ZERO;
    for cell in cells {
        out.merge(integrate_cell(f, cell, spec));
    }
    out
}

/// Builds cells over `[lo, hi]` split at every interior boundary.
///
/// Boundaries are natural logs; duplicates and out-of-range entries are
/// dropped. `lo` may be zero.
pub fn split_cells(ln_lo: f64, ln_hi: f64, ln_boundaries: &[f64]) -> Vec<Cell> {
    let mut pts: Vec<f64> = ln_boundaries
        .iter()
        .copied()
        .filter(|&b| b > ln_lo && b < ln_hi && b.is_finite())
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * a.abs().max(1.0));
    let mut cells = Vec::with_capacity(pts.len() + 1);
    let mut prev = ln_lo;
    for b in pts {
        cells.push(Cell::new(Mag::from_ln(prev), Mag::from_ln(b)));
        prev = b;
    }
    cells.push(Cell::new(Mag::from_ln(prev), Mag::from_ln(ln_hi)));
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let spec = QuadSpec::default();
        let f = |y: Pt| Mag::from_f64(3.0 * y.x * y.x);
        let r = integrate_cell(&f, &Cell::from_f64(0.0, 2.0), &spec);
        assert_relative_eq!(r.value.to_f64(), 8.0, max_relative = 1e-14);
        assert!(!r.degraded);
        assert!(r.error.to_f64() <= 1e-9 * 8.0 + 1e-300);
    }

    #[test]
    fn exponential_converges() {
        let spec = QuadSpec::with_rel_tol(1e-12);
        let f = |y: Pt| Mag::from_ln(-y.x);
        let r = integrate_cell(&f, &Cell::from_f64(0.0, 30.0), &spec);
        let expect = 1.0 - (-30.0f64).exp();
        assert_relative_eq!(r.value.to_f64(), expect, max_relative = 1e-12);
    }

    #[test]
    fn deep_tail_cell_beyond_f64() {
        // integral of x^-2 over [A, 2A] = 1/(2A), checked in log domain
        // with A big enough that A^2 overflows f64
        let spec = QuadSpec::default();
        let ln_a = 600.0; // A = e^600 ~ 3.8e260, A^2 overflows
        let f = |y: Pt| y.mag().powi(-2);
        let cell = Cell::new(Mag::from_ln(ln_a), Mag::from_ln(ln_a + 2f64.ln()));
        let r = integrate_cell(&f, &cell, &spec);
        assert_relative_eq!(r.value.ln(), -(ln_a + 2f64.ln()), epsilon = 1e-10);
    }

    #[test]
    fn split_cells_drops_outside() {
        let cells = split_cells(0.0, 10.0, &[-1.0, 2.0, 5.0, 12.0]);
        assert_eq!(cells.len(), 3);
        assert_relative_eq!(cells[1].lo.ln(), 2.0);
        assert_relative_eq!(cells[1].hi.ln(), 5.0);
    }

    #[test]
    fn zero_integrand_reports_zero() {
        let spec = QuadSpec::default();
        let f = |_: Pt| Mag::ZERO;
        let r = integrate_cell(&f, &Cell::from_f64(1.0, 2.0), &spec);
        assert!(r.value.is_zero());
        assert!(!r.degraded);
    }
}
