use heavytail::dist::HtDist;
use heavytail::tailfn::{Family, PiecewiseTail};
use heavytail::quad::QuadSpec;
use heavytail::convolve::conv2_tail;
use std::time::Instant;

fn main() {
    let spec = QuadSpec::default();
    let p25 = PiecewiseTail::build_example(Family::Ex25, 2, 0.75, 4.0, 8).unwrap();
    let d = HtDist::piecewise(p25);
    let x = 2.0 * 1.073741824e9;
    let t0 = Instant::now();
    let r = conv2_tail(&d, &d, x, &spec);
    eprintln!("conv2: ratio {:.4} deg={} ({:?})", r.value.ratio(d.tail_mag(x)), r.degraded, t0.elapsed());
}
