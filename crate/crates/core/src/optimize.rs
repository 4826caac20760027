//! One-dimensional maximizers used by the controllers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Both endpoints are compared with the interior optimum, so monotone
/// objectives return the correct boundary. Returns `(argmax, max)`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Root of a decreasing function on `[lo, hi]` by Newton steps safeguarded
/// with bisection.
///
/// `g` returns `(value, derivative)`. The caller guarantees `g(lo) > 0` and
/// `g(hi) < 0`. Iteration stops once a step or the bracket shrinks below
/// `tol`.
pub fn safeguarded_newton<G: FnMut(f64) -> (f64, f64)>(
    mut g: G,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    tol: f64,
) -> f64 {
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let (v, d) = g(x);
        if v == 0.0 {
            return x;
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = if d < 0.0 { x - v / d } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol || hi - lo <= tol {
            return next;
        }
        x = next;
    }
    x
}
