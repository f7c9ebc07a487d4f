//! Small numerical kernels used by the rational-expectations solver.

/// Index `i` with `xs[i] <= x < xs[i + 1]`, clamped to the valid interval range.
#[inline]
pub(crate) fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    debug_assert!(n >= 2);
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    // first index with xs[i] > x, minus one
    xs.partition_point(|&p| p <= x) - 1
}

/// Piecewise-linear interpolation, flat outside the node range.
pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = locate(xs, x);
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Shape-preserving C1 cubic Hermite interpolant (Steffen 1990).
///
/// Monotone data give a monotone interpolant with no overshoot between nodes.
#[derive(Debug, Clone)]
pub(crate) struct Steffen {
    slopes: Vec<f64>,
}

impl Steffen {
    pub(crate) fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = s[0];
            d[1] = s[0];
            return Steffen { slopes: d };
        }
        for i in 1..n - 1 {
            let p = (s[i - 1] * h[i] + s[i] * h[i - 1]) / (h[i - 1] + h[i]);
            let sign_sum = sign(s[i - 1]) + sign(s[i]);
            d[i] = sign_sum * s[i - 1].abs().min(s[i].abs()).min(0.5 * p.abs());
        }
        let end_slope = |s0: f64, s1: f64, h0: f64, h1: f64| {
            let p = s0 * (1.0 + h0 / (h0 + h1)) - s1 * h0 / (h0 + h1);
            if p * s0 <= 0.0 {
                0.0
            } else if p.abs() > 2.0 * s0.abs() {
                2.0 * s0
            } else {
                p
            }
        };
        d[0] = end_slope(s[0], s[1], h[0], h[1]);
        d[n - 1] = end_slope(s[n - 2], s[n - 3], h[n - 2], h[n - 3]);
        Steffen { slopes: d }
    }

    #[inline]
    pub(crate) fn eval(&self, xs: &[f64], ys: &[f64], x: f64) -> f64 {
        self.eval_in(xs, ys, locate(xs, x), x)
    }

    #[inline]
    pub(crate) fn eval_in(&self, xs: &[f64], ys: &[f64], i: usize, x: f64) -> f64 {
        let h = xs[i + 1] - xs[i];
        let s = (ys[i + 1] - ys[i]) / h;
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let t = x - xs[i];
        let a = (d0 + d1 - 2.0 * s) / (h * h);
        let b = (3.0 * s - 2.0 * d0 - d1) / h;
        ((a * t + b) * t + d0) * t + ys[i]
    }
}

/// Brent's derivative-free maximization of `f` on `[lo, hi]`, endpoints included.
pub(crate) fn brent_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let f_lo = f(lo);
    if hi - lo <= 0.0 {
        return (lo, f_lo);
    }
    let f_hi = f(hi);
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let mut fx = -f(x);
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-13;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if !(p.abs() >= (0.5 * q * e_prev).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    let mut best = (x, -fx);
    if f_lo >= best.1 {
        best = (lo, f_lo);
    }
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    best
}

/// Ordinary least squares of `y` on a constant and `x`: returns (intercept, slope).
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if !(sxx > 1e-300) {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}
