//! Stand-alone PCHIP used as a test oracle. Written from the textbook
//! definition, evaluated in power form so it shares no code path with the
//! library's Hermite-basis evaluation.
#![allow(dead_code)]

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let m: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![m[0], m[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if sign(m[k - 1]) * sign(m[k]) > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
        }
    }
    let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
        let e = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if sign(e) != sign(m0) {
            0.0
        } else if sign(m0) != sign(m1) && e.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            e
        }
    };
    d[0] = end(h[0], h[1], m[0], m[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
    d
}

/// Value at `q`, clamped to the end knots outside the range.
pub fn evaluate(x: &[f64], y: &[f64], d: &[f64], q: f64) -> f64 {
    let n = x.len();
    if q <= x[0] {
        return y[0];
    }
    if q >= x[n - 1] {
        return y[n - 1];
    }
    let mut i = 0;
    while x[i + 1] < q {
        i += 1;
    }
    let h = x[i + 1] - x[i];
    let s = (y[i + 1] - y[i]) / h;
    // y + d*u + c2*u^2 + c3*u^3 with u = q - x[i]
    let c2 = (3.0 * s - 2.0 * d[i] - d[i + 1]) / h;
    let c3 = (d[i] + d[i + 1] - 2.0 * s) / (h * h);
    let u = q - x[i];
    y[i] + u * (d[i] + u * (c2 + u * c3))
}
