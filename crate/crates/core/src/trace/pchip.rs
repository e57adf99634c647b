//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson).

use super::TraceError;

/// A monotone cubic Hermite interpolant over strictly increasing knots.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self, TraceError> {
        if xs.len() != ys.len() {
            return Err(TraceError::Interpolation(format!(
                "knot length mismatch: {} abscissae, {} ordinates",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(TraceError::InsufficientSamples { have: xs.len() });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TraceError::Interpolation(
                "knot abscissae must strictly increase".into(),
            ));
        }
        let slopes = fritsch_carlson_slopes(xs, ys);
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes,
        })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Evaluates the interpolant. Queries outside the knot range are clamped
    /// to the nearest end value.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(idx) => return self.ys[idx],
            Err(ins) => ins - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        // h00 = 1 - h01, folded in so flat segments stay exactly flat
        self.ys[i]
            + h01 * (self.ys[i + 1] - self.ys[i])
            + h * (h10 * self.slopes[i] + h11 * self.slopes[i + 1])
    }
}

fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let secant: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();

    if n == 2 {
        return vec![secant[0], secant[0]];
    }

    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (prev, next) = (secant[k - 1], secant[k]);
        if prev == 0.0 || next == 0.0 || prev.signum() != next.signum() {
            continue;
        }
        // weighted harmonic mean; weights favour the shorter interval
        let w1 = 2.0 * h[k] + h[k - 1];
        let w2 = h[k] + 2.0 * h[k - 1];
        d[k] = (w1 + w2) / (w1 / prev + w2 / next);
    }
    d[0] = endpoint_slope(h[0], h[1], secant[0], secant[1]);
    d[n - 1] = endpoint_slope(h[n - 2], h[n - 3], secant[n - 2], secant[n - 3]);
    d
}

/// One-sided three-point estimate, clamped so the end segment stays monotone.
fn endpoint_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if sign(d) != sign(m0) {
        0.0
    } else if sign(m0) != sign(m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_knots_are_linear() {
        let p = Pchip::new(&[0.0, 600.0], &[0.0, 50.0]).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(600.0), 50.0);
        assert!((p.eval(300.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn flat_tail_segment_is_constant() {
        let p = Pchip::new(&[0.0, 600.0, 1200.0], &[0.0, 100.0, 100.0]).unwrap();
        assert_eq!(p.slopes()[1], 0.0);
        assert_eq!(p.slopes()[2], 0.0);
        assert!((p.eval(900.0) - 100.0).abs() < 1e-12);
    }

    // frozen from scipy.interpolate.PchipInterpolator on the same knots
    #[test]
    fn matches_scipy_reference() {
        let xs = [0.0, 700.0, 1500.0, 2100.0, 3900.0, 4400.0, 6000.0, 7300.0];
        let ys = [90.0, 88.0, 88.0, 83.0, 70.0, 69.5, 60.0, 41.0];
        let expected = [
            (0.0, 90.000000000000),
            (600.0, 88.059475218659),
            (1200.0, 88.000000000000),
            (1800.0, 86.087349397590),
            (2400.0, 80.469575039579),
            (3000.0, 75.083897984809),
            (3600.0, 70.956978276875),
            (4200.0, 69.711819110370),
            (4800.0, 68.315750008259),
            (5400.0, 64.800163788210),
            (6000.0, 60.000000000000),
            (6600.0, 52.862649697776),
            (7200.0, 42.835932868084),
        ];
        let p = Pchip::new(&xs, &ys).unwrap();
        for (x, y) in expected {
            assert!((p.eval(x) - y).abs() < 1e-9, "x={x}: {} vs {y}", p.eval(x));
        }

        let xs = [0.0, 600.0, 1200.0, 3000.0, 3600.0];
        let ys = [20.0, 35.0, 60.0, 61.0, 80.0];
        let expected = [
            (300.0, 26.406250000000),
            (900.0, 49.745582460733),
            (1500.0, 60.292537938857),
            (2100.0, 60.501694398623),
            (2700.0, 60.709344726280),
            (3300.0, 67.639269406393),
        ];
        let p = Pchip::new(&xs, &ys).unwrap();
        for (x, y) in expected {
            assert!((p.eval(x) - y).abs() < 1e-9, "x={x}: {} vs {y}", p.eval(x));
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(
            Pchip::new(&[1.0], &[1.0]),
            Err(TraceError::InsufficientSamples { have: 1 })
        ));
        assert!(Pchip::new(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
