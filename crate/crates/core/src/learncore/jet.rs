use std::ops::{Add, Mul, Sub};

/// Degree-3 truncated Taylor jet of a scalar function of one variable.
///
/// Coefficients are stored as derivatives, not Taylor coefficients:
/// `d[k]` is the k-th derivative with respect to the seed variable.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet3 {
    pub d: [f64; 4],
}

impl Jet3 {
    pub const fn new(v: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Jet3 { d: [v, d1, d2, d3] }
    }

    pub const fn constant(v: f64) -> Self {
        Jet3::new(v, 0.0, 0.0, 0.0)
    }

    /// The seed variable itself.
    pub const fn variable(v: f64) -> Self {
        Jet3::new(v, 1.0, 0.0, 0.0)
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    pub fn scale(self, a: f64) -> Self {
        Jet3 {
            d: self.d.map(|x| a * x),
        }
    }

    /// Composes a scalar function with this jet, given the function's
    /// value and first three derivatives at `self.value()` (Faà di Bruno).
    pub fn compose(self, f: [f64; 4]) -> Self {
        let [_, u1, u2, u3] = self.d;
        Jet3::new(
            f[0],
            f[1] * u1,
            f[2] * u1 * u1 + f[1] * u2,
            f[3] * u1 * u1 * u1 + 3.0 * f[2] * u1 * u2 + f[1] * u3,
        )
    }

    pub fn exp(self) -> Self {
        let e = self.value().exp();
        self.compose([e; 4])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c])
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, rhs: Jet3) -> Jet3 {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a += b;
        }
        Jet3 { d }
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, rhs: Jet3) -> Jet3 {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    /// Leibniz rule truncated at order 3.
    fn mul(self, rhs: Jet3) -> Jet3 {
        let [f0, f1, f2, f3] = self.d;
        let [g0, g1, g2, g3] = rhs.d;
        Jet3::new(
            f0 * g0,
            f1 * g0 + f0 * g1,
            f2 * g0 + 2.0 * f1 * g1 + f0 * g2,
            f3 * g0 + 3.0 * f2 * g1 + 3.0 * f1 * g2 + f0 * g3,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_polynomials() {
        // t^2 * t^3 = t^5 at t = 2: derivatives 32, 80, 160, 240.
        let t = Jet3::variable(2.0);
        let p = (t * t) * (t * t * t);
        assert_eq!(p, Jet3::new(32.0, 80.0, 160.0, 240.0));
    }

    #[test]
    fn composed_exp_of_square() {
        // exp(t^2) at t = 0.5.
        let t = 0.5f64;
        let j = (Jet3::variable(t) * Jet3::variable(t)).exp();
        let e = (t * t).exp();
        let expect = [
            e,
            2.0 * t * e,
            (2.0 + 4.0 * t * t) * e,
            (12.0 * t + 8.0 * t * t * t) * e,
        ];
        for k in 0..4 {
            assert!((j.d[k] - expect[k]).abs() < 1e-12);
        }
    }
}
