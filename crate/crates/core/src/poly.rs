//! Finite Laurent polynomials with complex coefficients, root finding and a
//! small fixed Gauss–Legendre rule used for path integrals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `Σ_k coeffs[k] · z^{min_power + k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentPoly {
    pub min_power: i32,
    pub coeffs: Vec<Complex64>,
}

impl LaurentPoly {
    pub fn new(min_power: i32, coeffs: Vec<Complex64>) -> Self {
        LaurentPoly { min_power, coeffs }.trimmed()
    }

    /// Ordinary polynomial with ascending coefficients `c_0, c_1, …`.
    pub fn polynomial(coeffs: Vec<Complex64>) -> Self {
        Self::new(0, coeffs)
    }

    /// Drops exactly-zero coefficients at both ends.
    pub fn trimmed(mut self) -> Self {
        while self.coeffs.last() == Some(&ZERO) {
            self.coeffs.pop();
        }
        let lead = self.coeffs.iter().take_while(|c| **c == ZERO).count();
        if lead == self.coeffs.len() {
            return LaurentPoly { min_power: 0, coeffs: Vec::new() };
        }
        self.coeffs.drain(..lead);
        self.min_power += lead as i32;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_power(&self) -> i32 {
        self.min_power + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, power: i32) -> Complex64 {
        let k = power - self.min_power;
        if k < 0 {
            return ZERO;
        }
        self.coeffs.get(k as usize).copied().unwrap_or(ZERO)
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap_or(&ZERO)
    }

    pub fn lowest(&self) -> Complex64 {
        *self.coeffs.first().unwrap_or(&ZERO)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        if self.min_power != 0 {
            acc *= z.powi(self.min_power);
        }
        acc
    }

    /// Value and first derivative.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut value = ZERO;
        let mut deriv = ZERO;
        for (k, c) in self.coeffs.iter().enumerate() {
            let p = self.min_power + k as i32;
            let zp = z.powi(p);
            value += c * zp;
            if p != 0 {
                deriv += c * (p as f64) * z.powi(p - 1);
            }
        }
        (value, deriv)
    }

    /// Pulls `q(z) dz²` back through `z = 1/u`, giving `q(1/u) u^{-4} du²`.
    pub fn invert_chart(&self) -> LaurentPoly {
        let coeffs: Vec<Complex64> = self.coeffs.iter().rev().copied().collect();
        LaurentPoly::new(-self.max_power() - 4, coeffs)
    }

    /// The ordinary polynomial `z^{-min_power} · self`.
    pub fn numerator(&self) -> Vec<Complex64> {
        self.coeffs.clone()
    }

    /// Zeros in `ℂ*` (and at the origin when `min_power ≥ 0` makes the
    /// origin a regular point), with multiplicity.
    pub fn zeros(&self) -> Vec<Complex64> {
        let mut roots = polynomial_roots(&self.coeffs);
        if self.min_power > 0 {
            roots.extend(std::iter::repeat(ZERO).take(self.min_power as usize));
        }
        roots
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of `Σ coeffs[k] z^k`, with multiplicity, by the Aberth–Ehrlich
/// iteration followed by Newton polishing.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = coeffs.to_vec();
    while c.last() == Some(&ZERO) {
        c.pop();
    }
    let mut roots = Vec::new();
    let zero_roots = c.iter().take_while(|x| **x == ZERO).count();
    roots.extend(std::iter::repeat(ZERO).take(zero_roots));
    c.drain(..zero_roots);
    let degree = c.len().saturating_sub(1);
    if degree == 0 {
        return roots;
    }
    let lead = c[degree];
    let monic: Vec<Complex64> = c.iter().map(|x| x / lead).collect();

    // Cauchy bound for the initial circle.
    let bound = 1.0
        + monic[..degree]
            .iter()
            .map(|x| x.norm())
            .fold(0.0f64, f64::max);
    let radius = 0.5 * bound.min(1e6).max(1e-3);
    let mut z: Vec<Complex64> = (0..degree)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / degree as f64 + 0.4;
            Complex64::from_polar(radius, angle)
        })
        .collect();

    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..degree {
            let (p, dp) = horner(&monic, z[i]);
            if p == ZERO {
                continue;
            }
            let ratio = p / dp;
            let mut repulsion = ZERO;
            for j in 0..degree {
                if j != i {
                    let d = z[i] - z[j];
                    if d != ZERO {
                        repulsion += d.inv();
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - ratio * repulsion;
            let step = if denom.norm() > 0.0 { ratio / denom } else { ratio };
            if step.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }

    for root in z.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = horner(&monic, *root);
            if dp == ZERO || p == ZERO {
                break;
            }
            let next = *root - p / dp;
            if horner(&monic, next).0.norm() < p.norm() {
                *root = next;
            } else {
                break;
            }
        }
    }
    roots.extend(z);
    roots
}

/// Eight-point Gauss–Legendre nodes and weights on `[-1, 1]`.
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_z_squared_plus_one() {
        let mut r = polynomial_roots(&[c(1.0, 0.0), ZERO, c(1.0, 0.0)]);
        r.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((r[0] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((r[1] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_roots_are_exact() {
        let r = polynomial_roots(&[ZERO, ZERO, c(1.0, 0.0)]);
        assert_eq!(r, vec![ZERO, ZERO]);
    }

    #[test]
    fn chart_inversion_is_an_involution() {
        let p = LaurentPoly::new(-5, vec![c(2.0, 0.0), ZERO, c(3.0, 1.0), c(0.0, 1.0)]);
        assert_eq!(p.invert_chart().invert_chart(), p);
        let u = c(0.3, -0.7);
        let lhs = p.invert_chart().eval(u);
        let rhs = p.eval(u.inv()) * u.powi(-4);
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm());
    }

    #[test]
    fn gauss_weights_sum_to_two() {
        let s: f64 = GAUSS8.iter().map(|(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }
}
