//! Meromorphic quadratic differentials with a single higher-order pole.
//!
//! A differential on the punctured disk is stored through its Laurent
//! coefficients `a_n, …, a_2` (coefficients of `z^{-k} dz²`) together with an
//! optional tail `b_{-1}, b_0, b_1, …` of the `z^{-1}` and non-negative powers.
//! Polynomial differentials live on `ℂ` and have their pole at infinity.
//!
//! The principal part at a pole of order `n = 2r + ε` is the unique
//! `z^{-ε}(α_r z^{-r} + … + α_1 z^{-1})² dz²` agreeing with `q` in the leading
//! `r` Laurent coefficients. Its residue (the residue of `√q`) is only
//! defined up to sign, which [`QuadResidue`] takes into account.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypgeom::Crown;
use crate::poly::LaurentPoly;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Where a differential is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    PuncturedDisk,
    Plane,
    PuncturedPlane,
}

/// Location of the pole that carries the principal part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pole {
    Origin,
    Infinity,
}

/// Common view of the differentials handled by the crate.
pub trait QuadDiff {
    /// `q(z)` as a finite Laurent polynomial in the working chart.
    fn terms(&self) -> LaurentPoly;
    /// The pole whose principal part and geometry are studied.
    fn pole(&self) -> Pole;
    /// Order of that pole.
    fn pole_order(&self) -> usize;
    /// Region on which the differential is considered.
    fn domain(&self) -> Domain;
}

impl QuadDiff for LaurentPoly {
    fn terms(&self) -> LaurentPoly {
        self.clone()
    }

    fn pole(&self) -> Pole {
        Pole::Infinity
    }

    fn pole_order(&self) -> usize {
        (self.max_power() + 4).max(0) as usize
    }

    fn domain(&self) -> Domain {
        if self.min_power >= 0 { Domain::Plane } else { Domain::PuncturedPlane }
    }
}

/// `Σ_{k=2}^{n} a_k z^{-k} + Σ_j b_{j-1} z^{j-1}` times `dz²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentQD {
    pole_order: usize,
    /// `a_n, a_{n-1}, …, a_2`.
    laurent: Vec<Complex64>,
    /// `b_{-1}, b_0, b_1, …`.
    tail: Vec<Complex64>,
    domain: Domain,
}

impl LaurentQD {
    pub fn new(
        pole_order: usize,
        laurent: Vec<Complex64>,
        tail: Vec<Complex64>,
        domain: Domain,
    ) -> Result<Self> {
        if pole_order < 3 {
            return Err(Error::InvalidDifferential(format!(
                "pole order {pole_order} < 3"
            )));
        }
        if laurent.len() != pole_order - 1 {
            return Err(Error::InvalidDifferential(format!(
                "expected {} Laurent coefficients a_n..a_2, got {}",
                pole_order - 1,
                laurent.len()
            )));
        }
        if laurent[0] == ZERO {
            return Err(Error::InvalidDifferential(
                "leading coefficient a_n is zero".into(),
            ));
        }
        if laurent.iter().chain(tail.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidDifferential("non-finite coefficient".into()));
        }
        if domain == Domain::PuncturedDisk && tail.first().is_some_and(|b| *b != ZERO) {
            return Err(Error::InvalidDifferential(
                "a z^-1 tail term is only allowed on the punctured plane".into(),
            ));
        }
        Ok(LaurentQD { pole_order, laurent, tail, domain })
    }

    /// The differential `(Σ a_k z^{-k}) dz²` on the punctured disk, from
    /// `(k, a_k)` pairs; missing coefficients are zero.
    pub fn from_terms(pole_order: usize, terms: &[(usize, Complex64)]) -> Result<Self> {
        let mut laurent = vec![ZERO; pole_order.saturating_sub(1)];
        for &(k, a) in terms {
            if k < 2 || k > pole_order {
                return Err(Error::InvalidDifferential(format!(
                    "power z^-{k} outside 2..={pole_order}"
                )));
            }
            laurent[pole_order - k] = a;
        }
        Self::new(pole_order, laurent, Vec::new(), Domain::PuncturedDisk)
    }

    pub fn laurent(&self) -> &[Complex64] {
        &self.laurent
    }

    pub fn tail(&self) -> &[Complex64] {
        &self.tail
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Coefficient `a_k` of `z^{-k}`, `2 ≤ k ≤ n`.
    pub fn a(&self, k: usize) -> Complex64 {
        if k < 2 || k > self.pole_order {
            ZERO
        } else {
            self.laurent[self.pole_order - k]
        }
    }
}

impl QuadDiff for LaurentQD {
    fn terms(&self) -> LaurentPoly {
        let mut coeffs = self.laurent.clone();
        coeffs.extend_from_slice(&self.tail);
        LaurentPoly::new(-(self.pole_order as i32), coeffs)
    }

    fn pole(&self) -> Pole {
        Pole::Origin
    }

    fn pole_order(&self) -> usize {
        self.pole_order
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

/// `(c_0 + c_1 z + … + c_d z^d) dz²` on `ℂ`, pole of order `d + 4` at infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialQD {
    coeffs: Vec<Complex64>,
}

impl PolynomialQD {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        match coeffs.last() {
            None => Err(Error::InvalidDifferential("empty polynomial".into())),
            Some(c) if *c == ZERO => Err(Error::InvalidDifferential(
                "leading coefficient c_d is zero".into(),
            )),
            _ if coeffs.iter().any(|c| !c.is_finite()) => {
                Err(Error::InvalidDifferential("non-finite coefficient".into()))
            }
            _ => Ok(PolynomialQD { coeffs }),
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Monic and centered (`c_d = 1`, `c_{d-1} = 0`).
    pub fn is_normalized(&self) -> bool {
        let d = self.degree();
        self.coeffs[d] == Complex64::new(1.0, 0.0) && (d == 0 || self.coeffs[d - 1] == ZERO)
    }

    /// The same differential in the chart `u = 1/z` around infinity.
    pub fn at_infinity(&self) -> LaurentQD {
        let n = self.degree() + 4;
        let mut laurent = vec![ZERO; n - 1];
        // c_k z^k dz² = c_k u^{-k-4} du².
        for (k, c) in self.coeffs.iter().enumerate() {
            laurent[n - (k + 4)] = *c;
        }
        LaurentQD::new(n, laurent, Vec::new(), Domain::PuncturedDisk)
            .expect("leading coefficient checked at construction")
    }
}

impl QuadDiff for PolynomialQD {
    fn terms(&self) -> LaurentPoly {
        LaurentPoly::polynomial(self.coeffs.clone())
    }

    fn pole(&self) -> Pole {
        Pole::Infinity
    }

    fn pole_order(&self) -> usize {
        self.degree() + 4
    }

    fn domain(&self) -> Domain {
        Domain::Plane
    }
}

/// `(ε; α_r, …, α_1)` describing `z^{-ε}(Σ α_k z^{-k})² dz²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalPart {
    parity: u8,
    /// `α_r` first.
    alphas: Vec<Complex64>,
}

impl PrincipalPart {
    pub fn new(parity: u8, alphas: Vec<Complex64>) -> Result<Self> {
        if parity > 1 {
            return Err(Error::InvalidDifferential(format!("parity {parity} not in {{0,1}}")));
        }
        if alphas.is_empty() || alphas[0] == ZERO {
            return Err(Error::InvalidDifferential("α_r must be nonzero".into()));
        }
        if 2 * alphas.len() + (parity as usize) < 3 {
            return Err(Error::InvalidDifferential("pole order below 3".into()));
        }
        Ok(PrincipalPart { parity, alphas })
    }

    pub fn parity(&self) -> u8 {
        self.parity
    }

    pub fn r(&self) -> usize {
        self.alphas.len()
    }

    pub fn pole_order(&self) -> usize {
        2 * self.r() + self.parity as usize
    }

    /// `α_r, …, α_1`.
    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    /// `α_k` for `1 ≤ k ≤ r`.
    pub fn alpha(&self, k: usize) -> Complex64 {
        self.alphas[self.r() - k]
    }

    /// The principal differential itself.
    pub fn to_differential(&self) -> LaurentQD {
        let r = self.r();
        let n = self.pole_order();
        let eps = self.parity as usize;
        let mut laurent = vec![ZERO; n - 1];
        // z^{-ε} α_{k1} α_{k2} z^{-(k1+k2)} lands on a_{ε+k1+k2}.
        for k1 in 1..=r {
            for k2 in 1..=r {
                let k = eps + k1 + k2;
                laurent[n - k] += self.alpha(k1) * self.alpha(k2);
            }
        }
        LaurentQD::new(n, laurent, Vec::new(), Domain::PuncturedDisk)
            .expect("α_r ≠ 0 gives a_n ≠ 0")
    }

    /// Real dimension of the space of differentials on the punctured disk
    /// sharing this principal part: the free coefficients `a_2, …, a_{n-r}`.
    pub fn free_real_parameters(&self) -> usize {
        free_real_parameters(self.pole_order())
    }
}

/// `2(n − r − 1)` with `r = ⌊n/2⌋`.
pub fn free_real_parameters(pole_order: usize) -> usize {
    2 * (pole_order - pole_order / 2 - 1)
}

/// Sign convention for √: argument in `(−π/2, π/2]`.
pub fn principal_sqrt(a: Complex64) -> Complex64 {
    let s = a.sqrt();
    if s.re < 0.0 || (s.re == 0.0 && s.im < 0.0) {
        -s
    } else {
        s
    }
}

/// Leading-coefficient matching: `α_r = √a_n`, then each `α_{r-i}` from
/// `a_{n-i}` after removing the contribution of the known `α`s.
pub fn extract_principal_part(q: &LaurentQD) -> Result<PrincipalPart> {
    let n = q.pole_order;
    if n < 3 {
        return Err(Error::InvalidDifferential(format!("pole order {n} < 3")));
    }
    let a_n = q.a(n);
    if a_n == ZERO {
        return Err(Error::InvalidDifferential("a_n = 0".into()));
    }
    let r = n / 2;
    let parity = (n % 2) as u8;
    // alpha[k] = α_k, 1-based.
    let mut alpha = vec![ZERO; r + 1];
    alpha[r] = principal_sqrt(a_n);
    let two_lead = 2.0 * alpha[r];
    for i in 1..r {
        let total = 2 * r - i;
        let mut known = ZERO;
        for k1 in (r - i + 1)..r {
            let k2 = total - k1;
            if k2 > r - i && k2 < r {
                known += alpha[k1] * alpha[k2];
            }
        }
        alpha[r - i] = (q.a(n - i) - known) / two_lead;
    }
    let alphas = (1..=r).rev().map(|k| alpha[k]).collect();
    PrincipalPart::new(parity, alphas)
}

/// Expands the square and returns `a_n, …, a_{n-r+1}`.
pub fn rebuild_leading(p: &PrincipalPart) -> Vec<Complex64> {
    let r = p.r();
    (0..r)
        .map(|i| {
            let total = 2 * r - i;
            let mut acc = ZERO;
            for k1 in 1..=r {
                if total > k1 && total - k1 <= r {
                    acc += p.alpha(k1) * p.alpha(total - k1);
                }
            }
            acc
        })
        .collect()
}

/// Normalization of a quadratic residue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidueNormalization {
    /// Raw `∮ √q`.
    Contour,
    /// The `dz/z` coefficient of `√q`.
    LaurentCoefficient,
}

/// A residue of `√q`, defined up to a global sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResidue {
    pub value: Complex64,
    pub normalization: ResidueNormalization,
}

impl QuadResidue {
    pub fn contour(value: Complex64) -> Self {
        QuadResidue { value, normalization: ResidueNormalization::Contour }
    }

    pub fn laurent(value: Complex64) -> Self {
        QuadResidue { value, normalization: ResidueNormalization::LaurentCoefficient }
    }

    /// Converts to the raw contour normalization (`× 2πi`).
    pub fn to_contour(self) -> Self {
        match self.normalization {
            ResidueNormalization::Contour => self,
            ResidueNormalization::LaurentCoefficient => {
                Self::contour(self.value * Complex64::new(0.0, 2.0 * PI))
            }
        }
    }

    /// Equality up to sign; `tol` is relative to `max(1, |self|, |other|)`.
    pub fn agrees(&self, other: &QuadResidue, tol: f64) -> bool {
        let a = self.to_contour().value;
        let b = other.to_contour().value;
        let scale = 1f64.max(a.norm()).max(b.norm());
        (a - b).norm().min((a + b).norm()) <= tol * scale
    }
}

/// `±α_1` for even order, `0` for odd order (only half-integer powers).
pub fn residue(p: &PrincipalPart) -> QuadResidue {
    if p.parity == 1 {
        QuadResidue::laurent(ZERO)
    } else {
        QuadResidue::laurent(p.alpha(1))
    }
}

/// Continues `√q` along a sequence of samples by choosing, at each step,
/// the root closest to the previous one.
#[derive(Debug, Clone)]
pub struct SqrtTracker {
    current: Option<Complex64>,
}

impl SqrtTracker {
    pub fn new() -> Self {
        SqrtTracker { current: None }
    }

    /// Starts from a given branch value.
    pub fn starting_at(value: Complex64) -> Self {
        SqrtTracker { current: Some(value) }
    }

    pub fn current(&self) -> Option<Complex64> {
        self.current
    }

    /// Feeds `q(z)` at the next sample point; fails if the two candidate
    /// roots are not clearly separated from each other relative to the step.
    pub fn next(&mut self, q_value: Complex64, at: Complex64) -> Result<Complex64> {
        if !q_value.is_finite() || q_value.norm() == 0.0 {
            return Err(Error::BranchTracking {
                at,
                reason: "q vanishes or is singular".into(),
            });
        }
        let s = principal_sqrt(q_value);
        let chosen = match self.current {
            None => s,
            Some(prev) => {
                let (near, far) = if (s - prev).norm() <= (s + prev).norm() {
                    (s, -s)
                } else {
                    (-s, s)
                };
                if (near - prev).norm() > 0.5 * (far - prev).norm() {
                    return Err(Error::BranchTracking {
                        at,
                        reason: "step too large relative to |√q| (zero nearby?)".into(),
                    });
                }
                near
            }
        };
        self.current = Some(chosen);
        Ok(chosen)
    }
}

impl Default for SqrtTracker {
    fn default() -> Self {
        Self::new()
    }
}

pub fn evaluate(q: &impl QuadDiff, z: Complex64) -> Complex64 {
    q.terms().eval(z)
}

/// `√q` along `path`, starting from the principal branch.
pub fn sqrt_along_path(q: &impl QuadDiff, path: &[Complex64]) -> Result<Vec<Complex64>> {
    let terms = q.terms();
    let mut tracker = SqrtTracker::new();
    path.iter().map(|&z| tracker.next(terms.eval(z), z)).collect()
}

/// Raw contour integral `∮ √q dz` over the circle `|z| = radius`,
/// counter-clockwise, by the periodic trapezoid rule with branch tracking.
///
/// The circle must separate the studied pole from every zero. If `√q`
/// changes sign around the circle (odd pole order) the residue is `0`.
pub fn residue_contour(q: &impl QuadDiff, radius: f64, samples: usize) -> Result<QuadResidue> {
    if samples < 256 {
        return Err(Error::InvalidDifferential(format!(
            "contour needs at least 256 samples, got {samples}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidDifferential("contour radius must be positive".into()));
    }
    let terms = q.terms();
    let margin = 1e-3 * radius;
    for zero in terms.zeros() {
        let m = zero.norm();
        let on_wrong_side = match q.pole() {
            Pole::Origin => m < radius + margin,
            Pole::Infinity => m > radius - margin,
        };
        if on_wrong_side {
            return Err(Error::BranchTracking {
                at: zero,
                reason: format!("zero does not lie on the far side of |z| = {radius}"),
            });
        }
    }
    let mut tracker = SqrtTracker::new();
    let dtheta = 2.0 * PI / samples as f64;
    let mut sum = ZERO;
    let mut first = ZERO;
    for k in 0..samples {
        let z = Complex64::from_polar(radius, k as f64 * dtheta);
        let s = tracker.next(terms.eval(z), z)?;
        if k == 0 {
            first = s;
        }
        sum += s * Complex64::new(0.0, 1.0) * z;
    }
    let z0 = Complex64::new(radius, 0.0);
    let closing = tracker.next(terms.eval(z0), z0)?;
    if (closing + first).norm() < (closing - first).norm() {
        return Ok(QuadResidue::contour(ZERO));
    }
    Ok(QuadResidue::contour(sum * dtheta))
}

/// A radius suitable for [`residue_contour`]: halfway (geometrically)
/// between the pole and the nearest zero.
pub fn separating_radius(q: &impl QuadDiff) -> f64 {
    let zeros = q.terms().zeros();
    match q.pole() {
        Pole::Origin => {
            let nearest = zeros.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            if nearest.is_finite() { 0.5 * nearest } else { 1.0 }
        }
        Pole::Infinity => {
            let farthest = zeros.iter().map(|z| z.norm()).fold(0.0, f64::max);
            2.0 * farthest.max(0.5)
        }
    }
}

/// `q_sym` on the punctured plane, invariant under `z ↦ 1/z`, with
/// `b_i = a_{i+4}` for `−1 ≤ i ≤ n − 4`.
pub fn symmetrize(q: &LaurentQD) -> LaurentQD {
    let n = q.pole_order;
    let tail = (0..=(n - 3)).map(|j| q.a(j + 3)).collect();
    LaurentQD {
        pole_order: n,
        laurent: q.laurent.clone(),
        tail,
        domain: Domain::PuncturedPlane,
    }
}

/// Compatibility of a principal part with a crown: the real part of the
/// contour-normalized residue equals half the crown's metric residue, up
/// to sign, within `1e-9`.
pub fn compatible(p: &PrincipalPart, crown: &Crown) -> Result<bool> {
    if crown.cusp_count() + 2 != p.pole_order() {
        return Err(Error::Geometry(format!(
            "crown has {} cusps but the pole order {} needs {}",
            crown.cusp_count(),
            p.pole_order(),
            p.pole_order() - 2
        )));
    }
    Ok(compatible_with_metric_residue(p, crown.metric_residue()))
}

pub fn compatible_with_metric_residue(p: &PrincipalPart, metric_residue: f64) -> bool {
    let re = residue(p).to_contour().value.re.abs();
    (re - 0.5 * metric_residue.abs()).abs() <= 1e-9
}
