//! The zero-bit detection statistic and its exact p-value.
//!
//! A detector extracts a vector `r` in an `M`-dimensional subspace and
//! compares the absolute cosine `|r.k| / ||r||` against a secret unit axis
//! `k`. When `r` is isotropic under the no-watermark hypothesis, the
//! probability that `r` falls inside the double cone of half-angle `theta`
//! is `1 - I_{cos^2 theta}(1/2, (M-1)/2)` with `I` the regularized
//! incomplete beta function. Several cones combine through a union bound.

use crate::error::{Error, Result};
use crate::scalar::Real;

const LN10: f64 = std::f64::consts::LN_10;

/// A p-value with sub-underflow reporting via its base-10 logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    value: f64,
    log10_value: f64,
}

impl PValue {
    pub const ONE: PValue = PValue {
        value: 1.0,
        log10_value: 0.0,
    };

    pub fn from_value(p: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p));
        Self {
            value: p,
            log10_value: p.log10(),
        }
    }

    /// Build from `log10(p)`; the linear value may flush to zero below
    /// roughly 1e-308 while the log stays exact.
    pub fn from_log10(log10_value: f64) -> Self {
        let log10_value = log10_value.min(0.0);
        Self {
            value: 10f64.powf(log10_value),
            log10_value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn log10_value(&self) -> f64 {
        self.log10_value
    }

    /// `p > alpha`, evaluated in the log domain.
    pub fn exceeds(&self, alpha: f64) -> bool {
        self.log10_value > alpha.log10()
    }

    /// `p <= alpha`: the detector fires.
    pub fn detects_at(&self, alpha: f64) -> bool {
        !self.exceeds(alpha)
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    // Coefficients from the standard Lanczos approximation; accurate to
    // ~1e-15 relative for positive arguments.
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection for small arguments.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta (modified Lentz), valid and
/// fast for `x < (a+1)/(a+b+2)`. Returns the CF factor so that
/// `I_x(a,b) = exp(a ln x + b ln(1-x) - ln B(a,b)) / a * cf`.
fn betacf(a: f64, b: f64, x: f64) -> Result<f64> {
    const MAX_ITER: usize = 400;
    const TINY: f64 = 1e-300;
    let eps = f64::EPSILON;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let fm = m as f64;
        let m2 = 2.0 * fm;

        let aa = fm * (b - fm) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + fm) * (qab + fm) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < eps {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Natural log of `I_x(a, b)` evaluated directly through the continued
/// fraction; requires `x` in the CF's fast-convergence region.
fn ln_reg_inc_beta_lower(a: f64, b: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b) - a.ln();
    let cf = betacf(a, b, x)?;
    Ok(ln_prefix + cf.ln())
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Continued-fraction evaluation with the symmetry
/// `I_x(a,b) = 1 - I_{1-x}(b,a)`; relative error below 1e-10 over the
/// domain `x in [0,1]`, `a, b > 0`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::Domain(format!("a = {a}, b = {b} must be positive")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_reg_inc_beta_lower(a, b, x)?.exp())
    } else {
        Ok(1.0 - ln_reg_inc_beta_lower(b, a, 1.0 - x)?.exp())
    }
}

fn check_cone_domain(cos_theta: f64, subspace_dim: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&cos_theta) {
        return Err(Error::Domain(format!(
            "cosine {cos_theta} outside [0, 1]"
        )));
    }
    if subspace_dim < 2 {
        return Err(Error::Domain("subspace dimension must be >= 2".into()));
    }
    Ok(())
}

/// Per-cone false-alarm probability of the two-sided (absolute-cosine)
/// hypercone: `1 - I_{cos^2 theta}(1/2, (M-1)/2)`.
///
/// Small probabilities are computed in the log domain through the identity
/// `1 - I_x(a,b) = I_{1-x}(b,a)`, so the result stays meaningful far below
/// the double-precision underflow threshold.
pub fn pfa_from_cosine(cos_theta: f64, subspace_dim: usize) -> Result<PValue> {
    check_cone_domain(cos_theta, subspace_dim)?;
    let a = 0.5;
    let b = (subspace_dim as f64 - 1.0) / 2.0;
    if cos_theta == 0.0 {
        return Ok(PValue::ONE);
    }
    if cos_theta == 1.0 {
        return Ok(PValue::from_log10(f64::NEG_INFINITY));
    }
    let c2 = cos_theta * cos_theta;
    // 1 - I_{c^2}(a, b) = I_{1-c^2}(b, a) = I_{sin^2}(b, a)
    let sin2 = (1.0 - cos_theta) * (1.0 + cos_theta);
    if sin2 < (b + 1.0) / (a + b + 2.0) {
        let ln_p = ln_reg_inc_beta_lower(b, a, sin2)?;
        Ok(PValue::from_log10(ln_p / LN10))
    } else {
        // Large p: the complementary lower CF is well conditioned.
        let p = 1.0 - ln_reg_inc_beta_lower(a, b, c2)?.exp();
        Ok(PValue::from_value(p.clamp(0.0, 1.0)))
    }
}

/// Invert [`pfa_from_cosine`]: the cosine threshold whose false-alarm
/// probability equals `target`, by bisection to 0.1% relative.
pub fn cosine_from_pfa(target: f64, subspace_dim: usize) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target {target} outside (0, 1)")));
    }
    if subspace_dim < 2 {
        return Err(Error::Domain("subspace dimension must be >= 2".into()));
    }
    let log_target = target.log10();
    let tol = (1.0 + 1e-3f64).log10();
    let mut lo = 0.0f64; // pfa(lo) = 1 >= target
    let mut hi = 1.0f64; // pfa(hi) = 0 < target
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = pfa_from_cosine(mid, subspace_dim)?;
        let diff = p.log10_value() - log_target;
        if diff.abs() <= tol {
            return Ok(mid);
        }
        if diff > 0.0 {
            lo = mid; // p too large, need bigger cosine
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!(
        "cosine_from_pfa failed to converge for target {target}, M = {subspace_dim}"
    )))
}

/// Union-bound p-value over several cones: `min(1, N_c * pfa(max cosine))`.
/// The max-cosine cone is the detection statistic; ties go to the lowest
/// cone index.
pub fn multi_cone_pvalue(cosines: &[f64], subspace_dim: usize) -> Result<PValue> {
    if cosines.is_empty() {
        return Err(Error::Domain("empty cosine list".into()));
    }
    let (_, best) = winning_cone(cosines);
    let per_cone = pfa_from_cosine(best, subspace_dim)?;
    let n_c = cosines.len() as f64;
    Ok(PValue::from_log10(
        per_cone.log10_value() + n_c.log10(),
    ))
}

/// Index and value of the maximum cosine; ties resolve to the lowest index.
pub fn winning_cone(cosines: &[f64]) -> (usize, f64) {
    let mut best_i = 0;
    let mut best = cosines[0];
    for (i, &c) in cosines.iter().enumerate().skip(1) {
        if c > best {
            best = c;
            best_i = i;
        }
    }
    (best_i, best)
}

/// Absolute cosine between a vector and a unit axis: `|r.k| / ||r||`.
/// Returns zero for a zero vector.
pub fn abs_cosine<T: Real>(r: &[T], axis: &[T]) -> T {
    debug_assert_eq!(r.len(), axis.len());
    let mut dot = T::zero();
    let mut nr = T::zero();
    for (&ri, &ki) in r.iter().zip(axis) {
        dot = dot + ri * ki;
        nr = nr + ri * ri;
    }
    if nr == T::zero() {
        T::zero()
    } else {
        (dot.abs() / nr.sqrt()).min(T::one())
    }
}
