//! Standard normal density, distribution and tail functions.
//!
//! Tails beyond |x| = 8 go through the Mills ratio (continued fraction) so
//! that products like `exp(x^2 / 2) * Phi_bar(x)` stay finite far past the
//! point where `exp(x^2 / 2)` overflows.

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

const MILLS_SWITCH: f64 = 8.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Phi(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Phi_bar(x) = 1 - Phi(x), without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Mills ratio Phi_bar(x) / phi(x) for x >= 0 by modified Lentz evaluation of
/// 1/(x + 1/(x + 2/(x + 3/(x + ...)))).
fn mills_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..2000 {
        let a = if j == 1 { 1.0 } else { (j - 1) as f64 };
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Mills ratio Phi_bar(x) / phi(x), i.e. `sqrt(2 pi) exp(x^2/2) Phi_bar(x) / sqrt(2 pi)`.
pub fn mills_ratio(x: f64) -> f64 {
    if x >= MILLS_SWITCH {
        mills_cf(x)
    } else {
        sf(x) / pdf(x)
    }
}

/// ln of the Mills ratio, `ln(sqrt(2 pi) exp(x^2/2) Phi_bar(x))`, finite for
/// all finite x.
pub fn ln_mills(x: f64) -> f64 {
    if x >= 0.0 {
        mills_ratio(x).ln()
    } else {
        ln_sf(x) + 0.5 * x * x + LN_SQRT_2PI
    }
}

/// ln Phi_bar(x), finite for all finite x.
pub fn ln_sf(x: f64) -> f64 {
    if x >= MILLS_SWITCH {
        mills_cf(x).ln() - 0.5 * x * x - LN_SQRT_2PI
    } else if x <= -MILLS_SWITCH {
        (-sf(-x)).ln_1p()
    } else {
        sf(x).ln()
    }
}

/// ln Phi(x).
pub fn ln_cdf(x: f64) -> f64 {
    ln_sf(-x)
}

/// Phi^{-1}(q) for q in (0, 1).
pub fn inv_cdf(q: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((sf(1.0) - 0.158_655_253_931_457_05).abs() < 1e-16);
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }

    #[test]
    fn mills_branches_agree_in_overlap() {
        for i in 0..200 {
            let x = 6.0 + i as f64 * 0.05;
            let direct = sf(x) / pdf(x);
            let cf = mills_cf(x);
            assert!(((direct - cf) / cf).abs() < 1e-13, "x = {x}: {direct} vs {cf}");
        }
    }

    #[test]
    fn ln_sf_is_finite_far_in_the_tail() {
        for x in [-40.0, -20.0, 0.0, 20.0, 37.0, 40.0] {
            assert!(ln_sf(x).is_finite(), "x = {x}");
        }
        // ln Phi_bar(40) ~ -800 - ln(40) - ln sqrt(2 pi)
        let approx = -800.0 - 40f64.ln() - LN_SQRT_2PI;
        assert!((ln_sf(40.0) - approx).abs() < 1e-3);
    }

    #[test]
    fn ln_mills_is_continuous_at_zero() {
        let a = ln_mills(1e-12);
        let b = ln_mills(-1e-12);
        assert!((a - b).abs() < 1e-11);
        assert!((ln_mills(0.0) - (0.5f64 * SQRT_2PI).ln()).abs() < 1e-15);
        assert!(ln_mills(-40.0).is_finite() && ln_mills(40.0).is_finite());
    }

    #[test]
    fn inverse_round_trips() {
        for i in 1..1000 {
            let q = i as f64 / 1000.0;
            assert!((cdf(inv_cdf(q)) - q).abs() < 1e-14, "q = {q}");
        }
    }
}
