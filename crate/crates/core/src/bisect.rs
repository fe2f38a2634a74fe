//! Scalar root finding for the power-matching steps (projection onto the PA
//! budget, solver initialization, digital renormalization).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_ITERS: usize = 400;
const MAX_EXPANSIONS: usize = 200;

/// Finds `alpha` in `(0, hi]` with `|g(alpha) - target| <= tol`, given
/// `g(0) < target <= g(hi)`. If the bracket shrinks to machine precision
/// first, returns the lower end, which keeps `g(alpha) < target`.
pub fn bisect_bracketed<T: Scalar, F>(mut lo: T, mut hi: T, target: T, tol: T, g: F) -> Result<T>
where
    F: Fn(T) -> Result<T>,
{
    let two = T::lit(2.0);
    for _ in 0..MAX_ITERS {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid)?;
        if (v - target).abs() <= tol {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v_hi = g(hi)?;
    if (v_hi - target).abs() <= tol {
        Ok(hi)
    } else {
        Ok(lo)
    }
}

/// Finds a positive scale `alpha` with `g(alpha) ≈ target`, expanding the
/// upper end of the bracket from `hi` until it overshoots the target.
pub fn bisect_scale<T: Scalar, F>(hi: T, target: T, tol: T, g: F) -> Result<T>
where
    F: Fn(T) -> Result<T>,
{
    if !(target > T::zero()) {
        return Err(Error::Domain(format!("bisection target must be positive, got {target}")));
    }
    let mut hi = if hi > T::zero() { hi } else { T::one() };
    let mut expansions = 0;
    loop {
        let v = g(hi)?;
        if (v - target).abs() <= tol {
            return Ok(hi);
        }
        if v > target {
            break;
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Domain(format!(
                "cannot reach target {target}: g({hi}) = {v}"
            )));
        }
        hi *= T::lit(2.0);
    }
    bisect_bracketed(T::zero(), hi, target, tol, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_root() {
        let a = bisect_scale(1.0f64, 2.0, 1e-12, |x| Ok(x * x)).unwrap();
        assert!((a * a - 2.0).abs() <= 1e-12);
        let b = bisect_scale(1e-3f64, 1e6, 1e-6, |x| Ok(x * x)).unwrap();
        assert!((b - 1e3).abs() < 1e-6);
    }

    #[test]
    fn unreachable_target_errors() {
        assert!(bisect_scale(1.0f64, 2.0, 1e-12, |x| Ok(1.0 - 1.0 / (1.0 + x))).is_err());
        assert!(bisect_scale(1.0f64, 0.0, 1e-12, |x| Ok(x)).is_err());
    }

    #[test]
    fn collapsed_bracket_returns_feasible_end() {
        // a jump discontinuity at 0.5 can never hit 1.0 within tolerance
        let a = bisect_bracketed(0.0f64, 1.0, 1.0, 1e-12, |x| Ok(if x < 0.5 { 0.0 } else { 2.0 })).unwrap();
        assert!(a < 0.5);
    }
}
