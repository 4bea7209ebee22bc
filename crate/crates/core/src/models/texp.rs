//! Tempered exponential and the two-class t-logistic log-partition.

use crate::error::{Error, Result};

const G_TOL: f64 = 1e-12;
const G_MAX_ITER: usize = 200;

/// `exp_t(x) = max{1 + (1−t)x, 0}^{1/(1−t)}`, reducing to `exp` at `t = 1`.
pub fn t_exp(x: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("t_exp argument {x}")));
    }
    Ok(t_exp_unchecked(x, t))
}

#[inline]
pub(crate) fn t_exp_unchecked(x: f64, t: f64) -> f64 {
    if t == 1.0 {
        return x.exp();
    }
    let base = 1.0 + (1.0 - t) * x;
    if base <= 0.0 {
        if t < 1.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        base.powf(1.0 / (1.0 - t))
    }
}

/// `ln_t(y) = (y^{1−t} − 1)/(1 − t)`, the inverse of `exp_t` on its range.
#[inline]
pub(crate) fn t_log(y: f64, t: f64) -> f64 {
    if t == 1.0 {
        y.ln()
    } else {
        (y.powf(1.0 - t) - 1.0) / (1.0 - t)
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "t must lie in (0, 2), got {t}"
        )))
    }
}

/// Residual of the two-class normaliser at `g`.
#[inline]
pub fn normaliser_residual(a: f64, g: f64, t: f64) -> f64 {
    t_exp_unchecked(0.5 * a - g, t) + t_exp_unchecked(-0.5 * a - g, t) - 1.0
}

/// `G_t(a)` solving `exp_t(a/2 − G) + exp_t(−a/2 − G) = 1`.
///
/// The left side is decreasing in `G`. At `G = |a|/2` the larger term is 1, and
/// at `G = |a|/2 − ln_t(1/2)` both terms are at most 1/2, so this brackets the root.
pub fn t_log_partition(a: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !a.is_finite() {
        return Err(Error::NonFinite(format!("linear predictor {a}")));
    }
    let a = a.abs();
    let mut lo = 0.5 * a;
    let mut hi = 0.5 * a - t_log(0.5, t);
    let f_lo = normaliser_residual(a, lo, t);
    let mut f_hi = normaliser_residual(a, hi, t);
    // rounding can leave the analytic upper end a hair short of the root
    let mut widen = 1e-12 * (1.0 + hi.abs());
    for _ in 0..60 {
        if f_hi <= 0.0 {
            break;
        }
        hi += widen;
        widen *= 2.0;
        f_hi = normaliser_residual(a, hi, t);
    }
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::NotBracketed { lo, hi, f_lo, f_hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..G_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let r = normaliser_residual(a, mid, t);
        if r == 0.0 {
            return Ok(mid);
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= G_TOL * (1.0 + mid.abs()) {
            let g = 0.5 * (lo + hi);
            return Ok(g);
        }
    }
    let g = 0.5 * (lo + hi);
    Err(Error::RootNotConverged {
        iterations: G_MAX_ITER,
        residual: normaliser_residual(a, g, t),
    })
}

/// `P(y = 1)` under the t-logistic link with linear predictor `a`.
pub(crate) fn t_logistic_prob(a: f64, t: f64) -> Result<f64> {
    let g = t_log_partition(a, t)?;
    Ok(t_exp_unchecked(0.5 * a - g, t).clamp(0.0, 1.0))
}
