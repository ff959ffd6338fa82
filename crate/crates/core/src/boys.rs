//! Boys function `F_m(T) = int_0^1 t^(2m) exp(-T t^2) dt`.
//!
//! Below [`UPWARD_MIN_T`] the highest requested order comes from the
//! convergent series `F_m(T) = exp(-T) sum_k (2T)^k / ((2m+1)(2m+3)...(2m+2k+1))`
//! and lower orders from downward recursion, which is stable for every `T`.
//! For large `T`, `F_0` reduces to `sqrt(pi/T)/2` to double precision and the
//! upward recursion is stable while `2m+1 < 2T`.

use crate::error::{Error, Result};

/// `erfc(sqrt(36))` is below 1e-16, so `F_0` is exactly `sqrt(pi/T)/2` past here.
const UPWARD_MIN_T: f64 = 36.0;

/// Fills `out[0..=m_max]` with `F_0(t)..F_{m_max}(t)`.
pub fn boys_into(t: f64, out: &mut [f64]) {
    debug_assert!(t >= 0.0);
    let Some(m_max) = out.len().checked_sub(1) else {
        return;
    };
    if t == 0.0 {
        for (m, v) in out.iter_mut().enumerate() {
            *v = 1.0 / (2 * m + 1) as f64;
        }
        return;
    }
    let emt = (-t).exp();
    if t >= UPWARD_MIN_T && (2 * m_max + 1) as f64 <= t {
        let half_inv_t = 0.5 / t;
        out[0] = 0.5 * (std::f64::consts::PI / t).sqrt();
        for m in 0..m_max {
            out[m + 1] = half_inv_t * ((2 * m + 1) as f64 * out[m] - emt);
        }
        return;
    }
    out[m_max] = series(m_max, t, emt);
    for m in (0..m_max).rev() {
        out[m] = (2.0 * t * out[m + 1] + emt) / (2 * m + 1) as f64;
    }
}

fn series(m: usize, t: f64, emt: f64) -> f64 {
    let two_t = 2.0 * t;
    let mut denom = (2 * m + 1) as f64;
    let mut term = 1.0 / denom;
    let mut sum = term;
    loop {
        denom += 2.0;
        term *= two_t / denom;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    emt * sum
}

/// `F_0(T)..F_{m_max}(T)`.
pub fn boys(m_max: i64, t: f64) -> Result<Vec<f64>> {
    if m_max < 0 {
        return Err(Error::InvalidArgument(format!("negative Boys order {m_max}")));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("Boys argument must be finite and >= 0, got {t}")));
    }
    let mut out = vec![0.0; m_max as usize + 1];
    boys_into(t, &mut out);
    Ok(out)
}
