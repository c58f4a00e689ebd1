//! Legendre polynomials shifted to `[0, 1]` and scaled to unit `L^2` norm,
//! `L~_m(x) = sqrt(2m + 1) P_m(2x - 1)`.

/// Fills `out[m] = L~_m(x)` for `m = 0..out.len()` by the three-term
/// recurrence.
pub fn shifted_legendre_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let t = 2.0 * x - 1.0;
    let mut p_prev = 1.0;
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    let mut p = t;
    out[1] = 3f64.sqrt() * t;
    for m in 1..out.len() - 1 {
        let mf = m as f64;
        let p_next = ((2.0 * mf + 1.0) * t * p - mf * p_prev) / (mf + 1.0);
        p_prev = p;
        p = p_next;
        out[m + 1] = (2.0 * mf + 3.0).sqrt() * p;
    }
}

/// `L~_m(x)` for a single degree.
pub fn shifted_legendre(m: u32, x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    match m {
        0 => 1.0,
        1 => 3f64.sqrt() * t,
        _ => {
            let (mut p_prev, mut p) = (1.0, t);
            for k in 1..m {
                let kf = k as f64;
                let p_next = ((2.0 * kf + 1.0) * t * p - kf * p_prev) / (kf + 1.0);
                p_prev = p;
                p = p_next;
            }
            (2.0 * m as f64 + 1.0).sqrt() * p
        }
    }
}

/// `sup_{[0,1]} L~_m^2 = 2m + 1`, attained at the endpoints.
pub fn sup_squared(m: u32) -> f64 {
    2.0 * m as f64 + 1.0
}
