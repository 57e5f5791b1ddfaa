//! Complex vectors stored as `[re_0..re_d, im_0..im_d]` and the elementwise
//! rotation used by TeRo.

/// Number of complex coordinates in a packed row.
pub fn complex_dim(packed: &[f64]) -> usize {
    debug_assert!(packed.len().is_multiple_of(2));
    packed.len() / 2
}

/// `out[k] = x[k] · tau[k]` for every complex coordinate.
pub fn rotate_into(x: &[f64], tau: &[f64], out: &mut [f64]) {
    let d = complex_dim(x);
    for k in 0..d {
        let (xr, xi) = (x[k], x[d + k]);
        let (tr, ti) = (tau[k], tau[d + k]);
        out[k] = xr * tr - xi * ti;
        out[d + k] = xr * ti + xi * tr;
    }
}

/// Allocating form of [`rotate_into`].
pub fn tero_time_rotate(x: &[f64], tau: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    rotate_into(x, tau, &mut out);
    out
}

/// Per-coordinate modulus `sqrt(re² + im²)`.
pub fn modulus(x: &[f64]) -> Vec<f64> {
    let d = complex_dim(x);
    (0..d).map(|k| x[k].hypot(x[d + k])).collect()
}

/// Projects each coordinate onto the unit circle. A zero coordinate becomes
/// `1 + 0i`; coordinates already unit to within rounding are left untouched.
pub fn normalize_unit_modulus(row: &mut [f64]) {
    let d = complex_dim(row);
    for k in 0..d {
        let norm = row[k].hypot(row[d + k]);
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            continue;
        }
        if norm > 0.0 && norm.is_finite() {
            row[k] /= norm;
            row[d + k] /= norm;
        } else {
            row[k] = 1.0;
            row[d + k] = 0.0;
        }
    }
}
