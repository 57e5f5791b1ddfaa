//! Scoring kernels on already-encoded vectors. Every kernel returns a
//! plausibility (higher is better); distance kernels return the negated
//! distance.
//!
//! The `*_grad` functions overwrite their output buffers with the partial
//! derivatives of the score.

use super::rotation::complex_dim;

/// `−‖h + r − t‖₂²`
pub fn translational(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    -h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| {
            let diff = h + r - t;
            diff * diff
        })
        .sum::<f64>()
}

pub fn translational_grad(h: &[f64], r: &[f64], t: &[f64], dh: &mut [f64], dr: &mut [f64], dt: &mut [f64]) {
    for k in 0..h.len() {
        let g = -2.0 * (h[k] + r[k] - t[k]);
        dh[k] = g;
        dr[k] = g;
        dt[k] = -g;
    }
}

/// `hᵀ(r ⊙ t)`
pub fn bilinear(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum()
}

pub fn bilinear_grad(h: &[f64], r: &[f64], t: &[f64], dh: &mut [f64], dr: &mut [f64], dt: &mut [f64]) {
    for k in 0..h.len() {
        dh[k] = r[k] * t[k];
        dr[k] = h[k] * t[k];
        dt[k] = h[k] * r[k];
    }
}

/// Norm applied by the rotational kernel over the `2d` real components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationNorm {
    #[default]
    L1,
    /// Squared Euclidean, as in the translational kernel.
    L2,
}

/// Real and imaginary parts of `h∘τ + r − conj(t∘τ)` at coordinate `k`.
#[inline]
fn rotated_residual(h: &[f64], r: &[f64], t: &[f64], tau: &[f64], d: usize, k: usize) -> (f64, f64) {
    let (hr, hi) = (h[k], h[d + k]);
    let (tr, ti) = (t[k], t[d + k]);
    let (cr, ci) = (tau[k], tau[d + k]);
    let re = hr * cr - hi * ci + r[k] - (tr * cr - ti * ci);
    let im = hr * ci + hi * cr + r[d + k] + (tr * ci + ti * cr);
    (re, im)
}

/// `−‖h∘τ + r − conj(t∘τ)‖` over packed complex rows.
pub fn rotational(h: &[f64], r: &[f64], t: &[f64], tau: &[f64], norm: RotationNorm) -> f64 {
    let d = complex_dim(h);
    let mut total = 0.0;
    for k in 0..d {
        let (re, im) = rotated_residual(h, r, t, tau, d, k);
        total += match norm {
            RotationNorm::L1 => re.abs() + im.abs(),
            RotationNorm::L2 => re * re + im * im,
        };
    }
    -total
}

#[allow(clippy::too_many_arguments)]
pub fn rotational_grad(
    h: &[f64],
    r: &[f64],
    t: &[f64],
    tau: &[f64],
    norm: RotationNorm,
    dh: &mut [f64],
    dr: &mut [f64],
    dt: &mut [f64],
    dtau: &mut [f64],
) {
    let d = complex_dim(h);
    for k in 0..d {
        let (re, im) = rotated_residual(h, r, t, tau, d, k);
        // d score / d residual
        let (gr, gi) = match norm {
            RotationNorm::L1 => (-sign(re), -sign(im)),
            RotationNorm::L2 => (-2.0 * re, -2.0 * im),
        };
        let (hr, hi) = (h[k], h[d + k]);
        let (tr, ti) = (t[k], t[d + k]);
        let (cr, ci) = (tau[k], tau[d + k]);
        dh[k] = gr * cr + gi * ci;
        dh[d + k] = -gr * ci + gi * cr;
        dr[k] = gr;
        dr[d + k] = gi;
        dt[k] = -gr * cr + gi * ci;
        dt[d + k] = gr * ci + gi * cr;
        dtau[k] = gr * (hr - tr) + gi * (hi + ti);
        dtau[d + k] = gr * (ti - hi) + gi * (hr + tr);
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
