//! Diachronic entity embeddings: the first `k` coordinates oscillate in time
//! as `a·sin(w·τ + b)`, the remaining `d − k` are static.

/// Encodes one entity at numeric time `tau`. `freq.len() == phase.len() == k`.
pub fn encode_into(amp: &[f64], freq: &[f64], phase: &[f64], tau: f64, out: &mut [f64]) {
    let k = freq.len();
    for n in 0..k {
        out[n] = amp[n] * (freq[n] * tau + phase[n]).sin();
    }
    out[k..].copy_from_slice(&amp[k..]);
}

pub fn de_entity_embed(amp: &[f64], freq: &[f64], phase: &[f64], tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; amp.len()];
    encode_into(amp, freq, phase, tau, &mut out);
    out
}

/// Accumulates `coeff · upstream · ∂z/∂θ` into the three gradient rows.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    amp: &[f64],
    freq: &[f64],
    phase: &[f64],
    tau: f64,
    upstream: &[f64],
    coeff: f64,
    d_amp: &mut [f64],
    d_freq: &mut [f64],
    d_phase: &mut [f64],
) {
    let k = freq.len();
    for n in 0..k {
        let u = freq[n] * tau + phase[n];
        let g = coeff * upstream[n];
        let (s, c) = u.sin_cos();
        d_amp[n] += g * s;
        d_phase[n] += g * amp[n] * c;
        d_freq[n] += g * amp[n] * c * tau;
    }
    for n in k..amp.len() {
        d_amp[n] += coeff * upstream[n];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn no_temporal_part_is_static() {
        let a = [0.4, -1.3, 2.2];
        assert_eq!(de_entity_embed(&a, &[], &[], 7.5), a);
    }

    #[test]
    fn zero_frequency_and_phase_vanish() {
        assert_eq!(de_entity_embed(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], 3.0), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_recomputation() {
        let got = de_entity_embed(&[2.0, 3.0, 1.0, 1.0], &[0.5, 1.0], &[0.0, FRAC_PI_2], 2.0);
        let want = [2.0 * 1.0f64.sin(), 3.0 * (2.0 + FRAC_PI_2).sin(), 1.0, 1.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }
}
