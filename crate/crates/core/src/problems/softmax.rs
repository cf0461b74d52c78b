//! Shared softmax / cross-entropy pieces for the classifier objectives.

/// log(sum exp(z_k)), stabilized by the max. Since lse >= max(z), every
/// log-probability z_k - lse is <= 0, which keeps cross-entropy terms
/// nonnegative in floating point and the f >= 0 lower bound exact.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Replaces logits with probabilities in place; returns the lse used.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let lse = log_sum_exp(z);
    for v in z.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}
