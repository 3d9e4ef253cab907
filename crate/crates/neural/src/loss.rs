//! Binary cross-entropy on probabilities and on logits.

pub const PROB_CLAMP: f64 = 1e-7;

/// `-y ln p - (1 - y) ln(1 - p)` with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `dL/dp = (p - y) / (p (1 - p))`.
pub fn bce_grad(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (p - label as f64) / (p * (1.0 - p))
}

/// BCE of `sigmoid(z)`, computed without forming the probability.
pub fn bce_with_logit(z: f64, label: u8) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - label as f64 * z
}

/// `dL/dz = sigmoid(z) - y`.
pub fn bce_with_logit_grad(z: f64, label: u8) -> f64 {
    crate::layers::sigmoid(z) - label as f64
}
