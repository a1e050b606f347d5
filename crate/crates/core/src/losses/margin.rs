//! Additive angular margin on cosine logits, with the scalar derivatives the
//! prototype heads chain through.

/// Cosines are clamped to `[-1 + EPS_CLAMP, 1 - EPS_CLAMP]` before the angle
/// is taken.
pub const EPS_CLAMP: f64 = 1e-7;

/// Returns `(cos(theta + m), d/dz)` where `theta = arccos(clamp(z))`.
///
/// Past `theta + m > pi` the target logit would start increasing again, so
/// `cos(theta) - m sin(m)` is used instead. The derivative is zero inside the
/// clamped region.
pub fn apply_margin(z: f64, margin: f64) -> (f64, f64) {
    let zc = z.clamp(-1.0 + EPS_CLAMP, 1.0 - EPS_CLAMP);
    let clamped = zc != z;
    let (cos_m, sin_m) = (margin.cos(), margin.sin());
    let (t, dt) = if zc >= -cos_m {
        let sin_theta = (1.0 - zc * zc).sqrt();
        (zc * cos_m - sin_theta * sin_m, cos_m + zc * sin_m / sin_theta)
    } else {
        (zc - margin * sin_m, 1.0)
    };
    (t, if clamped { 0.0 } else { dt })
}

/// Softmax cross-entropy of `scale * z` with the margin applied to the
/// target class. Returns the loss and its gradient w.r.t. `z`.
pub fn margin_cross_entropy(z: &[f64], target: usize, scale: f64, margin: f64) -> (f64, Vec<f64>) {
    let (t, dt) = apply_margin(z[target], margin);
    let mut logits: Vec<f64> = z.iter().map(|v| scale * v).collect();
    logits[target] = scale * t;
    let (loss, dl) = crate::numerics::softmax_cross_entropy(&logits, target);
    let grad = dl
        .iter()
        .enumerate()
        .map(|(k, g)| if k == target { scale * g * dt } else { scale * g })
        .collect();
    (loss, grad)
}

/// Mean over classes of binary cross-entropy on `sigmoid(scale * z)`, the
/// margin applied to positive classes only.
pub fn margin_binary_cross_entropy(
    z: &[f64],
    labels: &[bool],
    scale: f64,
    margin: f64,
) -> (f64, Vec<f64>) {
    let k = z.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (v, &y) in z.iter().zip(labels) {
        let (t, dt) = if y { apply_margin(*v, margin) } else { (*v, 1.0) };
        let b = scale * t;
        // softplus(-b) = softplus(b) - b without the cancellation.
        let (l, g) = if y {
            (crate::numerics::softplus(-b), -crate::numerics::sigmoid(-b))
        } else {
            (crate::numerics::softplus(b), crate::numerics::sigmoid(b))
        };
        loss += l;
        grad.push(g * scale * dt / k);
    }
    (loss / k, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_margin_is_identity_inside_clamp() {
        for z in [-0.99, -0.3, 0.0, 0.42, 0.999] {
            let (t, dt) = apply_margin(z, 0.0);
            assert_eq!(t, z);
            assert_eq!(dt, 1.0);
        }
    }

    #[test]
    fn margin_matches_angle_form() {
        for z in [-0.5, 0.1, 0.8] {
            for m in [0.1, 0.3, 0.5] {
                let (t, _) = apply_margin(z, m);
                let expect = (f64::acos(z) + m).cos();
                assert!((t - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn falls_back_past_pi() {
        // theta = arccos(-0.99) ~ 3.0; + 0.5 > pi.
        let (t, dt) = apply_margin(-0.99, 0.5);
        assert!((t - (-0.99 - 0.5 * 0.5f64.sin())).abs() < 1e-15);
        assert_eq!(dt, 1.0);
    }

    #[test]
    fn margin_derivative_matches_finite_difference() {
        for z in [-0.7, -0.1, 0.3, 0.9] {
            for m in [0.0, 0.15, 0.4] {
                let h = 1e-6;
                let fd = (apply_margin(z + h, m).0 - apply_margin(z - h, m).0) / (2.0 * h);
                assert!((fd - apply_margin(z, m).1).abs() < 1e-7, "z={z} m={m}");
            }
        }
    }

    #[test]
    fn confident_target_has_tiny_loss() {
        let z = [1.0 - EPS_CLAMP, -0.9];
        let (loss, _) = margin_cross_entropy(&z, 0, 30.0, 0.0);
        assert!(loss < 1e-6);
    }

    #[test]
    fn negatives_ignore_margin() {
        let z = [0.3, -0.2, 0.7];
        let labels = [false; 3];
        let (a, _) = margin_binary_cross_entropy(&z, &labels, 10.0, 0.0);
        let (b, _) = margin_binary_cross_entropy(&z, &labels, 10.0, 0.4);
        assert!((a - b).abs() < 1e-12);
    }
}
