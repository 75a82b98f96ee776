/// Smooth-ℓ1 (Huber with unit threshold) between two scalars.
pub fn smooth_l1(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= 1.0 {
        0.5 * diff * diff
    } else {
        diff - 0.5
    }
}

/// Derivative of [`smooth_l1`] with respect to `a`: `a - b` clipped to `[-1, 1]`.
pub fn smooth_l1_grad(a: f64, b: f64) -> f64 {
    (a - b).clamp(-1.0, 1.0)
}

/// Coordinate-wise sum of [`smooth_l1`]. Panics on length mismatch; see
/// [`try_embed_distance`] for the checked form.
pub fn embed_distance(fx: &[f64], fy: &[f64]) -> f64 {
    assert_eq!(fx.len(), fy.len(), "embedding lengths differ");
    fx.iter().zip(fy).map(|(&a, &b)| smooth_l1(a, b)).sum()
}

pub fn try_embed_distance(fx: &[f64], fy: &[f64]) -> Result<f64, super::NetError> {
    if fx.len() != fy.len() {
        return Err(super::NetError::Shape(format!(
            "embedding lengths differ: {} vs {}",
            fx.len(),
            fy.len()
        )));
    }
    Ok(embed_distance(fx, fy))
}
