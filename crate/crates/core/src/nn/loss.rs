use crate::numerics::Matrix;

/// Mean over rows of `‖pred − target‖²` and its gradient with respect to `pred`.
pub fn reconstruction(pred: &Matrix, target: &Matrix) -> (f64, Matrix) {
    assert_eq!(pred.shape(), target.shape());
    let rows = pred.rows().max(1) as f64;
    let diff = pred.sub(target).expect("shapes checked");
    let value = diff.data().iter().map(|d| d * d).sum::<f64>() / rows;
    (value, diff.scale(2.0 / rows))
}

/// `β/2 · mean ‖h‖²`, the standard-normal negative log-likelihood up to a constant.
pub fn gaussian_prior(h: &Matrix, beta: f64) -> (f64, Matrix) {
    let rows = h.rows().max(1) as f64;
    let value = beta * 0.5 * h.data().iter().map(|v| v * v).sum::<f64>() / rows;
    (value, h.scale(beta / rows))
}

/// Mean over rows of `Σ_i |h_i|`.
pub fn l1_penalty(h: &Matrix) -> f64 {
    h.data().iter().map(|v| v.abs()).sum::<f64>() / h.rows().max(1) as f64
}

/// Subgradient of [`l1_penalty`], taking 0 at 0.
pub fn l1_gradient(h: &Matrix) -> Matrix {
    let rows = h.rows().max(1) as f64;
    h.map(|v| if v > 0.0 { 1.0 / rows } else if v < 0.0 { -1.0 / rows } else { 0.0 })
}
