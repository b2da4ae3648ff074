use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Mean squared error over all `B·O` cells and its gradient `2(X̂ − X)/(B·O)`.
pub fn mse_loss(predictions: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Dimension {
            op: "mse_loss",
            left: predictions.shape(),
            right: targets.shape(),
        });
    }
    let n = predictions.len().max(1) as f64;
    let mut grad = predictions.clone();
    let mut loss = 0.0;
    for (g, t) in grad.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        let diff = *g - t;
        loss += diff * diff;
        *g = 2.0 * diff / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error, Rng};

    #[test]
    fn perfect_prediction_is_zero() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let (l, g) = mse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_value() {
        let (l, _) = mse_loss(&Matrix::row_vector(&[1.0, 1.0]), &Matrix::row_vector(&[0.0, 0.0])).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let p = Matrix::from_vec(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let t = Matrix::from_vec(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let (_, g) = mse_loss(&p, &t).unwrap();
        let numeric = finite_diff_grad(
            |v| mse_loss(&Matrix::from_vec(3, 4, v.to_vec()).unwrap(), &t).unwrap().0,
            p.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(max_relative_error(g.as_slice(), &numeric) < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        assert!(mse_loss(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }
}
