use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{window_starts, PreparedDataset, WindowSample};
use crate::error::{Error, Result};
use crate::model::ForecastModel;
use crate::numerics::Matrix;

pub const TEST_BATCH: usize = 32;

/// MSE and MAE over every cell: `1/(D·O) ΣΣ (P − V)²` and `1/(D·O) ΣΣ |P − V|`.
pub fn mse_mae(predictions: &Matrix, targets: &Matrix) -> Result<(f64, f64)> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Dimension {
            op: "mse_mae",
            left: predictions.shape(),
            right: targets.shape(),
        });
    }
    let mut acc = ErrorAccumulator::default();
    acc.add(predictions.as_slice(), targets.as_slice());
    Ok(acc.finish())
}

#[derive(Debug, Default, Clone, Copy)]
struct ErrorAccumulator {
    squared: f64,
    absolute: f64,
    cells: usize,
}

impl ErrorAccumulator {
    fn add(&mut self, predictions: &[f64], targets: &[f64]) {
        for (p, v) in predictions.iter().zip(targets) {
            let d = p - v;
            self.squared += d * d;
            self.absolute += d.abs();
        }
        self.cells += predictions.len();
    }

    fn finish(self) -> (f64, f64) {
        let n = self.cells.max(1) as f64;
        (self.squared / n, self.absolute / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    pub n_batches: usize,
}

/// Slides stride-1 windows over `rows`, forecasts every channel with the
/// shared model in batches of `batch_size` windows, and averages errors over
/// every forecast cell.
pub fn evaluate(
    model: &ForecastModel,
    dataset: &PreparedDataset,
    rows: Range<usize>,
    batch_size: usize,
) -> Result<EvalResult> {
    evaluate_with(dataset, rows, model.config.input_len, model.config.horizon, batch_size, |x| {
        model.predict(x)
    })
}

/// `evaluate` with an arbitrary predictor mapping `B × I` inputs to `B × O`.
pub fn evaluate_with(
    dataset: &PreparedDataset,
    rows: Range<usize>,
    input_len: usize,
    horizon: usize,
    batch_size: usize,
    mut predict: impl FnMut(&Matrix) -> Result<Matrix>,
) -> Result<EvalResult> {
    if batch_size == 0 {
        return Err(Error::Config("test batch size must be at least 1".into()));
    }
    let starts = window_starts(rows.len(), input_len, horizon, 1).map_err(|e| match e {
        Error::InsufficientData(m) => Error::InsufficientData(format!("{}: {m}", dataset.name)),
        other => other,
    })?;
    let d = dataset.num_features();
    let values = &dataset.values;
    let mut acc = ErrorAccumulator::default();
    let mut n_batches = 0;
    for chunk in starts.chunks(batch_size) {
        let b = chunk.len() * d;
        let mut inputs = Matrix::zeros(b, input_len);
        let mut targets = Matrix::zeros(b, horizon);
        for (w, &s) in chunk.iter().enumerate() {
            let t0 = rows.start + s;
            for j in 0..d {
                let r = w * d + j;
                for (k, v) in inputs.row_mut(r).iter_mut().enumerate() {
                    *v = values[(t0 + k, j)];
                }
                for (k, v) in targets.row_mut(r).iter_mut().enumerate() {
                    *v = values[(t0 + input_len + k, j)];
                }
            }
        }
        let predictions = predict(&inputs)?;
        if predictions.shape() != targets.shape() {
            return Err(Error::Dimension {
                op: "evaluate",
                left: predictions.shape(),
                right: targets.shape(),
            });
        }
        acc.add(predictions.as_slice(), targets.as_slice());
        n_batches += 1;
    }
    let (mse, mae) = acc.finish();
    Ok(EvalResult {
        dataset: dataset.name.clone(),
        horizon,
        mse,
        mae,
        n_windows: starts.len(),
        n_batches,
    })
}

/// MSE and MAE of the model over univariate samples.
pub fn evaluate_samples(model: &ForecastModel, samples: &[WindowSample], batch_size: usize) -> Result<(f64, f64)> {
    let mut acc = ErrorAccumulator::default();
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs = crate::data::stack_inputs(chunk);
        let targets = crate::data::stack_targets(chunk);
        let predictions = model.predict(&inputs)?;
        acc.add(predictions.as_slice(), targets.as_slice());
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NormalizationStats, SplitRanges};
    use crate::numerics::Rng;

    fn prepared(values: Matrix) -> PreparedDataset {
        let d = values.cols();
        let t = values.rows();
        PreparedDataset {
            name: "t".into(),
            values,
            stats: NormalizationStats { mean: vec![0.0; d], std: vec![1.0; d] },
            split: SplitRanges { train: 0..0, val: 0..0, test: 0..t },
        }
    }

    #[test]
    fn hand_metrics() {
        let p = Matrix::row_vector(&[1.0, 3.0]);
        let v = Matrix::row_vector(&[0.0, 1.0]);
        assert_eq!(mse_mae(&p, &v).unwrap(), (2.5, 1.5));
    }

    #[test]
    fn zero_iff_equal() {
        let p = Matrix::row_vector(&[1.0, 3.0]);
        assert_eq!(mse_mae(&p, &p).unwrap(), (0.0, 0.0));
        let q = Matrix::row_vector(&[1.0, 3.0 + 1e-12]);
        let (mse, mae) = mse_mae(&p, &q).unwrap();
        assert!(mse > 0.0 && mae > 0.0);
    }

    #[test]
    fn oracle_predictor_scores_zero() {
        let mut rng = Rng::new(1);
        let ds = prepared(Matrix::from_vec(60, 2, (0..120).map(|_| rng.normal()).collect()).unwrap());
        // Stub that looks up the true continuation of each input window.
        let values = ds.values.clone();
        let res = evaluate_with(&ds, 0..60, 8, 4, TEST_BATCH, |x| {
            let mut out = Matrix::zeros(x.rows(), 4);
            for r in 0..x.rows() {
                let (t0, j) = (0..=52)
                    .flat_map(|t| (0..2).map(move |j| (t, j)))
                    .find(|&(t, j)| (0..8).all(|k| values[(t + k, j)] == x[(r, k)]))
                    .unwrap();
                for k in 0..4 {
                    out[(r, k)] = values[(t0 + 8 + k, j)];
                }
            }
            Ok(out)
        })
        .unwrap();
        assert_eq!((res.mse, res.mae), (0.0, 0.0));
        assert_eq!(res.n_windows, 49);
        assert_eq!(res.n_batches, 2);
    }

    #[test]
    fn zero_predictor_on_standardized_noise_scores_variance() {
        let mut rng = Rng::new(2);
        let ds = prepared(Matrix::from_vec(20_000, 1, (0..20_000).map(|_| rng.normal()).collect()).unwrap());
        let res = evaluate_with(&ds, 0..20_000, 16, 8, TEST_BATCH, |x| Ok(Matrix::zeros(x.rows(), 8))).unwrap();
        assert!((res.mse - 1.0).abs() < 0.1, "{}", res.mse);
    }

    #[test]
    fn short_test_split_errors() {
        let ds = prepared(Matrix::zeros(10, 1));
        let err = evaluate_with(&ds, 0..10, 8, 4, TEST_BATCH, |x| Ok(Matrix::zeros(x.rows(), 4))).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
