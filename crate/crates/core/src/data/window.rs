use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Window start offsets (relative to the series start) for a series of `len` steps.
pub fn window_starts(len: usize, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::Config("window stride must be at least 1".into()));
    }
    let span = input_len + horizon;
    if len < span {
        return Err(Error::InsufficientData(format!(
            "series of length {len} is shorter than one window ({input_len} + {horizon})"
        )));
    }
    Ok((0..=len - span).step_by(stride).collect())
}

/// Number of windows: `⌊(len − (I + O)) / stride⌋ + 1`.
pub fn window_count(len: usize, input_len: usize, horizon: usize, stride: usize) -> Result<usize> {
    window_starts(len, input_len, horizon, stride).map(|s| s.len())
}

/// Sliding `(input, target)` pairs ordered by start offset.
pub fn windows(
    series: &[f64],
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let starts = window_starts(series.len(), input_len, horizon, stride)?;
    Ok(starts
        .into_iter()
        .map(|t0| {
            (
                series[t0..t0 + input_len].to_vec(),
                series[t0 + input_len..t0 + input_len + horizon].to_vec(),
            )
        })
        .collect())
}

/// One univariate training example. The series is shared, so cloning and
/// repeating samples is cheap.
#[derive(Debug, Clone)]
pub struct WindowSample {
    series: Arc<[f64]>,
    /// Start row of the input part within the source dataset.
    pub t0: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub dataset_label: usize,
    pub feature_index: usize,
}

impl WindowSample {
    pub fn input(&self) -> &[f64] {
        &self.series[self.t0..self.t0 + self.input_len]
    }

    pub fn target(&self) -> &[f64] {
        let start = self.t0 + self.input_len;
        &self.series[start..start + self.horizon]
    }
}

/// Windows of every feature of `values` whose rows lie fully inside `range`,
/// labelled `label`. Samples are ordered by feature, then by start row.
pub fn dataset_windows(
    values: &Matrix,
    range: Range<usize>,
    features: &[usize],
    input_len: usize,
    horizon: usize,
    stride: usize,
    label: usize,
) -> Result<Vec<WindowSample>> {
    let starts = window_starts(range.len(), input_len, horizon, stride)?;
    let mut out = Vec::with_capacity(starts.len() * features.len());
    for &j in features {
        if j >= values.cols() {
            return Err(Error::Config(format!(
                "feature index {j} out of range for {} features",
                values.cols()
            )));
        }
        let series: Arc<[f64]> = values.column(j).into();
        out.extend(starts.iter().map(|&s| WindowSample {
            series: Arc::clone(&series),
            t0: range.start + s,
            input_len,
            horizon,
            dataset_label: label,
            feature_index: j,
        }));
    }
    Ok(out)
}

/// Stacks sample inputs into a `B × I` matrix.
pub fn stack_inputs<'a>(samples: impl IntoIterator<Item = &'a WindowSample>) -> Matrix {
    stack(samples, WindowSample::input)
}

/// Stacks sample targets into a `B × O` matrix.
pub fn stack_targets<'a>(samples: impl IntoIterator<Item = &'a WindowSample>) -> Matrix {
    stack(samples, WindowSample::target)
}

fn stack<'a>(
    samples: impl IntoIterator<Item = &'a WindowSample>,
    part: impl Fn(&WindowSample) -> &[f64],
) -> Matrix {
    let mut rows = 0;
    let mut cols = 0;
    let mut data = Vec::new();
    for s in samples {
        let p = part(s);
        cols = p.len();
        data.extend_from_slice(p);
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data).expect("samples share one window shape")
}
