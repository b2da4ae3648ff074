use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A named multivariate series, `T` rows by `d` feature columns.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub name: String,
    pub columns: Vec<String>,
    pub timestamps: Vec<String>,
    pub values: Matrix,
    pub granularity: Option<String>,
}

impl RawDataset {
    /// Wraps an in-memory matrix; column names default to `f0..f{d-1}`.
    pub fn from_matrix(name: impl Into<String>, values: Matrix) -> Self {
        let columns = (0..values.cols()).map(|j| format!("f{j}")).collect();
        let timestamps = (0..values.rows()).map(|i| i.to_string()).collect();
        Self {
            name: name.into(),
            columns,
            timestamps,
            values,
            granularity: None,
        }
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.values.cols()
    }

    /// Column `j` restricted to `range`.
    pub fn feature(&self, j: usize, range: Range<usize>) -> Vec<f64> {
        range.map(|i| self.values[(i, j)]).collect()
    }
}

/// Reads a CSV with a header row whose first column is a timestamp and whose
/// remaining columns are numeric features. Missing or non-finite cells are rejected.
pub fn ingest_csv(path: impl AsRef<Path>, name: impl Into<String>) -> Result<RawDataset> {
    let path = path.as_ref();
    let ingestion = |message: String| Error::Ingestion {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingestion(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| ingestion(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(ingestion(
            "expected a timestamp column followed by at least one feature column".into(),
        ));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let d = columns.len();

    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // Row numbers in messages are 1-based file lines, header included.
        let line = r + 2;
        let record = record.map_err(|e| ingestion(format!("line {line}: {e}")))?;
        if record.len() != d + 1 {
            return Err(ingestion(format!(
                "line {line}: expected {} cells, found {}",
                d + 1,
                record.len()
            )));
        }
        timestamps.push(record[0].to_owned());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                ingestion(format!(
                    "line {line}, column `{}`: cannot parse {cell:?} as a number",
                    columns[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(ingestion(format!(
                    "line {line}, column `{}`: missing or non-finite value {cell:?}",
                    columns[j]
                )));
            }
            data.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(ingestion("file has no data rows".into()));
    }
    let values = Matrix::from_vec(timestamps.len(), d, data)?;
    Ok(RawDataset {
        name: name.into(),
        columns,
        timestamps,
        values,
        granularity: None,
    })
}

/// Writes a dataset in the same layout `ingest_csv` reads.
pub fn write_csv(ds: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let wrap = |e: csv::Error| Error::Ingestion {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header = vec!["date".to_owned()];
    header.extend(ds.columns.iter().cloned());
    writer.write_record(&header).map_err(wrap)?;
    for i in 0..ds.len() {
        let mut row = vec![ds.timestamps[i].clone()];
        row.extend(ds.values.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

fn floor_fraction(fraction: f64, len: usize) -> usize {
    // Absorb representation error such as 0.7 * 17420 = 12193.999…
    (fraction * len as f64 + 1e-9).floor() as usize
}

/// Contiguous train/val/test ranges: `⌊train·T⌋`, `⌊val·T⌋`, remainder.
/// Every split must hold at least `min_len` rows (one `I + O` window).
pub fn chronological_split(len: usize, spec: &SplitSpec, min_len: usize) -> Result<SplitRanges> {
    spec.validate()?;
    let n_train = floor_fraction(spec.train, len);
    let n_val = floor_fraction(spec.val, len);
    let ranges = SplitRanges {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..len,
    };
    for (name, r) in [
        ("train", &ranges.train),
        ("validation", &ranges.val),
        ("test", &ranges.test),
    ] {
        if r.len() < min_len {
            return Err(Error::InsufficientData(format!(
                "{name} split has {} rows but one window needs {min_len} (T = {len})",
                r.len()
            )));
        }
    }
    Ok(ranges)
}

/// Per-feature z-score statistics fitted on the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Population mean and standard deviation of each feature over `train`.
    pub fn fit(ds: &RawDataset, train: Range<usize>) -> Result<Self> {
        if train.is_empty() || train.end > ds.len() {
            return Err(Error::InsufficientData(format!(
                "normalizer needs a nonempty train range inside 0..{}, got {train:?}",
                ds.len()
            )));
        }
        let n = train.len() as f64;
        let d = ds.num_features();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let m = train.clone().map(|i| ds.values[(i, j)]).sum::<f64>() / n;
            let var = train
                .clone()
                .map(|i| (ds.values[(i, j)] - m).powi(2))
                .sum::<f64>()
                / n;
            let s = var.sqrt();
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidData(format!(
                    "feature `{}` of {} has zero or undefined variance on the train split",
                    ds.columns[j], ds.name
                )));
            }
            mean[j] = m;
            std[j] = s;
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, values: &Matrix) -> Result<Matrix> {
        self.check_width(values)?;
        let mut out = values.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, values: &Matrix) -> Result<Matrix> {
        self.check_width(values)?;
        let mut out = values.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }

    fn check_width(&self, values: &Matrix) -> Result<()> {
        if values.cols() != self.mean.len() {
            return Err(Error::Dimension {
                op: "normalize",
                left: values.shape(),
                right: (1, self.mean.len()),
            });
        }
        Ok(())
    }
}

/// A dataset normalized with its own train statistics, plus its split.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub values: Matrix,
    pub stats: NormalizationStats,
    pub split: SplitRanges,
}

impl PreparedDataset {
    pub fn prepare(ds: &RawDataset, spec: &SplitSpec, min_len: usize) -> Result<Self> {
        let split = chronological_split(ds.len(), spec, min_len)?;
        let stats = NormalizationStats::fit(ds, split.train.clone())?;
        let values = stats.apply(&ds.values)?;
        Ok(Self {
            name: ds.name.clone(),
            values,
            stats,
            split,
        })
    }

    pub fn num_features(&self) -> usize {
        self.values.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_shape_bookkeeping() {
        let mut s = String::from("date,a,b,c,d,e,f,g\n");
        for i in 0..100 {
            s.push_str(&format!("2020-01-01 {i:02}:00"));
            for j in 0..7 {
                s.push_str(&format!(",{}", i * 7 + j));
            }
            s.push('\n');
        }
        let f = write_tmp(&s);
        let ds = ingest_csv(f.path(), "toy").unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.num_features(), 7);
        assert_eq!(ds.values[(3, 2)], 23.0);
    }

    #[test]
    fn non_numeric_cell_is_named() {
        let f = write_tmp("date,x,y\nt0,1,2\nt1,3,oops\n");
        let msg = ingest_csv(f.path(), "bad").unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("`y`") && msg.contains("oops"), "{msg}");
    }

    #[test]
    fn missing_cell_and_empty_file_rejected() {
        let f = write_tmp("date,x\nt0,\n");
        assert!(ingest_csv(f.path(), "m").is_err());
        let f = write_tmp("date,x\n");
        assert!(ingest_csv(f.path(), "e").unwrap_err().to_string().contains("no data rows"));
        let f = write_tmp("");
        assert!(ingest_csv(f.path(), "e").is_err());
    }

    #[test]
    fn split_exact_ratios() {
        let r = chronological_split(100, &SplitSpec::default(), 1).unwrap();
        assert_eq!((r.train, r.val, r.test), (0..70, 70..80, 80..100));
    }

    #[test]
    fn split_ett_hourly_length() {
        let r = chronological_split(17420, &SplitSpec::default(), 192).unwrap();
        assert_eq!(r.train.len(), 12194);
        assert_eq!(r.val.len(), 1742);
        assert_eq!(r.test.len(), 17420 - 12194 - 1742);
    }

    #[test]
    fn split_too_short() {
        let err = chronological_split(10, &SplitSpec::default(), 192).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn split_partitions_for_many_lengths() {
        for len in 10..400 {
            let r = chronological_split(len, &SplitSpec::default(), 1).unwrap();
            assert_eq!(r.train.start, 0);
            assert_eq!(r.train.end, r.val.start);
            assert_eq!(r.val.end, r.test.start);
            assert_eq!(r.test.end, len);
        }
    }

    #[test]
    fn constant_feature_rejected() {
        let m = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let ds = RawDataset::from_matrix("c", m);
        let msg = NormalizationStats::fit(&ds, 0..3).unwrap_err().to_string();
        assert!(msg.contains("`f1`"), "{msg}");
    }

    #[test]
    fn population_std() {
        let m = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let stats = NormalizationStats::fit(&RawDataset::from_matrix("s", m), 0..3).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = Rng::new(9);
        let data: Vec<f64> = (0..300).map(|_| rng.uniform(-50.0, 80.0)).collect();
        let m = Matrix::from_vec(100, 3, data).unwrap();
        let ds = RawDataset::from_matrix("r", m.clone());
        let stats = NormalizationStats::fit(&ds, 0..70).unwrap();
        let back = stats.invert(&stats.apply(&m).unwrap()).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn fit_never_reads_val_or_test_rows() {
        let mut rng = Rng::new(2);
        let mut m = Matrix::zeros(100, 2);
        for i in 0..100 {
            for j in 0..2 {
                m[(i, j)] = if i < 70 { rng.normal() } else { f64::NAN };
            }
        }
        let ds = RawDataset::from_matrix("poisoned", m);
        let split = chronological_split(100, &SplitSpec::default(), 1).unwrap();
        let stats = NormalizationStats::fit(&ds, split.train).unwrap();
        assert!(stats.mean.iter().chain(&stats.std).all(|v| v.is_finite()));
    }
}
