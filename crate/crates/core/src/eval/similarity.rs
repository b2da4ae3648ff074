use serde::{Deserialize, Serialize};

use super::report::{Cell, Table};
use crate::data::{stack_inputs, WindowSample};
use crate::error::{Error, Result};
use crate::loss::{similarity_probabilities, ReferenceSet};
use crate::model::ForecastModel;

/// Mean probability mass (in percent) that each evaluated dataset's windows
/// place on each pretrain dataset. Rows sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub percentages: Vec<Vec<f64>>,
    pub window_counts: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.columns.iter().position(|c| c == column)?;
        Some(self.percentages[i][j])
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["dataset".to_owned()];
        header.extend(self.columns.iter().cloned());
        let mut t = Table::new("similarity to pretrain datasets (%)", header);
        t.precision = 2;
        for (name, row) in self.rows.iter().zip(&self.percentages) {
            let mut cells: Vec<Cell> = vec![name.clone().into()];
            cells.extend(row.iter().map(|&v| Cell::Number(v)));
            t.push(cells);
        }
        t
    }
}

/// Averages the probability estimate over every window of each group.
pub fn similarity_matrix(
    model: &ForecastModel,
    reference: &ReferenceSet,
    columns: &[String],
    groups: &[(String, Vec<WindowSample>)],
    batch_size: usize,
) -> Result<SimilarityMatrix> {
    if columns.len() != reference.num_datasets() {
        return Err(Error::Config(format!(
            "{} column names for {} reference datasets",
            columns.len(),
            reference.num_datasets()
        )));
    }
    let mut percentages = Vec::with_capacity(groups.len());
    let mut window_counts = Vec::with_capacity(groups.len());
    for (name, samples) in groups {
        if samples.is_empty() {
            return Err(Error::InsufficientData(format!("no windows to score for {name}")));
        }
        let mut mass = vec![0.0; columns.len()];
        for chunk in samples.chunks(batch_size.max(1)) {
            let reps = model.contrastive_view(&model.encode(&stack_inputs(chunk))?)?;
            for i in 0..reps.rows() {
                let p = similarity_probabilities(reps.row(i), reference)?;
                mass.iter_mut().zip(p.as_slice()).for_each(|(m, v)| *m += v);
            }
        }
        let n = samples.len() as f64;
        percentages.push(mass.into_iter().map(|m| 100.0 * m / n).collect());
        window_counts.push(samples.len());
    }
    Ok(SimilarityMatrix {
        rows: groups.iter().map(|(n, _)| n.clone()).collect(),
        columns: columns.to_vec(),
        percentages,
        window_counts,
    })
}
