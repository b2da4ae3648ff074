use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::EvalResult;
use super::report::{Cell, Table};
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/baselines.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub model: String,
    pub dataset: String,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
}

/// Published supervised results, keyed by (model, dataset, horizon). Only
/// used as denominators of ratio columns.
#[derive(Debug, Clone, Default)]
pub struct BaselineTable {
    entries: BTreeMap<(String, String, usize), BaselineEntry>,
    models: Vec<String>,
}

impl BaselineTable {
    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED.as_bytes(), "bundled baselines").expect("bundled baseline table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file, &path.display().to_string())
    }

    pub fn from_csv(reader: impl std::io::Read, origin: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = Self::default();
        for row in r.deserialize::<BaselineEntry>() {
            let entry = row.map_err(|e| Error::Ingestion {
                path: origin.into(),
                message: e.to_string(),
            })?;
            if !table.models.contains(&entry.model) {
                table.models.push(entry.model.clone());
            }
            table
                .entries
                .insert((entry.model.clone(), entry.dataset.clone(), entry.horizon), entry);
        }
        Ok(table)
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, model: &str, dataset: &str, horizon: usize) -> Option<&BaselineEntry> {
        self.entries.get(&(model.to_owned(), dataset.to_owned(), horizon))
    }
}

/// Our MSE and MAE per (dataset, horizon) with `ours / baseline` ratio
/// columns for every baseline model; missing baselines leave blank cells.
pub fn ratio_report(results: &[EvalResult], baselines: &BaselineTable) -> Table {
    let mut header: Vec<String> = ["dataset", "horizon", "mse", "mae"].map(String::from).to_vec();
    for m in baselines.models() {
        header.push(format!("mse/{m}"));
        header.push(format!("mae/{m}"));
    }
    let mut table = Table::new("zero-shot error and ratios to supervised baselines", header);
    for r in results {
        let mut row: Vec<Cell> = vec![r.dataset.clone().into(), Cell::Text(r.horizon.to_string()), r.mse.into(), r.mae.into()];
        for m in baselines.models() {
            let b = baselines.get(m, &r.dataset, r.horizon);
            row.push(b.map(|b| r.mse / b.mse).into());
            row.push(b.map(|b| r.mae / b.mae).into());
        }
        table.push(row);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(dataset: &str, horizon: usize, mse: f64, mae: f64) -> EvalResult {
        EvalResult { dataset: dataset.into(), horizon, mse, mae, n_windows: 1, n_batches: 1 }
    }

    #[test]
    fn bundled_table_is_complete() {
        let t = BaselineTable::bundled();
        assert_eq!(t.models().len(), 7);
        assert_eq!(t.len(), 7 * 8 * 4);
        let e = t.get("TimesNet", "Exchange", 96).unwrap();
        assert_eq!((e.mse, e.mae), (0.107, 0.234));
    }

    #[test]
    fn ratio_against_hand_value() {
        let t = BaselineTable::bundled();
        let table = ratio_report(&[result("Exchange", 96, 0.081, 0.2)], &t);
        let col = table.header.iter().position(|h| h == "mse/TimesNet").unwrap();
        match table.rows[0][col] {
            Cell::Number(v) => assert!((v - 0.081 / 0.107).abs() < 1e-12 && (v - 0.757).abs() < 1e-3),
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_baseline_leaves_blank() {
        let t = BaselineTable::from_csv("model,dataset,horizon,mse,mae\nA,X,96,0.5,0.5\n".as_bytes(), "t").unwrap();
        let table = ratio_report(&[result("Y", 96, 0.1, 0.1)], &t);
        assert_eq!(table.rows[0][4], Cell::Empty);
        assert!(table.to_csv().lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn malformed_row_is_an_ingestion_error() {
        let err = BaselineTable::from_csv("model,dataset,horizon,mse,mae\nA,X,ninety,0.5,0.5\n".as_bytes(), "t");
        assert!(matches!(err, Err(Error::Ingestion { .. })));
    }
}
