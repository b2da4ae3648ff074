use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Raw inner product.
    Dot,
    /// Inner product of ℓ2-normalized vectors.
    Cosine,
}

/// Similarity `sim(a, b) / τ` plus the `ε` added to contrastive denominators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityKernel {
    pub kind: KernelKind,
    pub temperature: f64,
    pub epsilon: f64,
}

impl Default for SimilarityKernel {
    fn default() -> Self {
        Self {
            kind: KernelKind::Cosine,
            temperature: 0.1,
            epsilon: 1e-8,
        }
    }
}

const MIN_NORM: f64 = 1e-12;

/// Rows mapped into the space where similarity is a plain dot product.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub vectors: Matrix,
    norms: Option<Vec<f64>>,
}

impl SimilarityKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn embed(&self, reps: &Matrix) -> Result<Embedded> {
        if !reps.all_finite() {
            return Err(Error::diverged("representations"));
        }
        Ok(match self.kind {
            KernelKind::Dot => Embedded {
                vectors: reps.clone(),
                norms: None,
            },
            KernelKind::Cosine => {
                let mut vectors = reps.clone();
                let mut norms = Vec::with_capacity(reps.rows());
                for i in 0..reps.rows() {
                    let row = vectors.row_mut(i);
                    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(MIN_NORM);
                    row.iter_mut().for_each(|v| *v /= n);
                    norms.push(n);
                }
                Embedded {
                    vectors,
                    norms: Some(norms),
                }
            }
        })
    }

    /// Pulls a gradient with respect to the embedded vectors back to the raw
    /// representations.
    pub fn embed_backward(&self, embedded: &Embedded, d_vectors: Matrix) -> Matrix {
        match &embedded.norms {
            None => d_vectors,
            Some(norms) => {
                let mut out = d_vectors;
                for (i, &n) in norms.iter().enumerate() {
                    let u = embedded.vectors.row(i);
                    let row = out.row_mut(i);
                    let proj: f64 = u.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                    for (d, &uk) in row.iter_mut().zip(u) {
                        *d = (*d - uk * proj) / n;
                    }
                }
                out
            }
        }
    }
}

/// `m + ln(Σ exp(xᵢ − m) + ε·e^{−m})` with `m = max(max xᵢ, ln ε)`, i.e.
/// `ln(Σ exp xᵢ + ε)` without overflow. An empty set gives `ln ε`.
pub(crate) fn log_sum_exp_plus_epsilon(values: impl Iterator<Item = f64> + Clone, epsilon: f64) -> f64 {
    let ln_eps = epsilon.ln();
    let m = values.clone().fold(ln_eps, f64::max);
    let sum: f64 = values.map(|v| (v - m).exp()).sum::<f64>() + (ln_eps - m).exp();
    m + sum.ln()
}
