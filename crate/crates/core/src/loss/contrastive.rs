use serde::{Deserialize, Serialize};

use super::kernel::{log_sum_exp_plus_epsilon, Embedded, SimilarityKernel};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Scalar loss with its gradient with respect to the representations fed in.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad: Matrix,
    /// Anchors that had at least one positive and so entered the mean.
    pub active_anchors: usize,
}

/// Supervised contrastive loss with dataset labels and a negatives-only
/// denominator:
///
/// `Lᵢ = −1/|P(i)| Σ_{p∈P(i)} log( exp(sᵢₚ) / (Σ_{n∈N(i)} exp(sᵢₙ) + ε) )`
///
/// with `s = sim/τ`. Positives are the other samples sharing the anchor's
/// label, negatives are all samples with another label. Anchors without a
/// positive are skipped; the result is the mean over the remaining anchors
/// (zero if there are none).
pub fn supcon_loss(reps: &Matrix, labels: &[usize], kernel: &SimilarityKernel) -> Result<ContrastiveOutput> {
    let b = reps.rows();
    if b == 0 {
        return Err(Error::InvalidData("contrastive loss on an empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::Dimension {
            op: "supcon_loss",
            left: reps.shape(),
            right: (labels.len(), 1),
        });
    }
    let emb = kernel.embed(reps)?;
    let u = &emb.vectors;
    let tau = kernel.temperature;
    let sims = u.matmul_transposed(u)?.map(|v| v / tau);
    let core = supcon_from_similarities(&sims, labels, kernel.epsilon);
    if core.active_anchors == 0 {
        return Ok(ContrastiveOutput {
            loss: 0.0,
            grad: Matrix::zeros(b, reps.cols()),
            active_anchors: 0,
        });
    }

    // s = U·Uᵀ/τ, so dU = (dS + dSᵀ)·U/τ.
    let mut sym = core.grad.transpose();
    sym.add_assign(&core.grad)?;
    let mut d_u = sym.matmul(u)?;
    d_u.scale(1.0 / tau);
    Ok(ContrastiveOutput {
        loss: core.loss,
        grad: kernel.embed_backward(&emb, d_u),
        active_anchors: core.active_anchors,
    })
}

/// The loss on a precomputed `B × B` matrix of scaled similarities, with
/// its gradient with respect to each entry (entry `(i, j)` read from anchor
/// `i`'s side only).
pub(crate) fn supcon_from_similarities(sims: &Matrix, labels: &[usize], epsilon: f64) -> ContrastiveOutput {
    let b = sims.rows();
    let positives: Vec<usize> = (0..b)
        .map(|i| (0..b).filter(|&j| j != i && labels[j] == labels[i]).count())
        .collect();
    let active = positives.iter().filter(|&&n| n > 0).count();
    let mut d_sims = Matrix::zeros(b, b);
    if active == 0 {
        return ContrastiveOutput {
            loss: 0.0,
            grad: d_sims,
            active_anchors: 0,
        };
    }
    let a = active as f64;
    let mut loss = 0.0;
    for i in 0..b {
        if positives[i] == 0 {
            continue;
        }
        let row = sims.row(i);
        let negatives = (0..b).filter(|&j| labels[j] != labels[i]).map(|j| row[j]);
        let lse = log_sum_exp_plus_epsilon(negatives, epsilon);
        let n_pos = positives[i] as f64;
        let mut pos_sum = 0.0;
        for j in 0..b {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] {
                pos_sum += row[j];
                d_sims[(i, j)] -= 1.0 / (a * n_pos);
            } else {
                d_sims[(i, j)] += (row[j] - lse).exp() / a;
            }
        }
        loss += (-pos_sum / n_pos + lse) / a;
    }
    ContrastiveOutput {
        loss,
        grad: d_sims,
        active_anchors: active,
    }
}

/// Embedded pretrain representations with their dataset labels, used as the
/// reference for probability estimates and the finetune contrastive term.
/// Treated as constants: nothing differentiates through them.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    embedded: Embedded,
    labels: Vec<usize>,
    num_datasets: usize,
    kernel: SimilarityKernel,
}

impl ReferenceSet {
    pub fn new(reps: &Matrix, labels: Vec<usize>, num_datasets: usize, kernel: SimilarityKernel) -> Result<Self> {
        if labels.len() != reps.rows() {
            return Err(Error::Dimension {
                op: "reference",
                left: reps.shape(),
                right: (labels.len(), 1),
            });
        }
        let mut seen = vec![false; num_datasets];
        for &l in &labels {
            if l >= num_datasets {
                return Err(Error::InvalidData(format!(
                    "reference label {l} is outside 0..{num_datasets}"
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidData(format!(
                "reference batch has no sample of dataset {missing}"
            )));
        }
        Ok(Self {
            embedded: kernel.embed(reps)?,
            labels,
            num_datasets,
            kernel,
        })
    }

    pub fn num_datasets(&self) -> usize {
        self.num_datasets
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn kernel(&self) -> &SimilarityKernel {
        &self.kernel
    }

    fn embed_anchor(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if z.len() != self.embedded.vectors.cols() {
            return Err(Error::Dimension {
                op: "reference anchor",
                left: (1, z.len()),
                right: self.embedded.vectors.shape(),
            });
        }
        let e = self.kernel.embed(&Matrix::row_vector(z))?;
        let norm = match self.kernel.kind {
            super::KernelKind::Dot => 1.0,
            super::KernelKind::Cosine => {
                z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12)
            }
        };
        Ok((e.vectors.into_vec(), norm))
    }

    /// Scaled similarities `sim(z, z_l)/τ` to every reference row.
    fn similarities(&self, u: &[f64]) -> Vec<f64> {
        let tau = self.kernel.temperature;
        (0..self.labels.len())
            .map(|l| dot(u, self.embedded.vectors.row(l)) / tau)
            .collect()
    }
}

/// A point of the probability simplex over pretrain datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(pub Vec<f64>);

impl ProbabilityVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `pᵢ = Σ_{l∈Dataset(i)} exp(s_l) / Σ_l exp(s_l)`, computed after
/// subtracting the largest similarity.
pub fn similarity_probabilities(z: &[f64], reference: &ReferenceSet) -> Result<ProbabilityVector> {
    let (u, _) = reference.embed_anchor(z)?;
    Ok(probabilities_from_similarities(
        &reference.similarities(&u),
        &reference.labels,
        reference.num_datasets,
    ))
}

/// The estimator on precomputed scaled similarities.
pub fn probabilities_from_similarities(sims: &[f64], labels: &[usize], num_datasets: usize) -> ProbabilityVector {
    let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = vec![0.0; num_datasets];
    for (&s, &l) in sims.iter().zip(labels) {
        mass[l] += (s - m).exp();
    }
    let total: f64 = mass.iter().sum();
    ProbabilityVector(mass.into_iter().map(|v| v / total).collect())
}

/// Datasets split by comparing each `pᵢ` with `1/P`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateSets {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// `pᵢ > 1/P` → positive, `pᵢ < 1/P` → negative, `pᵢ = 1/P` → discarded.
pub fn gate_sets(p: &ProbabilityVector, num_datasets: usize) -> GateSets {
    let threshold = 1.0 / num_datasets as f64;
    let mut gates = GateSets::default();
    for (i, &pi) in p.0.iter().enumerate() {
        if pi > threshold {
            gates.positive.push(i);
        } else if pi < threshold {
            gates.negative.push(i);
        } else {
            gates.discarded.push(i);
        }
    }
    gates
}

/// Finetune contrastive term for one anchor. Positives and negatives are the
/// reference rows whose dataset is gated positive or negative; discarded
/// datasets take no part. Returns the loss and its gradient with respect to
/// the anchor only; the loss is zero when no dataset is gated positive.
pub fn ftcon_loss(z: &[f64], reference: &ReferenceSet, gates: &GateSets) -> Result<(f64, Vec<f64>)> {
    let dim = z.len();
    let mut is_pos = vec![false; reference.num_datasets];
    let mut is_neg = vec![false; reference.num_datasets];
    gates.positive.iter().for_each(|&i| is_pos[i] = true);
    gates.negative.iter().for_each(|&i| is_neg[i] = true);
    let n_pos = reference.labels.iter().filter(|&&l| is_pos[l]).count();
    if n_pos == 0 {
        return Ok((0.0, vec![0.0; dim]));
    }

    let (u, norm) = reference.embed_anchor(z)?;
    let sims = reference.similarities(&u);
    let negatives = sims
        .iter()
        .zip(&reference.labels)
        .filter(|(_, &l)| is_neg[l])
        .map(|(&s, _)| s);
    let lse = log_sum_exp_plus_epsilon(negatives, reference.kernel.epsilon);

    let tau = reference.kernel.temperature;
    let mut pos_sum = 0.0;
    let mut d_u = vec![0.0; dim];
    for (l, (&s, &label)) in sims.iter().zip(&reference.labels).enumerate() {
        let weight = if is_pos[label] {
            pos_sum += s;
            -1.0 / n_pos as f64
        } else if is_neg[label] {
            (s - lse).exp()
        } else {
            continue;
        };
        for (d, r) in d_u.iter_mut().zip(reference.embedded.vectors.row(l)) {
            *d += weight * r / tau;
        }
    }
    let loss = -pos_sum / n_pos as f64 + lse;

    let grad = match reference.kernel.kind {
        super::KernelKind::Dot => d_u,
        super::KernelKind::Cosine => {
            let proj = dot(&u, &d_u);
            d_u.iter().zip(&u).map(|(d, uk)| (d - uk * proj) / norm).collect()
        }
    };
    Ok((loss, grad))
}

/// Per-anchor probabilities, gates and FTCon over a batch of anchors; the
/// loss is the mean over anchors with at least one positive dataset.
pub fn ftcon_batch(reps: &Matrix, reference: &ReferenceSet) -> Result<FtconBatch> {
    let mut terms = Vec::with_capacity(reps.rows());
    let mut gates_out = Vec::with_capacity(reps.rows());
    let mut probabilities = Vec::with_capacity(reps.rows());
    for i in 0..reps.rows() {
        let z = reps.row(i);
        let p = similarity_probabilities(z, reference)?;
        let gates = gate_sets(&p, reference.num_datasets);
        terms.push(ftcon_loss(z, reference, &gates)?);
        gates_out.push(gates);
        probabilities.push(p);
    }
    let active = gates_out.iter().filter(|g| !g.positive.is_empty()).count();
    let mut grad = Matrix::zeros(reps.rows(), reps.cols());
    let mut loss = 0.0;
    if active > 0 {
        let a = active as f64;
        for (i, (l, g)) in terms.iter().enumerate() {
            loss += l / a;
            for (d, v) in grad.row_mut(i).iter_mut().zip(g) {
                *d = v / a;
            }
        }
    }
    Ok(FtconBatch {
        output: ContrastiveOutput {
            loss,
            grad,
            active_anchors: active,
        },
        probabilities,
        gates: gates_out,
    })
}

#[derive(Debug, Clone)]
pub struct FtconBatch {
    pub output: ContrastiveOutput,
    pub probabilities: Vec<ProbabilityVector>,
    pub gates: Vec<GateSets>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::KernelKind;
    use crate::numerics::{finite_diff_grad, max_relative_error, Rng};
    use proptest::prelude::*;

    fn dot_kernel(tau: f64) -> SimilarityKernel {
        SimilarityKernel {
            kind: KernelKind::Dot,
            temperature: tau,
            epsilon: 1e-8,
        }
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Direct transcription of the loss with explicit sums and no shifts.
    fn naive_supcon(reps: &Matrix, labels: &[usize], kernel: &SimilarityKernel) -> f64 {
        let b = reps.rows();
        let sim = |i: usize, j: usize| {
            let (a, c) = (reps.row(i), reps.row(j));
            let d: f64 = a.iter().zip(c).map(|(x, y)| x * y).sum();
            let s = match kernel.kind {
                KernelKind::Dot => d,
                KernelKind::Cosine => d / (dot(a, a).sqrt() * dot(c, c).sqrt()),
            };
            s / kernel.temperature
        };
        let mut total = 0.0;
        let mut active = 0;
        for i in 0..b {
            let pos: Vec<usize> = (0..b).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if pos.is_empty() {
                continue;
            }
            let denom: f64 = (0..b).filter(|&j| labels[j] != labels[i]).map(|j| sim(i, j).exp()).sum::<f64>()
                + kernel.epsilon;
            total += -pos.iter().map(|&p| (sim(i, p).exp() / denom).ln()).sum::<f64>() / pos.len() as f64;
            active += 1;
        }
        if active == 0 {
            0.0
        } else {
            total / active as f64
        }
    }

    #[test]
    fn supcon_hand_example() {
        let out = supcon_loss(&column(&[1.0, 1.0, -1.0]), &[0, 0, 1], &dot_kernel(1.0)).unwrap();
        let expected = -2.0 + (1.0 + 1e-8 * std::f64::consts::E).ln();
        assert!((out.loss - expected).abs() < 1e-12, "{} vs {expected}", out.loss);
        assert!((out.loss - (-2.0 + 2.718e-8)).abs() < 1e-11);
        assert_eq!(out.active_anchors, 2);
    }

    #[test]
    fn supcon_single_sample_is_zero() {
        let out = supcon_loss(&column(&[0.7]), &[0], &SimilarityKernel::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn supcon_all_one_label_uses_epsilon() {
        let out = supcon_loss(&column(&[1.0, 2.0, 3.0]), &[0, 0, 0], &dot_kernel(1.0)).unwrap();
        let expected = -11.0 / 3.0 + 1e-8f64.ln();
        assert!((out.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn supcon_empty_batch_errors() {
        assert!(supcon_loss(&Matrix::zeros(0, 3), &[], &SimilarityKernel::default()).is_err());
    }

    #[test]
    fn supcon_gradient_matches_finite_differences() {
        let mut rng = Rng::new(11);
        for kind in [KernelKind::Dot, KernelKind::Cosine] {
            let kernel = SimilarityKernel { kind, temperature: 0.5, epsilon: 1e-8 };
            for _ in 0..5 {
                let z = random(8, 5, &mut rng);
                let labels: Vec<usize> = (0..8).map(|_| rng.below(3)).collect();
                let out = supcon_loss(&z, &labels, &kernel).unwrap();
                let numeric = finite_diff_grad(
                    |v| supcon_loss(&Matrix::from_vec(8, 5, v.to_vec()).unwrap(), &labels, &kernel).unwrap().loss,
                    z.as_slice(),
                    1e-6,
                )
                .unwrap();
                let err = max_relative_error(out.grad.as_slice(), &numeric);
                assert!(err < 1e-4, "{kind:?}: {err}");
            }
        }
    }

    #[test]
    fn two_dataset_probability_example() {
        let reference = ReferenceSet::new(&column(&[1.0, -1.0]), vec![0, 1], 2, dot_kernel(1.0)).unwrap();
        let p = similarity_probabilities(&[1.0], &reference).unwrap();
        let e = std::f64::consts::E;
        assert!((p.0[0] - e / (e + 1.0 / e)).abs() < 1e-12);
        assert!((p.0[0] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn reference_requires_every_label() {
        assert!(ReferenceSet::new(&column(&[1.0, 2.0]), vec![0, 0], 2, dot_kernel(1.0)).is_err());
        assert!(ReferenceSet::new(&column(&[1.0, 2.0]), vec![0, 2], 2, dot_kernel(1.0)).is_err());
    }

    #[test]
    fn gate_examples() {
        let g = gate_sets(&ProbabilityVector(vec![0.4, 0.4, 0.1, 0.1]), 4);
        assert_eq!((g.positive, g.negative, g.discarded), (vec![0, 1], vec![2, 3], vec![]));
        let g = gate_sets(&ProbabilityVector(vec![0.25; 4]), 4);
        assert_eq!((g.positive.len(), g.negative.len(), g.discarded), (0, 0, vec![0, 1, 2, 3]));
        let g = gate_sets(&ProbabilityVector(vec![0.9, 0.1]), 2);
        assert_eq!((g.positive, g.negative), (vec![0], vec![1]));
    }

    #[test]
    fn ftcon_all_discarded_is_zero() {
        let reference = ReferenceSet::new(&column(&[1.0, -1.0]), vec![0, 1], 2, dot_kernel(1.0)).unwrap();
        let gates = GateSets { discarded: vec![0, 1], ..GateSets::default() };
        let (l, g) = ftcon_loss(&[0.3], &reference, &gates).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0]));
    }

    #[test]
    fn ftcon_scalar_hand_oracle() {
        let reference = ReferenceSet::new(&column(&[1.0, -1.0]), vec![0, 1], 2, dot_kernel(1.0)).unwrap();
        let z = 2.0f64;
        let batch = ftcon_batch(&column(&[z]), &reference).unwrap();
        assert_eq!(batch.gates[0].positive, vec![0]);
        let eps = 1e-8;
        let expected = -z + ((-z).exp() + eps).ln();
        let d_expected = -1.0 - (-z).exp() / ((-z).exp() + eps);
        assert!((batch.output.loss - expected).abs() < 1e-12);
        assert!((batch.output.grad[(0, 0)] - d_expected).abs() < 1e-12);
    }

    #[test]
    fn ftcon_gradient_matches_finite_differences_with_frozen_reference() {
        let mut rng = Rng::new(12);
        for kind in [KernelKind::Dot, KernelKind::Cosine] {
            let kernel = SimilarityKernel { kind, temperature: 0.5, epsilon: 1e-8 };
            for _ in 0..5 {
                let reps = random(12, 4, &mut rng);
                let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
                let reference = ReferenceSet::new(&reps, labels, 3, kernel).unwrap();
                let z = random(8, 4, &mut rng);
                let out = ftcon_batch(&z, &reference).unwrap();
                // Gates are held at their current values; they are piecewise
                // constant in the anchors.
                let gates = out.gates.clone();
                let active = out.output.active_anchors.max(1) as f64;
                let numeric = finite_diff_grad(
                    |v| {
                        (0..8)
                            .map(|i| ftcon_loss(&v[i * 4..i * 4 + 4], &reference, &gates[i]).unwrap().0)
                            .sum::<f64>()
                            / active
                    },
                    z.as_slice(),
                    1e-6,
                )
                .unwrap();
                let err = max_relative_error(out.output.grad.as_slice(), &numeric);
                assert!(err < 1e-4, "{kind:?}: {err}");
            }
        }
    }

    #[test]
    fn grouped_estimate_can_cross_uniform_as_tau_shrinks() {
        // Dataset 0 has the single closest sample but a lower mean, so its
        // mass dips below 1/2 at high τ and exceeds it at low τ.
        let sims = [4.0, -4.0, -4.0, -4.0, 1.0, 1.0, 1.0, 1.0];
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let p0 = |tau: f64| {
            let scaled: Vec<f64> = sims.iter().map(|s| s / tau).collect();
            probabilities_from_similarities(&scaled, &labels, 2).0[0]
        };
        assert!(p0(10.0) < 0.5);
        assert!(p0(0.1) > 0.5);
    }

    #[test]
    fn probabilities_survive_large_similarities() {
        let p = probabilities_from_similarities(&[1000.0, 999.0, -1000.0], &[0, 1, 1], 2);
        assert!(p.0.iter().all(|v| v.is_finite()));
        assert!((p.0[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    fn sims_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
        (2usize..6).prop_flat_map(|p| {
            (1usize..6).prop_flat_map(move |per| {
                let n = p * per;
                (
                    proptest::collection::vec(-30.0f64..30.0, n),
                    Just((0..n).map(|i| i % p).collect::<Vec<_>>()),
                    Just(p),
                )
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn probabilities_lie_on_the_simplex((sims, labels, p) in sims_and_labels()) {
            let v = probabilities_from_similarities(&sims, &labels, p);
            prop_assert!(v.0.iter().all(|&x| x > 0.0 && x <= 1.0 + 1e-12));
            prop_assert!((v.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn probabilities_are_shift_invariant((sims, labels, p) in sims_and_labels(), c in -100.0f64..100.0) {
            let a = probabilities_from_similarities(&sims, &labels, p);
            let shifted: Vec<f64> = sims.iter().map(|s| s + c).collect();
            let b = probabilities_from_similarities(&shifted, &labels, p);
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn probabilities_follow_label_permutations((sims, labels, p) in sims_and_labels(), seed in any::<u64>()) {
            let perm = Rng::new(seed).permutation(p);
            let relabelled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            let a = probabilities_from_similarities(&sims, &labels, p);
            let b = probabilities_from_similarities(&sims, &relabelled, p);
            for d in 0..p {
                prop_assert!((a.0[d] - b.0[perm[d]]).abs() < 1e-12);
            }
        }

        #[test]
        fn equal_similarities_give_exact_uniform(p in 2usize..7, per in 1usize..9, s in -20.0f64..20.0) {
            let labels: Vec<usize> = (0..p * per).map(|i| i % p).collect();
            let v = probabilities_from_similarities(&vec![s; p * per], &labels, p);
            prop_assert!(v.0.iter().all(|&x| x == 1.0 / p as f64));
        }

        #[test]
        fn one_sample_per_dataset_flattens_monotonically_in_tau(
            sims in proptest::collection::vec(-5.0f64..5.0, 2..6),
            t1 in 0.05f64..5.0,
            factor in 1.0f64..10.0,
        ) {
            let p = sims.len();
            let labels: Vec<usize> = (0..p).collect();
            let dev = |tau: f64| {
                let scaled: Vec<f64> = sims.iter().map(|s| s / tau).collect();
                probabilities_from_similarities(&scaled, &labels, p)
                    .0
                    .iter()
                    .map(|x| (x - 1.0 / p as f64).abs())
                    .fold(0.0, f64::max)
            };
            prop_assert!(dev(t1 * factor) <= dev(t1) + 1e-12);
        }

        #[test]
        fn gates_invariant_under_threshold_preserving_maps(
            raw in proptest::collection::vec(0.01f64..1.0, 2..8),
            gamma in 0.2f64..1.0,
        ) {
            let p = raw.len();
            let total: f64 = raw.iter().sum();
            let v = ProbabilityVector(raw.iter().map(|x| x / total).collect());
            let t = 1.0 / p as f64;
            let mapped = ProbabilityVector(
                v.0.iter().map(|&x| t + (x - t).signum() * (x - t).abs().powf(gamma)).collect(),
            );
            prop_assert_eq!(gate_sets(&v, p), gate_sets(&mapped, p));
        }

        #[test]
        fn supcon_direction_signs(seed in any::<u64>(), b in 3usize..9) {
            let mut rng = Rng::new(seed);
            let labels: Vec<usize> = (0..b).map(|i| i % 2).collect();
            let sims = Matrix::from_vec(b, b, (0..b * b).map(|_| rng.uniform(-3.0, 3.0)).collect()).unwrap();
            let base = supcon_from_similarities(&sims, &labels, 1e-8);
            let h = 1e-5;
            for i in 0..b {
                for j in 0..b {
                    if i == j {
                        continue;
                    }
                    let mut bumped = sims.clone();
                    bumped.as_mut_slice()[i * b + j] += h;
                    let delta = supcon_from_similarities(&bumped, &labels, 1e-8).loss - base.loss;
                    let anchor_active = (0..b).any(|k| k != i && labels[k] == labels[i]);
                    if !anchor_active {
                        prop_assert_eq!(delta, 0.0);
                    } else if labels[i] == labels[j] {
                        prop_assert!(delta < 0.0, "positive ({}, {}) gave {}", i, j, delta);
                    } else {
                        prop_assert!(delta > 0.0, "negative ({}, {}) gave {}", i, j, delta);
                    }
                }
            }
        }

        #[test]
        fn high_temperature_approaches_balanced_uniform((sims, labels, p) in sims_and_labels()) {
            // Balanced labels: dividing by a huge temperature flattens p.
            let flat: Vec<f64> = sims.iter().map(|s| s / 1e9).collect();
            let v = probabilities_from_similarities(&flat, &labels, p);
            for x in &v.0 {
                prop_assert!((x - 1.0 / p as f64).abs() < 1e-6);
            }
        }

        #[test]
        fn gates_partition_datasets((sims, labels, p) in sims_and_labels()) {
            let v = probabilities_from_similarities(&sims, &labels, p);
            let g = gate_sets(&v, p);
            let mut all: Vec<usize> = g.positive.iter().chain(&g.negative).chain(&g.discarded).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..p).collect::<Vec<_>>());
            // Some dataset is always above or at the mean.
            prop_assert!(!g.positive.is_empty() || g.negative.is_empty());
        }

        #[test]
        fn supcon_matches_naive_oracle(seed in any::<u64>(), b in 2usize..10, cosine in any::<bool>()) {
            let mut rng = Rng::new(seed);
            let z = random(b, 3, &mut rng);
            let labels: Vec<usize> = (0..b).map(|_| rng.below(3)).collect();
            let kernel = SimilarityKernel {
                kind: if cosine { KernelKind::Cosine } else { KernelKind::Dot },
                temperature: 0.3,
                epsilon: 1e-8,
            };
            let fast = supcon_loss(&z, &labels, &kernel).unwrap().loss;
            let slow = naive_supcon(&z, &labels, &kernel);
            prop_assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()), "{} vs {}", fast, slow);
        }

        #[test]
        fn pulling_a_positive_closer_lowers_supcon(t1 in 0.05f64..3.0, frac in 0.05f64..0.95) {
            // Unit vectors: anchor at angle 0, positive at angle t, negative at π.
            let t2 = t1 * frac;
            let loss = |t: f64| {
                let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![t.cos(), t.sin()], vec![-1.0, 0.0]]).unwrap();
                supcon_loss(&z, &[0, 0, 1], &dot_kernel(0.5)).unwrap().loss
            };
            prop_assert!(loss(t2) < loss(t1));
        }
    }
}
