//! Teacher-student losses.
//!
//! Every loss is a batch mean of a cross-entropy between some per-sample target vector `y_i`
//! and the student's softmax output, so all of them share one kernel and one closed-form
//! gradient with respect to the student logits: `(q_i − y_i) / (N·T)`.
//!
//! | loss | target `y_i` |
//! |------|--------------|
//! | [`soft_ts_loss`] | teacher posteriors |
//! | [`hard_ce_loss`] | one-hot ground truth |
//! | [`interpolated_loss`] | `(1−λ)·one_hot + λ·teacher` |
//! | [`conditional_loss`] | teacher posteriors if the teacher's argmax is right, else one-hot |
//!
//! [`kl_ts_loss`] is the mean KL divergence from teacher to student; it differs from
//! [`soft_ts_loss`] only by the teacher entropy, so the gradients coincide.
//!
//! Student log-probabilities are floored at `ln(1e-30)`.

use crate::error::{Error, Result};
use crate::numerics::{argmax, log_softmax_rows, softmax_rows, Matrix, ProbVector};

/// Smallest probability fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-30;

/// Weight `λ ∈ [0, 1]` on the teacher posteriors in the interpolated target.
///
/// The KLD-regularised speaker adaptation weight is the same quantity: the soft-label share
/// of the target.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct InterpolationWeight(f64);

impl InterpolationWeight {
    pub fn new(lambda: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self(lambda))
        } else {
            Err(Error::InvalidParameter(format!(
                "interpolation weight must lie in [0, 1], got {lambda}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-sample conditional target.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalTarget {
    /// Teacher was right: learn its posteriors.
    Soft(ProbVector),
    /// Teacher was wrong: back off to the ground-truth class.
    Hard(usize),
}

impl ConditionalTarget {
    pub fn teacher_correct(&self) -> bool {
        matches!(self, ConditionalTarget::Soft(_))
    }

    pub fn to_vector(&self, num_classes: usize) -> Result<Vec<f64>> {
        match self {
            ConditionalTarget::Soft(p) => {
                if p.len() != num_classes {
                    return Err(Error::DimensionMismatch {
                        context: "soft target classes",
                        expected: num_classes,
                        found: p.len(),
                    });
                }
                Ok(p.as_slice().to_vec())
            }
            ConditionalTarget::Hard(c) => Ok(ProbVector::one_hot(*c, num_classes)?.into_vec()),
        }
    }
}

/// Teacher posteriors, ground-truth labels and student logits for one batch.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    teacher_posteriors: Vec<ProbVector>,
    labels: Vec<usize>,
    student_logits: Matrix,
    temperature: f64,
}

impl LabeledBatch {
    pub fn new(
        teacher_posteriors: Vec<ProbVector>,
        labels: Vec<usize>,
        student_logits: Matrix,
    ) -> Result<Self> {
        let n = student_logits.rows();
        let classes = student_logits.cols();
        for (context, found) in [
            ("teacher posterior count", teacher_posteriors.len()),
            ("label count", labels.len()),
        ] {
            if found != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    found,
                });
            }
        }
        if let Some(p) = teacher_posteriors.iter().find(|p| p.len() != classes) {
            return Err(Error::DimensionMismatch {
                context: "teacher posterior classes",
                expected: classes,
                found: p.len(),
            });
        }
        check_labels(&labels, classes)?;
        Ok(Self {
            teacher_posteriors,
            labels,
            student_logits,
            temperature: 1.0,
        })
    }

    /// Reads student log-probabilities at `temperature`. The teacher posteriors are used as
    /// given, so the caller supplies them at the same temperature.
    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.student_logits.cols()
    }

    pub fn teacher_posteriors(&self) -> &[ProbVector] {
        &self.teacher_posteriors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn student_logits(&self) -> &Matrix {
        &self.student_logits
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn soft_targets(&self) -> Matrix {
        let mut y = Matrix::zeros(self.len(), self.num_classes());
        for (i, p) in self.teacher_posteriors.iter().enumerate() {
            y.row_mut(i).copy_from_slice(p.as_slice());
        }
        y
    }

    fn hard_targets(&self) -> Matrix {
        let mut y = Matrix::zeros(self.len(), self.num_classes());
        for (i, &c) in self.labels.iter().enumerate() {
            y.set(i, c, 1.0);
        }
        y
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&c| c >= num_classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
        None => Ok(()),
    }
}

/// Mean cross-entropy between target rows and `softmax(logits / T)`, with its gradient
/// w.r.t. the logits.
pub fn cross_entropy_to_targets(
    targets: &Matrix,
    logits: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    if targets.shape() != logits.shape() {
        return Err(Error::DimensionMismatch {
            context: "targets vs logits",
            expected: logits.rows() * logits.cols(),
            found: targets.rows() * targets.cols(),
        });
    }
    let per_sample = per_sample_cross_entropy(targets, logits, temperature)?;
    let n = logits.rows();
    if n == 0 {
        return Ok((0.0, Matrix::zeros(0, logits.cols())));
    }
    let loss = per_sample.iter().sum::<f64>() / n as f64;
    let mut grad = softmax_rows(logits, temperature)?;
    let scale = 1.0 / (n as f64 * temperature);
    for (g, y) in grad.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        *g = (*g - y) * scale;
    }
    Ok((loss, grad))
}

/// Per-row `−Σ_c y_c log q_c`.
pub fn per_sample_cross_entropy(
    targets: &Matrix,
    logits: &Matrix,
    temperature: f64,
) -> Result<Vec<f64>> {
    let log_floor = PROB_FLOOR.ln();
    let log_q = log_softmax_rows(logits, temperature)?;
    Ok(targets
        .iter_rows()
        .zip(log_q.iter_rows())
        .map(|(y, lq)| {
            -y.iter()
                .zip(lq)
                .map(|(&yc, &l)| yc * l.max(log_floor))
                .sum::<f64>()
        })
        .collect())
}

/// `KL(p ‖ q) = Σ_c p_c log(p_c / q_c)` with `0·log 0 = 0` and `q` floored at [`PROB_FLOOR`].
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "kl_divergence lengths",
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(p.as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pc, _)| pc > 0.0)
        .map(|(&pc, &qc)| pc * (pc.ln() - qc.max(PROB_FLOOR).ln()))
        .sum())
}

/// Batch-mean KL divergence from teacher to student.
pub fn kl_ts_loss(batch: &LabeledBatch) -> Result<(f64, Matrix)> {
    let q = softmax_rows(batch.student_logits(), batch.temperature())?;
    let mut total = 0.0;
    for (i, p) in batch.teacher_posteriors().iter().enumerate() {
        total += p
            .as_slice()
            .iter()
            .zip(q.row(i))
            .filter(|(&pc, _)| pc > 0.0)
            .map(|(&pc, &qc)| pc * (pc.ln() - qc.max(PROB_FLOOR).ln()))
            .sum::<f64>();
    }
    let n = batch.len().max(1) as f64;
    let (_, grad) = soft_ts_loss(batch)?;
    Ok((total / n, grad))
}

/// Cross-entropy against the teacher posteriors.
pub fn soft_ts_loss(batch: &LabeledBatch) -> Result<(f64, Matrix)> {
    cross_entropy_to_targets(
        &batch.soft_targets(),
        batch.student_logits(),
        batch.temperature(),
    )
}

/// Cross-entropy against one-hot ground truth.
pub fn hard_ce_loss(batch: &LabeledBatch) -> Result<(f64, Matrix)> {
    cross_entropy_to_targets(
        &batch.hard_targets(),
        batch.student_logits(),
        batch.temperature(),
    )
}

/// Cross-entropy against `(1−λ)·one_hot + λ·teacher`.
pub fn interpolated_loss(batch: &LabeledBatch, weight: InterpolationWeight) -> Result<(f64, Matrix)> {
    let lambda = weight.value();
    let mut y = batch.hard_targets();
    let soft = batch.soft_targets();
    for (h, s) in y.as_mut_slice().iter_mut().zip(soft.as_slice()) {
        *h = (1.0 - lambda) * *h + lambda * s;
    }
    cross_entropy_to_targets(&y, batch.student_logits(), batch.temperature())
}

/// Soft target where the teacher's argmax (lowest index on ties) equals the label, hard
/// target otherwise.
pub fn conditional_targets(
    teacher_posteriors: &[ProbVector],
    labels: &[usize],
) -> Result<Vec<ConditionalTarget>> {
    if teacher_posteriors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "conditional_targets batch",
            expected: teacher_posteriors.len(),
            found: labels.len(),
        });
    }
    teacher_posteriors
        .iter()
        .zip(labels)
        .map(|(p, &c)| {
            check_labels(&[c], p.len())?;
            Ok(if p.argmax() == c {
                ConditionalTarget::Soft(p.clone())
            } else {
                ConditionalTarget::Hard(c)
            })
        })
        .collect()
}

pub fn conditional_loss(
    targets: &[ConditionalTarget],
    student_logits: &Matrix,
) -> Result<(f64, Matrix)> {
    conditional_loss_tempered(targets, student_logits, 1.0)
}

pub fn conditional_loss_tempered(
    targets: &[ConditionalTarget],
    student_logits: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    if targets.len() != student_logits.rows() {
        return Err(Error::DimensionMismatch {
            context: "conditional_loss batch",
            expected: student_logits.rows(),
            found: targets.len(),
        });
    }
    let classes = student_logits.cols();
    let mut y = Matrix::zeros(targets.len(), classes);
    for (i, t) in targets.iter().enumerate() {
        y.row_mut(i).copy_from_slice(&t.to_vector(classes)?);
    }
    cross_entropy_to_targets(&y, student_logits, temperature)
}

/// Fraction of samples whose teacher argmax equals the label.
pub fn teacher_accuracy(teacher_posteriors: &[ProbVector], labels: &[usize]) -> Result<f64> {
    if teacher_posteriors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "teacher_accuracy batch",
            expected: teacher_posteriors.len(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let correct = teacher_posteriors
        .iter()
        .zip(labels)
        .filter(|(p, &c)| argmax(p.as_slice()) == c)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests;
