//! Teacher-student adaptation pipelines.
//!
//! Domain adaptation feeds clean inputs to a frozen teacher and the parallel corrupted inputs to
//! a student initialised from it. In conditional mode a soft warm-up phase runs first and the
//! conditional phase follows. Speaker adaptation feeds the same adaptation data to both
//! networks and has no warm-up.
//!
//! Teacher posteriors are computed once per run; the teacher is frozen so they are the same on
//! every visit. Conditional targets are rebuilt per batch from those posteriors.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledSet, ParallelDataset};
use crate::error::{Error, Result};
use crate::losses::{
    conditional_loss_tempered, conditional_targets, cross_entropy_to_targets, hard_ce_loss, interpolated_loss,
    soft_ts_loss, ConditionalTarget, InterpolationWeight, LabeledBatch,
};
use crate::numerics::{argmax, softmax, Matrix, Network, ProbVector};
use crate::synthdata::rng::stream;

pub use crate::dataset::ParallelSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptationMode {
    SoftOnly,
    Interpolated(InterpolationWeight),
    Conditional,
    HardOnly,
    /// Hard labels on the samples the teacher gets wrong; the rest are dropped.
    WrongOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSchedule {
    /// Soft teacher-student epochs before the conditional phase (domain adaptation only).
    pub warmup_epochs: usize,
    pub conditional_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub mode: AdaptationMode,
    pub temperature: f64,
    pub seed: u64,
}

impl AdaptationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".to_owned()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Main,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub size: usize,
    /// Samples whose target was exactly the teacher posterior.
    pub soft_targets: usize,
    /// Samples whose teacher argmax equals the label.
    pub teacher_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Sample-weighted mean of the minibatch losses.
    pub loss: f64,
    pub teacher_accuracy: f64,
    /// Mean weight of the teacher posterior in the targets: 1 for soft, 0 for hard, λ for
    /// interpolated, the soft-branch share for conditional.
    pub soft_fraction: f64,
    pub batches: Vec<BatchStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationReport {
    pub epochs: Vec<EpochRecord>,
    pub student: Network,
    pub evaluations: Vec<(String, f64)>,
}

impl AdaptationReport {
    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Evaluates the adapted student and records the result under `name`.
    pub fn evaluate_on(&mut self, name: &str, set: &LabeledSet) -> Result<f64> {
        let acc = evaluate(&self.student, &set.features, &set.labels)?;
        self.evaluations.push((name.to_owned(), acc));
        Ok(acc)
    }
}

/// Deep copy; the returned student shares no storage with the teacher.
pub fn init_student_from_teacher(teacher: &Network) -> Network {
    teacher.clone()
}

/// Appends a `(x_T, x_T, label)` pair for every sample, so the student also sees source-domain
/// inputs. Sample `i` and sample `N + i` share `x_T` and the label.
pub fn augment_with_source_pairs(data: &ParallelDataset) -> Result<ParallelDataset> {
    let source = ParallelDataset::new(
        data.teacher_inputs().clone(),
        data.teacher_inputs().clone(),
        data.labels().to_vec(),
    )?;
    data.concat(&source)
}

/// Teacher argmax at `T = 1`, lowest index on ties.
pub fn generate_pseudo_labels(teacher: &Network, features: &Matrix) -> Result<Vec<usize>> {
    let logits = teacher.logits(features)?;
    Ok(logits.iter_rows().map(argmax).collect())
}

/// Fraction of argmax-correct predictions, lowest index on ties.
pub fn evaluate(net: &Network, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "evaluation labels",
            expected: features.rows(),
            found: labels.len(),
        });
    }
    let logits = net.logits(features)?;
    let correct = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &c)| argmax(row) == c)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Warm-up with soft targets, then the conditional phase. Other modes run for
/// `warmup_epochs + conditional_epochs` epochs of their own loss.
pub fn domain_adapt(
    teacher: &Network,
    data: &ParallelDataset,
    schedule: &AdaptationSchedule,
) -> Result<AdaptationReport> {
    let total = schedule.warmup_epochs + schedule.conditional_epochs;
    let plan = match schedule.mode {
        AdaptationMode::Conditional => vec![
            (Phase::Warmup, AdaptationMode::SoftOnly, schedule.warmup_epochs),
            (Phase::Main, AdaptationMode::Conditional, schedule.conditional_epochs),
        ],
        mode => vec![(Phase::Main, mode, total)],
    };
    run(teacher, data, &plan, schedule)
}

/// Both networks see the adaptation data; `conditional_epochs` epochs of the selected loss.
/// `warmup_epochs` is not used here.
pub fn speaker_adapt(
    teacher: &Network,
    data: &LabeledSet,
    schedule: &AdaptationSchedule,
) -> Result<AdaptationReport> {
    let parallel = ParallelDataset::self_paired(data);
    run(
        teacher,
        &parallel,
        &[(Phase::Main, schedule.mode, schedule.conditional_epochs)],
        schedule,
    )
}

/// Frozen teacher outputs for one dataset.
struct TeacherView {
    /// `T = 1`; decides teacher correctness.
    decision: Vec<ProbVector>,
    /// At the schedule temperature; used as soft targets.
    targets: Vec<ProbVector>,
}

impl TeacherView {
    fn new(teacher: &Network, inputs: &Matrix, temperature: f64) -> Result<Self> {
        let logits = teacher.logits(inputs)?;
        let decision = softmax(&logits, 1.0)?;
        let targets = if temperature == 1.0 {
            decision.clone()
        } else {
            softmax(&logits, temperature)?
        };
        Ok(Self { decision, targets })
    }

    fn correct(&self, i: usize, label: usize) -> bool {
        self.decision[i].argmax() == label
    }
}

fn check_compatible(teacher: &Network, data: &ParallelDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("adaptation dataset"));
    }
    if data.teacher_inputs().cols() != teacher.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "teacher input dim",
            expected: teacher.input_dim(),
            found: data.teacher_inputs().cols(),
        });
    }
    if data.student_inputs().cols() != teacher.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "student input dim",
            expected: teacher.input_dim(),
            found: data.student_inputs().cols(),
        });
    }
    if let Some(&label) = data.labels().iter().find(|&&c| c >= teacher.output_dim()) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: teacher.output_dim(),
        });
    }
    Ok(())
}

/// Shuffled minibatches of `indices` for one epoch.
pub(crate) fn epoch_batches(
    seed: u64,
    purpose: &str,
    epoch: usize,
    indices: &[usize],
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(&mut stream(seed, purpose, epoch as u64));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn run(
    teacher: &Network,
    data: &ParallelDataset,
    plan: &[(Phase, AdaptationMode, usize)],
    schedule: &AdaptationSchedule,
) -> Result<AdaptationReport> {
    schedule.validate()?;
    check_compatible(teacher, data)?;
    let view = TeacherView::new(teacher, data.teacher_inputs(), schedule.temperature)?;
    let mut student = init_student_from_teacher(teacher);
    let all: Vec<usize> = (0..data.len()).collect();
    // the teacher is frozen, so its mistakes are fixed for the whole run
    let mistakes: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| !view.correct(i, data.labels()[i]))
        .collect();

    let mut epochs = Vec::new();
    let mut epoch = 0;
    for &(phase, mode, count) in plan {
        let active = if mode == AdaptationMode::WrongOnly {
            &mistakes
        } else {
            &all
        };
        for _ in 0..count {
            let record = run_epoch(&mut student, data, &view, active, phase, mode, epoch, schedule)?;
            epochs.push(record);
            epoch += 1;
        }
    }
    Ok(AdaptationReport {
        epochs,
        student,
        evaluations: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    student: &mut Network,
    data: &ParallelDataset,
    view: &TeacherView,
    active: &[usize],
    phase: Phase,
    mode: AdaptationMode,
    epoch: usize,
    schedule: &AdaptationSchedule,
) -> Result<EpochRecord> {
    let mut loss_sum = 0.0;
    let mut soft_mass = 0.0;
    let mut batches = Vec::new();
    for idx in epoch_batches(schedule.seed, "adapt-shuffle", epoch, active, schedule.batch_size) {
        let x = data.student_inputs().select_rows(&idx);
        let (logits, trace) = student.forward(&x)?;
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let correct = idx
            .iter()
            .zip(&labels)
            .filter(|(&i, &c)| view.correct(i, c))
            .count();
        let n = idx.len();

        let (loss, grad, soft_targets, mass) = match mode {
            AdaptationMode::SoftOnly => {
                let (l, g) = soft_ts_loss(&tempered_batch(view, &idx, labels, logits, schedule)?)?;
                (l, g, n, n as f64)
            }
            AdaptationMode::Interpolated(w) => {
                let b = tempered_batch(view, &idx, labels, logits, schedule)?;
                let (l, g) = interpolated_loss(&b, w)?;
                let soft = if w.value() == 1.0 { n } else { 0 };
                (l, g, soft, w.value() * n as f64)
            }
            AdaptationMode::Conditional => {
                let decision: Vec<ProbVector> = idx.iter().map(|&i| view.decision[i].clone()).collect();
                let mut targets = conditional_targets(&decision, &labels)?;
                if schedule.temperature != 1.0 {
                    for (t, &i) in targets.iter_mut().zip(&idx) {
                        if let ConditionalTarget::Soft(p) = t {
                            *p = view.targets[i].clone();
                        }
                    }
                }
                let soft = targets.iter().filter(|t| t.teacher_correct()).count();
                let (l, g) = conditional_loss_tempered(&targets, &logits, schedule.temperature)?;
                (l, g, soft, soft as f64)
            }
            AdaptationMode::HardOnly | AdaptationMode::WrongOnly => {
                let posteriors = idx.iter().map(|&i| view.decision[i].clone()).collect();
                let (l, g) = hard_ce_loss(&LabeledBatch::new(posteriors, labels, logits)?)?;
                (l, g, 0, 0.0)
            }
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let grads = student.backward(&trace, &grad)?;
        student
            .sgd_step(&grads, schedule.lr)
            .map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { epoch },
                other => other,
            })?;
        loss_sum += loss * n as f64;
        soft_mass += mass;
        batches.push(BatchStats {
            size: n,
            soft_targets,
            teacher_correct: correct,
        });
    }
    let total: usize = batches.iter().map(|b| b.size).sum();
    let correct: usize = batches.iter().map(|b| b.teacher_correct).sum();
    let denom = total.max(1) as f64;
    Ok(EpochRecord {
        epoch,
        phase,
        loss: loss_sum / denom,
        teacher_accuracy: correct as f64 / denom,
        soft_fraction: soft_mass / denom,
        batches,
    })
}

fn tempered_batch(
    view: &TeacherView,
    idx: &[usize],
    labels: Vec<usize>,
    logits: Matrix,
    schedule: &AdaptationSchedule,
) -> Result<LabeledBatch> {
    let posteriors = idx.iter().map(|&i| view.targets[i].clone()).collect();
    LabeledBatch::new(posteriors, labels, logits)?.with_temperature(schedule.temperature)
}

/// Hyper-parameters for supervised training of a fresh network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

/// Initialises a network from `seed` and trains it on hard labels with minibatch SGD.
/// Returns the network and the per-epoch mean loss.
pub fn train_supervised(
    data: &LabeledSet,
    num_classes: usize,
    config: &SupervisedConfig,
    seed: u64,
) -> Result<(Network, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".to_owned()));
    }
    let mut dims = vec![data.dim()];
    dims.extend_from_slice(&config.hidden);
    dims.push(num_classes);
    let mut net = Network::xavier(&dims, &mut stream(seed, "teacher-init", 0))?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for idx in epoch_batches(seed, "teacher-shuffle", epoch, &all, config.batch_size) {
            let x = data.features.select_rows(&idx);
            let (logits, trace) = net.forward(&x)?;
            let mut one_hot = Matrix::zeros(idx.len(), num_classes);
            for (r, &i) in idx.iter().enumerate() {
                let c = data.labels[i];
                if c >= num_classes {
                    return Err(Error::LabelOutOfRange { label: c, num_classes });
                }
                one_hot.set(r, c, 1.0);
            }
            let (loss, grad) = cross_entropy_to_targets(&one_hot, &logits, 1.0)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            net.sgd_step(&net.backward(&trace, &grad)?, config.lr)
                .map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => Error::Divergence { epoch },
                    other => other,
                })?;
            sum += loss * idx.len() as f64;
        }
        losses.push(sum / data.len() as f64);
    }
    Ok((net, losses))
}

#[cfg(test)]
mod tests;
