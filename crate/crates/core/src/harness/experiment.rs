//! Experiment orchestration: scenario preparation, teacher training and (method, seed) cells.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::adaptation::{
    augment_with_source_pairs, domain_adapt, evaluate, generate_pseudo_labels, speaker_adapt,
    train_supervised, AdaptationReport, SupervisedConfig,
};
use crate::dataset::{LabeledSet, ParallelDataset};
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, Network};
use crate::synthdata::{csv_io, domain_scenario, speaker_scenario};

use super::config::{ExperimentConfig, Method, Scenario, Supervision};
use super::report::ResultRow;

pub const THREADS_ENV: &str = "DISTILKIT_THREADS";

enum Adaptation {
    /// Domain-style: teacher sees `x_T`, student sees `x_S`.
    Parallel {
        data: ParallelDataset,
        evals: Vec<(String, LabeledSet)>,
    },
    /// One run per speaker, evaluated on that speaker's test set.
    Speakers(Vec<(String, LabeledSet, LabeledSet)>),
}

/// Everything one seed needs: the teacher's training set and the adaptation material.
pub struct Prepared {
    pub seed: u64,
    pub scenario: String,
    pub train: LabeledSet,
    pub num_classes: usize,
    /// Sets the teacher is scored on after training.
    pub teacher_evals: Vec<(String, LabeledSet)>,
    adaptation: Adaptation,
}

fn max_label(sets: &[&[usize]]) -> usize {
    sets.iter().flat_map(|s| s.iter()).copied().max().unwrap_or(0)
}

impl Prepared {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let augment = |p: &ParallelDataset| -> Result<ParallelDataset> {
            if config.augment_source_pairs {
                augment_with_source_pairs(p)
            } else {
                Ok(p.clone())
            }
        };
        let scenario = config.scenario.name().to_owned();
        Ok(match &config.scenario {
            Scenario::Domain => {
                let d = domain_scenario(seed)?;
                let noisy_train = d.noisy_pairs.student_set();
                Self {
                    seed,
                    scenario,
                    num_classes: d.spec.num_classes,
                    teacher_evals: vec![
                        ("clean_train".into(), d.clean_train.clone()),
                        ("clean_test".into(), d.clean_test.clone()),
                        ("noisy_train".into(), noisy_train),
                        ("noisy_test".into(), d.noisy_test.clone()),
                    ],
                    adaptation: Adaptation::Parallel {
                        data: augment(&d.noisy_pairs)?,
                        evals: vec![
                            ("clean_test".into(), d.clean_test),
                            ("noisy_test".into(), d.noisy_test),
                        ],
                    },
                    train: d.clean_train,
                }
            }
            Scenario::Speaker => {
                let s = speaker_scenario(seed)?;
                let speakers: Vec<(String, LabeledSet, LabeledSet)> = s
                    .speakers
                    .into_iter()
                    .map(|sp| (format!("spk{}", sp.spec.speaker_id), sp.adapt, sp.test))
                    .collect();
                let mut teacher_evals = vec![("train".to_owned(), s.train.clone())];
                teacher_evals.extend(speakers.iter().map(|(n, _, t)| (n.clone(), t.clone())));
                Self {
                    seed,
                    scenario,
                    num_classes: s.base.num_classes,
                    teacher_evals,
                    adaptation: Adaptation::Speakers(speakers),
                    train: s.train,
                }
            }
            Scenario::FromFile { train, adapt, test } => {
                let train = csv_io::load_labeled(train)?;
                let adapt = csv_io::load_parallel(adapt)?;
                let test = csv_io::load_labeled(test)?;
                let num_classes =
                    max_label(&[&train.labels, adapt.labels(), &test.labels]) + 1;
                Self {
                    seed,
                    scenario,
                    num_classes: num_classes.max(2),
                    teacher_evals: vec![
                        ("train".into(), train.clone()),
                        ("adapt".into(), adapt.student_set()),
                        ("test".into(), test.clone()),
                    ],
                    adaptation: Adaptation::Parallel {
                        data: augment(&adapt)?,
                        evals: vec![("test".into(), test)],
                    },
                    train,
                }
            }
        })
    }

    /// The split on which methods are ranked.
    pub fn primary_split(&self) -> &'static str {
        match (&self.adaptation, self.scenario.as_str()) {
            (Adaptation::Speakers(_), _) => "mean",
            (_, "domain") => "noisy_test",
            _ => "test",
        }
    }

    fn check_teacher(&self, teacher: &Network) -> Result<()> {
        if teacher.input_dim() != self.train.dim() || teacher.output_dim() != self.num_classes {
            return Err(Error::Checkpoint(format!(
                "teacher maps {} -> {}, scenario needs {} -> {}",
                teacher.input_dim(),
                teacher.output_dim(),
                self.train.dim(),
                self.num_classes
            )));
        }
        Ok(())
    }
}

pub fn teacher_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("teacher_seed{seed}.json"))
}

pub fn load_teacher(config: &ExperimentConfig, seed: u64) -> Result<Network> {
    let path = teacher_path(config.teacher_dir(), seed);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "teacher checkpoint {} not found; run `train-teacher` first",
                path.display()
            ),
        )));
    }
    checkpoint::load(&path)
}

/// Trains the teacher for one seed and scores it on the scenario's sets.
pub fn train_teacher(config: &ExperimentConfig, prepared: &Prepared) -> Result<(Network, Vec<ResultRow>)> {
    let start = Instant::now();
    let cfg = SupervisedConfig::from(&config.teacher);
    let (net, losses) = train_supervised(&prepared.train, prepared.num_classes, &cfg, prepared.seed)?;
    let secs = start.elapsed().as_secs_f64();
    let rows = prepared
        .teacher_evals
        .iter()
        .map(|(split, set)| {
            let acc = evaluate(&net, &set.features, &set.labels)?;
            Ok(ResultRow {
                method: "teacher".into(),
                scenario: prepared.scenario.clone(),
                split: split.clone(),
                seed: prepared.seed,
                accuracy: acc,
                loss: losses.last().copied(),
                teacher_acc: acc,
                soft_fraction: None,
                pseudo_label_acc: None,
                wall_clock_secs: secs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((net, rows))
}

/// What one (method, seed) cell produced. `students` holds one network per adaptation run,
/// keyed by a file-name suffix.
pub struct CellOutput {
    pub rows: Vec<ResultRow>,
    pub students: Vec<(String, Network)>,
}

fn mean_row(rows: &[ResultRow], template: &ResultRow) -> ResultRow {
    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<f64> {
        rows.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    ResultRow {
        split: "mean".into(),
        accuracy: avg(&|r| Some(r.accuracy)).unwrap_or(f64::NAN),
        loss: avg(&|r| r.loss),
        teacher_acc: avg(&|r| Some(r.teacher_acc)).unwrap_or(f64::NAN),
        soft_fraction: avg(&|r| r.soft_fraction),
        pseudo_label_acc: avg(&|r| r.pseudo_label_acc),
        ..template.clone()
    }
}

/// Rows for the teacher used as is.
pub fn unadapted_rows(prepared: &Prepared, teacher: &Network) -> Result<Vec<ResultRow>> {
    prepared.check_teacher(teacher)?;
    let row = |split: &str, acc: f64| ResultRow {
        method: "unadapted".into(),
        scenario: prepared.scenario.clone(),
        split: split.to_owned(),
        seed: prepared.seed,
        accuracy: acc,
        loss: None,
        teacher_acc: acc,
        soft_fraction: None,
        pseudo_label_acc: None,
        wall_clock_secs: 0.0,
    };
    match &prepared.adaptation {
        Adaptation::Parallel { evals, .. } => evals
            .iter()
            .map(|(s, set)| Ok(row(s, evaluate(teacher, &set.features, &set.labels)?)))
            .collect(),
        Adaptation::Speakers(speakers) => {
            let mut rows = speakers
                .iter()
                .map(|(s, _, test)| Ok(row(s, evaluate(teacher, &test.features, &test.labels)?)))
                .collect::<Result<Vec<_>>>()?;
            let m = mean_row(&rows, &rows[0]);
            rows.push(m);
            Ok(rows)
        }
    }
}

fn final_stats(report: &AdaptationReport) -> (Option<f64>, Option<f64>) {
    report
        .final_epoch()
        .map_or((None, None), |e| (Some(e.loss), Some(e.soft_fraction)))
}

/// Adapts the teacher with one method and scores the student.
pub fn run_cell(
    config: &ExperimentConfig,
    prepared: &Prepared,
    teacher: &Network,
    method: Method,
) -> Result<CellOutput> {
    prepared.check_teacher(teacher)?;
    let start = Instant::now();
    let schedule = config.schedule(method, prepared.seed)?;
    let base = ResultRow {
        method: method.to_string(),
        scenario: prepared.scenario.clone(),
        split: String::new(),
        seed: prepared.seed,
        accuracy: 0.0,
        loss: None,
        teacher_acc: 0.0,
        soft_fraction: None,
        pseudo_label_acc: None,
        wall_clock_secs: 0.0,
    };
    let mut rows = Vec::new();
    let mut students = Vec::new();
    match &prepared.adaptation {
        Adaptation::Parallel { data, evals } => {
            let report = domain_adapt(teacher, data, &schedule)?;
            let (loss, soft_fraction) = final_stats(&report);
            for (split, set) in evals {
                rows.push(ResultRow {
                    split: split.clone(),
                    accuracy: evaluate(&report.student, &set.features, &set.labels)?,
                    teacher_acc: evaluate(teacher, &set.features, &set.labels)?,
                    loss,
                    soft_fraction,
                    ..base.clone()
                });
            }
            students.push((String::new(), report.student));
        }
        Adaptation::Speakers(speakers) => {
            for (name, adapt, test) in speakers {
                let (set, pseudo_acc) = match config.supervision {
                    Supervision::Supervised => (adapt.clone(), None),
                    Supervision::Unsupervised => {
                        let labels = generate_pseudo_labels(teacher, &adapt.features)?;
                        let agree = labels.iter().zip(&adapt.labels).filter(|(a, b)| a == b).count();
                        let acc = agree as f64 / labels.len().max(1) as f64;
                        (LabeledSet::new(adapt.features.clone(), labels)?, Some(acc))
                    }
                };
                let report = speaker_adapt(teacher, &set, &schedule)?;
                let (loss, soft_fraction) = final_stats(&report);
                rows.push(ResultRow {
                    split: name.clone(),
                    accuracy: evaluate(&report.student, &test.features, &test.labels)?,
                    teacher_acc: evaluate(teacher, &test.features, &test.labels)?,
                    loss,
                    soft_fraction,
                    pseudo_label_acc: pseudo_acc,
                    ..base.clone()
                });
                students.push((format!("_{name}"), report.student));
            }
            let m = mean_row(&rows, &base);
            rows.push(m);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    for r in &mut rows {
        r.wall_clock_secs = secs;
    }
    Ok(CellOutput { rows, students })
}

/// Parallel cell limit from the environment, default 1.
pub fn thread_limit() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// A finished experiment: rows sorted by (method, seed) and the adapted students.
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub primary_split: String,
    /// `(method, seed, suffix, network)`.
    pub students: Vec<(Method, u64, String, Network)>,
}

/// Runs every (method, seed) cell with teachers loaded from the configured directory.
/// `with_baseline` prepends the unadapted teacher rows.
pub fn run_experiment(
    config: &ExperimentConfig,
    methods: &[Method],
    with_baseline: bool,
) -> Result<ExperimentOutput> {
    config.validate()?;
    let threads = thread_limit()?;
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let mut methods = methods.to_vec();
    methods.sort_by_key(|m| m.rank());
    methods.dedup();

    let prepared = seeds
        .iter()
        .map(|&s| Ok((Prepared::new(config, s)?, load_teacher(config, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let primary_split = prepared[0].0.primary_split().to_owned();

    let mut rows = Vec::new();
    if with_baseline {
        for (p, t) in &prepared {
            rows.extend(unadapted_rows(p, t)?);
        }
    }
    let cells: Vec<(Method, usize)> = methods
        .iter()
        .flat_map(|&m| (0..prepared.len()).map(move |i| (m, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let outputs: Vec<Result<CellOutput>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, i)| run_cell(config, &prepared[i].0, &prepared[i].1, m))
            .collect()
    });
    let mut students = Vec::new();
    for ((m, i), out) in cells.into_iter().zip(outputs) {
        let out = out?;
        rows.extend(out.rows);
        students.extend(
            out.students
                .into_iter()
                .map(|(suffix, net)| (m, prepared[i].0.seed, suffix, net)),
        );
    }
    Ok(ExperimentOutput {
        rows,
        primary_split,
        students,
    })
}
