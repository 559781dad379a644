//! Deterministic synthetic benchmarks.
//!
//! Clean data are isotropic unit-variance Gaussian clusters. A domain shift is modelled by a
//! parallel corrupted copy of each sample; a speaker is modelled by a diagonal affine map
//! applied to fresh draws from the clean class distributions.

pub mod csv_io;
pub mod rng;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledSet, ParallelDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    /// Distance between class means in units of the within-class standard deviation.
    pub class_separation: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("num_classes must be >= 2".to_owned()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be >= 1".to_owned()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidSpec("samples_per_class must be >= 1".to_owned()));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "class_separation must be positive, got {}",
                self.class_separation
            )));
        }
        Ok(())
    }

    /// Class means, a pure function of `(num_classes, feature_dim, class_separation, seed)`.
    pub fn class_means(&self) -> Result<Matrix> {
        self.validate()?;
        let mut rng = stream(self.seed, "class-means", 0);
        let (k, d, sep) = (self.num_classes, self.feature_dim, self.class_separation);
        let mut means = if k <= d {
            // scaled orthonormal frame: every pair sits exactly `sep` apart
            let basis = random_orthonormal(k, d, &mut rng);
            let scale = sep / std::f64::consts::SQRT_2;
            basis.iter().map(|u| u.iter().map(|v| v * scale).collect()).collect()
        } else {
            rejection_means(k, d, sep, &mut rng)
        };
        let centroid: Vec<f64> = (0..d)
            .map(|j| means.iter().map(|m: &Vec<f64>| m[j]).sum::<f64>() / k as f64)
            .collect();
        for m in &mut means {
            for (v, c) in m.iter_mut().zip(&centroid) {
                *v -= c;
            }
        }
        Matrix::from_rows(&means)
    }
}

fn gaussian_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_orthonormal<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian_vec(d, rng);
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn rejection_means<R: Rng + ?Sized>(k: usize, d: usize, sep: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let mut radius = sep;
    loop {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut tries = 0;
        while means.len() < k && tries < 10_000 {
            tries += 1;
            let cand: Vec<f64> = gaussian_vec(d, rng).into_iter().map(|v| v * radius).collect();
            let far = means.iter().all(|m| distance(m, &cand) >= sep);
            if far {
                means.push(cand);
            }
        }
        if means.len() == k {
            return means;
        }
        radius *= 1.5;
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Draws `per_class` samples of every class around `means`, labels interleaved `0, 1, …, K−1, 0, …`.
fn draw_clusters<R: Rng + ?Sized>(means: &Matrix, per_class: usize, rng: &mut R) -> LabeledSet {
    let (k, d) = means.shape();
    let n = k * per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for &m in means.row(c) {
            let z: f64 = StandardNormal.sample(rng);
            data.push(m + z);
        }
        labels.push(c);
    }
    LabeledSet {
        features: Matrix::from_vec(n, d, data).expect("finite gaussian draws"),
        labels,
    }
}

/// Clean training data for `spec`.
pub fn make_clean(spec: &DatasetSpec) -> Result<LabeledSet> {
    make_clean_split(spec, "clean-train", spec.samples_per_class)
}

/// Another independent draw from the same class distributions as [`make_clean`].
pub fn make_clean_split(spec: &DatasetSpec, split: &str, per_class: usize) -> Result<LabeledSet> {
    let means = spec.class_means()?;
    let mut rng = stream(spec.seed, split, 0);
    Ok(draw_clusters(&means, per_class, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// `x + severity·ε`, `ε ~ N(0, I)` per sample.
    AdditiveGaussian,
    /// `x + severity·u` for one seeded unit direction `u`.
    AffineShift,
    /// Each feature zeroed with probability `min(severity, 1)`.
    FeatureDropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: f64,
    pub seed: u64,
}

/// Pairs every clean sample with a corrupted copy: teacher side clean, student side corrupted.
pub fn corrupt(clean: &LabeledSet, spec: &CorruptionSpec) -> Result<ParallelDataset> {
    if !(spec.severity >= 0.0 && spec.severity.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "severity must be >= 0, got {}",
            spec.severity
        )));
    }
    let mut noisy = clean.features.clone();
    if spec.severity > 0.0 {
        let d = noisy.cols();
        match spec.kind {
            CorruptionKind::AdditiveGaussian => {
                let mut rng = stream(spec.seed, "corrupt-additive", 0);
                for v in noisy.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.severity * z;
                }
            }
            CorruptionKind::AffineShift => {
                let mut rng = stream(spec.seed, "corrupt-shift", 0);
                let u = &random_orthonormal(1, d, &mut rng)[0];
                for r in 0..noisy.rows() {
                    for (v, uj) in noisy.row_mut(r).iter_mut().zip(u) {
                        *v += spec.severity * uj;
                    }
                }
            }
            CorruptionKind::FeatureDropout => {
                let mut rng = stream(spec.seed, "corrupt-dropout", 0);
                let p = spec.severity.min(1.0);
                for v in noisy.as_mut_slice() {
                    if rng.random::<f64>() < p {
                        *v = 0.0;
                    }
                }
            }
        }
    }
    ParallelDataset::new(clean.features.clone(), noisy, clean.labels.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSpec {
    pub speaker_id: u64,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    pub n_adapt: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SpeakerSpec {
    /// Diagonal scale log-uniform in `[scale_lo, scale_hi]`, offset of norm `offset_norm`
    /// in a seeded direction.
    pub fn random(
        speaker_id: u64,
        dim: usize,
        (scale_lo, scale_hi): (f64, f64),
        offset_norm: f64,
        n_adapt: usize,
        n_test: usize,
        seed: u64,
    ) -> Self {
        let mut rng = stream(seed, "speaker-transform", speaker_id);
        let log_scale = Uniform::new_inclusive(scale_lo.ln(), scale_hi.ln()).expect("valid range");
        let scale = (0..dim).map(|_| log_scale.sample(&mut rng).exp()).collect();
        let dir = &random_orthonormal(1, dim, &mut rng)[0];
        let offset = dir.iter().map(|v| v * offset_norm).collect();
        Self {
            speaker_id,
            scale,
            offset,
            n_adapt,
            n_test,
            seed,
        }
    }

    fn apply(&self, set: &mut LabeledSet) {
        for r in 0..set.features.rows() {
            for ((v, s), o) in set.features.row_mut(r).iter_mut().zip(&self.scale).zip(&self.offset) {
                *v = *v * s + o;
            }
        }
    }
}

/// Adaptation and test sets for one speaker: fresh draws from the base class
/// distributions passed through the speaker's affine map.
pub fn make_speaker(base: &DatasetSpec, spk: &SpeakerSpec) -> Result<(LabeledSet, LabeledSet)> {
    let means = base.class_means()?;
    let d = base.feature_dim;
    if spk.scale.len() != d || spk.offset.len() != d {
        return Err(Error::InvalidSpec(format!(
            "speaker transform must have dimension {d}"
        )));
    }
    if spk.n_adapt == 0 || spk.n_test == 0 {
        return Err(Error::InvalidSpec("n_adapt and n_test must be >= 1".to_owned()));
    }
    let draw = |purpose: &str, n: usize| {
        let mut rng = stream(spk.seed, purpose, spk.speaker_id);
        let per_class = n.div_ceil(base.num_classes);
        let full = draw_clusters(&means, per_class, &mut rng);
        let idx: Vec<usize> = (0..n).collect();
        let mut set = LabeledSet {
            features: full.features.select_rows(&idx),
            labels: full.labels[..n].to_vec(),
        };
        spk.apply(&mut set);
        set
    };
    Ok((draw("speaker-adapt", spk.n_adapt), draw("speaker-test", spk.n_test)))
}

/// Clean-trained teacher's world plus its noisy counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainScenario {
    pub spec: DatasetSpec,
    pub corruption: CorruptionSpec,
    pub clean_train: LabeledSet,
    /// Teacher side: `clean_train`; student side: its corrupted copy.
    pub noisy_pairs: ParallelDataset,
    pub clean_test: LabeledSet,
    pub noisy_test: LabeledSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerData {
    pub spec: SpeakerSpec,
    pub adapt: LabeledSet,
    pub test: LabeledSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerScenario {
    pub base: DatasetSpec,
    /// Speaker-independent training data.
    pub train: LabeledSet,
    pub speakers: Vec<SpeakerData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSuite {
    pub seed: u64,
    pub domain: DomainScenario,
    pub speaker: SpeakerScenario,
}

/// Calibration constants of the canonical scenarios.
pub mod constants {
    pub const NUM_CLASSES: usize = 4;
    pub const FEATURE_DIM: usize = 8;
    pub const CLASS_SEPARATION: f64 = 6.0;
    pub const TRAIN_PER_CLASS: usize = 500;
    pub const TEST_PER_CLASS: usize = 200;
    pub const NOISE_SEVERITY: f64 = 3.0;
    pub const NUM_SPEAKERS: usize = 5;
    pub const SPEAKER_SCALE_RANGE: (f64, f64) = (0.8, 1.25);
    pub const SPEAKER_OFFSET_NORM: f64 = 2.0;
    pub const SPEAKER_ADAPT: usize = 200;
    pub const SPEAKER_TEST: usize = 400;
}

pub fn base_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        num_classes: constants::NUM_CLASSES,
        feature_dim: constants::FEATURE_DIM,
        samples_per_class: constants::TRAIN_PER_CLASS,
        class_separation: constants::CLASS_SEPARATION,
        seed: derive_seed(seed, "base-spec", 0),
    }
}

pub fn domain_scenario(seed: u64) -> Result<DomainScenario> {
    let spec = base_spec(seed);
    let clean_train = make_clean(&spec)?;
    let clean_test = make_clean_split(&spec, "clean-test", constants::TEST_PER_CLASS)?;
    let corruption = CorruptionSpec {
        kind: CorruptionKind::AdditiveGaussian,
        severity: constants::NOISE_SEVERITY,
        seed: derive_seed(seed, "noise-train", 0),
    };
    let noisy_pairs = corrupt(&clean_train, &corruption)?;
    let test_noise = CorruptionSpec {
        seed: derive_seed(seed, "noise-test", 0),
        ..corruption.clone()
    };
    let noisy_test = corrupt(&clean_test, &test_noise)?.student_set();
    Ok(DomainScenario {
        spec,
        corruption,
        clean_train,
        noisy_pairs,
        clean_test,
        noisy_test,
    })
}

pub fn speaker_scenario(seed: u64) -> Result<SpeakerScenario> {
    let base = base_spec(seed);
    let train = make_clean(&base)?;
    let spk_seed = derive_seed(seed, "speakers", 0);
    let speakers = (0..constants::NUM_SPEAKERS as u64)
        .map(|id| {
            let spec = SpeakerSpec::random(
                id,
                base.feature_dim,
                constants::SPEAKER_SCALE_RANGE,
                constants::SPEAKER_OFFSET_NORM,
                constants::SPEAKER_ADAPT,
                constants::SPEAKER_TEST,
                spk_seed,
            );
            let (adapt, test) = make_speaker(&base, &spec)?;
            Ok(SpeakerData { spec, adapt, test })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeakerScenario {
        base,
        train,
        speakers,
    })
}

/// The DOMAIN and SPEAKER scenarios for one seed. Both share the same clean base
/// distribution, so one clean-trained teacher serves both.
pub fn benchmark_suite(seed: u64) -> Result<BenchmarkSuite> {
    Ok(BenchmarkSuite {
        seed,
        domain: domain_scenario(seed)?,
        speaker: speaker_scenario(seed)?,
    })
}
