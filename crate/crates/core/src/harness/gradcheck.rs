//! Finite-difference verification of every loss gradient on random small networks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::losses::{
    conditional_loss_tempered, conditional_targets, hard_ce_loss, interpolated_loss, kl_ts_loss,
    soft_ts_loss, InterpolationWeight, LabeledBatch,
};
use crate::losses::PROB_FLOOR;
use crate::numerics::extended::{log_softmax_dd, logits_dd, Dd};
use crate::numerics::{grad_check, softmax, Gradients, Matrix, Network, ProbVector};
use crate::synthdata::rng::stream;

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Kl,
    Soft,
    Hard,
    Interpolated,
    Conditional,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Kl,
        LossKind::Soft,
        LossKind::Hard,
        LossKind::Interpolated,
        LossKind::Conditional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Kl => "kl",
            LossKind::Soft => "soft_ts",
            LossKind::Hard => "hard",
            LossKind::Interpolated => "interpolated",
            LossKind::Conditional => "conditional",
        }
    }
}

/// A random network with a fixed random batch to differentiate through.
pub struct Probe {
    pub net: Network,
    pub inputs: Matrix,
    pub posteriors: Vec<ProbVector>,
    pub labels: Vec<usize>,
    pub lambda: f64,
    pub temperature: f64,
}

impl Probe {
    /// Up to 3 layers of up to 32 units, 2 to 6 classes, 1 to 8 samples.
    pub fn random(seed: u64, index: u64) -> Result<Self> {
        let mut rng = stream(seed, "gradcheck", index);
        let classes = rng.random_range(2..=6);
        let mut dims = vec![rng.random_range(1..=8)];
        for _ in 0..rng.random_range(0..=2) {
            dims.push(rng.random_range(1..=32));
        }
        dims.push(classes);
        let net = Network::xavier(&dims, &mut rng)?;
        let n = rng.random_range(1..=8);
        let mut normal = |k: usize, scale: f64| -> Vec<f64> {
            (0..k)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let inputs = Matrix::from_vec(n, dims[0], normal(n * dims[0], 1.0))?;
        let teacher_logits = Matrix::from_vec(n, classes, normal(n * classes, 2.0))?;
        let temperature = rng.random_range(0.5..3.0);
        let posteriors = softmax(&teacher_logits, temperature)?;
        // Half the labels agree with the teacher so both conditional branches are exercised.
        let labels = posteriors
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i % 2 == 0 {
                    p.argmax()
                } else {
                    rng.random_range(0..classes)
                }
            })
            .collect();
        Ok(Self {
            net,
            inputs,
            posteriors,
            labels,
            lambda: rng.random_range(0.0..=1.0),
            temperature,
        })
    }

    /// Loss and parameter gradient of `kind` at `net`.
    pub fn evaluate(&self, kind: LossKind, net: &Network) -> Result<(f64, Gradients)> {
        let (logits, trace) = net.forward(&self.inputs)?;
        let batch = LabeledBatch::new(self.posteriors.clone(), self.labels.clone(), logits.clone())?;
        let tempered = batch.clone().with_temperature(self.temperature)?;
        let (loss, d_logits) = match kind {
            LossKind::Kl => kl_ts_loss(&tempered)?,
            LossKind::Soft => soft_ts_loss(&tempered)?,
            LossKind::Hard => hard_ce_loss(&batch)?,
            LossKind::Interpolated => {
                interpolated_loss(&tempered, InterpolationWeight::new(self.lambda)?)?
            }
            LossKind::Conditional => {
                let targets = conditional_targets(&self.posteriors, &self.labels)?;
                conditional_loss_tempered(&targets, &logits, self.temperature)?
            }
        };
        Ok((loss, net.backward(&trace, &d_logits)?))
    }

    /// Target rows exactly as the loss functions build them.
    fn targets(&self, kind: LossKind) -> Matrix {
        let k = self.posteriors[0].len();
        let mut y = Matrix::zeros(self.labels.len(), k);
        for (i, (p, &c)) in self.posteriors.iter().zip(&self.labels).enumerate() {
            let row = y.row_mut(i);
            match kind {
                LossKind::Kl | LossKind::Soft => row.copy_from_slice(p.as_slice()),
                LossKind::Hard => row[c] = 1.0,
                LossKind::Interpolated => {
                    row[c] = 1.0;
                    for (h, s) in row.iter_mut().zip(p.as_slice()) {
                        *h = (1.0 - self.lambda) * *h + self.lambda * s;
                    }
                }
                LossKind::Conditional if p.argmax() == c => row.copy_from_slice(p.as_slice()),
                LossKind::Conditional => row[c] = 1.0,
            }
        }
        y
    }

    /// The loss value of `kind` at `net`, evaluated in double-double.
    pub fn loss_dd(&self, kind: LossKind, net: &Network) -> Dd {
        let temperature = if kind == LossKind::Hard { 1.0 } else { self.temperature };
        let log_floor = Dd::from(PROB_FLOOR.ln());
        let y = self.targets(kind);
        let logits = logits_dd(net, &self.inputs);
        let total: Dd = logits
            .iter()
            .zip(y.iter_rows())
            .map(|(z, yr)| {
                let lq = log_softmax_dd(z, temperature);
                yr.iter()
                    .zip(lq)
                    .filter(|(&yc, _)| yc > 0.0)
                    .map(|(&yc, l)| {
                        let l = if l.hi < log_floor.hi { log_floor } else { l };
                        match kind {
                            LossKind::Kl => (Dd::from(yc).ln() - l) * yc,
                            _ => -(l * yc),
                        }
                    })
                    .sum::<Dd>()
            })
            .sum();
        total / self.labels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckResult {
    pub loss: &'static str,
    pub worst_relative_error: f64,
    pub nets: usize,
}

impl GradcheckResult {
    pub fn passed(&self) -> bool {
        self.worst_relative_error <= GRADCHECK_TOLERANCE
    }
}

/// Checks all five losses on `nets` random probes. `corrupt` scales the conditional-loss
/// gradient by `1 + 1e-3`, as a negative control.
pub fn run_gradcheck(seed: u64, nets: usize, corrupt: bool) -> Result<Vec<GradcheckResult>> {
    let probes = (0..nets as u64)
        .map(|i| Probe::random(seed, i))
        .collect::<Result<Vec<_>>>()?;
    LossKind::ALL
        .iter()
        .map(|&kind| {
            let mut worst = 0.0_f64;
            for probe in &probes {
                // Shapes are fixed per probe, so evaluation cannot fail after the first call.
                probe.evaluate(kind, &probe.net)?;
                let err = grad_check(
                    &probe.net,
                    |n| {
                        let (_, mut g) = probe.evaluate(kind, n).expect("probe shapes are fixed");
                        if corrupt && kind == LossKind::Conditional {
                            g.scale(1.0 + 1e-3);
                        }
                        (probe.loss_dd(kind, n), g)
                    },
                    GRADCHECK_STEP,
                );
                worst = worst.max(err);
            }
            Ok(GradcheckResult {
                loss: kind.name(),
                worst_relative_error: worst,
                nets,
            })
        })
        .collect()
}
