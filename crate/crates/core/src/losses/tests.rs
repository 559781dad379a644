use super::*;
use proptest::prelude::*;

// 40-digit reference values (mpmath)
const KL_07_06: f64 = 0.021_600_854_143_546_535;
use std::f64::consts::LN_2;
const SOFT_07_06: f64 = 0.632_465_156_198_44;
const HARD_06: f64 = 0.510_825_623_765_990_7;
const INTERP_HALF: f64 = 0.571_645_389_982_215_3;

fn pv(v: &[f64]) -> ProbVector {
    ProbVector::new(v.to_vec()).unwrap()
}

fn logits_for(probs: &[&[f64]]) -> Matrix {
    let rows: Vec<Vec<f64>> = probs
        .iter()
        .map(|p| p.iter().map(|v| v.ln()).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn batch(teacher: &[&[f64]], labels: &[usize], student: &[&[f64]]) -> LabeledBatch {
    LabeledBatch::new(
        teacher.iter().map(|p| pv(p)).collect(),
        labels.to_vec(),
        logits_for(student),
    )
    .unwrap()
}

#[test]
fn kl_examples() {
    let p = pv(&[0.7, 0.3]);
    assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    let kl = kl_divergence(&p, &pv(&[0.6, 0.4])).unwrap();
    assert!((kl - KL_07_06).abs() < 1e-15, "{kl}");
    let kl = kl_divergence(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap();
    assert!((kl - LN_2).abs() < 1e-15);
    assert!(kl_divergence(&p, &pv(&[1.0])).is_err());
}

#[test]
fn kl_floors_zero_student_probability() {
    let kl = kl_divergence(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0])).unwrap();
    assert!(kl.is_finite() && kl > 30.0);
}

#[test]
fn soft_loss_examples() {
    let (l, _) = soft_ts_loss(&batch(&[&[0.5, 0.5]], &[0], &[&[0.5, 0.5]])).unwrap();
    assert!((l - LN_2).abs() < 1e-15);
    let (l, g) = soft_ts_loss(&batch(&[&[0.7, 0.3]], &[0], &[&[0.6, 0.4]])).unwrap();
    assert!((l - SOFT_07_06).abs() < 1e-14, "{l}");
    assert!((g.get(0, 0) - (0.6 - 0.7)).abs() < 1e-15);
    assert!((g.get(0, 1) - (0.4 - 0.3)).abs() < 1e-15);
}

#[test]
fn soft_loss_minimised_at_teacher() {
    let teacher: &[f64] = &[0.7, 0.3];
    let mut best = (f64::MAX, 0.0);
    for k in 1..1000 {
        let q = k as f64 / 1000.0;
        let (l, _) = soft_ts_loss(&batch(&[teacher], &[0], &[&[q, 1.0 - q]])).unwrap();
        if l < best.0 {
            best = (l, q);
        }
    }
    assert!((best.1 - 0.7).abs() < 1e-9, "{best:?}");
}

#[test]
fn hard_loss_examples() {
    let m = Matrix::from_rows(&[[0.0, -1000.0]]).unwrap();
    let b = LabeledBatch::new(vec![pv(&[0.5, 0.5])], vec![0], m).unwrap();
    assert_eq!(hard_ce_loss(&b).unwrap().0, 0.0);
    let (l, _) = hard_ce_loss(&batch(&[&[0.5, 0.5]], &[0], &[&[0.6, 0.4]])).unwrap();
    assert!((l - HARD_06).abs() < 1e-15);
}

#[test]
fn hard_equals_soft_for_one_hot_teacher() {
    let b = batch(
        &[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]],
        &[1, 0],
        &[&[0.2, 0.5, 0.3], &[0.1, 0.1, 0.8]],
    );
    assert_eq!(hard_ce_loss(&b).unwrap(), soft_ts_loss(&b).unwrap());
}

#[test]
fn interpolated_examples() {
    let b = batch(&[&[0.7, 0.3]], &[0], &[&[0.6, 0.4]]);
    let w = |l| InterpolationWeight::new(l).unwrap();
    assert_eq!(interpolated_loss(&b, w(1.0)).unwrap(), soft_ts_loss(&b).unwrap());
    assert_eq!(interpolated_loss(&b, w(0.0)).unwrap(), hard_ce_loss(&b).unwrap());
    let (l, _) = interpolated_loss(&b, w(0.5)).unwrap();
    assert!((l - INTERP_HALF).abs() < 1e-15, "{l}");
}

#[test]
fn interpolation_weight_bounds() {
    assert!(InterpolationWeight::new(-0.01).is_err());
    assert!(InterpolationWeight::new(1.01).is_err());
    assert!(InterpolationWeight::new(f64::NAN).is_err());
    assert!(InterpolationWeight::new(0.0).is_ok());
}

#[test]
fn conditional_target_examples() {
    let t = conditional_targets(&[pv(&[0.7, 0.2, 0.1])], &[0]).unwrap();
    assert_eq!(t[0], ConditionalTarget::Soft(pv(&[0.7, 0.2, 0.1])));
    let t = conditional_targets(&[pv(&[0.2, 0.7, 0.1])], &[0]).unwrap();
    assert_eq!(t[0], ConditionalTarget::Hard(0));
    assert_eq!(t[0].to_vector(3).unwrap(), vec![1.0, 0.0, 0.0]);
    let t = conditional_targets(&[pv(&[0.5, 0.5, 0.0])], &[1]).unwrap();
    assert_eq!(t[0], ConditionalTarget::Hard(1));
    assert!(!t[0].teacher_correct());
    assert!(matches!(
        conditional_targets(&[pv(&[0.5, 0.5])], &[2]),
        Err(Error::LabelOutOfRange { label: 2, .. })
    ));
}

#[test]
fn conditional_loss_branches() {
    let teacher: [&[f64]; 2] = [&[0.7, 0.3], &[0.2, 0.8]];
    let student: [&[f64]; 2] = [&[0.6, 0.4], &[0.5, 0.5]];

    // all soft: labels agree with teacher argmax
    let b = batch(&teacher, &[0, 1], &student);
    let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
    assert!(t.iter().all(ConditionalTarget::teacher_correct));
    assert_eq!(conditional_loss(&t, b.student_logits()).unwrap(), soft_ts_loss(&b).unwrap());

    // all hard
    let b = batch(&teacher, &[1, 0], &student);
    let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
    assert!(t.iter().all(|t| !t.teacher_correct()));
    assert_eq!(conditional_loss(&t, b.student_logits()).unwrap(), hard_ce_loss(&b).unwrap());

    // one of each: brute-force mean of the two per-sample losses
    let b = batch(&teacher, &[0, 0], &student);
    let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
    let (l, _) = conditional_loss(&t, b.student_logits()).unwrap();
    let soft0 = -(0.7 * 0.6f64.ln() + 0.3 * 0.4f64.ln());
    let hard1 = -(0.5f64.ln());
    assert!((l - (soft0 + hard1) / 2.0).abs() < 1e-15);
}

#[test]
fn teacher_accuracy_examples() {
    let ps = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0])];
    assert_eq!(teacher_accuracy(&ps, &[0, 1]).unwrap(), 1.0);
    assert_eq!(teacher_accuracy(&ps, &[1, 0]).unwrap(), 0.0);
    assert!(matches!(teacher_accuracy(&[], &[]), Err(Error::Empty(_))));
}

#[test]
fn batch_validation() {
    let m = logits_for(&[&[0.5, 0.5]]);
    assert!(LabeledBatch::new(vec![pv(&[0.5, 0.5])], vec![0, 1], m.clone()).is_err());
    assert!(LabeledBatch::new(vec![pv(&[0.5, 0.5])], vec![2], m.clone()).is_err());
    assert!(LabeledBatch::new(vec![pv(&[0.2, 0.3, 0.5])], vec![0], m.clone()).is_err());
    let b = LabeledBatch::new(vec![pv(&[0.5, 0.5])], vec![0], m).unwrap();
    assert!(b.with_temperature(0.0).is_err());
}

#[test]
fn temperature_scales_gradient() {
    let b = batch(&[&[0.7, 0.3]], &[0], &[&[0.6, 0.4]]);
    let (_, g1) = soft_ts_loss(&b).unwrap();
    let (_, g2) = soft_ts_loss(&b.clone().with_temperature(1.0).unwrap()).unwrap();
    assert_eq!(g1, g2);
    let (l, g) = soft_ts_loss(&b.with_temperature(2.0).unwrap()).unwrap();
    let z = [0.6f64.ln() / 2.0, 0.4f64.ln() / 2.0];
    let s = z[0].exp() + z[1].exp();
    let q = [z[0].exp() / s, z[1].exp() / s];
    assert!((l + 0.7 * q[0].ln() + 0.3 * q[1].ln()).abs() < 1e-15);
    assert!((g.get(0, 0) - (q[0] - 0.7) / 2.0).abs() < 1e-15);
}

fn arb_batch() -> impl Strategy<Value = LabeledBatch> {
    (2usize..6, 1usize..12).prop_flat_map(|(classes, n)| {
        (
            prop::collection::vec(prop::collection::vec(-6.0f64..6.0, classes), n),
            prop::collection::vec(prop::collection::vec(-8.0f64..8.0, classes), n),
            prop::collection::vec(0..classes, n),
        )
            .prop_map(move |(t_logits, s_logits, labels)| {
                let t = Matrix::from_rows(&t_logits).unwrap();
                LabeledBatch::new(
                    crate::numerics::softmax(&t, 1.0).unwrap(),
                    labels,
                    Matrix::from_rows(&s_logits).unwrap(),
                )
                .unwrap()
            })
    })
}

fn subset(b: &LabeledBatch, idx: &[usize]) -> LabeledBatch {
    LabeledBatch::new(
        idx.iter().map(|&i| b.teacher_posteriors()[i].clone()).collect(),
        idx.iter().map(|&i| b.labels()[i]).collect(),
        b.student_logits().select_rows(idx),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn decomposition_identity(b in arb_batch()) {
        let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
        let (l, _) = conditional_loss(&t, b.student_logits()).unwrap();
        let right: Vec<usize> = (0..b.len()).filter(|&i| t[i].teacher_correct()).collect();
        let wrong: Vec<usize> = (0..b.len()).filter(|&i| !t[i].teacher_correct()).collect();
        let mut expected = 0.0;
        if !right.is_empty() {
            expected += right.len() as f64 * soft_ts_loss(&subset(&b, &right)).unwrap().0;
        }
        if !wrong.is_empty() {
            expected += wrong.len() as f64 * hard_ce_loss(&subset(&b, &wrong)).unwrap().0;
        }
        prop_assert!((l - expected / b.len() as f64).abs() <= 1e-10);
    }

    #[test]
    fn linearity_identity(b in arb_batch()) {
        let (hard, _) = hard_ce_loss(&b).unwrap();
        let (soft, _) = soft_ts_loss(&b).unwrap();
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let (l, _) = interpolated_loss(&b, InterpolationWeight::new(lambda).unwrap()).unwrap();
            prop_assert!((l - ((1.0 - lambda) * hard + lambda * soft)).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_ce_relation(b in arb_batch()) {
        let q = crate::numerics::softmax(b.student_logits(), 1.0).unwrap();
        for i in 0..b.len() {
            let one = subset(&b, &[i]);
            let (ce, _) = soft_ts_loss(&one).unwrap();
            let p = &b.teacher_posteriors()[i];
            let kl = kl_divergence(p, &q[i]).unwrap();
            prop_assert!((ce - p.entropy() - kl).abs() <= 1e-10);
            prop_assert!(kl >= -1e-12);
        }
        let (kl_mean, kg) = kl_ts_loss(&b).unwrap();
        let (ce_mean, cg) = soft_ts_loss(&b).unwrap();
        let h: f64 = b.teacher_posteriors().iter().map(ProbVector::entropy).sum::<f64>() / b.len() as f64;
        prop_assert!((ce_mean - h - kl_mean).abs() <= 1e-10);
        prop_assert_eq!(kg, cg);
    }

    #[test]
    fn gradient_rows_sum_to_zero(b in arb_batch(), lambda in 0.0f64..=1.0) {
        let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
        let grads = [
            soft_ts_loss(&b).unwrap().1,
            hard_ce_loss(&b).unwrap().1,
            interpolated_loss(&b, InterpolationWeight::new(lambda).unwrap()).unwrap().1,
            conditional_loss(&t, b.student_logits()).unwrap().1,
            kl_ts_loss(&b).unwrap().1,
        ];
        for g in &grads {
            for row in g.iter_rows() {
                prop_assert!(row.iter().sum::<f64>().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn branch_consistency(b in arb_batch()) {
        let t = conditional_targets(b.teacher_posteriors(), b.labels()).unwrap();
        let soft = t.iter().filter(|t| t.teacher_correct()).count() as f64 / b.len() as f64;
        prop_assert_eq!(soft, teacher_accuracy(b.teacher_posteriors(), b.labels()).unwrap());
        for (target, (p, &c)) in t.iter().zip(b.teacher_posteriors().iter().zip(b.labels())) {
            prop_assert_eq!(target.teacher_correct(), p.argmax() == c);
        }
    }
}
