use super::*;
use crate::numerics::{Activation, Layer};
use crate::synthdata::rng::stream;
use rand_distr::{Distribution, StandardNormal};

fn teacher() -> Network {
    Network::xavier(&[3, 8, 3], &mut stream(5, "test-teacher", 0)).unwrap()
}

fn features(n: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, "test-features", 0);
    let data = (0..n * 3).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(n, 3, data).unwrap()
}

fn schedule(mode: AdaptationMode) -> AdaptationSchedule {
    AdaptationSchedule {
        warmup_epochs: 2,
        conditional_epochs: 3,
        lr: 0.2,
        batch_size: 7,
        mode,
        temperature: 1.0,
        seed: 11,
    }
}

/// Clean/noisy pairs with labels that the teacher gets right on roughly half the samples.
fn mixed_data(t: &Network) -> ParallelDataset {
    let clean = features(40, 1);
    let mut noisy = clean.clone();
    noisy.map_inplace(|v| v * 0.9 + 0.1);
    let pseudo = generate_pseudo_labels(t, &clean).unwrap();
    let labels = pseudo
        .iter()
        .enumerate()
        .map(|(i, &c)| if i % 2 == 0 { c } else { (c + 1) % 3 })
        .collect();
    ParallelDataset::new(clean, noisy, labels).unwrap()
}

fn relabel(data: &ParallelDataset, labels: Vec<usize>) -> ParallelDataset {
    ParallelDataset::new(data.teacher_inputs().clone(), data.student_inputs().clone(), labels)
        .unwrap()
}

#[test]
fn student_is_an_independent_copy() {
    let t = teacher();
    let mut s = init_student_from_teacher(&t);
    assert_eq!(s, t);
    let x = features(5, 2);
    assert_eq!(s.logits(&x).unwrap(), t.logits(&x).unwrap());
    *s.parameter_mut(0) += 1.0;
    assert_ne!(s, t);
    assert_eq!(t, teacher());
}

#[test]
fn augmentation_doubles_with_source_pairs() {
    let empty = ParallelDataset::new(Matrix::zeros(0, 3), Matrix::zeros(0, 3), vec![]).unwrap();
    assert!(augment_with_source_pairs(&empty).unwrap().is_empty());

    let data = mixed_data(&teacher());
    let aug = augment_with_source_pairs(&data).unwrap();
    let n = data.len();
    assert_eq!(aug.len(), 2 * n);
    for i in 0..n {
        assert_eq!(aug.sample(i), data.sample(i));
        let extra = aug.sample(n + i);
        assert_eq!(extra.x_student, extra.x_teacher);
        assert_eq!(extra.x_teacher, data.sample(i).x_teacher);
        assert_eq!(extra.label, data.sample(i).label);
    }
}

#[test]
fn pseudo_labels_follow_teacher_argmax() {
    // identity output layer: logits equal the inputs
    let net = Network::new(vec![Layer::new(
        Matrix::identity(3),
        vec![0.0; 3],
        Activation::Identity,
    )
    .unwrap()])
    .unwrap();
    let x = Matrix::from_rows(&[[0.0, 9.0, 0.0], [5.0, 5.0, 1.0], [0.0, 0.0, 3.0]]).unwrap();
    assert_eq!(generate_pseudo_labels(&net, &x).unwrap(), vec![1, 0, 2]);
}

#[test]
fn pseudo_labels_agree_with_truth_where_teacher_is_right() {
    let t = teacher();
    let data = mixed_data(&t);
    let pseudo = generate_pseudo_labels(&t, data.teacher_inputs()).unwrap();
    let post = softmax(&t.logits(data.teacher_inputs()).unwrap(), 1.0).unwrap();
    for i in 0..data.len() {
        assert_eq!(pseudo[i] == data.labels()[i], post[i].argmax() == data.labels()[i]);
    }
}

#[test]
fn evaluate_examples() {
    let zero = Network::new(vec![Layer::new(
        Matrix::zeros(4, 3),
        vec![0.0; 4],
        Activation::Identity,
    )
    .unwrap()])
    .unwrap();
    let x = features(10, 3);
    assert_eq!(evaluate(&zero, &x, &[0; 10]).unwrap(), 1.0);
    assert_eq!(evaluate(&zero, &x, &[1; 10]).unwrap(), 0.0);
    assert!(matches!(
        evaluate(&zero, &Matrix::zeros(0, 3), &[]),
        Err(Error::Empty(_))
    ));
    let t = teacher();
    let pseudo = generate_pseudo_labels(&t, &x).unwrap();
    assert_eq!(evaluate(&t, &x, &pseudo).unwrap(), 1.0);
}

#[test]
fn soft_only_is_the_same_run_however_epochs_are_split() {
    let t = teacher();
    let data = mixed_data(&t);
    let mut a = schedule(AdaptationMode::SoftOnly);
    a.conditional_epochs = 0;
    a.warmup_epochs = 5;
    let mut b = a.clone();
    b.warmup_epochs = 0;
    b.conditional_epochs = 5;
    let ra = domain_adapt(&t, &data, &a).unwrap();
    let rb = domain_adapt(&t, &data, &b).unwrap();
    assert_eq!(ra, rb);
    let mut c = b.clone();
    c.mode = AdaptationMode::Interpolated(InterpolationWeight::new(1.0).unwrap());
    let rc = domain_adapt(&t, &data, &c).unwrap();
    assert_eq!(rc.student, rb.student);
    assert_eq!(rc.epochs, rb.epochs);
}

#[test]
fn perfect_teacher_conditional_equals_soft() {
    let t = teacher();
    let data = mixed_data(&t);
    let labels = generate_pseudo_labels(&t, data.teacher_inputs()).unwrap();
    let data = relabel(&data, labels);
    let cond = domain_adapt(&t, &data, &schedule(AdaptationMode::Conditional)).unwrap();
    let soft = domain_adapt(&t, &data, &schedule(AdaptationMode::SoftOnly)).unwrap();
    assert_eq!(cond.student, soft.student);
    for (c, s) in cond.epochs.iter().zip(&soft.epochs) {
        assert_eq!(c.loss.to_bits(), s.loss.to_bits());
        assert_eq!(c.batches, s.batches);
    }
}

#[test]
fn always_wrong_teacher_conditional_equals_hard() {
    let t = teacher();
    let data = mixed_data(&t);
    let pseudo = generate_pseudo_labels(&t, data.teacher_inputs()).unwrap();
    let data = relabel(&data, pseudo.iter().map(|c| (c + 1) % 3).collect());
    let mut sc = schedule(AdaptationMode::Conditional);
    sc.warmup_epochs = 0;
    let mut sh = sc.clone();
    sh.mode = AdaptationMode::HardOnly;
    let cond = domain_adapt(&t, &data, &sc).unwrap();
    let hard = domain_adapt(&t, &data, &sh).unwrap();
    assert_eq!(cond.student, hard.student);
    assert!(cond.epochs.iter().all(|e| e.soft_fraction == 0.0));

    let wrong = domain_adapt(&t, &data, &{
        let mut s = sh.clone();
        s.mode = AdaptationMode::WrongOnly;
        s
    })
    .unwrap();
    assert_eq!(wrong.student, hard.student);
}

#[test]
fn phase_consistency_and_teacher_frozen() {
    let t = teacher();
    let data = mixed_data(&t);
    let before = t.parameters();
    let r = domain_adapt(&t, &data, &schedule(AdaptationMode::Conditional)).unwrap();
    assert_eq!(t.parameters(), before);
    assert_eq!(r.epochs.len(), 5);
    let acc = crate::losses::teacher_accuracy(
        &softmax(&t.logits(data.teacher_inputs()).unwrap(), 1.0).unwrap(),
        data.labels(),
    )
    .unwrap();
    assert!(acc > 0.2 && acc < 0.8, "{acc}");
    for e in &r.epochs {
        match e.phase {
            Phase::Warmup => {
                assert!(e.batches.iter().all(|b| b.soft_targets == b.size));
                assert_eq!(e.soft_fraction, 1.0);
            }
            Phase::Main => {
                assert!(e.batches.iter().all(|b| b.soft_targets == b.teacher_correct));
                assert_eq!(e.soft_fraction, e.teacher_accuracy);
            }
        }
        assert_eq!(e.teacher_accuracy, acc);
    }
    assert_eq!(r.epochs.iter().filter(|e| e.phase == Phase::Warmup).count(), 2);
}

#[test]
fn runs_are_deterministic() {
    let t = teacher();
    let data = mixed_data(&t);
    for mode in [
        AdaptationMode::Conditional,
        AdaptationMode::Interpolated(InterpolationWeight::new(0.5).unwrap()),
        AdaptationMode::WrongOnly,
    ] {
        let a = domain_adapt(&t, &data, &schedule(mode)).unwrap();
        let b = domain_adapt(&t, &data, &schedule(mode)).unwrap();
        assert_eq!(a, b);
    }
    let mut other = schedule(AdaptationMode::Conditional);
    other.seed = 12;
    assert_ne!(
        domain_adapt(&t, &data, &other).unwrap().student,
        domain_adapt(&t, &data, &schedule(AdaptationMode::Conditional)).unwrap().student
    );
}

#[test]
fn wrong_only_trains_on_mistakes() {
    let t = teacher();
    let data = mixed_data(&t);
    let r = speaker_adapt(&t, &data.student_set(), &schedule(AdaptationMode::WrongOnly)).unwrap();
    let student_view = ParallelDataset::self_paired(&data.student_set());
    let post = softmax(&t.logits(student_view.teacher_inputs()).unwrap(), 1.0).unwrap();
    let mistakes = (0..data.len())
        .filter(|&i| post[i].argmax() != data.labels()[i])
        .count();
    assert!(mistakes > 0);
    for e in &r.epochs {
        assert_eq!(e.batches.iter().map(|b| b.size).sum::<usize>(), mistakes);
        assert_eq!(e.teacher_accuracy, 0.0);
        assert_eq!(e.soft_fraction, 0.0);
    }
}

#[test]
fn speaker_interpolated_zero_equals_hard() {
    let t = teacher();
    let set = mixed_data(&t).student_set();
    let a = speaker_adapt(
        &t,
        &set,
        &schedule(AdaptationMode::Interpolated(InterpolationWeight::new(0.0).unwrap())),
    )
    .unwrap();
    let b = speaker_adapt(&t, &set, &schedule(AdaptationMode::HardOnly)).unwrap();
    assert_eq!(a.student, b.student);
    assert_eq!(a.epochs.len(), 3);
}

#[test]
fn unsupervised_conditional_is_self_distillation() {
    let t = teacher();
    let x = features(30, 8);
    let set = LabeledSet::new(x.clone(), generate_pseudo_labels(&t, &x).unwrap()).unwrap();
    let cond = speaker_adapt(&t, &set, &schedule(AdaptationMode::Conditional)).unwrap();
    let soft = speaker_adapt(&t, &set, &schedule(AdaptationMode::SoftOnly)).unwrap();
    assert!(cond.epochs.iter().all(|e| e.soft_fraction == 1.0));
    assert_eq!(cond.student, soft.student);
    // soft self-distillation from the teacher's own initialisation has zero gradient
    assert_eq!(cond.student, t);
}

#[test]
fn precomputed_posteriors_match_per_batch_forward() {
    let t = teacher();
    let data = mixed_data(&t);
    let view = TeacherView::new(&t, data.teacher_inputs(), 1.0).unwrap();
    for idx in epoch_batches(3, "adapt-shuffle", 0, &(0..data.len()).collect::<Vec<_>>(), 7) {
        let logits = t.logits(&data.teacher_inputs().select_rows(&idx)).unwrap();
        let fresh = softmax(&logits, 1.0).unwrap();
        for (p, &i) in fresh.iter().zip(&idx) {
            assert_eq!(p, &view.decision[i]);
        }
    }
}

#[test]
fn error_paths() {
    let t = teacher();
    let empty = ParallelDataset::new(Matrix::zeros(0, 3), Matrix::zeros(0, 3), vec![]).unwrap();
    assert!(matches!(
        domain_adapt(&t, &empty, &schedule(AdaptationMode::SoftOnly)),
        Err(Error::Empty(_))
    ));
    let data = mixed_data(&t);
    let mut s = schedule(AdaptationMode::HardOnly);
    s.lr = f64::MAX;
    assert!(matches!(
        domain_adapt(&t, &data, &s),
        Err(Error::Divergence { epoch: 0 })
    ));
    s.lr = 0.0;
    assert!(domain_adapt(&t, &data, &s).is_err());
    let bad = relabel(&data, vec![3; data.len()]);
    assert!(matches!(
        domain_adapt(&t, &bad, &schedule(AdaptationMode::HardOnly)),
        Err(Error::LabelOutOfRange { .. })
    ));
}

#[test]
fn temperature_changes_soft_targets_only() {
    let t = teacher();
    let data = mixed_data(&t);
    let mut s = schedule(AdaptationMode::Conditional);
    s.temperature = 2.0;
    let hot = domain_adapt(&t, &data, &s).unwrap();
    let cold = domain_adapt(&t, &data, &schedule(AdaptationMode::Conditional)).unwrap();
    assert_ne!(hot.student, cold.student);
    // correctness is judged at T = 1
    for (h, c) in hot.epochs.iter().zip(&cold.epochs) {
        assert_eq!(h.teacher_accuracy, c.teacher_accuracy);
        assert_eq!(h.soft_fraction, c.soft_fraction);
    }
}

#[test]
fn supervised_training_reduces_loss() {
    let x = features(60, 4);
    let t = teacher();
    let set = LabeledSet::new(x.clone(), generate_pseudo_labels(&t, &x).unwrap()).unwrap();
    let cfg = SupervisedConfig {
        hidden: vec![8],
        epochs: 30,
        lr: 0.3,
        batch_size: 10,
    };
    let (net, losses) = train_supervised(&set, 3, &cfg, 1).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);
    assert_eq!(net.input_dim(), 3);
    let (again, _) = train_supervised(&set, 3, &cfg, 1).unwrap();
    assert_eq!(net, again);
    let zero = SupervisedConfig { epochs: 0, ..cfg };
    let (init, l) = train_supervised(&set, 3, &zero, 1).unwrap();
    assert!(l.is_empty());
    assert_eq!(init, Network::xavier(&[3, 8, 3], &mut stream(1, "teacher-init", 0)).unwrap());
}
