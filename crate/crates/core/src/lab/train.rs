//! Pretext training with snapshots, and probe retraining per snapshot.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{flip_horizontal, rotate, shift_channels, value_plane, SyntheticDataset, CHANNELS, IMAGE_LEN, PIXELS};
use super::net::{accuracy, Activation, Adam, Loss, Mlp, Targets};
use super::spec::{Head, PretextSpec, PretextTask, TargetSpec};
use super::LabError;
use crate::curves::{Direction, Step};
use crate::io::{LogRecord, SeriesKind};

/// The representation part of a pretext model; its output is the bottleneck.
pub type Encoder = Mlp;

/// Mixes tags into a base seed (splitmix64 finalizer per tag).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |s, &t| mix(s ^ mix(t)))
}

/// Where records of one training job belong.
#[derive(Debug, Clone, Copy)]
pub struct JobTag<'a> {
    pub run_id: &'a str,
    pub fold: u32,
    pub seed: u64,
}

impl JobTag<'_> {
    fn record(&self, series: SeriesKind, snapshot: Option<Step>, epoch: u64, metric: &str, value: f64, direction: Direction) -> LogRecord {
        LogRecord {
            run_id: self.run_id.to_owned(),
            fold: self.fold,
            series,
            snapshot_step: snapshot,
            epoch,
            metric: metric.to_owned(),
            value,
            direction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretextOutcome {
    pub records: Vec<LogRecord>,
    /// Encoder weights at each snapshot epoch, ascending.
    pub snapshots: Vec<(Step, Encoder)>,
}

enum Want {
    Values(Array2<f64>),
    Classes(Vec<usize>),
}

impl Want {
    fn targets(&self) -> Targets<'_> {
        match self {
            Want::Values(v) => Targets::Values(v),
            Want::Classes(c) => Targets::Classes(c),
        }
    }
}

fn reconstruction_target(task: PretextTask, image: &Array1<f64>) -> Array1<f64> {
    match task {
        PretextTask::GrayscaleReconstruct => value_plane(image.view()),
        _ => image.clone(),
    }
}

/// Inputs and targets for `rows`. `rng` drives augmentation, rotations
/// and noise; evaluation passes a fixed-seed generator and no augmentation.
fn pretext_batch(
    spec: &PretextSpec,
    data: &SyntheticDataset,
    rows: &[usize],
    augment: bool,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Want) {
    let out_len = match spec.task {
        PretextTask::GrayscaleReconstruct => PIXELS,
        _ => IMAGE_LEN,
    };
    let mut inputs = Array2::zeros((rows.len(), IMAGE_LEN));
    let mut values = Array2::zeros((rows.len(), out_len));
    let mut classes = Vec::with_capacity(rows.len());
    let noise = Normal::new(0.0, spec.denoise_std.max(f64::MIN_POSITIVE)).expect("positive std");
    for (i, &r) in rows.iter().enumerate() {
        let mut image = data.images.row(r).to_owned();
        if augment {
            if spec.augmentations.color_jitter {
                image = shift_channels(image.view(), rng.random_range(0..CHANNELS));
            }
            if spec.augmentations.horizontal_flip && rng.random_bool(0.5) {
                image = flip_horizontal(image.view());
            }
        }
        match spec.task {
            PretextTask::Rotate4 => {
                let k = if augment { rng.random_range(0..4) } else { i % 4 };
                inputs.row_mut(i).assign(&rotate(image.view(), k));
                classes.push(k);
            }
            PretextTask::Denoise => {
                let noisy = image.mapv(|v| v + noise.sample(rng));
                inputs.row_mut(i).assign(&noisy);
                values.row_mut(i).assign(&image);
            }
            task => {
                values.row_mut(i).assign(&reconstruction_target(task, &image));
                inputs.row_mut(i).assign(&image);
            }
        }
    }
    let want = if spec.task == PretextTask::Rotate4 {
        Want::Classes(classes)
    } else {
        Want::Values(values)
    };
    (inputs, want)
}

struct PretextModel {
    encoder: Mlp,
    head: Mlp,
    loss: Loss,
}

impl PretextModel {
    fn new(spec: &PretextSpec, rng: &mut ChaCha8Rng) -> Self {
        let act = spec.activation;
        let encoder = Mlp::new(&[IMAGE_LEN, spec.hidden_size, spec.representation_size], act, act, rng);
        let (head, loss) = match spec.task {
            PretextTask::Rotate4 => (
                Mlp::new(&[spec.representation_size, 4], act, Activation::Identity, rng),
                Loss::CrossEntropy,
            ),
            task => {
                let out = if task == PretextTask::GrayscaleReconstruct { PIXELS } else { IMAGE_LEN };
                (
                    Mlp::new(&[spec.representation_size, spec.hidden_size, out], act, Activation::Sigmoid, rng),
                    Loss::MeanSquared,
                )
            }
        };
        Self { encoder, head, loss }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.head.forward(&self.encoder.forward(x))
    }
}

fn finite_or_diverged(phase: &str, epoch: u64, loss: f64) -> Result<f64, LabError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(LabError::Divergence {
            phase: phase.to_owned(),
            epoch,
            loss,
        })
    }
}

/// Trains a pretext model on `split.train`, evaluating on `split.eval`
/// before training (epoch 0) and after every epoch.
///
/// Reconstruction tasks log `mse`; `rotate4` logs `cross_entropy` and
/// `accuracy` (percent). Encoder weights are kept at every snapshot epoch.
pub fn train_pretext(
    spec: &PretextSpec,
    data: &SyntheticDataset,
    split: &super::Split,
    tag: JobTag<'_>,
) -> Result<PretextOutcome, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tag.seed, &[1]));
    let eval_seed = derive_seed(tag.seed, &[2]);
    let mut model = PretextModel::new(spec, &mut rng);
    let mut enc_opt = Adam::new(&model.encoder, spec.learning_rate);
    let mut head_opt = Adam::new(&model.head, spec.learning_rate);

    let (eval_x, eval_y) = pretext_batch(spec, data, &split.eval, false, &mut ChaCha8Rng::seed_from_u64(eval_seed));
    let (train_x, train_y) =
        pretext_batch(spec, data, &split.train, false, &mut ChaCha8Rng::seed_from_u64(eval_seed ^ 1));
    let metric = match model.loss {
        Loss::MeanSquared => "mse",
        Loss::CrossEntropy => "cross_entropy",
    };

    let snapshots_at = spec.snapshots();
    let mut snapshots = Vec::with_capacity(snapshots_at.len());
    let mut records = Vec::new();
    let mut order = split.train.clone();

    let evaluate = |model: &PretextModel, epoch: u64, train_loss: f64, records: &mut Vec<LogRecord>| {
        let out = model.forward(&eval_x);
        let (loss, _) = model.loss.evaluate(&out, eval_y.targets());
        let loss = finite_or_diverged("pretext", epoch, loss)?;
        let lower = Direction::LowerIsBetter;
        records.push(tag.record(SeriesKind::PretextEval, None, epoch, metric, loss, lower));
        if let Want::Classes(labels) = &eval_y {
            let acc = 100.0 * accuracy(&out, labels);
            records.push(tag.record(SeriesKind::PretextEval, None, epoch, "accuracy", acc, Direction::HigherIsBetter));
        }
        records.push(tag.record(SeriesKind::PretextTrain, None, epoch, metric, train_loss, lower));
        Ok::<(), LabError>(())
    };

    let initial_train = model.loss.evaluate(&model.forward(&train_x), train_y.targets()).0;
    evaluate(&model, 0, initial_train, &mut records)?;
    if snapshots_at.first() == Some(&0) {
        snapshots.push((0, model.encoder.clone()));
    }

    for epoch in 1..=spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let (x, y) = pretext_batch(spec, data, batch, true, &mut rng);
            let enc_trace = model.encoder.trace(&x);
            let head_trace = model.head.trace(enc_trace.output());
            let (loss, grad) = model.loss.evaluate(head_trace.output(), y.targets());
            finite_or_diverged("pretext", epoch, loss)?;
            total += loss * batch.len() as f64;
            let (head_grads, d_rep) = model.head.backward(&head_trace, &grad);
            let (enc_grads, _) = model.encoder.backward(&enc_trace, &d_rep);
            head_opt.update(&mut model.head, &head_grads);
            enc_opt.update(&mut model.encoder, &enc_grads);
        }
        evaluate(&model, epoch, total / order.len() as f64, &mut records)?;
        if snapshots_at.contains(&epoch) {
            snapshots.push((epoch, model.encoder.clone()));
        }
    }
    Ok(PretextOutcome { records, snapshots })
}

fn probe(head: Head, inputs: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Mlp {
    let sizes: Vec<usize> = match head {
        Head::Linear => vec![inputs, classes],
        Head::Mlp2 => vec![inputs, hidden, classes],
        Head::Mlp3 => vec![inputs, hidden, hidden, classes],
    };
    Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)
}

/// Trains a fresh probe on frozen encoder outputs and logs its curves.
///
/// Every epoch logs `target_eval` cross-entropy and accuracy (percent) and
/// the mean `target_train` cross-entropy, all tagged with `snapshot`.
/// Training stops early once the eval cross-entropy fails to improve by
/// more than `min_delta` for `patience` epochs.
pub fn train_target_on_snapshot(
    encoder: &Encoder,
    snapshot: Step,
    spec: &TargetSpec,
    data: &SyntheticDataset,
    split: &super::Split,
    tag: JobTag<'_>,
) -> Result<Vec<LogRecord>, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tag.seed, &[3, snapshot]));
    let train_x = encoder.forward(&data.rows(&split.train));
    let eval_x = encoder.forward(&data.rows(&split.eval));
    let train_y = data.labels(&split.train, spec.factor);
    let eval_y = data.labels(&split.eval, spec.factor);

    let mut net = probe(spec.head, encoder.output_size(), spec.hidden_size, spec.factor.classes(), &mut rng);
    let mut opt = Adam::new(&net, spec.learning_rate);
    let mut order: Vec<usize> = (0..train_y.len()).collect();
    let mut records = Vec::new();
    let mut best = f64::INFINITY;
    let mut wait = 0;
    let snap = Some(snapshot);

    for epoch in 1..=spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let x = train_x.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let trace = net.trace(&x);
            let (loss, grad) = Loss::CrossEntropy.evaluate(trace.output(), Targets::Classes(&y));
            finite_or_diverged("target", epoch, loss)?;
            total += loss * batch.len() as f64;
            let (grads, _) = net.backward(&trace, &grad);
            opt.update(&mut net, &grads);
        }
        let logits = net.forward(&eval_x);
        let (loss, _) = Loss::CrossEntropy.evaluate(&logits, Targets::Classes(&eval_y));
        let loss = finite_or_diverged("target", epoch, loss)?;
        let acc = 100.0 * accuracy(&logits, &eval_y);
        records.push(tag.record(SeriesKind::TargetEval, snap, epoch, "cross_entropy", loss, Direction::LowerIsBetter));
        records.push(tag.record(SeriesKind::TargetEval, snap, epoch, "accuracy", acc, Direction::HigherIsBetter));
        records.push(tag.record(
            SeriesKind::TargetTrain,
            snap,
            epoch,
            "cross_entropy",
            total / order.len() as f64,
            Direction::LowerIsBetter,
        ));
        if loss < best - spec.min_delta {
            best = loss;
            wait = 0;
        } else {
            wait += 1;
            if wait >= spec.patience {
                break;
            }
        }
    }
    Ok(records)
}
