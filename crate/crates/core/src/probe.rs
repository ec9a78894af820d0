//! Bias-free linear read-out trained on frozen features.
//!
//! Softmax cross-entropy minimized by mini-batch SGD with Nesterov momentum
//! and L2 weight decay, using the same update rule as `torch.optim.SGD`
//! with `nesterov=True`:
//!
//! ```text
//! g = dL/dW + alpha * W
//! v = mu * v + g
//! W = W - lr * (g + mu * v)
//! ```

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::store::{ActivationSet, ProbeWeights};

/// Multiply the learning rate by `decay` every `every` epochs while the
/// epoch is at most `until` (`None`: no upper bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleSegment {
    pub decay: f64,
    pub every: usize,
    pub until: Option<usize>,
}

impl ScheduleSegment {
    pub fn new(decay: f64, every: usize, until: Option<usize>) -> Self {
        ScheduleSegment {
            decay,
            every,
            until,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeHyperparams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: Vec<ScheduleSegment>,
    pub seed: u64,
}

impl Default for ProbeHyperparams {
    /// Read-out settings used for the VGG-16 probes: lr 0.1, momentum
    /// 0.975, weight decay 1e-5, lr x0.6 every 20 epochs, batches of 100.
    fn default() -> Self {
        ProbeHyperparams {
            learning_rate: 0.1,
            momentum: 0.975,
            l2: 1e-5,
            batch_size: 100,
            epochs: 100,
            schedule: vec![ScheduleSegment::new(0.6, 20, None)],
            seed: 0,
        }
    }
}

impl ProbeHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 coefficient must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        validate_schedule(&self.schedule)
    }
}

pub fn validate_schedule(schedule: &[ScheduleSegment]) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidHyperparams(m));
    let mut prev: Option<usize> = None;
    for (i, seg) in schedule.iter().enumerate() {
        if !(seg.decay > 0.0 && seg.decay <= 1.0) {
            return bad(format!("schedule segment {i}: decay must be in (0, 1]"));
        }
        if seg.every == 0 {
            return bad(format!("schedule segment {i}: period must be positive"));
        }
        match seg.until {
            None if i + 1 != schedule.len() => {
                return bad(format!("schedule segment {i}: only the last segment may be open-ended"))
            }
            Some(u) if prev.is_some_and(|p| u <= p) => {
                return bad(format!("schedule segment {i}: segments must be ordered by end epoch"))
            }
            _ => {}
        }
        prev = seg.until;
    }
    Ok(())
}

fn segment_for(epoch: usize, schedule: &[ScheduleSegment]) -> Option<&ScheduleSegment> {
    schedule
        .iter()
        .find(|s| s.until.is_none_or(|u| epoch <= u))
        .or(schedule.last())
}

/// Learning rate in effect during (0-based) `epoch`.
pub fn lr_at(epoch: usize, base: f64, schedule: &[ScheduleSegment]) -> f64 {
    let mut lr = base;
    for t in 1..=epoch {
        if let Some(seg) = segment_for(t, schedule) {
            if t % seg.every == 0 {
                lr *= seg.decay;
            }
        }
    }
    lr
}

/// Index of the largest field; the lowest index wins ties.
pub fn argmax(fields: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in fields.iter().enumerate().skip(1) {
        if v > fields[best] {
            best = j;
        }
    }
    best
}

fn accumulate_fields(w: &[f64], n_features: usize, x: &[f32], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n_features..(j + 1) * n_features];
        *o = row.iter().zip(x).map(|(w, &v)| w * v as f64).sum();
    }
}

/// Mean softmax cross-entropy over `samples` plus `0.5 * l2 * |W|^2`, with
/// its gradient with respect to the label-major weight buffer.
pub fn loss_and_gradient(
    weights: &[f64],
    n_labels: usize,
    set: &ActivationSet,
    samples: &[usize],
    l2: f64,
) -> (f64, Vec<f64>) {
    let n_features = set.n_features();
    let mut grad = vec![0.0; weights.len()];
    let data = batch_gradient(weights, n_labels, set, samples, &mut grad);
    let mut penalty = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    debug_assert_eq!(weights.len(), n_labels * n_features);
    (data + 0.5 * l2 * penalty, grad)
}

/// Writes the mean data gradient into `grad` and returns the mean loss.
fn batch_gradient(
    weights: &[f64],
    n_labels: usize,
    set: &ActivationSet,
    samples: &[usize],
    grad: &mut [f64],
) -> f64 {
    let n_features = set.n_features();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut z = vec![0.0; n_labels];
    let mut loss = 0.0;
    let scale = 1.0 / samples.len() as f64;
    for &n in samples {
        let x = set.sample(n);
        let y = set.label(n);
        accumulate_fields(weights, n_features, x, &mut z);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in z.iter_mut() {
            *v = (*v - zmax).exp();
            denom += *v;
        }
        loss -= (z[y] / denom).ln() * scale;
        for (j, &e) in z.iter().enumerate() {
            let d = (e / denom - if j == y { 1.0 } else { 0.0 }) * scale;
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[j * n_features..(j + 1) * n_features];
            for (g, &v) in row.iter_mut().zip(x) {
                *g += d * v as f64;
            }
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_sr: f64,
    pub test_sr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub weights: ProbeWeights,
    pub history: Vec<EpochRecord>,
}

pub fn train_probe(train: &ActivationSet, hp: &ProbeHyperparams) -> Result<TrainingRun> {
    train_probe_with_eval(train, None, hp)
}

/// Trains a probe, recording the test success rate per epoch when a test
/// set is supplied.
pub fn train_probe_with_eval(
    train: &ActivationSet,
    test: Option<&ActivationSet>,
    hp: &ProbeHyperparams,
) -> Result<TrainingRun> {
    hp.validate()?;
    if train.n_samples() == 0 {
        return Err(Error::EmptySet);
    }
    let n_labels = train.n_labels();
    let n_features = train.n_features();
    if let Some(t) = test {
        if t.n_labels() != n_labels || t.n_features() != n_features {
            return Err(Error::DimensionMismatch(
                "train and test sets have different shapes".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let bound = 1.0 / (n_features as f64).sqrt();
    let mut weights = ProbeWeights::new(
        n_labels,
        n_features,
        (0..n_labels * n_features)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect(),
    )?;
    let mut velocity = vec![0.0; n_labels * n_features];
    let mut grad = vec![0.0; n_labels * n_features];
    let mut order: Vec<usize> = (0..train.n_samples()).collect();
    let mut history = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let lr = lr_at(epoch, hp.learning_rate, &hp.schedule);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let w = weights.as_mut_slice();
            let loss = batch_gradient(w, n_labels, train, batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            for ((wi, vi), gi) in w.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                let g = gi + hp.l2 * *wi;
                *vi = hp.momentum * *vi + g;
                *wi -= lr * (g + hp.momentum * *vi);
            }
        }
        let loss = epoch_loss / train.n_samples() as f64;
        if !loss.is_finite() || weights.as_slice().iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(EpochRecord {
            epoch,
            lr,
            loss,
            train_sr: evaluate_sr(&weights, train)?.success_rate,
            test_sr: test
                .map(|t| evaluate_sr(&weights, t).map(|e| e.success_rate))
                .transpose()?,
        });
    }
    Ok(TrainingRun { weights, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeEvaluation {
    pub success_rate: f64,
    pub n_correct: usize,
    pub n_total: usize,
}

pub fn predictions(w: &ProbeWeights, set: &ActivationSet) -> Result<Vec<usize>> {
    w.check_compatible(set)?;
    let mut z = vec![0.0; w.n_labels()];
    Ok((0..set.n_samples())
        .map(|n| {
            accumulate_fields(w.as_slice(), w.n_features(), set.sample(n), &mut z);
            argmax(&z)
        })
        .collect())
}

pub fn evaluate_sr(w: &ProbeWeights, set: &ActivationSet) -> Result<ProbeEvaluation> {
    if set.n_samples() == 0 {
        return Err(Error::EmptySet);
    }
    let pred = predictions(w, set)?;
    let n_correct = pred
        .iter()
        .zip(set.labels())
        .filter(|(p, &l)| **p == l as usize)
        .count();
    Ok(ProbeEvaluation {
        success_rate: n_correct as f64 / set.n_samples() as f64,
        n_correct,
        n_total: set.n_samples(),
    })
}

/// Copy of `w` with every weight fed by a removed filter set to zero.
pub fn dilute(
    w: &ProbeWeights,
    n_filters: usize,
    spatial_per_filter: usize,
    removed: &[usize],
) -> Result<ProbeWeights> {
    if n_filters * spatial_per_filter != w.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "{n_filters} filters x {spatial_per_filter} slots != {} probe inputs",
            w.n_features()
        )));
    }
    let mut out = w.clone();
    let n = w.n_features();
    for &k in removed {
        if k >= n_filters {
            return Err(Error::FilterOutOfRange { id: k, n_filters });
        }
        for j in 0..w.n_labels() {
            let row = &mut out.as_mut_slice()[j * n..(j + 1) * n];
            row[k * spatial_per_filter..(k + 1) * spatial_per_filter].fill(0.0);
        }
    }
    Ok(out)
}

pub fn dilute_and_evaluate(
    w: &ProbeWeights,
    set: &ActivationSet,
    removed: &[usize],
) -> Result<ProbeEvaluation> {
    w.check_compatible(set)?;
    let diluted = dilute(w, set.n_filters(), set.spatial_per_filter(), removed)?;
    evaluate_sr(&diluted, set)
}

/// Mean and sample standard deviation of success rates over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrSummary {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

pub fn summarize(srs: &[f64]) -> Result<SrSummary> {
    if srs.is_empty() {
        return Err(Error::EmptyInput("success rates"));
    }
    let n = srs.len() as f64;
    let mean = srs.iter().sum::<f64>() / n;
    let std = if srs.len() > 1 {
        (srs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SrSummary {
        mean,
        std,
        per_seed: srs.to_vec(),
    })
}

/// `epoch,lr,loss,train_sr,test_sr` rows, six significant digits.
pub fn write_history_csv(history: &[EpochRecord], out: &mut impl Write) -> std::io::Result<()> {
    use crate::round_sig6 as r;
    writeln!(out, "epoch,lr,loss,train_sr,test_sr")?;
    for h in history {
        let test = h.test_sr.map(|t| r(t).to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            h.epoch,
            r(h.lr),
            r(h.loss),
            r(h.train_sr),
            test
        )?;
    }
    Ok(())
}
