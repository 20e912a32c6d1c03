//! Classification-head training on cached embeddings, and joint training of
//! a linear combiner with the head through the frozen encoder.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::encoder::SurrogateEncoder;
use crate::error::{invalid, Error, Result};
use crate::lcomb::LcombAdapter;
use crate::linalg::{dot, Matrix};
use crate::tensor::SeriesTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(n_classes: usize, embed_dim: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(invalid!("a head needs at least 2 classes, got {n_classes}"));
        }
        Ok(Self { weights: Matrix::zeros(n_classes, embed_dim), bias: vec![0.0; n_classes] })
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, embedding: &[f64]) -> Vec<f64> {
        (0..self.n_classes()).map(|c| dot(self.weights.row(c), embedding) + self.bias[c]).collect()
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, embedding: &[f64]) -> usize {
        argmax(&self.logits(embedding))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub budget_seconds: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
            budget_seconds: 7200.0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.budget_seconds > 0.0) {
            return Err(invalid!("budget_seconds must be positive, got {}", self.budget_seconds));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(invalid!("adam hyperparameters out of range"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    BudgetExceeded,
    /// Kept for report parity; never produced here.
    MemoryExceeded,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::BudgetExceeded => "budget_exceeded",
            RunStatus::MemoryExceeded => "memory_exceeded",
        }
    }
}

/// One row of a benchmark grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset_id: String,
    pub adapter_id: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Present iff `status` is `ok`.
    pub accuracy: Option<f64>,
    pub wall_seconds: f64,
    pub encoder_forward_passes: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub epochs_completed: usize,
    pub truncated_steps: usize,
}

/// Wall-clock allowance for one run, started at construction.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    start: Instant,
    limit: Duration,
}

impl Budget {
    pub fn start(seconds: f64) -> Self {
        Self { start: Instant::now(), limit: Duration::from_secs_f64(seconds.max(0.0)) }
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn exceeded(&self) -> bool {
        self.start.elapsed() > self.limit
    }
}

/// How a training loop ended.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub status: RunStatus,
    pub epochs_completed: usize,
    /// Mean training loss before each completed update.
    pub losses: Vec<f64>,
    /// Samples pushed through the encoder during training.
    pub encoder_forward_passes: u64,
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(invalid!("label {label} out of range for {} classes", logits.len()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// Optimizer state over a flat parameter vector.
#[derive(Clone, Debug)]
struct Optimizer {
    config: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    fn new(config: TrainConfig, n_params: usize) -> Self {
        Self { config, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        let lr = self.config.learning_rate;
        match self.config.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let TrainConfig { beta1, beta2, epsilon, .. } = self.config;
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
        }
    }
}

fn check_labels(n_rows: usize, labels: &[usize]) -> Result<usize> {
    if n_rows != labels.len() {
        return Err(invalid!("{n_rows} samples but {} labels", labels.len()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::DegenerateLabels(format!(
            "training labels contain a single class ({})",
            first.map_or("none".to_string(), |l| l.to_string())
        )));
    }
    Ok(n_classes)
}

/// Mean cross-entropy over `emb` and the gradients for the head parameters and
/// (optionally) the embeddings.
fn head_loss_and_grads(
    head: &LinearHead,
    emb: &Matrix,
    labels: &[usize],
    grad_emb: Option<&mut Matrix>,
) -> (f64, Vec<f64>) {
    let (n, e, c) = (emb.rows(), emb.cols(), head.n_classes());
    let scale = 1.0 / n as f64;
    let mut grads = vec![0.0; c * e + c];
    let mut loss = 0.0;
    let mut grad_emb = grad_emb;
    for i in 0..n {
        let row = emb.row(i);
        let (l, g) = cross_entropy(&head.logits(row), labels[i]).expect("labels checked");
        loss += l * scale;
        for k in 0..c {
            let gk = g[k] * scale;
            for (acc, x) in grads[k * e..(k + 1) * e].iter_mut().zip(row) {
                *acc += gk * x;
            }
            grads[c * e + k] += gk;
        }
        if let Some(ge) = grad_emb.as_deref_mut() {
            let out = ge.row_mut(i);
            out.fill(0.0);
            for k in 0..c {
                let gk = g[k] * scale;
                for (o, w) in out.iter_mut().zip(head.weights.row(k)) {
                    *o += gk * w;
                }
            }
        }
    }
    (loss, grads)
}

fn head_params_mut(head: &mut LinearHead, update: impl FnOnce(&mut [f64])) {
    let mut flat: Vec<f64> = head.weights.as_slice().iter().chain(&head.bias).copied().collect();
    update(&mut flat);
    let split = head.weights.as_slice().len();
    head.weights.as_mut_slice().copy_from_slice(&flat[..split]);
    head.bias.copy_from_slice(&flat[split..]);
}

/// Full-batch training of a zero-initialised linear head on fixed embeddings.
pub fn train_head(emb: &Matrix, labels: &[usize], cfg: &TrainConfig) -> Result<(LinearHead, TrainReport)> {
    train_head_within(emb, labels, cfg, &Budget::start(cfg.budget_seconds))
}

/// [`train_head`] against a budget that may already be running.
pub fn train_head_within(
    emb: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    budget: &Budget,
) -> Result<(LinearHead, TrainReport)> {
    cfg.validate()?;
    let n_classes = check_labels(emb.rows(), labels)?;
    let mut head = LinearHead::zeros(n_classes, emb.cols())?;
    let mut opt = Optimizer::new(*cfg, n_classes * emb.cols() + n_classes);
    let mut report =
        TrainReport { status: RunStatus::Ok, epochs_completed: 0, losses: Vec::new(), encoder_forward_passes: 0 };
    for _ in 0..cfg.epochs {
        if budget.exceeded() {
            report.status = RunStatus::BudgetExceeded;
            return Ok((head, report));
        }
        let (loss, grads) = head_loss_and_grads(&head, emb, labels, None);
        head_params_mut(&mut head, |p| opt.step(p, &grads));
        report.losses.push(loss);
        report.epochs_completed += 1;
    }
    if budget.exceeded() {
        report.status = RunStatus::BudgetExceeded;
    }
    Ok((head, report))
}

/// Joint training of a combiner and a head through the frozen encoder.
///
/// Every epoch runs combiner → encoder → head forward on all training samples,
/// then back-propagates through the encoder and combiner. The encoder is
/// never updated. The top-k mask (if any) is used in the forward pass and
/// passed straight through in the backward pass.
pub fn train_lcomb_joint(
    x: &SeriesTensor,
    labels: &[usize],
    encoder: &SurrogateEncoder,
    adapter: &LcombAdapter,
    cfg: &TrainConfig,
) -> Result<(LcombAdapter, LinearHead, TrainReport)> {
    train_lcomb_joint_within(x, labels, encoder, adapter, cfg, &Budget::start(cfg.budget_seconds))
}

pub fn train_lcomb_joint_within(
    x: &SeriesTensor,
    labels: &[usize],
    encoder: &SurrogateEncoder,
    adapter: &LcombAdapter,
    cfg: &TrainConfig,
    budget: &Budget,
) -> Result<(LcombAdapter, LinearHead, TrainReport)> {
    cfg.validate()?;
    let n_classes = check_labels(x.n_samples(), labels)?;
    if encoder.channels() != adapter.d_out() {
        return Err(invalid!(
            "encoder expects {} channels but the combiner produces {}",
            encoder.channels(),
            adapter.d_out()
        ));
    }
    let mut adapter = adapter.clone();
    let mut head = LinearHead::zeros(n_classes, encoder.embed_dim())?;
    let mut head_opt = Optimizer::new(*cfg, n_classes * encoder.embed_dim() + n_classes);
    let mut lcomb_opt = Optimizer::new(*cfg, adapter.d_out() * adapter.d_in());
    let mut grad_emb = Matrix::zeros(x.n_samples(), encoder.embed_dim());
    let mut report =
        TrainReport { status: RunStatus::Ok, epochs_completed: 0, losses: Vec::new(), encoder_forward_passes: 0 };

    for _ in 0..cfg.epochs {
        if budget.exceeded() {
            report.status = RunStatus::BudgetExceeded;
            return Ok((adapter, head, report));
        }
        let y = adapter.apply(x)?;
        let emb = encoder.encode(&y)?;
        report.encoder_forward_passes += x.n_samples() as u64;
        let (loss, head_grads) = head_loss_and_grads(&head, &emb, labels, Some(&mut grad_emb));
        let grad_y = encoder.encode_backward(&y, &grad_emb)?;
        let grad_logits = adapter.apply_backward(x, &grad_y)?;

        head_params_mut(&mut head, |p| head_opt.step(p, &head_grads));
        lcomb_opt.step(adapter.logits_mut(), grad_logits.as_slice());
        report.losses.push(loss);
        report.epochs_completed += 1;
    }
    if budget.exceeded() {
        report.status = RunStatus::BudgetExceeded;
    }
    Ok((adapter, head, report))
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(head: &LinearHead, emb: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = labels.iter().enumerate().filter(|&(i, &l)| head.predict(emb.row(i)) == l).count();
    correct as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_classes() {
        let (loss, grad) = cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert_eq!(grad, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let (loss, grad) = cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-300);
        assert!(grad.iter().all(|g| g.is_finite()));
        assert!(cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn single_class_labels_are_degenerate() {
        let emb = Matrix::zeros(3, 2);
        assert!(matches!(
            train_head(&emb, &[1, 1, 1], &TrainConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn zero_epochs_predicts_class_zero() {
        let emb = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![2.0], vec![0.5]]).unwrap();
        let labels = [0, 1, 1, 1];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (head, report) = train_head(&emb, &labels, &cfg).unwrap();
        assert_eq!(report.epochs_completed, 0);
        assert_eq!(head, LinearHead::zeros(2, 1).unwrap());
        assert_eq!(evaluate(&head, &emb, &labels), 0.25);
    }

    #[test]
    fn zero_head_on_balanced_data_scores_half() {
        let head = LinearHead::zeros(2, 3).unwrap();
        let emb = Matrix::zeros(4, 3);
        assert_eq!(evaluate(&head, &emb, &[0, 1, 0, 1]), 0.5);
    }

    #[test]
    fn separable_clusters_are_learned() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s + 0.1 * ((i as f64) * 0.7).sin(), s * 0.5 + 0.1 * ((i as f64) * 1.3).cos()]
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let emb = Matrix::from_rows(&rows).unwrap();
        let (head, report) = train_head(&emb, &labels, &TrainConfig::default()).unwrap();
        assert_eq!(report.status, RunStatus::Ok);
        assert_eq!(evaluate(&head, &emb, &labels), 1.0);
    }

    #[test]
    fn sgd_loss_never_increases() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 1.0]).collect();
        let labels: Vec<usize> = (0..30).map(|i| (i * 7 % 3) as usize).collect();
        let emb = Matrix::from_rows(&rows).unwrap();
        let cfg = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 1e-3, epochs: 300, ..TrainConfig::default() };
        let (_, report) = train_head(&emb, &labels, &cfg).unwrap();
        assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tiny_budget_is_reported() {
        let emb = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let budget = Budget::start(0.0);
        std::thread::sleep(Duration::from_millis(2));
        let (_, report) = train_head_within(&emb, &[0, 1], &TrainConfig::default(), &budget).unwrap();
        assert_eq!(report.status, RunStatus::BudgetExceeded);
        assert_eq!(report.epochs_completed, 0);
    }

    #[test]
    fn evaluate_matches_naive_loop() {
        let head = LinearHead {
            weights: Matrix::from_rows(&[vec![0.5, -1.0], vec![-0.2, 0.3], vec![0.1, 0.1]]).unwrap(),
            bias: vec![0.0, 0.1, -0.05],
        };
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![(i as f64).sin(), (i as f64 * 0.5).cos()]).collect();
        let labels: Vec<usize> = (0..25).map(|i| i % 3).collect();
        let emb = Matrix::from_rows(&rows).unwrap();
        let mut correct = 0;
        for (row, &l) in rows.iter().zip(&labels) {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..3 {
                let s = head.weights[(c, 0)] * row[0] + head.weights[(c, 1)] * row[1] + head.bias[c];
                if s > best_score {
                    best_score = s;
                    best = c;
                }
            }
            correct += usize::from(best == l);
        }
        assert_eq!(evaluate(&head, &emb, &labels), correct as f64 / 25.0);
    }
}
