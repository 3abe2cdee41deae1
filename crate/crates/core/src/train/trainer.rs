use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{physics_loss, PhysicsTeacher};
use super::metrics::{metrics, Metrics};
use super::schedule::{EarlyStopConfig, EarlyStopping, PlateauConfig, PlateauScheduler, StopSignal};
use crate::data::{Dataset, MinMaxScaler, N_FEATURES};
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Mlp, Workspace, REFERENCE_SIZES};
use crate::physics::{OperatingPoint, PhysicsParams, N_RESIDUALS};
use crate::scalar::Scalar;

/// Offset between the initialization seed and the mini-batch shuffling stream.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// β in `(1 − β)·L_data + β·L_physics`.
    pub physics_weight: f64,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau: PlateauConfig,
    pub early_stop: EarlyStopConfig,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Collocation inputs drawn per data mini-batch (physics-only points).
    pub collocation_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            physics_weight: 0.3,
            learning_rate: 5.5e-3,
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 2_000,
            plateau: PlateauConfig::default(),
            early_stop: EarlyStopConfig::default(),
            seed: 42,
            layer_sizes: REFERENCE_SIZES.to_vec(),
            activation: Activation::Tanh,
            collocation_batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.physics_weight) {
            return bad(format!("physics_weight must lie in [0, 1], got {}", self.physics_weight));
        }
        if !(self.learning_rate > self.plateau.min_lr) {
            return bad(format!(
                "learning_rate {} must exceed plateau.min_lr {}",
                self.learning_rate, self.plateau.min_lr
            ));
        }
        if self.plateau.patience == 0 || self.early_stop.patience == 0 {
            return bad("patiences must be >= 1".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1".into());
        }
        if self.layer_sizes.first() != Some(&N_FEATURES) {
            return bad(format!("first layer must have {N_FEATURES} inputs, got {:?}", self.layer_sizes));
        }
        Ok(())
    }
}

/// Normalized features, physical labels and physics targets for one partition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub physics: PhysicsTeacher,
    /// Physical inputs, kept for physics-loss reporting.
    pub points: Vec<OperatingPoint>,
}

impl TrainingSet {
    pub fn from_dataset(ds: &Dataset, scaler: &MinMaxScaler, params: &PhysicsParams) -> Result<Self> {
        let normalized = ds.normalize_with(scaler)?;
        let points = ds.points();
        Ok(Self {
            features: normalized.features.iter().map(|f| f.to_vec()).collect(),
            labels: normalized.labels,
            physics: PhysicsTeacher::new(&points, params)?,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Unlabelled inputs where only the physics term is enforced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Collocation {
    pub features: Vec<Vec<f64>>,
    pub physics: PhysicsTeacher,
}

impl Collocation {
    pub fn new(points: &[OperatingPoint], class_count: usize, scaler: &MinMaxScaler, params: &PhysicsParams) -> Result<Self> {
        let features = points
            .iter()
            .map(|p| crate::data::encode_features(p, class_count).map(|f| scaler.transform(&f).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features, physics: PhysicsTeacher::new(points, params)? })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Per-epoch history and final diagnostics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub lr_trace: Vec<f64>,
    /// Last epoch run (1-based).
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub final_train_data_loss: f64,
    pub final_train_physics_loss: f64,
    pub test_metrics: Option<Metrics>,
}

struct Prepared<T> {
    x: Vec<Vec<T>>,
    y: Vec<T>,
    /// `(model concentration, fixed residual sum)`
    phys: Vec<Option<(T, T)>>,
}

impl<T: Scalar> Prepared<T> {
    fn new(features: &[Vec<f64>], labels: &[f64], teacher: &PhysicsTeacher) -> Self {
        Self {
            x: features.iter().map(|r| r.iter().map(|v| T::of(*v)).collect()).collect(),
            y: labels.iter().map(|v| T::of(*v)).collect(),
            phys: teacher
                .targets
                .iter()
                .map(|t| t.map(|t| (T::of(t.h2_in_o2), T::of(t.fixed_residuals))))
                .collect(),
        }
    }

    fn from_set(set: &TrainingSet) -> Self {
        Self::new(&set.features, &set.labels, &set.physics)
    }

    fn from_collocation(c: &Collocation) -> Self {
        Self::new(&c.features, &[], &c.physics)
    }
}

/// Composite objective over one mini-batch; fills `grads` with its gradient.
#[allow(clippy::too_many_arguments)]
fn batch_objective<T: Scalar>(
    model: &Mlp<T>,
    ws: &mut Workspace<T>,
    grads: &mut Gradients<T>,
    data: &Prepared<T>,
    idx: &[usize],
    colloc: &Prepared<T>,
    cidx: &[usize],
    beta: T,
) -> T {
    grads.zero();
    let two = T::of(2.0);
    let n_res = T::of(N_RESIDUALS as f64);
    let use_physics = beta > T::zero();
    let phys_n = if use_physics {
        idx.iter().filter(|&&k| data.phys[k].is_some()).count() + cidx.iter().filter(|&&k| colloc.phys[k].is_some()).count()
    } else {
        0
    };
    let n = T::of(idx.len() as f64);
    let pn = T::of(phys_n.max(1) as f64);

    let mut sse = T::zero();
    let mut phys_sum = T::zero();
    for &k in idx {
        let y = model.forward_cached(&data.x[k], ws);
        let d = y - data.y[k];
        sse += d * d;
        let mut upstream = (T::one() - beta) * two * d / n;
        if let (true, Some((target, fixed))) = (use_physics, data.phys[k]) {
            let e = y - target;
            phys_sum += fixed + e * e;
            upstream += beta * two * e / (n_res * pn);
        }
        model.backward_accumulate(ws, upstream, grads);
    }
    if use_physics {
        for &k in cidx {
            let Some((target, fixed)) = colloc.phys[k] else { continue };
            let y = model.forward_cached(&colloc.x[k], ws);
            let e = y - target;
            phys_sum += fixed + e * e;
            model.backward_accumulate(ws, beta * two * e / (n_res * pn), grads);
        }
    }
    let physics = if phys_n > 0 { phys_sum / (n_res * pn) } else { T::zero() };
    (T::one() - beta) * sse / n + beta * physics
}

/// Value and parameter gradient of the composite loss on a chosen mini-batch.
pub fn loss_and_gradients<T: Scalar>(
    model: &Mlp<T>,
    set: &TrainingSet,
    idx: &[usize],
    collocation: Option<(&Collocation, &[usize])>,
    beta: f64,
) -> (T, Gradients<T>) {
    let data = Prepared::<T>::from_set(set);
    let (colloc, cidx) = match collocation {
        Some((c, i)) => (Prepared::from_collocation(c), i),
        None => (Prepared::new(&[], &[], &PhysicsTeacher::default()), &[][..]),
    };
    let mut ws = Workspace::new(model);
    let mut grads = Gradients::zeros_like(model);
    let loss = batch_objective(model, &mut ws, &mut grads, &data, idx, &colloc, cidx, T::of(beta));
    (loss, grads)
}

fn mean_squared<T: Scalar>(model: &Mlp<T>, ws: &mut Workspace<T>, data: &Prepared<T>) -> f64 {
    let sse: f64 = data
        .x
        .iter()
        .zip(&data.y)
        .map(|(x, y)| (model.forward_cached(x, ws).widen() - y.widen()).powi(2))
        .sum();
    sse / data.y.len() as f64
}

/// Network predictions (%, physical units) for a normalized set.
pub fn predict_set<T: Scalar>(model: &Mlp<T>, features: &[Vec<f64>]) -> Vec<f64> {
    let mut ws = Workspace::new(model);
    let mut row = vec![T::zero(); model.input_dim()];
    features
        .iter()
        .map(|f| {
            for (r, v) in row.iter_mut().zip(f) {
                *r = T::of(*v);
            }
            model.forward_cached(&row, &mut ws).widen()
        })
        .collect()
}

/// Metrics of `model` on a labelled set.
pub fn evaluate<T: Scalar>(model: &Mlp<T>, set: &TrainingSet) -> Result<Metrics> {
    metrics(&predict_set(model, &set.features), &set.labels)
}

/// Trains `model` in place and restores the parameters of the best validation epoch.
pub fn train<T: Scalar>(model: &mut Mlp<T>, train_set: &TrainingSet, val_set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_collocation(model, train_set, val_set, None, cfg)
}

/// As [`train`], additionally enforcing the physics term at unlabelled
/// collocation inputs (one collocation mini-batch per data mini-batch).
pub fn train_with_collocation<T: Scalar>(
    model: &mut Mlp<T>,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    collocation: Option<&Collocation>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if model.sizes() != cfg.layer_sizes.as_slice() {
        return Err(Error::Shape(format!("model sizes {:?} differ from config {:?}", model.sizes(), cfg.layer_sizes)));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    if train_set.physics.len() != train_set.len() {
        return Err(Error::Shape("physics targets do not cover the training set".into()));
    }

    let data = Prepared::<T>::from_set(train_set);
    let val = Prepared::<T>::from_set(val_set);
    let empty = Collocation::default();
    let colloc_set = collocation.unwrap_or(&empty);
    let colloc = Prepared::<T>::from_collocation(colloc_set);
    let beta = T::of(cfg.physics_weight);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    let mut corder: Vec<usize> = (0..colloc.x.len()).collect();
    let mut ws = Workspace::new(model);
    let mut grads = Gradients::zeros_like(model);
    let mut adam = AdamState::new(model.param_count());
    let mut scheduler = PlateauScheduler::new(cfg.learning_rate, cfg.plateau);
    let mut stopper = EarlyStopping::new(cfg.early_stop);
    let mut best_params = model.params().to_vec();

    let mut report = TrainReport {
        config: cfg.clone(),
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        lr_trace: Vec::new(),
        stop_epoch: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        final_train_data_loss: f64::NAN,
        final_train_physics_loss: f64::NAN,
        test_metrics: None,
    };

    for epoch in 1..=cfg.max_epochs {
        let lr = scheduler.lr();
        order.shuffle(&mut rng);
        corder.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let cbatch: Vec<usize> = if corder.is_empty() || cfg.physics_weight == 0.0 {
                Vec::new()
            } else {
                let cb = cfg.collocation_batch_size;
                (0..cb).map(|j| corder[(b * cb + j) % corder.len()]).collect()
            };
            let loss = batch_objective(model, &mut ws, &mut grads, &data, batch, &colloc, &cbatch, beta);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss.widen() * batch.len() as f64;
            adam_step(model.params_mut(), &grads.values, &mut adam, lr, &cfg.adam);
        }
        let val_loss = mean_squared(model, &mut ws, &val);
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.train_losses.push(epoch_loss / data.y.len() as f64);
        report.val_losses.push(val_loss);
        report.lr_trace.push(lr);
        report.stop_epoch = epoch;
        scheduler.step(val_loss);
        match stopper.observe(val_loss) {
            StopSignal::Improved => {
                best_params.copy_from_slice(model.params());
                report.best_epoch = epoch;
                report.best_val_loss = val_loss;
            }
            StopSignal::Continue => {}
            StopSignal::Stop => {
                report.stopped_early = true;
                break;
            }
        }
    }

    model.params_mut().copy_from_slice(&best_params);
    report.final_train_data_loss = mean_squared(model, &mut ws, &data);
    let preds = predict_set(model, &train_set.features);
    report.final_train_physics_loss = physics_loss_from_teacher(&train_set.physics, &preds);
    Ok(report)
}

/// Physics loss using precomputed targets (same value as [`physics_loss`]).
pub fn physics_loss_from_teacher(teacher: &PhysicsTeacher, pred: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (t, y) in teacher.targets.iter().zip(pred) {
        if let Some(t) = t {
            sum += t.fixed_residuals + (y - t.h2_in_o2).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / (N_RESIDUALS as f64 * n as f64)
    }
}

/// Full physics diagnostics of a trained model on a set.
pub fn physics_report<T: Scalar>(model: &Mlp<T>, set: &TrainingSet, params: &PhysicsParams) -> Result<super::PhysicsLoss> {
    physics_loss(&set.points, &predict_set(model, &set.features), params)
}

/// Train/val/test sets scaled with statistics fitted on the training partition only.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: TrainingSet,
    pub val: TrainingSet,
    pub test: TrainingSet,
    pub scaler: MinMaxScaler,
}

impl Partitions {
    pub fn new(ds: &Dataset, split: &crate::data::Split, params: &PhysicsParams) -> Result<Self> {
        let train_ds = ds.subset(&split.train);
        let scaler = train_ds.normalize()?.scaler;
        let set = |idx: &[usize]| TrainingSet::from_dataset(&ds.subset(idx), &scaler, params);
        Ok(Self { train: set(&split.train)?, val: set(&split.val)?, test: set(&split.test)?, scaler })
    }
}
