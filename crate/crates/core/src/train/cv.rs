use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::trainer::{evaluate, train, Partitions, TrainConfig};
use crate::data::{stratified_kfold, stratified_split, Dataset, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::physics::PhysicsParams;

/// Fraction of the non-test records held out for early stopping inside each fold.
pub const INNER_VAL_FRACTION: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvPlan {
    pub folds: usize,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self { folds: 5, repetitions: 20, base_seed: 42 }
    }
}

impl CvPlan {
    pub fn seed(&self, rep: usize, fold: usize) -> u64 {
        self.base_seed + (rep * self.folds + fold) as u64
    }

    pub fn runs(&self) -> usize {
        self.folds * self.repetitions
    }

    /// `(rep, fold, seed)` for every run, repetition-major.
    pub fn ledger(&self) -> Vec<(usize, usize, u64)> {
        (0..self.repetitions)
            .flat_map(|r| (0..self.folds).map(move |f| (r, f, self.seed(r, f))))
            .collect()
    }
}

/// One CV run; serialized as one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub rep: usize,
    pub fold: usize,
    pub seed: u64,
    pub beta: f64,
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub stop_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvAggregate {
    pub beta: f64,
    pub r2: MetricSummary,
    pub rmse: MetricSummary,
    pub mae: MetricSummary,
    pub mape: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rows: Vec<CvRow>,
    pub aggregates: Vec<CvAggregate>,
}

impl CvResult {
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `f` on rayon's global pool (`jobs = 0`) or on a dedicated pool of `jobs` threads.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn fold_split(strata: &[usize], held_out: &[usize], seed: u64) -> Result<Split> {
    let mut is_test = vec![false; strata.len()];
    for &i in held_out {
        is_test[i] = true;
    }
    let rest: Vec<usize> = (0..strata.len()).filter(|&i| !is_test[i]).collect();
    let rest_strata: Vec<usize> = rest.iter().map(|&i| strata[i]).collect();
    let spec = SplitSpec { train_frac: 1.0 - INNER_VAL_FRACTION, val_frac: INNER_VAL_FRACTION, test_frac: 0.0, seed };
    let inner = stratified_split(&rest_strata, &spec)?;
    Ok(Split {
        train: inner.train.iter().map(|&k| rest[k]).collect(),
        val: inner.val.iter().map(|&k| rest[k]).collect(),
        test: held_out.to_vec(),
    })
}

/// Repeated stratified k-fold cross-validation for each β in `betas`.
///
/// Repetition `r` reshuffles folds with the seed of its first run; run
/// `(r, f)` initializes and shuffles with `plan.seed(r, f)`. `jobs = 0`
/// uses rayon's global pool, otherwise a dedicated pool of that size.
pub fn cross_validate(
    ds: &Dataset,
    cfg: &TrainConfig,
    plan: &CvPlan,
    betas: &[f64],
    params: &PhysicsParams,
    jobs: usize,
) -> Result<CvResult> {
    if plan.folds < 2 || plan.repetitions == 0 {
        return Err(Error::Config(format!("invalid CV plan {plan:?}")));
    }
    if betas.is_empty() {
        return Err(Error::Config("no physics weights to evaluate".into()));
    }
    let strata: Vec<usize> = ds.records.iter().map(|r| r.point.membrane_id).collect();
    let mut splits = Vec::with_capacity(plan.runs());
    for rep in 0..plan.repetitions {
        let folds = stratified_kfold(&strata, plan.folds, plan.seed(rep, 0))?;
        for (fold, held_out) in folds.iter().enumerate() {
            let seed = plan.seed(rep, fold);
            let parts = Partitions::new(ds, &fold_split(&strata, held_out, seed)?, params)?;
            splits.push((rep, fold, seed, parts));
        }
    }
    let tasks: Vec<(f64, usize)> = betas.iter().flat_map(|&b| (0..splits.len()).map(move |k| (b, k))).collect();

    let run = |&(beta, k): &(f64, usize)| -> Result<CvRow> {
        let (rep, fold, seed, parts) = &splits[k];
        let run_cfg = TrainConfig { physics_weight: beta, seed: *seed, ..cfg.clone() };
        let mut model = Mlp::<f64>::init(*seed, &run_cfg.layer_sizes, run_cfg.activation)?;
        let report = train(&mut model, &parts.train, &parts.val, &run_cfg)?;
        let m: Metrics = evaluate(&model, &parts.test)?;
        log::debug!("cv rep {rep} fold {fold} beta {beta}: r2 {:.4} stop {}", m.r2, report.stop_epoch);
        Ok(CvRow {
            rep: *rep,
            fold: *fold,
            seed: *seed,
            beta,
            r2: m.r2,
            rmse: m.rmse,
            mae: m.mae,
            mape: m.mape,
            stop_epoch: report.stop_epoch,
        })
    };
    let rows: Vec<CvRow> = with_jobs(jobs, || tasks.par_iter().map(run).collect::<Result<_>>())??;

    let aggregates = betas
        .iter()
        .map(|&beta| {
            let of = |f: fn(&CvRow) -> f64| {
                MetricSummary::of(&rows.iter().filter(|r| r.beta == beta).map(f).collect::<Vec<_>>())
            };
            CvAggregate { beta, r2: of(|r| r.r2), rmse: of(|r| r.rmse), mae: of(|r| r.mae), mape: of(|r| r.mape) }
        })
        .collect();
    Ok(CvResult { rows, aggregates })
}
