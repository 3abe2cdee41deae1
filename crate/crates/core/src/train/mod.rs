//! Composite-loss training, optimization and cross-validation.

mod adam;
mod cv;
mod loss;
mod metrics;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cv::{cross_validate, with_jobs, INNER_VAL_FRACTION, CvAggregate, CvPlan, CvResult, CvRow, MetricSummary};
pub use loss::{data_loss, physics_loss, total_loss, PhysicsLoss, PhysicsTarget, PhysicsTeacher};
pub use metrics::{mae, mape, metrics, r_squared, rmse, Metrics};
pub use schedule::{EarlyStopConfig, EarlyStopping, PlateauConfig, PlateauScheduler, StopSignal};
pub use trainer::{
    evaluate, loss_and_gradients, physics_loss_from_teacher, physics_report, predict_set, train, train_with_collocation,
    Collocation, Partitions, TrainConfig, TrainReport, TrainingSet,
};
