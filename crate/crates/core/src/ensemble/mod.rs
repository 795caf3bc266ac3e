//! Bagging and multiclass boosting over binary networks.

mod model;
mod train;
mod weights;

pub use model::{aggregate, EnsembleModel, Member, Prediction, Rule, Strategy, TrainingMode};
pub use train::{
    member_seed, train_bagging, train_boosting, train_ensemble, EnsembleConfig, EnsembleRun, LockstepBagging,
    MemberReport,
};
pub use weights::{adaboost_round, bagging_sample, samme_alpha, Round, SampleWeights, ALPHA_CAP};
