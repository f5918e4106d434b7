//! Synthetic scenes, baseline fusion methods and desk-scale experiment drivers.

pub mod experiment;
pub mod world;

pub use experiment::{
    assess, build_corpus, loss_study, pretrain, run_experiment, target_scene, Condition, ExperimentOutcome,
    MethodResult, Pretrained, Recipe, StudyRun, Timer, DESK_RATES,
};
pub use world::{gihs_pansharpen, synth_scene, Scene, WorldModel};
