//! Simulated slate environments.

mod interaction;
mod mway;
pub mod ratings;
mod sigmoid;
mod synth;

pub use interaction::InteractionEnv;
pub use mway::MWayCdfEnv;
pub use ratings::{
    fit_ease, ingest_movielens_csv, ndcg_reward, synthetic_ratings, IngestOptions, IngestReport,
    PreferenceModel, RatingsMatrix, RatingsSlateEnv, SimulatorParams, SlateSimUser,
};
pub use sigmoid::SigmoidSlice;
pub use synth::AdditiveCdfEnv;
