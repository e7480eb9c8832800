//! Stream orchestration: cached statistics, posterior absorption, birth and
//! merge moves, and the per-stream training loop.

mod birth;
mod engine;
mod ledger;
mod merge;
mod scope;

pub use birth::{birth_move, BirthConfig};
pub use engine::{run_stream, StreamConfig, StreamSummary};
pub(crate) use ledger::derive_seed;
pub use ledger::{absorb_posterior_as_prior, StreamEvent, StreamLedger};
pub use merge::{merge_move, merge_score, nw_log_marginal, MergeConfig, MergeRecord};
pub use scope::StatScope;
