//! Tape-based reverse-mode automatic differentiation over real tensors.
//!
//! A [`Tape`] records the forward operations that touch at least one
//! gradient-carrying tensor; [`Tape::backward`] replays the records in
//! reverse to accumulate gradients. A tape and its tensors belong to one
//! logical training context and are single-threaded; independent contexts
//! (e.g. per-scene gradient evaluation) can run concurrently.
//!
//! Complex spectrogram arithmetic is represented as paired real tensors, so
//! only real-valued AD is needed. All values are double precision.

mod archive;
mod gradcheck;
mod lstm;
mod params;
mod tape;

pub use archive::{read_archive, write_archive, Archive};
pub use gradcheck::{check_all_primitives, gradient_check, gradient_check_at, GradCheckReport};
pub use lstm::{lstm_cell, lstm_sequence, LstmWeights};
pub use params::{BoundParams, ParamSet};
pub use tape::{concat, Arr, GradientMap, Tape, Tensor};
