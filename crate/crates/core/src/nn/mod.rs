//! Minimal dense autodiff: f64 matrices, a tape, LSTM/linear/conv helpers
//! and Adam.

mod adam;
mod graph;
mod layers;
mod mat;
mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};
pub use layers::{bilstm, Conv1d, Linear, Lstm, LstmState};
pub use mat::Mat;
pub use params::{Grads, ParamId, ParamStore};
