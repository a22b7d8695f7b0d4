//! Baseline and weighted multi-dilation temporal convolutional networks for
//! time-domain monaural speech dereverberation, with a small reverse-mode
//! autodiff engine, synthetic reverberant data and SISDR training.

pub mod analysis;
pub mod dsp;
pub mod error;
pub mod kernels;
pub mod loss;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

// Training allocates and frees many large intermediate buffers per step;
// mimalloc reuses them instead of returning pages to the OS each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
