//! Randomized element-wise sparsification of dense tensors, together with
//! spectral-norm estimators and numerical checks of the resulting error
//! bounds.

// `!(x > 0.0)` style checks reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accum;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod rng;
pub mod sparsify;
pub mod spectral;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use sparsify::{
    compute_thresholds, expected_nnz, level_decompose, sparsify, stream_sparsify, SketchResult,
    Thresholds,
};
pub use spectral::{
    build_epsilon_net, net_upper_bound, spectral_norm_matrix, spectral_norm_tensor_hopm,
    EpsilonNet, NormProxy, SpectralEstimate,
};
pub use tensor::{DenseTensor, SparseTensor};
