//! Dense Hermitian algebra shared by the purifier, the model and the dynamics.

mod blocks;
mod gemm;
mod hermitian;

pub use blocks::{
    block_partial_trace, build_contraction_map, compress_block, contract_2rdm, expand_block, isometry,
    pair_dim, pair_index, pair_list, partial_trace_second, OneRDM, SpinBlock, SpinBlock2RDM,
};
pub use gemm::{gemm_into, matmul, matmul3};
pub use hermitian::{
    eigh, eigvalsh, hermiticity_deviation, hs_inner, max_abs, kernel_projector, negative_part, row_space_basis, random_hermitian, Eigh,
    HermitianMatrix, C64, HERMITICITY_TOL, NEG_EIG_REL_EPS,
};
pub(crate) use hermitian::hs_inner_raw;
