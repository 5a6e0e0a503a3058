//! Forward/backward kernels on raw buffers. The tape in `crate::tape` owns
//! the bookkeeping; these functions only do arithmetic.

pub(crate) mod conv;
pub(crate) mod norm;
pub(crate) mod pool;
pub(crate) mod upsample;
