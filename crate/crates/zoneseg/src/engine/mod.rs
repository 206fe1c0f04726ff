//! Reverse-mode autodiff engine with the operator set the U-net variants
//! need: 3D convolution (kernel depth 1 degenerates to 2D), max pooling,
//! strided transposed-convolution upsampling, channel concatenation, ReLU,
//! channel softmax, per-channel normalization and a weighted negative
//! log-likelihood loss, plus Glorot initialization and Adam.

pub mod init;
pub mod ops;
pub mod optim;
pub mod tape;
pub mod tensor;

#[cfg(test)]
mod tests;

pub use init::glorot_uniform_init;
pub use optim::{adam_step, AdamHyper, AdamState};
pub use tape::{Gradients, Tape};
pub use tensor::Tensor;

use std::fmt::Debug;

/// Scalar element type. Training and inference run in `f32`; gradient-check
/// tests instantiate the whole stack with `f64` because central finite
/// differences are unreliable in single precision.
pub trait Elem: num_traits::Float + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Row/column-strided matrix multiply `C = alpha*A*B + beta*C`.
    ///
    /// # Safety
    /// Pointers must cover an `m x k`, `k x n` and `m x n` matrix under the
    /// given strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Elem for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Elem for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major `C(m x n) = A(m x k) * B(k x n)`, overwriting `C`.
pub(crate) fn gemm_rowmajor<E: Elem>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        E::gemm(
            m,
            k,
            n,
            E::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            E::zero(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
