//! Dense tensors and neural-network layers with hand-derived backward passes.
//!
//! Every layer is generic over [`Real`], so the same code runs in 32-bit
//! precision for training and in 64-bit precision for finite-difference
//! gradient verification.

mod activation;
mod batchnorm;
mod conv;
mod fpn;
mod init;
mod linear;
mod pool;
mod spp;
mod tensor;

pub use activation::{elu, elu_backward, EluConfig};
pub use batchnorm::{BatchNorm2d, BnCache, BnGrads};
pub use conv::{Conv2d, ConvGrads};
pub use fpn::{upsample2x, upsample2x_backward, Fpn, FpnCache, FpnGrads, FpnInputGrads};
pub use init::{init_bias, init_weights};
pub use linear::{Linear, LinearGrads};
pub use pool::{maxpool2x2, maxpool2x2_backward, PoolCache};
pub use spp::{spp_backward, spp_forward, spp_width};
pub use tensor::Tensor;
pub(crate) use tensor::{concat_features, split_features};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

use rand_distr::uniform::SampleUniform;

/// Floating-point element type for tensors.
///
/// Implemented for `f32` (training) and `f64` (verification).
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Default + Send + Sync + Sum + SampleUniform + 'static
{
    /// `c = alpha * a * b + beta * c` on row-major matrices, with explicit strides.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
                // SAFETY: bounds of every operand were checked above and strides are non-negative
                // for all call sites in this crate.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Converts an `f64` constant into the working precision.
#[inline]
pub(crate) fn r<T: Real>(v: f64) -> T {
    T::from(v).expect("f64 constant representable")
}

#[inline]
pub(crate) fn f<T: Real>(v: T) -> f64 {
    v.to_f64().expect("finite real converts to f64")
}
