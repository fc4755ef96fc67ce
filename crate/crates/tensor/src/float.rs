use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Scalar type of a tape: `f32` for training, `f64` for finite-difference checks.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn lit(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// `C = A B + beta C` on strided views.
    ///
    /// # Safety
    /// Every index reachable from the pointers through the given dimensions
    /// and strides must be in bounds, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
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

impl Float for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Float for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// A strided matrix view into a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, F> {
    pub data: &'a [F],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> View<'a, F> {
    /// Contiguous row-major `rows x cols` block starting at `offset`.
    pub fn dense(data: &'a [F], offset: usize, rows: usize, cols: usize) -> Self {
        View { data, offset, rows, cols, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
    }
}

/// Destination of a product, same layout rules as [`View`].
pub(crate) struct ViewMut<'a, F> {
    pub data: &'a mut [F],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> ViewMut<'a, F> {
    pub fn dense(data: &'a mut [F], offset: usize, cols: usize) -> Self {
        ViewMut { data, offset, rs: cols, cs: 1 }
    }
}

/// `c = a b` (`accumulate == false`) or `c += a b`, bounds-checked.
pub(crate) fn gemm<F: Float>(a: View<F>, b: View<F>, c: ViewMut<F>, accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { F::one() } else { F::zero() };
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                for j in 0..n {
                    c.data[c.offset + i * c.rs + j * c.cs] = F::zero();
                }
            }
        }
        return;
    }
    assert!(a.last_index() < a.data.len() && b.last_index() < b.data.len());
    assert!(c.offset + (m - 1) * c.rs + (n - 1) * c.cs < c.data.len());
    // SAFETY: extents checked above; `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}
