//! Dense kernels shared by the tape ops. Matrix products go through
//! `matrixmultiply`; everything else is plain loops.

/// `c = beta * c + op(a) * op(b)` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`. A transposed operand is stored in its
/// untransposed layout (`k x m` for `a`, `n x k` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    c: &mut [f32],
    beta: f32,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the three slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a single-image 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output columns `ox` whose input column `ox * stride + kx - padding`
/// falls inside `0..w`, as a half-open range.
fn valid_cols(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let (s, off) = (g.stride as isize, kx as isize - g.padding as isize);
    let lo = if off >= 0 { 0 } else { ((-off + s - 1) / s) as usize };
    let hi = if g.w as isize - off <= 0 { 0 } else { ((g.w as isize - off + s - 1) / s) as usize };
    (lo.min(g.ow), hi.min(g.ow).max(lo.min(g.ow)))
}

/// Unfolds `input` (`c_in x h x w`) into a `patch_len x (oh*ow)` matrix.
pub(crate) fn im2col(input: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let out_len = g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * out_len);
    let pad = g.padding as isize;
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    let dst_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst_row[..lo].fill(0.0);
                    dst_row[hi..].fill(0.0);
                    if lo < hi {
                        let first = lo * g.stride + kx - g.padding;
                        if g.stride == 1 {
                            dst_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (i, d) in dst_row[lo..hi].iter_mut().enumerate() {
                                *d = src[first + i * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `grad_input`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeometry, grad_input: &mut [f32]) {
    let out_len = g.out_len();
    let pad = g.padding as isize;
    for c in 0..g.c_in {
        let plane = &mut grad_input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * out_len..(row + 1) * out_len];
                let (lo, hi) = valid_cols(g, kx);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kx - g.padding;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let src_row = &src[oy * g.ow + lo..oy * g.ow + hi];
                    if g.stride == 1 {
                        dst[first..first + hi - lo].iter_mut().zip(src_row).for_each(|(d, s)| *d += s);
                    } else {
                        for (i, s) in src_row.iter().enumerate() {
                            dst[first + i * g.stride] += s;
                        }
                    }
                }
            }
        }
    }
}
