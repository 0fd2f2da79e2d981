//! im2col based convolution kernels in NHWC layout.
//!
//! A [`ConvGeom`] always describes the strided (downsampling) direction:
//! `input (in_h, in_w, in_c) -> output (out_h, out_w, out_c)` with weights laid
//! out as `[k, k, in_c, out_c]`. The transposed convolution runs the same
//! geometry backwards, which makes the two operators exact adjoints.

use serde::{Deserialize, Serialize};

use crate::scalar::{gemm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Geometry with the output size given by standard convolution arithmetic.
    pub fn new(in_h: usize, in_w: usize, in_c: usize, out_c: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let out = |len: usize| (len + 2 * pad - kernel) / stride + 1;
        ConvGeom {
            in_h,
            in_w,
            in_c,
            out_h: out(in_h),
            out_w: out(in_w),
            out_c,
            kernel,
            stride,
            pad,
        }
    }

    /// 5x5, stride 2, padding 2: halves even spatial sizes exactly.
    pub fn halving(size: usize, in_c: usize, out_c: usize) -> Self {
        Self::new(size, size, in_c, out_c, 5, 2, 2)
    }

    pub fn input_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn output_len(&self) -> usize {
        self.out_h * self.out_w * self.out_c
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.in_c, self.out_c]
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    /// Unfolds `x` (`n` images) into `[n * out_h * out_w, k * k * in_c]`.
    pub fn im2col<T: Scalar>(&self, x: &[T], n: usize) -> Vec<T> {
        let patch = self.patch_len();
        let mut cols = vec![T::zero(); n * self.out_h * self.out_w * patch];
        let c = self.in_c;
        for b in 0..n {
            let img = &x[b * self.input_len()..(b + 1) * self.input_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = ((b * self.out_h + oy) * self.out_w + ox) * patch;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let src = (iy as usize * self.in_w + ix as usize) * c;
                            let dst = row + (ky * self.kernel + kx) * c;
                            cols[dst..dst + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Folds columns back into images, summing overlapping contributions.
    pub fn col2im<T: Scalar>(&self, cols: &[T], n: usize) -> Vec<T> {
        let patch = self.patch_len();
        let mut x = vec![T::zero(); n * self.input_len()];
        let c = self.in_c;
        for b in 0..n {
            let img = &mut x[b * self.input_len()..(b + 1) * self.input_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = ((b * self.out_h + oy) * self.out_w + ox) * patch;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let dst = (iy as usize * self.in_w + ix as usize) * c;
                            let src = row + (ky * self.kernel + kx) * c;
                            for (d, &s) in img[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// Strided convolution: `[n, in_h, in_w, in_c] -> [n, out_h, out_w, out_c]`.
    pub fn forward<T: Scalar>(&self, x: &[T], w: &[T], n: usize) -> Vec<T> {
        let cols = self.im2col(x, n);
        let rows = n * self.out_h * self.out_w;
        let mut y = vec![T::zero(); rows * self.out_c];
        gemm(rows, self.patch_len(), self.out_c, &cols, false, w, false, &mut y, false);
        y
    }

    /// Adjoint of [`forward`](Self::forward) in its input:
    /// `[n, out_h, out_w, out_c] -> [n, in_h, in_w, in_c]`.
    pub fn transpose<T: Scalar>(&self, y: &[T], w: &[T], n: usize) -> Vec<T> {
        let rows = n * self.out_h * self.out_w;
        let mut cols = vec![T::zero(); rows * self.patch_len()];
        gemm(rows, self.out_c, self.patch_len(), y, false, w, true, &mut cols, false);
        self.col2im(&cols, n)
    }

    /// Adjoint of [`forward`](Self::forward) in its weights: `d<gy, conv(x, w)>/dw`.
    pub fn weight_grad<T: Scalar>(&self, x: &[T], gy: &[T], n: usize) -> Vec<T> {
        let cols = self.im2col(x, n);
        let rows = n * self.out_h * self.out_w;
        let mut gw = vec![T::zero(); self.patch_len() * self.out_c];
        gemm(self.patch_len(), rows, self.out_c, &cols, true, gy, false, &mut gw, false);
        gw
    }
}
