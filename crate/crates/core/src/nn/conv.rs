//! Convolution geometry with "same" padding plus the im2col / col2im lowering.

use super::scalar::Scalar;

/// Geometry of a 2-D convolution with "same" zero padding.
///
/// The output spatial size is `ceil(input / stride)`. Padding follows the usual
/// convention of putting the odd pixel of padding after the image (bottom/right).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn same(in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Self {
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(in_h);
        let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(in_w);
        ConvGeometry {
            in_h,
            in_w,
            kernel,
            stride,
            out_h,
            out_w,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Rows of the lowered column matrix per input channel.
    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }

    #[inline]
    fn source(&self, out: usize, tap: usize, limit: usize, pad: usize) -> Option<usize> {
        let pos = (out * self.stride + tap) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Lowers `x` of shape `[C, N, H, W]` to a `[C * k * k, N * out_h * out_w]` matrix.
pub fn im2col<T: Scalar>(x: &[T], channels: usize, batch: usize, g: &ConvGeometry) -> Vec<T> {
    let plane = g.in_h * g.in_w;
    let cols = batch * g.out_pixels();
    let mut out = vec![T::zero(); channels * g.taps() * cols];
    for c in 0..channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for n in 0..batch {
                    let src = &x[(c * batch + n) * plane..(c * batch + n + 1) * plane];
                    for oh in 0..g.out_h {
                        let Some(ih) = g.source(oh, ki, g.in_h, g.pad_top) else {
                            continue;
                        };
                        let base = (n * g.out_h + oh) * g.out_w;
                        let src_row = &src[ih * g.in_w..(ih + 1) * g.in_w];
                        for ow in 0..g.out_w {
                            if let Some(iw) = g.source(ow, kj, g.in_w, g.pad_left) {
                                dst_row[base + ow] = src_row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters-and-adds a column matrix back into `[C, N, H, W]`.
pub fn col2im<T: Scalar>(col: &[T], channels: usize, batch: usize, g: &ConvGeometry) -> Vec<T> {
    let plane = g.in_h * g.in_w;
    let cols = batch * g.out_pixels();
    assert_eq!(col.len(), channels * g.taps() * cols);
    let mut x = vec![T::zero(); channels * batch * plane];
    for c in 0..channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src_row = &col[row * cols..(row + 1) * cols];
                for n in 0..batch {
                    let dst = &mut x[(c * batch + n) * plane..(c * batch + n + 1) * plane];
                    for oh in 0..g.out_h {
                        let Some(ih) = g.source(oh, ki, g.in_h, g.pad_top) else {
                            continue;
                        };
                        let base = (n * g.out_h + oh) * g.out_w;
                        let dst_row = &mut dst[ih * g.in_w..(ih + 1) * g.in_w];
                        for ow in 0..g.out_w {
                            if let Some(iw) = g.source(ow, kj, g.in_w, g.pad_left) {
                                dst_row[iw] += src_row[base + ow];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_sizes() {
        let g = ConvGeometry::same(64, 64, 4, 2);
        assert_eq!((g.out_h, g.pad_top), (32, 1));
        let g = ConvGeometry::same(32, 32, 4, 1);
        assert_eq!((g.out_h, g.pad_top), (32, 1));
        let g = ConvGeometry::same(1, 1, 4, 1);
        assert_eq!((g.out_h, g.pad_top), (1, 1));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeometry::same(5, 6, 4, 2);
        let (c, n) = (2, 3);
        let x: Vec<f64> = (0..c * n * 30).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let cols = im2col(&x, c, n, &g);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 3 % 13) as f64) * 0.5).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, c, n, &g);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
