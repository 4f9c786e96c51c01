//! Layers with explicit forward and backward passes.

use super::broadcast::CoordChannels;
use super::conv::{col2im, im2col, ConvGeometry};
use super::scalar::{gemm, Scalar};
use super::tensor::Tensor;

/// One stage of a sequential network.
///
/// Weight layouts: `Dense` is `[out, in]`; `Conv` is `[out, in, k, k]`; `Deconv` is
/// `[in, out, k, k]` (the transpose of the convolution it inverts).
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Dense {
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    Conv {
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
    },
    Deconv {
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
    },
    Relu,
    LeakyRelu(f64),
    /// `[C, N, H, W]` to `[C * H * W, N]`.
    Flatten,
    /// `[C * H * W, N]` to `[C, N, H, W]`.
    Unflatten {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// `[k, N]` to `[k + 2, N, H, W]`: tile the latent and append coordinate channels.
    Broadcast {
        coords: CoordChannels,
    },
    /// `[C, N, H, W]` to `[C + 2, N, H, W]` with meshgrid coordinates at the input resolution.
    AppendCoords,
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Debug)]
pub enum Cache<T> {
    None,
    Input(Tensor<T>),
    Output(Tensor<T>),
    Columns {
        col: Vec<T>,
        batch: usize,
        in_channels: usize,
        geometry: ConvGeometry,
    },
    Shape(Vec<usize>),
}

fn coord_values<T: Scalar>(coords: &CoordChannels) -> (Vec<T>, Vec<T>) {
    (
        coords.x_channel().map(T::of).collect(),
        coords.y_channel().map(T::of).collect(),
    )
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    let per = out.len() / bias.len();
    for (chunk, &b) in out.chunks_mut(per).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_sums<T: Scalar>(grad_bias: &mut [T], grad: &[T]) {
    let per = grad.len() / grad_bias.len();
    for (chunk, gb) in grad.chunks(per).zip(grad_bias.iter_mut()) {
        *gb += chunk.iter().copied().sum::<T>();
    }
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv { .. } => "conv",
            Layer::Deconv { .. } => "deconv",
            Layer::Relu => "relu",
            Layer::LeakyRelu(_) => "leaky_relu",
            Layer::Flatten => "flatten",
            Layer::Unflatten { .. } => "unflatten",
            Layer::Broadcast { .. } => "broadcast",
            Layer::AppendCoords => "append_coords",
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense { weight, bias }
            | Layer::Conv { weight, bias, .. }
            | Layer::Deconv { weight, bias, .. } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense { weight, bias }
            | Layer::Conv { weight, bias, .. }
            | Layer::Deconv { weight, bias, .. } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, x: Tensor<T>, keep: bool) -> (Tensor<T>, Cache<T>) {
        match self {
            Layer::Dense { weight, bias } => {
                let (out_f, in_f) = (weight.dim(0), weight.dim(1));
                assert_eq!(x.dim(0), in_f, "dense layer input width");
                let n = x.dim(1);
                let mut y = Tensor::zeros(&[out_f, n]);
                gemm(false, false, out_f, n, in_f, weight.data(), x.data(), T::zero(), y.data_mut());
                add_channel_bias(y.data_mut(), bias.data());
                (y, if keep { Cache::Input(x) } else { Cache::None })
            }
            Layer::Conv {
                weight,
                bias,
                stride,
            } => {
                let (out_c, in_c, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
                assert_eq!(x.dim(0), in_c, "conv layer input channels");
                let (n, h, w) = (x.dim(1), x.dim(2), x.dim(3));
                let g = ConvGeometry::same(h, w, k, *stride);
                let col = im2col(x.data(), in_c, n, &g);
                let cols = n * g.out_pixels();
                let mut y = Tensor::zeros(&[out_c, n, g.out_h, g.out_w]);
                gemm(false, false, out_c, cols, in_c * k * k, weight.data(), &col, T::zero(), y.data_mut());
                add_channel_bias(y.data_mut(), bias.data());
                let cache = if keep {
                    Cache::Columns {
                        col,
                        batch: n,
                        in_channels: in_c,
                        geometry: g,
                    }
                } else {
                    Cache::None
                };
                (y, cache)
            }
            Layer::Deconv {
                weight,
                bias,
                stride,
            } => {
                let (in_c, out_c, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
                assert_eq!(x.dim(0), in_c, "deconv layer input channels");
                let (n, h, w) = (x.dim(1), x.dim(2), x.dim(3));
                let g = ConvGeometry::same(h * stride, w * stride, k, *stride);
                let cols = n * h * w;
                let mut col = vec![T::zero(); out_c * k * k * cols];
                gemm(true, false, out_c * k * k, cols, in_c, weight.data(), x.data(), T::zero(), &mut col);
                let mut data = col2im(&col, out_c, n, &g);
                add_channel_bias(&mut data, bias.data());
                let y = Tensor::from_vec(&[out_c, n, g.in_h, g.in_w], data);
                (y, if keep { Cache::Input(x) } else { Cache::None })
            }
            Layer::Relu => {
                let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
                let cache = if keep { Cache::Output(y.clone()) } else { Cache::None };
                (y, cache)
            }
            Layer::LeakyRelu(slope) => {
                let s = T::of(*slope);
                let y = x.map(|v| if v > T::zero() { v } else { v * s });
                (y, if keep { Cache::Input(x) } else { Cache::None })
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let (c, n) = (shape[0], shape[1]);
                let plane = shape[2] * shape[3];
                let src = x.data();
                let mut out = vec![T::zero(); src.len()];
                for ci in 0..c {
                    for ni in 0..n {
                        let s = &src[(ci * n + ni) * plane..(ci * n + ni + 1) * plane];
                        for (p, &v) in s.iter().enumerate() {
                            out[(ci * plane + p) * n + ni] = v;
                        }
                    }
                }
                let y = Tensor::from_vec(&[c * plane, n], out);
                (y, if keep { Cache::Shape(shape) } else { Cache::None })
            }
            Layer::Unflatten {
                channels,
                height,
                width,
            } => {
                let plane = height * width;
                assert_eq!(x.dim(0), channels * plane, "unflatten width");
                let n = x.dim(1);
                let y = Tensor::from_vec(
                    &[*channels, n, *height, *width],
                    unflatten_data(x.data(), *channels, n, plane),
                );
                (y, Cache::None)
            }
            Layer::Broadcast { coords } => {
                let (k, n) = (x.dim(0), x.dim(1));
                let plane = coords.height * coords.width;
                let (xs, ys) = coord_values::<T>(coords);
                let mut out = Vec::with_capacity((k + 2) * n * plane);
                for c in 0..k {
                    for ni in 0..n {
                        let v = x.data()[c * n + ni];
                        out.extend(std::iter::repeat_n(v, plane));
                    }
                }
                for _ in 0..n {
                    out.extend_from_slice(&xs);
                }
                for _ in 0..n {
                    out.extend_from_slice(&ys);
                }
                let y = Tensor::from_vec(&[k + 2, n, coords.height, coords.width], out);
                (y, Cache::None)
            }
            Layer::AppendCoords => {
                let (c, n, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
                let (xs, ys) = coord_values::<T>(&CoordChannels::meshgrid(h, w));
                let mut out = x.into_vec();
                out.reserve(2 * n * h * w);
                for _ in 0..n {
                    out.extend_from_slice(&xs);
                }
                for _ in 0..n {
                    out.extend_from_slice(&ys);
                }
                (Tensor::from_vec(&[c + 2, n, h, w], out), Cache::None)
            }
        }
    }

    /// Propagates `grad` (w.r.t. the layer output) back to the layer input, adding
    /// parameter gradients into `param_grads` (same order as [`Layer::params`]).
    pub fn backward(&self, cache: &Cache<T>, grad: Tensor<T>, param_grads: &mut [Tensor<T>]) -> Tensor<T> {
        match (self, cache) {
            (Layer::Dense { weight, .. }, Cache::Input(x)) => {
                let (out_f, in_f) = (weight.dim(0), weight.dim(1));
                let n = x.dim(1);
                let (gw, gb) = param_grads.split_at_mut(1);
                gemm(false, true, out_f, in_f, n, grad.data(), x.data(), T::one(), gw[0].data_mut());
                accumulate_channel_sums(gb[0].data_mut(), grad.data());
                let mut dx = Tensor::zeros(&[in_f, n]);
                gemm(true, false, in_f, n, out_f, weight.data(), grad.data(), T::zero(), dx.data_mut());
                dx
            }
            (
                Layer::Conv { weight, .. },
                Cache::Columns {
                    col,
                    batch,
                    in_channels,
                    geometry,
                },
            ) => {
                let out_c = weight.dim(0);
                let kk = geometry.taps();
                let cols = batch * geometry.out_pixels();
                let (gw, gb) = param_grads.split_at_mut(1);
                gemm(false, true, out_c, in_channels * kk, cols, grad.data(), col, T::one(), gw[0].data_mut());
                accumulate_channel_sums(gb[0].data_mut(), grad.data());
                let mut dcol = vec![T::zero(); in_channels * kk * cols];
                gemm(true, false, in_channels * kk, cols, out_c, weight.data(), grad.data(), T::zero(), &mut dcol);
                let dx = col2im(&dcol, *in_channels, *batch, geometry);
                Tensor::from_vec(&[*in_channels, *batch, geometry.in_h, geometry.in_w], dx)
            }
            (Layer::Deconv { weight, stride, .. }, Cache::Input(x)) => {
                let (in_c, out_c, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
                let (n, h, w) = (x.dim(1), x.dim(2), x.dim(3));
                let g = ConvGeometry::same(h * stride, w * stride, k, *stride);
                let cols = n * h * w;
                let dcol = im2col(grad.data(), out_c, n, &g);
                let (gw, gb) = param_grads.split_at_mut(1);
                gemm(false, true, in_c, out_c * k * k, cols, x.data(), &dcol, T::one(), gw[0].data_mut());
                accumulate_channel_sums(gb[0].data_mut(), grad.data());
                let mut dx = Tensor::zeros(&[in_c, n, h, w]);
                gemm(false, false, in_c, cols, out_c * k * k, weight.data(), &dcol, T::zero(), dx.data_mut());
                dx
            }
            (Layer::Relu, Cache::Output(y)) => {
                let mut g = grad;
                g.data_mut()
                    .iter_mut()
                    .zip(y.data())
                    .for_each(|(gv, &yv)| {
                        if yv <= T::zero() {
                            *gv = T::zero()
                        }
                    });
                g
            }
            (Layer::LeakyRelu(slope), Cache::Input(x)) => {
                let s = T::of(*slope);
                let mut g = grad;
                g.data_mut()
                    .iter_mut()
                    .zip(x.data())
                    .for_each(|(gv, &xv)| {
                        if xv <= T::zero() {
                            *gv *= s
                        }
                    });
                g
            }
            (Layer::Flatten, Cache::Shape(shape)) => {
                let (c, n) = (shape[0], shape[1]);
                let plane = shape[2] * shape[3];
                Tensor::from_vec(shape, unflatten_data(grad.data(), c, n, plane))
            }
            (Layer::Unflatten { .. }, _) => {
                let (c, n, h, w) = (grad.dim(0), grad.dim(1), grad.dim(2), grad.dim(3));
                let (flat, _) = Layer::Flatten.forward(grad, false);
                debug_assert_eq!(flat.shape(), &[c * h * w, n]);
                flat
            }
            (Layer::Broadcast { coords }, _) => {
                let n = grad.dim(1);
                let k = grad.dim(0) - 2;
                let plane = coords.height * coords.width;
                let data: Vec<T> = grad.data()[..k * n * plane]
                    .chunks(plane)
                    .map(|c| c.iter().copied().sum())
                    .collect();
                Tensor::from_vec(&[k, n], data)
            }
            (Layer::AppendCoords, _) => {
                let (c, n, h, w) = (grad.dim(0) - 2, grad.dim(1), grad.dim(2), grad.dim(3));
                let mut data = grad.into_vec();
                data.truncate(c * n * h * w);
                Tensor::from_vec(&[c, n, h, w], data)
            }
            (layer, _) => panic!("backward through `{}` without its forward cache", layer.kind()),
        }
    }
}

fn unflatten_data<T: Scalar>(src: &[T], c: usize, n: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for ci in 0..c {
        for ni in 0..n {
            let d = &mut out[(ci * n + ni) * plane..(ci * n + ni + 1) * plane];
            for (p, v) in d.iter_mut().enumerate() {
                *v = src[(ci * plane + p) * n + ni];
            }
        }
    }
    out
}
