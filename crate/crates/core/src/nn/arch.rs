//! Declarative architecture descriptions and the network builders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::broadcast::{random_site_permutation, CoordChannels};
use super::init::truncated_normal;
use super::layers::Layer;
use super::network::Network;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub conv_layers: Vec<ConvLayerSpec>,
    /// Hidden fully-connected widths between the conv stack and the posterior head.
    pub fc_widths: Vec<usize>,
}

impl EncoderSpec {
    /// Four stride-2 kernel-4 convolutions of `channels` width followed by `FC(fc)`.
    pub fn uniform(channels: usize, fc: usize) -> Self {
        EncoderSpec {
            conv_layers: vec![
                ConvLayerSpec {
                    kernel: 4,
                    stride: 2,
                    channels,
                };
                4
            ],
            fc_widths: vec![fc],
        }
    }

    /// Encoder used for FactorVAE models: channels 32, 32, 64, 64.
    pub fn factorvae() -> Self {
        let conv = |channels| ConvLayerSpec {
            kernel: 4,
            stride: 2,
            channels,
        };
        EncoderSpec {
            conv_layers: vec![conv(32), conv(32), conv(64), conv(64)],
            fc_widths: vec![256],
        }
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::uniform(64, 256)
    }
}

fn default_kernel() -> usize {
    4
}
fn default_channels() -> usize {
    64
}
fn default_conv_depth() -> usize {
    3
}
fn default_pre_mlp_width() -> usize {
    256
}
fn default_deconv_depth() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvSpec {
    /// Hidden fully-connected widths before the layer that is reshaped to a feature map.
    #[serde(default)]
    pub mlp_widths: Vec<usize>,
    #[serde(default = "default_deconv_depth")]
    pub deconv_depth: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// Channels of the reshaped map and of every hidden deconvolution.
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Optional per-layer output channels of the hidden deconvolutions
    /// (`deconv_depth - 1` entries); overrides `channels` for those layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_schedule: Option<Vec<usize>>,
}

impl Default for DeconvSpec {
    fn default() -> Self {
        DeconvSpec {
            mlp_widths: Vec::new(),
            deconv_depth: default_deconv_depth(),
            kernel: default_kernel(),
            channels: default_channels(),
            channel_schedule: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadcastSpec {
    /// Total convolutional layers after the broadcast, including the output layer.
    #[serde(default = "default_conv_depth")]
    pub conv_depth: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Fully-connected layers applied to the latent before tiling (0 to 3).
    #[serde(default)]
    pub pre_mlp_depth: usize,
    #[serde(default = "default_pre_mlp_width")]
    pub pre_mlp_width: usize,
    /// Leading layers that are stride-2 deconvolutions instead of stride-1 convolutions.
    #[serde(default)]
    pub upscale_count: usize,
    /// Randomly permute the coordinate sites once, at construction.
    #[serde(default)]
    pub shuffle_coords: bool,
}

impl Default for BroadcastSpec {
    fn default() -> Self {
        BroadcastSpec {
            conv_depth: default_conv_depth(),
            kernel: default_kernel(),
            channels: default_channels(),
            pre_mlp_depth: 0,
            pre_mlp_width: default_pre_mlp_width(),
            upscale_count: 0,
            shuffle_coords: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DecoderSpec {
    Broadcast(BroadcastSpec),
    Deconv(DeconvSpec),
    /// A deconvolutional decoder with coordinate channels appended before every layer.
    CoordConv(DeconvSpec),
}

impl DecoderSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DecoderSpec::Broadcast(_) => "broadcast",
            DecoderSpec::Deconv(_) => "deconv",
            DecoderSpec::CoordConv(_) => "coord_conv",
        }
    }
}

fn default_latent_dim() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    pub image_size: usize,
    pub channels: usize,
    #[serde(default)]
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
}

impl ArchitectureSpec {
    /// Default encoder with a 3-layer, 64-channel broadcast decoder at 64x64.
    pub fn broadcast_default(channels: usize) -> Self {
        ArchitectureSpec {
            latent_dim: 10,
            image_size: 64,
            channels,
            encoder: EncoderSpec::default(),
            decoder: DecoderSpec::Broadcast(BroadcastSpec::default()),
        }
    }

    /// Default encoder with the five-layer deconvolutional decoder at 64x64.
    pub fn deconv_default(channels: usize) -> Self {
        ArchitectureSpec {
            decoder: DecoderSpec::Deconv(DeconvSpec::default()),
            ..ArchitectureSpec::broadcast_default(channels)
        }
    }

    pub fn coordconv_default(channels: usize) -> Self {
        ArchitectureSpec {
            decoder: DecoderSpec::CoordConv(DeconvSpec::default()),
            ..ArchitectureSpec::broadcast_default(channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(config_err!("latent_dim must be positive"));
        }
        if self.channels == 0 || self.image_size == 0 {
            return Err(config_err!("image_size and channels must be positive"));
        }
        let downsample: usize = self.encoder.conv_layers.iter().map(|l| l.stride).product();
        if self.encoder.conv_layers.iter().any(|l| l.stride == 0 || l.kernel == 0 || l.channels == 0) {
            return Err(config_err!("encoder layers need positive kernel, stride and channels"));
        }
        if !self.image_size.is_multiple_of(downsample) {
            return Err(config_err!(
                "image size {} is not divisible by the encoder downsampling factor {downsample}",
                self.image_size
            ));
        }
        match &self.decoder {
            DecoderSpec::Broadcast(b) => {
                if b.conv_depth == 0 || b.kernel == 0 || b.channels == 0 {
                    return Err(config_err!("broadcast decoder needs conv_depth, kernel, channels >= 1"));
                }
                if b.upscale_count > b.conv_depth {
                    return Err(config_err!(
                        "upscale_count {} exceeds conv_depth {}",
                        b.upscale_count,
                        b.conv_depth
                    ));
                }
                if b.pre_mlp_depth > 3 {
                    return Err(config_err!("pre_mlp_depth must be in 0..=3, got {}", b.pre_mlp_depth));
                }
                if b.pre_mlp_depth > 0 && b.pre_mlp_width == 0 {
                    return Err(config_err!("pre_mlp_width must be positive"));
                }
                if !self.image_size.is_multiple_of(1 << b.upscale_count) {
                    return Err(config_err!(
                        "image size {} is not divisible by 2^{}",
                        self.image_size,
                        b.upscale_count
                    ));
                }
            }
            DecoderSpec::Deconv(d) | DecoderSpec::CoordConv(d) => {
                if d.deconv_depth == 0 || d.kernel == 0 || d.channels == 0 {
                    return Err(config_err!("deconv decoder needs deconv_depth, kernel, channels >= 1"));
                }
                if d.deconv_depth >= usize::BITS as usize || !self.image_size.is_multiple_of(1 << d.deconv_depth) {
                    return Err(config_err!(
                        "image size {} is not divisible by 2^{}",
                        self.image_size,
                        d.deconv_depth
                    ));
                }
                if let Some(s) = &d.channel_schedule {
                    if s.len() + 1 != d.deconv_depth || s.contains(&0) {
                        return Err(config_err!(
                            "channel_schedule needs {} positive entries",
                            d.deconv_depth - 1
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Spatial size at which the broadcast decoder tiles the latent.
    pub fn broadcast_resolution(&self) -> Option<usize> {
        match &self.decoder {
            DecoderSpec::Broadcast(b) => Some(self.image_size >> b.upscale_count),
            _ => None,
        }
    }
}

pub(crate) fn dense<T: Scalar, R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Layer<T> {
    Layer::Dense {
        weight: truncated_normal(&[out, inp], inp, rng),
        bias: Tensor::zeros(&[out]),
    }
}

fn conv<T: Scalar, R: Rng + ?Sized>(inp: usize, out: usize, kernel: usize, stride: usize, rng: &mut R) -> Layer<T> {
    Layer::Conv {
        weight: truncated_normal(&[out, inp, kernel, kernel], inp * kernel * kernel, rng),
        bias: Tensor::zeros(&[out]),
        stride,
    }
}

fn deconv<T: Scalar, R: Rng + ?Sized>(inp: usize, out: usize, kernel: usize, rng: &mut R) -> Layer<T> {
    Layer::Deconv {
        weight: truncated_normal(&[inp, out, kernel, kernel], inp * kernel * kernel, rng),
        bias: Tensor::zeros(&[out]),
        stride: 2,
    }
}

/// Convolutional encoder mapping `[C, N, H, W]` images to `[2k, N]` posterior parameters
/// (means in rows `0..k`, log-variances in rows `k..2k`).
pub fn build_encoder<T: Scalar, R: Rng + ?Sized>(spec: &ArchitectureSpec, rng: &mut R) -> Result<Network<T>> {
    spec.validate()?;
    let mut layers = Vec::new();
    let mut channels = spec.channels;
    let mut size = spec.image_size;
    for l in &spec.encoder.conv_layers {
        layers.push(conv(channels, l.channels, l.kernel, l.stride, rng));
        layers.push(Layer::Relu);
        channels = l.channels;
        size /= l.stride;
    }
    layers.push(Layer::Flatten);
    let mut width = channels * size * size;
    for &fc in &spec.encoder.fc_widths {
        layers.push(dense(width, fc, rng));
        layers.push(Layer::Relu);
        width = fc;
    }
    layers.push(dense(width, 2 * spec.latent_dim, rng));
    Ok(Network::new("encoder", layers))
}

/// Decoder mapping `[k, N]` latents to `[C, N, H, W]` output logits.
///
/// `coord_permutation` supplies the frozen site permutation of a shuffled-coordinate
/// broadcast decoder; when `None` and the spec asks for shuffling, one is drawn from `rng`.
pub fn build_decoder<T: Scalar, R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    coord_permutation: Option<&[usize]>,
    rng: &mut R,
) -> Result<(Network<T>, Option<Vec<usize>>)> {
    spec.validate()?;
    let k = spec.latent_dim;
    let mut layers = Vec::new();
    let mut perm_used = None;
    match &spec.decoder {
        DecoderSpec::Broadcast(b) => {
            let mut width = k;
            for i in 0..b.pre_mlp_depth {
                let out = if i + 1 == b.pre_mlp_depth { k } else { b.pre_mlp_width };
                layers.push(dense(width, out, rng));
                layers.push(Layer::Relu);
                width = out;
            }
            let res = spec.image_size >> b.upscale_count;
            let mut coords = CoordChannels::meshgrid(res, res);
            if b.shuffle_coords {
                let perm = match coord_permutation {
                    Some(p) => {
                        if p.len() != res * res {
                            return Err(config_err!(
                                "coordinate permutation has {} sites, decoder needs {}",
                                p.len(),
                                res * res
                            ));
                        }
                        p.to_vec()
                    }
                    None => random_site_permutation(res * res, rng),
                };
                coords = coords.permuted(&perm);
                perm_used = Some(perm);
            }
            layers.push(Layer::Broadcast { coords });
            let mut channels = width + 2;
            for i in 0..b.conv_depth {
                let last = i + 1 == b.conv_depth;
                let out = if last { spec.channels } else { b.channels };
                if i < b.upscale_count {
                    layers.push(deconv(channels, out, b.kernel, rng));
                } else {
                    layers.push(conv(channels, out, b.kernel, 1, rng));
                }
                if !last {
                    layers.push(Layer::Relu);
                }
                channels = out;
            }
        }
        DecoderSpec::Deconv(d) | DecoderSpec::CoordConv(d) => {
            let coordconv = matches!(spec.decoder, DecoderSpec::CoordConv(_));
            let mut width = k;
            for &w in &d.mlp_widths {
                layers.push(dense(width, w, rng));
                layers.push(Layer::Relu);
                width = w;
            }
            let res = spec.image_size >> d.deconv_depth;
            layers.push(dense(width, d.channels * res * res, rng));
            layers.push(Layer::Relu);
            layers.push(Layer::Unflatten {
                channels: d.channels,
                height: res,
                width: res,
            });
            let mut channels = d.channels;
            for i in 0..d.deconv_depth {
                let last = i + 1 == d.deconv_depth;
                let out = if last {
                    spec.channels
                } else {
                    d.channel_schedule.as_ref().map_or(d.channels, |s| s[i])
                };
                if coordconv {
                    layers.push(Layer::AppendCoords);
                    channels += 2;
                }
                layers.push(deconv(channels, out, d.kernel, rng));
                if !last {
                    layers.push(Layer::Relu);
                }
                channels = out;
            }
        }
    }
    Ok((Network::new("decoder", layers), perm_used))
}
