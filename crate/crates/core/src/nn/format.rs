//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        "LNCM"
//! version      u16 (= 1)
//! input rank   u16, then rank × u32 dims
//! labels       u32 count, then per label: u32 byte length + UTF-8 bytes
//! last conv    u32 layer index, 0xFFFF_FFFF when the network has no convolution
//! layers       u32 count, then per layer a u8 kind tag and its hyperparameters:
//!                0 conv2d     u32 in, out, kernel_h, kernel_w, stride_h, stride_w, pad_h, pad_w
//!                1 relu
//!                2 maxpool2d  u32 window_h, window_w, stride_h, stride_w
//!                3 global-avg-pool
//!                4 dense      u32 inputs, outputs
//!                5 softmax
//! weights      for each conv2d/dense layer in order: weights then bias, f32
//! ```
//!
//! Any byte string produced by [`save_model`] reloads to an equal model and
//! re-serializes to the identical bytes.

use crate::error::{Error, Result};
use crate::nn::layer::{Conv2d, Dense, Layer, LayerDesc};
use crate::nn::model::ModelGraph;

pub const MODEL_MAGIC: &[u8; 4] = b"LNCM";
pub const MODEL_VERSION: u16 = 1;
const NO_CONV: u32 = u32::MAX;

pub fn save_model(model: &ModelGraph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_shape().len() as u16).to_le_bytes());
    for &d in model.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.labels().len());
    for label in model.labels() {
        put_u32(&mut out, label.len());
        out.extend_from_slice(label.as_bytes());
    }
    out.extend_from_slice(&model.last_conv().map_or(NO_CONV, |i| i as u32).to_le_bytes());
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match layer.desc() {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                out.push(0);
                for v in [
                    in_channels,
                    out_channels,
                    kernel.0,
                    kernel.1,
                    stride.0,
                    stride.1,
                    padding.0,
                    padding.1,
                ] {
                    put_u32(&mut out, v);
                }
            }
            LayerDesc::Relu => out.push(1),
            LayerDesc::MaxPool2d { window, stride } => {
                out.push(2);
                for v in [window.0, window.1, stride.0, stride.1] {
                    put_u32(&mut out, v);
                }
            }
            LayerDesc::GlobalAvgPool => out.push(3),
            LayerDesc::Dense { inputs, outputs } => {
                out.push(4);
                put_u32(&mut out, inputs);
                put_u32(&mut out, outputs);
            }
            LayerDesc::Softmax => out.push(5),
        }
    }
    for (w, b) in model.layers().iter().filter_map(Layer::params) {
        for &v in w.iter().chain(b) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<ModelGraph> {
    let mut r = Reader::new(bytes, Error::MalformedModel);
    if r.take(4)? != MODEL_MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let rank = r.u16()? as usize;
    let input_shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let n_labels = r.usize()?;
    let mut labels = Vec::with_capacity(n_labels.min(1 << 16));
    for _ in 0..n_labels {
        let len = r.usize()?;
        let raw = r.take(len)?;
        let label = std::str::from_utf8(raw).map_err(|_| malformed("label is not UTF-8"))?;
        labels.push(label.to_owned());
    }
    let last_conv = match r.u32()? {
        NO_CONV => None,
        i => Some(i as usize),
    };
    let n_layers = r.usize()?;
    let mut descs = Vec::with_capacity(n_layers.min(1 << 16));
    for i in 0..n_layers {
        let desc = match r.u8()? {
            0 => {
                let v = r.array::<8>()?;
                LayerDesc::Conv2d {
                    in_channels: v[0],
                    out_channels: v[1],
                    kernel: (v[2], v[3]),
                    stride: (v[4], v[5]),
                    padding: (v[6], v[7]),
                }
            }
            1 => LayerDesc::Relu,
            2 => {
                let v = r.array::<4>()?;
                LayerDesc::MaxPool2d {
                    window: (v[0], v[1]),
                    stride: (v[2], v[3]),
                }
            }
            3 => LayerDesc::GlobalAvgPool,
            4 => {
                let v = r.array::<2>()?;
                LayerDesc::Dense {
                    inputs: v[0],
                    outputs: v[1],
                }
            }
            5 => LayerDesc::Softmax,
            tag => return Err(malformed(&format!("layer {i} has unknown kind tag {tag}"))),
        };
        desc.validate()
            .map_err(|reason| Error::InvalidLayer { index: i, reason })?;
        descs.push(desc);
    }
    let mut layers = Vec::with_capacity(descs.len());
    for desc in descs {
        let layer = match desc {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights: r.f32s(desc.weight_len())?,
                bias: r.f32s(desc.bias_len())?,
            }),
            LayerDesc::Relu => Layer::Relu,
            LayerDesc::MaxPool2d { window, stride } => Layer::MaxPool2d { window, stride },
            LayerDesc::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerDesc::Dense { inputs, outputs } => Layer::Dense(Dense {
                inputs,
                outputs,
                weights: r.f32s(desc.weight_len())?,
                bias: r.f32s(desc.bias_len())?,
            }),
            LayerDesc::Softmax => Layer::Softmax,
        };
        layers.push(layer);
    }
    r.finish()?;
    ModelGraph::new(input_shape, labels, layers, last_conv)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn malformed(msg: &str) -> Error {
    Error::MalformedModel(msg.to_owned())
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    err: fn(String) -> Error,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], err: fn(String) -> Error) -> Self {
        Self { bytes, pos: 0, err }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let Some(end) = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) else {
            return Err((self.err)(format!("unexpected end of data at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err((self.err)(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[usize; N]> {
        let mut v = [0; N];
        for slot in &mut v {
            *slot = self.usize()?;
        }
        Ok(v)
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let Some(len) = n.checked_mul(4) else {
            return Err((self.err)("length overflow".into()));
        };
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
