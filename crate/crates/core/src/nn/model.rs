//! Layer descriptions and the `SPDW` weights container.
//!
//! Byte layout, all integers little-endian `u32` unless noted:
//!
//! ```text
//! "SPDW"  version(=1)  layer_count  input_rank  input_dims[input_rank]
//! per layer:
//!     kind: u8       0 dense, 1 conv2d, 2 relu, 3 maxpool2x2, 4 flatten
//!     precision: u8  0 run default, 1 p8, 2 p16, 3 p32
//!     stride: u8     conv2d only, otherwise 1
//!     padding: u8    conv2d only, zero padding on every side
//!     tensor_count
//!     per tensor: rank  dims[rank]
//! payload: every tensor of every layer in order, row-major f32
//! ```
//!
//! Dense layers carry weights `[out, in]` and bias `[out]`; conv2d layers
//! carry weights `[out_ch, in_ch, kh, kw]` and bias `[out_ch]`. Activations
//! are `[channels, height, width]` until flattened.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::posit::PositFormat;

const MAGIC: &[u8; 4] = b"SPDW";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    Conv2d { stride: usize, padding: usize },
    Relu,
    MaxPool2x2,
    Flatten,
}

impl LayerKind {
    pub const fn is_compute(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv2d { .. })
    }

    pub const fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2x2 => "maxpool2x2",
            LayerKind::Flatten => "flatten",
        }
    }
}

/// One layer with float parameters. `precision` overrides the run default
/// for compute layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub weights: Option<Tensor<f64>>,
    pub bias: Option<Tensor<f64>>,
    pub precision: Option<PositFormat>,
}

impl LayerSpec {
    pub fn dense(weights: Tensor<f64>, bias: Tensor<f64>) -> Result<Self> {
        Self::compute(LayerKind::Dense, weights, bias)
    }

    pub fn conv2d(weights: Tensor<f64>, bias: Tensor<f64>, stride: usize, padding: usize) -> Result<Self> {
        Self::compute(LayerKind::Conv2d { stride, padding }, weights, bias)
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn maxpool2x2() -> Self {
        Self::plain(LayerKind::MaxPool2x2)
    }

    pub fn flatten() -> Self {
        Self::plain(LayerKind::Flatten)
    }

    pub fn with_precision(mut self, precision: Option<PositFormat>) -> Self {
        self.precision = precision;
        self
    }

    fn plain(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            weights: None,
            bias: None,
            precision: None,
        }
    }

    fn compute(kind: LayerKind, weights: Tensor<f64>, bias: Tensor<f64>) -> Result<Self> {
        let rank = if kind == LayerKind::Dense { 2 } else { 4 };
        if weights.shape().len() != rank || bias.shape() != [weights.shape()[0]] {
            return Err(Error::Shape(format!(
                "{} weights {:?} with bias {:?}",
                kind.name(),
                weights.shape(),
                bias.shape()
            )));
        }
        if let LayerKind::Conv2d { stride: 0, .. } = kind {
            return Err(Error::Shape("conv2d stride must be at least 1".into()));
        }
        Ok(LayerSpec {
            kind,
            weights: Some(weights),
            bias: Some(bias),
            precision: None,
        })
    }

    pub fn weights(&self) -> &Tensor<f64> {
        self.weights.as_ref().expect("compute layer")
    }

    pub fn bias(&self) -> &Tensor<f64> {
        self.bias.as_ref().expect("compute layer")
    }

    /// Shape of this layer's output for an input of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = || {
            Error::Shape(format!(
                "{} layer cannot take input of shape {input:?}",
                self.kind.name()
            ))
        };
        match self.kind {
            LayerKind::Dense => {
                let w = self.weights().shape();
                if input != [w[1]] {
                    return Err(mismatch());
                }
                Ok(vec![w[0]])
            }
            LayerKind::Conv2d { stride, padding } => {
                let w = self.weights().shape();
                let &[c, h, wd] = input else {
                    return Err(mismatch());
                };
                if c != w[1] || h + 2 * padding < w[2] || wd + 2 * padding < w[3] {
                    return Err(mismatch());
                }
                Ok(vec![
                    w[0],
                    (h + 2 * padding - w[2]) / stride + 1,
                    (wd + 2 * padding - w[3]) / stride + 1,
                ])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::MaxPool2x2 => {
                let &[c, h, w] = input else {
                    return Err(mismatch());
                };
                if h < 2 || w < 2 {
                    return Err(mismatch());
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// A layer list with the input shape it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Model {
    /// Checks that consecutive layer shapes fit together.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let model = Model { input_shape, layers };
        model.output_shape()?;
        Ok(model)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(self.input_shape.clone(), |shape, l| l.output_shape(&shape))
    }

    pub fn compute_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_compute()).count()
    }

    /// Assigns one precision per compute layer, in order; `None` keeps the
    /// run default.
    pub fn set_compute_precisions(&mut self, precisions: &[Option<PositFormat>]) -> Result<()> {
        if precisions.len() != self.compute_layers() {
            return Err(Error::Shape(format!(
                "{} precisions for {} compute layers",
                precisions.len(),
                self.compute_layers()
            )));
        }
        let compute = self.layers.iter_mut().filter(|l| l.kind.is_compute());
        for (layer, &p) in compute.zip(precisions) {
            layer.precision = p;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::parse("weights", "missing SPDW magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::parse("weights", format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let rank = r.u32()? as usize;
        let input_shape = (0..rank).map(|_| r.dim()).collect::<Result<Vec<_>>>()?;

        let mut headers = Vec::with_capacity(count.min(1024));
        for index in 0..count {
            let kind = r.u8()?;
            let precision = match r.u8()? {
                0 => None,
                1 => Some(PositFormat::P8),
                2 => Some(PositFormat::P16),
                3 => Some(PositFormat::P32),
                tag => {
                    return Err(Error::parse(
                        "weights",
                        format!("layer {index}: unknown precision tag {tag}"),
                    ))
                }
            };
            let stride = r.u8()? as usize;
            let padding = r.u8()? as usize;
            let tensors = r.u32()? as usize;
            let shapes = (0..tensors)
                .map(|_| {
                    let rank = r.u32()? as usize;
                    (0..rank).map(|_| r.dim()).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            headers.push((index, kind, precision, stride, padding, shapes));
        }

        let mut layers = Vec::with_capacity(headers.len());
        for (index, kind, precision, stride, padding, shapes) in headers {
            let mut tensors = shapes
                .into_iter()
                .map(|shape| {
                    let n: usize = shape.iter().product();
                    let data = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
                    Tensor::new(shape, data)
                })
                .collect::<Result<Vec<_>>>()?;
            let layer_err = |msg: &str| Error::parse("weights", format!("layer {index}: {msg}"));
            let layer = match kind {
                0 | 1 => {
                    if tensors.len() != 2 {
                        return Err(layer_err("compute layers need weights and bias"));
                    }
                    let bias = tensors.pop().unwrap();
                    let weights = tensors.pop().unwrap();
                    if kind == 0 {
                        LayerSpec::dense(weights, bias)?
                    } else {
                        LayerSpec::conv2d(weights, bias, stride, padding)?
                    }
                }
                2..=4 => {
                    if !tensors.is_empty() {
                        return Err(layer_err("unexpected tensors"));
                    }
                    [LayerSpec::relu(), LayerSpec::maxpool2x2(), LayerSpec::flatten()][kind as usize - 2].clone()
                }
                _ => return Err(layer_err(&format!("unknown kind {kind}"))),
            };
            layers.push(layer.with_precision(precision));
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(
                "weights",
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Model::new(input_shape, layers)
    }

    /// Serializes the model. Parameters are stored as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put(&mut out, VERSION as usize);
        put(&mut out, self.layers.len());
        put(&mut out, self.input_shape.len());
        for &d in &self.input_shape {
            put(&mut out, d);
        }
        for layer in &self.layers {
            let (kind, stride, padding) = match layer.kind {
                LayerKind::Dense => (0, 1, 0),
                LayerKind::Conv2d { stride, padding } => (1, stride, padding),
                LayerKind::Relu => (2, 1, 0),
                LayerKind::MaxPool2x2 => (3, 1, 0),
                LayerKind::Flatten => (4, 1, 0),
            };
            let tag = match layer.precision {
                None => 0,
                Some(PositFormat::P8) => 1,
                Some(PositFormat::P16) => 2,
                Some(PositFormat::P32) => 3,
            };
            out.extend_from_slice(&[kind, tag, stride as u8, padding as u8]);
            let tensors: Vec<_> = layer.weights.iter().chain(layer.bias.iter()).collect();
            put(&mut out, tensors.len());
            for t in tensors {
                put(&mut out, t.shape().len());
                for &d in t.shape() {
                    put(&mut out, d);
                }
            }
        }
        for layer in &self.layers {
            for t in layer.weights.iter().chain(layer.bias.iter()) {
                for &v in t.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        out
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::parse("weights", format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// A dimension, bounded so a corrupt header cannot request huge buffers.
    fn dim(&mut self) -> Result<usize> {
        let d = self.u32()?;
        if d == 0 || d > 1 << 24 {
            return Err(Error::parse("weights", format!("implausible dimension {d}")));
        }
        Ok(d as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
