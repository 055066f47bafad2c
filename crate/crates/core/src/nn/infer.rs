use rayon::prelude::*;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::nn::idx::Dataset;
use crate::nn::model::{LayerKind, LayerSpec, Model};
use crate::nn::tensor::{quantize, Tensor};
use crate::posit::{PositFormat, PositWord};
use crate::reference::{quantize_f64, ref_mac};
use crate::simd::{LaneMask, Mode, SimdWord};

/// Where dense and conv dot products are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    /// The SIMD MAC engine, batching independent outputs across lanes.
    Engine,
    /// `ref_mac` on each output separately.
    Reference,
}

/// A layer with its parameters rounded to the precision it computes in.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub kind: LayerKind,
    /// `None` for layers that only move or select values.
    pub format: Option<PositFormat>,
    pub weights: Option<Tensor<PositWord>>,
    pub bias: Option<Tensor<PositWord>>,
}

impl QuantizedLayer {
    pub fn new(layer: &LayerSpec, default: PositFormat) -> Self {
        if !layer.kind.is_compute() {
            return QuantizedLayer {
                kind: layer.kind,
                format: None,
                weights: None,
                bias: None,
            };
        }
        let format = layer.precision.unwrap_or(default);
        QuantizedLayer {
            kind: layer.kind,
            format: Some(format),
            weights: Some(quantize(layer.weights(), format)),
            bias: Some(quantize(layer.bias(), format)),
        }
    }
}

/// Rounds `w` into `format`; values already in `format` pass through.
pub fn convert(w: PositWord, format: PositFormat) -> PositWord {
    if w.format() == format {
        w
    } else if w.is_nar() {
        PositWord::nar(format)
    } else {
        quantize_f64(w.to_f64(), format)
    }
}

/// Quantizes the layer's parameters (run default `default` unless the layer
/// carries its own precision) and applies it to `x`.
pub fn run_layer(
    layer: &LayerSpec,
    x: &Tensor<PositWord>,
    default: PositFormat,
    backend: Backend,
) -> Result<Tensor<PositWord>> {
    run_quantized(&QuantizedLayer::new(layer, default), x, backend)
}

pub fn run_quantized(layer: &QuantizedLayer, x: &Tensor<PositWord>, backend: Backend) -> Result<Tensor<PositWord>> {
    match layer.kind {
        LayerKind::Dense | LayerKind::Conv2d { .. } => {
            let format = layer.format.expect("compute layer");
            let weights = layer.weights.as_ref().expect("compute layer");
            let bias = layer.bias.as_ref().expect("compute layer");
            let plan = DotPlan::new(layer.kind, weights.shape(), x.shape())?;
            let input: Vec<PositWord> = x.data().iter().map(|&w| convert(w, format)).collect();
            let zero = PositWord::zero(format);
            let pair = |o: usize, t: usize| match plan.input_index(o, t) {
                Some(i) => (weights.data()[plan.weight_index(o, t)], input[i]),
                None => (zero, zero),
            };
            let bias_of = |o: usize| bias.data()[plan.channel(o)];
            let out = match backend {
                Backend::Engine => dot_engine(format, plan.outputs, plan.depth, bias_of, pair)?,
                Backend::Reference => dot_reference(format, plan.outputs, plan.depth, bias_of, pair),
            };
            Tensor::new(plan.out_shape, out)
        }
        kind => {
            let shape = LayerSpec {
                kind,
                weights: None,
                bias: None,
                precision: None,
            }
            .output_shape(x.shape())?;
            let zero = PositWord::zero(x.data().first().map_or(PositFormat::P8, |w| w.format()));
            Ok(move_select(kind, x, shape, zero, |a, b| {
                // Exactly representable, so re-quantizing the chosen value
                // returns the same word.
                if a.is_nar() || b.is_nar() {
                    PositWord::nar(a.format())
                } else if b.to_f64() > a.to_f64() {
                    b
                } else {
                    a
                }
            }))
        }
    }
}

/// Float64 counterpart of [`run_layer`], used for the baseline.
pub fn run_layer_f64(layer: &LayerSpec, x: &Tensor<f64>) -> Result<Tensor<f64>> {
    match layer.kind {
        LayerKind::Dense | LayerKind::Conv2d { .. } => {
            let (weights, bias) = (layer.weights(), layer.bias());
            let plan = DotPlan::new(layer.kind, weights.shape(), x.shape())?;
            let out = (0..plan.outputs)
                .map(|o| {
                    (0..plan.depth).fold(bias.data()[plan.channel(o)], |acc, t| match plan.input_index(o, t) {
                        Some(i) => acc + weights.data()[plan.weight_index(o, t)] * x.data()[i],
                        None => acc,
                    })
                })
                .collect();
            Tensor::new(plan.out_shape, out)
        }
        kind => {
            let shape = layer.output_shape(x.shape())?;
            Ok(move_select(kind, x, shape, 0.0, |a, b| if b > a || a.is_nan() { b } else { a }))
        }
    }
}

/// Relu, max pooling and flatten, which only pick or move elements.
/// `max` chooses the larger of two elements.
fn move_select<T: Copy>(
    kind: LayerKind,
    x: &Tensor<T>,
    shape: Vec<usize>,
    zero: T,
    max: impl Fn(T, T) -> T,
) -> Tensor<T> {
    let data = match kind {
        LayerKind::Relu => x.data().iter().map(|&v| max(v, zero)).collect(),
        LayerKind::MaxPool2x2 => {
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let (c, oh, ow) = (shape[0], shape[1], shape[2]);
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let at = |di: usize, dj: usize| x.data()[(ch * h + 2 * i + di) * w + 2 * j + dj];
                        out.push(max(max(at(0, 0), at(0, 1)), max(at(1, 0), at(1, 1))));
                    }
                }
            }
            out
        }
        _ => x.data().to_vec(),
    };
    Tensor::new(shape, data).expect("shape computed from the input")
}

/// Index arithmetic shared by dense and conv layers: output `o` is the dot
/// product over `depth` terms `t`.
struct DotPlan {
    out_shape: Vec<usize>,
    outputs: usize,
    depth: usize,
    conv: Option<ConvGeometry>,
}

struct ConvGeometry {
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
}

impl DotPlan {
    fn new(kind: LayerKind, weights: &[usize], input: &[usize]) -> Result<Self> {
        let probe = LayerSpec {
            kind,
            weights: Some(Tensor::new(weights.to_vec(), vec![0.0; weights.iter().product()])?),
            bias: Some(Tensor::new(vec![weights[0]], vec![0.0; weights[0]])?),
            precision: None,
        };
        let out_shape = probe.output_shape(input)?;
        let outputs = out_shape.iter().product();
        let depth = weights[1..].iter().product();
        let conv = match kind {
            LayerKind::Conv2d { stride, padding } => Some(ConvGeometry {
                stride,
                padding,
                in_h: input[1],
                in_w: input[2],
                kh: weights[2],
                kw: weights[3],
                out_h: out_shape[1],
                out_w: out_shape[2],
            }),
            _ => None,
        };
        Ok(DotPlan {
            out_shape,
            outputs,
            depth,
            conv,
        })
    }

    /// Output channel, which selects the weight row and bias.
    fn channel(&self, o: usize) -> usize {
        match &self.conv {
            Some(g) => o / (g.out_h * g.out_w),
            None => o,
        }
    }

    fn weight_index(&self, o: usize, t: usize) -> usize {
        self.channel(o) * self.depth + t
    }

    /// Input element for term `t` of output `o`, `None` inside the padding.
    fn input_index(&self, o: usize, t: usize) -> Option<usize> {
        let Some(g) = &self.conv else {
            return Some(t);
        };
        let pos = o % (g.out_h * g.out_w);
        let (oi, oj) = (pos / g.out_w, pos % g.out_w);
        let ci = t / (g.kh * g.kw);
        let (ki, kj) = ((t / g.kw) % g.kh, t % g.kw);
        let row = (oi * g.stride + ki).checked_sub(g.padding)?;
        let col = (oj * g.stride + kj).checked_sub(g.padding)?;
        (row < g.in_h && col < g.in_w).then(|| (ci * g.in_h + row) * g.in_w + col)
    }
}

/// Every output is one quire accumulation seeded with `bias * 1`. Outputs
/// are batched across the lanes of the engine mode for `format`.
fn dot_engine(
    format: PositFormat,
    outputs: usize,
    depth: usize,
    bias: impl Fn(usize) -> PositWord,
    pair: impl Fn(usize, usize) -> (PositWord, PositWord),
) -> Result<Vec<PositWord>> {
    let mode = Mode::for_format(format);
    let lanes = mode.lanes();
    let one = PositWord::one(format).bits();
    let mut engine = Engine::new(mode);
    let mut out = Vec::with_capacity(outputs);
    for first in (0..outputs).step_by(lanes) {
        let active = lanes.min(outputs - first);
        let mask = LaneMask::new((1 << active) - 1, mode)?;
        engine.reset();
        let (mut a, mut b) = (SimdWord::ZERO, SimdWord::ZERO);
        for lane in 0..active {
            a = a.with_lane(mode, lane, bias(first + lane).bits());
            b = b.with_lane(mode, lane, one);
        }
        engine.accumulate(a, b, mask)?;
        for t in 0..depth {
            let (mut a, mut b) = (SimdWord::ZERO, SimdWord::ZERO);
            for lane in 0..active {
                let (w, x) = pair(first + lane, t);
                a = a.with_lane(mode, lane, w.bits());
                b = b.with_lane(mode, lane, x.bits());
            }
            engine.accumulate(a, b, mask)?;
        }
        let result = engine.readout().words(mode);
        out.extend_from_slice(&result[..active]);
    }
    Ok(out)
}

fn dot_reference(
    format: PositFormat,
    outputs: usize,
    depth: usize,
    bias: impl Fn(usize) -> PositWord,
    pair: impl Fn(usize, usize) -> (PositWord, PositWord),
) -> Vec<PositWord> {
    let one = PositWord::one(format);
    (0..outputs)
        .map(|o| {
            let pairs: Vec<_> = std::iter::once((bias(o), one))
                .chain((0..depth).map(|t| pair(o, t)))
                .collect();
            ref_mac(&pairs, format)
        })
        .collect()
}

/// How a model is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arithmetic {
    Float64,
    /// Weights and activations in posits; `default` applies to compute
    /// layers without their own precision.
    Posit { default: PositFormat, backend: Backend },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassCount {
    pub total: usize,
    pub correct: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Evaluation {
    pub samples: usize,
    pub correct: usize,
    pub per_class: Vec<ClassCount>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.samples as f64
    }
}

/// A model ready to classify images: parameters quantized once, pixels
/// mapped through a table.
pub struct Classifier {
    arithmetic: Arithmetic,
    model: Model,
    layers: Vec<QuantizedLayer>,
    pixels: Vec<PositWord>,
}

impl Classifier {
    pub fn new(model: &Model, arithmetic: Arithmetic) -> Self {
        let (layers, pixels) = match arithmetic {
            Arithmetic::Float64 => (Vec::new(), Vec::new()),
            Arithmetic::Posit { default, .. } => {
                let layers: Vec<_> = model.layers.iter().map(|l| QuantizedLayer::new(l, default)).collect();
                let input = layers.iter().find_map(|l| l.format).unwrap_or(default);
                let pixels = (0..=255u8).map(|p| quantize_f64(pixel(p), input)).collect();
                (layers, pixels)
            }
        };
        Classifier {
            arithmetic,
            model: model.clone(),
            layers,
            pixels,
        }
    }

    /// Output scores for one image.
    pub fn scores(&self, image: &[u8]) -> Result<Vec<f64>> {
        let shape = self.model.input_shape.clone();
        match self.arithmetic {
            Arithmetic::Float64 => {
                let mut x = Tensor::new(shape, image.iter().map(|&p| pixel(p)).collect())?;
                for layer in &self.model.layers {
                    x = run_layer_f64(layer, &x)?;
                }
                Ok(x.into_data())
            }
            Arithmetic::Posit { backend, .. } => {
                let mut x = Tensor::new(shape, image.iter().map(|&p| self.pixels[p as usize]).collect())?;
                for layer in &self.layers {
                    x = run_quantized(layer, &x, backend)?;
                }
                Ok(x.data().iter().map(|w| w.to_f64()).collect())
            }
        }
    }

    pub fn classify(&self, image: &[u8]) -> Result<usize> {
        Ok(argmax(&self.scores(image)?))
    }
}

fn pixel(p: u8) -> f64 {
    p as f64 / 255.0
}

/// Index of the largest score, lowest index on ties. NaN (NaR) never wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy over the first `n` samples. Samples run in parallel and
/// the counts are merged in sample order, so results are deterministic.
pub fn evaluate(model: &Model, data: &Dataset, n: usize, arithmetic: Arithmetic) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if n > data.len() {
        return Err(Error::Shape(format!("asked for {n} samples, dataset has {}", data.len())));
    }
    if model.input_shape != [1, data.rows, data.cols] {
        return Err(Error::Shape(format!(
            "model expects input {:?}, images are 1x{}x{}",
            model.input_shape, data.rows, data.cols
        )));
    }
    let classes = model.output_shape()?.iter().product::<usize>();
    let classifier = Classifier::new(model, arithmetic);
    let predictions = (0..n)
        .into_par_iter()
        .map(|i| classifier.classify(data.image(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut per_class = vec![ClassCount::default(); classes];
    let mut correct = 0;
    for (i, predicted) in predictions.into_iter().enumerate() {
        let label = data.label(i) as usize;
        if label >= classes {
            return Err(Error::Shape(format!("label {label} but the model has {classes} outputs")));
        }
        per_class[label].total += 1;
        if predicted == label {
            per_class[label].correct += 1;
            correct += 1;
        }
    }
    Ok(Evaluation {
        samples: n,
        correct,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p8(bits: u32) -> PositWord {
        PositWord::new(bits, PositFormat::P8).unwrap()
    }

    fn dense(w: Vec<f64>, rows: usize, cols: usize, bias: Vec<f64>) -> LayerSpec {
        LayerSpec::dense(Tensor::new(vec![rows, cols], w).unwrap(), Tensor::new(vec![rows], bias).unwrap()).unwrap()
    }

    #[test]
    fn small_dense_sum() {
        let layer = dense(vec![1.0, 1.0], 1, 2, vec![0.0]);
        let x = Tensor::new(vec![2], vec![p8(0x60), p8(0x68)]).unwrap();
        for backend in [Backend::Engine, Backend::Reference] {
            let y = run_layer(&layer, &x, PositFormat::P8, backend).unwrap();
            assert_eq!(y.data(), &[p8(0x72)]);
        }
    }

    #[test]
    fn identity_dense_returns_input() {
        let n = 6;
        let w = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let layer = dense(w, n, n, vec![0.0; n]);
        let values = Tensor::new(vec![n], vec![0.3, -1.7, 5.0, 1e-3, 0.0, -64.0]).unwrap();
        for format in PositFormat::ALL {
            let x = quantize(&values, format);
            let y = run_layer(&layer, &x, format, Backend::Engine).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn relu_clears_negatives() {
        let x = Tensor::new(vec![256], (0..256).map(p8).collect()).unwrap();
        let y = run_layer(&LayerSpec::relu(), &x, PositFormat::P8, Backend::Engine).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            if a.is_nar() {
                assert!(b.is_nar());
            } else if a.is_negative() {
                assert!(b.is_zero());
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn conv_matches_float_when_exact() {
        let conv = LayerSpec::conv2d(
            Tensor::new(vec![2, 1, 2, 2], vec![1.0, 0.5, -1.0, 2.0, 0.25, 0.25, 0.25, 0.25]).unwrap(),
            Tensor::new(vec![2], vec![0.5, -1.0]).unwrap(),
            1,
            1,
        )
        .unwrap();
        let xs = Tensor::new(vec![1, 3, 3], vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 4.0, 0.25, -2.0]).unwrap();
        let exact = run_layer_f64(&conv, &xs).unwrap();
        assert_eq!(exact.shape(), &[2, 4, 4]);
        let x = quantize(&xs, PositFormat::P16);
        let via_engine = run_layer(&conv, &x, PositFormat::P16, Backend::Engine).unwrap();
        let via_ref = run_layer(&conv, &x, PositFormat::P16, Backend::Reference).unwrap();
        assert_eq!(via_engine, via_ref);
        assert_eq!(via_engine, quantize(&exact, PositFormat::P16));
    }

    #[test]
    fn maxpool_picks_largest() {
        let xs = Tensor::new(vec![1, 2, 3], vec![1.0, -2.0, 9.0, 3.0, 0.5, 9.0]).unwrap();
        let y = run_layer_f64(&LayerSpec::maxpool2x2(), &xs).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let x = quantize(&xs, PositFormat::P8);
        let y = run_layer(&LayerSpec::maxpool2x2(), &x, PositFormat::P8, Backend::Engine).unwrap();
        assert_eq!(y.data(), &[quantize_f64(3.0, PositFormat::P8)]);
    }

    #[test]
    fn mixed_precision_converts_between_layers() {
        let a = dense(vec![0.1, 0.2], 1, 2, vec![0.0]).with_precision(Some(PositFormat::P32));
        let x = quantize(&Tensor::new(vec![2], vec![1.0, 1.0]).unwrap(), PositFormat::P8);
        let y = run_layer(&a, &x, PositFormat::P8, Backend::Engine).unwrap();
        assert_eq!(y.data()[0].format(), PositFormat::P32);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
        assert_eq!(argmax(&[f64::NAN, -1.0]), 1);
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let model = Model::new(
            vec![1, 2, 2],
            vec![LayerSpec::flatten(), dense(vec![0.0; 40], 10, 4, vec![0.0; 10])],
        )
        .unwrap();
        let labels = vec![0, 3, 0, 7, 9];
        let data = Dataset::new(2, 2, vec![200; 20], labels).unwrap();
        let arithmetic = Arithmetic::Posit {
            default: PositFormat::P8,
            backend: Backend::Engine,
        };
        let e = evaluate(&model, &data, 5, arithmetic).unwrap();
        assert_eq!(e.correct, 2);
        assert_eq!(e.per_class[0], ClassCount { total: 2, correct: 2 });
        assert!(matches!(evaluate(&model, &data, 0, arithmetic), Err(Error::EmptyEvaluation)));
    }
}
