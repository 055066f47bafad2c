//! Quantized inference with every dense and conv dot product routed
//! through the MAC engine (or the reference oracle).

mod idx;
mod infer;
mod model;
mod tensor;

pub use idx::{parse_idx, Dataset, IMAGES_MAGIC, LABELS_MAGIC, TEST_IMAGES, TEST_LABELS};
pub use infer::{
    argmax, convert, evaluate, run_layer, run_layer_f64, run_quantized, Arithmetic, Backend, ClassCount,
    Classifier, Evaluation, QuantizedLayer,
};
pub use model::{LayerKind, LayerSpec, Model};
pub use tensor::{dequantize, quantize, Tensor};
