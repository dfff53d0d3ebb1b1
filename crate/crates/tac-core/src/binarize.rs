//! Sign binarization, per-filter scaling, and the straight-through gradient.
//!
//! The sign convention maps 0 to +1. Filter banks carry one positive scale
//! per output channel (the mean absolute value of that filter's weights);
//! activations are binarized without a scale.

use crate::error::{Result, TacError};
use crate::tensor::{BitTensor, Tensor};

/// Bit-packed filters plus their per-output-channel scales.
///
/// `bits` is laid out `[out_channels, ...]`; `alpha[k]` scales output
/// channel `k` and is zero only when the source filter was all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedFilterBank {
    pub bits: BitTensor,
    pub alpha: Vec<f64>,
}

impl BinarizedFilterBank {
    pub fn out_channels(&self) -> usize {
        self.alpha.len()
    }

    /// Logical bits per filter row.
    pub fn row_len(&self) -> usize {
        if self.alpha.is_empty() {
            0
        } else {
            self.bits.logical_len() / self.alpha.len()
        }
    }
}

/// Binarizes elementwise: +1 where the value is >= 0, else -1.
pub fn sign_binarize(t: &Tensor) -> BitTensor {
    BitTensor::from_fn(t.shape().to_vec(), |i| t.data()[i] >= 0.0)
        .expect("shape already validated by the source tensor")
}

/// Mean absolute value of the filter's weights. Rejects empty filters.
pub fn compute_scale(filter: &Tensor) -> Result<f64> {
    if filter.is_empty() {
        return Err(TacError::InvalidArgument(
            "cannot compute a scale for an empty filter".into(),
        ));
    }
    let sum: f64 = filter.data().iter().map(|v| v.abs()).sum();
    Ok(sum / filter.len() as f64)
}

/// Clipped straight-through estimator: passes the upstream gradient where
/// `|preactivation| <= 1` and zeroes it elsewhere.
pub fn ste_backward(upstream_grad: &Tensor, preactivation: &Tensor) -> Result<Tensor> {
    if upstream_grad.shape() != preactivation.shape() {
        return Err(TacError::ShapeMismatch {
            expected: format!("{:?}", upstream_grad.shape()),
            actual: format!("{:?}", preactivation.shape()),
        });
    }
    let data = upstream_grad
        .data()
        .iter()
        .zip(preactivation.data())
        .map(|(&g, &x)| if x.abs() <= 1.0 { g } else { 0.0 })
        .collect();
    Tensor::new(upstream_grad.shape().to_vec(), data)
}

/// Binarizes a weight tensor of shape `[out_channels, ...]` into a filter
/// bank. With `scaled` set, each output channel gets the mean-|w| scale;
/// otherwise every alpha is 1.
pub fn binarize_filters(weights: &Tensor, scaled: bool) -> Result<BinarizedFilterBank> {
    let shape = weights.shape();
    if shape.is_empty() || shape[0] == 0 {
        return Err(TacError::InvalidArgument(
            "filter bank needs at least one output channel".into(),
        ));
    }
    let out_channels = shape[0];
    let row = weights.len() / out_channels;
    let alpha = if scaled {
        (0..out_channels)
            .map(|k| {
                let filter = &weights.data()[k * row..(k + 1) * row];
                filter.iter().map(|v| v.abs()).sum::<f64>() / row as f64
            })
            .collect()
    } else {
        vec![1.0; out_channels]
    };
    Ok(BinarizedFilterBank {
        bits: sign_binarize(weights),
        alpha,
    })
}
