//! Reverse-mode record of a single forward pass.

use crate::error::{AswError, Result};
use crate::ops::{self, InstanceNormCache};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum TapeRecord<'w> {
    AvgPool { stride: usize },
    Conv { weight: &'w Tensor, in_shape: (usize, usize, usize), stride: usize, pad: usize },
    InstanceNorm(InstanceNormCache),
    LeakyRelu { input: Tensor, slope: f64 },
    AdaptivePool { in_shape: (usize, usize, usize), grid: usize },
    FullyConnected { weight: &'w Tensor },
    Sigmoid { output: Tensor },
}

impl TapeRecord<'_> {
    fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        match self {
            TapeRecord::AvgPool { stride } => ops::avg_pool2d_backward(grad, *stride),
            TapeRecord::Conv { weight, in_shape, stride, pad } => {
                ops::conv2d_backward(grad, weight, *in_shape, *stride, *pad)
            }
            TapeRecord::InstanceNorm(cache) => ops::instance_norm_backward(grad, cache),
            TapeRecord::LeakyRelu { input, slope } => ops::leaky_relu_backward(grad, input, *slope),
            TapeRecord::AdaptivePool { in_shape, grid } => ops::adaptive_avg_pool_backward(grad, *in_shape, *grid),
            TapeRecord::FullyConnected { weight } => ops::fully_connected_backward(grad, weight),
            TapeRecord::Sigmoid { output } => ops::sigmoid_backward(grad, output),
        }
    }
}

/// Layer records in forward order, borrowing the frozen weights.
#[derive(Debug, Clone)]
pub struct LayerTape<'w> {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    records: Vec<TapeRecord<'w>>,
}

impl<'w> LayerTape<'w> {
    pub fn new(input_shape: &[usize]) -> Self {
        LayerTape {
            input_shape: input_shape.to_vec(),
            output_shape: input_shape.to_vec(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TapeRecord<'w>, output_shape: &[usize]) {
        self.records.push(record);
        self.output_shape = output_shape.to_vec();
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn records(&self) -> &[TapeRecord<'w>] {
        &self.records
    }

    /// Gradient of a scalar loss with respect to the tape input, given the
    /// loss's gradient with respect to the tape output.
    pub fn backward_input_grad(&self, dl_dout: &Tensor) -> Result<Tensor> {
        self.backward_through(&self.records, dl_dout)
    }

    /// Same as [`backward_input_grad`](Self::backward_input_grad) but starting
    /// below a trailing sigmoid, i.e. `dl_dlogits` is the cotangent of the
    /// pre-activation logits.
    pub fn backward_from_logits(&self, dl_dlogits: &Tensor) -> Result<Tensor> {
        let records = match self.records.last() {
            Some(TapeRecord::Sigmoid { .. }) => &self.records[..self.records.len() - 1],
            _ => &self.records[..],
        };
        self.backward_through(records, dl_dlogits)
    }

    fn backward_through(&self, records: &[TapeRecord<'w>], cot: &Tensor) -> Result<Tensor> {
        let mut grad = cot.clone();
        for rec in records.iter().rev() {
            grad = rec.backward(&grad)?;
        }
        if grad.shape() != self.input_shape.as_slice() {
            return Err(AswError::ShapeMismatch(format!(
                "cotangent produced input gradient {:?}, expected {:?}",
                grad.shape(),
                self.input_shape
            )));
        }
        Ok(grad)
    }
}
