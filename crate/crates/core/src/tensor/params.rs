use super::Tensor;
use crate::scalar::Scalar;

/// Batch-normalisation parameters. `gamma`/`beta` are trainable; the running
/// statistics are updated by exponential moving average during training.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> BatchNorm<T> {
    /// gamma 1, beta 0, mean 0, var 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], T::one()),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Parameters of one named layer. Convolutions followed by batch-norm carry
/// no bias, since the normalisation cancels it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub name: String,
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
    pub bn: Option<BatchNorm<T>>,
}

impl<T: Scalar> LayerParams<T> {
    /// Named tensors in storage order, as used by containers.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(w) = &self.weights {
            out.push((format!("{}.weights", self.name), w));
        }
        if let Some(b) = &self.bias {
            out.push((format!("{}.bias", self.name), b));
        }
        if let Some(bn) = &self.bn {
            out.push((format!("{}.bn_gamma", self.name), &bn.gamma));
            out.push((format!("{}.bn_beta", self.name), &bn.beta));
            out.push((format!("{}.bn_mean", self.name), &bn.mean));
            out.push((format!("{}.bn_var", self.name), &bn.var));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let name = &self.name;
        let mut out = Vec::new();
        if let Some(w) = &mut self.weights {
            out.push((format!("{name}.weights"), w));
        }
        if let Some(b) = &mut self.bias {
            out.push((format!("{name}.bias"), b));
        }
        if let Some(bn) = &mut self.bn {
            out.push((format!("{name}.bn_gamma"), &mut bn.gamma));
            out.push((format!("{name}.bn_beta"), &mut bn.beta));
            out.push((format!("{name}.bn_mean"), &mut bn.mean));
            out.push((format!("{name}.bn_var"), &mut bn.var));
        }
        out
    }

    /// Trainable tensors: weights, bias, gamma, beta (running stats excluded).
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        if let Some(w) = &mut self.weights {
            out.push(w);
        }
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        if let Some(bn) = &mut self.bn {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }
}
