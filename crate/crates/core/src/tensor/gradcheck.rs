use super::Tensor;
use crate::error::Result;

/// Outcome for one input tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub index: usize,
    pub max_rel_error: f64,
    /// Linear index of the element with the largest relative error.
    pub worst_element: usize,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradients returned by `f` with central differences
/// `(f(x+ε) − f(x−ε)) / 2ε`, element by element, for every input tensor.
///
/// `f` maps the inputs to a scalar and its gradient with respect to each input.
pub fn grad_check<F>(
    mut f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    let (_, analytic) = f(inputs)?;
    let mut probe = inputs.to_vec();
    let mut tensors = Vec::with_capacity(inputs.len());
    for (ti, grad) in analytic.iter().enumerate() {
        grad.expect_shape(inputs[ti].shape(), "grad_check analytic gradient")?;
        let mut worst = (0.0, 0);
        for e in 0..inputs[ti].len() {
            let x0 = inputs[ti].data()[e];
            probe[ti].data_mut()[e] = x0 + eps;
            let (up, _) = f(&probe)?;
            probe[ti].data_mut()[e] = x0 - eps;
            let (down, _) = f(&probe)?;
            probe[ti].data_mut()[e] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(grad.data()[e], numeric);
            if err > worst.0 {
                worst = (err, e);
            }
        }
        tensors.push(TensorCheck {
            index: ti,
            max_rel_error: worst.0,
            worst_element: worst.1,
            passed: worst.0 <= tolerance,
        });
    }
    Ok(GradCheckReport { tolerance, tensors })
}
