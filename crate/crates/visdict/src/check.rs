//! Finite-difference verification of the analytic gradients.
//!
//! Every backward pass in this crate is hand-written, so the crate ships its
//! own oracle: central differences over every single parameter element,
//! compared against the analytic gradient with a relative-error criterion.
//! The acceptance suite runs this at small dimensions for both losses; it is
//! also available to callers who modify the model and want the same
//! guarantee.

use rayon::prelude::*;

use crate::error::Result;
use crate::nn::ModelParams;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst relative error observed in one tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub tensor: String,
    pub elements: usize,
    pub max_rel_err: f64,
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_tensor: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub elements: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }

    /// One line per tensor, worst first.
    pub fn summary(&self) -> String {
        let mut rows = self.per_tensor.clone();
        rows.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
        let mut s = String::new();
        for r in rows {
            s.push_str(&format!(
                "{:<22} {:>6} elems  max rel err {:.3e}\n",
                r.tensor, r.elements, r.max_rel_err
            ));
        }
        s
    }
}

/// Relative error between an analytic and a numerical derivative, guarded
/// against division by tiny magnitudes.
pub fn relative_error(analytic: f64, numerical: f64) -> f64 {
    (analytic - numerical).abs() / analytic.abs().max(numerical.abs()).max(1e-4)
}

/// Check an analytic gradient against central differences of `loss`,
/// perturbing every element of every tensor by `step`.
///
/// `loss` must be a pure function of the parameters (same value for same
/// input); the standard losses qualify as long as the batch is fixed.
pub fn finite_difference_check<F>(
    params: &ModelParams,
    analytic: &ModelParams,
    loss: F,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<f64> + Sync,
{
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut per_tensor = Vec::with_capacity(names.len());

    for (tensor_idx, name) in names.iter().enumerate() {
        let elements = params.tensors()[tensor_idx].1.len();
        let errs: Vec<f64> = (0..elements)
            .into_par_iter()
            .map(|flat| -> Result<f64> {
                let a = analytic.tensors()[tensor_idx].1.as_slice().unwrap()[flat];
                let mut up = params.clone();
                up.tensors_mut()[tensor_idx].1.as_slice_mut().unwrap()[flat] += step;
                let mut dn = params.clone();
                dn.tensors_mut()[tensor_idx].1.as_slice_mut().unwrap()[flat] -= step;
                let n = (loss(&up)? - loss(&dn)?) / (2.0 * step);
                Ok(relative_error(a, n))
            })
            .collect::<Result<Vec<f64>>>()?;
        let max_rel_err = errs.iter().cloned().fold(0.0, f64::max);
        per_tensor.push(TensorCheck {
            tensor: name.clone(),
            elements,
            max_rel_err,
        });
    }

    let max_rel_err = per_tensor.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    let elements = per_tensor.iter().map(|t| t.elements).sum();
    Ok(GradCheckReport {
        per_tensor,
        max_rel_err,
        elements,
    })
}
