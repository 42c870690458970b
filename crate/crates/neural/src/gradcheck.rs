//! Central finite-difference comparison against analytic gradients.

use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::Result;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so that gradients near zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `loss` must be deterministic in the parameters. `analytic` holds its gradients
/// at `store`. Every scalar is perturbed when `stride == 1`; larger strides check
/// every `stride`-th scalar of each tensor.
pub fn check(
    store: &ParamStore<f64>,
    analytic: &[Tensor<f64>],
    mut loss: impl FnMut(&ParamStore<f64>) -> Result<f64>,
    stride: usize,
) -> Result<GradReport> {
    let mut probe = store.clone();
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for p in 0..store.len() {
        for i in (0..store.get(p).len()).step_by(stride.max(1)) {
            let orig = store.get(p).data()[i];
            probe.get_mut(p).data_mut()[i] = orig + FD_STEP;
            let up = loss(&probe)?;
            probe.get_mut(p).data_mut()[i] = orig - FD_STEP;
            let down = loss(&probe)?;
            probe.get_mut(p).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic[p].data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = store.name(p).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
