//! Central finite-difference verification of analytic gradients.

use crate::neural::mlp::ParamTensor;
use crate::Result;

/// Outcome of a gradient check over every coordinate of every tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative disagreement found.
    pub max_rel_err: f64,
    /// `name[row,col]` of the worst coordinate.
    pub worst_coordinate: String,
    /// Total coordinates checked.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compare the analytic gradients stored in `tensors[i].grad` against
/// central finite differences of `loss` with step `h`.
///
/// `loss` must be a pure function of the tensor values (any stochastic parts
/// — reparameterization noise, minibatch order — must be frozen by the
/// caller). The relative error for a coordinate with analytic value `a` and
/// numeric value `n` is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(tensors: &mut [ParamTensor], mut loss: F, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[ParamTensor]) -> Result<f64>,
{
    let mut max_rel_err = 0.0_f64;
    let mut worst = String::from("-");
    let mut checked = 0usize;
    for ti in 0..tensors.len() {
        let dim = tensors[ti].values.raw_dim();
        for r in 0..dim[0] {
            for c in 0..dim[1] {
                let orig = tensors[ti].values[[r, c]];
                tensors[ti].values[[r, c]] = orig + h;
                let plus = loss(tensors)?;
                tensors[ti].values[[r, c]] = orig - h;
                let minus = loss(tensors)?;
                tensors[ti].values[[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = tensors[ti].grad[[r, c]];
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-8);
                if rel > max_rel_err {
                    max_rel_err = rel;
                    worst = format!("{}[{r},{c}]", tensors[ti].name);
                }
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_coordinate: worst,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_loss_is_exact() {
        // L = sum(c .* w): analytic gradient is c
        let coeff = array![[2.0, -3.0], [0.5, 1.0]];
        let mut p = ParamTensor::new("w", array![[0.1, 0.2], [0.3, 0.4]]);
        p.grad.assign(&coeff);
        let c = coeff.clone();
        let report = grad_check(
            std::slice::from_mut(&mut p),
            move |ts| Ok((&ts[0].values * &c).sum()),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut p = ParamTensor::new("w", array![[1.0, 2.0]]);
        p.grad.assign(&array![[2.0, 4.0]]);
        p.grad[[0, 1]] += 0.5; // deliberate corruption
        let report = grad_check(
            std::slice::from_mut(&mut p),
            |ts| Ok(ts[0].values.iter().map(|v| v * v).sum()),
            1e-5,
        )
        .unwrap();
        assert!(!report.passes(1e-4));
        assert_eq!(report.worst_coordinate, "w[0,1]");
    }

    #[test]
    fn quadratic_loss_within_tolerance() {
        let mut p = ParamTensor::new("w", array![[0.7, -1.3, 0.2]]);
        let g = p.values.mapv(|v| 2.0 * v);
        p.grad.assign(&g);
        let report = grad_check(
            std::slice::from_mut(&mut p),
            |ts| Ok(ts[0].values.iter().map(|v| v * v).sum()),
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-6));
    }
}
