//! Central finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StssError};

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Worst element error of any input, relative to the largest gradient
    /// magnitude of that input: `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`.
    ///
    /// Scaling per input rather than per element keeps f32 rounding in the
    /// forward pass (about 1e-5 absolute at epsilon 1e-3) from dominating
    /// elements whose true gradient is near zero.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares the backward pass of `f` against central differences.
///
/// Every input is registered as a tracked variable. A non-scalar output is
/// reduced with a fixed random projection so that every output element
/// contributes. Differences are accumulated in f64.
pub fn grad_check<F>(f: F, inputs: &[Tensor], epsilon: f32) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_subset(f, inputs, epsilon, |_, _| true)
}

/// As [`grad_check`], but only probes elements for which `select(input, element)` holds.
pub fn grad_check_subset<F, S>(f: F, inputs: &[Tensor], epsilon: f32, select: S) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    S: Fn(usize, usize) -> bool,
{
    if !(1e-4..=1e-2).contains(&epsilon) {
        return Err(StssError::Config(format!(
            "grad_check epsilon {epsilon} outside [1e-4, 1e-2]"
        )));
    }
    for t in inputs {
        if !t.all_finite() {
            return Err(StssError::NonFinite("grad_check input"));
        }
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let projection = Tensor::uniform(g.value(out).shape(), -1.0, 1.0, &mut rng);
    let loss = g.dot(out, &projection)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let evaluate = |probe: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out)
            .data()
            .iter()
            .zip(projection.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let mut diffs = Vec::new();
        let mut scale = 0.0f64;
        for ei in 0..input.len() {
            if !select(ti, ei) {
                continue;
            }
            let x = input.data()[ei];
            let (hi, lo) = (x + epsilon, x - epsilon);
            probe[ti].data_mut()[ei] = hi;
            let f_hi = evaluate(&probe)?;
            probe[ti].data_mut()[ei] = lo;
            let f_lo = evaluate(&probe)?;
            probe[ti].data_mut()[ei] = x;
            if !f_hi.is_finite() || !f_lo.is_finite() {
                return Err(StssError::NonFinite("grad_check probe"));
            }
            let numeric = (f_hi - f_lo) / (hi as f64 - lo as f64);
            let a = analytic[ti].data()[ei] as f64;
            scale = scale.max(a.abs()).max(numeric.abs());
            diffs.push((ei, (a - numeric).abs()));
        }
        report.checked += diffs.len();
        for (ei, abs) in diffs {
            report.max_abs_error = report.max_abs_error.max(abs);
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, ei);
            }
        }
    }
    Ok(report)
}
