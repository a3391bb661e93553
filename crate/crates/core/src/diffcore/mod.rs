//! Differentiable array substrate: dense arrays, a reverse-mode tape,
//! the parameter store with Adam, and small dense layers.

mod array;
mod layers;
mod params;
mod tape;

pub use array::Array;
pub use layers::{Activation, Dense};
pub use params::{adam_step, AdamConfig, AdamMoments, Checkpoint, Gradients, ParamId, ParameterStore};
pub use tape::{sigmoid_scalar, Adjoints, Tape, Var};

/// Central finite-difference gradient of `f` at `x`.
///
/// Used by the gradient-check tests throughout the crate.
pub fn finite_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`, the comparison used by gradient checks.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest finite-difference disagreement found by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub checked_scalars: usize,
}

/// Compares reverse-mode gradients of a scalar loss with central differences
/// for every scalar in `store`.
pub fn check_gradients(
    store: &ParameterStore,
    eps: f64,
    floor: f64,
    loss: &dyn Fn(&mut Tape, &ParameterStore) -> crate::Result<Var>,
) -> crate::Result<GradCheck> {
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    let grads = tape.backward(l)?.into_gradients();
    let mut report = GradCheck { max_relative_error: 0.0, worst_parameter: String::new(), checked_scalars: 0 };
    for id in store.ids() {
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.value(id).len()]);
        let mut probe = store.clone();
        let mut failure = None;
        let mut f = |v: &[f64]| {
            probe.value_mut(id).data_mut().copy_from_slice(v);
            let mut tape = Tape::new();
            match loss(&mut tape, &probe) {
                Ok(l) => tape.data(l)[0],
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let numeric = finite_difference(&mut f, store.value(id).data(), eps);
        if let Some(e) = failure {
            return Err(e);
        }
        for (a, b) in analytic.iter().zip(&numeric) {
            let err = relative_error(*a, *b, floor);
            report.checked_scalars += 1;
            if !(err <= report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_parameter = store.name(id).to_string();
            }
        }
    }
    Ok(report)
}
