//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::{KernelError, ParameterStore, Tensor};

/// Worst-case agreement between analytic and numerical gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-parameter relative error.
    pub max_relative_error: f64,
    /// Parameter attaining it.
    pub worst_parameter: String,
    pub parameters_checked: usize,
}

/// Relative error between two gradient tensors:
/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-6)`. The floor keeps parameters with a
/// vanishing gradient from amplifying round-off.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-6)
}

/// Contracts the output with fixed pseudo-random weights. A plain sum would be
/// degenerate for outputs with structural constraints (layer-normalized rows
/// always sum to zero).
fn project(tape: &mut Tape, out: Var) -> Var {
    let shape = tape.value(out).shape.clone();
    let n = tape.value(out).data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights = tape.constant(Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    let weighted = tape.mul(out, weights);
    tape.sum(weighted)
}

fn scalar_output(store: &ParameterStore, f: &dyn Fn(&mut Tape) -> Result<Var, KernelError>) -> Result<f64, KernelError> {
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    let scalar = project(&mut tape, out);
    Ok(tape.value(scalar).data[0])
}

/// Compares the gradient of a fixed random projection of `f(params)` with central differences of
/// step `h` for every scalar of every parameter that `f` uses.
pub fn check_gradients(
    store: &ParameterStore,
    h: f64,
    f: &dyn Fn(&mut Tape) -> Result<Var, KernelError>,
) -> Result<GradCheckReport, KernelError> {
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        let scalar = project(&mut tape, out);
        tape.backward(scalar).into_params()
    };
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_parameter: String::new(), parameters_checked: 0 };
    let mut probe = store.clone();
    for (name, grad) in &analytic {
        let n = grad.data.len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let original = probe.get(name).expect("parameter").data[i];
            probe.get_mut(name).expect("parameter").data[i] = original + h;
            let up = scalar_output(&probe, f)?;
            probe.get_mut(name).expect("parameter").data[i] = original - h;
            let down = scalar_output(&probe, f)?;
            probe.get_mut(name).expect("parameter").data[i] = original;
            *slot = (up - down) / (2.0 * h);
        }
        let err = relative_error(&grad.data, &numeric);
        report.parameters_checked += 1;
        if err > report.max_relative_error || report.worst_parameter.is_empty() {
            report.max_relative_error = err.max(report.max_relative_error);
            report.worst_parameter = name.clone();
        }
    }
    Ok(report)
}
