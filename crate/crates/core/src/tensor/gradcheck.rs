use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Fault, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Relative errors are `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many entries per input, sampled without
    /// replacement. `None` checks every entry.
    pub max_entries: Option<usize>,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-6,
            floor: 1e-6,
            max_entries: None,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InputReport {
    pub index: usize,
    pub max_rel_error: f64,
    pub worst_entry: usize,
    pub checked: usize,
    pub failures: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub inputs: Vec<InputReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.inputs.iter().all(|r| r.failures == 0)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor], fault: Option<Fault>) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_fault(fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(TensorError::NonScalarLoss(value.shape().to_vec()));
    }
    Ok(value.item())
}

/// Compares analytic gradients of a scalar function against central
/// differences `(f(x+h) - f(x-h)) / 2h`, entry by entry.
pub fn grad_check<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let first = evaluate(&f, inputs, opts.fault)?;
    let second = evaluate(&f, inputs, opts.fault)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::Nondeterministic((first - second).abs()));
    }

    let mut tape = Tape::with_fault(opts.fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).cloned().expect("leaf gradient"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut reports = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (index, input) in inputs.iter().enumerate() {
        let entries: Vec<usize> = match opts.max_entries {
            Some(k) if k < input.len() => {
                let mut picked = sample(&mut rng, input.len(), k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..input.len()).collect(),
        };
        let mut report = InputReport {
            index,
            max_rel_error: 0.0,
            worst_entry: 0,
            checked: entries.len(),
            failures: 0,
        };
        for &e in &entries {
            let x0 = input.data()[e];
            probe[index].data_mut()[e] = x0 + opts.step;
            let plus = evaluate(&f, &probe, opts.fault)?;
            probe[index].data_mut()[e] = x0 - opts.step;
            let minus = evaluate(&f, &probe, opts.fault)?;
            probe[index].data_mut()[e] = x0;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[index].data()[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_entry = e;
            }
            if err > opts.tolerance {
                report.failures += 1;
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        inputs: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_backward_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let w = random(&[3, 2], &mut rng);
        let report = grad_check(
            |t, v| {
                let c = t.matmul(v[0], v[1])?;
                let weighted = t.mul(c, v[2])?;
                t.sum(weighted)
            },
            &[a, b, w],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn gelu_backward_matches_differences() {
        let x = Tensor::vector(vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
        let report = grad_check(
            |t, v| {
                let y = t.gelu(v[0])?;
                t.sum(y)
            },
            &[x.clone()],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");

        let faulty = grad_check(
            |t, v| {
                let y = t.gelu(v[0])?;
                t.sum(y)
            },
            &[x],
            &GradCheckOptions {
                fault: Some(Fault::GeluBackwardSign),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!faulty.passed());
    }

    #[test]
    fn nondeterminism_is_detected() {
        use std::cell::Cell;
        let calls = Cell::new(0.0);
        let x = Tensor::scalar(1.0);
        let err = grad_check(
            |t, v| {
                calls.set(calls.get() + 1.0);
                t.scale(v[0], calls.get())
            },
            &[x],
            &GradCheckOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::Nondeterministic(_)));
    }
}
