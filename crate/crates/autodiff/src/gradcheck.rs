use serde::Serialize;

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};

/// A dense input of a checked computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Input {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize) -> Self {
        Input { values, rows, cols }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input, coordinate)` pairs where the function is not differentiable.
    pub excluded: Vec<(usize, usize)>,
}

fn evaluate<F>(f: &F, inputs: &[Input]) -> Result<(Tape<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|x| tape.leaf(x.values.clone(), x.rows, x.cols))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    if tape.shape(out) != (1, 1) {
        return Err(TensorError::ShapeMismatch {
            op: "grad_check",
            left: tape.shape(out),
            right: (1, 1),
        });
    }
    if !tape.scalar(out).is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    Ok((tape, vars, out))
}

fn value_at<F>(f: &F, inputs: &mut [Input], k: usize, j: usize, x: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let saved = inputs[k].values[j];
    inputs[k].values[j] = x;
    let r = evaluate(f, inputs).map(|(t, _, o)| t.scalar(o));
    inputs[k].values[j] = saved;
    r
}

/// Compares tape gradients of a scalar computation against a fourth-order
/// central difference with step `eps`.
///
/// Coordinates whose one-sided slopes jump by more than `max(1e-3, 100 eps)`
/// (relative) are reported as excluded.
pub fn grad_check<F>(f: F, inputs: &[Input], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_steps(f, inputs, &[eps])
}

/// Like [`grad_check`], but tries every step in `steps` and keeps, per
/// coordinate, the smallest error among the steps that see no jump. A
/// coordinate is excluded only when every step sees one.
///
/// Relative errors are taken against `max(|analytic|, |numeric|, floor)` with
/// `floor = max(1e-8, 1e-7 |f|)`, well above the stencil's roundoff.
pub fn grad_check_steps<F>(f: F, inputs: &[Input], steps: &[f64]) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(&f, inputs)?;
    let f0 = tape.scalar(out);
    let grads = tape.backward(out)?;
    let floor = (1e-7 * f0.abs()).max(1e-8);
    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        excluded: Vec::new(),
    };
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for j in 0..input.values.len() {
            let x = input.values[j];
            let a = analytic.map_or(0.0, |g| g[j]);
            let mut best: Option<f64> = None;
            for &eps in steps {
                let jump_tol = (100.0 * eps).max(1e-3);
                let mut at = |d: f64| value_at(&f, &mut work, k, j, x + d);
                let (fp2, fp, fm, fm2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
                let slopes = [(fm - fm2) / eps, (f0 - fm) / eps, (fp - f0) / eps, (fp2 - fp) / eps];
                let scale = slopes.iter().fold(1.0f64, |m, s| m.max(s.abs()));
                if slopes.windows(2).any(|w| (w[1] - w[0]).abs() > jump_tol * scale) {
                    continue;
                }
                let numeric = (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * eps);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                if !rel.is_finite() {
                    return Err(TensorError::NonFinite { op: "grad_check" });
                }
                best = Some(best.map_or(rel, |b: f64| b.min(rel)));
            }
            match best {
                Some(rel) => {
                    report.max_rel_error = report.max_rel_error.max(rel);
                    report.checked += 1;
                }
                None => report.excluded.push((k, j)),
            }
        }
    }
    Ok(report)
}
