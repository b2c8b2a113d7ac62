use crate::error::{Error, Result};

use super::array::Array2;
use super::tape::{Tape, Var};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

fn evaluate<F>(f: &F, params: &[Array2]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if let Some((idx, op)) = tape.first_non_finite() {
        return Err(Error::NonFinite(format!("node {idx} produced by `{op}`")));
    }
    if tape.value(loss).shape() != (1, 1) {
        return Err(Error::Dimension {
            op: "gradient_check",
            left: tape.value(loss).shape(),
            right: (1, 1),
        });
    }
    Ok((tape, vars, loss))
}

/// Compares tape gradients of a scalar-valued graph against central finite
/// differences with step `h`. Relative error is `|a-n| / max(1, |a|, |n|)`.
pub fn gradient_check<F>(f: F, params: &[Array2], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, loss) = evaluate(&f, params)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(params[pi].rows(), params[pi].cols()));
        for ei in 0..params[pi].len() {
            let original = params[pi].data()[ei];
            probe[pi].data_mut()[ei] = original + h;
            let (t_plus, _, l_plus) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[ei] = original - h;
            let (t_minus, _, l_minus) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[ei] = original;

            let numeric = (t_plus.scalar(l_plus) - t_minus.scalar(l_minus)) / (2.0 * h);
            let a = analytic.data()[ei];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, ei));
            }
        }
    }
    Ok(report)
}
