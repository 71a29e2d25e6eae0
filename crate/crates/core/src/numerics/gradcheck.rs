//! Central finite-difference checks against the tape's analytic gradients.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Tensor};

/// Denominator floor for the entrywise relative error, so entries whose true
/// gradient is zero are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// `(input index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub entries: usize,
}

fn evaluate<F>(inputs: &[Matrix], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let handles: Vec<Tensor> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = f(&mut tape, &handles)?;
    let v = tape.value(out);
    if v.shape() != (1, 1) {
        return Err(Error::Contract(format!("gradient check needs a scalar, got {:?}", v.shape())));
    }
    Ok(v[(0, 0)])
}

/// Compares the gradient of the scalar `f(inputs)` with respect to every
/// entry of every input against a central difference of width `2·step`.
pub fn check_gradients<F>(inputs: &[Matrix], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let handles: Vec<Tensor> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = f(&mut tape, &handles)?;
    tape.backward(out)?;
    let analytic: Vec<Matrix> = handles
        .iter()
        .zip(inputs)
        .map(|(&h, m)| tape.grad(h).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        entries: 0,
    };
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let original = probe[i].as_slice()[k];
            probe[i].as_mut_slice()[k] = original + step;
            let plus = evaluate(&probe, &f)?;
            probe[i].as_mut_slice()[k] = original - step;
            let minus = evaluate(&probe, &f)?;
            probe[i].as_mut_slice()[k] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.as_slice()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            if !rel.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at input {i} entry {k}")));
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, k);
            }
            report.entries += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let x = Matrix::from_rows(&[[0.5, -1.5]]);
        let ok = check_gradients(std::slice::from_ref(&x), 1e-5, |t, h| {
            let sq = t.mul(h[0], h[0])?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(ok.max_rel_err < 1e-8);
        assert_eq!(ok.entries, 2);

        // A frozen copy of x hides half of the true gradient from the tape.
        let constant_input = check_gradients(&[x], 1e-5, |t, h| {
            let frozen = t.constant(t.value(h[0]).clone());
            let sq = t.mul(frozen, h[0])?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(constant_input.max_rel_err > 0.3);
    }
}
