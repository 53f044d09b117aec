use super::{Matrix, Scalar, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(1, |numeric|)` over every parameter entry.
    pub max_rel_error: f64,
    /// `(parameter index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
}

fn eval<T: Scalar, F>(f: &F, params: &[Matrix<T>]) -> Result<(T, Tape<T>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.scalar(out);
    Ok((value, tape, vars, out))
}

/// Compares tape gradients of a scalar function with central differences.
///
/// `f` receives a fresh tape with every parameter recorded as a leaf and must
/// return a 1×1 output. It must be deterministic.
pub fn check_gradients<T: Scalar, F>(f: F, params: &[Matrix<T>], epsilon: T) -> Result<GradCheck>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let (value, tape, vars, out) = eval(&f, params)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("function value {value} is not finite")));
    }
    let grads = tape.backward(out)?;
    let two_eps = epsilon + epsilon;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, params[pi].shape());
        for j in 0..params[pi].data().len() {
            let orig = params[pi].data()[j];
            probe[pi].data_mut()[j] = orig + epsilon;
            let (plus, ..) = eval(&f, &probe)?;
            probe[pi].data_mut()[j] = orig - epsilon;
            let (minus, ..) = eval(&f, &probe)?;
            probe[pi].data_mut()[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite value while perturbing parameter {pi}, element {j}"
                )));
            }
            let numeric = ((plus - minus) / two_eps).as_f64();
            let a = analytic.data()[j].as_f64();
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((pi, j));
            }
        }
    }
    Ok(report)
}
