use super::{NumericFault, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum FdError {
    #[error("function is not deterministic: repeated evaluation gave {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericFault),
}

fn evaluate<F>(f: &F, theta: &[Tensor]) -> Result<f64, FdError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = theta.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars);
    tape.check()?;
    Ok(out.item())
}

/// Compares the tape gradient of `f` at `theta` with central differences.
///
/// Returns the largest `|analytic - numeric| / max(1, |numeric|)` over all
/// coordinates of all segments.
pub fn finite_difference_check<F>(f: F, theta: &[Tensor], h: f64) -> Result<f64, FdError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let first = evaluate(&f, theta)?;
    let second = evaluate(&f, theta)?;
    if first.to_bits() != second.to_bits() {
        return Err(FdError::NonDeterministic { first, second });
    }

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = theta.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars);
    let analytic = tape.grad(out, &vars)?;

    let mut worst: f64 = 0.0;
    for (s, segment) in theta.iter().enumerate() {
        for i in 0..segment.len() {
            let mut plus = theta.to_vec();
            plus[s].data_mut()[i] += h;
            let mut minus = theta.to_vec();
            minus[s].data_mut()[i] -= h;
            let numeric = (evaluate(&f, &plus)? - evaluate(&f, &minus)?) / (2.0 * h);
            let err = (analytic[s].data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
