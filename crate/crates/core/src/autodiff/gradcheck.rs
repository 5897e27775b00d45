use super::{AdError, Bound, ParamSet, Tape, Tensor, Var};

/// Max relative error between the reverse-mode gradient of `f` at `point`
/// and central finite differences with step `h`.
///
/// The error per coordinate is `|g_ad - g_fd| / max(1, |g_fd|)`.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64, AdError>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>, AdError>,
{
    let mut params = ParamSet::new();
    params.insert("x", point.clone());
    grad_check_params(|_tape, b| f(b.get("x")?), &params, h)
}

/// [`grad_check`] over every scalar of a parameter set.
pub fn grad_check_params<F>(f: F, params: &ParamSet, h: f64) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>, AdError>,
{
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let loss = f(&tape, &bound)?;
    let grads = bound.grads(&tape.backward(loss)?);

    let eval = |p: &ParamSet| -> Result<f64, AdError> {
        let tape = Tape::new();
        let b = p.bind_frozen(&tape);
        Ok(f(&tape, &b)?.item())
    };

    let mut worst = 0.0_f64;
    let mut probe = params.clone();
    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let n = params.get(name)?.len();
        for i in 0..n {
            let orig = params.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let ad = grads[name].data()[i];
            worst = worst.max((ad - fd).abs() / fd.abs().max(1.0));
        }
    }
    Ok(worst)
}
