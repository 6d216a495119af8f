use super::{AutodiffError, Tape, Tensor, Var};

/// Outcome of comparing one parameter tensor's reverse-mode gradient with
/// central finite differences.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    /// `max_j |ad_j - fd_j| / max(1e-12, max_j (|ad_j| + |fd_j|))`
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub step: f64,
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.rel_error <= self.tol)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

fn evaluate<F, E>(f: &F, params: &[Tensor]) -> Result<(f64, Vec<Tensor>), E>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: From<AutodiffError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    let value = loss.item()?;
    let grads = tape.backward(loss)?;
    Ok((value, vars.iter().map(|v| grads.wrt(v)).collect()))
}

fn loss_only<F, E>(f: &F, params: &[Tensor]) -> Result<f64, E>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: From<AutodiffError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.constant(p.clone())).collect();
    Ok(f(&tape, &vars)?.item()?)
}

/// Checks the gradient of the scalar function `f` with respect to every
/// named parameter using central differences of size `step`.
///
/// `f` must be deterministic. It receives one tape variable per parameter,
/// in the order given.
pub fn finite_diff_check<F, E>(f: F, params: &[(String, Tensor)], step: f64, tol: f64) -> Result<GradCheckReport, E>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: From<AutodiffError>,
{
    if !(step > 0.0) {
        return Err(AutodiffError::InvalidArgument { op: "finite_diff_check", reason: format!("step {step} must be positive") }.into());
    }
    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let (base, analytic) = evaluate(&f, &values)?;
    if !base.is_finite() {
        return Err(AutodiffError::NonFinite { context: "evaluating the unperturbed loss".into(), value: base }.into());
    }
    let mut checks = Vec::with_capacity(params.len());
    for (p, (name, _)) in params.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut scale = 0.0f64;
        let mut worst_index = 0;
        for j in 0..values[p].numel() {
            let original = values[p].data()[j];
            values[p].data_mut()[j] = original + step;
            let plus = loss_only(&f, &values)?;
            values[p].data_mut()[j] = original - step;
            let minus = loss_only(&f, &values)?;
            values[p].data_mut()[j] = original;
            for v in [plus, minus] {
                if !v.is_finite() {
                    return Err(AutodiffError::NonFinite { context: format!("perturbing {name}[{j}]"), value: v }.into());
                }
            }
            let fd = (plus - minus) / (2.0 * step);
            let ad = analytic[p].data()[j];
            let diff = (ad - fd).abs();
            if diff > max_abs {
                max_abs = diff;
                worst_index = j;
            }
            scale = scale.max(ad.abs() + fd.abs());
        }
        checks.push(ParamCheck {
            name: name.clone(),
            rel_error: max_abs / scale.max(1e-12),
            max_abs_error: max_abs,
            worst_index,
        });
    }
    Ok(GradCheckReport { step, tol, params: checks })
}
