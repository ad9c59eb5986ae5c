use super::Tensor;
use crate::{Error, Result};

/// A named, ordered collection of parameter tensors.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;
}

impl ParamSet for Vec<Tensor> {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        self.iter().enumerate().map(|(i, t)| (format!("p{i}"), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.iter_mut()
            .enumerate()
            .map(|(i, t)| (format!("p{i}"), t))
            .collect()
    }
}

/// Denominator floor for the relative error, so that gradients which are
/// zero on both sides compare by absolute difference.
pub const REL_ERR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares `analytic` gradients against central differences
/// `(f(θ+h) − f(θ−h)) / 2h`, perturbing one element of `params` at a time.
///
/// `params` is restored exactly before returning.
pub fn finite_diff_check<P: ParamSet>(
    params: &mut P,
    analytic: &P,
    mut f: impl FnMut(&P) -> Result<f64>,
    h: f64,
    tol: f64,
) -> Result<GradReport> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {h}")));
    }
    let grads: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    if sizes.len() != grads.len() || sizes.iter().zip(&grads).any(|(s, (_, g))| *s != g.len()) {
        return Err(Error::invalid("analytic gradients do not mirror parameters"));
    }

    let mut report = Vec::with_capacity(sizes.len());
    for (p, (name, grad)) in grads.iter().enumerate() {
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..sizes[p] {
            let orig = params.tensors()[p].1.data()[i];
            set(params, p, i, orig + h);
            let plus = f(params)?;
            set(params, p, i, orig - h);
            let minus = f(params)?;
            set(params, p, i, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("finite-difference objective"));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grad[i], numeric);
            if err > check.max_rel_err || i == 0 {
                check.max_rel_err = err;
                check.worst_index = i;
                check.analytic = grad[i];
                check.numeric = numeric;
            }
        }
        report.push(check);
    }
    Ok(GradReport {
        params: report,
        tolerance: tol,
    })
}

fn set<P: ParamSet>(params: &mut P, p: usize, i: usize, value: f64) {
    params.tensors_mut()[p].1.data_mut()[i] = value;
}
