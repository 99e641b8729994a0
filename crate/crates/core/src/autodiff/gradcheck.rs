//! Central finite-difference verification of tape gradients.

use serde::Serialize;

use super::{AutodiffError, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub rtol: f64,
    /// Denominator floor: the error is `|a - n| / max(|a|, |n|, abs_floor)`.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            rtol: 1e-4,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckFailure {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub param: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub per_param: Vec<ParamCheck>,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences for every coordinate of every parameter in `store` accepted by
/// `filter`. Parameter values are restored before returning.
pub fn grad_check<F, E>(
    store: &mut ParamStore,
    f: F,
    cfg: GradCheckConfig,
    filter: impl Fn(&str) -> bool,
) -> Result<GradCheckReport, E>
where
    F: for<'t> Fn(&mut Tape<'t>) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| filter(&p.name))
        .map(|(id, _)| id)
        .collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        per_param: Vec::new(),
        failures: Vec::new(),
    };
    for id in ids {
        let name = store.get(id).name.clone();
        let len = store.value(id).data().len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let original = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = original + cfg.eps;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original - cfg.eps;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * cfg.eps);
            let a = analytic.param(id).map_or(0.0, |g| g.data()[i]);
            let rel = relative_error(a, numeric, cfg.abs_floor);
            worst = worst.max(rel);
            if rel > cfg.rtol {
                report.failures.push(GradCheckFailure {
                    param: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        report.checked += len;
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push(ParamCheck {
            param: name,
            coordinates: len,
            max_rel_error: worst,
        });
    }
    Ok(report)
}
