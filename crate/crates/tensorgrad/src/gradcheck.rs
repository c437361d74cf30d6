//! Central finite-difference gradient checking.
//!
//! The numeric side only evaluates the loss; it never touches the tape's
//! backward pass.

use rand::Rng;

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare `analytic` gradients (aligned with `params`) against central
/// differences of `loss` on up to `samples` randomly chosen coordinates.
/// When the store holds fewer coordinates than `samples`, all are checked.
pub fn check<R: Rng>(
    params: &ParamStore,
    analytic: &[Tensor],
    samples: usize,
    h: f64,
    rng: &mut R,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> GradCheckReport {
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            coords.push((id, i));
        }
    }
    if coords.len() > samples {
        // partial Fisher-Yates
        for i in 0..samples {
            let j = rng.gen_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(samples);
    }

    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    for (id, index) in coords {
        let orig = work.get(id).data()[index];
        work.get_mut(id).data_mut()[index] = orig + h;
        let plus = loss(&work);
        work.get_mut(id).data_mut()[index] = orig - h;
        let minus = loss(&work);
        work.get_mut(id).data_mut()[index] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[id.index()].data()[index];
        report.checks.push(CoordCheck {
            param: params.name(id).to_owned(),
            index,
            analytic: a,
            numeric,
            rel_err: rel_err(a, numeric),
        });
    }
    report
}
