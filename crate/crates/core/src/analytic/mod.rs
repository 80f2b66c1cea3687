//! Closed-form objects of the analytic solution.
//!
//! * [`transform`]: `E(q,v)`, `F(u,v)`, `F(s;0,v)` and the batch transform;
//! * [`mean`]: the `s = 0` expansion `E^{(1)}(q,v)`, `F^{(1)}(ρ+q,v)` and the
//!   mean batch sojourn;
//! * [`inversion`]: Gaver–Stehfest inversion of the transform into a CCDF;
//! * [`pde`]: finite-difference residual of the functional equation for `F`.

pub mod inversion;
pub mod mean;
pub mod pde;
pub mod transform;

use std::cell::RefCell;

use serde::Serialize;

use crate::error::{Error, Result};

pub use inversion::{ccdf, ccdf_with_order, CcdfCurve, DEFAULT_GS_ORDER, INVERSION_SLACK};
pub use mean::{e1_qv, f1_at_rho_plus_q, mean_batch_sojourn, MeanPipeline};
pub use pde::{pde_residual, PdeResidual, DEFAULT_PDE_STEP};
pub use transform::{batch_lst, batch_lst_analytic, e_qv, f_at_zero, f_uv, AuxPolynomials};

/// A value of a Laplace–Stieltjes transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformValue {
    pub s: f64,
    pub value: f64,
}

/// Carries the first error raised inside a quadrature integrand, which can
/// only return `f64`. The failing node returns NaN, and [`ErrorSlot::finish`]
/// reports the stored error in place of the quadrature's own.
#[derive(Default)]
pub(crate) struct ErrorSlot(RefCell<Option<Error>>);

impl ErrorSlot {
    pub fn value(&self, r: Result<f64>) -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut slot = self.0.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                f64::NAN
            }
        }
    }

    pub fn finish<T>(&self, r: Result<T>) -> Result<T> {
        match self.0.borrow_mut().take() {
            Some(e) => Err(e),
            None => r,
        }
    }
}
