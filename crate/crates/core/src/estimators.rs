//! Plug-in treatment-effect estimators over a `(T, Z, Y)` contingency table.
//!
//! All estimates are exact integer ratios of the input counts, rendered to
//! floating point at the boundary. On M-structure data the *unadjusted*
//! contrast is the causal one; the Z-stratified back-door contrasts are
//! biased because Z is a collider.

use std::fmt;

use serde::Serialize;

use crate::model::ContingencyTable;
use crate::{Error, Result};

/// An exact count ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Fraction {
        Fraction { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// A difference of two conditional frequencies, kept as exact fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectEstimate {
    /// `plus.value() - minus.value()`, computed in floating point once.
    pub value: f64,
    /// The treated-side conditional frequency.
    pub plus: Fraction,
    /// The control-side conditional frequency.
    pub minus: Fraction,
}

impl EffectEstimate {
    fn from_fractions(plus: Fraction, minus: Fraction) -> EffectEstimate {
        EffectEstimate {
            value: plus.value() - minus.value(),
            plus,
            minus,
        }
    }
}

impl fmt::Display for EffectEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {} = {}", self.plus, self.minus, self.value)
    }
}

/// Unadjusted contrast `P(Y=1|T=1) - P(Y=1|T=0)`. On M-structure data this
/// is the causal average treatment effect.
pub fn ate_unadjusted(tab: &ContingencyTable) -> Result<EffectEstimate> {
    let mut arms = [Fraction::new(0, 0); 2];
    for (t, arm) in arms.iter_mut().enumerate() {
        let den = tab.arm_total(t);
        if den == 0 {
            return Err(Error::UndefinedEstimate(format!("treatment arm T={t}")));
        }
        let num = tab.count(t, 0, 1) + tab.count(t, 1, 1);
        *arm = Fraction::new(num, den);
    }
    Ok(EffectEstimate::from_fractions(arms[1], arms[0]))
}

/// Back-door-adjusted contrasts per Z stratum, returned as `(z=0, z=1)`.
/// Not causal here: Z is a collider, so stratifying on it opens the
/// `T <- U -> Z <- W -> Y` trail.
pub fn backdoor_per_stratum(tab: &ContingencyTable) -> Result<[EffectEstimate; 2]> {
    let mut strata = [EffectEstimate::from_fractions(Fraction::new(0, 1), Fraction::new(0, 1)); 2];
    for z in 0..2 {
        let mut sides = [Fraction::new(0, 0); 2];
        for (t, side) in sides.iter_mut().enumerate() {
            let den = tab.cell_total(t, z);
            if den == 0 {
                return Err(Error::UndefinedEstimate(format!("stratum (T={t}, Z={z})")));
            }
            *side = Fraction::new(tab.count(t, z, 1), den);
        }
        strata[z] = EffectEstimate::from_fractions(sides[1], sides[0]);
    }
    Ok(strata)
}

/// The Z-averaged back-door estimate `sum_z P(z) * stratum_z`. Provided for
/// completeness; it is *not* a causal quantity on M-structure data and is
/// labeled as such wherever it is printed.
pub fn backdoor_z_averaged(tab: &ContingencyTable) -> Result<f64> {
    let strata = backdoor_per_stratum(tab)?;
    let m = tab.total() as f64;
    Ok((0..2)
        .map(|z| tab.z_total(z) as f64 / m * strata[z].value)
        .sum())
}

/// Plug-in `P(T=1)` and `P(Z=z)` as exact fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaNu {
    pub kappa: Fraction,
    pub nu: [Fraction; 2],
}

pub fn empirical_kappa_nu(tab: &ContingencyTable) -> Result<KappaNu> {
    let m = tab.total();
    if m == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(KappaNu {
        kappa: Fraction::new(tab.arm_total(1), m),
        nu: [
            Fraction::new(tab.z_total(0), m),
            Fraction::new(tab.z_total(1), m),
        ],
    })
}
