//! Closed-form view weights.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Divergences below this are treated as a view that agrees exactly with
/// the consensus graph.
const EXACT_AGREEMENT: f64 = 1e-12;

/// Simplex-constrained importance of each view together with the
/// smoothing exponent `r > 1` used in the fusion term `Σ_v w_v^r D_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights<T> {
    w: Vec<T>,
    r: T,
}

impl<T: Scalar> ViewWeights<T> {
    pub fn uniform(m: usize, r: T) -> Result<Self> {
        check_exponent(r)?;
        if m == 0 {
            return Err(Error::Config("need at least one view".into()));
        }
        Ok(Self {
            w: vec![T::one() / T::from_usize_lossy(m); m],
            r,
        })
    }

    /// Wraps explicit weights, which must already lie on the simplex.
    pub fn new(w: Vec<T>, r: T) -> Result<Self> {
        check_exponent(r)?;
        if w.is_empty() {
            return Err(Error::Config("need at least one view".into()));
        }
        let total: T = w.iter().copied().sum();
        if w.iter().any(|&x| !(x >= T::zero())) || (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::Validation(format!(
                "view weights must be nonnegative and sum to one, got {w:?}"
            )));
        }
        Ok(Self { w, r })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn exponent(&self) -> T {
        self.r
    }

    /// `w_v^r` for every view: the coefficients of the fusion term.
    pub fn powered(&self) -> Vec<T> {
        self.w.iter().map(|&x| x.powf(self.r)).collect()
    }

    /// `Σ_v w_v^r D_v`.
    pub fn objective(&self, divergences: &[T]) -> T {
        self.powered()
            .iter()
            .zip(divergences)
            .map(|(&p, &d)| p * d)
            .sum()
    }
}

fn check_exponent<T: Scalar>(r: T) -> Result<()> {
    if !(r > T::one()) || !r.is_finite() {
        return Err(Error::Config(format!(
            "weight exponent r must be finite and greater than 1, got {r}"
        )));
    }
    Ok(())
}

/// Minimises `Σ_v w_v^r D_v` over the simplex:
/// `w_v ∝ D_v^{1/(1−r)}`.
///
/// Views with (numerically) zero divergence take the whole mass, split
/// evenly; this is the limit of the formula since the exponent is negative.
pub fn update_weights<T: Scalar>(divergences: &[T], r: T) -> Result<ViewWeights<T>> {
    check_exponent(r)?;
    if divergences.is_empty() {
        return Err(Error::Config("need at least one view".into()));
    }
    if let Some(d) = divergences
        .iter()
        .find(|d| !(**d >= T::zero()) || !d.is_finite())
    {
        return Err(Error::Validation(format!(
            "view divergences must be finite and nonnegative, got {d}"
        )));
    }

    let tiny = T::lit(EXACT_AGREEMENT);
    let exact = divergences.iter().filter(|&&d| d < tiny).count();
    let w = if exact > 0 {
        let share = T::one() / T::from_usize_lossy(exact);
        divergences
            .iter()
            .map(|&d| if d < tiny { share } else { T::zero() })
            .collect()
    } else {
        // work in logs so that large |1/(1−r)| cannot overflow
        let expo = T::one() / (T::one() - r);
        let logs: Vec<T> = divergences.iter().map(|&d| expo * d.ln()).collect();
        let top = logs.iter().copied().fold(T::neg_infinity(), T::max);
        let raw: Vec<T> = logs.iter().map(|&l| (l - top).exp()).collect();
        let total: T = raw.iter().copied().sum();
        raw.into_iter().map(|x| x / total).collect()
    };
    Ok(ViewWeights { w, r })
}
