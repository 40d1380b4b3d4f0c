//! Central-difference gradient verification.

use super::{AutodiffError, Tape, Tensor, Var};

/// Finite-difference step on 64-bit floats.
pub const FD_STEP: f64 = 1e-5;

/// Threshold on derivative disagreement between step sizes beyond which a
/// component is treated as sitting on a kink (relu at 0, max ties, hinge
/// corners) and excluded from the comparison.
const KINK_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Component index with the largest error.
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub excluded: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Relative error used for every component: `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences at `x`.
///
/// `f` builds the function on a fresh tape given `x` as a variable leaf.
pub fn grad_check<F>(f: F, x: &Tensor, tol: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let eval = |point: &Tensor| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let v = tape.variable(point.clone());
        let out = f(&mut tape, v)?;
        let y = tape.value(out);
        if y.numel() != 1 {
            return Err(AutodiffError::NotScalar(y.shape().to_vec()));
        }
        let y = y.item();
        if !y.is_finite() {
            return Err(AutodiffError::NonFinite("grad_check objective".into()));
        }
        Ok(y)
    };

    let mut tape = Tape::new();
    let v = tape.variable(x.clone());
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = tape.grad(v).expect("variable leaf has a gradient");
    if !analytic.is_finite() {
        return Err(AutodiffError::NonFinite("analytic gradient".into()));
    }
    let f0 = tape.value(out).item();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: None,
        checked: 0,
        excluded: 0,
        tolerance: tol,
    };
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let base = x.data()[i];
        let mut at = |delta: f64| -> Result<f64, AutodiffError> {
            probe.data_mut()[i] = base + delta;
            let y = eval(&probe);
            probe.data_mut()[i] = base;
            y
        };
        let h = FD_STEP;
        let (fp, fm) = (at(h)?, at(-h)?);
        let (fp2, fm2) = (at(h / 2.0)?, at(-h / 2.0)?);
        let central = (fp - fm) / (2.0 * h);
        let central_half = (fp2 - fm2) / h;
        let one_sided_gap = ((fp - f0) - (f0 - fm)).abs() / h;
        let one_sided_gap_half = ((fp2 - f0) - (f0 - fm2)).abs() / (h / 2.0);
        let scale = 1f64.max(central.abs());
        // Smooth: the one-sided gap shrinks linearly with the step and the
        // two central estimates agree. A kink keeps the gap at O(1).
        let kink = relative_error(central, central_half) > KINK_THRESHOLD
            || (one_sided_gap > KINK_THRESHOLD * scale && one_sided_gap_half > 0.75 * one_sided_gap);
        if kink {
            report.excluded += 1;
            continue;
        }
        report.checked += 1;
        let err = relative_error(analytic.data()[i], central);
        if err > report.max_rel_err || report.worst_index.is_none() {
            report.max_rel_err = err;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
