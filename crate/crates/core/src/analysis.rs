//! Post-processing: run classification, critical amplitude bisection,
//! blow-up scaling-law fit and convergence orders.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::integrate::{self, RunRecord, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    /// `w` stayed positive at the origin and its nearest node.
    Subcritical,
    /// `w` crossed zero at the origin or at its nearest node on the way to -1.
    Flip,
    /// The run stopped early (projection failure or non-finite values).
    Failed,
}

impl Classification {
    /// Failed runs are treated as supercritical for bracketing.
    pub fn is_supercritical(self) -> bool {
        !matches!(self, Classification::Subcritical)
    }
}

pub fn classify_run(record: &RunRecord) -> Classification {
    classify(record.status, &record.origin_w, &record.core_w)
}

/// Classification from the run status and the `w` series at the origin and at
/// the node one spacing away.
///
/// The Rattle projection cannot move the origin node itself off `w = 1` at
/// CFL 0.2: there `U = (0, 0, w)`, `w_t = 0`, and the unconstrained update
/// `1 + dt^2/2 Δ_h w` stays above 0.78. A collapsing bubble instead drives the
/// ring of nodes around the origin to -1 while the origin stays pinned.
pub fn classify(status: RunStatus, origin_w: &[f64], core_w: &[f64]) -> Classification {
    if status != RunStatus::Completed {
        Classification::Failed
    } else if origin_w.iter().chain(core_w).any(|&w| w < 0.0) {
        Classification::Flip
    } else {
        Classification::Subcritical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearchResult {
    /// Smallest amplitude observed to flip or fail.
    pub a_star: f64,
    pub bracket: (f64, f64),
    /// Bisection evaluations, not counting the two bracket checks.
    pub runs: usize,
    /// Every evaluated amplitude in evaluation order, endpoints first.
    pub classifications: Vec<(f64, Classification)>,
    /// True if any supercritical decision came from a failed run.
    pub used_failed_runs: bool,
}

/// Bisection for the amplitude where the classification changes.
///
/// `classify` must report `Subcritical` at `a_lo` and a supercritical class
/// at `a_hi`. The two endpoint checks are independent and run concurrently
/// when the `parallel` feature is enabled.
pub fn critical_search<F>(a_lo: f64, a_hi: f64, tol_a: f64, classify: F) -> Result<CriticalSearchResult>
where
    F: Fn(f64) -> Result<Classification> + Sync,
{
    if !(tol_a > 0.0) {
        return Err(Error::Bracket(format!("tolerance must be positive, got {tol_a}")));
    }
    if !(a_lo < a_hi) {
        return Err(Error::Bracket(format!("need a_lo < a_hi, got [{a_lo}, {a_hi}]")));
    }
    #[cfg(feature = "parallel")]
    let (c_lo, c_hi) = rayon::join(|| classify(a_lo), || classify(a_hi));
    #[cfg(not(feature = "parallel"))]
    let (c_lo, c_hi) = (classify(a_lo), classify(a_hi));
    let (c_lo, c_hi) = (c_lo?, c_hi?);
    if c_lo != Classification::Subcritical {
        return Err(Error::Bracket(format!("lower end {a_lo} is {c_lo:?}, expected subcritical")));
    }
    if !c_hi.is_supercritical() {
        return Err(Error::Bracket(format!("upper end {a_hi} is subcritical")));
    }
    let mut used_failed_runs = c_hi == Classification::Failed;
    let mut classifications = vec![(a_lo, c_lo), (a_hi, c_hi)];
    let (mut lo, mut hi) = (a_lo, a_hi);
    let mut runs = 0;
    while hi - lo > tol_a {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = classify(mid)?;
        runs += 1;
        classifications.push((mid, c));
        if c.is_supercritical() {
            used_failed_runs |= c == Classification::Failed;
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalSearchResult {
        a_star: hi,
        bracket: (lo, hi),
        runs,
        classifications,
        used_failed_runs,
    })
}

/// Critical search where each candidate is a full evolution of `base` with
/// the amplitude replaced.
pub fn critical_search_runs(base: &RunConfig, a_lo: f64, a_hi: f64, tol_a: f64) -> Result<CriticalSearchResult> {
    let grid = base.grid()?;
    let mut base = base.clone();
    // the classifier only needs the series up to the first flip
    base.energy_correction = false;
    base.stop_on_flip = true;
    base.snapshot_times.clear();
    critical_search(a_lo, a_hi, tol_a, |a| {
        let mut cfg = base.clone();
        cfg.amplitude = a;
        let record = integrate::evolve(&cfg, &grid)?;
        Ok(classify_run(&record))
    })
}

/// Prefactor of the blow-up scaling law.
pub const SCALING_PREFACTOR: f64 = 1.04 / E;

/// `s(t) = (1.04 / e) (T - t) exp(-sqrt(-ln(T - t) + b))`, or `None` outside
/// the model's domain.
pub fn scaling_model(t: f64, blowup_time: f64, b: f64) -> Option<f64> {
    let d = blowup_time - t;
    if !(d > 0.0) {
        return None;
    }
    let arg = -d.ln() + b;
    if !(arg >= 0.0) {
        return None;
    }
    Some(SCALING_PREFACTOR * d * (-arg.sqrt()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub blowup_time: f64,
    pub b: f64,
    /// Sum of squared residuals.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const FIT_MAX_ITER: usize = 500;
const FIT_STEP_TOL: f64 = 1e-12;
const FIT_REL_RESIDUAL_TOL: f64 = 1e-14;

/// Least-squares fit of [`scaling_model`] to the `(t, s)` samples inside
/// `window`, over `(T, b)`, with a Levenberg-Marquardt damped Gauss-Newton
/// iteration. Steps leaving the model's domain are rejected and the damping
/// increased.
pub fn fit_scaling(series: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let (t_a, t_b) = window;
    if !(t_a < t_b) {
        return Err(Error::Fit(format!("empty window [{t_a}, {t_b}]")));
    }
    let data: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_a && t <= t_b)
        .collect();
    if data.len() < 5 {
        return Err(Error::Fit(format!("need at least 5 points in the window, got {}", data.len())));
    }
    if let Some(&(t, s)) = data.iter().find(|&&(t, s)| !t.is_finite() || !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Fit(format!(
            "sample ({t}, {s}) cannot be represented by the model for any admissible T"
        )));
    }
    let t_last = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let t_first = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);

    let mut p = [t_b.max(t_last) + 0.1, 0.0];
    // keep -ln(T - t) + b >= 0 at the start when the window is very wide
    p[1] = p[1].max((p[0] - t_first).ln());

    let sse_at = |p: &[f64; 2]| -> Option<f64> {
        data.iter().try_fold(0.0, |acc, &(t, s)| {
            scaling_model(t, p[0], p[1]).map(|m| acc + (m - s) * (m - s))
        })
    };
    let mut sse = sse_at(&p).ok_or_else(|| Error::Fit("initial guess outside the model domain".into()))?;
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < FIT_MAX_ITER {
        iterations += 1;
        if sse == 0.0 {
            converged = true;
            break;
        }
        // normal equations J^T J and J^T r
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        let mut singular = false;
        for &(t, s) in &data {
            let d = p[0] - t;
            let q = (-d.ln() + p[1]).sqrt();
            if q == 0.0 {
                singular = true;
                break;
            }
            let m = SCALING_PREFACTOR * d * (-q).exp();
            let j = [m / d * (1.0 + 0.5 / q), -0.5 * m / q];
            let r = m - s;
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        if singular {
            return Err(Error::Fit("iterate reached the edge of the model domain".into()));
        }

        let mut accepted = false;
        let mut step_small = false;
        for _ in 0..60 {
            let a00 = jtj[0][0] * (1.0 + damping);
            let a11 = jtj[1][1] * (1.0 + damping);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            let delta = [
                -(a11 * jtr[0] - a01 * jtr[1]) / det,
                -(a00 * jtr[1] - a01 * jtr[0]) / det,
            ];
            if !(delta[0].is_finite() && delta[1].is_finite()) {
                damping *= 10.0;
                continue;
            }
            step_small = delta
                .iter()
                .zip(&p)
                .all(|(d, x)| d.abs() <= FIT_STEP_TOL * (1.0 + x.abs()));
            let trial = [p[0] + delta[0], p[1] + delta[1]];
            match sse_at(&trial) {
                Some(trial_sse) if trial_sse <= sse => {
                    let rel = (sse - trial_sse) / sse;
                    p = trial;
                    sse = trial_sse;
                    damping = (damping / 3.0).max(1e-12);
                    accepted = true;
                    if rel < FIT_REL_RESIDUAL_TOL {
                        step_small = true;
                    }
                    break;
                }
                _ => {
                    if step_small {
                        break;
                    }
                    damping *= 4.0;
                }
            }
        }
        if step_small {
            converged = true;
            break;
        }
        if !accepted {
            break;
        }
    }

    Ok(FitResult {
        blowup_time: p[0],
        b: p[1],
        residual: sse,
        iterations,
        converged,
    })
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::Invalid("need at least two resolutions".into()));
    }
    if let Some(&(h, e)) = errors.iter().find(|&&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(Error::Invalid(format!("non-positive spacing or error ({h}, {e})")));
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all spacings are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Observed order from three solutions on grids refined by `ratio`:
/// `ln(|coarse - medium| / |medium - fine|) / ln(ratio)`.
pub fn richardson_order(coarse: f64, medium: f64, fine: f64, ratio: f64) -> f64 {
    ((coarse - medium).abs() / (medium - fine).abs()).ln() / ratio.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(blowup_time: f64, b: f64, window: (f64, f64), n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let t = window.0 + (window.1 - window.0) * i as f64 / (n - 1) as f64;
                (t, scaling_model(t, blowup_time, b).unwrap())
            })
            .collect()
    }

    #[test]
    fn classification_rules() {
        let calm = [1.0, 0.9, 1.0];
        assert_eq!(classify(RunStatus::Completed, &calm, &calm), Classification::Subcritical);
        assert_eq!(classify(RunStatus::Completed, &[1.0, 0.2, -1.0], &calm), Classification::Flip);
        assert_eq!(classify(RunStatus::Completed, &[1.0; 3], &[0.9, -0.5, -1.0]), Classification::Flip);
        assert_eq!(classify(RunStatus::ProjectionFailed, &[1.0], &[1.0]), Classification::Failed);
        assert_eq!(classify(RunStatus::NonFinite, &[1.0, -1.0], &[1.0, 1.0]), Classification::Failed);
    }

    #[test]
    fn bisection_run_count() {
        let threshold = 0.8187;
        let res = critical_search(0.7, 0.9, 1e-8, |a| {
            Ok(if a >= threshold {
                Classification::Flip
            } else {
                Classification::Subcritical
            })
        })
        .unwrap();
        let expected = ((0.9f64 - 0.7) / 1e-8).log2().ceil() as usize;
        assert_eq!(res.runs, expected);
        assert!(res.bracket.1 - res.bracket.0 <= 1e-8);
        assert!(res.bracket.0 < res.a_star && res.a_star <= res.bracket.1);
        assert!((res.a_star - threshold).abs() <= 1e-8);
        assert!(!res.used_failed_runs);
    }

    #[test]
    fn bisection_rejects_bad_bracket() {
        let sub = |_a: f64| Ok(Classification::Subcritical);
        assert!(matches!(critical_search(0.1, 0.2, 1e-3, sub), Err(Error::Bracket(_))));
        let flip = |_a: f64| Ok(Classification::Flip);
        assert!(matches!(critical_search(0.1, 0.2, 1e-3, flip), Err(Error::Bracket(_))));
        assert!(critical_search(0.2, 0.1, 1e-3, sub).is_err());
    }

    #[test]
    fn failed_counts_as_supercritical_but_is_flagged() {
        let res = critical_search(0.0, 1.0, 1e-3, |a| {
            Ok(if a > 0.6 {
                Classification::Failed
            } else if a > 0.5 {
                Classification::Flip
            } else {
                Classification::Subcritical
            })
        })
        .unwrap();
        assert!((res.a_star - 0.5).abs() <= 1e-3);
        assert!(res.used_failed_runs);
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let data = synthetic(0.9, -2.0, (0.836, 0.85), 45);
        let fit = fit_scaling(&data, (0.836, 0.85)).unwrap();
        assert!(fit.converged);
        assert!((fit.blowup_time - 0.9).abs() < 1e-8, "{fit:?}");
        assert!((fit.b + 2.0).abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn fit_of_scaled_data_converges_with_larger_residual() {
        let data = synthetic(0.9, -2.0, (0.836, 0.85), 45);
        let exact = fit_scaling(&data, (0.836, 0.85)).unwrap();
        let scaled: Vec<_> = data.iter().map(|&(t, s)| (t, 1.3 * s)).collect();
        let fit = fit_scaling(&scaled, (0.836, 0.85)).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.residual >= exact.residual);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let data = synthetic(0.9, -2.0, (0.836, 0.85), 4);
        assert!(fit_scaling(&data, (0.836, 0.85)).is_err());
        let mut data = synthetic(0.9, -2.0, (0.836, 0.85), 10);
        data.push((0.849, 0.0));
        assert!(matches!(fit_scaling(&data, (0.836, 0.85)), Err(Error::Fit(_))));
        assert!(fit_scaling(&data, (0.85, 0.836)).is_err());
    }

    #[test]
    fn order_from_ratios() {
        let e16 = [(0.1, 1.0), (0.05, 1.0 / 16.0), (0.025, 1.0 / 256.0)];
        assert!((convergence_order(&e16).unwrap() - 4.0).abs() < 1e-12);
        let e4 = [(0.1, 1.0), (0.05, 0.25)];
        assert!((convergence_order(&e4).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&[(0.1, 1.0), (0.05, 0.0)]).is_err());
        assert!(convergence_order(&[(0.1, 1.0)]).is_err());
        assert!((richardson_order(1.0, 0.5, 0.25, 2.0) - 1.0).abs() < 1e-12);
    }
}
