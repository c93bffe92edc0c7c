//! Cost-model fitting for the bond-dimension attack: a weighted linear fit of
//! recovery against log2(chi) that extrapolates to the breaking bond
//! dimension, and a cubic fit of per-gate runtime against chi that converts
//! the extrapolated bond dimension into a time estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mps::chi_sat;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("timing data must be nonnegative (point {index} is {value})")]
    NegativeTime { index: usize, value: f64 },
    #[error("extrapolation requires an accepted fit (rejected: {reason})")]
    NotAccepted { reason: String },
}

/// Which functional form was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `R = slope * log2(chi) + intercept`, weighted toward large chi.
    #[serde(rename = "linear-logchi")]
    LinearLogChi,
    /// `time = a * chi^2 + b * chi^3` with nonnegative coefficients.
    #[serde(rename = "cubic-time")]
    CubicTime,
}

/// Outcome of a fit, including whether it passed the acceptance rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// `[slope, intercept]` for the linear model, `[a, b]` for the cubic.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub accepted: bool,
    pub rejection: Option<String>,
}

impl FitResult {
    pub fn slope(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[1]
    }
}

/// Weighted least squares of recovery `R` on `x = log2(chi)` with weights
/// `w = log2(chi)`, so large bond dimensions dominate. The fit is accepted
/// only when `r^2 >= 0.8` and the slope is positive.
pub fn fit_r_vs_logchi(points: &[(usize, f64)]) -> Result<FitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.iter().any(|&(chi, _)| chi == 0) {
        return Err(FitError::Degenerate("chi must be positive".to_string()));
    }
    let xs: Vec<f64> = points.iter().map(|&(chi, _)| (chi as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, r)| r).collect();
    let ws = xs.clone();
    let wsum: f64 = ws.iter().sum();
    if wsum <= 0.0 {
        return Err(FitError::Degenerate("all weights vanish (chi = 1 grid)".to_string()));
    }
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(FitError::Degenerate("all chi values are equal".to_string()));
    }
    let sxy: f64 =
        xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().zip(&ws).map(|(y, w)| w * (y - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let rejection = if slope <= 0.0 {
        Some("negative slope".to_string())
    } else if r_squared < 0.8 {
        Some(format!("r^2 {r_squared:.3} below 0.8"))
    } else {
        None
    };
    Ok(FitResult {
        model: FitModel::LinearLogChi,
        coefficients: vec![slope, intercept],
        r_squared,
        accepted: rejection.is_none(),
        rejection,
    })
}

/// Where the fitted recovery line crosses 1, compared against the saturation
/// bond dimension `chi_sat = 2^(n/2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    /// Estimated breaking bond dimension `2^((1 - intercept) / slope)`.
    pub chi_break_hat: f64,
    pub log2_chi_break_hat: f64,
    pub chi_sat: usize,
    /// True when the crossing lies beyond the saturation bond dimension, so
    /// the attack would densify before the line reaches R = 1.
    pub exceeds_chi_sat: bool,
    pub fit: FitResult,
    pub notes: String,
}

/// Extrapolate an accepted linear fit to the bond dimension where predicted
/// recovery reaches 1.
pub fn extrapolate_chi_break(
    fit: &FitResult,
    n_qubits: usize,
) -> Result<ExtrapolationReport, FitError> {
    if !fit.accepted {
        return Err(FitError::NotAccepted {
            reason: fit.rejection.clone().unwrap_or_else(|| "unknown".to_string()),
        });
    }
    let log2_chi = (1.0 - fit.intercept()) / fit.slope();
    let chi_break_hat = log2_chi.exp2();
    let sat = chi_sat(n_qubits);
    let exceeds = chi_break_hat > sat as f64;
    let notes = if exceeds {
        format!("predicted crossing exceeds chi_sat = 2^{}", n_qubits / 2)
    } else {
        "within the saturation regime".to_string()
    };
    Ok(ExtrapolationReport {
        chi_break_hat,
        log2_chi_break_hat: log2_chi,
        chi_sat: sat,
        exceeds_chi_sat: exceeds,
        fit: fit.clone(),
        notes,
    })
}

/// Nonnegative least squares for `time = a * chi^2 + b * chi^3`. With only two
/// coefficients, the constrained optimum is either the unconstrained solution
/// or the better of the two single-term fits with the other coefficient
/// clamped to zero.
pub fn fit_time_cubic(points: &[(usize, f64)]) -> Result<FitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: points.len() });
    }
    for (index, &(_, t)) in points.iter().enumerate() {
        if t < 0.0 {
            return Err(FitError::NegativeTime { index, value: t });
        }
    }
    if points.iter().all(|&(_, t)| t == 0.0) {
        return Err(FitError::Degenerate("all times are zero".to_string()));
    }

    let x2: Vec<f64> = points.iter().map(|&(chi, _)| (chi as f64).powi(2)).collect();
    let x3: Vec<f64> = points.iter().map(|&(chi, _)| (chi as f64).powi(3)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t).collect();

    let s22: f64 = x2.iter().map(|v| v * v).sum();
    let s33: f64 = x3.iter().map(|v| v * v).sum();
    let s23: f64 = x2.iter().zip(&x3).map(|(a, b)| a * b).sum();
    let s2y: f64 = x2.iter().zip(&ys).map(|(a, y)| a * y).sum();
    let s3y: f64 = x3.iter().zip(&ys).map(|(a, y)| a * y).sum();

    let det = s22 * s33 - s23 * s23;
    let residual = |a: f64, b: f64| -> f64 {
        x2.iter()
            .zip(&x3)
            .zip(&ys)
            .map(|((p, q), y)| (y - a * p - b * q).powi(2))
            .sum()
    };

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    if det.abs() > 0.0 {
        let a = (s2y * s33 - s3y * s23) / det;
        let b = (s3y * s22 - s2y * s23) / det;
        if a >= 0.0 && b >= 0.0 {
            candidates.push((a, b));
        }
    }
    if s22 > 0.0 {
        candidates.push(((s2y / s22).max(0.0), 0.0));
    }
    if s33 > 0.0 {
        candidates.push((0.0, (s3y / s33).max(0.0)));
    }
    let (a, b) = candidates
        .into_iter()
        .min_by(|p, q| {
            residual(p.0, p.1).partial_cmp(&residual(q.0, q.1)).expect("finite residuals")
        })
        .ok_or_else(|| FitError::Degenerate("no usable chi values".to_string()))?;

    let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res = residual(a, b);
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let rejection =
        if r_squared < 0.8 { Some(format!("r^2 {r_squared:.3} below 0.8")) } else { None };
    Ok(FitResult {
        model: FitModel::CubicTime,
        coefficients: vec![a, b],
        r_squared,
        accepted: rejection.is_none(),
        rejection,
    })
}

/// Predicted per-gate time at bond dimension `chi` under a cubic fit.
pub fn predicted_gate_time(fit: &FitResult, chi: f64) -> f64 {
    fit.coefficients[0] * chi * chi + fit.coefficients[1] * chi * chi * chi
}

/// Total predicted time to break: two-qubit gate count times the per-gate
/// cost at the extrapolated bond dimension.
pub fn t_break(fit: &FitResult, gate_count: usize, chi_break_hat: f64) -> f64 {
    gate_count as f64 * predicted_gate_time(fit, chi_break_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_fit_recovers_exact_line() {
        let points: Vec<(usize, f64)> =
            [2usize, 4, 8, 16, 32].iter().map(|&chi| (chi, 0.1 * (chi as f64).log2() + 0.3)).collect();
        let fit = fit_r_vs_logchi(&points).unwrap();
        assert!(fit.accepted);
        assert!((fit.slope() - 0.1).abs() < 1e-9);
        assert!((fit.intercept() - 0.3).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_rejects_noise_and_negative_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy: Vec<(usize, f64)> =
            [2usize, 4, 8, 16, 32, 64].iter().map(|&chi| (chi, 0.5 + rng.gen_range(-0.2..0.2))).collect();
        let fit = fit_r_vs_logchi(&noisy).unwrap();
        assert!(!fit.accepted);

        let falling: Vec<(usize, f64)> =
            [2usize, 4, 8, 16].iter().map(|&chi| (chi, 1.0 - 0.05 * (chi as f64).log2())).collect();
        let fit = fit_r_vs_logchi(&falling).unwrap();
        assert!(!fit.accepted);
        assert_eq!(fit.rejection.as_deref(), Some("negative slope"));
    }

    #[test]
    fn linear_fit_input_validation() {
        assert!(matches!(
            fit_r_vs_logchi(&[(2, 0.5), (4, 0.6)]),
            Err(FitError::TooFewPoints { needed: 3, got: 2 })
        ));
        assert!(matches!(
            fit_r_vs_logchi(&[(8, 0.5), (8, 0.6), (8, 0.7)]),
            Err(FitError::Degenerate(_))
        ));
    }

    #[test]
    fn extrapolation_crosses_at_sixteen() {
        let points: Vec<(usize, f64)> =
            [2usize, 4, 8].iter().map(|&chi| (chi, 0.5 + 0.125 * (chi as f64).log2())).collect();
        let fit = fit_r_vs_logchi(&points).unwrap();
        let report = extrapolate_chi_break(&fit, 12).unwrap();
        assert!((report.chi_break_hat - 16.0).abs() < 1e-9);
        assert!(!report.exceeds_chi_sat);
        assert_eq!(report.chi_sat, 64);
    }

    #[test]
    fn extrapolation_flags_saturation_and_rejects_bad_fits() {
        // shallow slope: crossing far beyond 2^(n/2)
        let points: Vec<(usize, f64)> =
            [2usize, 4, 8, 16].iter().map(|&chi| (chi, 0.4 + 0.01 * (chi as f64).log2())).collect();
        let fit = fit_r_vs_logchi(&points).unwrap();
        let report = extrapolate_chi_break(&fit, 12).unwrap();
        assert!(report.exceeds_chi_sat);
        assert!(report.chi_break_hat > report.chi_sat as f64);

        let rejected = FitResult {
            model: FitModel::LinearLogChi,
            coefficients: vec![-0.1, 0.9],
            r_squared: 0.99,
            accepted: false,
            rejection: Some("negative slope".to_string()),
        };
        assert!(matches!(
            extrapolate_chi_break(&rejected, 12),
            Err(FitError::NotAccepted { .. })
        ));
    }

    #[test]
    fn cubic_fit_recovers_coefficients() {
        let points: Vec<(usize, f64)> = [4usize, 8, 16, 32, 64]
            .iter()
            .map(|&chi| {
                let x = chi as f64;
                (chi, 1.0 * x * x + 2.0 * x * x * x)
            })
            .collect();
        let fit = fit_time_cubic(&points).unwrap();
        assert!(fit.accepted);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-6);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-6);

        // scale covariance: scaling all times scales both coefficients
        let scaled: Vec<(usize, f64)> = points.iter().map(|&(c, t)| (c, 3.0 * t)).collect();
        let fit3 = fit_time_cubic(&scaled).unwrap();
        assert!((fit3.coefficients[0] - 3.0).abs() < 1e-5);
        assert!((fit3.coefficients[1] - 6.0).abs() < 1e-5);
    }

    #[test]
    fn cubic_fit_clamps_to_nonnegative() {
        // data dominated by chi^3 with a spurious negative chi^2 component
        let points: Vec<(usize, f64)> = [2usize, 4, 8, 16]
            .iter()
            .map(|&chi| {
                let x = chi as f64;
                (chi, (2.0 * x * x * x - 0.5 * x * x).max(0.0))
            })
            .collect();
        let fit = fit_time_cubic(&points).unwrap();
        assert!(fit.coefficients[0] >= 0.0);
        assert!(fit.coefficients[1] >= 0.0);
    }

    #[test]
    fn cubic_fit_validation_and_t_break() {
        assert!(matches!(
            fit_time_cubic(&[(2, 1.0), (4, 8.0)]),
            Err(FitError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_time_cubic(&[(2, 0.0), (4, 0.0), (8, 0.0)]),
            Err(FitError::Degenerate(_))
        ));
        assert!(matches!(
            fit_time_cubic(&[(2, 1.0), (4, -1.0), (8, 2.0)]),
            Err(FitError::NegativeTime { index: 1, .. })
        ));

        let fit = FitResult {
            model: FitModel::CubicTime,
            coefficients: vec![2.0, 0.5],
            r_squared: 1.0,
            accepted: true,
            rejection: None,
        };
        // hand computation: chi = 2^(n/2) = 8 for n = 6;
        // per-gate = 2*64 + 0.5*512 = 384; 100 gates -> 38400
        assert_eq!(t_break(&fit, 100, 8.0), 38400.0);
    }

    #[test]
    fn measured_mps_timing_sweep_fits_cubic() {
        use crate::mps::measure_gate_times;
        let chis: Vec<usize> = vec![8, 16, 32, 64, 128, 256];
        let timings = measure_gate_times(&chis, 9);
        let fit = fit_time_cubic(&timings).unwrap();
        assert!(
            fit.r_squared >= 0.9,
            "timing fit r^2 {} below 0.9 (points {:?})",
            fit.r_squared,
            timings
        );
    }
}
