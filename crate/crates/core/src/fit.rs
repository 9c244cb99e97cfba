//! Regression and extrapolation kernels for the finite-size analysis:
//! power-law divergence of the tunneling time above threshold, exponential
//! growth of the tunneling time with system size, 1/N extrapolation of
//! per-size fit results, and a golden-section minimizer used to locate the
//! gap minimum in the drive.
//!
//! Everything here is deliberately small-data statistics (tens of points),
//! so plain normal-equation least squares with explicit covariance is both
//! adequate and exactly reproducible. Standard errors are propagated from
//! the regression covariance through the nonlinear parameter maps by the
//! delta method, because the headline numbers pass through two sequential
//! fits before being reported.

use crate::error::{CoreError, Result};

/// Ordinary/weighted least squares for y = intercept + slope·x, with the
/// parameter covariance needed for error propagation.
#[derive(Clone, Copy, Debug)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_var: f64,
    pub intercept_var: f64,
    pub cov: f64,
}

/// Weighted linear regression; `weights` are inverse variances (uniform if
/// `None`). Needs ≥ 2 distinct abscissas.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(CoreError::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 2 {
        return Err(CoreError::DegenerateFit { reason: "need at least two points" });
    }
    let w_of = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut sw = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = w_of(i);
        if !(w > 0.0) || !x[i].is_finite() || !y[i].is_finite() {
            return Err(CoreError::DegenerateFit { reason: "non-finite point or weight" });
        }
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let det = sw * sxx - sx * sx;
    let scale = sw * sxx.max(1.0);
    if !(det.abs() > 1e-14 * scale) {
        return Err(CoreError::DegenerateFit { reason: "abscissas are (numerically) identical" });
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;

    // Residual variance (unbiased, dof = n−2) scales the covariance of the
    // normal equations; with exact data it collapses to ~0.
    let mut ss_res = 0.0;
    for i in 0..n {
        let r = y[i] - intercept - slope * x[i];
        ss_res += w_of(i) * r * r;
    }
    let mean_y = sy / sw;
    let ss_tot: f64 = (0..n).map(|i| w_of(i) * (y[i] - mean_y) * (y[i] - mean_y)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let sigma2 = if n > 2 { ss_res / (n as f64 - 2.0) } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        slope_var: sigma2 * sw / det,
        intercept_var: sigma2 * sxx / det,
        cov: -sigma2 * sx / det,
    })
}

/// The fitting window actually used by [`fit_power_law`], for metadata.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct FitWindow {
    /// Smallest and largest F̃ − F̃c entering the regression.
    pub dist_min: f64,
    pub dist_max: f64,
    /// Number of points in the regression.
    pub kept: usize,
    /// Fraction of the plateau below which points are admitted.
    pub plateau_exclusion: f64,
    /// Fraction of points dropped from the far end.
    pub far_exclusion: f64,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct PowerLawFit {
    pub b: f64,
    pub f: f64,
    pub r2: f64,
    pub b_stderr: f64,
    pub f_stderr: f64,
    pub window: FitWindow,
    /// True when refitting with 5% and 20% exclusion thresholds moves b by
    /// less than 15%.
    pub window_robust: bool,
}

const PLATEAU_EXCLUSION: f64 = 0.10;
const FAR_EXCLUSION: f64 = 0.10;
const MIN_KEPT: usize = 4;
/// Fraction of the admitted points spanned by the regression window.
const WINDOW_FRACTION: f64 = 0.45;

/// Fit τγ = ((F̃ − F̃c)/f)^(−bN) on points above threshold.
///
/// In log-log form the slope is −bN and the intercept bN·ln f. Points still
/// on the saturation plateau (τ within 10% of the largest τ in the input)
/// and the farthest 10% of distances are excluded outright; both thresholds
/// are re-varied to 5%/20% to assess window robustness. Within the admitted
/// points the regression runs over the steepest contiguous stretch of the
/// log-log curve: at finite size τ(F̃) is analytic, so it rounds off
/// quadratically just above F̃c and saturates again toward the upper
/// spinodal, and only the stationary-slope region in between follows the
/// power law whose exponent grows with N.
pub fn fit_power_law(points: &[(f64, f64)], n_scale: f64, f_c: f64) -> Result<PowerLawFit> {
    let above: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(ft, tau)| ft > f_c && tau > 0.0).collect();
    if above.len() < 6 {
        return Err(CoreError::WindowTooSmall { kept: above.len(), need: 6 });
    }
    let fit = windowed_power_fit(&above, n_scale, f_c, PLATEAU_EXCLUSION, FAR_EXCLUSION)?;
    let robust = [(0.05, 0.20), (0.20, 0.05), (0.05, 0.05), (0.20, 0.20)]
        .iter()
        .filter_map(|&(p, f)| windowed_power_fit(&above, n_scale, f_c, p, f).ok())
        .all(|alt| (alt.0.b - fit.0.b).abs() <= 0.15 * fit.0.b.abs());
    Ok(PowerLawFit { window_robust: robust, ..fit.0 })
}

fn windowed_power_fit(
    above: &[(f64, f64)],
    n_scale: f64,
    f_c: f64,
    plateau_frac: f64,
    far_frac: f64,
) -> Result<(PowerLawFit, LinearFit)> {
    let tau_plateau = above.iter().map(|&(_, t)| t).fold(f64::NEG_INFINITY, f64::max);
    let mut kept: Vec<(f64, f64)> = above
        .iter()
        .copied()
        .filter(|&(_, tau)| tau < (1.0 - plateau_frac) * tau_plateau)
        .collect();
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let drop_far = ((kept.len() as f64) * far_frac).ceil() as usize;
    let keep_to = kept.len().saturating_sub(drop_far);
    kept.truncate(keep_to);
    if kept.len() < MIN_KEPT {
        return Err(CoreError::WindowTooSmall { kept: kept.len(), need: MIN_KEPT });
    }
    let ln_d: Vec<f64> = kept.iter().map(|&(ft, _)| (ft - f_c).ln()).collect();
    let ln_t: Vec<f64> = kept.iter().map(|&(_, tau)| tau.ln()).collect();
    let width = ((kept.len() as f64 * WINDOW_FRACTION).round() as usize)
        .max(5)
        .min(kept.len());
    let mut start = 0;
    let mut steepest = f64::INFINITY;
    for i0 in 0..=(kept.len() - width) {
        let i1 = i0 + width - 1;
        let slope = (ln_t[i1] - ln_t[i0]) / (ln_d[i1] - ln_d[i0]);
        if slope < steepest {
            steepest = slope;
            start = i0;
        }
    }
    kept.drain(..start);
    kept.truncate(width);
    let xs = &ln_d[start..start + width];
    let ys = &ln_t[start..start + width];
    let lin = linear_fit(xs, ys, None)?;
    if !(lin.slope.abs() > 1e-300) {
        return Err(CoreError::DegenerateFit { reason: "flat log-log relation" });
    }
    let b = -lin.slope / n_scale;
    // f = exp(−intercept/slope); delta method over (slope, intercept).
    let f = (-lin.intercept / lin.slope).exp();
    let ds = lin.intercept / (lin.slope * lin.slope); // ∂ln f/∂slope
    let di = -1.0 / lin.slope; // ∂ln f/∂intercept
    let var_lnf = ds * ds * lin.slope_var + di * di * lin.intercept_var + 2.0 * ds * di * lin.cov;
    let plf = PowerLawFit {
        b,
        f,
        r2: lin.r2,
        b_stderr: lin.slope_var.max(0.0).sqrt() / n_scale,
        f_stderr: f * var_lnf.max(0.0).sqrt(),
        window: FitWindow {
            dist_min: kept.first().map(|&(ft, _)| ft - f_c).unwrap_or(f64::NAN),
            dist_max: kept.last().map(|&(ft, _)| ft - f_c).unwrap_or(f64::NAN),
            kept: kept.len(),
            plateau_exclusion: plateau_frac,
            far_exclusion: far_frac,
        },
        window_robust: true,
    };
    Ok((plf, lin))
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ExponentialFit {
    /// Growth rate of τ with N: τ = τ₀·e^{κN}.
    pub kappa: f64,
    pub tau0: f64,
    pub r2: f64,
    pub kappa_stderr: f64,
}

/// Fit τ(N) = τ₀·e^{κN} by linear regression of ln τ on N.
pub fn fit_exponential_tau(points: &[(f64, f64)]) -> Result<ExponentialFit> {
    if points.len() < 4 {
        return Err(CoreError::DegenerateFit { reason: "need at least four sizes" });
    }
    if points.iter().any(|&(_, tau)| !(tau > 0.0)) {
        return Err(CoreError::DegenerateFit { reason: "nonpositive relaxation time" });
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, tau)| tau.ln()).collect();
    let lin = linear_fit(&xs, &ys, None)?;
    Ok(ExponentialFit {
        kappa: lin.slope,
        tau0: lin.intercept.exp(),
        r2: lin.r2,
        kappa_stderr: lin.slope_var.max(0.0).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Extrapolation {
    /// Estimated N → ∞ limit (regression intercept at 1/N = 0).
    pub intercept: f64,
    pub stderr: f64,
    pub slope: f64,
    /// Number of (largest-N) points actually used.
    pub used: usize,
}

/// Extrapolate a per-size quantity to N → ∞ assuming y(N) = y_∞ + c/N,
/// using a weighted regression over the largest-N half of the data (at
/// least three points). `sigmas` are per-point standard errors; when given
/// they define the weights and are folded into the intercept error.
pub fn extrapolate_1overn(
    points: &[(f64, f64)],
    sigmas: Option<&[f64]>,
) -> Result<Extrapolation> {
    let n = points.len();
    if n < 3 {
        return Err(CoreError::DegenerateFit { reason: "need at least three sizes" });
    }
    if sigmas.is_some_and(|s| s.len() != n) {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: sigmas.map(|s| s.len()).unwrap_or(0),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[b].0.partial_cmp(&points[a].0).unwrap());
    let take = (n.div_ceil(2)).max(3);
    let used: Vec<usize> = order.into_iter().take(take).collect();

    let xs: Vec<f64> = used.iter().map(|&i| 1.0 / points[i].0).collect();
    let ys: Vec<f64> = used.iter().map(|&i| points[i].1).collect();
    let ws: Option<Vec<f64>> = sigmas.map(|s| {
        used.iter()
            .map(|&i| {
                let sig = s[i].max(1e-300);
                1.0 / (sig * sig)
            })
            .collect()
    });
    let lin = linear_fit(&xs, &ys, ws.as_deref())?;

    // With supplied measurement errors the intercept variance from the
    // normal equations (Σw, Σwx², …) is the propagated one; add it in
    // quadrature with the residual-scatter estimate and keep the larger
    // picture honest for both exact and noisy inputs.
    let stderr = if let Some(w) = &ws {
        let sw: f64 = w.iter().sum();
        let sx: f64 = w.iter().zip(&xs).map(|(wi, xi)| wi * xi).sum();
        let sxx: f64 = w.iter().zip(&xs).map(|(wi, xi)| wi * xi * xi).sum();
        let det = sw * sxx - sx * sx;
        let var_meas = sxx / det;
        var_meas.max(lin.intercept_var).sqrt()
    } else {
        lin.intercept_var.max(0.0).sqrt()
    };
    Ok(Extrapolation { intercept: lin.intercept, stderr, slope: lin.slope, used: take })
}

/// Minimize a 1-D function by a 21-point coarse scan followed by
/// golden-section refinement to `tol` in the argument. The coarse minimum
/// must be interior — an edge minimum means the bracket does not contain
/// the feature being located.
pub fn golden_minimize<F>(mut eval: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(hi > lo) || !(tol > 0.0) {
        return Err(CoreError::InvalidParams {
            reason: format!("bad bracket [{lo}, {hi}] or tolerance {tol}"),
        });
    }
    const COARSE: usize = 21;
    let step = (hi - lo) / (COARSE - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    let mut values = [0.0f64; COARSE];
    for (i, v) in values.iter_mut().enumerate() {
        *v = eval(lo + i as f64 * step)?;
        if *v < best_v {
            best_v = *v;
            best_i = i;
        }
    }
    if best_i == 0 || best_i == COARSE - 1 {
        return Err(CoreError::NoMinimumInBracket);
    }

    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = lo + (best_i - 1) as f64 * step;
    let mut b = lo + (best_i + 1) as f64 * step;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    let (xm, fm) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok((xm, fm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn power_law_is_self_inverse() {
        let (b, f, n_scale, f_c) = (0.3, 0.2, 10.0, 0.9);
        let points: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let dist = 10f64.powf(-3.0 + 2.5 * i as f64 / 19.0);
                (f_c + dist, (dist / f).powf(-b * n_scale))
            })
            .collect();
        let fit = fit_power_law(&points, n_scale, f_c).unwrap();
        assert_abs_diff_eq!(fit.b, b, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.f, f, epsilon = 1e-6);
        assert!(fit.r2 > 1.0 - 1e-12);
        assert!(fit.window_robust);
        assert!(fit.b_stderr < 1e-8);
    }

    #[test]
    fn plateau_points_are_excluded() {
        // A saturating profile: exact plateau below dist=0.01, power law
        // beyond. The plateau points would wreck a naive fit.
        let (b, f, n_scale, f_c) = (0.4, 0.25, 5.0, 0.8);
        let tau_at = |dist: f64| (dist.max(0.01) / f).powf(-b * n_scale);
        let points: Vec<(f64, f64)> = (0..25)
            .map(|i| {
                let dist = 10f64.powf(-3.0 + 2.6 * i as f64 / 24.0);
                (f_c + dist, tau_at(dist))
            })
            .collect();
        let fit = fit_power_law(&points, n_scale, f_c).unwrap();
        assert_abs_diff_eq!(fit.b, b, epsilon = 1e-3);
        assert!(fit.window.dist_min > 0.009, "plateau leaked into the window");
    }

    #[test]
    fn power_law_window_too_small() {
        // All points share one tau: everything is "plateau".
        let points: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + 0.01 * i as f64, 5.0)).collect();
        match fit_power_law(&points, 4.0, 0.95) {
            Err(CoreError::WindowTooSmall { .. }) => {}
            other => panic!("expected WindowTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn exponential_fit_exact() {
        let points: Vec<(f64, f64)> = (3..=10).map(|n| (n as f64, 2.0 * (0.5 * n as f64).exp())).collect();
        let fit = fit_exponential_tau(&points).unwrap();
        assert_abs_diff_eq!(fit.kappa, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.tau0, 2.0, epsilon = 1e-12);
        assert!(fit.r2 > 1.0 - 1e-14);
    }

    #[test]
    fn exponential_fit_needs_four_points() {
        let points = [(3.0, 1.0), (4.0, 2.0), (5.0, 4.0)];
        assert!(matches!(
            fit_exponential_tau(&points),
            Err(CoreError::DegenerateFit { .. })
        ));
    }

    #[test]
    fn one_over_n_extrapolation_exact() {
        let points: Vec<(f64, f64)> = [4.0, 6.0, 8.0, 10.0, 12.0]
            .iter()
            .map(|&n| (n, 0.35 + 1.2 / n))
            .collect();
        let ex = extrapolate_1overn(&points, None).unwrap();
        assert_abs_diff_eq!(ex.intercept, 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(ex.slope, 1.2, epsilon = 1e-12);
        assert_eq!(ex.used, 3);

        let constant: Vec<(f64, f64)> = (2..8).map(|n| (n as f64, 0.7)).collect();
        let ex = extrapolate_1overn(&constant, None).unwrap();
        assert_abs_diff_eq!(ex.intercept, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(ex.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_extrapolation_matches_unweighted_on_exact_data() {
        let points: Vec<(f64, f64)> =
            [6.0, 8.0, 10.0, 12.0].iter().map(|&n| (n, 0.93 + 0.4 / n)).collect();
        let sig = vec![0.01, 0.02, 0.01, 0.03];
        let a = extrapolate_1overn(&points, None).unwrap();
        let b = extrapolate_1overn(&points, Some(&sig)).unwrap();
        assert_abs_diff_eq!(a.intercept, b.intercept, epsilon = 1e-12);
        assert!(b.stderr > 0.0, "measurement errors must propagate");
    }

    #[test]
    fn golden_section_recovers_minimizer() {
        let (x, v) = golden_minimize(
            |x| Ok((x - 0.931_234).powi(2) + 0.3),
            0.7,
            1.1,
            1e-4,
        )
        .unwrap();
        assert!((x - 0.931_234).abs() < 1e-4, "minimizer {x}");
        assert!((v - 0.3).abs() < 1e-7);
    }

    #[test]
    fn edge_minimum_is_rejected() {
        match golden_minimize(|x| Ok(x), 0.0, 1.0, 1e-4) {
            Err(CoreError::NoMinimumInBracket) => {}
            other => panic!("expected NoMinimumInBracket, got {other:?}"),
        }
    }

    #[test]
    fn linear_fit_covariance_is_sane() {
        // y = 1 + 2x with tiny symmetric noise: parameters recovered and
        // variances positive and small.
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, &x)| 1.0 + 2.0 * x + if i % 2 == 0 { 1e-6 } else { -1e-6 }).collect();
        let fit = linear_fit(&xs, &ys, None).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-6);
        assert!(fit.slope_var > 0.0 && fit.slope_var < 1e-10);
        assert!(fit.r2 > 1.0 - 1e-9);
    }
}
