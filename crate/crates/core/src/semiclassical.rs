//! Mean-field (semiclassical) analysis of the rescaled field amplitude
//! α̃ = α/√N, whose equation of motion
//!
//!   i dα̃/dt = (−Δ − iγ/2 + Ũ|α̃|²)α̃ + F̃
//!
//! is N-independent: its fixed points, their linear stability, and the
//! bistability window are the thermodynamic-limit skeleton that the finite-N
//! Liouvillian quantities converge toward.
//!
//! Fixed points satisfy the cubic ñ[(Δ − Ũñ)² + γ²/4] = F̃² in the rescaled
//! density ñ = |α̃|², solved here through the companion matrix (uniformly
//! accurate near the fold where closed forms cancel) plus a real Newton
//! polish. The linearized spectrum around a root is
//!
//!   λ_LR = −γ/2 ± i√(χ² − (Ũñ)²),   χ = 2Ũñ − Δ,
//!
//! and the radicand's sign decides oscillatory versus overdamped response;
//! det J = χ² + γ²/4 − (Ũñ)² equals the slope dF̃²/dñ, so the middle branch
//! of the S-curve is exactly the unstable one.

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::eig::eigvals_general;
use crate::error::{CoreError, Result};
use crate::params::ModelParams;

/// One fixed point of the mean-field equation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SemiclassicalRoot {
    /// Rescaled field α̃ at the fixed point.
    pub alpha: Complex64,
    /// Rescaled density ñ = |α̃|².
    pub n_sc: f64,
    /// Both linear-response rates strictly damped.
    pub stable: bool,
    /// λ_LR pair, ordered by descending real part, then descending
    /// imaginary part (conjugate pairs list the +Im member first).
    pub lambda_lr: (Complex64, Complex64),
}

/// Drive-amplitude window (F̃⁻, F̃⁺) in which three fixed points coexist.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BistabilityEdges {
    pub f_minus: f64,
    pub f_plus: f64,
    /// True only for a genuine open window Δ > √3·γ/2; at the critical
    /// detuning the edges coincide and `exists` is false.
    pub exists: bool,
}

/// F̃² required to hold the fixed point at rescaled density `n`:
/// the cubic read backwards, F̃²(ñ) = ñ[(Δ − Ũñ)² + γ²/4].
pub fn drive_squared_at(delta: f64, u_tilde: f64, gamma: f64, n: f64) -> f64 {
    let det = delta - u_tilde * n;
    n * (det * det + 0.25 * gamma * gamma)
}

/// λ_LR around a fixed point of rescaled density `n`, ordered as in
/// [`SemiclassicalRoot::lambda_lr`].
pub fn linear_response(n: f64, params: &ModelParams) -> (Complex64, Complex64) {
    let gamma = params.gamma;
    let un = params.u_tilde * n;
    let chi = 2.0 * un - params.delta;
    let radicand = chi * chi - un * un;
    if radicand >= 0.0 {
        let s = radicand.sqrt();
        (Complex64::new(-0.5 * gamma, s), Complex64::new(-0.5 * gamma, -s))
    } else {
        let s = (-radicand).sqrt();
        (Complex64::new(-0.5 * gamma + s, 0.0), Complex64::new(-0.5 * gamma - s, 0.0))
    }
}

fn root_from_density(n: f64, params: &ModelParams) -> SemiclassicalRoot {
    let alpha = -Complex64::new(params.f_tilde, 0.0)
        / (Complex64::new(-params.delta, -0.5 * params.gamma) + params.u_tilde * n);
    let lambda_lr = linear_response(n, params);
    SemiclassicalRoot { alpha, n_sc: n, stable: lambda_lr.0.re < 0.0, lambda_lr }
}

/// All real fixed points, sorted by ascending density. One or three entries
/// (a fold point appears as a doubled entry).
pub fn steady_roots(params: &ModelParams) -> Result<Vec<SemiclassicalRoot>> {
    params.validate()?;
    let (delta, ut, gamma, ft) = (params.delta, params.u_tilde, params.gamma, params.f_tilde);

    if ut == 0.0 {
        let n = ft * ft / (delta * delta + 0.25 * gamma * gamma);
        return Ok(vec![root_from_density(n, params)]);
    }

    // Monic form ñ³ + p·ñ² + q·ñ + r.
    let p = -2.0 * delta / ut;
    let q = (delta * delta + 0.25 * gamma * gamma) / (ut * ut);
    let r = -ft * ft / (ut * ut);
    let poly = |x: f64| ((x + p) * x + q) * x + r;
    let dpoly = |x: f64| (3.0 * x + 2.0 * p) * x + q;

    let mut companion = Array2::default((3, 3));
    companion[(1, 0)] = Complex64::new(1.0, 0.0);
    companion[(2, 1)] = Complex64::new(1.0, 0.0);
    companion[(0, 2)] = Complex64::new(-r, 0.0);
    companion[(1, 2)] = Complex64::new(-q, 0.0);
    companion[(2, 2)] = Complex64::new(-p, 0.0);
    let raw = eigvals_general(&companion)?;

    let mut densities: Vec<f64> = Vec::with_capacity(3);
    for lam in raw {
        // A conjugate pair shares its |Im|, so this threshold keeps the
        // count structurally 1 or 3; only a fold (true double root) produces
        // borderline imaginary parts, and those belong on the real line.
        if lam.im.abs() > 1e-6 * (1.0 + lam.re.abs()) {
            continue;
        }
        let mut x = lam.re;
        for _ in 0..50 {
            let d = dpoly(x);
            if d.abs() < 1e-300 {
                break;
            }
            let step = poly(x) / d;
            x -= step;
            if step.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        // Plain Newton stalls at ~√ε distance from a fold (double root),
        // where P/P′ hits the evaluation noise floor. There the density is
        // also a simple root of P′, so polish against the derivative
        // instead and keep the result if it doesn't degrade P.
        let dscale = 3.0 * x * x + (2.0 * p * x).abs() + q.abs();
        if dpoly(x).abs() <= 1e-5 * dscale.max(1.0) {
            let mut xf = x;
            for _ in 0..8 {
                let d2 = 6.0 * xf + 2.0 * p;
                if d2.abs() < 1e-300 {
                    break;
                }
                let step = dpoly(xf) / d2;
                xf -= step;
                if step.abs() <= 1e-16 * (1.0 + xf.abs()) {
                    break;
                }
            }
            let pscale =
                (x.abs().powi(3) + (p * x * x).abs() + (q * x).abs() + r.abs()).max(1.0);
            if poly(xf).abs() <= poly(x).abs().max(1e-11 * pscale) {
                x = xf;
            }
        }
        if x > -1e-12 {
            densities.push(x.max(0.0));
        }
    }
    densities.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(densities.into_iter().map(|n| root_from_density(n, params)).collect())
}

/// Largest fixed-point density, as a scale estimate for basis sizing;
/// zero when undriven.
pub fn largest_root_density(params: &ModelParams) -> Result<f64> {
    Ok(steady_roots(params)?.last().map(|root| root.n_sc).unwrap_or(0.0))
}

/// Fold points of the S-curve: turning densities
/// n∓ = [2Δ ∓ √(Δ² − 3γ²/4)]/(3Ũ) pushed back through F̃²(ñ); the smaller
/// turning density carries the larger edge drive F̃⁺.
pub fn bistability_edges(delta: f64, u_tilde: f64, gamma: f64) -> BistabilityEdges {
    let disc = delta * delta - 0.75 * gamma * gamma;
    if !(u_tilde > 0.0) || disc < 0.0 {
        return BistabilityEdges { f_minus: f64::NAN, f_plus: f64::NAN, exists: false };
    }
    let s = disc.sqrt();
    let n_minus = (2.0 * delta - s) / (3.0 * u_tilde);
    let n_plus = (2.0 * delta + s) / (3.0 * u_tilde);
    let f_plus = drive_squared_at(delta, u_tilde, gamma, n_minus).max(0.0).sqrt();
    let f_minus = drive_squared_at(delta, u_tilde, gamma, n_plus).max(0.0).sqrt();
    BistabilityEdges { f_minus, f_plus, exists: f_minus < f_plus }
}

/// Mean-field trajectory from [`integrate_meanfield`].
#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    pub alphas: Vec<Complex64>,
}

impl MeanFieldTrajectory {
    pub fn last(&self) -> Complex64 {
        *self.alphas.last().unwrap()
    }
}

fn meanfield_rhs(alpha: Complex64, params: &ModelParams) -> Complex64 {
    let drift = Complex64::new(-params.delta, -0.5 * params.gamma)
        + params.u_tilde * alpha.norm_sqr();
    -Complex64::i() * (drift * alpha + params.f_tilde)
}

/// Classical fourth-order integration of the mean-field equation; the step
/// is shrunk so an integer count lands exactly on `t_final`.
pub fn integrate_meanfield(
    params: &ModelParams,
    alpha0: Complex64,
    t_final: f64,
    dt: f64,
) -> Result<MeanFieldTrajectory> {
    params.validate()?;
    if !(dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(CoreError::InvalidParams {
            reason: format!("need dt > 0 and finite t_final >= 0, got dt={dt}, t_final={t_final}"),
        });
    }
    let n_steps = if t_final == 0.0 { 0 } else { (t_final / dt).ceil() as usize };
    let h = if n_steps == 0 { 0.0 } else { t_final / n_steps as f64 };

    let mut alpha = alpha0;
    let mut times = vec![0.0];
    let mut alphas = vec![alpha0];
    for step in 1..=n_steps {
        let k1 = meanfield_rhs(alpha, params);
        let k2 = meanfield_rhs(alpha + 0.5 * h * k1, params);
        let k3 = meanfield_rhs(alpha + 0.5 * h * k2, params);
        let k4 = meanfield_rhs(alpha + h * k3, params);
        alpha += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
        let t = step as f64 * h;
        let mag = alpha.norm();
        if !mag.is_finite() || mag > 1e8 {
            return Err(CoreError::StepTooLarge { drift: mag, t });
        }
        times.push(t);
        alphas.push(alpha);
    }
    Ok(MeanFieldTrajectory { times, alphas })
}
