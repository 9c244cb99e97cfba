use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Physical inputs for the driven-dissipative Kerr resonator, all rates in
/// units of the dissipation rate γ.
///
/// The size parameter `n_scale` (N) defines the scaling toward the
/// thermodynamic limit: the bare nonlinearity and drive are derived as
/// U = Ũ/N and F = √N·F̃, so the photon number grows ∝ N while Ũ and F̃ stay
/// fixed. N is accepted as any positive real so finite-size curves can be
/// sampled densely, even though integer values are the physically natural
/// choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Detuning Δ = ω_p − ω_c between the drive and the cavity (units of γ).
    pub delta: f64,
    /// Rescaled Kerr nonlinearity Ũ (units of γ).
    pub u_tilde: f64,
    /// Rescaled drive amplitude F̃ (units of γ); real and non-negative.
    pub f_tilde: f64,
    /// Dissipation rate γ. The reference scale; 1 for every standard run.
    pub gamma: f64,
    /// Size parameter N (positive real).
    pub n_scale: f64,
}

impl ModelParams {
    /// Parameters in γ units with γ fixed to 1.
    pub fn new(delta: f64, u_tilde: f64, f_tilde: f64, n_scale: f64) -> Result<Self> {
        let p = Self { delta, u_tilde, f_tilde, gamma: 1.0, n_scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(CoreError::InvalidParams { reason });
        if !(self.gamma > 0.0) {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.n_scale > 0.0) {
            return fail(format!("n_scale must be > 0, got {}", self.n_scale));
        }
        if !(self.f_tilde >= 0.0) {
            return fail(format!("f_tilde must be >= 0, got {}", self.f_tilde));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("u_tilde", self.u_tilde),
            ("f_tilde", self.f_tilde),
            ("gamma", self.gamma),
            ("n_scale", self.n_scale),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }

    /// Bare nonlinearity U = Ũ/N.
    #[inline]
    pub fn u(&self) -> f64 {
        self.u_tilde / self.n_scale
    }

    /// Bare drive amplitude F = √N·F̃.
    #[inline]
    pub fn f(&self) -> f64 {
        self.n_scale.sqrt() * self.f_tilde
    }

    /// F² formed as N·F̃² directly, avoiding the √N round trip.
    #[inline]
    pub fn f_squared(&self) -> f64 {
        self.n_scale * self.f_tilde * self.f_tilde
    }

    /// Same physics at a different size parameter.
    pub fn with_n_scale(&self, n_scale: f64) -> Self {
        Self { n_scale, ..*self }
    }

    pub fn with_f_tilde(&self, f_tilde: f64) -> Self {
        Self { f_tilde, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scaling_by_hand() {
        // U~=1, N=4, F~=0.93: U = 0.25, F = 1.86 (sqrt(4) is exact).
        let p = ModelParams::new(2.0, 1.0, 0.93, 4.0).unwrap();
        assert_eq!(p.u(), 0.25);
        assert_eq!(p.f(), 1.86);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ModelParams::new(0.0, 1.0, -0.1, 1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 0.1, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 0.1, 1.0).is_err());
        let mut p = ModelParams::new(0.0, 1.0, 0.1, 1.0).unwrap();
        p.gamma = -1.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        /// U·N = Ũ and F/√N = F̃ up to rounding; exact when N is a power of two.
        #[test]
        fn scaling_identities(
            u_tilde in 0.01f64..10.0,
            f_tilde in 0.0f64..5.0,
            n_scale in 0.5f64..100.0,
        ) {
            let p = ModelParams::new(1.0, u_tilde, f_tilde, n_scale).unwrap();
            let un = p.u() * p.n_scale;
            prop_assert!((un - u_tilde).abs() <= 4.0 * f64::EPSILON * u_tilde.abs());
            let back = p.f() / p.n_scale.sqrt();
            prop_assert!((back - f_tilde).abs() <= 4.0 * f64::EPSILON * (1.0 + f_tilde.abs()));
            // U·F² must equal Ũ·F̃² to rounding.
            let lhs = p.u() * p.f_squared();
            let rhs = u_tilde * f_tilde * f_tilde;
            prop_assert!((lhs - rhs).abs() <= 8.0 * f64::EPSILON * (1.0 + rhs.abs()));
        }

        #[test]
        fn scaling_exact_for_power_of_two_n(k in 0u32..8) {
            let n = f64::from(2u32.pow(k));
            let p = ModelParams::new(1.0, 1.25, 0.75, n).unwrap();
            prop_assert_eq!(p.u() * p.n_scale, 1.25);
            prop_assert_eq!(p.f() / n.sqrt(), 0.75);
        }
    }
}
