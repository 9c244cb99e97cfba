//! Reduction of the homogeneous driven-dissipative Bose–Hubbard lattice to
//! the single Kerr mode.
//!
//! A hypercubic array of N coupled nonlinear cavities with nearest-neighbor
//! hopping −J Σ a†ᵢaⱼ, driven homogeneously, feeds only its k = 0 mode:
//! the drive is flat across sites, so it couples exclusively to the uniform
//! Bloch mode. Projecting onto that mode gives back the single-mode model
//! with the interaction diluted as U = Ũ/N and the drive amplified as
//! F = √N·F̃ — exactly the scaling family the finite-size analysis sweeps.
//! The lattice only survives in one place: the k = 0 band edge shifts the
//! mode frequency to ω₀ = ω_c − 2dJ on a d-dimensional hypercubic lattice,
//! which moves the effective pump detuning to Δ_eff = (ω_p − ω_c) + 2dJ.
//!
//! Whether the reduction stays quantitatively valid near the critical
//! drive — where the neglected k ≠ 0 modes could matter — is an open
//! physics question; this module just performs the mapping.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::params::ModelParams;

/// Homogeneous driven-dissipative Bose–Hubbard array on a periodic
/// hypercubic lattice, all rates in units of γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoseHubbardParams {
    /// Nearest-neighbor hopping J (units of γ), sign convention −J Σ a†ᵢaⱼ.
    pub hopping: f64,
    /// Lattice dimension d ≥ 1 (chain, square, cubic, …).
    pub dimension: usize,
    /// Number of sites; becomes the size parameter N of the reduced model.
    pub n_sites: usize,
    /// Bare pump detuning ω_p − ω_c (units of γ).
    pub detuning: f64,
    /// Rescaled on-site nonlinearity Ũ (units of γ).
    pub u_tilde: f64,
    /// Rescaled homogeneous drive F̃ (units of γ).
    pub f_tilde: f64,
    pub gamma: f64,
}

impl BoseHubbardParams {
    pub fn new(
        hopping: f64,
        dimension: usize,
        n_sites: usize,
        detuning: f64,
        u_tilde: f64,
        f_tilde: f64,
    ) -> Result<Self> {
        let p = Self { hopping, dimension, n_sites, detuning, u_tilde, f_tilde, gamma: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(CoreError::InvalidParams { reason });
        if self.n_sites < 1 {
            return fail("lattice needs at least one site".into());
        }
        if self.dimension < 1 {
            return fail("lattice dimension must be at least 1".into());
        }
        if !(self.gamma > 0.0) {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.f_tilde >= 0.0) {
            return fail(format!("f_tilde must be >= 0, got {}", self.f_tilde));
        }
        for (name, v) in [
            ("hopping", self.hopping),
            ("detuning", self.detuning),
            ("u_tilde", self.u_tilde),
            ("f_tilde", self.f_tilde),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }

    /// Project onto the k = 0 mode. The hopping enters only through the
    /// band-edge shift Δ_eff = (ω_p − ω_c) + 2dJ; Ũ and F̃ pass through
    /// untouched, so U = Ũ/N and F = √N·F̃ hold exactly with N = N_sites.
    pub fn k0_reduce(&self) -> ModelParams {
        let delta_eff = self.detuning + 2.0 * self.dimension as f64 * self.hopping;
        ModelParams {
            delta: delta_eff,
            u_tilde: self.u_tilde,
            f_tilde: self.f_tilde,
            gamma: self.gamma,
            n_scale: self.n_sites as f64,
        }
    }
}

/// Free-function form of [`BoseHubbardParams::k0_reduce`].
pub fn k0_reduce(bh: &BoseHubbardParams) -> ModelParams {
    bh.k0_reduce()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decoupled_single_site_is_the_bare_mode() {
        let bh = BoseHubbardParams::new(0.0, 3, 1, -1.7, 0.9, 0.4).unwrap();
        let m = bh.k0_reduce();
        let bare = ModelParams::new(-1.7, 0.9, 0.4, 1.0).unwrap();
        assert_eq!(m, bare);
    }

    #[test]
    fn chain_band_edge_shifts_detuning_by_two_j() {
        let bh = BoseHubbardParams::new(0.35, 1, 6, 1.2, 1.0, 0.8).unwrap();
        assert_eq!(bh.k0_reduce().delta, 1.2 + 2.0 * 0.35);
    }

    #[test]
    fn four_sites_dilute_interaction_and_amplify_drive() {
        let bh = BoseHubbardParams::new(0.5, 2, 4, 2.0, 1.0, 0.7).unwrap();
        let m = bh.k0_reduce();
        assert_eq!(m.n_scale, 4.0);
        assert_eq!(m.u(), 0.25, "U = Ũ/4 on four sites");
        assert_eq!(m.f(), 1.4, "F = 2F̃ on four sites");
    }

    #[test]
    fn degenerate_lattices_are_rejected() {
        assert!(BoseHubbardParams::new(0.1, 1, 0, 0.0, 1.0, 0.5).is_err());
        assert!(BoseHubbardParams::new(0.1, 0, 4, 0.0, 1.0, 0.5).is_err());
        assert!(BoseHubbardParams::new(0.1, 1, 4, 0.0, 1.0, -0.5).is_err());
    }

    proptest! {
        /// Ũ and F̃ pass through bit-exactly and the reduced model carries
        /// N = N_sites, so the scaling identities U·N = Ũ and F/√N = F̃ are
        /// properties of ModelParams itself, not of the mapping.
        #[test]
        fn scaling_identities_survive_the_mapping(
            j in -3.0f64..3.0,
            d in 1usize..4,
            sites in 1usize..64,
            det in -5.0f64..5.0,
            u in -2.0f64..2.0,
            f in 0.0f64..3.0,
        ) {
            let bh = BoseHubbardParams::new(j, d, sites, det, u, f).unwrap();
            let m = bh.k0_reduce();
            prop_assert_eq!(m.u_tilde, u);
            prop_assert_eq!(m.f_tilde, f);
            prop_assert_eq!(m.n_scale, sites as f64);
            m.validate().unwrap();
        }

        /// The hopping touches nothing but the detuning, and that linearly
        /// with slope 2d.
        #[test]
        fn hopping_only_moves_the_band_edge(
            j1 in -3.0f64..3.0,
            j2 in -3.0f64..3.0,
            d in 1usize..4,
            sites in 1usize..64,
            det in -5.0f64..5.0,
        ) {
            let a = BoseHubbardParams::new(j1, d, sites, det, 1.0, 0.8).unwrap().k0_reduce();
            let b = BoseHubbardParams::new(j2, d, sites, det, 1.0, 0.8).unwrap().k0_reduce();
            prop_assert_eq!(a.u_tilde, b.u_tilde);
            prop_assert_eq!(a.f_tilde, b.f_tilde);
            prop_assert_eq!(a.n_scale, b.n_scale);
            let shift = a.delta - b.delta;
            prop_assert!((shift - 2.0 * d as f64 * (j1 - j2)).abs() < 1e-12);
        }
    }
}
