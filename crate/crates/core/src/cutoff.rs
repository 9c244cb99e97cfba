//! Automatic Fock-basis sizing.
//!
//! A cutoff is accepted when the steady state it produces (i) leaves less
//! than `tail_tol` of total population in the top two Fock levels and
//! (ii) reproduces n and g² within `obs_tol` relative against the same
//! computation at a 25% larger basis. The search seeds from the semiclassical
//! scale — ceil(4·N·max(1, ñ_max)) photons, ñ_max the largest mean-field
//! density — escalates by 25% steps until the test first passes, then
//! binary-searches the smallest passing cutoff (never below 2). Every probe
//! is a full constrained steady-state solve, so results are cached across
//! the escalation and bisection phases.

use std::collections::HashMap;

use crate::density::{observables_numeric, Observables};
use crate::error::{CoreError, Result};
use crate::fock::hamiltonian;
use crate::liouvillian::build_liouvillian;
use crate::params::ModelParams;
use crate::semiclassical::largest_root_density;
use crate::steady::steady_state_numeric;

/// Smallest basis ever returned; below this the model is not meaningfully a
/// Kerr oscillator.
pub const MIN_CUTOFF: usize = 2;

/// How a caller wants the Fock cutoff chosen: adaptively from the steady
/// state, or pinned to an explicit value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutoffSpec {
    Auto { tail_tol: f64, obs_tol: f64, hard_max: usize },
    Fixed(usize),
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec::Auto { tail_tol: 1e-8, obs_tol: 1e-6, hard_max: 160 }
    }
}

impl CutoffSpec {
    pub fn resolve(&self, params: &ModelParams) -> Result<usize> {
        match *self {
            CutoffSpec::Auto { tail_tol, obs_tol, hard_max } => {
                auto_cutoff(params, tail_tol, obs_tol, hard_max)
            }
            CutoffSpec::Fixed(c) if c >= 1 => Ok(c),
            CutoffSpec::Fixed(c) => Err(CoreError::InvalidParams {
                reason: format!("fixed cutoff must be at least 1, got {c}"),
            }),
        }
    }
}

struct Probe {
    obs: Observables,
    /// Combined population of the two highest Fock levels.
    tail: f64,
}

struct ProbeCache<'a> {
    params: &'a ModelParams,
    seen: HashMap<usize, Probe>,
}

impl ProbeCache<'_> {
    fn probe(&mut self, cutoff: usize) -> Result<&Probe> {
        if !self.seen.contains_key(&cutoff) {
            let l = build_liouvillian(&hamiltonian(self.params, cutoff), self.params.gamma)?;
            let rho = steady_state_numeric(&l)?;
            let pops = rho.fock_populations();
            let tail = pops[cutoff] + pops[cutoff - 1];
            let obs = observables_numeric(&rho, self.params.n_scale);
            self.seen.insert(cutoff, Probe { obs, tail });
        }
        Ok(&self.seen[&cutoff])
    }

    fn passes(&mut self, cutoff: usize, tail_tol: f64, obs_tol: f64) -> Result<bool> {
        let (tail, n_a, g2_a) = {
            let a = self.probe(cutoff)?;
            (a.tail, a.obs.n, a.obs.g2)
        };
        if !(tail < tail_tol) {
            return Ok(false);
        }
        let bigger = (5 * cutoff).div_ceil(4);
        let b = self.probe(bigger)?;
        let n_ok = (n_a - b.obs.n).abs() <= obs_tol * b.obs.n.abs().max(f64::MIN_POSITIVE);
        // Empty-cavity states have no defined g²; both sides negligible means
        // the criterion is moot.
        let g2_ok = if n_a < 1e-12 && b.obs.n < 1e-12 {
            true
        } else {
            (g2_a - b.obs.g2).abs() <= obs_tol * b.obs.g2.abs().max(f64::MIN_POSITIVE)
        };
        Ok(n_ok && g2_ok)
    }
}

/// Smallest cutoff meeting the tail and observable-stability criteria, or
/// CutoffOverflow if nothing at or below `hard_max` does.
pub fn auto_cutoff(
    params: &ModelParams,
    tail_tol: f64,
    obs_tol: f64,
    hard_max: usize,
) -> Result<usize> {
    params.validate()?;
    for (name, tol) in [("tail_tol", tail_tol), ("obs_tol", obs_tol)] {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CoreError::InvalidParams {
                reason: format!("{name} must lie in (0,1), got {tol}"),
            });
        }
    }
    if hard_max < MIN_CUTOFF {
        return Err(CoreError::CutoffOverflow { hard_max });
    }

    let n_tilde_max = largest_root_density(params)?;
    let seed = (4.0 * params.n_scale * n_tilde_max.max(1.0)).ceil() as usize;
    let mut cache = ProbeCache { params, seen: HashMap::new() };

    let mut c = seed.clamp(MIN_CUTOFF, hard_max);
    loop {
        if cache.passes(c, tail_tol, obs_tol)? {
            break;
        }
        if c >= hard_max {
            return Err(CoreError::CutoffOverflow { hard_max });
        }
        c = ((5 * c).div_ceil(4)).max(c + 1).min(hard_max);
    }

    // Smallest passing cutoff in [MIN_CUTOFF, c]; c itself passes.
    let (mut lo, mut hi) = (MIN_CUTOFF, c);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if cache.passes(mid, tail_tol, obs_tol)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::observables_numeric;
    use crate::steady::steady_state_numeric;

    fn solve_obs(p: &ModelParams, cutoff: usize) -> (Observables, f64) {
        let l = build_liouvillian(&hamiltonian(p, cutoff), p.gamma).unwrap();
        let rho = steady_state_numeric(&l).unwrap();
        let pops = rho.fock_populations();
        (observables_numeric(&rho, p.n_scale), pops[cutoff] + pops[cutoff - 1])
    }

    #[test]
    fn undriven_returns_floor() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(auto_cutoff(&p, 1e-8, 1e-6, 100).unwrap(), MIN_CUTOFF);
    }

    #[test]
    fn coherent_state_needs_poisson_tail_room() {
        // U=0 with n = F²/(Δ²+γ²/4) = 4: the Poisson tail at 1e−8 clears
        // around n + 6√n ≈ 16.
        let p = ModelParams::new(2.0, 0.0, 17.0f64.sqrt(), 1.0).unwrap();
        let c = auto_cutoff(&p, 1e-8, 1e-6, 200).unwrap();
        assert!((12..=22).contains(&c), "cutoff {c}");

        // The returned cutoff really delivers the contract…
        let (obs_c, tail_c) = solve_obs(&p, c);
        assert!(tail_c < 1e-8);
        let (obs_b, _) = solve_obs(&p, (5 * c).div_ceil(4));
        assert!((obs_c.n - obs_b.n).abs() <= 1e-6 * obs_b.n);
        assert!((obs_c.g2 - obs_b.g2).abs() <= 1e-6 * obs_b.g2);

        // …and is minimal: one step down violates it.
        let (obs_s, tail_s) = solve_obs(&p, c - 1);
        let (obs_sb, _) = solve_obs(&p, (5 * (c - 1)).div_ceil(4));
        let smaller_ok = tail_s < 1e-8
            && (obs_s.n - obs_sb.n).abs() <= 1e-6 * obs_sb.n
            && (obs_s.g2 - obs_sb.g2).abs() <= 1e-6 * obs_sb.g2;
        assert!(!smaller_ok, "cutoff {} should not pass", c - 1);
    }

    #[test]
    fn observables_stable_against_doubled_basis() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 10.0).unwrap();
        let c = auto_cutoff(&p, 1e-7, 1e-5, 160).unwrap();
        let (obs_c, _) = solve_obs(&p, c);
        let (obs_2c, _) = solve_obs(&p, 2 * c);
        assert!(
            (obs_c.n - obs_2c.n).abs() <= 1e-5 * obs_2c.n,
            "n at cutoff {c}: {} vs doubled {}",
            obs_c.n,
            obs_2c.n
        );
    }

    #[test]
    fn overflow_reported() {
        let p = ModelParams::new(2.0, 1.0, 2.0, 10.0).unwrap();
        let err = auto_cutoff(&p, 1e-8, 1e-6, 20).unwrap_err();
        assert!(matches!(err, CoreError::CutoffOverflow { hard_max: 20 }), "got {err:?}");
    }

    #[test]
    fn rejects_bad_tolerances() {
        let p = ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
        assert!(auto_cutoff(&p, 0.0, 1e-6, 100).is_err());
        assert!(auto_cutoff(&p, 1e-8, 1.5, 100).is_err());
    }
}
