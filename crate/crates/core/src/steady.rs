//! Steady state ρ_ss with 𝓛ρ_ss = 0, computed from a trace-constrained
//! linear system rather than a full eigendecomposition.
//!
//! Replacing one row of the vectorized Liouvillian with the trace functional
//! id† gives a nonsingular system L̃x = e_r whose solution is exactly the
//! kernel vector normalized to unit trace, provided the replaced row index r
//! is a diagonal position (so the constraint reads tr ρ = 1). Moving index r
//! to the end by a cyclic shift leaves the remaining block A banded
//! (bandwidths grow by at most one) and turns L̃ into the bordered form
//! [[A, B], [c†, 1]]: one banded LU of A plus a scalar Schur complement
//! s = 1 − c†A⁻¹B solves it in O(d⁴) instead of O(d⁶) for Fock dimension d.
//!
//! The choice of r matters. A is singular exactly when the kernel vector has
//! zero component at r, and nearly singular when that component is tiny — so
//! bordering on the top Fock level fails for any converged cutoff (tail
//! populations ~1e−16), and bordering on the vacuum fails deep in the bright
//! branch (ρ₀₀ ~ e^{−n̄}). The solver therefore scans a few candidate Fock
//! levels spread over the basis and keeps the first whose solution passes
//! the kernel-residual test; iterative refinement absorbs the moderate
//! ill-conditioning of any in-between choice.

use num_complex::Complex64;

use crate::banded::{BandedLU, BandedMatrix};
use crate::density::DensityMatrix;
use crate::error::{CoreError, Result};
use crate::liouvillian::Superoperator;

/// Acceptance threshold on ‖L vec(ρ)‖₂ / ‖L‖_F for a returned steady state.
pub const KERNEL_RESIDUAL_TOL: f64 = 1e-10;

fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// LU-backed solver for the trace-constrained Liouvillian, bordered at the
/// diagonal position of Fock level `border_level`.
///
/// `solve` applies L̃⁻¹ to arbitrary right-hand sides in the *original*
/// index order (the internal permutation is invisible), which also powers
/// the shift-inverted spectral iteration at the origin; `steady_state` is
/// the rhs = e_border special case with refinement and state hygiene on top.
pub struct BorderedSolver {
    fock_dim: usize,
    dim: usize,
    /// Fock level whose diagonal position carries the trace constraint.
    border_level: usize,
    /// Vector index r = border_level·(d+1) of that position.
    border: usize,
    lu: BandedLU,
    /// y = A⁻¹B in permuted interior coordinates.
    y: Vec<Complex64>,
    /// Schur complement s = 1 − c†y; |s| ≈ 0 signals a (near-)degenerate
    /// kernel.
    schur: Complex64,
    /// ‖L‖_F, the scale for residual thresholds.
    scale: f64,
}

impl BorderedSolver {
    /// Map an original vector index (≠ border) to its slot in the interior
    /// block after the border index is cycled to the end.
    #[inline]
    fn interior(&self, k: usize) -> usize {
        if k < self.border {
            k
        } else {
            k - 1
        }
    }

    pub fn factor_at(l: &Superoperator, border_level: usize) -> Result<Self> {
        let d = l.fock_dim();
        if border_level >= d {
            return Err(CoreError::DimensionMismatch { expected: d - 1, got: border_level });
        }
        let dim = l.dim;
        let m = dim - 1;
        let r = border_level * (d + 1);

        // Interior block A and border column B in permuted coordinates. The
        // cyclic shift stretches the Liouvillian's (d, d+1) bandwidths by at
        // most one on each side.
        let (kl, ku) = (d + 1, d + 2);
        let mut a = BandedMatrix::zeros(m, kl, ku);
        let mut b = vec![Complex64::default(); m];
        let pidx = |k: usize| if k < r { k } else { k - 1 };
        for row in 0..dim {
            if row == r {
                continue;
            }
            let pr = pidx(row);
            for (c, v) in l.matrix.row(row) {
                if c == r {
                    b[pr] += v;
                } else {
                    a.add(pr, pidx(c), v);
                }
            }
        }
        let lu = a.factor();
        let y = lu.solve(&b)?;

        // c† picks out the other diagonal positions j·(d+1), j ≠ border.
        let mut schur = Complex64::new(1.0, 0.0);
        for j in 0..d {
            if j != border_level {
                schur -= y[pidx(j * (d + 1))];
            }
        }

        let scale = l.matrix.frobenius_norm().max(f64::MIN_POSITIVE);
        Ok(Self { fock_dim: d, dim, border_level, border: r, lu, y, schur, scale })
    }

    /// Factor with the border placed automatically: candidate levels spread
    /// over the basis are tried until the steady-state solve meets the
    /// residual contract. Returns the working solver together with the state
    /// so downstream spectral work reuses both.
    pub fn factor_auto(l: &Superoperator) -> Result<(Self, DensityMatrix)> {
        let d = l.fock_dim();
        let mut candidates = vec![0, d / 4, d / 2, (3 * d) / 4];
        candidates.dedup();
        let mut last_err = None;
        for level in candidates {
            match Self::factor_at(l, level).and_then(|s| {
                let rho = s.steady_state(l)?;
                Ok((s, rho))
            }) {
                Ok(pair) => return Ok(pair),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(CoreError::SingularSystem { residual: f64::NAN }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn border_level(&self) -> usize {
        self.border_level
    }

    /// Vector index of the trace-constrained row.
    pub fn border_index(&self) -> usize {
        self.border
    }

    /// x = L̃⁻¹·rhs by block elimination:
    /// w = A⁻¹rhs_int, x_r = (rhs_r − c†w)/s, x_int = w − x_r·y.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        if rhs.len() != self.dim {
            return Err(CoreError::DimensionMismatch { expected: self.dim, got: rhs.len() });
        }
        let d = self.fock_dim;
        let r = self.border;
        let mut w: Vec<Complex64> = Vec::with_capacity(self.dim - 1);
        w.extend_from_slice(&rhs[..r]);
        w.extend_from_slice(&rhs[r + 1..]);
        self.lu.solve_in_place(&mut w)?;
        let mut ctw = Complex64::default();
        for j in 0..d {
            if j != self.border_level {
                ctw += w[self.interior(j * (d + 1))];
            }
        }
        let x_r = (rhs[r] - ctw) / self.schur;
        let mut x = vec![Complex64::default(); self.dim];
        for k in 0..self.dim {
            if k == r {
                x[k] = x_r;
            } else {
                let p = self.interior(k);
                x[k] = w[p] - x_r * self.y[p];
            }
        }
        Ok(x)
    }

    /// rhs − L̃x, evaluated with the full sparse operator (row r swapped for
    /// the trace functional) so refinement corrects factorization error.
    fn constrained_residual(
        &self,
        l: &Superoperator,
        x: &[Complex64],
        rhs: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let mut res = l.apply(x)?;
        res[self.border] = l.trace_of_vec(x);
        for k in 0..self.dim {
            res[k] = rhs[k] - res[k];
        }
        Ok(res)
    }

    /// Solve L̃x = rhs with a few rounds of iterative refinement. Since
    /// L̃⁻¹e_r is exactly the trace-normalized kernel vector, refining that
    /// right-hand side is inverse power iteration at shift 0 in which every
    /// iterate is already normalized.
    pub fn solve_refined(&self, l: &Superoperator, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut x = self.solve(rhs)?;
        for _ in 0..4 {
            let res = self.constrained_residual(l, &x, rhs)?;
            let rn = l2_norm(&res);
            if !rn.is_finite() {
                break; // blow-up; leave it to the caller's residual check
            }
            if rn <= 1e-15 * self.scale * l2_norm(&x).max(f64::MIN_POSITIVE) {
                break;
            }
            let dx = self.solve(&res)?;
            for k in 0..self.dim {
                x[k] += dx[k];
            }
        }
        Ok(x)
    }

    /// The unit-trace kernel state, Hermitized, renormalized, validated.
    pub fn steady_state(&self, l: &Superoperator) -> Result<DensityMatrix> {
        let mut rhs = vec![Complex64::default(); self.dim];
        rhs[self.border] = Complex64::new(1.0, 0.0);
        let x = self.solve_refined(l, &rhs)?;
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::SingularSystem { residual: f64::NAN });
        }
        let mut rho = DensityMatrix::from_vec(l.cutoff, &x)?;
        rho.hermitize();
        rho.normalize_trace()?;
        let res = kernel_residual(l, &rho)?;
        if !(res < KERNEL_RESIDUAL_TOL) {
            return Err(CoreError::SingularSystem { residual: res });
        }
        rho.validate().map_err(|_| CoreError::SingularSystem { residual: res })?;
        Ok(rho)
    }
}

/// ‖L vec(ρ)‖₂ / ‖L‖_F — how well ρ sits in the kernel.
pub fn kernel_residual(l: &Superoperator, rho: &DensityMatrix) -> Result<f64> {
    let lv = l.apply(&rho.to_vec())?;
    Ok(l2_norm(&lv) / l.matrix.frobenius_norm().max(f64::MIN_POSITIVE))
}

/// Steady state of `l` by constrained solve; one-shot convenience over
/// [`BorderedSolver::factor_auto`].
pub fn steady_state_numeric(l: &Superoperator) -> Result<DensityMatrix> {
    BorderedSolver::factor_auto(l).map(|(_, rho)| rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::observables_numeric;
    use crate::fock::hamiltonian;
    use crate::liouvillian::build_liouvillian;
    use crate::params::ModelParams;
    use crate::sparse::CsrMatrix;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn liouvillian_for(p: &ModelParams, cutoff: usize) -> Superoperator {
        build_liouvillian(&hamiltonian(p, cutoff), p.gamma).unwrap()
    }

    #[test]
    fn undriven_steady_state_is_vacuum() {
        // F~=0 makes the interior block exactly singular unless the border
        // sits on the vacuum level — the auto policy must handle it.
        let p = ModelParams::new(1.7, 0.9, 0.0, 2.0).unwrap();
        let l = liouvillian_for(&p, 8);
        let rho = steady_state_numeric(&l).unwrap();
        let vac = DensityMatrix::vacuum(8);
        let diff =
            (&rho.entries - &vac.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "vacuum deviation {diff:.3e}");
    }

    #[test]
    fn linear_cavity_is_coherent_state() {
        // U=0: exact steady state is |α₀⟩ with α₀ = F/(Δ + iγ/2),
        // n = F²/(Δ² + γ²/4) = 1/4.25 here.
        let p = ModelParams::new(2.0, 0.0, 1.0, 1.0).unwrap();
        let l = liouvillian_for(&p, 12);
        let rho = steady_state_numeric(&l).unwrap();
        let obs = observables_numeric(&rho, p.n_scale);
        assert_abs_diff_eq!(obs.n, 4.0 / 17.0, epsilon = 1e-9);
        assert_abs_diff_eq!(obs.g2, 1.0, epsilon = 1e-7);
        let alpha0 = Complex64::new(p.f(), 0.0) / Complex64::new(p.delta, 0.5 * p.gamma);
        let target = DensityMatrix::coherent(12, alpha0);
        let diff =
            (&rho.entries - &target.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "coherent-state deviation {diff:.3e}");
    }

    #[test]
    fn kerr_point_satisfies_contract() {
        let p = ModelParams::new(2.0, 1.0, 0.93, 2.0).unwrap();
        let l = liouvillian_for(&p, 20);
        let rho = steady_state_numeric(&l).unwrap();
        rho.validate().unwrap();
        let res = kernel_residual(&l, &rho).unwrap();
        assert!(res < KERNEL_RESIDUAL_TOL, "residual {res:.3e}");
        let obs = observables_numeric(&rho, p.n_scale);
        assert!(obs.n > 0.0 && obs.g2 > 0.0);
    }

    #[test]
    fn matches_dense_null_vector() {
        let p = ModelParams::new(2.0, 1.0, 1.2, 3.0).unwrap();
        let cutoff = 24;
        let l = liouvillian_for(&p, cutoff);
        let rho = steady_state_numeric(&l).unwrap();

        let dec = crate::eig::eig_general(&l.to_dense(), true).unwrap();
        let (k, lam) = dec
            .values
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        assert!(lam.norm() < 1e-10, "dense zero mode off by {:.3e}", lam.norm());
        let vecs = dec.vectors.unwrap();
        let v: Vec<Complex64> = (0..l.dim).map(|i| vecs[(i, k)]).collect();
        let mut dense_rho = DensityMatrix::from_vec(cutoff, &v).unwrap();
        dense_rho.hermitize();
        dense_rho.normalize_trace().unwrap();

        let diff = (&rho.entries - &dense_rho.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "null-vector mismatch {diff:.3e}");
    }

    #[test]
    fn bordered_solve_inverts_constrained_operator() {
        let p = ModelParams::new(-0.8, 1.3, 0.7, 1.0).unwrap();
        let l = liouvillian_for(&p, 9);
        for level in [0usize, 3, 7] {
            let solver = BorderedSolver::factor_at(&l, level).unwrap();
            let rhs: Vec<Complex64> = (0..l.dim)
                .map(|k| Complex64::new(((k * 7 + 3) as f64).sin(), ((k * 11) as f64).cos()))
                .collect();
            let x = solver.solve_refined(&l, &rhs).unwrap();
            let res = solver.constrained_residual(&l, &x, &rhs).unwrap();
            let rel = l2_norm(&res) / (l.matrix.frobenius_norm() * l2_norm(&x));
            assert!(rel < 1e-12, "constrained residual {rel:.3e} at border {level}");
        }
    }

    #[test]
    fn border_choice_does_not_change_the_state() {
        let p = ModelParams::new(2.0, 1.0, 0.8, 1.0).unwrap();
        let l = liouvillian_for(&p, 11);
        let rho_a = BorderedSolver::factor_at(&l, 0).unwrap().steady_state(&l).unwrap();
        let rho_b = BorderedSolver::factor_at(&l, 5).unwrap().steady_state(&l).unwrap();
        let diff =
            (&rho_a.entries - &rho_b.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-11, "border dependence {diff:.3e}");
    }

    #[test]
    fn degenerate_kernel_reported() {
        // The zero generator leaves every state steady; the solver must
        // refuse to pick one.
        let l = Superoperator {
            cutoff: 1,
            dim: 4,
            matrix: CsrMatrix::from_triplets(4, vec![]),
            convention: crate::liouvillian::VectorizationConvention::ColumnStacking,
            gamma: 1.0,
        };
        let err = steady_state_numeric(&l).unwrap_err();
        assert!(matches!(err, CoreError::SingularSystem { .. }), "got {err:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

        #[test]
        fn random_points_yield_valid_states(
            delta in 0.3f64..2.5,
            u_tilde in 0.4f64..2.0,
            f_tilde in 0.0f64..1.0,
            n_scale in 1.0f64..3.0,
        ) {
            let p = ModelParams::new(delta, u_tilde, f_tilde, n_scale).unwrap();
            let l = liouvillian_for(&p, 14);
            let rho = steady_state_numeric(&l).unwrap();
            rho.validate().unwrap();
            let obs = observables_numeric(&rho, p.n_scale);
            prop_assert!(obs.n >= 0.0);
            if obs.n > 1e-12 {
                prop_assert!(obs.g2 >= 0.0);
            }
        }
    }
}
