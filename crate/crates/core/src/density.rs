use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eig::eigvals_hermitian;
use crate::error::{CoreError, Result};
use crate::fock::FockOperator;

/// Density matrix in the truncated Fock basis.
///
/// Validity means Hermitian within 1e−10 (max norm), unit trace within
/// 1e−10, and smallest eigenvalue above −1e−8 — tolerances matched to what
/// the linear solvers actually deliver rather than exact mathematical
/// positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub cutoff: usize,
    pub entries: Array2<Complex64>,
}

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = -1e-8;

impl DensityMatrix {
    #[inline]
    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    /// Vacuum projector |0⟩⟨0|.
    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock_projector(cutoff, 0)
    }

    /// Fock projector |k⟩⟨k|.
    pub fn fock_projector(cutoff: usize, k: usize) -> Self {
        assert!(k <= cutoff);
        let d = cutoff + 1;
        let mut m = Array2::default((d, d));
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Self { cutoff, entries: m }
    }

    /// Pure state from (unnormalized) Fock amplitudes.
    pub fn from_pure(cutoff: usize, amplitudes: &[Complex64]) -> Result<Self> {
        let d = cutoff + 1;
        if amplitudes.len() != d {
            return Err(CoreError::DimensionMismatch { expected: d, got: amplitudes.len() });
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            return Err(CoreError::InvalidParams { reason: "zero state vector".into() });
        }
        let mut m = Array2::default((d, d));
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = amplitudes[i] * amplitudes[j].conj() / norm_sqr;
            }
        }
        Ok(Self { cutoff, entries: m })
    }

    /// Truncated coherent state |α⟩⟨α| (renormalized after truncation).
    pub fn coherent(cutoff: usize, alpha: Complex64) -> Self {
        let d = cutoff + 1;
        let mut amps = vec![Complex64::default(); d];
        // α^n/√(n!) built recursively; global e^{−|α|²/2} is absorbed by the
        // normalization in from_pure.
        let mut a = Complex64::new(1.0, 0.0);
        for (n, slot) in amps.iter_mut().enumerate() {
            if n > 0 {
                a *= alpha / (n as f64).sqrt();
            }
            *slot = a;
        }
        Self::from_pure(cutoff, &amps).expect("coherent amplitudes are nonzero")
    }

    /// Column-stacked vector with v[i + j·(cutoff+1)] = ρ_{ij}.
    pub fn to_vec(&self) -> Vec<Complex64> {
        let d = self.dim();
        let mut v = vec![Complex64::default(); d * d];
        for j in 0..d {
            for i in 0..d {
                v[i + j * d] = self.entries[(i, j)];
            }
        }
        v
    }

    /// Inverse of [`to_vec`]; `v` must have length (cutoff+1)².
    pub fn from_vec(cutoff: usize, v: &[Complex64]) -> Result<Self> {
        let d = cutoff + 1;
        if v.len() != d * d {
            return Err(CoreError::DimensionMismatch { expected: d * d, got: v.len() });
        }
        let mut m = Array2::default((d, d));
        for j in 0..d {
            for i in 0..d {
                m[(i, j)] = v[i + j * d];
            }
        }
        Ok(Self { cutoff, entries: m })
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    /// Replace ρ by (ρ + ρ†)/2.
    pub fn hermitize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            for j in i..d {
                let avg = 0.5 * (self.entries[(i, j)] + self.entries[(j, i)].conj());
                self.entries[(i, j)] = avg;
                self.entries[(j, i)] = avg.conj();
            }
        }
    }

    /// Rescale so the trace is exactly 1.
    pub fn normalize_trace(&mut self) -> Result<()> {
        let t = self.trace();
        // Negated comparison so a NaN trace (upstream solver blow-up) is
        // rejected instead of propagated.
        if !(t.norm() > 1e-300) {
            return Err(CoreError::SingularSystem { residual: t.norm() });
        }
        let inv = t.finv();
        self.entries.mapv_inplace(|z| z * inv);
        Ok(())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitized matrix.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut h = self.clone();
        h.hermitize();
        let w = eigvals_hermitian(&h.entries)?;
        Ok(w.first().copied().unwrap_or(0.0))
    }

    /// Check the three state invariants; returns the offending quantity in
    /// the error message.
    pub fn validate(&self) -> Result<()> {
        // All comparisons negated so NaN entries fail rather than slip past.
        let herm = self.hermiticity_defect();
        if !(herm <= HERMITICITY_TOL) {
            return Err(CoreError::InvalidParams {
                reason: format!("hermiticity defect {herm:.3e} exceeds {HERMITICITY_TOL:.0e}"),
            });
        }
        let tr = self.trace();
        let tr_err = (tr - Complex64::new(1.0, 0.0)).norm();
        if !(tr_err <= TRACE_TOL) {
            return Err(CoreError::InvalidParams {
                reason: format!("trace error {tr_err:.3e} exceeds {TRACE_TOL:.0e}"),
            });
        }
        let lam_min = self.min_eigenvalue()?;
        if !(lam_min >= POSITIVITY_TOL) {
            return Err(CoreError::InvalidParams {
                reason: format!("smallest eigenvalue {lam_min:.3e} below {POSITIVITY_TOL:.0e}"),
            });
        }
        Ok(())
    }

    /// Tr(ρ·A).
    pub fn expectation(&self, op: &FockOperator) -> Complex64 {
        let d = self.dim().min(op.dim());
        let mut acc = Complex64::default();
        for i in 0..d {
            for j in 0..d {
                acc += self.entries[(i, j)] * op.entries[(j, i)];
            }
        }
        acc
    }

    /// ⟨a⟩ = Σ_m √m·ρ_{m,m−1}.
    pub fn expect_a(&self) -> Complex64 {
        let d = self.dim();
        let mut acc = Complex64::default();
        for m in 1..d {
            acc += (m as f64).sqrt() * self.entries[(m, m - 1)];
        }
        acc
    }

    /// Diagonal in the Fock basis (real parts).
    pub fn fock_populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.entries[(k, k)].re).collect()
    }

    /// ⟨a†a⟩ from the diagonal.
    pub fn n_mean(&self) -> f64 {
        self.fock_populations().iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// ⟨a†a†aa⟩ from the diagonal.
    pub fn n2_factorial_moment(&self) -> f64 {
        self.fock_populations()
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum()
    }

    /// Convex mixture (1−w)·self + w·other.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<Self> {
        if self.cutoff != other.cutoff {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let entries = self.entries.mapv(|z| z * (1.0 - w)) + other.entries.mapv(|z| z * w);
        Ok(Self { cutoff: self.cutoff, entries })
    }
}

/// Photon-number observables with their provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// ⟨a†a⟩.
    pub n: f64,
    /// n/N.
    pub n_rescaled: f64,
    /// g² = ⟨a†a†aa⟩/n²; NaN sentinel when n < 1e−12.
    pub g2: f64,
    pub source: ObservableSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSource {
    Numeric,
    Analytic,
}

/// Observables of a numerically computed state.
pub fn observables_numeric(rho: &DensityMatrix, n_scale: f64) -> Observables {
    let n = rho.n_mean();
    let g2 = if n < 1e-12 { f64::NAN } else { rho.n2_factorial_moment() / (n * n) };
    Observables { n, n_rescaled: n / n_scale, g2, source: ObservableSource::Numeric }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::number_op;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_is_valid() {
        let rho = DensityMatrix::vacuum(5);
        rho.validate().unwrap();
        assert_eq!(rho.n_mean(), 0.0);
        let obs = observables_numeric(&rho, 2.0);
        assert!(obs.g2.is_nan());
        assert_eq!(obs.n_rescaled, 0.0);
    }

    #[test]
    fn fock_state_observables() {
        let rho = DensityMatrix::fock_projector(4, 1);
        let obs = observables_numeric(&rho, 1.0);
        assert_abs_diff_eq!(obs.n, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(obs.g2, 0.0, epsilon = 0.0);
    }

    #[test]
    fn coherent_state_poisson_moments() {
        // |α|² = 1.44 with a generous cutoff: n = |α|², g² = 1.
        let alpha = Complex64::new(0.9, -0.74);
        let nbar = alpha.norm_sqr();
        let rho = DensityMatrix::coherent(30, alpha);
        rho.validate().unwrap();
        let obs = observables_numeric(&rho, 1.0);
        assert_abs_diff_eq!(obs.n, nbar, epsilon = 1e-9);
        assert_abs_diff_eq!(obs.g2, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(rho.expect_a().re, alpha.re, epsilon = 1e-9);
        assert_abs_diff_eq!(rho.expect_a().im, alpha.im, epsilon = 1e-9);
    }

    #[test]
    fn vec_round_trip_column_stacking() {
        let mut rho = DensityMatrix::vacuum(2);
        rho.entries[(0, 1)] = Complex64::new(0.25, -0.5);
        rho.entries[(1, 0)] = Complex64::new(0.25, 0.5);
        let v = rho.to_vec();
        // Column stacking: ρ_{01} sits at index 0 + 1·3 = 3.
        assert_eq!(v[3], Complex64::new(0.25, -0.5));
        assert_eq!(v[1], Complex64::new(0.25, 0.5));
        let back = DensityMatrix::from_vec(2, &v).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn expectation_against_number_op() {
        let rho = DensityMatrix::coherent(25, Complex64::new(1.2, 0.3));
        let n_op = number_op(25);
        let direct = rho.expectation(&n_op);
        assert_abs_diff_eq!(direct.re, rho.n_mean(), epsilon = 1e-12);
        assert_abs_diff_eq!(direct.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hermitize_and_normalize() {
        let d = 3usize;
        let mut m = Array2::default((d, d));
        m[(0, 0)] = Complex64::new(0.5, 1e-3);
        m[(1, 1)] = Complex64::new(0.75, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.2);
        let mut rho = DensityMatrix { cutoff: 2, entries: m };
        rho.hermitize();
        assert_eq!(rho.hermiticity_defect(), 0.0);
        rho.normalize_trace().unwrap();
        assert!((rho.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
