//! Liouvillian superoperator of the master equation
//! ∂ρ/∂t = −i[H, ρ] + (γ/2)(2aρa† − a†aρ − ρa†a)
//! in vectorized form, with matrix-free application and explicit time
//! evolution.
//!
//! Vectorization is column stacking, fixed globally: vec(ρ)[i + j·d] = ρ_{ij}
//! with d = cutoff+1, so vec(AρB) = (Bᵀ⊗A)·vec(ρ). The convention is recorded
//! as a tag on the built operator and in binary dumps; mixing conventions in
//! one pipeline is the classic silent-transposition bug, and the tag makes it
//! loud instead.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{CoreError, Result};
use crate::fock::FockOperator;
use crate::sparse::CsrMatrix;

/// How density matrices are flattened into vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorizationConvention {
    /// vec(ρ)[i + j·d] = ρ_{ij}; vec(AρB) = (Bᵀ⊗A)vec(ρ).
    ColumnStacking = 1,
}

/// Sparse Liouvillian acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub cutoff: usize,
    /// (cutoff+1)².
    pub dim: usize,
    pub matrix: CsrMatrix,
    pub convention: VectorizationConvention,
    pub gamma: f64,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Assemble the Liouvillian for Hamiltonian `h` and single-photon loss at
/// rate `gamma`.
///
/// The Hamiltonian enters through its explicit entries (any Hermitian H is
/// accepted); the dissipator is the canonical loss channel built from the
/// truncated annihilation operator. For the driven Kerr Hamiltonian the
/// result is at most a seven-point stencil per row with bandwidth cutoff+2.
pub fn build_liouvillian(h: &FockOperator, gamma: f64) -> Result<Superoperator> {
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidParams { reason: format!("gamma must be > 0, got {gamma}") });
    }
    let d = h.dim();
    let scale = h.max_norm().max(1e-300);
    if h.hermiticity_defect() > 1e-12 * scale {
        return Err(CoreError::InvalidParams {
            reason: format!(
                "Hamiltonian hermiticity defect {:.3e} exceeds 1e-12 of its max norm",
                h.hermiticity_defect()
            ),
        });
    }
    let dim = d * d;
    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::with_capacity(8 * dim);

    // Unitary part: vec(−i[H,ρ]) = −i(I⊗H − Hᵀ⊗I)vec(ρ).
    for i in 0..d {
        for ip in 0..d {
            let hv = h.entries[(i, ip)];
            if hv == Complex64::default() {
                continue;
            }
            for j in 0..d {
                // −i·H[i,i'] couples row (i,j) to column (i',j).
                triplets.push((i + j * d, ip + j * d, -I * hv));
            }
        }
    }
    for jp in 0..d {
        for j in 0..d {
            let hv = h.entries[(jp, j)];
            if hv == Complex64::default() {
                continue;
            }
            for i in 0..d {
                // +i·H[j',j] couples row (i,j) to column (i,j').
                triplets.push((i + j * d, i + jp * d, I * hv));
            }
        }
    }

    // Dissipator: γ·(a⊗a)-type refilling term plus the anticommutator drain.
    for i in 0..d {
        for j in 0..d {
            let k = i + j * d;
            if i + 1 < d && j + 1 < d {
                let amp = gamma * (((i + 1) * (j + 1)) as f64).sqrt();
                triplets.push((k, (i + 1) + (j + 1) * d, Complex64::new(amp, 0.0)));
            }
            let drain = -0.5 * gamma * (i + j) as f64;
            if drain != 0.0 {
                triplets.push((k, k, Complex64::new(drain, 0.0)));
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(dim, triplets);
    Ok(Superoperator {
        cutoff: h.cutoff,
        dim,
        matrix,
        convention: VectorizationConvention::ColumnStacking,
        gamma,
    })
}

impl Superoperator {
    #[inline]
    pub fn fock_dim(&self) -> usize {
        self.cutoff + 1
    }

    /// Indices of vec(I): the diagonal positions j·(d+1).
    pub fn trace_positions(&self) -> impl Iterator<Item = usize> {
        let d = self.fock_dim();
        (0..d).map(move |j| j * (d + 1))
    }

    /// id†·v — the trace of the unstacked matrix.
    pub fn trace_of_vec(&self, v: &[Complex64]) -> Complex64 {
        self.trace_positions().map(|k| v[k]).sum()
    }

    /// ‖id†·L‖₂: how far the vectorized identity is from being an exact left
    /// null vector. Trace preservation of the master equation makes this
    /// zero up to assembly rounding.
    pub fn trace_row_defect(&self) -> f64 {
        let d = self.fock_dim();
        let mut col_sums = vec![Complex64::default(); self.dim];
        for j in 0..d {
            let r = j * (d + 1);
            for (c, v) in self.matrix.row(r) {
                col_sums[c] += v;
            }
        }
        col_sums.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// L·v with dimension checking; identical to the explicit sparse product.
    pub fn apply(&self, rho_vec: &[Complex64]) -> Result<Vec<Complex64>> {
        self.matrix.matvec_alloc(rho_vec)
    }

    pub fn apply_into(&self, rho_vec: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.matrix.matvec(rho_vec, out)
    }

    pub fn to_dense(&self) -> ndarray::Array2<Complex64> {
        self.matrix.to_dense()
    }

    /// Binary dump: header (cutoff, dim, nnz, convention tag) as little-endian
    /// u64, then row pointers (dim+1 × u64), column indices (nnz × u64), and
    /// interleaved re/im values (2·nnz × f64).
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = &self.matrix;
        for h in [self.cutoff as u64, self.dim as u64, m.nnz() as u64, self.convention as u64] {
            w.write_all(&h.to_le_bytes())?;
        }
        for p in &m.row_ptr {
            w.write_all(&(*p as u64).to_le_bytes())?;
        }
        for c in &m.col_idx {
            w.write_all(&(*c as u64).to_le_bytes())?;
        }
        for v in &m.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`write_binary`].
    pub fn read_binary<R: Read>(r: &mut R, gamma: f64) -> std::io::Result<Superoperator> {
        let mut u64_buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> std::io::Result<u64> {
            r.read_exact(&mut u64_buf)?;
            Ok(u64::from_le_bytes(u64_buf))
        };
        let cutoff = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        let nnz = read_u64(r)? as usize;
        let tag = read_u64(r)?;
        if tag != VectorizationConvention::ColumnStacking as u64 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unknown vectorization tag {tag}"),
            ));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut buf = [0u8; 8];
        for _ in 0..=dim {
            r.read_exact(&mut buf)?;
            row_ptr.push(u64::from_le_bytes(buf) as usize);
        }
        let mut col_idx = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            r.read_exact(&mut buf)?;
            col_idx.push(u64::from_le_bytes(buf) as usize);
        }
        let mut values = Vec::with_capacity(nnz);
        let mut f_buf = [0u8; 8];
        for _ in 0..nnz {
            r.read_exact(&mut f_buf)?;
            let re = f64::from_le_bytes(f_buf);
            r.read_exact(&mut f_buf)?;
            let im = f64::from_le_bytes(f_buf);
            values.push(Complex64::new(re, im));
        }
        Ok(Superoperator {
            cutoff,
            dim,
            matrix: CsrMatrix { dim, row_ptr, col_idx, values },
            convention: VectorizationConvention::ColumnStacking,
            gamma,
        })
    }
}

/// Sampled trajectory from [`time_evolve`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub cutoff: usize,
    pub times: Vec<f64>,
    states: Vec<Vec<Complex64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, idx: usize) -> Result<DensityMatrix> {
        DensityMatrix::from_vec(self.cutoff, &self.states[idx])
    }

    pub fn last_state(&self) -> Result<DensityMatrix> {
        self.state(self.states.len() - 1)
    }

    /// ⟨a⟩ at every sample.
    pub fn expect_a_series(&self) -> Result<Vec<Complex64>> {
        (0..self.len()).map(|i| Ok(self.state(i)?.expect_a())).collect()
    }
}

/// Fixed-step fourth-order (classical Runge-Kutta) integration of
/// d vec(ρ)/dt = L vec(ρ).
///
/// The step is dt adjusted down so an integer number of steps lands exactly
/// on `t_final`. Trace drift beyond 1e−8 at any sample aborts with
/// StepTooLarge — the integrator is a cross-check tool and refuses to hand
/// back silently degraded states.
pub fn time_evolve(
    l: &Superoperator,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<Trajectory> {
    if rho0.dim() != l.fock_dim() {
        return Err(CoreError::DimensionMismatch { expected: l.fock_dim(), got: rho0.dim() });
    }
    if !(dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(CoreError::InvalidParams {
            reason: format!("need dt > 0 and finite t_final >= 0, got dt={dt}, t_final={t_final}"),
        });
    }
    let stride = sample_stride.max(1);
    let n_steps = if t_final == 0.0 { 0 } else { (t_final / dt).ceil() as usize };
    let h = if n_steps == 0 { 0.0 } else { t_final / n_steps as f64 };

    let dim = l.dim;
    let mut v = rho0.to_vec();
    let mut k1 = vec![Complex64::default(); dim];
    let mut k2 = vec![Complex64::default(); dim];
    let mut k3 = vec![Complex64::default(); dim];
    let mut k4 = vec![Complex64::default(); dim];
    let mut tmp = vec![Complex64::default(); dim];

    let mut times = vec![0.0];
    let mut states = vec![v.clone()];
    const TRACE_DRIFT_TOL: f64 = 1e-8;

    for step in 1..=n_steps {
        l.apply_into(&v, &mut k1)?;
        for i in 0..dim {
            tmp[i] = v[i] + 0.5 * h * k1[i];
        }
        l.apply_into(&tmp, &mut k2)?;
        for i in 0..dim {
            tmp[i] = v[i] + 0.5 * h * k2[i];
        }
        l.apply_into(&tmp, &mut k3)?;
        for i in 0..dim {
            tmp[i] = v[i] + h * k3[i];
        }
        l.apply_into(&tmp, &mut k4)?;
        let w = h / 6.0;
        for i in 0..dim {
            v[i] += w * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }

        if step % stride == 0 || step == n_steps {
            let t = step as f64 * h;
            let drift = (l.trace_of_vec(&v) - Complex64::new(1.0, 0.0)).norm();
            if drift > TRACE_DRIFT_TOL {
                return Err(CoreError::StepTooLarge { drift, t });
            }
            times.push(t);
            states.push(v.clone());
        }
    }

    Ok(Trajectory { cutoff: l.cutoff, times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::eigvals_general;
    use crate::fock::hamiltonian;
    use crate::params::ModelParams;
    use approx::assert_abs_diff_eq;

    fn sorted_by_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn two_level_spectrum_undriven() {
        // cutoff=1, F~=0: eigenvalues {−γ, −γ/2 ± iΔ, 0} exactly.
        let delta = 1.3;
        let p = ModelParams::new(delta, 0.7, 0.0, 1.0).unwrap();
        let h = hamiltonian(&p, 1);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let vals = sorted_by_re(eigvals_general(&l.to_dense()).unwrap());
        assert_eq!(vals.len(), 4);
        assert_abs_diff_eq!(vals[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[0].im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].im, -delta, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2].im, delta, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[3].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[3].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_row_annihilates() {
        let p = ModelParams::new(2.0, 1.0, 0.93, 3.0).unwrap();
        let h = hamiltonian(&p, 12);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let defect = l.trace_row_defect();
        let scale = l.matrix.frobenius_norm();
        assert!(defect < 1e-10 * scale, "trace defect {defect:.3e} vs scale {scale:.3e}");
    }

    #[test]
    fn apply_matches_dense_multiply() {
        let p = ModelParams::new(-1.2, 0.8, 0.41, 2.0).unwrap();
        let h = hamiltonian(&p, 6);
        let l = build_liouvillian(&h, 1.0).unwrap();
        // Random-ish Hermitian unit-trace matrix built deterministically.
        let d = l.fock_dim();
        let mut rho = DensityMatrix::vacuum(l.cutoff);
        for i in 0..d {
            for j in 0..d {
                let v = Complex64::new(
                    ((3 * i + 5 * j + 1) as f64).sin(),
                    ((7 * i) as f64).cos() - ((2 * j) as f64).cos(),
                );
                rho.entries[(i, j)] = v;
            }
        }
        rho.hermitize();
        rho.normalize_trace().unwrap();
        let v = rho.to_vec();
        let fast = l.apply(&v).unwrap();
        let dense = l.to_dense();
        for k in 0..l.dim {
            let mut acc = Complex64::default();
            for kp in 0..l.dim {
                acc += dense[(k, kp)] * v[kp];
            }
            assert!((acc - fast[k]).norm() <= 1e-13 * (1.0 + acc.norm()));
        }
    }

    #[test]
    fn spectrum_conjugation_and_contractivity() {
        let p = ModelParams::new(0.9, 1.4, 0.6, 1.0).unwrap();
        let h = hamiltonian(&p, 7);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let vals = eigvals_general(&l.to_dense()).unwrap();
        for v in &vals {
            assert!(v.re <= 1e-9, "eigenvalue {v} violates contractivity");
            if v.im.abs() > 1e-12 {
                let conj_dist = vals
                    .iter()
                    .map(|w| (w - v.conj()).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(conj_dist < 1e-9, "conjugate of {v} missing (distance {conj_dist:.2e})");
            }
        }
    }

    #[test]
    fn nnz_is_seven_point_stencil() {
        let p = ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
        let c = 9usize;
        let h = hamiltonian(&p, c);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let d = c + 1;
        // Upper bound: 6 off-diagonal neighbors + diagonal per row.
        assert!(l.matrix.nnz() <= 7 * d * d);
        assert!(l.matrix.bandwidth() <= d + 1);
    }

    #[test]
    fn decay_of_excited_state_undriven() {
        // F~=0, ρ0=|1⟩⟨1|: excited population decays as e^{−γt}.
        let p = ModelParams::new(0.5, 1.0, 0.0, 1.0).unwrap();
        let h = hamiltonian(&p, 3);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let rho0 = DensityMatrix::fock_projector(3, 1);
        let t_final = 2.0;
        let traj = time_evolve(&l, &rho0, t_final, 1e-3, 200).unwrap();
        let last = traj.last_state().unwrap();
        let p1 = last.fock_populations()[1];
        assert_abs_diff_eq!(p1, (-t_final).exp(), epsilon = 1e-6);
        // Trace and Hermiticity preserved along the way.
        for i in 0..traj.len() {
            let s = traj.state(i).unwrap();
            assert!(s.hermiticity_defect() < 1e-9);
            assert!((s.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn steady_state_is_fixed_point() {
        // Crude fixed-point check: evolve the dense null vector briefly.
        let p = ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
        let h = hamiltonian(&p, 10);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let dense = l.to_dense();
        let dec = crate::eig::eig_general(&dense, true).unwrap();
        // Null vector = eigenvalue closest to zero.
        let (k, _) = dec
            .values
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        let vecs = dec.vectors.unwrap();
        let v: Vec<Complex64> = (0..l.dim).map(|i| vecs[(i, k)]).collect();
        let mut rho = DensityMatrix::from_vec(l.cutoff, &v).unwrap();
        rho.hermitize();
        rho.normalize_trace().unwrap();
        let traj = time_evolve(&l, &rho, 1.0, 5e-4, 2000).unwrap();
        let drifted = traj.last_state().unwrap();
        let delta = (&drifted.entries - &rho.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(delta < 1e-8, "steady state drifted by {delta:.3e}");
    }

    #[test]
    fn step_too_large_detected() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let h = hamiltonian(&p, 15);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let rho0 = DensityMatrix::vacuum(15);
        // dt far beyond the stability limit for this spectral radius.
        let err = time_evolve(&l, &rho0, 5.0, 0.5, 1).unwrap_err();
        assert!(matches!(err, CoreError::StepTooLarge { .. }), "got {err:?}");
    }

    #[test]
    fn binary_round_trip() {
        let p = ModelParams::new(1.0, 0.5, 0.3, 2.0).unwrap();
        let h = hamiltonian(&p, 4);
        let l = build_liouvillian(&h, 1.0).unwrap();
        let mut buf = Vec::new();
        l.write_binary(&mut buf).unwrap();
        let expected_len = 8 * (4 + (l.dim + 1) + l.matrix.nnz()) + 16 * l.matrix.nnz();
        assert_eq!(buf.len(), expected_len);
        let back = Superoperator::read_binary(&mut buf.as_slice(), 1.0).unwrap();
        assert_eq!(back.cutoff, l.cutoff);
        assert_eq!(back.matrix, l.matrix);
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let mut h = hamiltonian(&ModelParams::new(1.0, 1.0, 0.5, 1.0).unwrap(), 3);
        h.entries[(0, 1)] += Complex64::new(0.0, 0.5);
        assert!(build_liouvillian(&h, 1.0).is_err());
    }
}
