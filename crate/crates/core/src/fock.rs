use ndarray::Array2;
use num_complex::Complex64;

use crate::params::ModelParams;

/// Dense complex operator on a truncated Fock space {|0⟩, …, |cutoff⟩}.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub cutoff: usize,
    /// (cutoff+1) × (cutoff+1) matrix, row = bra index, column = ket index.
    pub entries: Array2<Complex64>,
}

impl FockOperator {
    pub fn zeros(cutoff: usize) -> Self {
        let d = cutoff + 1;
        Self { cutoff, entries: Array2::zeros((d, d)) }
    }

    /// Basis dimension cutoff+1.
    #[inline]
    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let d = self.dim();
        let mut out = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = self.entries[(j, i)].conj();
            }
        }
        Self { cutoff: self.cutoff, entries: out }
    }

    /// max_{ij} |A_ij − A_ji*|, the Hermiticity defect in max norm.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let e = (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    /// max_{ij} |A_ij|.
    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Truncated annihilation operator: a[n−1, n] = √n for 1 ≤ n ≤ cutoff.
///
/// Its adjoint is the truncated creation operator. The product a†a is exactly
/// the number operator diag(0, 1, …, cutoff); truncation only removes the
/// coupling out of |cutoff⟩, so ⟨m|[a, a†]|m⟩ = 1 holds for every m < cutoff.
pub fn annihilation_op(cutoff: usize) -> FockOperator {
    let mut op = FockOperator::zeros(cutoff);
    for n in 1..=cutoff {
        op.entries[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    op
}

/// Number operator a†a = diag(0, 1, …, cutoff).
pub fn number_op(cutoff: usize) -> FockOperator {
    let mut op = FockOperator::zeros(cutoff);
    for n in 0..=cutoff {
        op.entries[(n, n)] = Complex64::new(n as f64, 0.0);
    }
    op
}

/// Diagonal of the undriven part: h_n = −Δ·n + (U/2)·n(n−1).
///
/// Shared between the Hamiltonian builder and the superoperator assembly so
/// the two can never drift apart.
#[inline]
pub fn kerr_diagonal(params: &ModelParams, n: usize) -> f64 {
    let nf = n as f64;
    -params.delta * nf + 0.5 * params.u() * nf * (nf - 1.0)
}

/// Rotating-frame Hamiltonian H = −Δ·a†a + (U/2)·a†a†aa + F·(a† + a),
/// with U = Ũ/N and F = √N·F̃.
///
/// Built entry-wise: diagonal h_n = −Δn + (U/2)n(n−1), first off-diagonals
/// F·√n. Real symmetric, hence Hermitian to the last bit.
pub fn hamiltonian(params: &ModelParams, cutoff: usize) -> FockOperator {
    let mut h = FockOperator::zeros(cutoff);
    let f = params.f();
    for n in 0..=cutoff {
        h.entries[(n, n)] = Complex64::new(kerr_diagonal(params, n), 0.0);
    }
    for n in 1..=cutoff {
        let v = Complex64::new(f * (n as f64).sqrt(), 0.0);
        h.entries[(n - 1, n)] = v; // ⟨n−1|F·a|n⟩
        h.entries[(n, n - 1)] = v; // ⟨n|F·a†|n−1⟩
    }
    h
}
