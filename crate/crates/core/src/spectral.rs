//! Eigendecomposition and spectrum-derived diagnostics.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::chain_model::{HermitianOperator, SubspaceBasis};
use crate::error::{Error, Result};

/// Projections closer than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Eigenpairs of a Hermitian operator, eigenvalues ascending.
///
/// Each eigenvector is normalized and its phase fixed so that the
/// largest-magnitude component (lowest index on ties) is real and positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    basis: Arc<SubspaceBasis>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl SpectralDecomposition {
    pub fn basis(&self) -> &Arc<SubspaceBasis> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, matched to [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `‖H − VΛV†‖_max`.
    pub fn reconstruction_residual(&self, h: &HermitianOperator) -> f64 {
        let v = &self.eigenvectors;
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        let rebuilt = v * lambda * v.adjoint();
        (h.matrix() - rebuilt).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖V†V − I‖_max`.
    pub fn orthonormality_residual(&self) -> f64 {
        let g = self.eigenvectors.adjoint() * &self.eigenvectors;
        let mut worst = 0.0f64;
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g[(r, c)] - target).norm());
            }
        }
        worst
    }

    /// `|⟨Ψ_k|state⟩|²` for every eigenstate `k`, `state` a basis pattern.
    pub fn projections(&self, pattern: u32) -> Result<Vec<f64>> {
        let row = self.basis.require_index(pattern)?;
        Ok((0..self.dim())
            .map(|k| self.eigenvectors[(row, k)].norm_sqr())
            .collect())
    }

    /// Eigenvalue gaps `λ_{i+1} − λ_i`.
    pub fn gaps(&self) -> Vec<f64> {
        self.eigenvalues.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Full eigendecomposition of a Hermitian operator.
pub fn diagonalize(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let scale = h.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = h.hermiticity_residual();
    if residual > 1e-12 * scale {
        return Err(Error::NotHermitian(residual));
    }
    let dim = h.dim();

    let (values, vectors): (Vec<f64>, DMatrix<Complex64>) = if h.is_real() {
        let real = h.matrix().map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        (
            eig.eigenvalues.iter().copied().collect(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let eig = SymmetricEigen::new(h.matrix().clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut eigenvectors = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for (k, &src) in order.iter().enumerate() {
        eigenvalues.push(values[src]);
        let col = vectors.column(src);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut pivot = 0;
        let mut best = -1.0;
        for (i, z) in col.iter().enumerate() {
            if z.norm() > best + TIE_TOL {
                best = z.norm();
                pivot = i;
            }
        }
        let phase = col[pivot].conj() / col[pivot].norm();
        for i in 0..dim {
            eigenvectors[(i, k)] = col[i] * phase / norm;
        }
    }
    Ok(SpectralDecomposition {
        basis: Arc::clone(h.basis()),
        eigenvalues,
        eigenvectors,
    })
}

/// Closed-form one-excitation eigenvalues of the `N = 4` chain (`J = 1`), ascending.
pub fn n4_exact_eigenvalues(eta: f64, delta: f64) -> [f64; 4] {
    let nu_minus = 1.0 - eta;
    let nu_plus = 1.0 + eta;
    let d_minus = (4.0 * nu_minus * nu_minus + (delta - 1.0).powi(2) * nu_plus * nu_plus).sqrt();
    let d_plus = (4.0 * nu_minus * nu_minus + (delta + 1.0).powi(2) * nu_plus * nu_plus).sqrt();
    [
        -(d_minus + nu_plus) / 4.0,
        -(d_plus - nu_plus) / 4.0,
        (d_minus - nu_plus) / 4.0,
        (d_plus + nu_plus) / 4.0,
    ]
}

/// Closed-form end-to-end transfer probability `|⟨4|e^{-iHt}|1⟩|²` for `N = 4`.
///
/// At `η = 1` the first bond vanishes and the probability is identically zero.
pub fn n4_exact_p1(eta: f64, delta: f64, t: f64) -> f64 {
    let nu_minus = 1.0 - eta;
    if nu_minus <= 0.0 {
        return 0.0;
    }
    let nu_plus = 1.0 + eta;
    let lambda = n4_exact_eigenvalues(eta, delta);
    let four_nm2 = 4.0 * nu_minus * nu_minus;
    let sum: Complex64 = lambda
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            // (-1)^i with i = 1..4
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            let denom = four_nm2 + (4.0 * l + nu_plus * delta).powi(2);
            Complex64::from_polar(sign / denom, -l * t)
        })
        .sum();
    4.0 * nu_minus.powi(4) * sum.norm_sqr()
}

/// Edge localization of a boundary basis state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub chi: f64,
    /// Eigenstate indices `k₁ ≤ k₂` carrying the two largest projections.
    pub dominant_indices: (usize, usize),
    /// `E_{k₂} − E_{k₁}`.
    pub splitting: f64,
}

/// Sum of the two largest squared overlaps of `edge_state` with the eigenbasis.
pub fn edge_localization(spec: &SpectralDecomposition, edge_state: u32) -> Result<LocalizationReport> {
    let proj = spec.projections(edge_state)?;
    let first = argmax_excluding(&proj, None);
    if proj.len() == 1 {
        return Ok(LocalizationReport {
            chi: proj[0].min(1.0),
            dominant_indices: (0, 0),
            splitting: 0.0,
        });
    }
    let second = argmax_excluding(&proj, Some(first));
    let (k1, k2) = (first.min(second), first.max(second));
    let ev = spec.eigenvalues();
    Ok(LocalizationReport {
        chi: (proj[first] + proj[second]).min(1.0),
        dominant_indices: (k1, k2),
        splitting: ev[k2] - ev[k1],
    })
}

fn argmax_excluding(values: &[f64], skip: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        match best {
            Some(b) if v <= values[b] + TIE_TOL => {}
            _ => best = Some(i),
        }
    }
    best.expect("at least one candidate")
}
