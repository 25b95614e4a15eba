//! Couplings, basis enumeration and dense operator assembly for the
//! dimerized XXZ chain with optional dipolar and Zeeman terms.
//!
//! Conventions:
//!
//! - Sites are labelled `1..=N` in physics formulas and stored 0-based.
//!   Site `s` (1-based) corresponds to bit `s - 1` of a basis pattern.
//! - A set bit is an excitation, i.e. a spin with `σᶻ = -1`.
//! - Energies are in units of `J`, times in units of `1/J` (`ħ = 1`), and the
//!   lattice constant is 1, so dipolar strengths are `K / |j - i|³`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder_mc::DisorderRealization;
use crate::error::{Error, Result};

/// Largest chain for which the full `2^N` space is assembled densely.
pub const MAX_FULL_SPACE_SITES: usize = 12;
/// Largest chain accepted at all (patterns are stored in a `u32`).
pub const MAX_SITES: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Full physical specification of one chain instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_sites: usize,
    /// Base exchange `J`.
    pub j: f64,
    /// Dimerization, `|eta| <= 1`.
    pub eta: f64,
    /// Anisotropy of the `σᶻσᶻ` term.
    pub delta: f64,
    /// Dipolar strength `K/a³` in units of `J`.
    pub k_dip: f64,
    /// Zeeman energy `g μ_B B_z` in units of `J`.
    pub b_z: f64,
    /// Dipole orientation, a unit vector (ŷ unless overridden).
    pub dipole_axis: [f64; 3],
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n_sites: 2,
            j: 1.0,
            eta: 0.0,
            delta: 0.0,
            k_dip: 0.0,
            b_z: 0.0,
            dipole_axis: [0.0, 1.0, 0.0],
        }
    }
}

impl ChainParams {
    /// Nearest-neighbour SSH-XXZ chain with `J = 1` and no dipolar or Zeeman term.
    pub fn new(n_sites: usize, eta: f64, delta: f64) -> Self {
        Self {
            n_sites,
            eta,
            delta,
            ..Self::default()
        }
    }

    pub fn with_dipolar(mut self, k_dip: f64) -> Self {
        self.k_dip = k_dip;
        self
    }

    pub fn with_field(mut self, b_z: f64) -> Self {
        self.b_z = b_z;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::param("n_sites", format!("{} < 2", self.n_sites)));
        }
        if self.n_sites > MAX_SITES {
            return Err(Error::param(
                "n_sites",
                format!("{} exceeds the supported maximum {MAX_SITES}", self.n_sites),
            ));
        }
        for (name, v) in [
            ("j", self.j),
            ("eta", self.eta),
            ("delta", self.delta),
            ("k_dip", self.k_dip),
            ("b_z", self.b_z),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.eta.abs() > 1.0 {
            return Err(Error::param("eta", format!("|{}| > 1", self.eta)));
        }
        if self.k_dip < 0.0 {
            return Err(Error::param("k_dip", format!("{} < 0", self.k_dip)));
        }
        let norm = self.dipole_axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::param("dipole_axis", format!("norm {norm} != 1")));
        }
        Ok(())
    }

    /// Whether total magnetization is conserved, so sector bases suffice.
    pub fn conserves_magnetization(&self) -> bool {
        self.k_dip == 0.0
    }

    pub fn n_pairs(&self) -> usize {
        self.n_sites * (self.n_sites - 1) / 2
    }
}

/// Dipolar coupling between sites `i < j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DipolarPair {
    pub i: usize,
    pub j: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSet {
    /// `bonds[b]` couples 0-based sites `b` and `b + 1` (physics bond index `b + 1`).
    pub bonds: Vec<f64>,
    /// All pairs `i < j` in lexicographic order.
    pub dipolar_pairs: Vec<DipolarPair>,
}

/// Bond and dipolar strengths, optionally perturbed by a static disorder realization.
pub fn build_couplings(
    params: &ChainParams,
    disorder: Option<&DisorderRealization>,
) -> Result<CouplingSet> {
    params.validate()?;
    let n = params.n_sites;
    if let Some(d) = disorder {
        if d.xi_j.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                what: "exchange disorder vector",
                expected: n - 1,
                got: d.xi_j.len(),
            });
        }
        if d.xi_k.len() != params.n_pairs() {
            return Err(Error::DimensionMismatch {
                what: "dipolar disorder vector",
                expected: params.n_pairs(),
                got: d.xi_k.len(),
            });
        }
    }

    // physics index i = b + 1, so (-1)^i is -1 for even b
    let bonds = (0..n - 1)
        .map(|b| {
            let sign = if b % 2 == 0 { -1.0 } else { 1.0 };
            let nominal = params.j * (1.0 + sign * params.eta);
            match disorder {
                Some(d) => nominal * (1.0 + d.d_j * d.xi_j[b]),
                None => nominal,
            }
        })
        .collect();

    let k = params.k_dip * params.j;
    let mut dipolar_pairs = Vec::with_capacity(params.n_pairs());
    let mut p = 0;
    for i in 0..n {
        for j in i + 1..n {
            let r = (j - i) as f64;
            let mut strength = k / (r * r * r);
            if let Some(d) = disorder {
                strength *= 1.0 + d.d_k * d.xi_k[p];
            }
            dipolar_pairs.push(DipolarPair { i, j, strength });
            p += 1;
        }
    }
    Ok(CouplingSet {
        bonds,
        dipolar_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sector {
    /// Fixed number of excitations.
    Excitations(usize),
    /// The whole `2^N` space.
    Full,
}

/// Computational basis of a sector, ordered by ascending pattern value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceBasis {
    n_sites: usize,
    sector: Sector,
    states: Vec<u32>,
}

impl SubspaceBasis {
    pub fn sector(n_sites: usize, k: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if k > n_sites {
            return Err(Error::param("k", format!("{k} excitations on {n_sites} sites")));
        }
        let states = if k == 0 {
            vec![0]
        } else {
            // Gosper's hack walks k-subsets in increasing numeric order
            let limit = 1u64 << n_sites;
            let mut s: u64 = (1u64 << k) - 1;
            let mut states = Vec::new();
            while s < limit {
                states.push(s as u32);
                let c = s & s.wrapping_neg();
                let r = s + c;
                s = (((r ^ s) >> 2) / c) | r;
            }
            states
        };
        Ok(Self {
            n_sites,
            sector: Sector::Excitations(k),
            states,
        })
    }

    pub fn full(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if n_sites > MAX_FULL_SPACE_SITES {
            return Err(Error::TooLarge(format!(
                "full space of {n_sites} sites (max {MAX_FULL_SPACE_SITES})"
            )));
        }
        Ok(Self {
            n_sites,
            sector: Sector::Full,
            states: (0..1u32 << n_sites).collect(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn kind(&self) -> Sector {
        self.sector
    }

    pub fn is_full(&self) -> bool {
        self.sector == Sector::Full
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn index_of(&self, pattern: u32) -> Option<usize> {
        match self.sector {
            Sector::Full => ((pattern as usize) < self.states.len()).then_some(pattern as usize),
            Sector::Excitations(_) => self.states.binary_search(&pattern).ok(),
        }
    }

    pub fn require_index(&self, pattern: u32) -> Result<usize> {
        self.index_of(pattern)
            .ok_or(Error::StateNotInBasis(pattern))
    }

    /// Normalized basis vector for `pattern`.
    pub fn basis_state(&self, pattern: u32) -> Result<Vec<Complex64>> {
        let idx = self.require_index(pattern)?;
        let mut v = vec![ZERO; self.dim()];
        v[idx] = Complex64::new(1.0, 0.0);
        Ok(v)
    }
}

fn check_sites(n_sites: usize) -> Result<()> {
    if !(1..=MAX_SITES).contains(&n_sites) {
        return Err(Error::param(
            "n_sites",
            format!("{n_sites} outside 1..={MAX_SITES}"),
        ));
    }
    Ok(())
}

/// Pattern with excitations on the given 1-based sites.
pub fn pattern(sites_one_based: &[usize]) -> u32 {
    sites_one_based
        .iter()
        .fold(0u32, |acc, &s| acc | (1u32 << (s - 1)))
}

/// Dense Hermitian matrix acting on a [`SubspaceBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    basis: Arc<SubspaceBasis>,
    matrix: DMatrix<Complex64>,
}

impl HermitianOperator {
    pub fn zeros(basis: Arc<SubspaceBasis>) -> Self {
        let d = basis.dim();
        Self {
            basis,
            matrix: DMatrix::from_element(d, d, ZERO),
        }
    }

    /// Wraps an arbitrary matrix; Hermiticity is checked by [`crate::spectral::diagonalize`].
    pub fn from_matrix(basis: Arc<SubspaceBasis>, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                what: "operator matrix",
                expected: basis.dim(),
                got: matrix.nrows(),
            });
        }
        Ok(Self { basis, matrix })
    }

    pub fn basis(&self) -> &Arc<SubspaceBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for c in 0..m.ncols() {
            for r in 0..=c {
                worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    /// Sum of two operators on the same basis.
    pub fn try_add(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch);
        }
        Ok(Self {
            basis: Arc::clone(&self.basis),
            matrix: &self.matrix + &other.matrix,
        })
    }

    /// Frobenius norm of `[Σσᶻ, H]`.
    pub fn magnetization_commutator_norm(&self) -> f64 {
        let n = self.basis.n_sites() as i64;
        let m: Vec<f64> = self
            .basis
            .states()
            .iter()
            .map(|s| (n - 2 * s.count_ones() as i64) as f64)
            .collect();
        let mut acc = 0.0;
        for c in 0..self.dim() {
            for r in 0..self.dim() {
                acc += ((m[r] - m[c]) * self.matrix[(r, c)]).norm_sqr();
            }
        }
        acc.sqrt()
    }

    fn add_entry(&mut self, row: usize, col: usize, value: Complex64) {
        self.matrix[(row, col)] += value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pauli {
    X,
    Y,
    Z,
}

const PAULIS: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

/// `σ^a_site |pattern⟩ = phase |pattern'⟩`.
fn apply_pauli(op: Pauli, site: usize, pattern: u32) -> (Complex64, u32) {
    let bit = (pattern >> site) & 1;
    let flipped = pattern ^ (1 << site);
    match (op, bit) {
        (Pauli::X, _) => (Complex64::new(1.0, 0.0), flipped),
        (Pauli::Y, 0) => (Complex64::new(0.0, 1.0), flipped),
        (Pauli::Y, _) => (Complex64::new(0.0, -1.0), flipped),
        (Pauli::Z, 0) => (Complex64::new(1.0, 0.0), pattern),
        (Pauli::Z, _) => (Complex64::new(-1.0, 0.0), pattern),
    }
}

/// Adds `coeff · σ^a_i σ^b_j` to `op`.
fn add_pauli_pair(
    op: &mut HermitianOperator,
    coeff: f64,
    a: Pauli,
    i: usize,
    b: Pauli,
    j: usize,
) -> Result<()> {
    if coeff == 0.0 {
        return Ok(());
    }
    let basis = Arc::clone(&op.basis);
    for (col, &s) in basis.states().iter().enumerate() {
        let (p1, s1) = apply_pauli(b, j, s);
        let (p2, s2) = apply_pauli(a, i, s1);
        let row = basis.index_of(s2).ok_or(Error::FullSpaceRequired)?;
        op.add_entry(row, col, p1 * p2 * coeff);
    }
    Ok(())
}

/// Nearest-neighbour exchange `-(1/4) Σ J_i [σˣσˣ + σʸσʸ + Δ σᶻσᶻ]`.
pub fn build_xxz_hamiltonian(
    params: &ChainParams,
    couplings: &CouplingSet,
    basis: Arc<SubspaceBasis>,
) -> Result<HermitianOperator> {
    params.validate()?;
    check_chain(params, couplings, &basis)?;
    let mut h = HermitianOperator::zeros(Arc::clone(&basis));
    for (col, &s) in basis.states().iter().enumerate() {
        let mut diag = 0.0;
        for (b, &jb) in couplings.bonds.iter().enumerate() {
            let left = (s >> b) & 1;
            let right = (s >> (b + 1)) & 1;
            let aligned = if left == right { 1.0 } else { -1.0 };
            diag -= 0.25 * jb * params.delta * aligned;
            if left != right {
                // σˣσˣ + σʸσʸ = 2(σ⁺σ⁻ + σ⁻σ⁺) swaps the pair with unit amplitude
                let row = basis.require_index(s ^ (0b11 << b))?;
                h.add_entry(row, col, Complex64::new(-0.5 * jb, 0.0));
            }
        }
        h.add_entry(col, col, Complex64::new(diag, 0.0));
    }
    Ok(h)
}

/// Dipolar term `(1/4) Σ_{i<j} (K/r³)[σ_i·σ_j − 3(σ_i·n̂)(σ_j·n̂)]` on the full space.
pub fn build_dipolar_hamiltonian(
    params: &ChainParams,
    couplings: &CouplingSet,
    basis: Arc<SubspaceBasis>,
) -> Result<HermitianOperator> {
    params.validate()?;
    if !basis.is_full() {
        return Err(Error::FullSpaceRequired);
    }
    check_chain(params, couplings, &basis)?;
    let n = params.dipole_axis;
    let mut h = HermitianOperator::zeros(basis);
    for pair in &couplings.dipolar_pairs {
        if pair.strength == 0.0 {
            continue;
        }
        for (a, pa) in PAULIS.iter().enumerate() {
            for (b, pb) in PAULIS.iter().enumerate() {
                let kron = if a == b { 1.0 } else { 0.0 };
                let coeff = 0.25 * pair.strength * (kron - 3.0 * n[a] * n[b]);
                add_pauli_pair(&mut h, coeff, *pa, pair.i, *pb, pair.j)?;
            }
        }
    }
    Ok(h)
}

/// Zeeman term `(b_z/2) Σ σᶻ`, diagonal in every basis.
pub fn build_zeeman(params: &ChainParams, basis: Arc<SubspaceBasis>) -> Result<HermitianOperator> {
    params.validate()?;
    if basis.n_sites() != params.n_sites {
        return Err(Error::DimensionMismatch {
            what: "basis sites",
            expected: params.n_sites,
            got: basis.n_sites(),
        });
    }
    let n = params.n_sites as f64;
    let mut h = HermitianOperator::zeros(Arc::clone(&basis));
    for (i, &s) in basis.states().iter().enumerate() {
        let mz = n - 2.0 * s.count_ones() as f64;
        h.add_entry(i, i, Complex64::new(0.5 * params.b_z * mz, 0.0));
    }
    Ok(h)
}

/// Total Hamiltonian on `basis`: exchange, plus dipolar (full space only) and Zeeman.
pub fn assemble_hamiltonian(
    params: &ChainParams,
    couplings: &CouplingSet,
    basis: Arc<SubspaceBasis>,
) -> Result<HermitianOperator> {
    let mut h = build_xxz_hamiltonian(params, couplings, Arc::clone(&basis))?;
    if params.k_dip > 0.0 {
        h = h.try_add(&build_dipolar_hamiltonian(
            params,
            couplings,
            Arc::clone(&basis),
        )?)?;
    }
    if params.b_z != 0.0 {
        h = h.try_add(&build_zeeman(params, basis)?)?;
    }
    Ok(h)
}

fn check_chain(params: &ChainParams, couplings: &CouplingSet, basis: &SubspaceBasis) -> Result<()> {
    if basis.n_sites() != params.n_sites {
        return Err(Error::DimensionMismatch {
            what: "basis sites",
            expected: params.n_sites,
            got: basis.n_sites(),
        });
    }
    if couplings.bonds.len() != params.n_sites - 1 {
        return Err(Error::DimensionMismatch {
            what: "bond list",
            expected: params.n_sites - 1,
            got: couplings.bonds.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::diagonalize;
    use approx::assert_abs_diff_eq;

    fn sector(n: usize, k: usize) -> Arc<SubspaceBasis> {
        Arc::new(SubspaceBasis::sector(n, k).unwrap())
    }

    #[test]
    fn bonds_follow_dimerization() {
        let c = build_couplings(&ChainParams::new(4, 0.5, 0.0), None).unwrap();
        assert_eq!(c.bonds, vec![0.5, 1.5, 0.5]);
        let c = build_couplings(&ChainParams::new(4, 0.0, 0.0), None).unwrap();
        assert_eq!(c.bonds, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn bonds_with_extreme_disorder() {
        let params = ChainParams::new(3, 0.5, 0.0);
        let d = DisorderRealization {
            xi_j: vec![1.0, -1.0],
            xi_k: vec![0.0; 3],
            d_j: 0.1,
            d_k: 0.0,
            seed: 0,
            index: 0,
        };
        let c = build_couplings(&params, Some(&d)).unwrap();
        assert_abs_diff_eq!(c.bonds[0], 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(c.bonds[1], 1.35, epsilon = 1e-15);
    }

    #[test]
    fn disorder_length_mismatch_rejected() {
        let params = ChainParams::new(4, 0.5, 0.0);
        let d = DisorderRealization {
            xi_j: vec![0.0; 2],
            xi_k: vec![0.0; 6],
            d_j: 0.1,
            d_k: 0.0,
            seed: 0,
            index: 0,
        };
        assert!(matches!(
            build_couplings(&params, Some(&d)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn extreme_dimerization_limits() {
        let c = build_couplings(&ChainParams::new(6, 1.0, 0.0), None).unwrap();
        assert_eq!(c.bonds[0], 0.0);
        let c = build_couplings(&ChainParams::new(6, -1.0, 0.0), None).unwrap();
        assert!(c.bonds.iter().skip(1).step_by(2).all(|&b| b == 0.0));
    }

    #[test]
    fn dipolar_strengths_decay_cubically() {
        let c = build_couplings(&ChainParams::new(5, 0.0, 0.0).with_dipolar(0.1), None).unwrap();
        assert_eq!(c.dipolar_pairs.len(), 10);
        for p in &c.dipolar_pairs {
            let r = (p.j - p.i) as f64;
            assert_abs_diff_eq!(p.strength * r.powi(3), 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ChainParams::new(1, 0.0, 0.0).validate().is_err());
        assert!(ChainParams::new(4, 1.2, 0.0).validate().is_err());
        assert!(ChainParams::new(4, 0.0, 0.0).with_dipolar(-0.1).validate().is_err());
    }

    #[test]
    fn basis_dimensions_and_order() {
        let b = SubspaceBasis::sector(6, 2).unwrap();
        assert_eq!(b.dim(), 15);
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        assert!(b.states().iter().all(|s| s.count_ones() == 2));
        assert_eq!(SubspaceBasis::full(5).unwrap().dim(), 32);
        assert_eq!(SubspaceBasis::sector(4, 1).unwrap().states(), &[1, 2, 4, 8]);
        assert_eq!(b.index_of(pattern(&[1, 2])), Some(0));
        assert_eq!(b.index_of(pattern(&[1])), None);
    }

    #[test]
    fn two_site_xx_by_hand() {
        let params = ChainParams::new(2, 0.0, 0.0);
        let c = build_couplings(&params, None).unwrap();
        let h = build_xxz_hamiltonian(&params, &c, sector(2, 1)).unwrap();
        let m = h.matrix();
        assert_eq!(m[(0, 1)].re, -0.5);
        assert_eq!(m[(1, 0)].re, -0.5);
        assert_eq!(m[(0, 0)].re, 0.0);
        let spec = diagonalize(&h).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.eigenvalues()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn four_site_xx_spectrum() {
        let params = ChainParams::new(4, 0.0, 0.0);
        let c = build_couplings(&params, None).unwrap();
        let h = build_xxz_hamiltonian(&params, &c, sector(4, 1)).unwrap();
        let ev = diagonalize(&h).unwrap().eigenvalues().to_vec();
        let s5 = 5f64.sqrt();
        let expect = [-(s5 + 1.0) / 4.0, -(s5 - 1.0) / 4.0, (s5 - 1.0) / 4.0, (s5 + 1.0) / 4.0];
        for (a, b) in ev.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn xxz_conserves_magnetization_full_space() {
        for &(eta, delta) in &[(0.3, 0.7), (-0.8, -1.5), (1.0, 2.0)] {
            let params = ChainParams::new(5, eta, delta);
            let c = build_couplings(&params, None).unwrap();
            let h = build_xxz_hamiltonian(&params, &c, Arc::new(SubspaceBasis::full(5).unwrap()))
                .unwrap();
            assert!(h.magnetization_commutator_norm() < 1e-12);
            assert!(h.is_real());
            assert!(h.hermiticity_residual() < 1e-14);
        }
    }

    #[test]
    fn sector_blocks_match_full_space() {
        let params = ChainParams::new(5, 0.4, -0.6);
        let c = build_couplings(&params, None).unwrap();
        let full = Arc::new(SubspaceBasis::full(5).unwrap());
        let hf = build_xxz_hamiltonian(&params, &c, Arc::clone(&full)).unwrap();
        let sb = sector(5, 2);
        let hs = build_xxz_hamiltonian(&params, &c, Arc::clone(&sb)).unwrap();
        for (r, &sr) in sb.states().iter().enumerate() {
            for (col, &sc) in sb.states().iter().enumerate() {
                let full_el = hf.matrix()[(sr as usize, sc as usize)];
                assert_eq!(hs.matrix()[(r, col)], full_el);
            }
        }
    }

    #[test]
    fn dipolar_requires_full_space() {
        let params = ChainParams::new(3, 0.0, 0.0).with_dipolar(0.1);
        let c = build_couplings(&params, None).unwrap();
        assert_eq!(
            build_dipolar_hamiltonian(&params, &c, sector(3, 1)),
            Err(Error::FullSpaceRequired)
        );
    }

    #[test]
    fn dipolar_breaks_magnetization() {
        let full = Arc::new(SubspaceBasis::full(2).unwrap());
        let params = ChainParams::new(2, 0.0, 0.0).with_dipolar(0.1);
        let c = build_couplings(&params, None).unwrap();
        let h = build_dipolar_hamiltonian(&params, &c, Arc::clone(&full)).unwrap();
        assert!(h.magnetization_commutator_norm() > 1e-3);
        assert!(h.hermiticity_residual() < 1e-14);

        // (K/4)[XX + YY + ZZ - 3YY] = (K/4)[XX - 2YY + ZZ]; ⟨11|H|00⟩ = (K/4)(1 + 2) = 3K/4
        assert_abs_diff_eq!(h.matrix()[(3, 0)].re, 0.075, epsilon = 1e-15);
        assert_abs_diff_eq!(h.matrix()[(0, 0)].re, 0.025, epsilon = 1e-15);
        // ⟨01|H|10⟩ = (K/4)(1 - 2) = -K/4
        assert_abs_diff_eq!(h.matrix()[(1, 2)].re, -0.025, epsilon = 1e-15);

        let zero = ChainParams::new(2, 0.0, 0.0);
        let c0 = build_couplings(&zero, None).unwrap();
        let h0 = build_dipolar_hamiltonian(&zero, &c0, full).unwrap();
        assert!(h0.matrix().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn zeeman_diagonal() {
        let params = ChainParams::new(2, 0.0, 0.0).with_field(7.0);
        let h = build_zeeman(&params, Arc::new(SubspaceBasis::full(2).unwrap())).unwrap();
        let d: Vec<f64> = (0..4).map(|i| h.matrix()[(i, i)].re).collect();
        assert_eq!(d, vec![7.0, 0.0, 0.0, -7.0]);

        let params = ChainParams::new(4, 0.0, 0.0).with_field(1.0);
        let h = build_zeeman(&params, sector(4, 1)).unwrap();
        for i in 0..4 {
            assert_eq!(h.matrix()[(i, i)].re, 1.0);
        }
        let h = build_zeeman(&ChainParams::new(4, 0.0, 0.0), sector(4, 1)).unwrap();
        assert!(h.matrix().iter().all(|z| *z == ZERO));
        assert!(h.magnetization_commutator_norm() == 0.0);
    }

    #[test]
    fn assemble_rejects_dipolar_in_sector() {
        let params = ChainParams::new(4, 0.0, 0.0).with_dipolar(0.1);
        let c = build_couplings(&params, None).unwrap();
        assert!(assemble_hamiltonian(&params, &c, sector(4, 1)).is_err());
    }
}
