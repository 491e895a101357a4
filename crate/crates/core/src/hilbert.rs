//! Truncated Fock spaces for the cavity ⊗ mirror 1 ⊗ mirror 2 system, sparse
//! operators on them, and displaced-Fock overlaps.
//!
//! Index convention: the cavity is the slowest index and mirror 2 the fastest,
//! so the bare state `|k, q, n⟩` (k phonons in mirror 1, q phonons in mirror 2,
//! n photons) sits at flat index `(n * n_m1 + k) * n_m2 + q`.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::HilbertError;

/// One of the three bosonic modes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Cavity,
    Mirror1,
    Mirror2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Cavity, Mode::Mirror1, Mode::Mirror2];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Cavity => "cavity",
            Mode::Mirror1 => "mirror1",
            Mode::Mirror2 => "mirror2",
        };
        f.write_str(s)
    }
}

/// Bare product state `|k, q, n⟩`: `k` phonons in mirror 1, `q` in mirror 2, `n`
/// photons.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockLabel {
    pub k: usize,
    pub q: usize,
    pub n: usize,
}

impl FockLabel {
    pub const fn new(k: usize, q: usize, n: usize) -> Self {
        Self { k, q, n }
    }
}

impl fmt::Display for FockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{},{}>", self.k, self.q, self.n)
    }
}

impl std::str::FromStr for FockLabel {
    type Err = HilbertError;

    /// Parses `"k,q,n"`, optionally wrapped as `"|k,q,n>"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        let parts: Vec<_> = trimmed.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match parts.as_slice() {
            [Ok(k), Ok(q), Ok(n)] => Ok(FockLabel::new(*k, *q, *n)),
            _ => Err(HilbertError::BadLabel(s.to_string())),
        }
    }
}

/// Truncated tensor-product space with per-mode cutoffs (number of Fock states).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    pub n_cav: usize,
    pub n_m1: usize,
    pub n_m2: usize,
}

impl HilbertSpace {
    pub fn new(n_cav: usize, n_m1: usize, n_m2: usize) -> Result<Self, HilbertError> {
        for (mode, n) in [(Mode::Cavity, n_cav), (Mode::Mirror1, n_m1), (Mode::Mirror2, n_m2)] {
            if n < 2 {
                return Err(HilbertError::InvalidTruncation { mode, cutoff: n });
            }
        }
        Ok(Self { n_cav, n_m1, n_m2 })
    }

    pub fn dim(&self) -> usize {
        self.n_cav * self.n_m1 * self.n_m2
    }

    pub fn cutoff(&self, mode: Mode) -> usize {
        match mode {
            Mode::Cavity => self.n_cav,
            Mode::Mirror1 => self.n_m1,
            Mode::Mirror2 => self.n_m2,
        }
    }

    /// Flat index of `|k, q, n⟩`, or `None` if outside the truncation.
    pub fn index(&self, label: FockLabel) -> Option<usize> {
        (label.n < self.n_cav && label.k < self.n_m1 && label.q < self.n_m2)
            .then(|| (label.n * self.n_m1 + label.k) * self.n_m2 + label.q)
    }

    pub fn label(&self, index: usize) -> FockLabel {
        debug_assert!(index < self.dim());
        let q = index % self.n_m2;
        let k = (index / self.n_m2) % self.n_m1;
        let n = index / (self.n_m1 * self.n_m2);
        FockLabel { k, q, n }
    }

    pub fn labels(&self) -> impl Iterator<Item = FockLabel> + '_ {
        (0..self.dim()).map(|i| self.label(i))
    }

    /// Occupation of `mode` in the bare state at `index`.
    pub fn occupation(&self, index: usize, mode: Mode) -> usize {
        let l = self.label(index);
        match mode {
            Mode::Cavity => l.n,
            Mode::Mirror1 => l.k,
            Mode::Mirror2 => l.q,
        }
    }

    /// Unit vector on a bare state.
    pub fn basis_state(&self, label: FockLabel) -> Result<Array1<C64>, HilbertError> {
        let idx = self.index(label).ok_or(HilbertError::OutOfSpace(label))?;
        let mut v = Array1::zeros(self.dim());
        v[idx] = C64::new(1.0, 0.0);
        Ok(v)
    }
}

/// Builds the space, rejecting cutoffs below 2.
pub fn make_space(n_cav: usize, n_m1: usize, n_m2: usize) -> Result<HilbertSpace, HilbertError> {
    HilbertSpace::new(n_cav, n_m1, n_m2)
}

/// Sparse complex matrix in compressed-row form, tied to the space it acts on.
/// Exact zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    space: HilbertSpace,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl OperatorMatrix {
    pub fn zeros(space: HilbertSpace) -> Self {
        Self { space, indptr: vec![0; space.dim() + 1], indices: vec![], values: vec![] }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Self::from_diagonal(space, |_| 1.0)
    }

    /// Diagonal operator with entries `f(index)`.
    pub fn from_diagonal(space: HilbertSpace, f: impl Fn(usize) -> f64) -> Self {
        Self::from_triplets(space, (0..space.dim()).map(|i| (i, i, C64::new(f(i), 0.0))))
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// resulting zeros dropped.
    pub fn from_triplets(space: HilbertSpace, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let dim = space.dim();
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); dim];
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "triplet ({i},{j}) outside dimension {dim}");
            *rows[i].entry(j).or_insert(C64::new(0.0, 0.0)) += v;
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                if v != C64::new(0.0, 0.0) {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { space, indptr, indices, values }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates stored entries `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |p| (i, self.indices[p], self.values[p]))
        })
    }

    /// Stored entries `(col, value)` of one row.
    pub fn iter_row(&self, row: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[row]..self.indptr[row + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let (lo, hi) = (self.indptr[row], self.indptr[row + 1]);
        match self.indices[lo..hi].binary_search(&col) {
            Ok(p) => self.values[lo + p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Matrix element between two bare states.
    pub fn element(&self, bra: FockLabel, ket: FockLabel) -> C64 {
        match (self.space.index(bra), self.space.index(ket)) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => C64::new(0.0, 0.0),
        }
    }

    fn check_space(&self, other: &Self) -> Result<(), HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch { left: self.space, right: other.space });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, HilbertError> {
        self.check_space(other)?;
        Ok(Self::from_triplets(self.space, self.iter().chain(other.iter())))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, HilbertError> {
        self.check_space(other)?;
        Ok(Self::from_triplets(self.space, self.iter().chain(other.iter().map(|(i, j, v)| (i, j, -v)))))
    }

    /// Sparse product `self · other`.
    pub fn checked_mul(&self, other: &Self) -> Result<Self, HilbertError> {
        self.check_space(other)?;
        let mut triplets = Vec::new();
        for i in 0..self.dim() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let (k, a) = (self.indices[p], self.values[p]);
                for r in other.indptr[k]..other.indptr[k + 1] {
                    triplets.push((i, other.indices[r], a * other.values[r]));
                }
            }
        }
        Ok(Self::from_triplets(self.space, triplets))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self, HilbertError> {
        self.checked_mul(other)?.checked_sub(&other.checked_mul(self)?)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::from_triplets(self.space, self.iter().map(|(i, j, v)| (i, j, c * v)))
    }

    pub fn scaled_real(&self, c: f64) -> Self {
        self.scaled(C64::new(c, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.space, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    /// Largest absolute entry (0 for the zero matrix).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖M − M†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        self.iter().map(|(i, j, v)| (v - self.get(j, i).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim(), self.dim()));
        for (i, j, v) in self.iter() {
            m[[i, j]] = v;
        }
        m
    }

    /// Real part as a dense matrix (meaningful when [`Self::is_real`]).
    pub fn to_dense_real(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.dim(), self.dim()));
        for (i, j, v) in self.iter() {
            m[[i, j]] = v.re;
        }
        m
    }

    /// `out = self · x`.
    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        for i in 0..self.dim() {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(self.dim());
        self.apply_into(x.as_slice().expect("contiguous"), out.as_slice_mut().expect("contiguous"));
        out
    }

    /// `self · M` for a dense matrix `M` with `dim` rows.
    pub fn mul_dense(&self, m: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.dim(), m.ncols()));
        for (i, j, v) in self.iter() {
            let src = m.row(j);
            let mut dst = out.row_mut(i);
            dst.zip_mut_with(&src, |d, s| *d += v * s);
        }
        out
    }

    /// `⟨x|M|y⟩`.
    pub fn sandwich(&self, x: &Array1<C64>, y: &Array1<C64>) -> C64 {
        self.iter().map(|(i, j, v)| x[i].conj() * v * y[j]).sum()
    }
}

/// Truncated lowering operator of `mode`, embedded with identities on the other
/// two factors.
pub fn annihilator(space: HilbertSpace, mode: Mode) -> OperatorMatrix {
    let triplets = (0..space.dim()).filter_map(|j| {
        let l = space.label(j);
        let (occ, lowered) = match mode {
            Mode::Cavity => (l.n, FockLabel { n: l.n.wrapping_sub(1), ..l }),
            Mode::Mirror1 => (l.k, FockLabel { k: l.k.wrapping_sub(1), ..l }),
            Mode::Mirror2 => (l.q, FockLabel { q: l.q.wrapping_sub(1), ..l }),
        };
        (occ > 0).then(|| (space.index(lowered).unwrap(), j, C64::new((occ as f64).sqrt(), 0.0)))
    });
    OperatorMatrix::from_triplets(space, triplets.collect::<Vec<_>>())
}

pub fn creator(space: HilbertSpace, mode: Mode) -> OperatorMatrix {
    annihilator(space, mode).adjoint()
}

/// Number operator of `mode` (diagonal).
pub fn number(space: HilbertSpace, mode: Mode) -> OperatorMatrix {
    OperatorMatrix::from_diagonal(space, |i| space.occupation(i, mode) as f64)
}

/// Quadrature `o + o†` of `mode`.
pub fn quadrature(space: HilbertSpace, mode: Mode) -> OperatorMatrix {
    let a = annihilator(space, mode);
    a.checked_add(&a.adjoint()).expect("same space")
}

/// Associated Laguerre polynomial `L_n^{(a)}(x)` by the upward three-term
/// recurrence.
pub fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for m in 1..n {
        let m = m as f64;
        let next = ((2.0 * m + 1.0 + a - x) * cur - (m + a) * prev) / (m + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `⟨k'|D(α)|k⟩` for real `α`, with `D(α) = exp[α(b† − b)]`.
///
/// For `k' ≥ k` this is `√(k!/k'!) α^{k'−k} e^{−α²/2} L_k^{(k'−k)}(α²)`; below the
/// diagonal `D(α)† = D(−α)` gives the same expression with `α → −α` and the
/// indices swapped. Real `α` makes the overlap real.
pub fn displacement_overlap(k_prime: usize, k: usize, alpha: f64) -> f64 {
    let (hi, lo, a) = if k_prime >= k { (k_prime, k, alpha) } else { (k, k_prime, -alpha) };
    let d = hi - lo;
    // √(lo!/hi!) α^d accumulated factor by factor to stay in range.
    let mut pref = 1.0;
    for j in (lo + 1)..=hi {
        pref *= a / (j as f64).sqrt();
    }
    let x = alpha * alpha;
    pref * (-0.5 * x).exp() * laguerre(lo, d as f64, x)
}

/// What to do when a truncated displaced state loses more than the tolerated
/// norm.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum TruncationPolicy {
    #[default]
    Warn,
    Error,
}

/// Largest tolerated norm deficit of a truncated displaced Fock state.
pub const MAX_NORM_DEFICIT: f64 = 1e-6;

/// Truncated `D(α)|k⟩` on a single mode with `cutoff` levels.
#[derive(Clone, Debug)]
pub struct DisplacedState {
    /// Normalized amplitudes on `|0⟩ … |cutoff−1⟩`.
    pub amplitudes: Array1<f64>,
    /// `1 − Σ|c_j|²` before normalization.
    pub norm_deficit: f64,
}

pub fn displaced_fock_state(
    k: usize,
    alpha: f64,
    cutoff: usize,
    policy: TruncationPolicy,
) -> Result<DisplacedState, HilbertError> {
    if k >= cutoff {
        return Err(HilbertError::LevelAboveCutoff { level: k, cutoff });
    }
    let mut amplitudes: Array1<f64> = (0..cutoff).map(|j| displacement_overlap(j, k, alpha)).collect();
    let norm2 = amplitudes.iter().map(|c| c * c).sum::<f64>();
    let norm_deficit = 1.0 - norm2;
    if norm_deficit > MAX_NORM_DEFICIT {
        match policy {
            TruncationPolicy::Error => {
                return Err(HilbertError::TruncationLoss { level: k, alpha, cutoff, deficit: norm_deficit })
            }
            TruncationPolicy::Warn => log::warn!(
                "displaced state D({alpha})|{k}> loses {norm_deficit:.3e} of its norm at cutoff {cutoff}"
            ),
        }
    }
    amplitudes /= norm2.sqrt();
    Ok(DisplacedState { amplitudes, norm_deficit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn space_dimensions() {
        assert_eq!(make_space(8, 8, 8).unwrap().dim(), 512);
        assert_eq!(make_space(2, 2, 2).unwrap().dim(), 8);
        assert_eq!(make_space(6, 6, 6).unwrap().dim(), 216);
        assert!(matches!(make_space(1, 8, 8), Err(HilbertError::InvalidTruncation { .. })));
    }

    #[test]
    fn index_map_is_bijective() {
        let s = make_space(3, 4, 5).unwrap();
        let mut seen = vec![false; s.dim()];
        for n in 0..3 {
            for k in 0..4 {
                for q in 0..5 {
                    let l = FockLabel::new(k, q, n);
                    let i = s.index(l).unwrap();
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(s.label(i), l);
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
        assert_eq!(s.index(FockLabel::new(0, 5, 0)), None);
    }

    #[test]
    fn ladder_matrix_elements() {
        let s = make_space(3, 2, 2).unwrap();
        let a = annihilator(s, Mode::Cavity);
        let e = |k, q, n| FockLabel::new(k, q, n);
        assert_abs_diff_eq!(a.element(e(0, 0, 0), e(0, 0, 1)).re, 1.0);
        assert_abs_diff_eq!(a.element(e(0, 0, 1), e(0, 0, 2)).re, 2f64.sqrt());
        assert_abs_diff_eq!(a.element(e(1, 1, 0), e(1, 1, 1)).re, 1.0);
        assert_eq!(a.nnz(), 2 * 4);
    }

    #[test]
    fn canonical_commutator_below_cutoff() {
        let s = make_space(4, 3, 5).unwrap();
        for mode in Mode::ALL {
            let a = annihilator(s, mode);
            let c = a.commutator(&a.adjoint()).unwrap();
            let top = s.cutoff(mode) - 1;
            for i in 0..s.dim() {
                let expect = if s.occupation(i, mode) < top { 1.0 } else { -(top as f64) };
                assert_abs_diff_eq!(c.get(i, i).re, expect, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(c.checked_sub(&OperatorMatrix::from_diagonal(s, |i| c.get(i, i).re)).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn number_operator_spectrum() {
        let s = make_space(5, 2, 2).unwrap();
        let n = annihilator(s, Mode::Cavity).adjoint().checked_mul(&annihilator(s, Mode::Cavity)).unwrap();
        let mut diag: Vec<f64> = (0..s.dim()).map(|i| n.get(i, i).re.round()).collect();
        diag.sort_by(f64::total_cmp);
        diag.dedup();
        assert_eq!(diag, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(n.checked_sub(&number(s, Mode::Cavity)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn distinct_factors_commute() {
        let s = make_space(3, 3, 3).unwrap();
        for (x, y) in [(Mode::Cavity, Mode::Mirror1), (Mode::Mirror1, Mode::Mirror2), (Mode::Cavity, Mode::Mirror2)] {
            let a = annihilator(s, x);
            let b = creator(s, y);
            assert_eq!(a.commutator(&b).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn mismatched_spaces_rejected() {
        let a = annihilator(make_space(2, 2, 2).unwrap(), Mode::Cavity);
        let b = annihilator(make_space(3, 2, 2).unwrap(), Mode::Cavity);
        assert!(a.checked_add(&b).is_err());
        assert!(a.checked_mul(&b).is_err());
    }

    #[test]
    fn overlap_special_values() {
        for alpha in [0.0, 0.06, -0.3, 1.2] {
            assert_abs_diff_eq!(displacement_overlap(0, 0, alpha), (-alpha * alpha / 2.0).exp(), epsilon = 1e-15);
        }
        for k in 0..10 {
            for kp in 0..10 {
                assert_eq!(displacement_overlap(kp, k, 0.0), if k == kp { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn coherent_ground_state_amplitudes() {
        let alpha = -2.0 * 0.03;
        let st = displaced_fock_state(0, alpha, 8, TruncationPolicy::Error).unwrap();
        let mut fact = 1.0;
        for j in 0..8 {
            if j > 0 {
                fact *= j as f64;
            }
            let poisson = (-alpha * alpha / 2.0).exp() * alpha.powi(j as i32) / fact.sqrt();
            assert_abs_diff_eq!(st.amplitudes[j], poisson, epsilon = 1e-14);
        }
        let e0 = displaced_fock_state(0, 0.0, 5, TruncationPolicy::Error).unwrap();
        assert_eq!(e0.amplitudes.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn truncation_loss_detected() {
        assert!(displaced_fock_state(0, 0.5, 8, TruncationPolicy::Error).is_ok());
        let err = displaced_fock_state(2, 2.0, 4, TruncationPolicy::Error);
        assert!(matches!(err, Err(HilbertError::TruncationLoss { .. })));
        assert!(displaced_fock_state(2, 2.0, 4, TruncationPolicy::Warn).is_ok());
        assert!(matches!(displaced_fock_state(4, 0.1, 4, TruncationPolicy::Warn), Err(HilbertError::LevelAboveCutoff { .. })));
    }

    #[test]
    fn label_parsing() {
        assert_eq!("1,0,2".parse::<FockLabel>().unwrap(), FockLabel::new(1, 0, 2));
        assert_eq!("|0, 1, 0>".parse::<FockLabel>().unwrap(), FockLabel::new(0, 1, 0));
        assert!("1,0".parse::<FockLabel>().is_err());
    }
}
