//! Second-order effective couplings between zero-photon phonon states mediated
//! by virtual photon pairs, and their comparison with exact spectra.
//!
//! Intermediate states are the displaced two-photon states `|k₂, q₂, 2⟩` of the
//! photon-number-conserving model; a zero-photon state `|k'₀, q'₀, 0⟩` couples to
//! them only through the pair term. For states `i, f` of a nearly degenerate
//! zero-photon manifold the effective Hamiltonian element is
//!
//! `X_fi = Σ_{k,q} M_f M_i · ½ [1/(E_i − E_{k,q,2}) + 1/(E_f − E_{k,q,2})]`
//!
//! with `M = ⟨k₂,q₂,2|V_DCE|·⟩` and exact energies of the photon-conserving
//! model. The diagonal gives level shifts `Δ`, the off-diagonal couplings `λ`.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{HilbertError, PerturbationError};
use crate::linalg::eigh_real;
use crate::hilbert::{displacement_overlap, FockLabel, HilbertSpace, Mode};
use crate::model::SystemParams;
use crate::spectrum::{
    analytic_om_spectrum, diagonalize_system, find_min_splitting, one_phonon_bracket, EigenSystem,
    LevelPairSelector, MinSplittingOptions,
};

/// Shell contributions below this are treated as converged.
pub const SHELL_TOL: f64 = 1e-10;
/// Default largest intermediate shell `k + q`.
pub const DEFAULT_SUM_CUTOFF: usize = 40;

/// `⟨k₂|(b + b†)|k'₀⟩ = √k' D_{k,k'−1}(2β) + √(k'+1) D_{k,k'+1}(2β)`.
fn quadrature_overlap(k: usize, k_prime: usize, two_beta: f64) -> f64 {
    let down = if k_prime > 0 { (k_prime as f64).sqrt() * displacement_overlap(k, k_prime - 1, two_beta) } else { 0.0 };
    down + ((k_prime + 1) as f64).sqrt() * displacement_overlap(k, k_prime + 1, two_beta)
}

/// Coupling-free pair-term amplitude
///
/// `A^{k'q'}_{kq} = √2 { [√k' D_{k,k'−1}(2β₁) + √(k'+1) D_{k,k'+1}(2β₁)] D_{q,q'}(2β₂)
///               + [√q' D_{q,q'−1}(2β₂) + √(q'+1) D_{q,q'+1}(2β₂)] D_{k,k'}(2β₁) }`.
///
/// For equal couplings `g₁ = g₂ = g` the matrix element of the pair term between
/// `|k'₀,q'₀,0⟩` and `|k₂,q₂,2⟩` is `(g/2) A`. Indices must lie below `truncation`.
pub fn a_coefficient(
    p: &SystemParams,
    k: usize,
    q: usize,
    k_prime: usize,
    q_prime: usize,
    truncation: usize,
) -> Result<f64, PerturbationError> {
    for level in [k, q, k_prime, q_prime] {
        if level >= truncation {
            return Err(HilbertError::LevelAboveCutoff { level, cutoff: truncation }.into());
        }
    }
    let (b1, b2) = (2.0 * p.beta(Mode::Mirror1), 2.0 * p.beta(Mode::Mirror2));
    let t1 = quadrature_overlap(k, k_prime, b1) * displacement_overlap(q, q_prime, b2);
    let t2 = quadrature_overlap(q, q_prime, b2) * displacement_overlap(k, k_prime, b1);
    Ok(std::f64::consts::SQRT_2 * (t1 + t2))
}

/// `⟨k₂,q₂,2|V_DCE|k'₀,q'₀,0⟩` for arbitrary couplings `g₁, g₂`.
pub fn dce_matrix_element(p: &SystemParams, k: usize, q: usize, k_prime: usize, q_prime: usize) -> f64 {
    let (b1, b2) = (2.0 * p.beta(Mode::Mirror1), 2.0 * p.beta(Mode::Mirror2));
    let t1 = p.g_1 * quadrature_overlap(k, k_prime, b1) * displacement_overlap(q, q_prime, b2);
    let t2 = p.g_2 * quadrature_overlap(q, q_prime, b2) * displacement_overlap(k, k_prime, b1);
    std::f64::consts::FRAC_1_SQRT_2 * (t1 + t2)
}

/// Effective Hamiltonian correction `X_fi` within the zero-photon manifold
/// spanned by `states` (pairs `(k', q')`), summed over intermediate shells
/// `k + q = 0, 1, …` until a shell changes every entry by less than
/// [`SHELL_TOL`].
pub fn effective_block(
    p: &SystemParams,
    states: &[(usize, usize)],
    sum_cutoff: usize,
) -> Result<Array2<f64>, PerturbationError> {
    if sum_cutoff < 4 {
        return Err(PerturbationError::SumCutoff(sum_cutoff));
    }
    p.validate()?;
    let n = states.len();
    let e_init: Vec<f64> = states.iter().map(|&(k, q)| analytic_om_spectrum(p, k, q, 0)).collect();
    let first_check = states.iter().map(|&(k, q)| k + q).max().unwrap_or(0) + 2;
    let mut x = Array2::<f64>::zeros((n, n));
    let mut last_change = f64::INFINITY;
    for shell in 0..=sum_cutoff {
        let mut contrib = Array2::<f64>::zeros((n, n));
        for k in 0..=shell {
            let q = shell - k;
            let e_mid = analytic_om_spectrum(p, k, q, 2);
            let m: Vec<f64> = states.iter().map(|&(kp, qp)| dce_matrix_element(p, k, q, kp, qp)).collect();
            for i in 0..n {
                for f in 0..n {
                    let (di, df) = (e_init[i] - e_mid, e_init[f] - e_mid);
                    for d in [di, df] {
                        if d.abs() < 1e-12 {
                            return Err(PerturbationError::Resonance { k, q, denominator: d });
                        }
                    }
                    contrib[[f, i]] += m[f] * m[i] * 0.5 * (1.0 / di + 1.0 / df);
                }
            }
        }
        x += &contrib;
        last_change = contrib.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if shell >= first_check && last_change < SHELL_TOL {
            return Ok(x);
        }
    }
    Err(PerturbationError::NotConverged { shells: sum_cutoff + 1, change: last_change })
}

pub const ONE_PHONON_STATES: [(usize, usize); 2] = [(1, 0), (0, 1)];
pub const TWO_PHONON_STATES: [(usize, usize); 3] = [(2, 0), (0, 2), (1, 1)];

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OnePhononCouplings {
    pub lambda_10_01: f64,
    pub delta_10: f64,
    pub delta_01: f64,
}

pub fn effective_coupling_1phonon(p: &SystemParams, sum_cutoff: usize) -> Result<OnePhononCouplings, PerturbationError> {
    let x = effective_block(p, &ONE_PHONON_STATES, sum_cutoff)?;
    Ok(OnePhononCouplings { lambda_10_01: x[[0, 1]], delta_10: x[[0, 0]], delta_01: x[[1, 1]] })
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TwoPhononCouplings {
    pub lambda_20_02: f64,
    pub lambda_20_11: f64,
    pub lambda_02_11: f64,
    pub delta_20: f64,
    pub delta_02: f64,
    pub delta_11: f64,
}

pub fn effective_coupling_2phonon(p: &SystemParams, sum_cutoff: usize) -> Result<TwoPhononCouplings, PerturbationError> {
    let x = effective_block(p, &TWO_PHONON_STATES, sum_cutoff)?;
    Ok(TwoPhononCouplings {
        lambda_20_02: x[[0, 1]],
        lambda_20_11: x[[0, 2]],
        lambda_02_11: x[[1, 2]],
        delta_20: x[[0, 0]],
        delta_02: x[[1, 1]],
        delta_11: x[[2, 2]],
    })
}

/// Small effective Hamiltonian on a zero-photon manifold: bare energies plus
/// shifts on the diagonal, effective couplings off it.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveSubspace {
    pub basis_labels: Vec<FockLabel>,
    pub h_eff: Array2<f64>,
}

impl EffectiveSubspace {
    pub fn build(p: &SystemParams, states: &[(usize, usize)], sum_cutoff: usize) -> Result<Self, PerturbationError> {
        let mut h_eff = effective_block(p, states, sum_cutoff)?;
        for (i, &(k, q)) in states.iter().enumerate() {
            h_eff[[i, i]] += analytic_om_spectrum(p, k, q, 0);
        }
        Ok(Self { basis_labels: states.iter().map(|&(k, q)| FockLabel::new(k, q, 0)).collect(), h_eff })
    }

    pub fn one_phonon(p: &SystemParams, sum_cutoff: usize) -> Result<Self, PerturbationError> {
        Self::build(p, &ONE_PHONON_STATES, sum_cutoff)
    }

    pub fn two_phonon(p: &SystemParams, sum_cutoff: usize) -> Result<Self, PerturbationError> {
        Self::build(p, &TWO_PHONON_STATES, sum_cutoff)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceSpectrum {
    /// Ascending eigenvalues.
    pub eigenvalues: Array1<f64>,
    /// `eigenvalues[i+1] − eigenvalues[i]`.
    pub splittings: Vec<f64>,
}

impl SubspaceSpectrum {
    /// `eigenvalues[hi] − eigenvalues[lo]`.
    pub fn gap(&self, lo: usize, hi: usize) -> f64 {
        self.eigenvalues[hi] - self.eigenvalues[lo]
    }
}

pub fn effective_subspace_spectrum(sub: &EffectiveSubspace) -> SubspaceSpectrum {
    let (w, _) = eigh_real(&sub.h_eff).expect("small symmetric eigenproblem");
    let mut eigenvalues = w.to_vec();
    eigenvalues.sort_by(f64::total_cmp);
    let splittings = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    SubspaceSpectrum { eigenvalues: Array1::from(eigenvalues), splittings }
}

/// One row of a numerical-versus-effective-theory comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub quantity: &'static str,
    pub numerical: f64,
    pub theoretical: f64,
}

/// Three eigenstates with the largest weight on the two-phonon zero-photon
/// manifold, in ascending energy.
fn two_phonon_triplet(eig: &EigenSystem) -> Result<[usize; 3], PerturbationError> {
    let mut w = Array1::<f64>::zeros(eig.dim());
    for (k, q) in TWO_PHONON_STATES {
        w += &eig.bare_weights(FockLabel::new(k, q, 0))?;
    }
    let mut idx: Vec<usize> = (0..eig.dim()).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    let mut top = [idx[0], idx[1], idx[2]];
    top.sort_unstable();
    Ok(top)
}

/// Splittings at a resonance point: the one-phonon doublet and the three gaps
/// of the two-phonon triplet (top−middle, top−bottom, middle−bottom), each from
/// exact diagonalization and from the effective Hamiltonians.
pub fn splitting_table(space: HilbertSpace, p: &SystemParams, sum_cutoff: usize) -> Result<Vec<TableRow>, PerturbationError> {
    let eig = diagonalize_system(space, p)?;
    let (j, k) = LevelPairSelector::one_phonon().select(&eig)?;
    let [t0, t1, t2] = two_phonon_triplet(&eig)?;
    let e = &eig.energies;
    let one = effective_subspace_spectrum(&EffectiveSubspace::one_phonon(p, sum_cutoff)?);
    let two = effective_subspace_spectrum(&EffectiveSubspace::two_phonon(p, sum_cutoff)?);
    Ok(vec![
        TableRow { quantity: "2lambda_10_01", numerical: e[k] - e[j], theoretical: one.gap(0, 1) },
        TableRow { quantity: "2lambda_20_11", numerical: e[t2] - e[t1], theoretical: two.gap(1, 2) },
        TableRow { quantity: "2lambda_20_02", numerical: e[t2] - e[t0], theoretical: two.gap(0, 2) },
        TableRow { quantity: "2lambda_02_11", numerical: e[t1] - e[t0], theoretical: two.gap(0, 1) },
    ])
}

/// Level shifts of the lowest zero-photon phonon states away from resonance:
/// exact eigenvalue (of the eigenstate with the largest weight on the bare
/// state) minus the bare energy, against the effective-theory shift.
pub fn shift_table(space: HilbertSpace, p: &SystemParams, sum_cutoff: usize) -> Result<Vec<TableRow>, PerturbationError> {
    let eig = diagonalize_system(space, p)?;
    let one = effective_coupling_1phonon(p, sum_cutoff)?;
    let two = effective_coupling_2phonon(p, sum_cutoff)?;
    let rows = [
        ("delta_10", (1, 0), one.delta_10),
        ("delta_01", (0, 1), one.delta_01),
        ("delta_11", (1, 1), two.delta_11),
        ("delta_02", (0, 2), two.delta_02),
        ("delta_20", (2, 0), two.delta_20),
    ];
    rows.into_iter()
        .map(|(quantity, (k, q), theoretical)| {
            let j = eig.find_state(FockLabel::new(k, q, 0))?;
            let numerical = eig.energies[j] - analytic_om_spectrum(p, k, q, 0);
            Ok(TableRow { quantity, numerical, theoretical })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub g: f64,
    pub omega_c: f64,
    pub omega2_min: f64,
    pub numerical_gap: f64,
    /// `2|λ|` from the effective theory at the template's ω₂.
    pub theoretical_gap: f64,
    pub relative_deviation: f64,
}

/// Numerical one-phonon minimum splitting against the effective-theory `2|λ|`
/// for each parameter point.
pub fn compare_perturbation_vs_numerics(
    space: HilbertSpace,
    params_list: &[SystemParams],
    sum_cutoff: usize,
    opts: MinSplittingOptions,
) -> Result<Vec<ComparisonRow>, PerturbationError> {
    params_list
        .par_iter()
        .map(|p| {
            let g = p.g_1.max(p.g_2);
            let rep = find_min_splitting(space, p, &LevelPairSelector::one_phonon(), one_phonon_bracket(g), opts)?;
            let theory = 2.0 * effective_coupling_1phonon(p, sum_cutoff)?.lambda_10_01.abs();
            Ok(ComparisonRow {
                g,
                omega_c: p.omega_c,
                omega2_min: rep.omega2_min,
                numerical_gap: rep.gap,
                theoretical_gap: theory,
                relative_deviation: (theory - rep.gap).abs() / rep.gap,
            })
        })
        .collect()
}

/// Optomechanical coupling of a circuit platform: `g = 2 g_m g_c² / Δ²`.
pub fn platform_coupling_estimate(g_m: f64, g_c: f64, detuning: f64) -> Result<f64, PerturbationError> {
    if detuning == 0.0 {
        return Err(PerturbationError::ZeroDetuning);
    }
    Ok(2.0 * g_m * g_c * g_c / (detuning * detuning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn a_coefficient_bare_limit() {
        let p = SystemParams::symmetric(0.85, 1.0, 0.0);
        let s2 = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(a_coefficient(&p, 0, 0, 1, 0, 8).unwrap(), s2, epsilon = 1e-15);
        assert_abs_diff_eq!(a_coefficient(&p, 2, 0, 1, 0, 8).unwrap(), s2 * 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a_coefficient(&p, 1, 1, 1, 0, 8).unwrap(), s2, epsilon = 1e-15);
        assert_eq!(a_coefficient(&p, 1, 0, 1, 0, 8).unwrap(), 0.0);
        assert!(a_coefficient(&p, 8, 0, 1, 0, 8).is_err());
    }

    #[test]
    fn matrix_element_matches_coefficient() {
        let p = SystemParams::symmetric(0.85, 1.0, 0.1);
        for (k, q, kp, qp) in [(0, 0, 0, 1), (1, 2, 1, 0), (3, 0, 2, 0)] {
            let a = a_coefficient(&p, k, q, kp, qp, 8).unwrap();
            assert_abs_diff_eq!(dce_matrix_element(&p, k, q, kp, qp), 0.05 * a, epsilon = 1e-15);
        }
    }

    #[test]
    fn couplings_vanish_without_coupling() {
        let p = SystemParams::symmetric(0.85, 1.0, 0.0);
        let one = effective_coupling_1phonon(&p, 10).unwrap();
        assert_eq!((one.lambda_10_01, one.delta_10, one.delta_01), (0.0, 0.0, 0.0));
        let two = effective_coupling_2phonon(&p, 10).unwrap();
        assert_eq!(two.lambda_20_02, 0.0);
        assert_eq!(two.delta_11, 0.0);
    }

    #[test]
    fn bad_inputs() {
        let p = SystemParams::symmetric(0.85, 1.0, 0.1);
        assert_eq!(effective_coupling_1phonon(&p, 3), Err(PerturbationError::SumCutoff(3)));
        assert!(matches!(effective_coupling_1phonon(&p, 4), Err(PerturbationError::NotConverged { .. })));
        // 2ω_c tuned onto the one-phonon level makes |0,0,2> degenerate with |1,0,0>.
        let res = SystemParams::symmetric(0.5 + 4.0 * 0.01 * 0.01, 1.0, 0.01);
        assert!(matches!(effective_coupling_1phonon(&res, 40), Err(PerturbationError::Resonance { k: 0, q: 0, .. })));
    }

    #[test]
    fn two_level_spectrum() {
        let sub = EffectiveSubspace { basis_labels: vec![], h_eff: ndarray::array![[1.0, 0.01], [0.01, 1.0]] };
        assert_abs_diff_eq!(effective_subspace_spectrum(&sub).splittings[0], 0.02, epsilon = 1e-15);
        let diag = EffectiveSubspace { basis_labels: vec![], h_eff: ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.3, 0.0], [0.0, 0.0, 2.0]] };
        let sp = effective_subspace_spectrum(&diag);
        assert_abs_diff_eq!(sp.splittings[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.splittings[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn platform_estimate() {
        let g_m = 12.0 * 0.02;
        let g_c = 0.1;
        assert_abs_diff_eq!(platform_coupling_estimate(g_m, g_c, 5.0 * g_c).unwrap(), 0.0192, epsilon = 1e-12);
        assert_eq!(platform_coupling_estimate(g_m, 0.0, 0.3).unwrap(), 0.0);
        let a = platform_coupling_estimate(0.02, 0.1, 0.4).unwrap();
        assert_abs_diff_eq!(platform_coupling_estimate(0.02, 0.2, 0.4).unwrap(), 4.0 * a, epsilon = 1e-15);
        assert_eq!(platform_coupling_estimate(0.02, 0.1, 0.0), Err(PerturbationError::ZeroDetuning));
    }
}
