//! Dressed master equation: jump operators between system eigenstates with
//! thermal rates, a coherent drive and an optional frequency modulation.

use std::collections::BTreeMap;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64 as C64;

use super::analysis::mirror_reduced_from_eigenbasis;
use super::integrator::{DormandPrince, Tolerances};
use super::{bose, log_negativity, DensityMatrix, G2_THRESHOLD};
use crate::error::DynamicsError;
use crate::hilbert::{number, quadrature, Mode};
use crate::model::{eigenbasis_matrix, lowering_part, BathSpec, DressedOperatorSet, DriveSpec, ModulationSpec};
use crate::spectrum::EigenSystem;

/// Transitions whose frequencies differ by less than this share one jump
/// operator.
pub const MERGE_TOL: f64 = 1e-8;

/// Which eigenstates enter the dynamics.
///
/// The dressed observables, the dissipators and a weak drive only move
/// population between nearby levels, so levels far above the initial energy
/// can be dropped.
#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct Retention {
    /// Keep levels with `E − E₀ ≤ energy_window`.
    pub energy_window: Option<f64>,
    /// Hard cap on the number of levels.
    pub max_levels: Option<usize>,
}

impl Retention {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn window(energy_window: f64) -> Self {
        Self { energy_window: Some(energy_window), max_levels: None }
    }

    pub fn retained(&self, eig: &EigenSystem) -> usize {
        let mut d = match self.energy_window {
            Some(w) => eig.energies.iter().filter(|&&e| e - eig.energies[0] <= w).count(),
            None => eig.dim(),
        };
        if let Some(m) = self.max_levels {
            d = d.min(m);
        }
        d.max(1)
    }
}

/// One jump operator `L = Σ c |m⟩⟨n|` over transitions sharing a frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    pub mode: Mode,
    pub frequency: f64,
    /// `(m, n, ⟨ψ_m|(o + o†)|ψ_n⟩)` with `E_n > E_m`.
    pub transitions: Vec<(usize, usize, C64)>,
    /// Rate of `L` (emission), `γ(n̄ + 1)`.
    pub downward_rate: f64,
    /// Rate of `L†` (absorption), `γ n̄`.
    pub upward_rate: f64,
}

/// Everything needed to integrate the master equation over the retained
/// eigenstates.
#[derive(Clone, Debug)]
pub struct MasterEquationSetup {
    pub eigensystem: EigenSystem,
    pub retained: usize,
    pub baths: BathSpec,
    pub jumps: Vec<JumpChannel>,
    pub dressed: DressedOperatorSet,
    pub drive: DriveSpec,
    drive_operator: Option<Array2<C64>>,
    pub modulation: Option<ModulationSpec>,
    modulation_operator: Option<Array2<C64>>,
    rel_energies: Array1<f64>,
    /// Diagonal of `K = Σ rate L†L`.
    decay_diag: Array1<f64>,
    /// Off-diagonal part of `K`, if any.
    decay_offdiag: Option<Array2<C64>>,
    /// Sandwich terms `out[i,j] += c ρ[k,l]`.
    feed: Vec<(usize, usize, usize, usize, C64)>,
    observables: Observables,
}

#[derive(Clone, Debug)]
struct Observables {
    number: [Array2<C64>; 3],
    pairs: [Array2<C64>; 2],
}

fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|c| c.conj())
}

/// Builds jump operators for the cavity and both mirrors from the eigensystem
/// and bath parameters, keeping the lowest `retention.retained(eig)` levels.
pub fn build_master_equation(eig: &EigenSystem, baths: &BathSpec, retention: Retention) -> Result<MasterEquationSetup, DynamicsError> {
    baths.validate().map_err(|e| DynamicsError::InitialState(e.to_string()))?;
    let d = retention.retained(eig);
    let e = &eig.energies;
    let mut jumps = Vec::new();
    let mut lowering = Vec::new();
    for mode in Mode::ALL {
        let x = eigenbasis_matrix(eig, &quadrature(eig.space, mode), d);
        lowering.push(lowering_part(eig, x.clone()));
        let gamma = baths.rate(mode);
        if gamma == 0.0 {
            continue;
        }
        let mut transitions: Vec<(f64, usize, usize, C64)> = Vec::new();
        for m in 0..d {
            for n in (m + 1)..d {
                let w = e[n] - e[m];
                if w > MERGE_TOL && x[[m, n]].norm() > 1e-14 {
                    transitions.push((w, m, n, x[[m, n]]));
                }
            }
        }
        transitions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut start = 0;
        while start < transitions.len() {
            let mut end = start + 1;
            while end < transitions.len() && transitions[end].0 - transitions[end - 1].0 < MERGE_TOL {
                end += 1;
            }
            let group = &transitions[start..end];
            let frequency = group.iter().map(|t| t.0).sum::<f64>() / group.len() as f64;
            let nbar = bose(frequency, baths.temperature);
            jumps.push(JumpChannel {
                mode,
                frequency,
                transitions: group.iter().map(|&(_, m, n, c)| (m, n, c)).collect(),
                downward_rate: gamma * (nbar + 1.0),
                upward_rate: gamma * nbar,
            });
            start = end;
        }
    }
    let [a, b1, b2]: [Array2<C64>; 3] = lowering.try_into().expect("three modes");
    let dressed = DressedOperatorSet { a, b1, b2 };

    let mut k = Array2::<C64>::zeros((d, d));
    let mut feed: BTreeMap<(usize, usize, usize, usize), C64> = BTreeMap::new();
    for ch in &jumps {
        for &(ma, na, ca) in &ch.transitions {
            for &(mb, nb, cb) in &ch.transitions {
                if ch.downward_rate > 0.0 {
                    *feed.entry((ma, mb, na, nb)).or_default() += ca * cb.conj() * ch.downward_rate;
                    if ma == mb {
                        k[[na, nb]] += ca.conj() * cb * ch.downward_rate;
                    }
                }
                if ch.upward_rate > 0.0 {
                    *feed.entry((na, nb, ma, mb)).or_default() += ca.conj() * cb * ch.upward_rate;
                    if na == nb {
                        k[[ma, mb]] += ca * cb.conj() * ch.upward_rate;
                    }
                }
            }
        }
    }
    let decay_diag = k.diag().mapv(|c| c.re);
    let mut off = k;
    let mut any_off = false;
    for ((i, j), v) in off.indexed_iter_mut() {
        if i == j {
            *v = C64::new(0.0, 0.0);
        } else if v.norm() > 0.0 {
            any_off = true;
        }
    }
    let observables = Observables {
        number: [&dressed.a, &dressed.b1, &dressed.b2].map(|o| adjoint(o).dot(o)),
        pairs: [&dressed.b1, &dressed.b2].map(|o| {
            let o2 = o.dot(o);
            adjoint(&o2).dot(&o2)
        }),
    };
    Ok(MasterEquationSetup {
        eigensystem: eig.clone(),
        retained: d,
        baths: *baths,
        jumps,
        dressed,
        drive: DriveSpec::none(),
        drive_operator: None,
        modulation: None,
        modulation_operator: None,
        rel_energies: eig.energies.slice(ndarray::s![..d]).mapv(|x| x - eig.energies[0]),
        decay_diag,
        decay_offdiag: any_off.then_some(off),
        feed: feed.into_iter().filter(|(_, c)| c.norm() > 0.0).map(|((i, j, k, l), c)| (i, j, k, l, c)).collect(),
        observables,
    })
}

impl MasterEquationSetup {
    /// Adds the coherent force on a mirror, `F(t)(b_i + b_i†)` expressed in
    /// the eigenbasis.
    pub fn with_drive(mut self, drive: DriveSpec) -> Result<Self, DynamicsError> {
        drive.validate().map_err(|e| DynamicsError::InitialState(e.to_string()))?;
        self.drive_operator = drive
            .is_active()
            .then(|| eigenbasis_matrix(&self.eigensystem, &quadrature(self.eigensystem.space, drive.target.mode()), self.retained));
        self.drive = drive;
        Ok(self)
    }

    /// Adds the mirror-2 frequency step `f(t) b₂†b₂` expressed in the
    /// eigenbasis of the unmodulated Hamiltonian.
    pub fn with_modulation(mut self, modulation: ModulationSpec) -> Result<Self, DynamicsError> {
        modulation.validate().map_err(|e| DynamicsError::InitialState(e.to_string()))?;
        self.modulation_operator =
            Some(eigenbasis_matrix(&self.eigensystem, &number(self.eigensystem.space, Mode::Mirror2), self.retained));
        self.modulation = Some(modulation);
        Ok(self)
    }

    /// Retained energies relative to the ground state.
    pub fn energies(&self) -> &Array1<f64> {
        &self.rel_energies
    }

    /// Whether any operator beyond the diagonal part acts at time `t`.
    fn coherent_matrix(&self, t: f64, g: &mut Array2<C64>) -> bool {
        let mut active = false;
        g.fill(C64::new(0.0, 0.0));
        if let Some(k) = &self.decay_offdiag {
            g.scaled_add(C64::new(-0.5, 0.0), k);
            active = true;
        }
        if let Some(x) = &self.drive_operator {
            let f = self.drive.force(t);
            if f != 0.0 {
                g.scaled_add(C64::new(0.0, -f), x);
                active = true;
            }
        }
        if let (Some(n), Some(m)) = (&self.modulation_operator, &self.modulation) {
            let f = m.profile(t);
            if f != 0.0 {
                g.scaled_add(C64::new(0.0, -f), n);
                active = true;
            }
        }
        active
    }

    /// `dρ/dt` at time `t` (both row-major `d × d`).
    pub fn rhs(&self, t: f64, rho: ArrayView2<C64>, mut out: ArrayViewMut2<C64>, g: &mut Array2<C64>, p: &mut Array2<C64>) {
        let e = &self.rel_energies;
        let d = self.retained;
        for i in 0..d {
            for j in 0..d {
                let coef = C64::new(-0.5 * (self.decay_diag[i] + self.decay_diag[j]), -(e[i] - e[j]));
                out[[i, j]] = coef * rho[[i, j]];
            }
        }
        if self.coherent_matrix(t, g) {
            general_mat_mul(C64::new(1.0, 0.0), &*g, &rho, C64::new(0.0, 0.0), p);
            for i in 0..d {
                for j in 0..d {
                    out[[i, j]] += p[[i, j]] + p[[j, i]].conj();
                }
            }
        }
        for &(i, j, k, l, c) in &self.feed {
            out[[i, j]] += c * rho[[k, l]];
        }
    }

    pub fn mean_occupation(&self, rho: &DensityMatrix, mode: Mode) -> f64 {
        let idx = match mode {
            Mode::Cavity => 0,
            Mode::Mirror1 => 1,
            Mode::Mirror2 => 2,
        };
        rho.expectation(&self.observables.number[idx]).re
    }

    /// `g²` of a mirror's dressed phonons (`None` below threshold).
    pub fn g2(&self, rho: &DensityMatrix, mode: Mode) -> Option<f64> {
        let (n, pairs) = match mode {
            Mode::Mirror1 => (self.mean_occupation(rho, mode), &self.observables.pairs[0]),
            Mode::Mirror2 => (self.mean_occupation(rho, mode), &self.observables.pairs[1]),
            Mode::Cavity => return None,
        };
        if n < G2_THRESHOLD {
            return None;
        }
        Some((rho.expectation(pairs).re / (n * n)).max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub tolerances: Tolerances,
    /// Eigenstate indices whose populations are recorded.
    pub population_indices: Vec<usize>,
    /// Record the mirror-mirror logarithmic negativity (costly for large
    /// spaces).
    pub negativity: bool,
    /// Check the spectrum of ρ at every sample.
    pub positivity_check: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { tolerances: Tolerances::default(), population_indices: vec![0, 1, 2, 3], negativity: false, positivity_check: true }
    }
}

/// Health of a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Smallest eigenvalue of ρ seen (NaN when not checked).
    pub min_eigenvalue: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub warnings: Vec<String>,
}

/// Sampled observables of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub n_b1: Vec<f64>,
    pub n_b2: Vec<f64>,
    pub n_a: Vec<f64>,
    pub g2_1: Vec<Option<f64>>,
    pub g2_2: Vec<Option<f64>>,
    pub population_indices: Vec<usize>,
    /// `[sample][k]` population of eigenstate `population_indices[k]`.
    pub populations: Vec<Vec<f64>>,
    pub negativity: Option<Vec<f64>>,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
}

impl TrajectoryResult {
    /// Population series of one recorded eigenstate.
    pub fn population_series(&self, index: usize) -> Option<Vec<f64>> {
        let k = self.population_indices.iter().position(|&j| j == index)?;
        Some(self.populations.iter().map(|p| p[k]).collect())
    }
}

/// Integrates the master equation from `rho0` and samples observables on
/// `t_grid` (ascending, first point ≥ `rho0.time`).
pub fn evolve(
    setup: &MasterEquationSetup,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<TrajectoryResult, DynamicsError> {
    let d = setup.retained;
    if rho0.dim() != d {
        return Err(DynamicsError::Dimension { expected: d, got: rho0.dim() });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < rho0.time {
        return Err(DynamicsError::TimeGrid);
    }
    for &j in &opts.population_indices {
        if j >= d {
            return Err(DynamicsError::Index { index: j, available: d });
        }
    }
    let mut g = Array2::<C64>::zeros((d, d));
    let mut p = Array2::<C64>::zeros((d, d));
    let f = |t: f64, y: &[C64], dy: &mut [C64]| {
        let rho = ArrayView2::from_shape((d, d), y).expect("square state");
        let out = ArrayViewMut2::from_shape((d, d), dy).expect("square state");
        setup.rhs(t, rho, out, &mut g, &mut p);
    };
    let y0: Vec<C64> = rho0.entries.iter().copied().collect();
    let mut stepper = DormandPrince::new(f, rho0.time, y0, opts.tolerances);

    let n = t_grid.len();
    let mut res = TrajectoryResult {
        times: t_grid.to_vec(),
        n_b1: Vec::with_capacity(n),
        n_b2: Vec::with_capacity(n),
        n_a: Vec::with_capacity(n),
        g2_1: Vec::with_capacity(n),
        g2_2: Vec::with_capacity(n),
        population_indices: opts.population_indices.clone(),
        populations: Vec::with_capacity(n),
        negativity: opts.negativity.then(Vec::new),
        final_state: rho0.clone(),
        diagnostics: Diagnostics { min_eigenvalue: if opts.positivity_check { f64::INFINITY } else { f64::NAN }, ..Default::default() },
    };
    for &t in t_grid {
        stepper.integrate_to(t)?;
        let rho = DensityMatrix {
            entries: Array2::from_shape_vec((d, d), stepper.y().to_vec()).expect("square state"),
            time: t,
        };
        record(setup, &rho, &mut res, opts);
    }
    res.diagnostics.accepted_steps = stepper.stats.accepted;
    res.diagnostics.rejected_steps = stepper.stats.rejected;
    let diag = &mut res.diagnostics;
    if diag.max_trace_error > 1e-7 {
        diag.warnings.push(format!("trace drifted by {:.3e}", diag.max_trace_error));
    }
    if opts.positivity_check && diag.min_eigenvalue < -1e-6 {
        diag.warnings.push(format!("density matrix eigenvalue {:.3e} below -1e-6", diag.min_eigenvalue));
    }
    for w in &diag.warnings {
        log::warn!("{w}");
    }
    Ok(res)
}

fn record(setup: &MasterEquationSetup, rho: &DensityMatrix, res: &mut TrajectoryResult, opts: &EvolveOptions) {
    res.n_a.push(setup.mean_occupation(rho, Mode::Cavity));
    res.n_b1.push(setup.mean_occupation(rho, Mode::Mirror1));
    res.n_b2.push(setup.mean_occupation(rho, Mode::Mirror2));
    res.g2_1.push(setup.g2(rho, Mode::Mirror1));
    res.g2_2.push(setup.g2(rho, Mode::Mirror2));
    res.populations.push(opts.population_indices.iter().map(|&j| rho.entries[[j, j]].re).collect());
    if let Some(neg) = res.negativity.as_mut() {
        let reduced = mirror_reduced_from_eigenbasis(&setup.eigensystem, &rho.entries);
        neg.push(log_negativity(&reduced, setup.eigensystem.space.n_m1, setup.eigensystem.space.n_m2));
    }
    let diag = &mut res.diagnostics;
    diag.max_trace_error = diag.max_trace_error.max((rho.trace() - C64::new(1.0, 0.0)).norm());
    diag.max_hermiticity_error = diag.max_hermiticity_error.max(rho.hermiticity_error());
    if opts.positivity_check {
        diag.min_eigenvalue = diag.min_eigenvalue.min(rho.min_eigenvalue());
    }
    res.final_state = rho.clone();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{thermal_state, InitialState};
    use crate::hilbert::{make_space, FockLabel};
    use crate::model::SystemParams;
    use crate::spectrum::diagonalize_system;
    use approx::assert_abs_diff_eq;

    fn small() -> EigenSystem {
        diagonalize_system(make_space(4, 4, 4).unwrap(), &SystemParams::symmetric(0.495, 1.0, 0.03)).unwrap()
    }

    #[test]
    fn retention_window() {
        let eig = small();
        let d = Retention::window(2.6).retained(&eig);
        assert!(eig.energies[d - 1] - eig.energies[0] <= 2.6);
        assert!(eig.energies[d] - eig.energies[0] > 2.6);
        assert_eq!(Retention { energy_window: None, max_levels: Some(5) }.retained(&eig), 5);
        assert_eq!(Retention::all().retained(&eig), 64);
    }

    #[test]
    fn rates_obey_detailed_balance() {
        let eig = small();
        let baths = BathSpec { gamma_1: 1e-3, gamma_2: 2e-3, kappa: 5e-4, temperature: 0.2 };
        let setup = build_master_equation(&eig, &baths, Retention::window(2.2)).unwrap();
        assert!(!setup.jumps.is_empty());
        for ch in &setup.jumps {
            assert!(ch.downward_rate >= 0.0 && ch.upward_rate >= 0.0);
            assert_abs_diff_eq!(ch.upward_rate / ch.downward_rate, (-ch.frequency / 0.2).exp(), epsilon = 1e-12);
            for &(m, n, _) in &ch.transitions {
                assert!(setup.eigensystem.energies[n] > setup.eigensystem.energies[m]);
            }
        }
    }

    #[test]
    fn ground_state_is_stationary_without_drive_or_loss() {
        let eig = small();
        let setup = build_master_equation(&eig, &BathSpec::default(), Retention::window(2.2)).unwrap();
        let rho0 = InitialState::Ground.prepare(&eig, 0.0, setup.retained).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 5.0).collect();
        let tr = evolve(&setup, &rho0, &times, &EvolveOptions::default()).unwrap();
        for i in 0..times.len() {
            assert_eq!(tr.n_b1[i], 0.0);
            assert_eq!(tr.n_a[i], 0.0);
            assert_abs_diff_eq!(tr.populations[i][0], 1.0, epsilon = 1e-12);
            assert_eq!(tr.g2_1[i], None);
        }
    }

    #[test]
    fn thermal_state_is_a_fixed_point() {
        let eig = small();
        let baths = BathSpec { gamma_1: 0.01, gamma_2: 0.01, kappa: 0.01, temperature: 0.25 };
        let setup = build_master_equation(&eig, &baths, Retention::window(2.2)).unwrap();
        let rho = thermal_state(&eig, 0.25, setup.retained).unwrap();
        let d = setup.retained;
        let mut out = Array2::zeros((d, d));
        let (mut g, mut p) = (Array2::zeros((d, d)), Array2::zeros((d, d)));
        setup.rhs(0.0, rho.entries.view(), out.view_mut(), &mut g, &mut p);
        // Detailed balance holds exactly for the retained levels except at the
        // window edge, where upward transitions leave the set.
        let edge = eig.energies[d - 1] - eig.energies[0];
        let scale = (-(edge - 1.0) / 0.25).exp() * 0.05;
        assert!(out.iter().all(|c| c.norm() < scale.max(1e-14)), "max {:e}", out.iter().map(|c| c.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn excited_state_decays_to_ground() {
        let eig = small();
        let baths = BathSpec { gamma_1: 0.05, gamma_2: 0.05, kappa: 0.05, temperature: 0.0 };
        let setup = build_master_equation(&eig, &baths, Retention::window(2.2)).unwrap();
        let rho0 = InitialState::EigenstateLike(FockLabel::new(1, 1, 0)).prepare(&eig, 0.0, setup.retained).unwrap();
        let tr = evolve(&setup, &rho0, &[0.0, 50.0, 400.0], &EvolveOptions::default()).unwrap();
        assert!(tr.populations[2][0] > 0.999);
        assert!(tr.diagnostics.max_trace_error < 1e-7);
        assert!(tr.diagnostics.min_eigenvalue > -1e-6);
    }

    #[test]
    fn bad_inputs_rejected() {
        let eig = small();
        let setup = build_master_equation(&eig, &BathSpec::default(), Retention::window(1.5)).unwrap();
        let rho0 = DensityMatrix::eigenstate(0, setup.retained).unwrap();
        assert!(matches!(evolve(&setup, &rho0, &[1.0, 0.5], &EvolveOptions::default()), Err(DynamicsError::TimeGrid)));
        let wrong = DensityMatrix::eigenstate(0, setup.retained + 1).unwrap();
        assert!(matches!(evolve(&setup, &wrong, &[0.0], &EvolveOptions::default()), Err(DynamicsError::Dimension { .. })));
        let opts = EvolveOptions { population_indices: vec![999], ..Default::default() };
        assert!(matches!(evolve(&setup, &rho0, &[0.0], &opts), Err(DynamicsError::Index { .. })));
    }
}
