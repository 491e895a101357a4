//! Exact diagonalization of the system Hamiltonian, adiabatic level tracking
//! across ω₂ sweeps and minimum-splitting search at avoided crossings.

use ndarray::{s, Array1, Array2, ArrayView1};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::SpectrumError;
use crate::hilbert::{FockLabel, HilbertSpace, OperatorMatrix};
use crate::linalg::{eigh_complex, eigh_real};
use crate::model::{build_hamiltonian, SystemParams, DEGENERACY_TOL};

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
///
/// `states` may hold only the lowest few columns (see [`EigenSystem::truncated`]).
/// Each eigenvector is phased so that its largest component is real and
/// positive.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub space: HilbertSpace,
    pub energies: Array1<f64>,
    pub states: Array2<C64>,
    pub params: Option<SystemParams>,
}

impl EigenSystem {
    /// Number of eigenpairs held.
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn state(&self, j: usize) -> ArrayView1<'_, C64> {
        self.states.column(j)
    }

    /// Keeps the lowest `n` eigenpairs.
    pub fn truncated(mut self, n: usize) -> Self {
        let n = n.min(self.dim());
        self.energies = self.energies.slice(s![..n]).to_owned();
        self.states = self.states.slice(s![.., ..n]).to_owned();
        self
    }

    /// `|⟨label|ψ_j⟩|²` for every held eigenstate.
    pub fn bare_weights(&self, label: FockLabel) -> Result<Array1<f64>, SpectrumError> {
        let i = self.space.index(label).ok_or(crate::error::HilbertError::OutOfSpace(label))?;
        Ok(self.states.row(i).mapv(|c| c.norm_sqr()))
    }

    /// Index of the eigenstate with the largest weight on `label`.
    pub fn find_state(&self, label: FockLabel) -> Result<usize, SpectrumError> {
        Ok(argmax(self.bare_weights(label)?.iter().copied()))
    }

    /// Bare state carrying the largest weight of `|ψ_j⟩`.
    pub fn dominant_label(&self, j: usize) -> FockLabel {
        self.space.label(argmax(self.state(j).iter().map(|c| c.norm_sqr())))
    }

    /// `max_j ‖Hψ_j − E_jψ_j‖`.
    pub fn max_residual(&self, h: &OperatorMatrix) -> f64 {
        (0..self.dim())
            .map(|j| {
                let psi = self.state(j).to_owned();
                let r = h.apply(&psi) - psi.mapv(|c| c * self.energies[j]);
                r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max |⟨ψ_i|ψ_j⟩ − δ_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.states.t().mapv(|c| c.conj()).dot(&self.states);
        g.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm())
            .fold(0.0, f64::max)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Groups basis indices into the connected components of the matrix graph.
fn connected_blocks(h: &OperatorMatrix) -> Vec<Vec<usize>> {
    let n = h.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j, _) in h.iter() {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

/// Dense eigendecomposition of a Hermitian operator.
///
/// The matrix is split into its decoupled blocks (for the system Hamiltonian,
/// the even and odd photon-number sectors) which are diagonalized separately;
/// real blocks use the real symmetric solver.
pub fn diagonalize(h: &OperatorMatrix) -> Result<EigenSystem, SpectrumError> {
    let scale = h.max_abs().max(1.0);
    let herm = h.hermiticity_error();
    if herm > 1e-12 * scale {
        return Err(SpectrumError::NotHermitian(herm));
    }
    let space = h.space();
    let dim = h.dim();
    let real = h.is_real();
    let mut pairs: Vec<(f64, Vec<(usize, C64)>)> = Vec::with_capacity(dim);
    for block in connected_blocks(h) {
        let m = block.len();
        let mut pos = vec![usize::MAX; dim];
        for (p, &i) in block.iter().enumerate() {
            pos[i] = p;
        }
        let entries = block.iter().flat_map(|&i| {
            let row = pos[i];
            h.iter_row(i).map(move |(j, v)| (row, j, v))
        });
        if real {
            let mut a = Array2::<f64>::zeros((m, m));
            for (r, j, v) in entries {
                a[[r, pos[j]]] = v.re;
            }
            let (w, v) = eigh_real(&a).map_err(SpectrumError::Eigensolver)?;
            for c in 0..m {
                pairs.push((w[c], block.iter().enumerate().map(|(r, &i)| (i, C64::new(v[[r, c]], 0.0))).collect()));
            }
        } else {
            let mut a = Array2::<C64>::zeros((m, m));
            for (r, j, v) in entries {
                a[[r, pos[j]]] = v;
            }
            let (w, v) = eigh_complex(&a).map_err(SpectrumError::Eigensolver)?;
            for c in 0..m {
                pairs.push((w[c], block.iter().enumerate().map(|(r, &i)| (i, v[[r, c]])).collect()));
            }
        }
    }
    if pairs.iter().any(|(e, _)| !e.is_finite()) {
        return Err(SpectrumError::Eigensolver("non-finite eigenvalue".into()));
    }

    // Ascending energies; inside a degenerate run, order by dominant bare index.
    let dominant = |v: &[(usize, C64)]| {
        let mut best = (usize::MAX, -1.0);
        for &(i, c) in v {
            let w = c.norm_sqr();
            if w > best.1 + 1e-12 || ((w - best.1).abs() <= 1e-12 && i < best.0) {
                best = (i, w);
            }
        }
        best.0
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 - pairs[end - 1].0 < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by_key(|p| dominant(&p.1));
        }
        start = end;
    }

    let mut energies = Array1::zeros(dim);
    let mut states = Array2::zeros((dim, dim));
    for (c, (e, v)) in pairs.into_iter().enumerate() {
        energies[c] = e;
        let lead = v.iter().map(|&(_, z)| z).fold(C64::new(0.0, 0.0), |acc, z| {
            if z.norm() > acc.norm() + 1e-12 {
                z
            } else {
                acc
            }
        });
        let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { C64::new(1.0, 0.0) };
        for (i, z) in v {
            states[[i, c]] = z * phase;
        }
    }
    Ok(EigenSystem { space, energies, states, params: None })
}

/// Builds and diagonalizes the full system Hamiltonian.
pub fn diagonalize_system(space: HilbertSpace, params: &SystemParams) -> Result<EigenSystem, SpectrumError> {
    params.validate()?;
    let mut eig = diagonalize(&build_hamiltonian(space, params))?;
    eig.params = Some(*params);
    Ok(eig)
}

/// Closed-form energy of the photon-number-conserving model (pair term
/// dropped): `E = ω_c n − Σ_i g_i² n²/ω_i + Σ_i ω_i k_i`.
pub fn analytic_om_spectrum(p: &SystemParams, k1: usize, k2: usize, n: usize) -> f64 {
    let n = n as f64;
    p.omega_c * n - (p.g_1 * p.g_1 / p.omega_1 + p.g_2 * p.g_2 / p.omega_2) * n * n
        + p.omega_1 * k1 as f64
        + p.omega_2 * k2 as f64
}

/// Levels along an ω₂ sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub sweep_values: Vec<f64>,
    /// `[point, j]` = `E_{j+1} − E₀`, energy ordered.
    pub level_curves: Array2<f64>,
    /// `[point][label]` = energy index of the adiabatically continued level.
    pub adiabatic_labels: Vec<Vec<usize>>,
    /// Smallest matched overlap between each point and the next.
    pub step_overlaps: Vec<f64>,
    /// Dominant bare state of each adiabatic label at the first point.
    pub initial_labels: Vec<FockLabel>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    /// `[point, label]` = `E − E₀` following adiabatic labels (label 0 is the
    /// ground state, omitted).
    pub fn tracked_curves(&self) -> Array2<f64> {
        let n = self.level_curves.ncols();
        let mut out = Array2::zeros((self.sweep_values.len(), n));
        for (p, labels) in self.adiabatic_labels.iter().enumerate() {
            for l in 1..=n {
                let idx = labels[l];
                out[[p, l - 1]] = if idx == 0 { 0.0 } else { self.level_curves[[p, idx - 1]] };
            }
        }
        out
    }
}

/// Solves the square assignment problem maximizing `Σ w[i][σ(i)]`.
pub fn optimal_assignment(w: &Array2<f64>) -> Vec<usize> {
    // Hungarian algorithm (potentials form) on cost = −w.
    let n = w.nrows();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = -w[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Matches eigenvectors at consecutive sweep points: greedy by maximal overlap,
/// falling back to the optimal assignment when greedy picks collide.
fn match_levels(overlaps: &Array2<f64>) -> Vec<usize> {
    let n = overlaps.nrows();
    let greedy: Vec<usize> = (0..n).map(|i| argmax(overlaps.row(i).iter().copied())).collect();
    let mut seen = vec![false; n];
    let unique = greedy.iter().all(|&j| !std::mem::replace(&mut seen[j], true));
    if unique {
        greedy
    } else {
        optimal_assignment(overlaps)
    }
}

/// Minimum overlap tolerated between matched levels before the tracker gives
/// up and falls back to energy order.
pub const MIN_TRACKING_OVERLAP: f64 = 0.5;

/// Levels `E_j − E₀` (`j = 1..=n_levels`) over an ascending ω₂ grid, with
/// adiabatic labels from eigenvector overlaps.
pub fn sweep_levels(
    space: HilbertSpace,
    template: &SystemParams,
    omega2_grid: &[f64],
    n_levels: usize,
) -> Result<SweepResult, SpectrumError> {
    if omega2_grid.len() < 2 {
        return Err(SpectrumError::Grid("at least two points are required".into()));
    }
    if omega2_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SpectrumError::Grid("grid must be strictly ascending".into()));
    }
    let n_track = (n_levels + 1).min(space.dim());
    let points: Vec<EigenSystem> = omega2_grid
        .par_iter()
        .map(|&w2| diagonalize_system(space, &template.with_omega_2(w2)).map(|e| e.truncated(n_track)))
        .collect::<Result<_, _>>()?;

    let mut level_curves = Array2::zeros((points.len(), n_track - 1));
    for (p, eig) in points.iter().enumerate() {
        for j in 1..n_track {
            level_curves[[p, j - 1]] = eig.energies[j] - eig.energies[0];
        }
    }

    let mut labels = vec![(0..n_track).collect::<Vec<_>>()];
    let mut step_overlaps = Vec::new();
    let mut warnings = Vec::new();
    for p in 0..points.len() - 1 {
        let ov = points[p].states.t().mapv(|c| c.conj()).dot(&points[p + 1].states).mapv(|c| c.norm());
        let sigma = match_levels(&ov);
        let worst = (0..n_track).map(|i| ov[[i, sigma[i]]]).fold(f64::INFINITY, f64::min);
        step_overlaps.push(worst);
        let prev = &labels[p];
        let next = if worst < MIN_TRACKING_OVERLAP {
            warnings.push(format!(
                "tracking overlap {worst:.3} between omega_2 = {} and {}; falling back to energy order",
                omega2_grid[p],
                omega2_grid[p + 1]
            ));
            (0..n_track).collect()
        } else {
            prev.iter().map(|&idx| sigma[idx]).collect()
        };
        labels.push(next);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let initial_labels = (0..n_track).map(|j| points[0].dominant_label(j)).collect();
    Ok(SweepResult {
        sweep_values: omega2_grid.to_vec(),
        level_curves,
        adiabatic_labels: labels,
        step_overlaps,
        initial_labels,
        warnings,
    })
}

/// Which two levels form the avoided crossing of interest.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelPairSelector {
    /// Fixed energy indices.
    Indices(usize, usize),
    /// The two eigenstates with the largest combined weight on the two bare
    /// states.
    BareStates(FockLabel, FockLabel),
}

impl LevelPairSelector {
    pub fn one_phonon() -> Self {
        Self::BareStates(FockLabel::new(1, 0, 0), FockLabel::new(0, 1, 0))
    }

    /// Energy indices `(j, k)` with `j < k`.
    pub fn select(&self, eig: &EigenSystem) -> Result<(usize, usize), SpectrumError> {
        let (j, k) = match *self {
            Self::Indices(j, k) => (j, k),
            Self::BareStates(a, b) => {
                let w = eig.bare_weights(a)? + eig.bare_weights(b)?;
                let first = argmax(w.iter().copied());
                let second = argmax(w.iter().enumerate().map(|(i, &x)| if i == first { -1.0 } else { x }));
                (first, second)
            }
        };
        if j == k || j.max(k) >= eig.dim() {
            return Err(SpectrumError::Selection(format!("invalid level pair ({j}, {k})")));
        }
        Ok((j.min(k), j.max(k)))
    }

    /// Bare states used for the hybridization check.
    fn reference_labels(&self, eig: &EigenSystem, j: usize, k: usize) -> (FockLabel, FockLabel) {
        match *self {
            Self::BareStates(a, b) => (a, b),
            Self::Indices(..) => {
                let w: Array1<f64> = eig.state(j).mapv(|c| c.norm_sqr()) + eig.state(k).mapv(|c| c.norm_sqr());
                let first = argmax(w.iter().copied());
                let second = argmax(w.iter().enumerate().map(|(i, &x)| if i == first { -1.0 } else { x }));
                let (a, b) = (eig.space.label(first), eig.space.label(second));
                (a.min(b), a.max(b))
            }
        }
    }
}

/// Probabilities `|⟨(a ± b)/√2|ψ⟩|²` for the lower and upper member of the pair.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridizationCheck {
    pub reference: (FockLabel, FockLabel),
    pub lower_symmetric: f64,
    pub lower_antisymmetric: f64,
    pub upper_symmetric: f64,
    pub upper_antisymmetric: f64,
}

impl HybridizationCheck {
    fn compute(eig: &EigenSystem, j: usize, k: usize, a: FockLabel, b: FockLabel) -> Result<Self, SpectrumError> {
        let ia = eig.space.index(a).ok_or(crate::error::HilbertError::OutOfSpace(a))?;
        let ib = eig.space.index(b).ok_or(crate::error::HilbertError::OutOfSpace(b))?;
        let proj = |col: usize, sign: f64| {
            let s = eig.states[[ia, col]] + eig.states[[ib, col]] * sign;
            (s.norm_sqr() / 2.0).min(1.0)
        };
        Ok(Self {
            reference: (a, b),
            lower_symmetric: proj(j, 1.0),
            lower_antisymmetric: proj(j, -1.0),
            upper_symmetric: proj(k, 1.0),
            upper_antisymmetric: proj(k, -1.0),
        })
    }

    /// Largest probability of either member on either combination.
    pub fn best(&self) -> f64 {
        [self.lower_symmetric, self.lower_antisymmetric, self.upper_symmetric, self.upper_antisymmetric]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplittingReport {
    pub omega2_min: f64,
    /// Minimum splitting `2λ`.
    pub gap: f64,
    pub level_pair: (usize, usize),
    pub hybridization_check: HybridizationCheck,
    /// Energies `E_j − E₀` of the pair at the minimum.
    pub pair_energies: (f64, f64),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MinSplittingOptions {
    /// Points in the coarse scan preceding the golden-section search.
    pub coarse_points: usize,
    /// Relative tolerance on the location of the minimum.
    pub rel_tol: f64,
}

impl Default for MinSplittingOptions {
    fn default() -> Self {
        Self { coarse_points: 21, rel_tol: 1e-6 }
    }
}

fn pair_gap(space: HilbertSpace, template: &SystemParams, sel: &LevelPairSelector, w2: f64) -> Result<f64, SpectrumError> {
    let eig = diagonalize_system(space, &template.with_omega_2(w2))?;
    let (j, k) = sel.select(&eig)?;
    Ok(eig.energies[k] - eig.energies[j])
}

/// Locates the minimum gap of a level pair over ω₂ inside `bracket`.
pub fn find_min_splitting(
    space: HilbertSpace,
    template: &SystemParams,
    selector: &LevelPairSelector,
    bracket: (f64, f64),
    opts: MinSplittingOptions,
) -> Result<SplittingReport, SpectrumError> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) || opts.coarse_points < 3 {
        return Err(SpectrumError::Grid(format!("invalid bracket [{lo}, {hi}]")));
    }
    let n = opts.coarse_points;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let gaps: Vec<f64> = grid.par_iter().map(|&w| pair_gap(space, template, selector, w)).collect::<Result<_, _>>()?;
    let i = argmax(gaps.iter().map(|g| -g));
    if i == 0 || i == n - 1 {
        return Err(SpectrumError::Bracket { lo, hi, at: grid[i] });
    }

    // Golden-section search on the cell around the coarse minimum.
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = pair_gap(space, template, selector, c)?;
    let mut fd = pair_gap(space, template, selector, d)?;
    while (b - a) > opts.rel_tol * 0.5 * (a + b).abs() {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = pair_gap(space, template, selector, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = pair_gap(space, template, selector, d)?;
        }
    }
    let omega2_min = if fc < fd { c } else { d };
    let eig = diagonalize_system(space, &template.with_omega_2(omega2_min))?;
    let (j, k) = selector.select(&eig)?;
    let (ra, rb) = selector.reference_labels(&eig, j, k);
    Ok(SplittingReport {
        omega2_min,
        gap: eig.energies[k] - eig.energies[j],
        level_pair: (j, k),
        hybridization_check: HybridizationCheck::compute(&eig, j, k, ra, rb)?,
        pair_energies: (eig.energies[j] - eig.energies[0], eig.energies[k] - eig.energies[0]),
    })
}

/// Bracket around ω₂ = ω₁ wide enough for the one-phonon anticrossing at
/// coupling `g`.
pub fn one_phonon_bracket(g: f64) -> (f64, f64) {
    let half = (0.3 * g).max(0.004);
    (1.0 - half, 1.0 + half)
}

/// Minimum one-phonon splitting for each coupling in `g_grid`.
pub fn splitting_vs_coupling(
    space: HilbertSpace,
    template: &SystemParams,
    g_grid: &[f64],
    opts: MinSplittingOptions,
) -> Result<Vec<(f64, SplittingReport)>, SpectrumError> {
    if g_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SpectrumError::Grid("coupling grid must be strictly ascending".into()));
    }
    g_grid
        .par_iter()
        .map(|&g| {
            let p = template.with_coupling(g);
            find_min_splitting(space, &p, &LevelPairSelector::one_phonon(), one_phonon_bracket(g), opts).map(|r| (g, r))
        })
        .collect()
}
