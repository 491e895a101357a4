//! Driven, dissipative dynamics in the dressed eigenbasis.
//!
//! States are density matrices over the lowest `d` eigenstates of the system
//! Hamiltonian. Observables use the dressed (energy-lowering) operators, so a
//! state with no real excitations reads zero phonons and photons even though
//! its bare occupations are not zero.

pub mod analysis;
pub mod integrator;
pub mod master;
pub mod unitary;

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::DynamicsError;
use crate::hilbert::FockLabel;
use crate::linalg::eigvalsh;
use crate::model::DressedOperatorSet;
use crate::spectrum::EigenSystem;

pub use analysis::{fft_signal, log_negativity, negativity, FrequencySpectrum};
pub use integrator::Tolerances;
pub use master::{build_master_equation, evolve, EvolveOptions, MasterEquationSetup, Retention, TrajectoryResult};
pub use unitary::{unitary_evolve, LabFrameHamiltonian, SchrodingerSystem, StateTrajectory};

/// Density matrix in the (truncated) eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub entries: Array2<C64>,
    pub time: f64,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `|ψ_j⟩⟨ψ_j|` on `dim` retained eigenstates.
    pub fn eigenstate(j: usize, dim: usize) -> Result<Self, DynamicsError> {
        if j >= dim {
            return Err(DynamicsError::Index { index: j, available: dim });
        }
        let mut entries = Array2::zeros((dim, dim));
        entries[[j, j]] = C64::new(1.0, 0.0);
        Ok(Self { entries, time: 0.0 })
    }

    /// `|φ⟩⟨φ|` for eigenbasis amplitudes `φ`.
    pub fn pure(amplitudes: &Array1<C64>) -> Self {
        let d = amplitudes.len();
        let mut entries = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                entries[[i, j]] = amplitudes[i] * amplitudes[j].conj();
            }
        }
        Self { entries, time: 0.0 }
    }

    /// Projects a bare-basis pure state onto the lowest `dim` eigenstates.
    /// Fails if more than `1e−6` of the norm lies outside them.
    pub fn from_bare_state(eig: &EigenSystem, psi: &Array1<C64>, dim: usize) -> Result<Self, DynamicsError> {
        let u = eig.states.slice(s![.., ..dim]);
        let phi = u.t().mapv(|c| c.conj()).dot(psi);
        let norm = phi.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let total = psi.iter().map(|c| c.norm_sqr()).sum::<f64>();
        if (total - norm).abs() > 1e-6 {
            return Err(DynamicsError::InitialState(format!(
                "state loses {:.3e} of its norm outside the {dim} retained eigenstates",
                total - norm
            )));
        }
        Ok(Self::pure(&phi.mapv(|c| c / norm.sqrt())))
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    /// `‖ρ − ρ†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.entries + &self.entries.t().mapv(|c| c.conj())).mapv(|c| c * 0.5);
        eigvalsh(&h).map(|w| w.iter().copied().fold(f64::INFINITY, f64::min)).unwrap_or(f64::NAN)
    }

    /// `Tr(ρ M)`.
    pub fn expectation(&self, m: &Array2<C64>) -> C64 {
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.entries[[i, j]] * m[[j, i]];
            }
        }
        acc
    }
}

/// Bose occupation `1/(e^{ω/T} − 1)`; zero at `T = 0`.
pub fn bose(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        0.0
    } else {
        1.0 / ((omega / temperature).exp_m1())
    }
}

/// `k_B T / ħω` for a temperature in kelvin and a mode frequency `ω/2π` in hertz.
pub fn reduced_temperature(kelvin: f64, frequency_hz: f64) -> f64 {
    const H_OVER_KB: f64 = 6.62607015e-34 / 1.380649e-23;
    kelvin / (H_OVER_KB * frequency_hz)
}

/// Gibbs state `∝ exp(−H/k_BT)` over the lowest `dim` eigenstates; `T = 0`
/// gives the ground state.
pub fn thermal_state(eig: &EigenSystem, temperature: f64, dim: usize) -> Result<DensityMatrix, DynamicsError> {
    let dim = dim.min(eig.dim());
    if !(temperature >= 0.0) {
        return Err(DynamicsError::InitialState(format!("temperature {temperature} must be non-negative")));
    }
    if temperature == 0.0 {
        return DensityMatrix::eigenstate(0, dim);
    }
    let e0 = eig.energies[0];
    let w: Vec<f64> = (0..dim).map(|n| (-(eig.energies[n] - e0) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut entries = Array2::zeros((dim, dim));
    for (n, wn) in w.iter().enumerate() {
        entries[[n, n]] = C64::new(wn / z, 0.0);
    }
    Ok(DensityMatrix { entries, time: 0.0 })
}

/// `⟨ψ_j|ρ|ψ_j⟩` for each requested index.
pub fn eigenstate_populations(rho: &DensityMatrix, indices: &[usize]) -> Result<Vec<f64>, DynamicsError> {
    indices
        .iter()
        .map(|&j| {
            if j >= rho.dim() {
                Err(DynamicsError::Index { index: j, available: rho.dim() })
            } else {
                Ok(rho.entries[[j, j]].re)
            }
        })
        .collect()
}

/// Mean dressed occupations below this make `g²` undefined.
pub const G2_THRESHOLD: f64 = 1e-8;

/// Mirror whose dressed phonon operator is used.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mirror {
    One,
    Two,
}

/// Equal-time `⟨B†B†BB⟩/⟨B†B⟩²`, or `None` when `⟨B†B⟩` is below
/// [`G2_THRESHOLD`].
pub fn g2_equal_time(rho: &DensityMatrix, ops: &DressedOperatorSet, mirror: Mirror) -> Option<f64> {
    let b = match mirror {
        Mirror::One => &ops.b1,
        Mirror::Two => &ops.b2,
    };
    let bd = b.t().mapv(|c| c.conj());
    let n = rho.expectation(&bd.dot(b)).re;
    if n < G2_THRESHOLD {
        return None;
    }
    let b2 = b.dot(b);
    let pairs = rho.expectation(&b2.t().mapv(|c| c.conj()).dot(&b2)).re;
    Some((pairs / (n * n)).max(0.0))
}

/// How the initial state is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Gibbs state at the bath temperature.
    Thermal,
    Ground,
    /// Eigenstate with the given energy index.
    Eigenstate(usize),
    /// Eigenstate with the largest weight on a bare state.
    EigenstateLike(FockLabel),
    /// Equal-weight superposition of the eigenstates most like each label.
    Superposition(Vec<FockLabel>),
    /// A bare product state (generally a superposition of eigenstates).
    Bare(FockLabel),
}

impl InitialState {
    pub fn prepare(&self, eig: &EigenSystem, temperature: f64, dim: usize) -> Result<DensityMatrix, DynamicsError> {
        match self {
            InitialState::Thermal => thermal_state(eig, temperature, dim),
            InitialState::Ground => DensityMatrix::eigenstate(0, dim),
            InitialState::Eigenstate(j) => DensityMatrix::eigenstate(*j, dim),
            InitialState::EigenstateLike(label) => DensityMatrix::eigenstate(eig.find_state(*label)?, dim),
            InitialState::Superposition(labels) => {
                let mut amps = Array1::<C64>::zeros(dim);
                let w = C64::new(1.0 / (labels.len() as f64).sqrt(), 0.0);
                for &l in labels {
                    let j = eig.find_state(l)?;
                    if j >= dim {
                        return Err(DynamicsError::Index { index: j, available: dim });
                    }
                    if amps[j] != C64::new(0.0, 0.0) {
                        return Err(DynamicsError::InitialState(format!("{l} selects eigenstate {j} twice")));
                    }
                    amps[j] = w;
                }
                Ok(DensityMatrix::pure(&amps))
            }
            InitialState::Bare(label) => DensityMatrix::from_bare_state(eig, &eig.space.basis_state(*label)?, dim),
        }
    }
}

impl std::str::FromStr for InitialState {
    type Err = String;

    /// `thermal`, `ground`, `index:J`, `eigen:k,q,n`, `eigen:k,q,n+k,q,n…` or
    /// `bare:k,q,n`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "thermal" => return Ok(Self::Thermal),
            "ground" => return Ok(Self::Ground),
            _ => {}
        }
        let (kind, arg) = s.split_once(':').ok_or_else(|| format!("unknown initial state {s:?}"))?;
        match kind.trim() {
            "index" => arg.trim().parse().map(Self::Eigenstate).map_err(|e| format!("bad index {arg:?}: {e}")),
            "eigen" if arg.contains('+') => arg
                .split('+')
                .map(|l| l.parse::<FockLabel>().map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()
                .map(Self::Superposition),
            "eigen" => arg.parse().map(Self::EigenstateLike).map_err(|e| e.to_string()),
            "bare" => arg.parse().map(Self::Bare).map_err(|e| e.to_string()),
            other => Err(format!("unknown initial state kind {other:?}")),
        }
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Thermal => f.write_str("thermal"),
            Self::Ground => f.write_str("ground"),
            Self::Eigenstate(j) => write!(f, "index:{j}"),
            Self::EigenstateLike(l) => write!(f, "eigen:{},{},{}", l.k, l.q, l.n),
            Self::Superposition(ls) => {
                let parts: Vec<String> = ls.iter().map(|l| format!("{},{},{}", l.k, l.q, l.n)).collect();
                write!(f, "eigen:{}", parts.join("+"))
            }
            Self::Bare(l) => write!(f, "bare:{},{},{}", l.k, l.q, l.n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_space;
    use crate::model::{dressed_operators, SystemParams};
    use crate::spectrum::diagonalize_system;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thermal_populations() {
        let s = make_space(4, 4, 4).unwrap();
        let eig = diagonalize_system(s, &SystemParams::symmetric(0.495, 1.0, 0.03)).unwrap();
        let t = 0.208;
        let rho = thermal_state(&eig, t, 30).unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-14);
        let p = eigenstate_populations(&rho, &[0, 1]).unwrap();
        assert_abs_diff_eq!(p[1] / p[0], (-(eig.energies[1] - eig.energies[0]) / t).exp(), epsilon = 1e-12);
        let ground = thermal_state(&eig, 0.0, 30).unwrap();
        assert_eq!(eigenstate_populations(&ground, &[0, 1, 2]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(eigenstate_populations(&ground, &[30]).is_err());
    }

    #[test]
    fn bare_limit_correlations() {
        let s = make_space(2, 12, 3).unwrap();
        let eig = diagonalize_system(s, &SystemParams::symmetric(3.0, 1.7, 0.0)).unwrap();
        let ops = dressed_operators(&eig, eig.dim());
        // Single phonon in mirror 1.
        let one = DensityMatrix::eigenstate(eig.find_state(FockLabel::new(1, 0, 0)).unwrap(), eig.dim()).unwrap();
        assert_abs_diff_eq!(g2_equal_time(&one, &ops, Mirror::One).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(g2_equal_time(&one, &ops, Mirror::Two), None);
        // Coherent state of amplitude 0.5 on mirror 1.
        let alpha: f64 = 0.5;
        let mut psi = Array1::<C64>::zeros(s.dim());
        let mut fact = 1.0;
        for k in 0..12 {
            if k > 0 {
                fact *= k as f64;
            }
            let c = (-alpha * alpha / 2.0).exp() * alpha.powi(k as i32) / fact.sqrt();
            psi[s.index(FockLabel::new(k, 0, 0)).unwrap()] = C64::new(c, 0.0);
        }
        let rho = DensityMatrix::from_bare_state(&eig, &psi, eig.dim()).unwrap();
        assert_abs_diff_eq!(g2_equal_time(&rho, &ops, Mirror::One).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn sixty_millikelvin_at_six_gigahertz() {
        assert!((reduced_temperature(0.060, 6e9) - 0.208).abs() < 1e-3);
    }

    #[test]
    fn superposition_is_normalized() {
        let eig = crate::spectrum::diagonalize_system(
            crate::hilbert::make_space(3, 3, 3).unwrap(),
            &crate::model::SystemParams::symmetric(0.8, 0.92, 0.1),
        )
        .unwrap();
        let rho = "eigen:1,0,0+0,0,0".parse::<InitialState>().unwrap().prepare(&eig, 0.0, 10).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
        assert!((rho.entries[[0, 0]].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn initial_state_parsing() {
        for s in ["thermal", "ground", "index:3", "eigen:1,0,0", "eigen:1,0,0+0,0,0", "bare:0,1,0"] {
            let parsed: InitialState = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("bogus".parse::<InitialState>().is_err());
        assert!("bare:1,0".parse::<InitialState>().is_err());
    }
}
