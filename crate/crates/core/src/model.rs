//! System parameters, Hamiltonian terms, drives, frequency modulation, baths and
//! dressed (energy-lowering) operators.
//!
//! Units: ħ = 1 and every frequency is measured in units of the mirror-1
//! frequency ω₁.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64 as C64;

use crate::error::ModelError;
use crate::hilbert::{annihilator, number, quadrature, HilbertSpace, Mode, OperatorMatrix};
use crate::spectrum::EigenSystem;

/// Frequencies and couplings of the two-mirror cavity.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub omega_c: f64,
    pub omega_1: f64,
    pub omega_2: f64,
    pub g_1: f64,
    pub g_2: f64,
}

impl SystemParams {
    /// Equal couplings `g` on both mirrors, `ω₁ = 1`.
    pub fn symmetric(omega_c: f64, omega_2: f64, g: f64) -> Self {
        Self { omega_c, omega_1: 1.0, omega_2, g_1: g, g_2: g }
    }

    pub fn with_omega_2(self, omega_2: f64) -> Self {
        Self { omega_2, ..self }
    }

    pub fn with_coupling(self, g: f64) -> Self {
        Self { g_1: g, g_2: g, ..self }
    }

    /// Mirror frequency and coupling for `mode` (a mirror).
    pub fn mirror(&self, mode: Mode) -> (f64, f64) {
        match mode {
            Mode::Mirror1 => (self.omega_1, self.g_1),
            Mode::Mirror2 => (self.omega_2, self.g_2),
            Mode::Cavity => panic!("the cavity is not a mirror"),
        }
    }

    /// Displacement per photon `β_i = g_i/ω_i`.
    pub fn beta(&self, mode: Mode) -> f64 {
        let (w, g) = self.mirror(mode);
        g / w
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let freqs = [("omega_c", self.omega_c), ("omega_1", self.omega_1), ("omega_2", self.omega_2)];
        for (name, value) in freqs {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter { name, value, reason: "frequencies must be positive" });
            }
        }
        for (name, value) in [("g_1", self.g_1), ("g_2", self.g_2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter { name, value, reason: "couplings must be non-negative" });
            }
        }
        for (name, mode) in [("g_1", Mode::Mirror1), ("g_2", Mode::Mirror2)] {
            if self.beta(mode) >= 1.0 {
                return Err(ModelError::InvalidParameter {
                    name,
                    value: self.beta(mode),
                    reason: "displacement g/omega must stay below 1",
                });
            }
        }
        Ok(())
    }
}

/// `ω_c a†a + ω₁ b₁†b₁ + ω₂ b₂†b₂`.
pub fn build_h0(space: HilbertSpace, p: &SystemParams) -> OperatorMatrix {
    OperatorMatrix::from_diagonal(space, |i| {
        let l = space.label(i);
        p.omega_c * l.n as f64 + p.omega_1 * l.k as f64 + p.omega_2 * l.q as f64
    })
}

/// `Σ_i g_i (b_i + b_i†)`.
fn mirror_force(space: HilbertSpace, p: &SystemParams) -> OperatorMatrix {
    let x1 = quadrature(space, Mode::Mirror1).scaled_real(p.g_1);
    let x2 = quadrature(space, Mode::Mirror2).scaled_real(p.g_2);
    x1.checked_add(&x2).expect("same space")
}

/// Photon-number-conserving radiation pressure `a†a Σ_i g_i (b_i + b_i†)`.
pub fn build_v_om(space: HilbertSpace, p: &SystemParams) -> OperatorMatrix {
    number(space, Mode::Cavity).checked_mul(&mirror_force(space, p)).expect("same space")
}

/// Photon-pair term `½ (a² + a†²) Σ_i g_i (b_i + b_i†)`.
pub fn build_v_dce(space: HilbertSpace, p: &SystemParams) -> OperatorMatrix {
    let a = annihilator(space, Mode::Cavity);
    let a2 = a.checked_mul(&a).expect("same space");
    let pair = a2.checked_add(&a2.adjoint()).expect("same space").scaled_real(0.5);
    pair.checked_mul(&mirror_force(space, p)).expect("same space")
}

/// Full system Hamiltonian `H0 + V_om + V_DCE`.
pub fn build_hamiltonian(space: HilbertSpace, p: &SystemParams) -> OperatorMatrix {
    build_h0(space, p)
        .checked_add(&build_v_om(space, p))
        .and_then(|h| h.checked_add(&build_v_dce(space, p)))
        .expect("same space")
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum DriveTarget {
    #[default]
    Mirror1,
    Mirror2,
}

impl DriveTarget {
    pub fn mode(self) -> Mode {
        match self {
            DriveTarget::Mirror1 => Mode::Mirror1,
            DriveTarget::Mirror2 => Mode::Mirror2,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum DriveKind {
    #[default]
    None,
    Continuous,
    GaussianPulse,
}

/// Coherent force on one mirror, `F(t)(b_i + b_i†)`.
#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct DriveSpec {
    pub target: DriveTarget,
    pub kind: DriveKind,
    pub amplitude: f64,
    pub omega_d: f64,
    pub t0: f64,
    pub sigma: f64,
}

impl DriveSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn continuous(target: DriveTarget, amplitude: f64, omega_d: f64) -> Self {
        Self { target, kind: DriveKind::Continuous, amplitude, omega_d, ..Self::default() }
    }

    pub fn gaussian_pulse(target: DriveTarget, amplitude: f64, omega_d: f64, t0: f64, sigma: f64) -> Self {
        Self { target, kind: DriveKind::GaussianPulse, amplitude, omega_d, t0, sigma }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "amplitude",
                value: self.amplitude,
                reason: "drive amplitude must be non-negative",
            });
        }
        if self.kind == DriveKind::GaussianPulse && !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "pulse width must be positive",
            });
        }
        Ok(())
    }

    /// Scalar force `F(t)`: `A cos(ω_d t)`, or `A G(t − t0) cos(ω_d t)` with `G`
    /// the unit-area Gaussian of width `σ`.
    pub fn force(&self, t: f64) -> f64 {
        match self.kind {
            DriveKind::None => 0.0,
            DriveKind::Continuous => self.amplitude * (self.omega_d * t).cos(),
            DriveKind::GaussianPulse => {
                let x = (t - self.t0) / self.sigma;
                let envelope = (-0.5 * x * x).exp() / (self.sigma * (2.0 * PI).sqrt());
                self.amplitude * envelope * (self.omega_d * t).cos()
            }
        }
    }

    pub fn is_active(&self) -> bool {
        self.kind != DriveKind::None && self.amplitude > 0.0
    }
}

/// `F(t)(b_i + b_i†)` in the bare Fock basis.
pub fn drive_term(space: HilbertSpace, spec: &DriveSpec, t: f64) -> OperatorMatrix {
    let f = spec.force(t);
    if f == 0.0 {
        return OperatorMatrix::zeros(space);
    }
    quadrature(space, spec.target.mode()).scaled_real(f)
}

/// Smoothed step in the mirror-2 frequency, `ω₂ → ω₂ + f(t)`.
///
/// `f` is 0 before `t0`, rises as `δ sin²(Ω_s (t − t0))` over `π/(2Ω_s)`, holds
/// `δ`, and, when `t_f` is set, falls back as `δ cos²(Ω_s (t − t_f))` over the
/// same ramp time.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ModulationSpec {
    pub delta: f64,
    pub t0: f64,
    pub t_f: Option<f64>,
    pub omega_s: f64,
}

impl ModulationSpec {
    pub fn ramp_time(&self) -> f64 {
        PI / (2.0 * self.omega_s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.delta.is_finite() {
            return Err(ModelError::InvalidParameter { name: "delta", value: self.delta, reason: "must be finite" });
        }
        if !(self.omega_s.is_finite() && self.omega_s > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "omega_s",
                value: self.omega_s,
                reason: "smoothing frequency must be positive",
            });
        }
        if let Some(tf) = self.t_f {
            if tf < self.t0 + self.ramp_time() {
                return Err(ModelError::InvalidParameter {
                    name: "t_f",
                    value: tf,
                    reason: "switch-off must start after the switch-on ramp ends",
                });
            }
        }
        Ok(())
    }

    pub fn profile(&self, t: f64) -> f64 {
        let ramp = self.ramp_time();
        if t <= self.t0 {
            return 0.0;
        }
        if let Some(tf) = self.t_f {
            if t >= tf + ramp {
                return 0.0;
            }
            if t > tf {
                return self.delta * (self.omega_s * (t - tf)).cos().powi(2);
            }
        }
        if t < self.t0 + ramp {
            self.delta * (self.omega_s * (t - self.t0)).sin().powi(2)
        } else {
            self.delta
        }
    }
}

/// `f(t) b₂†b₂` in the bare Fock basis.
pub fn modulation_term(space: HilbertSpace, spec: &ModulationSpec, t: f64) -> OperatorMatrix {
    let f = spec.profile(t);
    if f == 0.0 {
        return OperatorMatrix::zeros(space);
    }
    number(space, Mode::Mirror2).scaled_real(f)
}

/// Loss rates and bath temperature (`k_B T / ω₁`).
#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct BathSpec {
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub kappa: f64,
    pub temperature: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("gamma_1", self.gamma_1),
            ("gamma_2", self.gamma_2),
            ("kappa", self.kappa),
            ("temperature", self.temperature),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter { name, value, reason: "must be non-negative" });
            }
        }
        Ok(())
    }

    pub fn rate(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Cavity => self.kappa,
            Mode::Mirror1 => self.gamma_1,
            Mode::Mirror2 => self.gamma_2,
        }
    }
}

/// Transitions closer than this in energy are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Energy-lowering cavity and mirror operators, as dense matrices over the
/// lowest `dim` eigenstates. Entry `(m, n)` is nonzero only when `E_n > E_m`.
#[derive(Clone, Debug)]
pub struct DressedOperatorSet {
    pub a: Array2<C64>,
    pub b1: Array2<C64>,
    pub b2: Array2<C64>,
}

impl DressedOperatorSet {
    pub fn get(&self, mode: Mode) -> &Array2<C64> {
        match mode {
            Mode::Cavity => &self.a,
            Mode::Mirror1 => &self.b1,
            Mode::Mirror2 => &self.b2,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// `⟨ψ_m|O|ψ_n⟩` for the lowest `retained` eigenstates.
pub fn eigenbasis_matrix(eig: &EigenSystem, op: &OperatorMatrix, retained: usize) -> Array2<C64> {
    let u = eig.states.slice(s![.., ..retained]);
    let ou = op.mul_dense(&u.to_owned());
    u.t().mapv(|z| z.conj()).dot(&ou)
}

/// Keeps only the energy-lowering part of a matrix in the eigenbasis.
pub(crate) fn lowering_part(eig: &EigenSystem, mut m: Array2<C64>) -> Array2<C64> {
    let e = &eig.energies;
    for ((row, col), v) in m.indexed_iter_mut() {
        if e[col] - e[row] <= DEGENERACY_TOL {
            *v = C64::new(0.0, 0.0);
        }
    }
    m
}

/// Dressed operators `O = Σ_{E_n > E_m} ⟨ψ_m|(o + o†)|ψ_n⟩ |ψ_m⟩⟨ψ_n|` for the
/// cavity and both mirrors, restricted to the lowest `retained` eigenstates.
pub fn dressed_operators(eig: &EigenSystem, retained: usize) -> DressedOperatorSet {
    let retained = retained.min(eig.dim());
    let make = |mode| lowering_part(eig, eigenbasis_matrix(eig, &quadrature(eig.space, mode), retained));
    DressedOperatorSet { a: make(Mode::Cavity), b1: make(Mode::Mirror1), b2: make(Mode::Mirror2) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_space, FockLabel};
    use approx::assert_abs_diff_eq;

    fn fig1b() -> SystemParams {
        SystemParams::symmetric(0.495, 1.0, 0.03)
    }

    #[test]
    fn h0_diagonal_energies() {
        let s = make_space(4, 4, 4).unwrap();
        let h = build_h0(s, &fig1b());
        assert_eq!(h.get(0, 0).re, 0.0);
        assert_abs_diff_eq!(h.element(FockLabel::new(0, 0, 2), FockLabel::new(0, 0, 2)).re, 0.99, epsilon = 1e-15);
        let p = SystemParams::symmetric(0.7, 0.9, 0.0);
        let h = build_h0(s, &p);
        for i in 0..s.dim() {
            let l = s.label(i);
            assert_abs_diff_eq!(h.get(i, i).re, 0.7 * l.n as f64 + l.k as f64 + 0.9 * l.q as f64, epsilon = 1e-14);
        }
        assert_eq!(h.nnz(), s.dim() - 1);
    }

    #[test]
    fn optomechanical_term() {
        let s = make_space(4, 4, 4).unwrap();
        let p = SystemParams { g_1: 0.03, g_2: 0.05, ..fig1b() };
        let v = build_v_om(s, &p);
        assert!(v.is_hermitian(1e-12));
        assert!(v.commutator(&number(s, Mode::Cavity)).unwrap().max_abs() < 1e-12);
        assert_abs_diff_eq!(v.element(FockLabel::new(1, 0, 1), FockLabel::new(0, 0, 1)).re, 0.03);
        assert_eq!(build_v_om(s, &fig1b().with_coupling(0.0)).nnz(), 0);
    }

    #[test]
    fn pair_term() {
        let s = make_space(4, 4, 4).unwrap();
        let p = SystemParams { g_1: 0.03, g_2: 0.05, ..fig1b() };
        let v = build_v_dce(s, &p);
        assert!(v.is_hermitian(1e-12));
        assert_abs_diff_eq!(
            v.element(FockLabel::new(0, 0, 2), FockLabel::new(1, 0, 0)).re,
            2f64.sqrt() / 2.0 * 0.03,
            epsilon = 1e-15
        );
        for (i, j, _) in v.iter() {
            let (ni, nj) = (s.label(i).n as i64, s.label(j).n as i64);
            assert_eq!((ni - nj).abs(), 2);
        }
        let h = build_hamiltonian(s, &p);
        assert!(h.commutator(&number(s, Mode::Cavity)).unwrap().max_abs() > 1e-3);
        let h_om = build_h0(s, &p).checked_add(&build_v_om(s, &p)).unwrap();
        assert_eq!(h_om.commutator(&number(s, Mode::Cavity)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn drive_profiles() {
        let s = make_space(2, 3, 3).unwrap();
        let gamma = 1.0 / 260.0;
        let cw = DriveSpec::continuous(DriveTarget::Mirror1, 0.95 * gamma, 1.0);
        assert_abs_diff_eq!(cw.amplitude, 3.654e-3, epsilon = 1e-6);
        let op = drive_term(s, &cw, 0.0);
        let x = quadrature(s, Mode::Mirror1).scaled_real(cw.amplitude);
        assert_eq!(op, x);

        let pulse = DriveSpec::gaussian_pulse(DriveTarget::Mirror2, 0.25 * PI, 1.0, 50.0, 4.0);
        let peak = pulse.amplitude / (pulse.sigma * (2.0 * PI).sqrt());
        for t in [50.0 - 24.0, 50.0 + 24.0] {
            assert!(pulse.force(t).abs() < 1e-7 * peak);
        }
        assert_abs_diff_eq!(pulse.force(50.0), peak * 50f64.cos(), epsilon = 1e-15);
        assert!(DriveSpec { sigma: 0.0, ..pulse }.validate().is_err());
        assert!(DriveSpec { amplitude: -1.0, ..cw }.validate().is_err());
        assert_eq!(drive_term(s, &DriveSpec::none(), 3.0).nnz(), 0);
    }

    #[test]
    fn modulation_ramps() {
        let m = ModulationSpec { delta: 0.069, t0: 10.0, t_f: Some(100.0), omega_s: 0.05 };
        let ramp = m.ramp_time();
        assert_eq!(m.profile(5.0), 0.0);
        assert_abs_diff_eq!(m.profile(10.0 + ramp), 0.069, epsilon = 1e-15);
        assert_eq!(m.profile(60.0), 0.069);
        assert_abs_diff_eq!(m.profile(100.0 + ramp), 0.0, epsilon = 1e-15);
        assert_eq!(m.profile(200.0), 0.0);
        let mut last = 0.0;
        for i in 0..=100 {
            let f = m.profile(10.0 + ramp * i as f64 / 100.0);
            assert!(f >= last - 1e-15);
            last = f;
        }
        let s = make_space(2, 2, 3).unwrap();
        assert_eq!(modulation_term(s, &m, 0.0).nnz(), 0);
        assert_abs_diff_eq!(modulation_term(s, &m, 60.0).element(FockLabel::new(0, 2, 0), FockLabel::new(0, 2, 0)).re, 0.138);
        let open = ModulationSpec { t_f: None, ..m };
        assert_eq!(open.profile(1e6), 0.069);
        assert!(ModulationSpec { t_f: Some(11.0), ..m }.validate().is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(fig1b().validate().is_ok());
        assert!(fig1b().with_coupling(-0.1).validate().is_err());
        assert!(SystemParams { omega_c: 0.0, ..fig1b() }.validate().is_err());
        assert!(SystemParams { omega_2: 0.5, g_2: 0.6, ..fig1b() }.validate().is_err());
        assert!(BathSpec { kappa: -1.0, ..Default::default() }.validate().is_err());
    }
}
