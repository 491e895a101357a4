//! Closed-system evolution of pure states in the bare Fock basis.

use ndarray::Array1;
use num_complex::Complex64 as C64;

use super::integrator::{DormandPrince, Tolerances};
use crate::error::DynamicsError;
use crate::hilbert::{number, quadrature, Mode, OperatorMatrix};
use crate::model::{DriveSpec, ModulationSpec};

/// A time-dependent Hamiltonian acting on state vectors.
pub trait SchrodingerSystem: Sync {
    fn dim(&self) -> usize;
    /// `out = H(t) ψ`.
    fn apply_h(&self, t: f64, psi: &[C64], out: &mut [C64]);
}

/// `H_s + F(t)(b_i + b_i†) + f(t) b₂†b₂` on the bare basis.
#[derive(Clone, Debug)]
pub struct LabFrameHamiltonian {
    pub h: OperatorMatrix,
    drive: Option<(OperatorMatrix, DriveSpec)>,
    modulation: Option<(OperatorMatrix, ModulationSpec)>,
}

impl LabFrameHamiltonian {
    pub fn new(h: OperatorMatrix) -> Self {
        Self { h, drive: None, modulation: None }
    }

    pub fn with_drive(mut self, drive: DriveSpec) -> Self {
        if drive.is_active() {
            self.drive = Some((quadrature(self.h.space(), drive.target.mode()), drive));
        }
        self
    }

    pub fn with_modulation(mut self, modulation: ModulationSpec) -> Self {
        self.modulation = Some((number(self.h.space(), Mode::Mirror2), modulation));
        self
    }
}

fn add_scaled(op: &OperatorMatrix, scale: f64, psi: &[C64], out: &mut [C64]) {
    for (i, j, v) in op.iter() {
        out[i] += v * psi[j] * scale;
    }
}

impl SchrodingerSystem for LabFrameHamiltonian {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn apply_h(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        self.h.apply_into(psi, out);
        if let Some((x, d)) = &self.drive {
            let f = d.force(t);
            if f != 0.0 {
                add_scaled(x, f, psi, out);
            }
        }
        if let Some((n, m)) = &self.modulation {
            let f = m.profile(t);
            if f != 0.0 {
                add_scaled(n, f, psi, out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<C64>>,
    /// Largest `|‖ψ‖ − 1|` over the samples.
    pub max_norm_error: f64,
}

/// Tighter than the master-equation defaults; the norm drifts by roughly
/// `1e-10` per unit time.
pub fn unitary_tolerances() -> Tolerances {
    Tolerances { rtol: 1e-10, atol: 1e-12, ..Default::default() }
}

/// Integrates `i dψ/dt = H(t) ψ` from `t_grid[0]` and stores `ψ` on the grid.
pub fn unitary_evolve<S: SchrodingerSystem>(
    sys: &S,
    psi0: &Array1<C64>,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<StateTrajectory, DynamicsError> {
    if psi0.len() != sys.dim() {
        return Err(DynamicsError::Dimension { expected: sys.dim(), got: psi0.len() });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::TimeGrid);
    }
    let f = |t: f64, y: &[C64], dy: &mut [C64]| {
        sys.apply_h(t, y, dy);
        for v in dy.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
    };
    let mut stepper = DormandPrince::new(f, t_grid[0], psi0.to_vec(), tol);
    let norm0 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut out = StateTrajectory { times: t_grid.to_vec(), states: Vec::with_capacity(t_grid.len()), max_norm_error: 0.0 };
    for &t in t_grid {
        stepper.integrate_to(t)?;
        let psi = Array1::from_vec(stepper.y().to_vec());
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        out.max_norm_error = out.max_norm_error.max((norm - norm0).abs());
        out.states.push(psi);
    }
    Ok(out)
}
