use approx::assert_abs_diff_eq;
use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;

use optomech::dynamics::master::Retention;
use optomech::dynamics::unitary::unitary_tolerances;
use optomech::dynamics::{
    bose, build_master_equation, evolve, thermal_state, unitary_evolve, DensityMatrix, EvolveOptions, InitialState,
    LabFrameHamiltonian, Tolerances,
};
use optomech::hilbert::{make_space, FockLabel};
use optomech::model::{build_hamiltonian, BathSpec, DriveSpec, DriveTarget, ModulationSpec, SystemParams};
use optomech::spectrum::diagonalize_system;

fn tight() -> EvolveOptions {
    EvolveOptions {
        tolerances: Tolerances { rtol: 1e-10, atol: 1e-12, ..Default::default() },
        population_indices: vec![0, 1, 2],
        ..Default::default()
    }
}

/// Without baths the master equation over all levels is the von Neumann
/// equation, so it must agree with direct Schrödinger evolution in the bare
/// basis, drive and frequency step included.
#[test]
fn lossless_master_equation_matches_unitary_evolution() {
    let space = make_space(3, 4, 4).unwrap();
    let p = SystemParams::symmetric(0.6, 1.02, 0.08);
    let eig = diagonalize_system(space, &p).unwrap();
    let drive = DriveSpec::continuous(DriveTarget::Mirror1, 0.05, 1.0);
    let modulation = ModulationSpec { delta: 0.03, t0: 2.0, t_f: Some(14.0), omega_s: 0.5 };
    let setup = build_master_equation(&eig, &BathSpec::default(), Retention::all())
        .unwrap()
        .with_drive(drive)
        .unwrap()
        .with_modulation(modulation)
        .unwrap();
    let psi0 = eig.state(0).to_owned();
    let rho0 = DensityMatrix::eigenstate(0, eig.dim()).unwrap();
    let times = [0.0, 5.0, 10.0, 20.0];
    let tr = evolve(&setup, &rho0, &times, &tight()).unwrap();

    let sys = LabFrameHamiltonian::new(build_hamiltonian(space, &p)).with_drive(drive).with_modulation(modulation);
    let st = unitary_evolve(&sys, &psi0, &times, unitary_tolerances()).unwrap();
    let u = &eig.states;
    let final_psi = &st.states[3];
    let c: Array1<C64> = u.t().mapv(|z| z.conj()).dot(final_psi);
    let rho_u = Array2::from_shape_fn((eig.dim(), eig.dim()), |(i, j)| c[i] * c[j].conj());
    let diff = (&rho_u - &tr.final_state.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "max deviation {diff:e}");
    assert!(tr.n_b1[3] > 1e-4, "drive had no effect");
}

/// At zero coupling the dressed operators are the bare ones and each mirror
/// relaxes independently at its own rate.
#[test]
fn uncoupled_mirror_decays_exponentially() {
    let space = make_space(2, 4, 4).unwrap();
    let p = SystemParams::symmetric(0.7, 1.1, 0.0);
    let eig = diagonalize_system(space, &p).unwrap();
    let gamma = 0.02;
    let baths = BathSpec { gamma_1: gamma, gamma_2: 0.0, kappa: 0.0, temperature: 0.0 };
    let setup = build_master_equation(&eig, &baths, Retention::all()).unwrap();
    let rho0 = InitialState::EigenstateLike(FockLabel::new(2, 0, 0)).prepare(&eig, 0.0, eig.dim()).unwrap();
    let times: Vec<f64> = (0..6).map(|i| i as f64 * 20.0).collect();
    let tr = evolve(&setup, &rho0, &times, &tight()).unwrap();
    for (t, n) in times.iter().zip(&tr.n_b1) {
        assert_abs_diff_eq!(*n, 2.0 * (-gamma * t).exp(), epsilon = 1e-8);
    }
}

#[test]
fn thermal_occupation_reached_from_ground() {
    let space = make_space(2, 6, 2).unwrap();
    let p = SystemParams::symmetric(0.9, 1.0, 0.0);
    let eig = diagonalize_system(space, &p).unwrap();
    let temperature = 0.4;
    let baths = BathSpec { gamma_1: 0.05, gamma_2: 0.0, kappa: 0.0, temperature };
    let setup = build_master_equation(&eig, &baths, Retention::all()).unwrap();
    let rho0 = DensityMatrix::eigenstate(0, eig.dim()).unwrap();
    let tr = evolve(&setup, &rho0, &[0.0, 400.0], &EvolveOptions::default()).unwrap();
    // Six levels truncate the Bose distribution at a negligible 1e-5 level.
    assert_abs_diff_eq!(tr.n_b1[1], bose(1.0, temperature), epsilon = 2e-4);
}

/// With all couplings on, a Gibbs state over the full (untruncated) level set
/// is stationary.
#[test]
fn gibbs_state_is_stationary_when_coupled() {
    let space = make_space(3, 3, 3).unwrap();
    let p = SystemParams::symmetric(0.55, 1.0, 0.05);
    let eig = diagonalize_system(space, &p).unwrap();
    let baths = BathSpec { gamma_1: 0.01, gamma_2: 0.02, kappa: 0.015, temperature: 0.3 };
    let setup = build_master_equation(&eig, &baths, Retention::all()).unwrap();
    let rho0 = thermal_state(&eig, 0.3, eig.dim()).unwrap();
    let tr = evolve(&setup, &rho0, &[0.0, 200.0], &tight()).unwrap();
    let diff = (&tr.final_state.entries - &rho0.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "drift {diff:e}");
}

#[test]
fn positivity_and_trace_kept_under_strong_drive() {
    let space = make_space(4, 4, 4).unwrap();
    let p = SystemParams::symmetric(0.495, 1.0, 0.03);
    let eig = diagonalize_system(space, &p).unwrap();
    let baths = BathSpec { gamma_1: 0.01, gamma_2: 0.01, kappa: 0.01, temperature: 0.1 };
    let setup = build_master_equation(&eig, &baths, Retention::window(2.2))
        .unwrap()
        .with_drive(DriveSpec::continuous(DriveTarget::Mirror1, 0.02, 1.0))
        .unwrap();
    let d = setup.retained;
    let rho0 = thermal_state(&eig, 0.1, d).unwrap();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 10.0).collect();
    let tr = evolve(&setup, &rho0, &times, &EvolveOptions::default()).unwrap();
    assert!(tr.diagnostics.max_trace_error < 1e-7);
    assert!(tr.diagnostics.max_hermiticity_error < 1e-9);
    assert!(tr.diagnostics.min_eigenvalue > -1e-6);
    assert!(tr.diagnostics.warnings.is_empty());
    let pops: f64 = tr.final_state.entries.diag().slice(s![..]).iter().map(|z| z.re).sum();
    assert_abs_diff_eq!(pops, 1.0, epsilon = 1e-7);
}
