use ndarray::Array2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use optomech::dynamics::master::Retention;
use optomech::dynamics::{build_master_equation, InitialState};
use optomech::hilbert::{displacement_overlap, make_space, FockLabel, Mode};
use optomech::model::{
    build_hamiltonian, dressed_operators, BathSpec, DriveSpec, DriveTarget, ModulationSpec, SystemParams,
};
use optomech::perturbation::{a_coefficient, effective_block};
use optomech::spectrum::diagonalize_system;

fn params() -> impl Strategy<Value = SystemParams> {
    (0.3f64..1.5, 0.8f64..1.2, 0.0f64..0.2, 0.0f64..0.2).prop_map(|(omega_c, omega_2, g_1, g_2)| SystemParams {
        omega_c,
        omega_1: 1.0,
        omega_2,
        g_1,
        g_2,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_real_symmetric_and_parity_preserving(p in params()) {
        let space = make_space(4, 4, 4).unwrap();
        let h = build_hamiltonian(space, &p);
        prop_assert!(h.is_real());
        prop_assert!(h.hermiticity_error() < 1e-14);
        for (i, j, _) in h.iter() {
            prop_assert_eq!(space.occupation(i, Mode::Cavity) % 2, space.occupation(j, Mode::Cavity) % 2);
        }
    }

    #[test]
    fn eigensystem_is_orthonormal_and_sorted(p in params()) {
        let space = make_space(4, 4, 4).unwrap();
        let eig = diagonalize_system(space, &p).unwrap();
        prop_assert!(eig.orthonormality_error() < 1e-10);
        prop_assert!(eig.max_residual(&build_hamiltonian(space, &p)) < 1e-10);
        prop_assert!(eig.energies.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn displacement_is_unitary(alpha in -0.6f64..0.6, k in 0usize..6, kp in 0usize..6) {
        let n = 60;
        let col: f64 = (0..n).map(|j| displacement_overlap(j, k, alpha).powi(2)).sum();
        prop_assert!((col - 1.0).abs() < 1e-10);
        // D(α) D(−α) = 1
        let prod: f64 = (0..n).map(|j| displacement_overlap(kp, j, alpha) * displacement_overlap(j, k, -alpha)).sum();
        let delta = if k == kp { 1.0 } else { 0.0 };
        prop_assert!((prod - delta).abs() < 1e-10);
        prop_assert_eq!(displacement_overlap(kp, k, 0.0), delta);
    }

    #[test]
    fn pair_amplitude_symmetric_under_mirror_exchange(
        omega_c in 0.3f64..1.5, g in 0.0f64..0.2, k in 0usize..5, q in 0usize..5, kp in 0usize..3, qp in 0usize..3,
    ) {
        let p = SystemParams::symmetric(omega_c, 1.0, g);
        let a = a_coefficient(&p, k, q, kp, qp, 8).unwrap();
        let b = a_coefficient(&p, q, k, qp, kp, 8).unwrap();
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn effective_block_is_symmetric(omega_c in 0.3f64..0.45, omega_2 in 0.9f64..1.1, g in 0.005f64..0.1) {
        let p = SystemParams::symmetric(omega_c, 1.0, g).with_omega_2(omega_2);
        let x = effective_block(&p, &[(1, 0), (0, 1), (2, 0), (1, 1)], 40).unwrap();
        prop_assert!((&x - &x.t()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dressed_operators_only_lower_energy(p in params()) {
        let space = make_space(3, 3, 3).unwrap();
        let eig = diagonalize_system(space, &p).unwrap();
        let ops = dressed_operators(&eig, eig.dim());
        for m in [&ops.a, &ops.b1, &ops.b2] {
            for ((r, c), v) in m.indexed_iter() {
                if v.norm() > 0.0 {
                    prop_assert!(eig.energies[c] > eig.energies[r]);
                }
            }
        }
    }

    #[test]
    fn master_equation_preserves_trace_and_hermiticity(
        p in params(), t in 0.0f64..50.0, seed in proptest::collection::vec(-1.0f64..1.0, 2 * 27 * 27),
        temperature in 0.0f64..0.5,
    ) {
        let space = make_space(3, 3, 3).unwrap();
        let eig = diagonalize_system(space, &p).unwrap();
        let baths = BathSpec { gamma_1: 0.01, gamma_2: 0.02, kappa: 0.03, temperature };
        let setup = build_master_equation(&eig, &baths, Retention::all()).unwrap()
            .with_drive(DriveSpec::continuous(DriveTarget::Mirror2, 0.1, 0.9)).unwrap()
            .with_modulation(ModulationSpec { delta: 0.05, t0: 1.0, t_f: None, omega_s: 0.3 }).unwrap();
        let d = setup.retained;
        let a = Array2::from_shape_fn((d, d), |(i, j)| C64::new(seed[i * d + j], seed[d * d + i * d + j]));
        let rho = &a + &a.t().mapv(|z| z.conj());
        let mut out = Array2::zeros((d, d));
        let (mut g, mut w) = (Array2::zeros((d, d)), Array2::zeros((d, d)));
        setup.rhs(t, rho.view(), out.view_mut(), &mut g, &mut w);
        let trace: C64 = out.diag().sum();
        prop_assert!(trace.norm() < 1e-12);
        let herm = (&out - &out.t().mapv(|z| z.conj())).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(herm < 1e-12);
    }

    #[test]
    fn labels_round_trip(k in 0usize..8, q in 0usize..8, n in 0usize..8) {
        let space = make_space(8, 8, 8).unwrap();
        let l = FockLabel::new(k, q, n);
        prop_assert_eq!(space.label(space.index(l).unwrap()), l);
        prop_assert_eq!(l.to_string().parse::<FockLabel>().unwrap(), l);
        let init = InitialState::Bare(l);
        prop_assert_eq!(init.to_string().parse::<InitialState>().unwrap(), init);
    }
}
