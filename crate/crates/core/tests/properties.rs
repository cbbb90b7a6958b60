use std::f64::consts::PI;

use proptest::prelude::*;
use qheom::algebra::{hermitian_eig, kron, psd_sqrt, ComplexMatrix};
use qheom::heom::{evolve, init_hierarchy, HierarchyIndex, HierarchySpace};
use qheom::model::{DensityMatrix4, DrivingProtocol, InitialState, ModelSpec, XStateEntries};
use qheom::observables::{concurrence, geometric_phase, geometric_phase_with, CycleClock};
use qheom::sweep::{run_sweep, snapshots, Integrator, Lock, LockSource, Parameter, SweepAxis, SweepProblem};
use qheom::{BellKind, Complex64, Trajectory};
use rand::{Rng, SeedableRng};

fn complex_entries(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn random_hermitian() -> impl Strategy<Value = ComplexMatrix> {
    complex_entries(16).prop_map(|v| {
        let a = ComplexMatrix::from_row_major(v);
        &a + &a.dagger()
    })
}

fn random_density() -> impl Strategy<Value = DensityMatrix4> {
    complex_entries(16).prop_map(|v| {
        let a = ComplexMatrix::from_row_major(v);
        let m = &a.matmul(&a.dagger()) + &ComplexMatrix::identity(4).scale_real(1e-3);
        let t = m.trace().re;
        DensityMatrix4::new(m.scale_real(1.0 / t), 1e-10).unwrap()
    })
}

fn random_x_state() -> impl Strategy<Value = DensityMatrix4> {
    (
        prop::collection::vec(0.01..1.0f64, 4),
        0.0..1.0f64,
        0.0..(2.0 * PI),
        0.0..1.0f64,
        0.0..(2.0 * PI),
    )
        .prop_map(|(p, f23, a23, f14, a14)| {
            let s: f64 = p.iter().sum();
            let p: Vec<f64> = p.iter().map(|x| x / s).collect();
            let entries = XStateEntries {
                rho11: p[0],
                rho22: p[1],
                rho33: p[2],
                rho44: p[3],
                rho23: Complex64::from_polar(f23 * (p[1] * p[2]).sqrt(), a23),
                rho14: Complex64::from_polar(f14 * (p[0] * p[3]).sqrt(), a14),
            };
            InitialState::XState(entries).build().unwrap()
        })
}

fn unitary2() -> impl Strategy<Value = ComplexMatrix> {
    (0.0..(2.0 * PI), 0.0..(PI / 2.0), 0.0..(2.0 * PI), 0.0..(2.0 * PI)).prop_map(|(g, t, a, b)| {
        let u = Complex64::from_polar(t.cos(), a);
        let v = Complex64::from_polar(t.sin(), b);
        let ph = Complex64::from_polar(1.0, g);
        ComplexMatrix::from_row_major(vec![u * ph, -v.conj() * ph, v * ph, u.conj() * ph])
    })
}

/// Eigenvalues of the non-Hermitian `ρ ρ̃` by complex Schur decomposition.
fn concurrence_by_schur(rho: &DensityMatrix4) -> f64 {
    // σ_y ⊗ σ_y
    let y = ComplexMatrix::from_fn(4, |r, c| {
        let v = match (r, c) {
            (0, 3) | (3, 0) => -1.0,
            (1, 2) | (2, 1) => 1.0,
            _ => 0.0,
        };
        Complex64::new(v, 0.0)
    });
    let m = rho.matrix();
    let r = m.matmul(&y.matmul(&m.conj()).matmul(&y));
    let na = nalgebra::Matrix4::from_fn(|i, j| r[(i, j)]);
    let ev = na.schur().eigenvalues().expect("complex Schur form is triangular");
    let mut lam: Vec<f64> = ev.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    (lam[0] - lam[1] - lam[2] - lam[3]).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jacobi_diagonalises_random_hermitian(m in random_hermitian()) {
        let eig = hermitian_eig(&m).unwrap();
        prop_assert!(eig.reconstruct().max_diff(&m) < 1e-12);
        let v = &eig.eigenvectors;
        prop_assert!(v.dagger().matmul(v).max_diff(&ComplexMatrix::identity(4)) < 1e-12);
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn psd_sqrt_squares_back(rho in random_density()) {
        let s = psd_sqrt(rho.matrix()).unwrap();
        prop_assert!(s.matmul(&s).max_diff(rho.matrix()) < 1e-12);
        prop_assert!(s.hermiticity_error() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn concurrence_is_local_unitary_invariant(rho in random_density(), u1 in unitary2(), u2 in unitary2()) {
        let u = kron(&u1, &u2);
        let rotated = u.matmul(rho.matrix()).matmul(&u.dagger());
        let rotated = DensityMatrix4::from_matrix_unchecked(rotated.hermitian_part());
        let (a, b) = (concurrence(&rho).unwrap(), concurrence(&rotated).unwrap());
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn concurrence_matches_schur_oracle_on_x_states(rho in random_x_state()) {
        let a = concurrence(&rho).unwrap();
        let b = concurrence_by_schur(&rho);
        prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn x_state_concurrence_closed_form(rho in random_x_state()) {
        let g = |r: usize, c: usize| rho.get(r, c);
        let c23 = g(1, 2).norm() - (g(0, 0).re * g(3, 3).re).sqrt();
        let c14 = g(0, 3).norm() - (g(1, 1).re * g(2, 2).re).sqrt();
        let want = 2.0 * c23.max(c14).max(0.0);
        prop_assert!((concurrence(&rho).unwrap() - want).abs() < 1e-8);
    }
}

fn driven_spec(p: &[f64]) -> ModelSpec {
    ModelSpec {
        drive1: DrivingProtocol { omega: p[0], delta: p[2], omega_d: p[4], phi: p[6] },
        drive2: DrivingProtocol { omega: p[1], delta: p[3], omega_d: p[5], phi: 0.0 },
        j: p[7],
        bath: qheom::model::BathSpec { r: p[8], omega0: None },
        coupling: if p[9] < 0.5 { qheom::Coupling::Dipolar } else { qheom::Coupling::Dephasing },
    }
}

fn spec_params() -> impl Strategy<Value = Vec<f64>> {
    (
        (5.0..15.0f64, 5.0..15.0f64, 0.0..3.0f64, 0.0..3.0f64, 0.0..5.0f64),
        (0.0..5.0f64, 0.0..(2.0 * PI), 0.0..2.0f64, 0.05..2.0f64, 0.0..1.0f64),
    )
        .prop_map(|(a, b)| vec![a.0, a.1, a.2, a.3, a.4, b.0, b.1, b.2, b.3, b.4])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hierarchy_preserves_trace_hermiticity_and_pairing(p in spec_params(), rho0 in random_density()) {
        let spec = driven_spec(&p);
        let space = HierarchySpace::new(&spec, 8);
        let mut st = init_hierarchy(&rho0, &space);
        let traj = evolve(&mut st, &spec, &space, 1e-3, 2.0, 20).unwrap();
        for s in &traj.samples {
            let m = s.rho.matrix();
            prop_assert!((m.trace().re - 1.0).abs() < 1e-9);
            prop_assert!(m.trace().im.abs() < 1e-9);
            prop_assert!(m.hermiticity_error() < 1e-9);
            prop_assert!(hermitian_eig(m).unwrap().eigenvalues[0] >= -1e-6);
        }
        for n1 in 0..=8 {
            for n2 in 0..=8 {
                let a = st.element(HierarchyIndex::new(n1, n2));
                let b = st.element(HierarchyIndex::new(n2, n1)).dagger();
                prop_assert!(a.max_diff(&b) < 1e-12);
            }
        }
    }
}

fn gp_trajectory(r: f64) -> (Trajectory, CycleClock) {
    let mut spec = ModelSpec::undriven(10.0, 10.0, r);
    spec.drive1.delta = 0.3;
    spec.drive2.delta = 0.3;
    spec.drive1.phi = PI;
    let rho0 = InitialState::Werner { core: BellKind::PsiPlus, p: 0.5, r: 0.9 }.build().unwrap();
    let clock = CycleClock::two_excitation(&spec);
    let space = HierarchySpace::new(&spec, 8);
    let mut st = init_hierarchy(&rho0, &space);
    (evolve(&mut st, &spec, &space, 1e-3, clock.time_of(3.0), 1).unwrap(), clock)
}

#[test]
fn geometric_phase_is_gauge_invariant() {
    let (traj, clock) = gp_trajectory(0.5);
    let base = geometric_phase(&traj, &clock, 2).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for _ in 0..20 {
        let gauged = geometric_phase_with(&traj, &clock, 2, |_, mut eig| {
            for k in 0..4 {
                let ph = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
                for r in 0..4 {
                    eig.eigenvectors[(r, k)] *= ph;
                }
            }
            eig
        })
        .unwrap();
        for (a, b) in base.points.iter().zip(&gauged.points) {
            assert!((a.per_cycle - b.per_cycle).abs() < 1e-8);
            assert!((a.cumulative - b.cumulative).abs() < 1e-8);
        }
    }
}

#[test]
fn geometric_phase_is_stride_robust() {
    let (traj, clock) = gp_trajectory(0.5);
    let coarse = geometric_phase(&traj, &clock, 2).unwrap();
    let fine = geometric_phase(&traj, &clock, 1).unwrap();
    assert_eq!(coarse.points.len(), 3);
    for (a, b) in coarse.points.iter().zip(&fine.points) {
        assert!((a.cumulative - b.cumulative).abs() < 1e-4, "{} vs {}", a.cumulative, b.cumulative);
    }
}

fn small_sweep() -> SweepProblem {
    let mut base = ModelSpec::undriven(15.0, 15.0, 1.0);
    base.drive1.delta = 1.0;
    base.drive2.delta = 1.1;
    base.drive1.phi = PI;
    SweepProblem {
        base,
        initial: InitialState::bell(BellKind::PhiMinus),
        clock: CycleClock::explicit(0.37).unwrap(),
        axis_a: SweepAxis::new(Parameter::OmegaD1, 0.0, 6.0, 3).unwrap(),
        axis_b: SweepAxis::new(Parameter::J, 0.0, 2.0, 2).unwrap(),
        locks: vec![Lock { target: Parameter::OmegaD2, source: LockSource::Follow(Parameter::OmegaD1) }],
        cycles: vec![2, 1],
        integrator: Integrator { dt: 1e-3, depth: 4 },
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let p = small_sweep();
    let one = run_sweep(&p, Some(1)).unwrap();
    for threads in [2, 3, 8] {
        assert_eq!(run_sweep(&p, Some(threads)).unwrap(), one);
    }
    assert_eq!(one.cells.len(), 6);
    assert!(one.cells.iter().all(|c| c.status.is_ok()));
}

#[test]
fn sweep_cells_equal_independent_runs() {
    let mut p = small_sweep();
    p.axis_a = SweepAxis::new(Parameter::OmegaD1, 1.0, 3.0, 2).unwrap();
    let res = run_sweep(&p, Some(2)).unwrap();
    let rho0 = p.initial.build().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let (a, b) = (p.axis_a.value(i), p.axis_b.value(j));
            let mut spec = p.base;
            spec.drive1.omega_d = a;
            spec.drive2.omega_d = a;
            spec.j = b;
            let single = snapshots(&spec, &rho0, &p.clock, &p.cycles, &p.integrator).unwrap();
            let cell = res.cell(i, j);
            assert_eq!((cell.a, cell.b), (a, b));
            assert_eq!(cell.snapshots, single);
        }
    }
}

#[test]
fn failed_cells_are_marked_not_dropped() {
    let mut p = small_sweep();
    // negative R at one end of the axis is rejected per cell
    p.axis_b = SweepAxis::new(Parameter::R, -1.0, 1.0, 2).unwrap();
    let res = run_sweep(&p, Some(2)).unwrap();
    assert_eq!(res.cells.len(), 6);
    assert_eq!(res.failed(), 3);
    for i in 0..3 {
        assert!(!res.cell(i, 0).status.is_ok());
        assert!(res.cell(i, 0).snapshots.is_empty());
        assert!(res.cell(i, 1).status.is_ok());
    }
}
