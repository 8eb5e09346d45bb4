//! The library in single precision.

use felab::linalg::norm_inf;
use felab::observables::{fe_residual, Observable};
use felab::pde::{initial_state, wave_system, Grid1D, InitialPreset};
use felab::problems;
use felab::stepper::{rk_step, Integrator, SolverConfig};
use felab::tableaux::{builtin_tableau, preserves_quadratic, ButcherTableau, BUILTIN_TABLEAUX};

#[test]
fn builtins_cast_to_f32() {
    for name in BUILTIN_TABLEAUX {
        let wide = builtin_tableau::<f64>(name).unwrap();
        let narrow: ButcherTableau<f32> = wide.cast();
        let direct = builtin_tableau::<f32>(name).unwrap();
        assert_eq!(narrow.stages(), direct.stages());
        assert_eq!(narrow.order(), wide.order());
        for (r, s) in narrow.a().iter().zip(direct.a()) {
            for (x, y) in r.iter().zip(s) {
                assert!((x - y).abs() <= f32::EPSILON);
            }
        }
    }
}

#[test]
fn midpoint_decay_in_f32() {
    let t = builtin_tableau::<f32>("midpoint").unwrap();
    let y1 = rk_step(
        &t,
        &problems::linear_decay::<f32>(),
        &[1.0],
        1.0,
        &SolverConfig::default(),
    )
    .unwrap()
    .y1;
    assert!((y1[0] - 1.0 / 3.0).abs() <= 4.0 * f32::EPSILON);
}

#[test]
fn affine_fe_holds_in_f32() {
    let sum = Observable::<f32>::affine("q+p", vec![1.0, 1.0], vec![0.0]).unwrap();
    for name in ["rk4", "gauss2", "explicit-euler"] {
        let m = Integrator::rk(
            builtin_tableau::<f32>(name).unwrap(),
            problems::harmonic_oscillator::<f32>(),
        );
        let r = fe_residual(&m, &sum, &[1.0, 0.5], 0.1, &SolverConfig::default()).unwrap();
        assert!(r.max_abs() <= 1e-5, "{name}: {}", r.max_abs());
    }
}

#[test]
fn wave_contract_in_f32() {
    let sys = wave_system(Grid1D::<f32>::periodic(16, std::f32::consts::TAU).unwrap()).unwrap();
    let y = initial_state(
        &sys,
        InitialPreset::Random {
            seed: 9,
            amplitude: 1.0,
        },
    );
    for l in 0..sys.laws.len() {
        assert!(norm_inf(&sys.contract_residual(l, &y).unwrap()) <= 1e-4);
    }
}

#[test]
fn quadratic_condition_in_f32() {
    assert!(preserves_quadratic(&builtin_tableau::<f32>("gauss2").unwrap(), 1e-6));
    assert!(!preserves_quadratic(&builtin_tableau::<f32>("rk4").unwrap(), 1e-6));
}
