//! Hand-computed oracles for the worked examples.

use felab::linalg::{norm2, norm_inf, solve};
use felab::multisym::{DdwWaveSystem, MsPairState};
use felab::observables::{
    augment, bracket_identity_residual, contractivity_check, fe_residual, monotone_decrease_check, ForcedMechanical,
    Observable, QuadraticForm,
};
use felab::pde::{
    discrete_cl_residual, initial_state, integral_cl_residual, kdv_system, nls_system, wave_system, Grid1D,
    InitialPreset, ScalarMap,
};
use felab::problems;
use felab::stepper::{rk_step, Integrator, SolverConfig, VectorField};
use felab::tableaux::{
    ark_quadratic_condition, builtin_tableau, preserves_quadratic, quadratic_condition_matrix, AdditiveTableau,
    ConditionMode, PartitionedTableau, SplittingScheme, BUILTIN_TABLEAUX,
};
use felab::variational::{symplectic_residual, tangent_step, BilinearForm};
use felab::Tableau;

fn tab(name: &str) -> Tableau {
    builtin_tableau(name).unwrap()
}

fn cfg() -> SolverConfig<f64> {
    SolverConfig::with_tol(1e-13)
}

fn half_square() -> Observable<f64> {
    Observable::quadratic("F", QuadraticForm::new(vec![0.5], vec![0.0], 0.0).unwrap())
}

/// Elementary-weight order conditions up to order four, with `c = A 1`.
fn order_condition_defects(t: &Tableau) -> Vec<(u32, f64)> {
    let s = t.stages();
    let (a, b) = (t.a(), t.b());
    let c: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let av = |v: &[f64]| -> Vec<f64> { (0..s).map(|i| (0..s).map(|j| a[i][j] * v[j]).sum()).collect() };
    let bw = |v: &[f64]| -> f64 { (0..s).map(|i| b[i] * v[i]).sum() };
    let pw = |k: i32| -> Vec<f64> { c.iter().map(|x| x.powi(k)).collect() };
    let ac = av(&c);
    let c_ac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();
    vec![
        (1, bw(&vec![1.0; s]) - 1.0),
        (2, bw(&c) - 0.5),
        (3, bw(&pw(2)) - 1.0 / 3.0),
        (3, bw(&ac) - 1.0 / 6.0),
        (4, bw(&pw(3)) - 0.25),
        (4, bw(&c_ac) - 0.125),
        (4, bw(&av(&pw(2))) - 1.0 / 12.0),
        (4, bw(&av(&ac)) - 1.0 / 24.0),
    ]
}

#[test]
fn declared_orders_match_the_order_conditions() {
    for name in BUILTIN_TABLEAUX {
        let t = tab(name);
        let p = t.order();
        let defects = order_condition_defects(&t);
        for (q, d) in &defects {
            if *q <= p {
                assert!(d.abs() <= 1e-14, "{name}: order-{q} condition off by {d:e}");
            }
        }
        if p < 4 {
            assert!(
                defects.iter().any(|(q, d)| *q == p + 1 && d.abs() > 1e-3),
                "{name} satisfies every order-{} condition",
                p + 1
            );
        }
    }
}

#[test]
fn gauss2_coefficients_and_linear_order() {
    let t = tab("gauss2");
    let r = 3f64.sqrt() / 6.0;
    let want = [[0.25, 0.25 - r], [0.25 + r, 0.25]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((t.a()[i][j] - want[i][j]).abs() <= 1e-16);
        }
        assert_eq!(t.b()[i], 0.5);
    }
    // y' = y: one step is R(z) = 1 + z b^T (I - zA)^{-1} 1, with R(z) - e^z = O(z^5)
    let stability = |t: &Tableau, z: f64| {
        let s = t.stages();
        let mut m = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                m[i * s + j] = f64::from(u8::from(i == j)) - z * t.a()[i][j];
            }
        }
        let k = solve(m, s, &vec![1.0; s]).unwrap();
        1.0 + z * t.b().iter().zip(&k).map(|(b, k)| b * k).sum::<f64>()
    };
    for (name, p) in [("gauss2", 4), ("gauss3", 6), ("rk4", 4), ("midpoint", 2)] {
        let t = tab(name);
        let err = |z: f64| (stability(&t, z) - z.exp()).abs();
        let ratio = err(0.2) / err(0.1);
        let expect = 2f64.powi(p + 1);
        assert!((ratio / expect - 1.0).abs() < 0.25, "{name}: ratio {ratio} vs {expect}");
    }
}

#[test]
fn quadratic_condition_examples() {
    let rk4 = quadratic_condition_matrix(&tab("rk4"));
    assert!(rk4.iter().flatten().any(|v| v.abs() > 0.1));
    assert!(preserves_quadratic(&tab("gauss2"), 1e-12));
    assert!(!preserves_quadratic(&tab("rk4"), 1e-12));
    let lob = AdditiveTableau::new(vec![tab("lobatto-iiia-2"), tab("lobatto-iiib-2")]).unwrap();
    assert!(ark_quadratic_condition(&lob, 1e-14, ConditionMode::Bilinear));
    assert!(!ark_quadratic_condition(&lob, 1e-14, ConditionMode::Full));
}

#[test]
fn midpoint_decay_step_is_one_third() {
    let y1 = rk_step(&tab("midpoint"), &problems::linear_decay(), &[1.0], 1.0, &cfg())
        .unwrap()
        .y1;
    assert!((y1[0] - 1.0 / 3.0).abs() <= 1e-15);
}

#[test]
fn lobatto_pair_is_the_leapfrog_step() {
    let (q0, p0, dt) = (1.0, 0.0, 0.1);
    let prk = Integrator::Prk {
        tableau: PartitionedTableau::pair(tab("lobatto-iiia-2"), tab("lobatto-iiib-2"), 2, 1).unwrap(),
        field: problems::harmonic_oscillator(),
    };
    let y1 = prk.step(&[q0, p0], dt, &cfg()).unwrap().y1;
    let p_half = p0 - 0.5 * dt * q0;
    let q1 = q0 + dt * p_half;
    let p1 = p_half - 0.5 * dt * q1;
    assert!((y1[0] - q1).abs() <= 1e-14 && (y1[1] - p1).abs() <= 1e-14, "{y1:?}");
    let strang = Integrator::Splitting {
        scheme: SplittingScheme::strang(),
        flows: problems::oscillator_flows(),
    };
    let z1 = strang.step(&[q0, p0], dt, &cfg()).unwrap().y1;
    assert!((z1[0] - q1).abs() <= 1e-14 && (z1[1] - p1).abs() <= 1e-14, "{z1:?}");
}

#[test]
fn imex_step_matches_hand_solve() {
    let parts = vec![
        VectorField::new("kinetic", 2, |y: &[f64]| vec![y[1], 0.0]).with_jacobian(|_, w: &[f64]| vec![w[1], 0.0]),
        VectorField::new("force", 2, |y: &[f64]| vec![0.0, -y[0]]).with_jacobian(|_, w: &[f64]| vec![0.0, -w[0]]),
    ];
    let ark = Integrator::Ark {
        tableau: AdditiveTableau::new(vec![tab("implicit-euler"), tab("explicit-euler")]).unwrap(),
        parts,
    };
    // stage: Y = y0 + dt f1(Y) gives Y = (1 + dt Yp, 0) = (1, 0)
    // update: y1 = y0 + dt (f1(Y) + f2(Y)) = (1, -dt)
    let y1 = ark.step(&[1.0, 0.0], 0.1, &cfg()).unwrap().y1;
    assert!((y1[0] - 1.0).abs() <= 1e-15 && (y1[1] + 0.1).abs() <= 1e-15, "{y1:?}");
}

#[test]
fn lie_trotter_shear_decay_closed_form() {
    let m = Integrator::Splitting {
        scheme: SplittingScheme::lie_trotter(),
        flows: problems::shear_decay_flows(),
    };
    let y1 = m.step(&[0.0, 1.0], 1.0, &cfg()).unwrap().y1;
    assert!((y1[0] - 1.0).abs() <= 1e-15);
    assert!((y1[1] - (-1.0f64).exp()).abs() <= 1e-15);
}

#[test]
fn augmented_field_of_decay_and_square() {
    let square = Observable::quadratic("square", QuadraticForm::new(vec![1.0], vec![0.0], 0.0).unwrap());
    let aug = augment(&problems::linear_decay(), &square).unwrap();
    for y in [0.5, -1.3, 2.0] {
        let g: Vec<f64> = aug.combined.eval(&[y, 7.0]);
        assert!((g[0] + y).abs() <= 1e-15);
        assert!((g[1] + 2.0 * y * y).abs() <= 1e-14);
    }
    let r = fe_residual(
        &Integrator::rk(tab("midpoint"), problems::linear_decay()),
        &square,
        &[1.0],
        1.0,
        &cfg(),
    )
    .unwrap();
    assert!(r.max_abs() <= 1e-14);
}

#[test]
fn rk4_is_affine_equivariant_on_the_oscillator() {
    let sum = Observable::affine("q+p", vec![1.0, 1.0], vec![0.0]).unwrap();
    let m = Integrator::rk(tab("rk4"), problems::harmonic_oscillator());
    assert!(fe_residual(&m, &sum, &[1.0, 0.0], 0.1, &cfg()).unwrap().max_abs() <= 1e-13);
}

fn gradient(obs: &Observable<f64>, y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|k| {
            let mut e = vec![0.0; y.len()];
            e[k] = 1.0;
            obs.deriv(y, &e)[0]
        })
        .collect()
}

#[test]
fn rigid_body_casimir_bracket_identity() {
    let inertia = [1.0, 2.0, 3.0];
    let f = problems::rigid_body(inertia);
    let h = problems::rigid_body_energy(inertia);
    let casimir = Observable::quadratic(
        "C",
        QuadraticForm::new(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.0; 3], 0.0).unwrap(),
    );
    let (c2, h2) = (casimir.clone(), h.clone());
    let bracket = move |y: &[f64]| problems::rigid_body_bracket(&gradient(&c2, y), &gradient(&h2, y), y);
    let y0 = [0.6, -0.8, 0.5];
    let r = bracket_identity_residual(&tab("midpoint"), &f, &casimir, &bracket, &y0, 0.1, &cfg()).unwrap();
    assert!(r <= 1e-12);
    assert!(bracket(&y0).abs() <= 1e-14);
    let y1 = rk_step(&tab("midpoint"), &f, &y0, 0.1, &cfg()).unwrap().y1;
    assert!((casimir.value(&y1) - casimir.value(&y0)).abs() <= 1e-12);
}

#[test]
fn noninvariant_quadratic_bracket_identity() {
    let f = problems::harmonic_oscillator();
    let q_sq = Observable::quadratic(
        "q^2",
        QuadraticForm::new(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 2], 0.0).unwrap(),
    );
    // {q^2, H} = 2 q p for H = (q^2 + p^2) / 2
    let bracket = |y: &[f64]| 2.0 * y[0] * y[1];
    let y0 = [1.0, 0.5];
    let r = bracket_identity_residual(&tab("midpoint"), &f, &q_sq, &bracket, &y0, 0.1, &cfg()).unwrap();
    assert!(r <= 1e-12);
    let y1 = rk_step(&tab("midpoint"), &f, &y0, 0.1, &cfg()).unwrap().y1;
    assert!((q_sq.value(&y1) - q_sq.value(&y0)).abs() > 1e-3);
}

#[test]
fn forced_mechanical_identities() {
    let harmonic = Observable::quadratic("V", QuadraticForm::new(vec![0.5], vec![0.0], 0.0).unwrap());
    let sys = ForcedMechanical::damped(&[1.0], harmonic, 0.3).unwrap();
    assert!(
        sys.dissipation_identity_residual(&tab("midpoint"), &[1.0, 0.0], 0.1, &cfg())
            .unwrap()
            <= 1e-12
    );
    let energy = Observable::quadratic(
        "H",
        QuadraticForm::new(vec![0.5, 0.0, 0.0, 0.5], vec![0.0; 2], 0.0).unwrap(),
    );
    assert!(monotone_decrease_check(&tab("gauss2"), &sys.field(), &energy, &[1.0, 0.0], 50, 0.2, &cfg()).unwrap());
    let cosine = Observable::scalar(
        "V",
        1,
        felab::observables::ObservableClass::General,
        |q: &[f64]| -q[0].cos(),
        |q: &[f64]| vec![q[0].sin()],
    );
    let pend = ForcedMechanical::damped(&[1.0], cosine, 0.0).unwrap();
    let y0 = [2.0, 1.0];
    assert!(
        pend.kinetic_work_identity_residual(&tab("midpoint"), &y0, 0.2, &cfg())
            .unwrap()
            <= 1e-12
    );
    assert!(
        pend.dissipation_identity_residual(&tab("midpoint"), &y0, 0.2, &cfg())
            .unwrap()
            > 1e-6
    );
}

/// Midpoint on `y' = -y^3` by bisection on `Y = y0 - (dt/2) Y^3`.
fn midpoint_cubic(y0: f64, dt: f64) -> f64 {
    let g = |v: f64| v - y0 + 0.5 * dt * v * v * v;
    let (mut lo, mut hi) = (-y0.abs() - 1.0, y0.abs() + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    2.0 * 0.5 * (lo + hi) - y0
}

#[test]
fn cubic_contraction_against_bisection() {
    let (d1, d0) =
        contractivity_check(&tab("midpoint"), &problems::cubic_decay(), &[2.0], &[-1.0], 0.5, &cfg()).unwrap();
    let want = (midpoint_cubic(2.0, 0.5) - midpoint_cubic(-1.0, 0.5)).abs();
    assert!((d1 - want).abs() <= 1e-12, "{d1} vs {want}");
    assert_eq!(d0, 3.0);
    assert!(d1 <= d0);
    let k = problems::default_convex_matrix::<f64>();
    let (d1, d0) = contractivity_check(
        &tab("gauss2"),
        &problems::gradient_flow(k),
        &[1.0, -1.0, 0.5],
        &[0.0, 2.0, -1.0],
        0.5,
        &cfg(),
    )
    .unwrap();
    assert!(d1 <= d0);
}

#[test]
fn monotone_decay_of_half_square() {
    assert!(monotone_decrease_check(
        &tab("midpoint"),
        &problems::linear_decay(),
        &half_square(),
        &[1.0],
        50,
        0.2,
        &cfg()
    )
    .unwrap());
}

#[test]
fn tangent_map_of_linear_field_is_the_stability_map() {
    let l = [0.0, 1.0, -2.0, -0.3];
    let f = VectorField::new("lin", 2, move |y: &[f64]| {
        vec![l[0] * y[0] + l[1] * y[1], l[2] * y[0] + l[3] * y[1]]
    })
    .with_jacobian(move |_, w: &[f64]| vec![l[0] * w[0] + l[1] * w[1], l[2] * w[0] + l[3] * w[1]]);
    let eta0 = [0.3, -0.7];
    for name in BUILTIN_TABLEAUX {
        let t = tab(name);
        let ts = tangent_step(
            &Integrator::rk(t.clone(), f.clone()),
            &[1.0, 0.2],
            &[eta0.to_vec()],
            0.2,
            &cfg(),
        )
        .unwrap();
        let r_eta = rk_step(&t, &f, &eta0, 0.2, &cfg()).unwrap().y1;
        let gap: Vec<f64> = ts.etas1[0].iter().zip(&r_eta).map(|(a, b)| a - b).collect();
        assert!(norm_inf(&gap) <= 1e-12, "{name}");
    }
}

#[test]
fn pendulum_tangent_map_against_finite_differences() {
    let f = problems::pendulum::<f64>(1.0);
    let (y0, eta) = ([1.0, 0.5], [0.8, -0.6]);
    let tight = SolverConfig::with_tol(1e-16);
    let ts = tangent_step(
        &Integrator::rk(tab("midpoint"), f.clone()),
        &y0,
        &[eta.to_vec()],
        0.5,
        &tight,
    )
    .unwrap();
    let err = |eps: f64| {
        let at = |s: f64| [y0[0] + s * eps * eta[0], y0[1] + s * eps * eta[1]];
        let p = rk_step(&tab("midpoint"), &f, &at(1.0), 0.5, &tight).unwrap().y1;
        let m = rk_step(&tab("midpoint"), &f, &at(-1.0), 0.5, &tight).unwrap().y1;
        norm_inf(&[
            (p[0] - m[0]) / (2.0 * eps) - ts.etas1[0][0],
            (p[1] - m[1]) / (2.0 * eps) - ts.etas1[0][1],
        ])
    };
    let ratio = err(1e-3) / err(1e-4);
    assert!((50.0..=200.0).contains(&ratio), "{ratio}");
}

#[test]
fn symplectic_residual_examples() {
    let omega = BilinearForm::canonical(1);
    let (xi, eta) = ([1.0, 0.0], [0.0, 1.0]);
    let pend = problems::pendulum::<f64>(1.0);
    let r = symplectic_residual(&tab("midpoint"), &pend, &omega, &[1.0, 0.5], &xi, &eta, 0.1, &cfg()).unwrap();
    assert!(r.residual <= 1e-12 && (r.omega1 - r.omega0).abs() <= 1e-12);
    let r = symplectic_residual(&tab("rk4"), &pend, &omega, &[1.0, 0.5], &xi, &eta, 0.5, &cfg()).unwrap();
    assert!((r.omega1 - r.omega0).abs() > 1e-8);
    // midpoint on the damped oscillator: omega scales by det of the Cayley map
    let (c, dt) = (0.3, 0.1);
    let damped = problems::damped_oscillator::<f64>(c);
    let r = symplectic_residual(&tab("midpoint"), &damped, &omega, &[1.0, 0.0], &xi, &eta, dt, &cfg()).unwrap();
    assert!(r.residual <= 1e-12);
    let a = dt / 2.0;
    let cayley = (1.0 - a * c + a * a) / (1.0 + a * c + a * a);
    assert!((r.omega1 - cayley * r.omega0).abs() <= 1e-14);
}

#[test]
fn damped_flow_contracts_omega_by_exp_minus_c_dt() {
    let (c, dt) = (0.3, 0.4);
    let w = (1.0 - c * c / 4.0f64).sqrt();
    let flow = |v: [f64; 2]| -> [f64; 2] {
        // exp(tL) = e^{-ct/2} (cos(wt) I + sin(wt)/w (L + c/2 I)) with L = [[0, 1], [-1, -c]]
        let (co, si, e) = ((w * dt).cos(), (w * dt).sin() / w, (-c * dt / 2.0).exp());
        [
            e * (co * v[0] + si * (0.5 * c * v[0] + v[1])),
            e * (co * v[1] + si * (-v[0] + (0.5 * c - c) * v[1])),
        ]
    };
    let omega = BilinearForm::canonical(1);
    let (xi, eta) = ([0.7, -0.2], [0.1, 0.9]);
    let ratio = omega.eval(&flow(xi), &flow(eta)) / omega.eval(&xi, &eta);
    assert!((ratio - (-c * dt).exp()).abs() <= 1e-14);
    // a fine gauss3 tangent propagation reproduces the same contraction
    let f = problems::damped_oscillator::<f64>(c);
    let m = Integrator::rk(tab("gauss3"), f);
    let (mut y, mut etas) = (vec![1.0, 0.0], vec![xi.to_vec(), eta.to_vec()]);
    for _ in 0..40 {
        let ts = tangent_step(&m, &y, &etas, dt / 40.0, &cfg()).unwrap();
        (y, etas) = (ts.y1, ts.etas1);
    }
    let numeric = omega.eval(&etas[0], &etas[1]) / omega.eval(&xi, &eta);
    assert!((numeric - (-c * dt).exp()).abs() <= 1e-12, "{numeric}");
    // and matches the closed-form flow on the variations themselves
    let want = flow(xi);
    assert!((etas[0][0] - want[0]).abs() <= 1e-12 && (etas[0][1] - want[1]).abs() <= 1e-12);
}

#[test]
fn semidiscrete_contracts_on_examples() {
    let wave8 = wave_system(Grid1D::periodic(8, std::f64::consts::TAU).unwrap()).unwrap();
    let y = initial_state(&wave8, InitialPreset::PlaneWave { mode: 1 });
    for l in 0..wave8.laws.len() {
        assert!(norm_inf(&wave8.contract_residual(l, &y).unwrap()) <= 1e-13);
    }
    let g16 = Grid1D::periodic(16, std::f64::consts::TAU).unwrap();
    let nls = nls_system(g16, ScalarMap::cubic(1.0)).unwrap();
    let y = initial_state(
        &nls,
        InitialPreset::Random {
            seed: 4,
            amplitude: 1.0,
        },
    );
    assert!(norm_inf(&nls.contract_residual(0, &y).unwrap()) <= 1e-13);
}

/// KdV mass flux written out by hand, summed by parts against the scheme.
#[test]
fn kdv_mass_flux_by_hand() {
    let (alpha, nu, theta) = (1.3, 0.7, 0.4);
    let g = Grid1D::periodic(12, 3.0).unwrap();
    let sys = kdv_system(g, alpha, nu, theta).unwrap();
    let u: Vec<f64> = initial_state(
        &sys,
        InitialPreset::Random {
            seed: 17,
            amplitude: 1.0,
        },
    );
    let h = g.h();
    let at = |k: isize| u[g.wrap(0, 0) + ((k + 12) % 12) as usize];
    let flux = |k: isize| {
        let (a, b, c, d) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        -(alpha / 2.0 * (theta * (b * b + c * c) + 2.0 * (1.0 - theta) * b * c) + nu / (2.0 * h * h) * (d - c - b + a))
    };
    let udot: Vec<f64> = sys.field.eval(&u);
    let mass = sys.law("mass").unwrap();
    for k in 0..12isize {
        let div = (flux(k) - flux(k - 1)) / h;
        assert!((udot[k as usize] + div).abs() <= 1e-12, "node {k}");
        assert!((sys.laws[mass].flux(&u, k as usize) - flux(k)).abs() <= 1e-13);
    }
}

#[test]
fn discrete_laws_on_examples() {
    let g16 = Grid1D::periodic(16, std::f64::consts::TAU).unwrap();
    let wave = wave_system(g16).unwrap();
    let nls = nls_system(g16, ScalarMap::cubic(1.0)).unwrap();
    let yw = initial_state(
        &wave,
        InitialPreset::Random {
            seed: 1,
            amplitude: 1.0,
        },
    );
    let yn = initial_state(
        &nls,
        InitialPreset::Random {
            seed: 2,
            amplitude: 1.0,
        },
    );
    let energy = wave.law("energy").unwrap();
    assert!(
        discrete_cl_residual(&tab("midpoint"), &wave, energy, &yw, 0.05, &cfg())
            .unwrap()
            .max_abs()
            <= 1e-11
    );
    assert!(
        discrete_cl_residual(&tab("gauss2"), &nls, 0, &yn, 0.05, &cfg())
            .unwrap()
            .max_abs()
            <= 1e-11
    );
    let rk4 = discrete_cl_residual(&tab("rk4"), &wave, energy, &yw, 0.1, &cfg())
        .unwrap()
        .max_abs();
    assert!(rk4 > 1e-7);
    let halved = discrete_cl_residual(&tab("rk4"), &wave, energy, &yw, 0.05, &cfg())
        .unwrap()
        .max_abs();
    assert!(rk4 / halved >= 16.0, "{rk4:e} -> {halved:e}");
    let half = integral_cl_residual(&tab("midpoint"), &wave, energy, 0, 7, &yw, 0.05, &cfg()).unwrap();
    assert!(half.abs() <= 1e-11);
    let kdv = kdv_system(g16, 1.0, 1.0, 0.0).unwrap();
    let yk = initial_state(
        &kdv,
        InitialPreset::Random {
            seed: 3,
            amplitude: 1.0,
        },
    );
    let candidate = felab::pde::kdv_energy_candidate(g16, 1.0, 1.0);
    assert!(norm_inf(&kdv.contract_residual_with(&candidate, &yk)) > 1e-3);
}

#[test]
fn ms_rate_matches_time_differences() {
    let ms = DdwWaveSystem::new(Grid1D::periodic(16, std::f64::consts::TAU).unwrap()).unwrap();
    let draw = |s| {
        initial_state(
            &ms.base,
            InitialPreset::Random {
                seed: s,
                amplitude: 1.0,
            },
        )
    };
    let s0 = MsPairState::new(draw(21), draw(22), draw(23)).unwrap();
    let m = Integrator::rk(tab("gauss3"), ms.base.field.clone());
    let delta = 1e-3;
    let advance = |s: &MsPairState<f64>, dt: f64| {
        let ts = tangent_step(&m, &s.y, &[s.xi.clone(), s.eta.clone()], dt, &cfg()).unwrap();
        MsPairState::new(ts.y1, ts.etas1[0].clone(), ts.etas1[1].clone()).unwrap()
    };
    let (s1, s2) = (advance(&s0, delta), advance(&s0, 2.0 * delta));
    for k in 0..ms.nodes() {
        // one-sided second-order difference in time
        let rate = (-3.0 * ms.ms_density(&s0, k) + 4.0 * ms.ms_density(&s1, k) - ms.ms_density(&s2, k)) / (2.0 * delta);
        let km = ms.grid.wrap(k, -1);
        let div = (ms.ms_flux(&s0, k) - ms.ms_flux(&s0, km)) / ms.grid.h();
        assert!(
            (rate - div).abs() <= 1e-4 * (1.0 + div.abs()),
            "node {k}: {rate} vs {div}"
        );
    }
}

#[test]
fn discrete_mscl_examples() {
    let ms = DdwWaveSystem::new(Grid1D::periodic(16, std::f64::consts::TAU).unwrap()).unwrap();
    let draw = |s| {
        initial_state(
            &ms.base,
            InitialPreset::Random {
                seed: s,
                amplitude: 1.0,
            },
        )
    };
    let s0 = MsPairState::new(draw(31), draw(32), draw(33)).unwrap();
    for name in ["midpoint", "gauss2"] {
        let st = ms.discrete_mscl_residual(&tab(name), &s0, 0.05, &cfg()).unwrap();
        assert!(norm_inf(&st.residuals) <= 1e-11, "{name}");
    }
    assert!(
        ms.global_symplectic_residual(&tab("midpoint"), &s0, 0.05, &cfg())
            .unwrap()
            <= 1e-11
    );
    let st = ms.discrete_mscl_residual(&tab("rk4"), &s0, 0.1, &cfg()).unwrap();
    assert!(norm_inf(&st.residuals) > 1e-7);
    let mut s = s0.clone();
    for _ in 0..200 {
        let st = ms.discrete_mscl_residual(&tab("gauss3"), &s, 0.1, &cfg()).unwrap();
        let scale = norm2(&[s.y.clone(), s.xi.clone(), s.eta.clone()].concat());
        assert!(norm_inf(&st.residuals) <= 1e-10 * (1.0 + scale * scale));
        s = st.state;
    }
}
