use std::sync::Arc;

use oseen_core::assembly::*;
use oseen_core::benchmarks::make_example;
use oseen_core::fe_space::{interpolate_velocity, project_pressure};
use oseen_core::linsolve::build_mean_constraint;
use oseen_core::mesh::{generate_unit_square_mesh, level_mesh};
use oseen_core::quadrature::triangle_rule;

fn disc(level: usize) -> Discretization {
    Discretization::new(level_mesh(&generate_unit_square_mesh(3, 0.2).unwrap(), level).unwrap()).unwrap()
}

fn polynomial_spec(method: Method, sigma: f64, mu: f64) -> SystemSpec {
    // beta = (x^2, -2xy) is divergence-free and quadratic
    SystemSpec {
        mu,
        sigma,
        delta0: 0.1,
        method,
        beta: Arc::new(|p| [p[0] * p[0], -2.0 * p[0] * p[1]]),
        grad_beta: Arc::new(|p| [[2.0 * p[0], 0.0], [-2.0 * p[1], -2.0 * p[0]]]),
        beta_inf: 2.0,
        f: Arc::new(|p| [p[1], 1.0 - p[0]]),
        curl_f: Some(Arc::new(|_| -2.0)),
        g: Arc::new(|_| [0.0, 0.0]),
    }
}

fn pseudo_random(n: usize, seed: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (((k + seed) * 2654435761) % 1000) as f64 / 500.0 - 1.0)
        .collect()
}

#[test]
fn exact_polynomial_flow_has_zero_velocity_residual() {
    for level in [1, 2] {
        let d = disc(level);
        for sigma in [0.0, 1.0] {
            let case = make_example(1, sigma, 1e-5).unwrap();
            let spec = case.system_spec(Method::SvLsvs, 0.006);
            let blocks = Blocks::assemble(&d, &spec, QuadratureDegrees::default()).unwrap();
            let mean = build_mean_constraint(&d.pressure, &d.mesh);
            let (dofs, values) = dirichlet_data(&d, &spec.g);
            let system = apply_dirichlet(&SparseSystem::from_blocks(&blocks, &mean), &dofs, &values);

            let u = interpolate_velocity(|x| (case.u)(x), &d.velocity).coeffs;
            let rule = triangle_rule(10).unwrap();
            let p = project_pressure(|x| (case.p)(x), &d.mesh, &d.maps, &rule).coeffs;
            let mut x = u;
            x.extend(p);
            x.push(0.0);
            let mx = system.matrix.mul_vec(&x);
            let scale = system.matrix.max_abs() * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let worst = (0..system.n_velocity)
                .map(|i| (mx[i] - system.rhs[i]).abs())
                .fold(0.0, f64::max);
            assert!(
                worst <= 1e-10 * scale,
                "level {level} sigma {sigma}: {worst:e} vs {scale:e}"
            );
        }
    }
}

#[test]
fn symmetric_parts() {
    let d = disc(1);
    let mut spec = polynomial_spec(Method::SvLsvs, 1.0, 0.7);
    let a = assemble_a(&d, &spec, 8).unwrap();
    assert!(
        a.max_abs_diff(&a.transpose()) > 1e-6,
        "convection must make A nonsymmetric"
    );
    spec.beta = Arc::new(|_| [0.0, 0.0]);
    spec.grad_beta = Arc::new(|_| [[0.0; 2]; 2]);
    let a = assemble_a(&d, &spec, 8).unwrap();
    assert!(a.max_abs_diff(&a.transpose()) <= 1e-13 * a.max_abs());

    let s = assemble_lsvs(
        &d,
        &polynomial_spec(Method::SvLsvs, 1.0, 1e-4),
        QuadratureDegrees::default(),
    )
    .unwrap();
    assert!(s.max_abs_diff(&s.transpose()) <= 1e-13 * s.max_abs());
}

#[test]
fn convection_is_skew_on_zero_trace_fields() {
    let d = disc(2);
    let a = assemble_a(&d, &polynomial_spec(Method::Sv, 0.0, 0.0), 8).unwrap();
    let boundary = d.velocity.boundary_dofs();
    for seed in 0..5 {
        let mut x = pseudo_random(d.n_velocity(), seed);
        for &b in &boundary {
            x[b] = 0.0;
        }
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let form = a.quadratic_form(&x, &x);
        assert!(form.abs() <= 1e-12 * norm2, "seed {seed}: {form:e}");
    }
}

#[test]
fn zero_parameter_reduces_to_galerkin() {
    let d = disc(1);
    let mean = build_mean_constraint(&d.pressure, &d.mesh);
    let system = |method: Method| {
        let mut spec = polynomial_spec(method, 1.0, 1e-3);
        spec.delta0 = 0.0;
        SparseSystem::from_blocks(
            &Blocks::assemble(&d, &spec, QuadratureDegrees::default()).unwrap(),
            &mean,
        )
    };
    let sv = system(Method::Sv);
    for method in [Method::SvSupg, Method::SvLsvs] {
        let other = system(method);
        assert_eq!(other.matrix.max_abs_diff(&sv.matrix), 0.0, "{method}");
        assert_eq!(other.rhs, sv.rhs, "{method}");
    }
}
