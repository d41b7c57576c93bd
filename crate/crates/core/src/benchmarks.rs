//! Manufactured Oseen solutions, error norms, convergence rates and the
//! diagnostics reported by convergence studies.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;
use std::time::Instant;

use crate::assembly::{
    sample_points, Discretization, Method, QuadratureDegrees, ScalarField, SystemSpec, TensorField, VectorField,
};
use crate::error::{BenchmarkError, Error};
use crate::fe_space::{eval_pressure, eval_velocity_with, project_pressure, tabulate};
use crate::linsolve::{build_mean_constraint, shift_pressure_mean, solve_problem, CsrMatrix, SaddleSolution, Solved};
use crate::mesh::{level_mesh, Point, Triangulation};
use crate::quadrature::triangle_rule;

/// Bound on `|beta|` used by the stabilization parameter, per example.
pub const BETA_INF_EXAMPLE_1: f64 = 6.0 * SQRT_2;
pub const BETA_INF_EXAMPLE_2: f64 = SQRT_2;
pub const BETA_INF_EXAMPLE_3: f64 = 1.0;
pub const BETA_INF_EXAMPLE_4: f64 = 1.0 + SQRT_2;

/// Exact solution and data of one manufactured problem.
#[derive(Clone)]
pub struct BenchmarkCase {
    pub id: u32,
    pub sigma: f64,
    pub mu: f64,
    pub u: VectorField,
    pub grad_u: TensorField,
    pub p: ScalarField,
    pub beta: VectorField,
    pub grad_beta: TensorField,
    pub beta_inf: f64,
    pub f: VectorField,
    pub curl_f: ScalarField,
}

impl std::fmt::Debug for BenchmarkCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkCase")
            .field("id", &self.id)
            .field("sigma", &self.sigma)
            .field("mu", &self.mu)
            .field("beta_inf", &self.beta_inf)
            .finish_non_exhaustive()
    }
}

fn lattice_u(p: Point) -> [f64; 2] {
    let (sx, cx) = (2.0 * PI * p[0]).sin_cos();
    let (sy, cy) = (2.0 * PI * p[1]).sin_cos();
    [sx * sy, cx * cy]
}

fn lattice_grad(p: Point) -> [[f64; 2]; 2] {
    let (sx, cx) = (2.0 * PI * p[0]).sin_cos();
    let (sy, cy) = (2.0 * PI * p[1]).sin_cos();
    let k = 2.0 * PI;
    [[k * cx * sy, k * sx * cy], [-k * sx * cy, -k * cx * sy]]
}

fn lattice_p(p: Point) -> f64 {
    0.25 * ((4.0 * PI * p[0]).cos() - (4.0 * PI * p[1]).cos())
}

/// `curl u = -4 pi sin(2 pi x) cos(2 pi y)`.
fn lattice_curl(p: Point) -> f64 {
    -4.0 * PI * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()
}

/// `d_y u` for the lattice field.
fn lattice_dy(p: Point) -> [f64; 2] {
    let g = lattice_grad(p);
    [g[0][1], g[1][1]]
}

/// Builds example `id` (1 to 4) with reaction `sigma` and viscosity `mu`.
pub fn make_example(id: u32, sigma: f64, mu: f64) -> Result<BenchmarkCase, BenchmarkError> {
    let lap = 8.0 * PI * PI;
    let case = match id {
        1 => {
            // u = grad h, h = x^3 - 3 x y^2; with f = 0 the pressure absorbs
            // sigma u + (u . grad) u = grad(sigma h + |u|^2 / 2)
            let u: VectorField = Arc::new(|p: Point| [3.0 * p[0] * p[0] - 3.0 * p[1] * p[1], -6.0 * p[0] * p[1]]);
            let grad: TensorField = Arc::new(|p: Point| [[6.0 * p[0], -6.0 * p[1]], [-6.0 * p[1], -6.0 * p[0]]]);
            BenchmarkCase {
                id,
                sigma,
                mu,
                u: u.clone(),
                grad_u: grad.clone(),
                p: Arc::new(move |p: Point| {
                    let v = [3.0 * p[0] * p[0] - 3.0 * p[1] * p[1], -6.0 * p[0] * p[1]];
                    let h = p[0].powi(3) - 3.0 * p[0] * p[1] * p[1];
                    -0.5 * (v[0] * v[0] + v[1] * v[1]) - sigma * h + 14.0 / 5.0
                }),
                beta: u,
                grad_beta: grad,
                beta_inf: BETA_INF_EXAMPLE_1,
                f: Arc::new(|_| [0.0, 0.0]),
                curl_f: Arc::new(|_| 0.0),
            }
        }
        2 => {
            let scale = sigma + lap * mu;
            BenchmarkCase {
                id,
                sigma,
                mu,
                u: Arc::new(lattice_u),
                grad_u: Arc::new(lattice_grad),
                p: Arc::new(lattice_p),
                beta: Arc::new(lattice_u),
                grad_beta: Arc::new(lattice_grad),
                beta_inf: BETA_INF_EXAMPLE_2,
                f: Arc::new(move |p| {
                    let u = lattice_u(p);
                    [scale * u[0], scale * u[1]]
                }),
                curl_f: Arc::new(move |p| scale * lattice_curl(p)),
            }
        }
        3 | 4 => {
            // f = sigma u + d_y u - mu lap u in both cases: for example 4 the
            // extra (u . grad) u equals -grad p
            let scale = sigma + lap * mu;
            let forcing = move |p: Point| {
                let u = lattice_u(p);
                let dy = lattice_dy(p);
                [scale * u[0] + dy[0], scale * u[1] + dy[1]]
            };
            // d_y curl u = 8 pi^2 sin(2 pi x) sin(2 pi y)
            let curl_f =
                move |p: Point| scale * lattice_curl(p) + lap * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin();
            let (p, beta, grad_beta, beta_inf): (ScalarField, VectorField, TensorField, f64) = if id == 3 {
                (
                    Arc::new(|_| 0.0),
                    Arc::new(|_| [0.0, 1.0]),
                    Arc::new(|_| [[0.0; 2]; 2]),
                    BETA_INF_EXAMPLE_3,
                )
            } else {
                (
                    Arc::new(lattice_p),
                    Arc::new(|p| {
                        let u = lattice_u(p);
                        [u[0], u[1] + 1.0]
                    }),
                    Arc::new(lattice_grad),
                    BETA_INF_EXAMPLE_4,
                )
            };
            BenchmarkCase {
                id,
                sigma,
                mu,
                u: Arc::new(lattice_u),
                grad_u: Arc::new(lattice_grad),
                p,
                beta,
                grad_beta,
                beta_inf,
                f: Arc::new(forcing),
                curl_f: Arc::new(curl_f),
            }
        }
        other => return Err(BenchmarkError::UnknownExample(other)),
    };
    Ok(case)
}

const FD_H: f64 = 1e-3;

/// Fourth-order central first derivative.
fn d1(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x + 2.0 * FD_H) + 8.0 * f(x + FD_H) - 8.0 * f(x - FD_H) + f(x - 2.0 * FD_H)) / (12.0 * FD_H)
}

/// Fourth-order central second derivative.
fn d2(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x + 2.0 * FD_H) + 16.0 * f(x + FD_H) - 30.0 * f(x) + 16.0 * f(x - FD_H) - f(x - 2.0 * FD_H))
        / (12.0 * FD_H * FD_H)
}

fn fd_gradient(f: &dyn Fn(Point) -> f64, p: Point) -> [f64; 2] {
    [d1(&|x| f([x, p[1]]), p[0]), d1(&|y| f([p[0], y]), p[1])]
}

fn fd_laplacian(f: &dyn Fn(Point) -> f64, p: Point) -> f64 {
    d2(&|x| f([x, p[1]]), p[0]) + d2(&|y| f([p[0], y]), p[1])
}

impl BenchmarkCase {
    pub fn system_spec(&self, method: Method, delta0: f64) -> SystemSpec {
        SystemSpec {
            mu: self.mu,
            sigma: self.sigma,
            delta0,
            method,
            beta: self.beta.clone(),
            grad_beta: self.grad_beta.clone(),
            beta_inf: self.beta_inf,
            f: self.f.clone(),
            curl_f: Some(self.curl_f.clone()),
            g: self.u.clone(),
        }
    }

    /// Checks the momentum equation, incompressibility and the velocity
    /// gradient callback against finite differences of the exact fields.
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        for x in sample_points(20) {
            let u = (self.u)(x);
            let beta = (self.beta)(x);
            let grad = (self.grad_u)(x);
            let mut momentum_scale = 1.0f64;
            let mut residual = [0.0; 2];
            let grad_p = fd_gradient(&|q| (self.p)(q), x);
            let f = (self.f)(x);
            for i in 0..2 {
                let component = |q: Point| (self.u)(q)[i];
                let g = fd_gradient(&component, x);
                for j in 0..2 {
                    if (g[j] - grad[i][j]).abs() > 1e-8 * grad[i][j].abs().max(1.0) {
                        return Err(BenchmarkError::Inconsistent(format!(
                            "example {}: grad u[{i}][{j}] at {x:?}: {} vs finite difference {}",
                            self.id, grad[i][j], g[j]
                        )));
                    }
                }
                let convection = beta[0] * g[0] + beta[1] * g[1];
                let viscous = self.mu * fd_laplacian(&component, x);
                let terms = [self.sigma * u[i], convection, viscous, grad_p[i], f[i]];
                momentum_scale = terms.iter().fold(momentum_scale, |m, t| m.max(t.abs()));
                residual[i] = f[i] - (self.sigma * u[i] + convection - viscous + grad_p[i]);
            }
            if residual.iter().any(|r| r.abs() > 1e-8 * momentum_scale) {
                return Err(BenchmarkError::Inconsistent(format!(
                    "example {}: momentum residual {residual:?} at {x:?}",
                    self.id
                )));
            }
            let div = grad[0][0] + grad[1][1];
            if div.abs() > 1e-10 {
                return Err(BenchmarkError::Inconsistent(format!(
                    "example {}: div u = {div:e} at {x:?}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Integral of the exact pressure over the mesh domain.
fn pressure_mean(p: &ScalarField, disc: &Discretization, degree: usize) -> Result<f64, Error> {
    let rule = triangle_rule(degree)?;
    let mut integral = 0.0;
    for map in &disc.maps {
        for (l, w) in rule.iter() {
            integral += w * map.det * p(map.point(l));
        }
    }
    Ok(integral / disc.mesh.total_area())
}

/// `(||u - u_h||_0, ||grad(u - u_h)||_0, ||p - p_h||_0)`, pressures compared
/// after removing the mean of both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_p: f64,
}

pub fn error_norms(
    case: &BenchmarkCase,
    velocity: &[f64],
    pressure: &[f64],
    disc: &Discretization,
    degree: usize,
) -> Result<ErrorNorms, Error> {
    let rule = triangle_rule(degree)?;
    let tab = tabulate(&rule);
    let mean = build_mean_constraint(&disc.pressure, &disc.mesh);
    let ph = shift_pressure_mean(pressure, &mean);
    let p_mean = pressure_mean(&case.p, disc, degree)?;
    let (mut l2u, mut h1u, mut l2p) = (0.0, 0.0, 0.0);
    for (t, map) in disc.maps.iter().enumerate() {
        for (q, (l, w)) in rule.iter().enumerate() {
            let x = map.point(l);
            let jw = w * map.det;
            let e = eval_velocity_with(velocity, &disc.velocity, t, &map.push_derivatives(&tab[q]));
            let u = (case.u)(x);
            let g = (case.grad_u)(x);
            for i in 0..2 {
                l2u += jw * (u[i] - e.value[i]).powi(2);
                for j in 0..2 {
                    h1u += jw * (g[i][j] - e.grad[i][j]).powi(2);
                }
            }
            let dp = (case.p)(x) - p_mean - eval_pressure(&ph, t, l);
            l2p += jw * dp * dp;
        }
    }
    Ok(ErrorNorms {
        l2_u: l2u.sqrt(),
        h1_u: h1u.sqrt(),
        l2_p: l2p.sqrt(),
    })
}

/// `(||div u_h||_0, ||grad u_h||_0)`.
pub fn divergence_norm(velocity: &[f64], disc: &Discretization, degree: usize) -> Result<(f64, f64), Error> {
    let rule = triangle_rule(degree)?;
    let tab = tabulate(&rule);
    let (mut div, mut grad) = (0.0, 0.0);
    for (t, map) in disc.maps.iter().enumerate() {
        for (q, (_, w)) in rule.iter().enumerate() {
            let e = eval_velocity_with(velocity, &disc.velocity, t, &map.push_derivatives(&tab[q]));
            let jw = w * map.det;
            div += jw * e.divergence().powi(2);
            grad += jw * e.grad.iter().flatten().map(|v| v * v).sum::<f64>();
        }
    }
    Ok((div.sqrt(), grad.sqrt()))
}

/// `sqrt(max(0, v^T S v))`; zero without a stabilization matrix. The SUPG
/// matrix is nonsymmetric, so its form is clamped at zero.
pub fn s_seminorm(v: &[f64], s: Option<&CsrMatrix>) -> f64 {
    s.map_or(0.0, |s| s.quadratic_form(v, v).max(0.0).sqrt())
}

/// `||pi_h p - p_h||_0` with both pressures mean-free.
pub fn supercloseness_probe(
    case: &BenchmarkCase,
    pressure: &[f64],
    disc: &Discretization,
    degree: usize,
) -> Result<f64, Error> {
    let rule = triangle_rule(degree)?;
    let mean = build_mean_constraint(&disc.pressure, &disc.mesh);
    let projected = project_pressure(|x| (case.p)(x), &disc.mesh, &disc.maps, &rule);
    let projected = shift_pressure_mean(&projected.coeffs, &mean);
    let ph = shift_pressure_mean(pressure, &mean);
    let diff: Vec<f64> = projected.iter().zip(&ph).map(|(a, b)| a - b).collect();
    Ok(discrete_pressure_norm(&diff, disc))
}

/// Exact L2 norm of a discontinuous P1 function: per triangle
/// `area/12 * (sum p_i^2 + (sum p_i)^2)`.
pub fn discrete_pressure_norm(p: &[f64], disc: &Discretization) -> f64 {
    (0..disc.mesh.num_triangles())
        .map(|t| {
            let c = &p[3 * t..3 * t + 3];
            let sum: f64 = c.iter().sum();
            disc.mesh.area(t) / 12.0 * (c.iter().map(|v| v * v).sum::<f64>() + sum * sum)
        })
        .sum::<f64>()
        .sqrt()
}

/// Rates between consecutive levels and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct Eoc {
    /// `None` where either error is zero (an exact solution).
    pub rates: Vec<Option<f64>>,
    pub average: Option<f64>,
}

/// `rate_l = ln(e_{l-1} / e_l) / ln(h_{l-1} / h_l)`, averaged over all
/// consecutive pairs with positive errors.
pub fn eoc(errors: &[f64], h: &[f64]) -> Result<Eoc, BenchmarkError> {
    if errors.len() != h.len() {
        return Err(BenchmarkError::Inconsistent(format!(
            "{} errors for {} mesh sizes",
            errors.len(),
            h.len()
        )));
    }
    if errors.len() < 2 {
        return Err(BenchmarkError::NotEnoughLevels);
    }
    let rates: Vec<Option<f64>> = errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| (e[0] > 0.0 && e[1] > 0.0).then(|| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()))
        .collect();
    let valid: Vec<f64> = rates.iter().flatten().copied().collect();
    let average = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok(Eoc { rates, average })
}

/// Change of the discrete solution when the forcing gains a gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientShift {
    /// `max |u_h' - u_h| / max |u_h|`.
    pub velocity_delta: f64,
    /// `||p_h' - p_h||_0`.
    pub pressure_delta: f64,
}

/// Solves with `f` and with `f + grad phi`; `grad_phi` is the gradient of a
/// smooth scalar, so `curl f` is unchanged.
pub fn gradient_shift_test(
    case: &BenchmarkCase,
    method: Method,
    delta0: f64,
    grad_phi: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    disc: &Discretization,
    degrees: QuadratureDegrees,
    tolerance: f64,
) -> Result<GradientShift, Error> {
    let spec = case.system_spec(method, delta0);
    let base = solve_problem(disc, &spec, degrees, tolerance)?.solution;
    let f = case.f.clone();
    let shifted_spec = SystemSpec {
        f: Arc::new(move |x| {
            let (a, b) = (f(x), grad_phi(x));
            [a[0] + b[0], a[1] + b[1]]
        }),
        ..spec
    };
    let shifted = solve_problem(disc, &shifted_spec, degrees, tolerance)?.solution;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let du: Vec<f64> = shifted
        .velocity
        .iter()
        .zip(&base.velocity)
        .map(|(a, b)| a - b)
        .collect();
    let dp: Vec<f64> = shifted
        .pressure
        .iter()
        .zip(&base.pressure)
        .map(|(a, b)| a - b)
        .collect();
    Ok(GradientShift {
        velocity_delta: max_abs(&du) / max_abs(&base.velocity).max(f64::MIN_POSITIVE),
        pressure_delta: discrete_pressure_norm(&dp, disc),
    })
}

/// `grad(x^3 y^2)`.
pub fn default_gradient_forcing(p: Point) -> [f64; 2] {
    [3.0 * p[0] * p[0] * p[1] * p[1], 2.0 * p[0].powi(3) * p[1]]
}

/// Diagnostics of one solved level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub h_max: f64,
    pub ndof_u: usize,
    pub ndof_p: usize,
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_p: f64,
    pub div_norm: f64,
    pub grad_norm: f64,
    pub s_seminorm: f64,
    pub picl2: f64,
    pub residual: f64,
    pub multiplier: f64,
    pub wall_ms: f64,
}

/// Per-level results of a convergence study with their rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub example: u32,
    pub method: Method,
    pub sigma: f64,
    pub mu: f64,
    pub delta0: f64,
    pub levels: Vec<LevelRecord>,
}

impl RunReport {
    fn column(&self, pick: impl Fn(&LevelRecord) -> f64) -> Option<Eoc> {
        let errors: Vec<f64> = self.levels.iter().map(pick).collect();
        let h: Vec<f64> = self.levels.iter().map(|r| r.h_max).collect();
        eoc(&errors, &h).ok()
    }

    pub fn eoc_l2u(&self) -> Option<Eoc> {
        self.column(|r| r.l2_u)
    }

    pub fn eoc_h1u(&self) -> Option<Eoc> {
        self.column(|r| r.h1_u)
    }

    pub fn eoc_l2p(&self) -> Option<Eoc> {
        self.column(|r| r.l2_p)
    }

    pub fn eoc_picl2(&self) -> Option<Eoc> {
        self.column(|r| r.picl2)
    }

    pub fn finest(&self) -> Option<&LevelRecord> {
        self.levels.last()
    }
}

/// Computes every diagnostic for a solved problem.
pub fn level_record(
    case: &BenchmarkCase,
    level: usize,
    disc: &Discretization,
    solved: &Solved,
    degrees: QuadratureDegrees,
    wall_ms: f64,
) -> Result<LevelRecord, Error> {
    let SaddleSolution {
        velocity,
        pressure,
        multiplier,
        residual,
    } = &solved.solution;
    let norms = error_norms(case, velocity, pressure, disc, degrees.error)?;
    let (div_norm, grad_norm) = divergence_norm(velocity, disc, degrees.error)?;
    let interpolant = crate::fe_space::interpolate_velocity(|x| (case.u)(x), &disc.velocity).coeffs;
    let err: Vec<f64> = interpolant.iter().zip(velocity).map(|(a, b)| a - b).collect();
    Ok(LevelRecord {
        level,
        h_max: disc.mesh.h_max,
        ndof_u: disc.n_velocity(),
        ndof_p: disc.n_pressure(),
        l2_u: norms.l2_u,
        h1_u: norms.h1_u,
        l2_p: norms.l2_p,
        div_norm,
        grad_norm,
        s_seminorm: s_seminorm(&err, solved.blocks.s.as_ref()),
        picl2: supercloseness_probe(case, pressure, disc, degrees.error)?,
        residual: *residual,
        multiplier: *multiplier,
        wall_ms,
    })
}

/// Solves `case` on one discretization and returns its record.
pub fn run_level(
    case: &BenchmarkCase,
    method: Method,
    delta0: f64,
    level: usize,
    disc: &Discretization,
    degrees: QuadratureDegrees,
    tolerance: f64,
) -> Result<LevelRecord, Error> {
    let start = Instant::now();
    let solved = solve_problem(disc, &case.system_spec(method, delta0), degrees, tolerance)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    level_record(case, level, disc, &solved, degrees, wall_ms)
}

/// Level hierarchy built from `base`: `level - 1` red refinements followed by
/// one barycentric split.
pub fn discretizations(base: &Triangulation, levels: &[usize]) -> Result<Vec<(usize, Discretization)>, Error> {
    levels
        .iter()
        .map(|&level| Ok((level, Discretization::new(level_mesh(base, level)?)?)))
        .collect()
}

/// Convergence study over prebuilt discretizations.
pub fn run_study_levels(
    case: &BenchmarkCase,
    method: Method,
    delta0: f64,
    discs: &[(usize, Discretization)],
    degrees: QuadratureDegrees,
    tolerance: f64,
) -> Result<RunReport, Error> {
    let levels = discs
        .iter()
        .map(|(level, disc)| run_level(case, method, delta0, *level, disc, degrees, tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport {
        example: case.id,
        method,
        sigma: case.sigma,
        mu: case.mu,
        delta0,
        levels,
    })
}

/// Error norms of the exact data's own interpolant and projection; useful as
/// a best-approximation reference.
pub fn interpolation_errors(case: &BenchmarkCase, disc: &Discretization, degree: usize) -> Result<ErrorNorms, Error> {
    let u = crate::fe_space::interpolate_velocity(|x| (case.u)(x), &disc.velocity).coeffs;
    let rule = triangle_rule(degree)?;
    let p = project_pressure(|x| (case.p)(x), &disc.mesh, &disc.maps, &rule).coeffs;
    error_norms(case, &u, &p, disc, degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::interpolate_velocity;
    use crate::mesh::generate_unit_square_mesh;
    use proptest::prelude::*;

    fn disc(n: usize, level: usize) -> Discretization {
        Discretization::new(level_mesh(&generate_unit_square_mesh(n, 0.2).unwrap(), level).unwrap()).unwrap()
    }

    #[test]
    fn example_values() {
        let e1 = make_example(1, 0.0, 1.0).unwrap();
        assert_eq!((e1.u)([1.0, 1.0]), [0.0, -6.0]);
        assert_eq!((e1.p)([0.0, 0.0]), 14.0 / 5.0);
        let e2 = make_example(2, 1.0, 1e-5).unwrap();
        let u = (e2.u)([0.25, 0.25]);
        assert!((u[0] - 1.0).abs() < 1e-15 && u[1].abs() < 1e-15);
        let x = [0.3, 0.7];
        let scale = 1.0 + 8.0 * PI * PI * 1e-5;
        let (f, u) = ((e2.f)(x), (e2.u)(x));
        assert!((f[0] - scale * u[0]).abs() < 1e-15 && (f[1] - scale * u[1]).abs() < 1e-15);
        assert!(matches!(
            make_example(5, 0.0, 1.0),
            Err(BenchmarkError::UnknownExample(5))
        ));
    }

    #[test]
    fn every_example_is_consistent() {
        for id in 1..=4 {
            for sigma in [0.0, 1.0] {
                for mu in [1e-5, 1e-2, 1.0] {
                    let case = make_example(id, sigma, mu).unwrap();
                    case.validate().unwrap();
                    let spec = case.system_spec(Method::SvLsvs, 0.006);
                    spec.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn example_two_forcing_matches_finite_difference_operator() {
        let (sigma, mu) = (1.0, 1e-5);
        let case = make_example(2, sigma, mu).unwrap();
        for x in sample_points(8) {
            let f = (case.f)(x);
            for i in 0..2 {
                let lap = fd_laplacian(&|q| lattice_u(q)[i], x);
                let expected = sigma * lattice_u(x)[i] - mu * lap;
                assert!((f[i] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn broken_forcing_is_detected() {
        let mut case = make_example(3, 1.0, 1e-2).unwrap();
        case.f = Arc::new(lattice_u);
        assert!(matches!(case.validate(), Err(BenchmarkError::Inconsistent(_))));
    }

    #[test]
    fn interpolant_of_polynomial_solution_has_no_error() {
        let d = disc(2, 1);
        let case = make_example(1, 0.0, 1.0).unwrap();
        let errors = interpolation_errors(&case, &d, 10).unwrap();
        assert!(errors.l2_u < 1e-13 && errors.h1_u < 1e-12);
    }

    #[test]
    fn l2_error_of_zero_against_linear_field() {
        let d = disc(2, 1);
        let mut case = make_example(3, 0.0, 1.0).unwrap();
        case.u = Arc::new(|p| [p[0], 0.0]);
        case.grad_u = Arc::new(|_| [[1.0, 0.0], [0.0, 0.0]]);
        let zero_u = vec![0.0; d.n_velocity()];
        let zero_p = vec![0.0; d.n_pressure()];
        let e = error_norms(&case, &zero_u, &zero_p, &d, 10).unwrap();
        assert!((e.l2_u - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!((e.h1_u - 1.0).abs() < 1e-14);
        assert!(e.l2_p.abs() < 1e-15);
    }

    #[test]
    fn divergence_of_interpolants() {
        let d = disc(2, 1);
        let rot = interpolate_velocity(|p| [-p[1], p[0]], &d.velocity).coeffs;
        assert!(divergence_norm(&rot, &d, 10).unwrap().0 < 1e-13);
        let stretch = interpolate_velocity(|p| [p[0], 0.0], &d.velocity).coeffs;
        assert!((divergence_norm(&stretch, &d, 10).unwrap().0 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn probe_of_projected_pressure_vanishes() {
        let d = disc(2, 1);
        let case = make_example(2, 1.0, 1e-5).unwrap();
        let rule = triangle_rule(10).unwrap();
        let p = project_pressure(|x| (case.p)(x), &d.mesh, &d.maps, &rule).coeffs;
        assert!(supercloseness_probe(&case, &p, &d, 10).unwrap() < 1e-14);
        // for a zero exact pressure the probe is the norm of the shifted p_h
        let case3 = make_example(3, 0.0, 1.0).unwrap();
        let ph: Vec<f64> = (0..d.n_pressure()).map(|k| (k % 5) as f64).collect();
        let mean = build_mean_constraint(&d.pressure, &d.mesh);
        let expected = discrete_pressure_norm(&shift_pressure_mean(&ph, &mean), &d);
        assert!((supercloseness_probe(&case3, &ph, &d, 10).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn discrete_pressure_norm_matches_quadrature() {
        let d = disc(2, 1);
        let p: Vec<f64> = (0..d.n_pressure()).map(|k| ((k * 13) % 7) as f64 - 3.0).collect();
        let rule = triangle_rule(2).unwrap();
        let mut quad = 0.0;
        for (t, map) in d.maps.iter().enumerate() {
            for (l, w) in rule.iter() {
                quad += w * map.det * eval_pressure(&p, t, l).powi(2);
            }
        }
        assert!((discrete_pressure_norm(&p, &d) - quad.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn eoc_spot_values() {
        let r = eoc(&[0.1, 0.025], &[1.0, 0.5]).unwrap();
        assert!((r.average.unwrap() - 2.0).abs() < 1e-14);
        let column = [1.387e-1, 2.022e-2, 2.751e-3, 3.133e-4, 3.741e-5];
        let h = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let r = eoc(&column, &h).unwrap();
        assert!((r.average.unwrap() - 2.96).abs() < 0.005, "{:?}", r.average);
        let r = eoc(&[0.3, 0.3, 0.3], &h[..3]).unwrap();
        assert_eq!(r.average, Some(0.0));
        let r = eoc(&[0.0, 0.0], &h[..2]).unwrap();
        assert_eq!(r.rates, vec![None]);
        assert_eq!(r.average, None);
        assert_eq!(eoc(&[1.0], &[1.0]), Err(BenchmarkError::NotEnoughLevels));
    }

    #[test]
    fn seminorm_without_stabilization_is_zero() {
        assert_eq!(s_seminorm(&[1.0, 2.0], None), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn lsvs_seminorm_is_nonnegative(seed in prop::collection::vec(-1.0f64..1.0, 16)) {
            let d = disc(1, 1);
            let case = make_example(2, 1.0, 1e-3).unwrap();
            let s = crate::assembly::assemble_lsvs(&d, &case.system_spec(Method::SvLsvs, 0.006), QuadratureDegrees::default()).unwrap();
            let v: Vec<f64> = (0..d.n_velocity()).map(|k| seed[k % seed.len()] * ((k / seed.len()) as f64 + 1.0).sin()).collect();
            prop_assert!(s.quadratic_form(&v, &v) >= -1e-14 * s.max_abs());
        }

        #[test]
        fn rates_invert_power_laws(rate in 0.5f64..4.0, c in 1e-3f64..10.0) {
            let h = [0.4f64, 0.2, 0.1, 0.05];
            let e: Vec<f64> = h.iter().map(|h| c * h.powf(rate)).collect();
            let r = eoc(&e, &h).unwrap();
            prop_assert!((r.average.unwrap() - rate).abs() < 1e-10);
        }
    }
}
