//! Scott-Vogelius spaces: continuous P2 vector velocity and discontinuous P1
//! pressure, with reference bases, affine geometry and dof maps.
//!
//! Local P2 node `i < 3` is vertex `i`; node `3 + i` is the midpoint of the
//! edge opposite vertex `i`. Reference coordinates are `(x, y)` on the unit
//! triangle, barycentrics `(1 - x - y, x, y)`.

use crate::error::AssemblyError;
use crate::mesh::{FacetList, Point, Triangulation};
use crate::quadrature::TriangleRule;

pub type Mat2 = [[f64; 2]; 2];

const BARY_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// P2 basis data at one point, derivatives taken in whatever frame the
/// struct currently lives in (reference or physical).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Eval {
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
    pub hessians: [Mat2; 6],
}

/// Lagrange P2 basis on the reference triangle at barycentric point `l`.
pub fn eval_basis_p2(l: [f64; 3]) -> P2Eval {
    let mut values = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    let mut hessians = [[[0.0; 2]; 2]; 6];
    let outer = |a: [f64; 2], b: [f64; 2]| [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]];
    for i in 0..3 {
        let g = BARY_GRAD[i];
        values[i] = l[i] * (2.0 * l[i] - 1.0);
        grads[i] = [(4.0 * l[i] - 1.0) * g[0], (4.0 * l[i] - 1.0) * g[1]];
        let h = outer(g, g);
        hessians[i] = [[4.0 * h[0][0], 4.0 * h[0][1]], [4.0 * h[1][0], 4.0 * h[1][1]]];

        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let (gj, gk) = (BARY_GRAD[j], BARY_GRAD[k]);
        values[3 + i] = 4.0 * l[j] * l[k];
        grads[3 + i] = [4.0 * (l[k] * gj[0] + l[j] * gk[0]), 4.0 * (l[k] * gj[1] + l[j] * gk[1])];
        let (a, b) = (outer(gj, gk), outer(gk, gj));
        hessians[3 + i] = [
            [4.0 * (a[0][0] + b[0][0]), 4.0 * (a[0][1] + b[0][1])],
            [4.0 * (a[1][0] + b[1][0]), 4.0 * (a[1][1] + b[1][1])],
        ];
    }
    P2Eval {
        values,
        grads,
        hessians,
    }
}

/// Affine map `x = origin + J * xi` from the reference triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub origin: Point,
    pub jacobian: Mat2,
    pub inverse: Mat2,
    pub det: f64,
}

impl AffineMap {
    pub fn new(corners: [Point; 3]) -> Result<Self, AssemblyError> {
        let [a, b, c] = corners;
        let jacobian = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let h2 = [a, b, c]
            .iter()
            .zip([b, c, a].iter())
            .map(|(p, q)| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2))
            .fold(0.0, f64::max);
        if det.abs() < 1e-14 * h2 {
            return Err(AssemblyError::DegenerateElement(usize::MAX));
        }
        let inverse = [
            [jacobian[1][1] / det, -jacobian[0][1] / det],
            [-jacobian[1][0] / det, jacobian[0][0] / det],
        ];
        Ok(Self {
            origin: a,
            jacobian,
            inverse,
            det,
        })
    }

    /// Physical point of barycentric coordinates `l`.
    pub fn point(&self, l: &[f64; 3]) -> Point {
        let (x, y) = (l[1], l[2]);
        [
            self.origin[0] + self.jacobian[0][0] * x + self.jacobian[0][1] * y,
            self.origin[1] + self.jacobian[1][0] * x + self.jacobian[1][1] * y,
        ]
    }

    /// `J^{-T} g`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let k = &self.inverse;
        [k[0][0] * g[0] + k[1][0] * g[1], k[0][1] * g[0] + k[1][1] * g[1]]
    }

    /// `J^{-T} H J^{-1}`.
    pub fn push_hessian(&self, h: Mat2) -> Mat2 {
        let k = &self.inverse;
        let mut out = [[0.0; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..2)
                    .flat_map(|m| (0..2).map(move |n| (m, n)))
                    .map(|(m, n)| k[m][r] * h[m][n] * k[n][c])
                    .sum();
            }
        }
        out
    }

    /// Basis data with derivatives in physical coordinates.
    pub fn push_derivatives(&self, reference: &P2Eval) -> P2Eval {
        P2Eval {
            values: reference.values,
            grads: reference.grads.map(|g| self.push_gradient(g)),
            hessians: reference.hessians.map(|h| self.push_hessian(h)),
        }
    }
}

/// Physical point, Jacobian and its determinant at a reference point.
pub fn map_reference(corners: [Point; 3], l: [f64; 3]) -> Result<(Point, Mat2, f64), AssemblyError> {
    let map = AffineMap::new(corners)?;
    Ok((map.point(&l), map.jacobian, map.det))
}

/// Affine maps of every triangle.
pub fn element_maps(mesh: &Triangulation) -> Result<Vec<AffineMap>, AssemblyError> {
    (0..mesh.num_triangles())
        .map(|t| AffineMap::new(mesh.corners(t)).map_err(|_| AssemblyError::DegenerateElement(t)))
        .collect()
}

/// Reference basis data at every point of a rule.
pub fn tabulate(rule: &TriangleRule) -> Vec<P2Eval> {
    rule.points.iter().map(|&l| eval_basis_p2(l)).collect()
}

/// Continuous P2 vector space; component-major numbering
/// (all x-component dofs, then all y-component dofs).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySpace {
    pub nodes: Vec<Point>,
    pub cell_nodes: Vec<[usize; 6]>,
    pub boundary_node: Vec<bool>,
}

impl VelocitySpace {
    pub fn new(mesh: &Triangulation, facets: &FacetList) -> Self {
        let nv = mesh.num_vertices();
        let mut nodes = mesh.vertices.clone();
        let mut boundary_node = mesh.boundary.clone();
        for f in &facets.facets {
            let (a, b) = (mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]]);
            nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            boundary_node.push(!f.is_interior());
        }
        let cell_nodes = mesh
            .triangles
            .iter()
            .zip(&facets.triangle_facets)
            .map(|(t, f)| [t[0], t[1], t[2], nv + f[0], nv + f[1], nv + f[2]])
            .collect();
        Self {
            nodes,
            cell_nodes,
            boundary_node,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn ndof(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn dof(&self, component: usize, node: usize) -> usize {
        component * self.nodes.len() + node
    }

    /// Global dofs of triangle `t`; local index `6 * component + node`.
    pub fn local_dofs(&self, t: usize) -> [usize; 12] {
        let n = self.nodes.len();
        let c = &self.cell_nodes[t];
        std::array::from_fn(|k| if k < 6 { c[k] } else { n + c[k - 6] })
    }

    /// All dofs whose node lies on the boundary, both components, ascending.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let nodes: Vec<usize> = (0..self.num_nodes()).filter(|&i| self.boundary_node[i]).collect();
        let mut dofs = nodes.clone();
        dofs.extend(nodes.iter().map(|&i| self.dof(1, i)));
        dofs
    }
}

/// Discontinuous P1 space with nodal basis at the triangle vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PressureSpace {
    pub num_triangles: usize,
}

impl PressureSpace {
    pub fn new(mesh: &Triangulation) -> Self {
        Self {
            num_triangles: mesh.num_triangles(),
        }
    }

    pub fn ndof(&self) -> usize {
        3 * self.num_triangles
    }

    pub fn local_dofs(&self, t: usize) -> [usize; 3] {
        [3 * t, 3 * t + 1, 3 * t + 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Velocity,
    Pressure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub kind: SpaceKind,
    pub coeffs: Vec<f64>,
}

/// Value and Jacobian (`grad[i][j] = d_j u_i`) of a vector field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorEval {
    pub value: [f64; 2],
    pub grad: Mat2,
}

impl VectorEval {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    /// Scalar 2D curl `d_x u_2 - d_y u_1`.
    pub fn curl(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }
}

/// Nodal interpolant of `g` in the velocity space.
pub fn interpolate_velocity(g: impl Fn(Point) -> [f64; 2], space: &VelocitySpace) -> FeFunction {
    let n = space.num_nodes();
    let mut coeffs = vec![0.0; 2 * n];
    for (i, &p) in space.nodes.iter().enumerate() {
        let v = g(p);
        coeffs[i] = v[0];
        coeffs[n + i] = v[1];
    }
    FeFunction {
        kind: SpaceKind::Velocity,
        coeffs,
    }
}

/// Elementwise L2 projection onto discontinuous P1.
pub fn project_pressure(
    p: impl Fn(Point) -> f64,
    mesh: &Triangulation,
    maps: &[AffineMap],
    rule: &TriangleRule,
) -> FeFunction {
    let mut coeffs = vec![0.0; 3 * mesh.num_triangles()];
    for (t, map) in maps.iter().enumerate() {
        let jac = map.det.abs();
        let mut rhs = [0.0; 3];
        for (l, w) in rule.iter() {
            let v = p(map.point(l)) * w * jac;
            for i in 0..3 {
                rhs[i] += v * l[i];
            }
        }
        // local mass matrix is area/12 * [[2,1,1],[1,2,1],[1,1,2]]
        let area = 0.5 * jac;
        let sum = rhs[0] + rhs[1] + rhs[2];
        for i in 0..3 {
            coeffs[3 * t + i] = 3.0 / area * (4.0 * rhs[i] - sum);
        }
    }
    FeFunction {
        kind: SpaceKind::Pressure,
        coeffs,
    }
}

/// Velocity value and gradient of `u` on triangle `t` at barycentric `l`.
pub fn eval_velocity(u: &[f64], space: &VelocitySpace, map: &AffineMap, t: usize, l: [f64; 3]) -> VectorEval {
    let basis = map.push_derivatives(&eval_basis_p2(l));
    eval_velocity_with(u, space, t, &basis)
}

/// As [`eval_velocity`] with precomputed physical basis data.
pub fn eval_velocity_with(u: &[f64], space: &VelocitySpace, t: usize, basis: &P2Eval) -> VectorEval {
    let dofs = space.local_dofs(t);
    let mut value = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for c in 0..2 {
        for a in 0..6 {
            let coef = u[dofs[6 * c + a]];
            value[c] += coef * basis.values[a];
            grad[c][0] += coef * basis.grads[a][0];
            grad[c][1] += coef * basis.grads[a][1];
        }
    }
    VectorEval { value, grad }
}

/// Discrete pressure on triangle `t` at barycentric `l`.
pub fn eval_pressure(p: &[f64], t: usize, l: &[f64; 3]) -> f64 {
    p[3 * t] * l[0] + p[3 * t + 1] * l[1] + p[3 * t + 2] * l[2]
}
