//! Sparse storage, the direct saddle-point solve and pressure-mean handling.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Par};

use crate::assembly::{
    apply_dirichlet, dirichlet_data, Blocks, Discretization, QuadratureDegrees, SparseSystem, SystemSpec,
};
use crate::error::{Error, SolveError};
use crate::fe_space::PressureSpace;
use crate::mesh::Triangulation;

/// Relative residual accepted by [`solve_direct`].
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub offsets: Vec<usize>,
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            offsets: vec![0; nrows + 1],
            columns: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.columns[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.columns[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `x^T M y`.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<(usize, usize, f64)> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)))
            .collect();
        triplets_to_csr(&triplets, self.ncols, self.nrows).expect("transposed indices are in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry of `self - other` over the union of patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - other.get(i, j)).abs());
            }
            for (j, v) in other.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }
}

/// Builds a CSR matrix, summing duplicates in input order.
pub fn triplets_to_csr(triplets: &[(usize, usize, f64)], nrows: usize, ncols: usize) -> Result<CsrMatrix, SolveError> {
    let mut counts = vec![0usize; nrows + 1];
    for &(i, j, _) in triplets {
        if i >= nrows || j >= ncols {
            return Err(SolveError::IndexOutOfRange {
                row: i,
                col: j,
                nrows,
                ncols,
            });
        }
        counts[i + 1] += 1;
    }
    for i in 0..nrows {
        counts[i + 1] += counts[i];
    }
    // stable bucket by row
    let mut next = counts.clone();
    let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
    for &(i, j, v) in triplets {
        bucket[next[i]] = (j, v);
        next[i] += 1;
    }
    let mut offsets = Vec::with_capacity(nrows + 1);
    let mut columns = Vec::with_capacity(triplets.len());
    let mut values = Vec::with_capacity(triplets.len());
    offsets.push(0);
    for i in 0..nrows {
        let row = &mut bucket[counts[i]..counts[i + 1]];
        row.sort_by_key(|&(j, _)| j);
        for &(j, v) in row.iter() {
            if columns.len() > offsets[i] && *columns.last().unwrap() == j {
                *values.last_mut().unwrap() += v;
            } else {
                columns.push(j);
                values.push(v);
            }
        }
        offsets.push(columns.len());
    }
    Ok(CsrMatrix {
        nrows,
        ncols,
        offsets,
        columns,
        values,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||M x - b|| / max(||b||, 1e-30)`.
pub fn relative_residual(m: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = m.mul_vec(x).iter().zip(b).map(|(a, c)| c - a).collect();
    norm2(&r) / norm2(b).max(1e-30)
}

/// Result of a direct solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub refined: bool,
}

fn check_square(m: &CsrMatrix, b: &[f64]) -> Result<(), SolveError> {
    if m.nrows != m.ncols {
        return Err(SolveError::NotSquare {
            nrows: m.nrows,
            ncols: m.ncols,
        });
    }
    if b.len() != m.nrows {
        return Err(SolveError::DimensionMismatch {
            expected: m.nrows,
            got: b.len(),
        });
    }
    Ok(())
}

/// Sparse LU factors (partial pivoting, COLAMD column ordering).
pub struct LuFactors {
    n: usize,
    lu: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
}

impl std::fmt::Debug for LuFactors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactors").field("n", &self.n).finish_non_exhaustive()
    }
}

impl LuFactors {
    pub fn new(m: &CsrMatrix) -> Result<Self, SolveError> {
        if m.nrows != m.ncols {
            return Err(SolveError::NotSquare {
                nrows: m.nrows,
                ncols: m.ncols,
            });
        }
        let n = m.nrows;
        if n == 0 {
            return Ok(Self { n, lu: None });
        }
        faer::set_global_parallelism(Par::Seq);
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..n)
            .flat_map(|i| m.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let lu = csc.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => SolveError::SingularPivot { dof: index },
            other => SolveError::Factorization(format!("{other:?}")),
        })?;
        Ok(Self { n, lu: Some(lu) })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        if rhs.len() != self.n {
            return Err(SolveError::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let Some(lu) = &self.lu else {
            return Ok(Vec::new());
        };
        let col = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        let x = lu.solve(&col);
        let x: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if let Some(dof) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::SingularPivot { dof });
        }
        Ok(x)
    }
}

/// Residual check with at most one refinement step; `solve` applies an
/// approximate inverse of `m`.
fn refine_once(
    m: &CsrMatrix,
    b: &[f64],
    tolerance: f64,
    solve: impl Fn(&[f64]) -> Result<Vec<f64>, SolveError>,
) -> Result<DirectSolution, SolveError> {
    let mut x = solve(b)?;
    let mut residual = relative_residual(m, &x, b);
    let mut refined = false;
    if !(residual <= tolerance) {
        let r: Vec<f64> = m.mul_vec(&x).iter().zip(b).map(|(a, c)| c - a).collect();
        let dx = solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        residual = relative_residual(m, &x, b);
        refined = true;
        if !(residual <= tolerance) {
            return Err(SolveError::ResidualTooLarge { residual, tolerance });
        }
    }
    Ok(DirectSolution { x, residual, refined })
}

/// Sparse LU with partial pivoting and a fill-reducing column ordering,
/// followed by a residual check and at most one refinement step.
pub fn solve_direct(m: &CsrMatrix, b: &[f64], tolerance: f64) -> Result<DirectSolution, SolveError> {
    check_square(m, b)?;
    if m.nrows == 0 {
        return Ok(DirectSolution {
            x: Vec::new(),
            residual: 0.0,
            refined: false,
        });
    }
    let lu = LuFactors::new(m)?;
    refine_once(m, b, tolerance, |r| lu.solve(r))
}

/// Direct solve of a matrix whose last row and column are dense borders
/// (the pressure-mean multiplier).
///
/// A dense border ruins the fill-reducing ordering, so only the interior
/// block with row `pin` replaced by a unit row is factored. The border is
/// restored through its Schur complement and the pinned row through a
/// rank-one (Sherman-Morrison) correction; the result solves the full
/// system exactly up to rounding and is checked against it.
pub fn solve_bordered(m: &CsrMatrix, b: &[f64], pin: usize, tolerance: f64) -> Result<DirectSolution, SolveError> {
    check_square(m, b)?;
    let n = m.nrows;
    if n < 2 || pin + 1 >= n {
        return solve_direct(m, b, tolerance);
    }
    let k = n - 1;
    // interior block K, column border c, row border r
    let mut c = vec![0.0; k];
    let mut r = vec![0.0; k];
    let mut kpin = vec![0.0; k];
    let mut triplets = Vec::with_capacity(m.nnz());
    for i in 0..k {
        for (j, v) in m.row(i) {
            if j == k {
                c[i] = v;
            } else if i == pin {
                kpin[j] = v;
            } else {
                triplets.push((i, j, v));
            }
        }
    }
    for (j, v) in m.row(k) {
        if j < k {
            r[j] = v;
        } else if v != 0.0 {
            // a nonzero corner is not a pure border; no special structure
            return solve_direct(m, b, tolerance);
        }
    }
    triplets.push((pin, pin, 1.0));
    let pinned = triplets_to_csr(&triplets, k, k)?;
    let lu = LuFactors::new(&pinned)?;

    // K = P + e_pin d^T with d = (row pin of K) - e_pin
    let mut d = kpin;
    d[pin] -= 1.0;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let yc = lu.solve(&c)?;
    let schur = -dot(&r, &yc);
    if schur == 0.0 || !schur.is_finite() {
        return solve_direct(m, b, tolerance);
    }
    // N^{-1} (v, beta) for N = [[P, c], [r^T, 0]]
    let bordered = |v: &[f64], beta: f64| -> Result<(Vec<f64>, f64), SolveError> {
        let y = lu.solve(v)?;
        let lambda = (beta - dot(&r, &y)) / schur;
        Ok((y.iter().zip(&yc).map(|(a, b)| a - lambda * b).collect(), lambda))
    };
    let mut unit = vec![0.0; k];
    unit[pin] = 1.0;
    let (ze, lambda_e) = bordered(&unit, 0.0)?;
    let denom = 1.0 + dot(&d, &ze);
    if denom == 0.0 || !denom.is_finite() {
        return Err(SolveError::SingularPivot { dof: pin });
    }
    refine_once(m, b, tolerance, |rhs| {
        let (z, lambda_z) = bordered(&rhs[..k], rhs[k])?;
        let scale = dot(&d, &z) / denom;
        let mut x: Vec<f64> = z.iter().zip(&ze).map(|(a, b)| a - scale * b).collect();
        x.push(lambda_z - scale * lambda_e);
        if let Some(dof) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::SingularPivot { dof });
        }
        Ok(x)
    })
}

/// `m_q = integral of pressure basis function q`; area/3 for nodal P1.
pub fn build_mean_constraint(space: &PressureSpace, mesh: &Triangulation) -> Vec<f64> {
    let mut m = vec![0.0; space.ndof()];
    for t in 0..mesh.num_triangles() {
        let third = mesh.area(t) / 3.0;
        for q in space.local_dofs(t) {
            m[q] = third;
        }
    }
    m
}

/// Subtracts the mean: `p - (m^T p / |Omega|) 1`.
pub fn shift_pressure_mean(p: &[f64], m: &[f64]) -> Vec<f64> {
    let area: f64 = m.iter().sum();
    let mean = p.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() / area;
    p.iter().map(|v| v - mean).collect()
}

/// Velocity/pressure pair solving the saddle system.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    /// Zero-mean pressure coefficients.
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub residual: f64,
}

/// Solves a constrained saddle system and splits the result into velocity,
/// zero-mean pressure and multiplier.
pub fn solve_saddle(system: &SparseSystem, mean: &[f64], tolerance: f64) -> Result<SaddleSolution, SolveError> {
    let nu = system.n_velocity;
    let np = system.n_pressure;
    // pin the pressure dof with the largest mean weight
    let pin = nu + (0..np).fold(0, |best, q| if mean[q] > mean[best] { q } else { best });
    let direct = solve_bordered(&system.matrix, &system.rhs, pin, tolerance)?;
    Ok(SaddleSolution {
        velocity: direct.x[..nu].to_vec(),
        pressure: shift_pressure_mean(&direct.x[nu..nu + np], mean),
        multiplier: direct.x[nu + np],
        residual: direct.residual,
    })
}

/// Assembled operator blocks together with the solution they produced.
#[derive(Debug, Clone)]
pub struct Solved {
    pub blocks: Blocks,
    pub solution: SaddleSolution,
}

/// Assembly, Dirichlet elimination and direct solve for one problem.
pub fn solve_problem(
    disc: &Discretization,
    spec: &SystemSpec,
    degrees: QuadratureDegrees,
    tolerance: f64,
) -> Result<Solved, Error> {
    spec.validate()?;
    let blocks = Blocks::assemble(disc, spec, degrees)?;
    let mean = build_mean_constraint(&disc.pressure, &disc.mesh);
    let system = SparseSystem::from_blocks(&blocks, &mean);
    let (dofs, values) = dirichlet_data(disc, &spec.g);
    let system = apply_dirichlet(&system, &dofs, &values);
    let solution = solve_saddle(&system, &mean, tolerance)?;
    Ok(Solved { blocks, solution })
}
