//! Conforming triangulations of the unit square: generation, red and
//! barycentric (Alfeld) refinement, facet topology and a plain-text format.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::MeshError;

pub type Point = [f64; 2];

/// Conforming triangulation with counterclockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Longest edge of each triangle.
    pub h: Vec<f64>,
    pub h_max: f64,
    barycentric: bool,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn distance(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Vertices of local edge `i` (the edge opposite local vertex `i`), in
/// counterclockwise order.
pub fn local_edge(tri: &[usize; 3], i: usize) -> [usize; 2] {
    [tri[(i + 1) % 3], tri[(i + 2) % 3]]
}

impl Triangulation {
    /// Builds a triangulation, deriving boundary flags from the facet topology.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let boundary = topological_boundary(vertices.len(), &triangles)?;
        Self::with_boundary(vertices, triangles, boundary)
    }

    /// Builds a triangulation with explicitly supplied boundary flags.
    pub fn with_boundary(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self, MeshError> {
        let count = vertices.len();
        let mut h = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= count) {
                return Err(MeshError::VertexOutOfRange {
                    triangle: t,
                    vertex: v,
                    count,
                });
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let area = signed_area(a, b, c);
            let hk = distance(a, b).max(distance(b, c)).max(distance(c, a));
            if area <= 1e-14 * hk * hk {
                return Err(MeshError::DegenerateTriangle { triangle: t, area });
            }
            h.push(hk);
        }
        let h_max = h.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            vertices,
            triangles,
            boundary,
            h,
            h_max,
            barycentric: false,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// True once [`refine_barycentric`] has been applied.
    pub fn is_barycentric(&self) -> bool {
        self.barycentric
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.num_triangles() {
            let p = self.corners(t);
            for i in 0..3 {
                let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Number of distinct edges.
    pub fn num_edges(&self) -> usize {
        let mut seen = HashMap::with_capacity(3 * self.num_triangles() / 2 + 1);
        for tri in &self.triangles {
            for i in 0..3 {
                let [a, b] = local_edge(tri, i);
                seen.insert(edge_key(a, b), ());
            }
        }
        seen.len()
    }

    /// Checks orientation, index ranges and that no edge has more than two
    /// neighbours.
    pub fn validate(&self) -> Result<(), MeshError> {
        let rebuilt = Self::with_boundary(self.vertices.clone(), self.triangles.clone(), self.boundary.clone())?;
        topological_boundary(rebuilt.num_vertices(), &rebuilt.triangles)?;
        Ok(())
    }
}

fn topological_boundary(nv: usize, triangles: &[[usize; 3]]) -> Result<Vec<bool>, MeshError> {
    let mut count: HashMap<(usize, usize), u8> = HashMap::with_capacity(3 * triangles.len() / 2 + 1);
    for tri in triangles {
        for i in 0..3 {
            let [a, b] = local_edge(tri, i);
            let c = count.entry(edge_key(a, b)).or_insert(0);
            *c += 1;
            if *c > 2 {
                return Err(MeshError::NonManifoldEdge(a.min(b), a.max(b)));
            }
        }
    }
    let mut boundary = vec![false; nv];
    for ((a, b), c) in count {
        if c == 1 {
            if a < nv {
                boundary[a] = true;
            }
            if b < nv {
                boundary[b] = true;
            }
        }
    }
    Ok(boundary)
}

/// Deterministic pseudo-random value in `[0, 1)` derived from `key` (splitmix64).
fn hash_unit(key: u64) -> f64 {
    let mut z = key.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Diagonal-split mesh of the unit square with `2 n^2` triangles.
///
/// Cells `(i, j)` with even `i + j` are split along the south-west/north-east
/// diagonal, odd cells along the other one. Interior vertices are shifted by
/// a hash of their index, at most `jitter / n` in length.
pub fn generate_unit_square_mesh(n: usize, jitter: f64) -> Result<Triangulation, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidSubdivisions(n));
    }
    if !(0.0..=0.3).contains(&jitter) {
        return Err(MeshError::InvalidJitter(jitter));
    }
    let nf = n as f64;
    let index = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let mut p = [i as f64 / nf, j as f64 / nf];
            let interior = i > 0 && i < n && j > 0 && j < n;
            if interior && jitter > 0.0 {
                let k = index(i, j) as u64;
                let radius = jitter / nf * hash_unit(2 * k);
                let angle = std::f64::consts::TAU * hash_unit(2 * k + 1);
                p[0] += radius * angle.cos();
                p[1] += radius * angle.sin();
            }
            vertices.push(p);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (sw, se, nw, ne) = (index(i, j), index(i + 1, j), index(i, j + 1), index(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            } else {
                triangles.push([sw, se, nw]);
                triangles.push([se, ne, nw]);
            }
        }
    }
    Triangulation::new(vertices, triangles)
}

/// Red refinement: every triangle is split into four through its edge midpoints.
pub fn refine_uniform(mesh: &Triangulation) -> Triangulation {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * mesh.num_triangles());
    let facets = build_facets(mesh);
    for f in &facets.facets {
        let [a, b] = f.vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        midpoint.insert(edge_key(a, b), vertices.len());
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        boundary.push(!f.is_interior());
    }
    debug_assert_eq!(vertices.len(), nv + facets.facets.len());
    let mid = |a: usize, b: usize| midpoint[&edge_key(a, b)];
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for &[a, b, c] in &mesh.triangles {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    Triangulation::with_boundary(vertices, triangles, boundary).expect("red refinement of a valid mesh is valid")
}

/// Alfeld split: every triangle is replaced by three sharing its barycenter.
pub fn refine_barycentric(mesh: &Triangulation) -> Triangulation {
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut triangles = Vec::with_capacity(3 * mesh.num_triangles());
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let m = vertices.len();
        vertices.push(mesh.barycenter(t));
        boundary.push(false);
        triangles.push([a, b, m]);
        triangles.push([b, c, m]);
        triangles.push([c, a, m]);
    }
    let mut refined = Triangulation::with_boundary(vertices, triangles, boundary)
        .expect("barycentric refinement of a valid mesh is valid");
    refined.barycentric = true;
    refined
}

/// Mesh for refinement `level` (1-based): `level - 1` red refinements of the
/// base mesh followed by one barycentric refinement.
pub fn level_mesh(base: &Triangulation, level: usize) -> Result<Triangulation, MeshError> {
    if base.is_barycentric() {
        return Err(MeshError::AlreadyBarycentric);
    }
    if level == 0 {
        return Err(MeshError::InvalidSubdivisions(level));
    }
    let mut mesh = base.clone();
    for _ in 1..level {
        mesh = refine_uniform(&mesh);
    }
    Ok(refine_barycentric(&mesh))
}

/// One side of a facet: the triangle and the local edge index in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetSide {
    pub triangle: usize,
    pub local_edge: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Endpoints, counterclockwise with respect to `inner`.
    pub vertices: [usize; 2],
    pub length: f64,
    /// Unit normal pointing out of `inner`.
    pub normal: Point,
    /// Lower-indexed adjacent triangle.
    pub inner: FacetSide,
    pub outer: Option<FacetSide>,
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.outer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetList {
    pub facets: Vec<Facet>,
    /// Facet index of each local edge, per triangle.
    pub triangle_facets: Vec<[usize; 3]>,
}

impl FacetList {
    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn num_interior(&self) -> usize {
        self.facets.iter().filter(|f| f.is_interior()).count()
    }

    pub fn num_boundary(&self) -> usize {
        self.len() - self.num_interior()
    }

    pub fn interior(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| f.is_interior())
    }
}

/// Facets numbered in order of first appearance (triangle, then local edge).
pub fn build_facets(mesh: &Triangulation) -> FacetList {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * mesh.num_triangles() / 2 + 1);
    let mut facets: Vec<Facet> = Vec::with_capacity(3 * mesh.num_triangles() / 2 + 1);
    let mut triangle_facets = Vec::with_capacity(mesh.num_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let mut local = [0; 3];
        for (i, slot) in local.iter_mut().enumerate() {
            let [a, b] = local_edge(tri, i);
            let side = FacetSide {
                triangle: t,
                local_edge: i,
            };
            *slot = match index.get(&edge_key(a, b)) {
                Some(&f) => {
                    facets[f].outer = Some(side);
                    f
                }
                None => {
                    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                    let length = distance(pa, pb);
                    let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
                    index.insert(edge_key(a, b), facets.len());
                    facets.push(Facet {
                        vertices: [a, b],
                        length,
                        normal,
                        inner: side,
                        outer: None,
                    });
                    facets.len() - 1
                }
            };
        }
        triangle_facets.push(local);
    }
    FacetList {
        facets,
        triangle_facets,
    }
}

/// Serializes a mesh in the plain-text mesh format.
pub fn write_mesh(mesh: &Triangulation) -> String {
    let mut out = String::new();
    writeln!(out, "vertices {}", mesh.num_vertices()).unwrap();
    for p in &mesh.vertices {
        writeln!(out, "{} {}", p[0], p[1]).unwrap();
    }
    writeln!(out, "triangles {}", mesh.num_triangles()).unwrap();
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    let boundary: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| mesh.boundary[v]).collect();
    writeln!(out, "boundary {}", boundary.len()).unwrap();
    for v in boundary {
        writeln!(out, "{v}").unwrap();
    }
    out
}

/// Parses the plain-text mesh format. Clockwise triangles are repaired and
/// reported in the returned warnings.
pub fn read_mesh_with_warnings(text: &str) -> Result<(Triangulation, Vec<String>), MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<(usize, &str), MeshError> {
        let item = lines.next().ok_or_else(|| MeshError::Parse {
            line: last_line + 1,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        last_line = item.0;
        Ok(item)
    };
    fn header(line: usize, text: &str, key: &str) -> Result<usize, MeshError> {
        let mut parts = text.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(n), None) if k == key => n.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("invalid count '{n}' in '{key}' header"),
            }),
            _ => Err(MeshError::Parse {
                line,
                message: format!("expected '{key} <count>', found '{text}'"),
            }),
        }
    }
    fn numbers<T: std::str::FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>, MeshError> {
        let values: Vec<T> = text
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse '{text}'"),
            })?;
        if values.len() != count {
            return Err(MeshError::Parse {
                line,
                message: format!("expected {count} values, found {}", values.len()),
            });
        }
        Ok(values)
    }

    let (line, text) = next("vertices header")?;
    let nv = header(line, text, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, text) = next("vertex coordinates")?;
        let xy: Vec<f64> = numbers(line, text, 2)?;
        vertices.push([xy[0], xy[1]]);
    }
    let (line, text) = next("triangles header")?;
    let nt = header(line, text, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut warnings = Vec::new();
    for t in 0..nt {
        let (line, text) = next("triangle indices")?;
        let ids: Vec<usize> = numbers(line, text, 3)?;
        if let Some(&v) = ids.iter().find(|&&v| v >= nv) {
            return Err(MeshError::Parse {
                line,
                message: format!("vertex index {v} out of range (have {nv} vertices)"),
            });
        }
        let mut tri = [ids[0], ids[1], ids[2]];
        let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if area < 0.0 {
            tri.swap(1, 2);
            let message = format!("line {line}: triangle {t} is clockwise; reordered");
            log::warn!("{message}");
            warnings.push(message);
        }
        triangles.push(tri);
    }
    let (line, text) = next("boundary header")?;
    let nb = header(line, text, "boundary")?;
    let mut boundary = vec![false; nv];
    for _ in 0..nb {
        let (line, text) = next("boundary vertex")?;
        let v: Vec<usize> = numbers(line, text, 1)?;
        if v[0] >= nv {
            return Err(MeshError::Parse {
                line,
                message: format!("boundary vertex {} out of range", v[0]),
            });
        }
        boundary[v[0]] = true;
    }
    let mesh = Triangulation::with_boundary(vertices, triangles, boundary)?;
    topological_boundary(mesh.num_vertices(), &mesh.triangles)?;
    Ok((mesh, warnings))
}

pub fn read_mesh(text: &str) -> Result<Triangulation, MeshError> {
    read_mesh_with_warnings(text).map(|(mesh, _)| mesh)
}
