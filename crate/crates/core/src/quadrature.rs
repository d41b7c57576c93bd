//! Tabulated quadrature rules on the reference triangle and the unit interval.
//!
//! Triangle rules are the symmetric positive-interior rules of Dunavant type,
//! stored by symmetry orbit with weights normalized to the reference area 1/2.
//! Edge rules are Gauss-Legendre rules mapped to `[0, 1]`.

use crate::error::QuadratureError;

/// Default volume rule degree used during assembly.
pub const ASSEMBLY_DEGREE: usize = 8;
/// Default volume rule degree used for error norms.
pub const ERROR_DEGREE: usize = 10;
/// Default edge rule degree used for facet terms.
pub const EDGE_DEGREE: usize = 7;

#[derive(Debug, Clone, Copy)]
enum Orbit {
    Centroid(f64),
    /// `(a, a, 1 - 2a)` and its rotations.
    Edge(f64, f64),
    /// All six permutations of `(a, b, 1 - a - b)`.
    General(f64, f64, f64),
}

const DEGREE_2: &[Orbit] = &[Orbit::Edge(0.16666666666666666, 0.16666666666666666)];

const DEGREE_4: &[Orbit] = &[
    Orbit::Edge(0.4459484909159649, 0.11169079483900574),
    Orbit::Edge(0.09157621350977074, 0.054975871827660935),
];

const DEGREE_6: &[Orbit] = &[
    Orbit::Edge(0.24928674517091043, 0.058393137863189684),
    Orbit::Edge(0.06308901449150223, 0.02542245318510341),
    Orbit::General(0.053145049844816945, 0.3103524510337844, 0.041425537809186785),
];

const DEGREE_8: &[Orbit] = &[
    Orbit::Centroid(0.07215780383889359),
    Orbit::Edge(0.4592925882927232, 0.04754581713364231),
    Orbit::Edge(0.1705693077517602, 0.05160868526735912),
    Orbit::Edge(0.05054722831703098, 0.01622924881159904),
    Orbit::General(0.008394777409957605, 0.2631128296346381, 0.013615157087217496),
];

const DEGREE_10: &[Orbit] = &[
    Orbit::Centroid(0.04540899519137679),
    Orbit::Edge(0.4855776333836574, 0.018362978878233353),
    Orbit::Edge(0.10948157548503705, 0.02266052971776397),
    Orbit::General(0.14170721941487996, 0.30793983876412095, 0.03637895842271006),
    Orbit::General(0.025003534762686387, 0.2466725606399027, 0.014163621265528743),
    Orbit::General(0.009540815400299458, 0.06680325101220026, 0.0047108334818664116),
];

const DEGREE_12: &[Orbit] = &[
    Orbit::Edge(0.48821738977380486, 0.012865533220227668),
    Orbit::Edge(0.43972439229446025, 0.021846272269019203),
    Orbit::Edge(0.2712103850121159, 0.03142911210894255),
    Orbit::Edge(0.12757614554158592, 0.017398056465354472),
    Orbit::Edge(0.02131735045321037, 0.003083130525779509),
    Orbit::General(0.115343494534698, 0.2757132696855142, 0.020185778883190463),
    Orbit::General(0.022838332222257028, 0.28132558098993954, 0.011178386601151722),
    Orbit::General(0.02573405054833023, 0.11625191590759715, 0.008658115554329446),
];

const TRIANGLE_TABLE: &[(usize, &[Orbit])] = &[
    (2, DEGREE_2),
    (4, DEGREE_4),
    (6, DEGREE_6),
    (8, DEGREE_8),
    (10, DEGREE_10),
    (12, DEGREE_12),
];

// Gauss-Legendre nodes and weights on [0, 1], indexed by point count - 1.
const GAUSS_LEGENDRE: &[(&[f64], &[f64])] = &[
    (&[0.5], &[1.0]),
    (&[0.2113248654051871, 0.7886751345948129], &[0.5, 0.5]),
    (
        &[0.11270166537925831, 0.5, 0.8872983346207417],
        &[0.2777777777777778, 0.4444444444444444, 0.2777777777777778],
    ),
    (
        &[
            0.06943184420297371,
            0.33000947820757187,
            0.6699905217924281,
            0.9305681557970263,
        ],
        &[
            0.17392742256872692,
            0.32607257743127305,
            0.32607257743127305,
            0.17392742256872692,
        ],
    ),
    (
        &[
            0.046910077030668004,
            0.23076534494715845,
            0.5,
            0.7692346550528415,
            0.953089922969332,
        ],
        &[
            0.11846344252809454,
            0.23931433524968324,
            0.28444444444444444,
            0.23931433524968324,
            0.11846344252809454,
        ],
    ),
    (
        &[
            0.03376524289842399,
            0.16939530676686773,
            0.38069040695840156,
            0.6193095930415985,
            0.8306046932331322,
            0.966234757101576,
        ],
        &[
            0.08566224618958518,
            0.1803807865240693,
            0.23395696728634552,
            0.23395696728634552,
            0.1803807865240693,
            0.08566224618958518,
        ],
    ),
];

/// Quadrature rule on the reference triangle `{x, y >= 0, x + y <= 1}`.
///
/// Points are barycentric coordinates `(1 - x - y, x, y)`; weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Iterates `(barycentric point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Integrates `f(x, y)` over the reference triangle.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.iter().map(|(l, w)| w * f(l[1], l[2])).sum()
    }
}

/// Gauss-Legendre rule on `[0, 1]`; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub degree: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(t, w)| w * f(t)).sum()
    }
}

/// Smallest tabulated triangle rule exact to at least `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule, QuadratureError> {
    if degree == 0 || degree > 12 {
        return Err(QuadratureError::UnsupportedDegree { degree, max: 12 });
    }
    let (tab_degree, orbits) = TRIANGLE_TABLE
        .iter()
        .find(|(d, _)| *d >= degree)
        .copied()
        .expect("table covers degrees up to 12");

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(w);
            }
            Orbit::Edge(a, w) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a, b], [a, b, a], [b, a, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::General(a, b, w) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    Ok(TriangleRule {
        degree: tab_degree,
        points,
        weights,
    })
}

/// Gauss-Legendre rule on `[0, 1]` with `ceil((degree + 1) / 2)` points.
pub fn edge_rule(degree: usize) -> Result<EdgeRule, QuadratureError> {
    if degree == 0 || degree > 11 {
        return Err(QuadratureError::UnsupportedDegree { degree, max: 11 });
    }
    let npoints = (degree + 2) / 2;
    let (points, weights) = GAUSS_LEGENDRE[npoints - 1];
    Ok(EdgeRule {
        degree: 2 * npoints - 1,
        points: points.to_vec(),
        weights: weights.to_vec(),
    })
}

/// Every tabulated triangle rule degree.
pub fn tabulated_triangle_degrees() -> impl Iterator<Item = usize> {
    TRIANGLE_TABLE.iter().map(|(d, _)| *d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of `x^i y^j` over the reference triangle.
    fn monomial_integral(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    /// Composite midpoint-type oracle: split the reference triangle into
    /// `m^2` congruent subtriangles and apply the degree-2 rule on each.
    fn subdivision_oracle(f: impl Fn(f64, f64) -> f64, m: usize) -> f64 {
        let rule = triangle_rule(2).unwrap();
        let h = 1.0 / m as f64;
        let mut total = 0.0;
        let mut sub = |v0: [f64; 2], v1: [f64; 2], v2: [f64; 2]| {
            for (l, w) in rule.iter() {
                let x = l[0] * v0[0] + l[1] * v1[0] + l[2] * v2[0];
                let y = l[0] * v0[1] + l[1] * v1[1] + l[2] * v2[1];
                total += w * h * h * f(x, y);
            }
        };
        for i in 0..m {
            for j in 0..m - i {
                let (x, y) = (i as f64 * h, j as f64 * h);
                sub([x, y], [x + h, y], [x, y + h]);
                if i + j + 1 < m {
                    sub([x + h, y], [x + h, y + h], [x, y + h]);
                }
            }
        }
        total
    }

    #[test]
    fn exactness_sweep_all_tabulated_rules() {
        for degree in tabulated_triangle_degrees() {
            let rule = triangle_rule(degree).unwrap();
            assert_eq!(rule.degree, degree);
            for i in 0..=degree as u32 {
                for j in 0..=(degree as u32 - i) {
                    let exact = monomial_integral(i, j);
                    let got = rule.integrate_reference(|x, y| x.powi(i as i32) * y.powi(j as i32));
                    let rel = (got - exact).abs() / exact;
                    assert!(rel <= 1e-14, "degree {degree} monomial x^{i} y^{j}: rel err {rel:e}");
                }
            }
        }
    }

    #[test]
    fn weights_positive_and_points_inside() {
        for degree in tabulated_triangle_degrees() {
            let rule = triangle_rule(degree).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-15);
            for (l, w) in rule.iter() {
                assert!(w > 0.0);
                assert!(l.iter().all(|&c| (0.0..=1.0).contains(&c)));
                assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degree_two_integrates_x_squared() {
        let rule = triangle_rule(2).unwrap();
        let got = rule.integrate_reference(|x, _| x * x);
        assert!((got - 1.0 / 12.0).abs() < 1e-16);
        assert!((rule.integrate_reference(|_, _| 1.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn degree_ten_matches_subdivision_oracle() {
        let f = |x: f64, y: f64| x.powi(4) * y.powi(6);
        // Richardson-extrapolated subdivision oracle (degree-2 rule, error O(h^4)).
        let coarse = subdivision_oracle(f, 200);
        let fine = subdivision_oracle(f, 400);
        let oracle = fine + (fine - coarse) / 15.0;
        let got = triangle_rule(10).unwrap().integrate_reference(f);
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        assert!((got - monomial_integral(4, 6)).abs() < 1e-16);
    }

    #[test]
    fn request_rounds_up_to_tabulated_rule() {
        assert_eq!(triangle_rule(1).unwrap().degree, 2);
        assert_eq!(triangle_rule(7).unwrap().degree, 8);
        assert_eq!(triangle_rule(11).unwrap().degree, 12);
        assert!(triangle_rule(13).is_err());
        assert!(triangle_rule(0).is_err());
    }

    #[test]
    fn edge_rules() {
        let two = edge_rule(3).unwrap();
        assert_eq!(two.len(), 2);
        assert!((two.integrate(|t| t.powi(3)) - 0.25).abs() < 1e-16);
        let five = edge_rule(9).unwrap();
        assert_eq!(five.len(), 5);
        assert!((five.integrate(|t| t.powi(9)) - 0.1).abs() < 1e-15);
        for degree in 1..=11 {
            let rule = edge_rule(degree).unwrap();
            assert_eq!(rule.len(), (degree + 2) / 2);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for k in 0..=degree as i32 {
                let got = rule.integrate(|t| t.powi(k));
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((got - exact).abs() / exact <= 1e-14, "degree {degree}, t^{k}");
            }
        }
        assert!(edge_rule(12).is_err());
    }
}
