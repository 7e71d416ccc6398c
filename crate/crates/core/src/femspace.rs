//! Reference-element basis functions, triangle quadrature, and per-point
//! curved-element geometry.
//!
//! Geometry and fields are isoparametric: both are degree-k polynomial
//! pullbacks of the reference triangle `{ξ ≥ 0, η ≥ 0, ξ + η ≤ 1}` with
//! barycentric coordinates `(1 − ξ − η, ξ, η)`. Tangential gradients are
//! computed through the chart formula `∇_Γ u = J g⁻¹ ∇̂û`, with `J` the 3x2
//! parametrization Jacobian and `g = JᵀJ` the first fundamental form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Mat3, Vec3};
use crate::scalar::Real;

/// Largest supported polynomial degree for reference elements. The
/// equispaced Lagrange lattice conditions poorly beyond this.
pub const MAX_DEGREE: usize = 6;
/// Largest supported quadrature exactness degree.
pub const MAX_QUADRATURE_EXACTNESS: usize = 30;

/// Number of Lagrange nodes of a degree-k triangle.
pub fn node_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Integer lattice of the degree-k Lagrange nodes, as barycentric
/// numerators summing to `degree`.
///
/// Ordering: the three corners, then the nodes interior to edges 0→1, 1→2
/// and 2→0 (walked away from the first corner of each edge), then interior
/// nodes in lexicographic order.
pub fn lattice_nodes(degree: usize) -> Vec<[usize; 3]> {
    let k = degree;
    let mut nodes = Vec::with_capacity(node_count(k));
    nodes.push([k, 0, 0]);
    nodes.push([0, k, 0]);
    nodes.push([0, 0, k]);
    for i in 1..k {
        nodes.push([k - i, i, 0]);
    }
    for i in 1..k {
        nodes.push([0, k - i, i]);
    }
    for i in 1..k {
        nodes.push([i, 0, k - i]);
    }
    for a in 1..k {
        for b in 1..(k - a) {
            nodes.push([a, b, k - a - b]);
        }
    }
    debug_assert_eq!(nodes.len(), node_count(k));
    nodes
}

/// Lagrange basis on the equispaced barycentric lattice of the reference
/// triangle.
#[derive(Clone, Debug)]
pub struct ReferenceElement<T> {
    degree: usize,
    lattice: Vec<[usize; 3]>,
    /// Monomial exponents `(a, b)` for `ξ^a η^b`, total degree ≤ k.
    monomials: Vec<(u32, u32)>,
    /// `coeff[m][i]`: coefficient of monomial m in basis function i.
    coeff: Vec<Vec<T>>,
}

impl<T: Real> ReferenceElement<T> {
    pub fn new(degree: usize) -> Result<Self> {
        if degree < 1 || degree > MAX_DEGREE {
            return Err(Error::Capacity {
                what: "reference element degree",
                requested: degree,
                cap: MAX_DEGREE,
            });
        }
        let lattice = lattice_nodes(degree);
        let n = lattice.len();
        let mut monomials = Vec::with_capacity(n);
        for d in 0..=degree {
            for a in (0..=d).rev() {
                monomials.push((a as u32, (d - a) as u32));
            }
        }
        debug_assert_eq!(monomials.len(), n);

        let inv_k = T::one() / T::from_usize(degree).unwrap();
        let mut vandermonde = vec![vec![T::zero(); n]; n];
        for (i, tri) in lattice.iter().enumerate() {
            let xi = T::from_usize(tri[1]).unwrap() * inv_k;
            let eta = T::from_usize(tri[2]).unwrap() * inv_k;
            for (m, &(a, b)) in monomials.iter().enumerate() {
                vandermonde[i][m] = xi.powi(a as i32) * eta.powi(b as i32);
            }
        }
        let mut coeff = linalg::invert_dense(&vandermonde).ok_or_else(|| {
            Error::Precondition(format!(
                "Lagrange lattice of degree {degree} is not unisolvent numerically"
            ))
        })?;
        // Two passes of iterative refinement, C += C (I − V C): the
        // equispaced Vandermonde is ill-conditioned enough at degree 6+
        // that a plain inverse leaves ~3e-13 in the partition of unity.
        for _ in 0..2 {
            let mut residual = vec![vec![T::zero(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = if i == j { T::one() } else { T::zero() };
                    for m in 0..n {
                        s = s - vandermonde[i][m] * coeff[m][j];
                    }
                    residual[i][j] = s;
                }
            }
            let mut update = vec![vec![T::zero(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = T::zero();
                    for m in 0..n {
                        s = s + coeff[i][m] * residual[m][j];
                    }
                    update[i][j] = s;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    coeff[i][j] = coeff[i][j] + update[i][j];
                }
            }
        }
        // Enforce the partition of unity exactly: the coefficient row sums
        // represent the constant-1 function, (1, 0, ..., 0) in the
        // monomial basis. Spreading the tiny defect across each row makes
        // Σ φ_i ≡ 1 hold as a polynomial identity.
        let inv_n = T::one() / T::from_usize(n).unwrap();
        for m in 0..n {
            let target = if m == 0 { T::one() } else { T::zero() };
            let defect: T = coeff[m].iter().copied().sum::<T>() - target;
            let share = defect * inv_n;
            for j in 0..n {
                coeff[m][j] = coeff[m][j] - share;
            }
        }
        Ok(ReferenceElement {
            degree,
            lattice,
            monomials,
            coeff,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.lattice.len()
    }

    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    /// Barycentric coordinates of lattice node `i`.
    pub fn node_barycentric(&self, i: usize) -> [T; 3] {
        let inv_k = T::one() / T::from_usize(self.degree).unwrap();
        let tri = self.lattice[i];
        [
            T::from_usize(tri[0]).unwrap() * inv_k,
            T::from_usize(tri[1]).unwrap() * inv_k,
            T::from_usize(tri[2]).unwrap() * inv_k,
        ]
    }

    /// Values of all basis functions at a barycentric point.
    pub fn eval(&self, bary: &[T; 3]) -> Vec<T> {
        let n = self.node_count();
        let xi = bary[1];
        let eta = bary[2];
        let mono: Vec<T> = self
            .monomials
            .iter()
            .map(|&(a, b)| xi.powi(a as i32) * eta.powi(b as i32))
            .collect();
        let mut out = vec![T::zero(); n];
        for (m, mv) in mono.iter().enumerate() {
            if *mv == T::zero() {
                continue;
            }
            let row = &self.coeff[m];
            for i in 0..n {
                out[i] = out[i] + *mv * row[i];
            }
        }
        out
    }

    /// Reference gradients `(∂ξ, ∂η)` of all basis functions at a point.
    pub fn eval_grad(&self, bary: &[T; 3]) -> Vec<[T; 2]> {
        let n = self.node_count();
        let xi = bary[1];
        let eta = bary[2];
        let mut out = vec![[T::zero(); 2]; n];
        for (m, &(a, b)) in self.monomials.iter().enumerate() {
            let dxi = if a == 0 {
                T::zero()
            } else {
                T::from_u32(a).unwrap() * xi.powi(a as i32 - 1) * eta.powi(b as i32)
            };
            let deta = if b == 0 {
                T::zero()
            } else {
                T::from_u32(b).unwrap() * xi.powi(a as i32) * eta.powi(b as i32 - 1)
            };
            if dxi == T::zero() && deta == T::zero() {
                continue;
            }
            let row = &self.coeff[m];
            for i in 0..n {
                out[i][0] = out[i][0] + dxi * row[i];
                out[i][1] = out[i][1] + deta * row[i];
            }
        }
        out
    }
}

/// Builds a degree-k reference element.
pub fn make_reference<T: Real>(degree: usize) -> Result<ReferenceElement<T>> {
    ReferenceElement::new(degree)
}

/// Quadrature rule on the reference triangle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
    pub exactness_degree: usize,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre_raw(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre_unit<T: Real>(n: usize) -> Vec<(T, T)> {
    let (nodes, weights) = gauss_legendre_raw(n);
    nodes
        .iter()
        .zip(weights.iter())
        .map(|(&x, &w)| (T::lit(0.5 * (x + 1.0)), T::lit(0.5 * w)))
        .collect()
}

/// Builds a rule exact for all bivariate polynomials up to the requested
/// total degree, as a collapsed tensor Gauss rule (Duffy map `ξ = u`,
/// `η = v(1−u)` with Jacobian `1−u`).
pub fn make_quadrature<T: Real>(exactness_degree: usize) -> Result<QuadratureRule<T>> {
    if exactness_degree > MAX_QUADRATURE_EXACTNESS {
        return Err(Error::Capacity {
            what: "quadrature exactness degree",
            requested: exactness_degree,
            cap: MAX_QUADRATURE_EXACTNESS,
        });
    }
    let d = exactness_degree;
    // Monomial ξ^a η^b, a+b ≤ d, pulls back to u^(a+b) v^b (1−u)^(b+1):
    // degree d+1 in u and d in v.
    let n_u = (d + 3) / 2;
    let n_v = (d + 2) / 2;
    let gu = gauss_legendre_unit::<T>(n_u.max(1));
    let gv = gauss_legendre_unit::<T>(n_v.max(1));
    let mut points = Vec::with_capacity(gu.len() * gv.len());
    let mut weights = Vec::with_capacity(gu.len() * gv.len());
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            let xi = u;
            let eta = v * (T::one() - u);
            points.push([T::one() - xi - eta, xi, eta]);
            weights.push(wu * wv * (T::one() - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: d,
    })
}

/// Builds a rule of the requested exactness that is invariant under the
/// six relabelings of the reference triangle, by averaging the collapsed
/// tensor rule over the symmetry group. Costs six times the points of
/// [`make_quadrature`]; element integrals become independent of vertex
/// ordering (up to roundoff), which matters wherever discrete symmetries
/// must be preserved exactly.
pub fn make_symmetric_quadrature<T: Real>(exactness_degree: usize) -> Result<QuadratureRule<T>> {
    let base = make_quadrature::<T>(exactness_degree)?;
    let sixth = T::one() / T::lit(6.0);
    let mut points = Vec::with_capacity(base.len() * 6);
    let mut weights = Vec::with_capacity(base.len() * 6);
    for (p, w) in base.points.iter().zip(base.weights.iter()) {
        for perm in [
            [0usize, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ] {
            points.push([p[perm[0]], p[perm[1]], p[perm[2]]]);
            weights.push(*w * sixth);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree,
    })
}

/// Exact moment `∫_T ξ^a η^b` over the reference triangle: `a! b! / (a+b+2)!`.
pub fn triangle_monomial_moment(a: u32, b: u32) -> f64 {
    let mut value = 1.0_f64;
    // a! b! / (a+b+2)! computed as a stable product.
    for i in 1..=(a + b + 2) {
        value /= i as f64;
    }
    for i in 1..=a {
        value *= i as f64;
    }
    for i in 1..=b {
        value *= i as f64;
    }
    value
}

/// Basis values and reference gradients tabulated at the points of a
/// quadrature rule (or any fixed point set).
#[derive(Clone, Debug)]
pub struct ElementTables<T> {
    pub phi: Vec<Vec<T>>,
    pub dphi: Vec<Vec<[T; 2]>>,
}

impl<T: Real> ElementTables<T> {
    pub fn tabulate(reference: &ReferenceElement<T>, points: &[[T; 3]]) -> Self {
        ElementTables {
            phi: points.iter().map(|p| reference.eval(p)).collect(),
            dphi: points.iter().map(|p| reference.eval_grad(p)).collect(),
        }
    }
}

/// Per-quadrature-point geometry of a curved element.
#[derive(Clone, Debug)]
pub struct ElementPointFrame<T> {
    /// Columns of the 3x2 parametrization Jacobian.
    pub jacobian: [Vec3<T>; 2],
    pub metric: Mat2<T>,
    pub inverse_metric: Mat2<T>,
    /// `√det g`.
    pub area_element: T,
    /// Unit normal, oriented with the element (outward for the icosphere
    /// family).
    pub normal: Vec3<T>,
    /// Tangential projector `P = I − n̂ n̂ᵀ`.
    pub projector: Mat3<T>,
    /// Tangential gradient matrix `E` of the optional field: column j is
    /// `∇_Γ` of component j.
    pub field_gradient: Option<Mat3<T>>,
}

/// Relative floor on `det g`, scaled by `(|j₁|² + |j₂|²)²`.
const DEGENERACY_FLOOR: f64 = 1e-24;

pub(crate) struct FrameCore<T> {
    pub j: [Vec3<T>; 2],
    pub metric: Mat2<T>,
    pub inv_metric: Mat2<T>,
    pub sqrt_det: T,
}

/// Jacobian/metric at one tabulated point; shared fast path for assembly
/// and frame construction.
pub(crate) fn frame_core<T: Real>(
    dphi: &[[T; 2]],
    positions: &[Vec3<T>],
) -> std::result::Result<FrameCore<T>, T> {
    let mut j0 = [T::zero(); 3];
    let mut j1 = [T::zero(); 3];
    for (i, p) in positions.iter().enumerate() {
        linalg::axpy3(&mut j0, dphi[i][0], p);
        linalg::axpy3(&mut j1, dphi[i][1], p);
    }
    let g = [
        [linalg::dot3(&j0, &j0), linalg::dot3(&j0, &j1)],
        [linalg::dot3(&j1, &j0), linalg::dot3(&j1, &j1)],
    ];
    let det = linalg::det2(&g);
    let scale = (g[0][0] + g[1][1]) * (g[0][0] + g[1][1]);
    if det <= T::lit(DEGENERACY_FLOOR) * scale || !det.is_finite() {
        return Err(det);
    }
    Ok(FrameCore {
        j: [j0, j1],
        metric: g,
        inv_metric: linalg::inv2(&g),
        sqrt_det: det.sqrt(),
    })
}

/// Tangential gradient of the coefficient slice through a frame core:
/// `∇_Γ u_i = J g⁻¹ ∇̂u` evaluated as 3-vectors per scalar coefficient set.
pub(crate) fn tangential_gradient_matrix<T: Real>(
    core: &FrameCore<T>,
    dphi: &[[T; 2]],
    field: &[Vec3<T>],
) -> Mat3<T> {
    // Reference gradient of each ambient component: 2x3.
    let mut gref = [[T::zero(); 3]; 2];
    for (i, f) in field.iter().enumerate() {
        for c in 0..3 {
            gref[0][c] = gref[0][c] + dphi[i][0] * f[c];
            gref[1][c] = gref[1][c] + dphi[i][1] * f[c];
        }
    }
    // Chart coefficients g⁻¹ ∇̂: 2x3.
    let gi = &core.inv_metric;
    let mut chart = [[T::zero(); 3]; 2];
    for c in 0..3 {
        chart[0][c] = gi[0][0] * gref[0][c] + gi[0][1] * gref[1][c];
        chart[1][c] = gi[1][0] * gref[0][c] + gi[1][1] * gref[1][c];
    }
    let mut e = linalg::mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            e[r][c] = core.j[0][r] * chart[0][c] + core.j[1][r] * chart[1][c];
        }
    }
    e
}

/// Evaluates the full geometric frame of a curved element at a barycentric
/// point, optionally with the tangential gradient of an FE field given by
/// per-node 3-vector coefficients.
pub fn frame_at<T: Real>(
    reference: &ReferenceElement<T>,
    element_node_positions: &[Vec3<T>],
    point: &[T; 3],
    field_coefficients: Option<&[Vec3<T>]>,
) -> Result<ElementPointFrame<T>> {
    assert_eq!(element_node_positions.len(), reference.node_count());
    let dphi = reference.eval_grad(point);
    let core = frame_core(&dphi, element_node_positions).map_err(|det| Error::Geometry {
        element: usize::MAX,
        detail: format!(
            "rank-deficient jacobian at barycentric point: det g = {:.3e}",
            det.as_f64()
        ),
    })?;
    let mut normal = linalg::cross3(&core.j[0], &core.j[1]);
    linalg::normalize3(&mut normal);
    let mut projector = linalg::mat3_identity::<T>();
    for r in 0..3 {
        for c in 0..3 {
            projector[r][c] = projector[r][c] - normal[r] * normal[c];
        }
    }
    let field_gradient =
        field_coefficients.map(|f| tangential_gradient_matrix(&core, &dphi, f));
    Ok(ElementPointFrame {
        jacobian: core.j,
        metric: core.metric,
        inverse_metric: core.inv_metric,
        area_element: core.sqrt_det,
        normal,
        projector,
        field_gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat3_frobenius_norm, mat3_mul, mat3_trace, mat3_vec, sub3};

    #[test]
    fn lagrange_property_k1() {
        let re = ReferenceElement::<f64>::new(1).unwrap();
        let vals = re.eval(&[1.0, 0.0, 0.0]);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
        assert!(vals[2].abs() < 1e-14);
    }

    #[test]
    fn lagrange_property_edge_midpoint_k2() {
        let re = ReferenceElement::<f64>::new(2).unwrap();
        // Local node 3 is the midpoint of edge 0→1.
        let bary = re.node_barycentric(3);
        let vals = re.eval(&bary);
        for (i, v) in vals.iter().enumerate() {
            let expect = if i == 3 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-13, "basis {i} at node 3: {v}");
        }
    }

    #[test]
    fn partition_of_unity_all_degrees() {
        for k in 1..=MAX_DEGREE {
            let re = ReferenceElement::<f64>::new(k).unwrap();
            let p = [0.23, 0.41, 0.36];
            let sum: f64 = re.eval(&p).iter().sum();
            assert!((sum - 1.0).abs() < 1e-13, "degree {k}: sum {sum}");
            let gsum = re.eval_grad(&p).iter().fold([0.0, 0.0], |a, g| {
                [a[0] + g[0], a[1] + g[1]]
            });
            assert!(gsum[0].abs() < 1e-11 && gsum[1].abs() < 1e-11);
        }
    }

    #[test]
    fn degree_cap_is_enforced() {
        assert!(matches!(
            ReferenceElement::<f64>::new(MAX_DEGREE + 1),
            Err(Error::Capacity { .. })
        ));
        assert!(matches!(
            ReferenceElement::<f64>::new(0),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn quadrature_weights_sum_to_half() {
        for d in [1, 2, 4, 8, 14, 20] {
            let q = make_quadrature::<f64>(d).unwrap();
            let sum: f64 = q.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-14, "exactness {d}: {sum}");
        }
    }

    #[test]
    fn quadrature_reproduces_analytic_moments() {
        // Oracle: ∫ ξ^a η^b = a! b! / (a+b+2)!.
        for d in [2, 4, 8, 12, 20] {
            let q = make_quadrature::<f64>(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let num: f64 = q
                        .points
                        .iter()
                        .zip(q.weights.iter())
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    let exact = triangle_monomial_moment(a, b);
                    assert!(
                        (num - exact).abs() <= 1e-13 * exact.max(1.0),
                        "d={d} a={a} b={b}: {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn named_moments() {
        let q2 = make_quadrature::<f64>(2).unwrap();
        let xy: f64 = q2
            .points
            .iter()
            .zip(q2.weights.iter())
            .map(|(p, w)| w * p[1] * p[2])
            .sum();
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);

        let ones: f64 = q2.weights.iter().sum();
        assert!((ones - 0.5).abs() < 1e-15);

        let q4 = make_quadrature::<f64>(4).unwrap();
        let x2y2: f64 = q4
            .points
            .iter()
            .zip(q4.weights.iter())
            .map(|(p, w)| w * p[1] * p[1] * p[2] * p[2])
            .sum();
        assert!((x2y2 - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_unit_integrates_powers() {
        for n in 1..=16 {
            let rule = gauss_legendre_unit::<f64>(n);
            for p in 0..(2 * n) {
                let num: f64 = rule.iter().map(|&(x, w)| w * x.powi(p as i32)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((num - exact).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn flat_element_frame() {
        let re = ReferenceElement::<f64>::new(1).unwrap();
        let pos = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        // Field u = x-coordinate, stored in component 0.
        let field = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let f = frame_at(&re, &pos, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], Some(&field)).unwrap();
        assert!(sub3(&f.normal, &[0.0, 0.0, 1.0]).iter().all(|c| c.abs() < 1e-14));
        let e = f.field_gradient.unwrap();
        // Column 0 is ∇_Γ of the x-coordinate field.
        assert!((e[0][0] - 1.0).abs() < 1e-14);
        assert!(e[1][0].abs() < 1e-14 && e[2][0].abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let re = ReferenceElement::<f64>::new(2).unwrap();
        let bumpy: Vec<[f64; 3]> = (0..re.node_count())
            .map(|i| {
                let b = re.node_barycentric(i);
                [b[1], b[2], 0.1 * (b[1] * b[2])]
            })
            .collect();
        let field = vec![[3.0, -1.0, 2.0]; re.node_count()];
        let f = frame_at(&re, &bumpy, &[0.2, 0.5, 0.3], Some(&field)).unwrap();
        let e = f.field_gradient.unwrap();
        assert!(mat3_frobenius_norm(&e) < 1e-12);
    }

    #[test]
    fn identity_field_gradient_is_projector() {
        // On any element, the tangential gradient of the identity field is
        // the tangential projector: E = P, tr E = 2, E n̂ = 0.
        let re = ReferenceElement::<f64>::new(2).unwrap();
        let pos: Vec<[f64; 3]> = (0..re.node_count())
            .map(|i| {
                let b = re.node_barycentric(i);
                let mut p = [
                    0.3 + b[1] - 0.2 * b[2],
                    -0.1 + 0.9 * b[2] + 0.1 * b[1],
                    0.2 * b[1] * b[1] + 0.3 * b[2],
                ];
                p[2] += 0.05 * b[1] * b[2];
                p
            })
            .collect();
        let f = frame_at(&re, &pos, &[0.25, 0.35, 0.4], Some(&pos)).unwrap();
        let e = f.field_gradient.unwrap();
        let p = f.projector;
        for r in 0..3 {
            for c in 0..3 {
                assert!((e[r][c] - p[r][c]).abs() < 1e-11, "E != P at ({r},{c})");
            }
        }
        assert!((mat3_trace(&e) - 2.0).abs() < 1e-11);
        let en = mat3_vec(&e, &f.normal);
        assert!(en.iter().all(|c| c.abs() < 1e-11));
        // Projector sanity: P n̂ = 0, P² = P.
        let pn = mat3_vec(&p, &f.normal);
        assert!(pn.iter().all(|c| c.abs() < 1e-12));
        let pp = mat3_mul(&p, &p);
        for r in 0..3 {
            for c in 0..3 {
                assert!((pp[r][c] - p[r][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_jacobian_is_rejected() {
        let re = ReferenceElement::<f64>::new(1).unwrap();
        let pos = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(matches!(
            frame_at(&re, &pos, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], None),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn columns_of_field_gradient_are_tangential() {
        let re = ReferenceElement::<f64>::new(3).unwrap();
        let pos: Vec<[f64; 3]> = (0..re.node_count())
            .map(|i| {
                let b = re.node_barycentric(i);
                let mut v = [b[1] * 2.0, b[2] * 1.5, 0.3 * b[1] * b[2] + 0.1 * b[2] * b[2]];
                v[0] += 0.07 * b[2];
                v
            })
            .collect();
        let field: Vec<[f64; 3]> = (0..re.node_count())
            .map(|i| {
                let b = re.node_barycentric(i);
                [b[1] * b[1], b[2], b[1] + 2.0 * b[2]]
            })
            .collect();
        let f = frame_at(&re, &pos, &[0.3, 0.3, 0.4], Some(&field)).unwrap();
        let e = f.field_gradient.unwrap();
        let scale = mat3_frobenius_norm(&e).max(1e-30);
        for c in 0..3 {
            let col = [e[0][c], e[1][c], e[2][c]];
            let pcol = mat3_vec(&f.projector, &col);
            for r in 0..3 {
                assert!(
                    (pcol[r] - col[r]).abs() <= 1e-11 * scale,
                    "column {c} not tangential"
                );
            }
        }
    }
}
