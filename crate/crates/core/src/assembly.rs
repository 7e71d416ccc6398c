//! Mass and stiffness assembly on a discrete surface, discrete norms, and
//! the θ-family of intermediate nodal vectors.
//!
//! The matrices act componentwise on nodal 3-vectors: the block matrices
//! with entries `I₃ ∫ φ_i φ_j` and `I₃ ∫ ∇φ_i·∇φ_j` are stored as scalar
//! sparse matrices (the blocks are identity multiples), which keeps the
//! semantics bit-identical at a ninth of the memory.
//!
//! Assembly loops elements in index order with a fixed accumulation order,
//! so results are bitwise reproducible run to run.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::femspace::{self, ElementTables, QuadratureRule, ReferenceElement};
use crate::linalg::{self, Vec3};
use crate::mesh::SurfaceMesh;
use crate::nodal::NodalVector;
use crate::scalar::Real;

/// Shared symmetric sparsity pattern from element connectivity: entry
/// `(i, j)` is present exactly when nodes i and j share an element.
#[derive(Clone, Debug)]
pub struct MatrixPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl MatrixPattern {
    pub fn from_mesh(mesh: &SurfaceMesh) -> Self {
        let n = mesh.node_count();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in mesh.elements() {
            for &i in el {
                for &j in el {
                    adjacency[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in adjacency.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        MatrixPattern {
            n,
            row_ptr,
            col_idx,
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        let cols = &self.col_idx[range.clone()];
        range.start
            + cols
                .binary_search(&col)
                .expect("entry outside the sparsity pattern")
    }
}

/// Scalar sparse symmetric matrix on the connectivity pattern, acting
/// componentwise on nodal 3-vectors.
#[derive(Clone, Debug, Serialize)]
pub struct SparseSymMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSymMatrix<T> {
    fn zeros_on(pattern: &MatrixPattern) -> Self {
        SparseSymMatrix {
            n: pattern.n,
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            values: vec![T::zero(); pattern.col_idx.len()],
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let range = self.row_ptr[i]..self.row_ptr[i + 1];
                match self.col_idx[range.clone()].binary_search(&i) {
                    Ok(off) => self.values[range.start + off],
                    Err(_) => T::zero(),
                }
            })
            .collect()
    }

    /// Infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> T {
        (0..self.n)
            .map(|i| {
                self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum()
            })
            .fold(T::zero(), |a: T, b: T| a.max(b))
    }

    /// Worst mismatch between an entry and its transpose; the assembly
    /// scatters both triangles from one local value, so this is 0.
    pub fn symmetry_residual(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for off in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[off];
                if j > i {
                    continue;
                }
                let range = self.row_ptr[j]..self.row_ptr[j + 1];
                let v_ji = match self.col_idx[range.clone()].binary_search(&i) {
                    Ok(o) => self.values[range.start + o],
                    Err(_) => T::zero(),
                };
                worst = worst.max((self.values[off] - v_ji).abs());
            }
        }
        worst
    }

    /// Componentwise product with a nodal 3-vector field.
    pub fn apply(&self, x: &NodalVector<T>) -> NodalVector<T> {
        assert_eq!(x.len(), self.n);
        let mut out = NodalVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = [T::zero(); 3];
            for off in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[off];
                let xj = &x[self.col_idx[off]];
                linalg::axpy3(&mut acc, a, xj);
            }
            out[i] = acc;
        }
        out
    }

    /// Product with a scalar coefficient vector.
    pub fn apply_scalar(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = T::zero();
                for off in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc = acc + self.values[off] * x[self.col_idx[off]];
                }
                acc
            })
            .collect()
    }

    /// Quadratic form `wᵀ S z` over nodal 3-vector fields.
    pub fn quad_form(&self, w: &NodalVector<T>, z: &NodalVector<T>) -> T {
        w.dot(&self.apply(z))
    }

    /// `‖S·𝟙‖_∞` for the scalar all-ones vector; rows of a stiffness
    /// matrix sum to zero.
    pub fn ones_residual(&self) -> T {
        self.apply_scalar(&vec![T::one(); self.n])
            .iter()
            .map(|v| v.abs())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `self + beta * other` on the identical sparsity pattern.
    pub fn add_scaled(&self, other: &Self, beta: T) -> Self {
        assert_eq!(self.n, other.n);
        assert_eq!(self.col_idx, other.col_idx, "patterns must match");
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| a + beta * b)
            .collect();
        SparseSymMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn shift_diagonal(&mut self, eps: T) {
        for i in 0..self.n {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            if let Ok(off) = self.col_idx[range.clone()].binary_search(&i) {
                self.values[range.start + off] = self.values[range.start + off] + eps;
            }
        }
    }

    /// Coordinate-format text dump `row col value`, one entry per line.
    pub fn write_coo<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.n {
            for off in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(
                    out,
                    "{} {} {:e}",
                    i,
                    self.col_idx[off],
                    self.values[off].as_f64()
                )?;
            }
        }
        Ok(())
    }
}

/// Precomputed reference data bound to one mesh: basis tables at quadrature
/// points and at lattice nodes, plus the sparsity pattern. All assembly
/// entry points go through this.
pub struct Assembler<'m, T> {
    mesh: &'m SurfaceMesh,
    reference: ReferenceElement<T>,
    quadrature: QuadratureRule<T>,
    tables: ElementTables<T>,
    node_tables: ElementTables<T>,
    pattern: MatrixPattern,
}

impl<'m, T: Real> Assembler<'m, T> {
    pub fn new(mesh: &'m SurfaceMesh, quadrature: QuadratureRule<T>) -> Result<Self> {
        let reference = ReferenceElement::new(mesh.degree())?;
        let tables = ElementTables::tabulate(&reference, &quadrature.points);
        let node_points: Vec<[T; 3]> = (0..reference.node_count())
            .map(|i| reference.node_barycentric(i))
            .collect();
        let node_tables = ElementTables::tabulate(&reference, &node_points);
        Ok(Assembler {
            mesh,
            reference,
            quadrature,
            tables,
            node_tables,
            pattern: MatrixPattern::from_mesh(mesh),
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.mesh
    }

    pub fn reference(&self) -> &ReferenceElement<T> {
        &self.reference
    }

    pub fn quadrature(&self) -> &QuadratureRule<T> {
        &self.quadrature
    }

    fn check_positions(&self, x: &NodalVector<T>) -> Result<()> {
        if x.len() != self.mesh.node_count() {
            return Err(Error::Precondition(format!(
                "{} positions for a mesh with {} nodes",
                x.len(),
                self.mesh.node_count()
            )));
        }
        Ok(())
    }

    fn assemble(
        &self,
        x: &NodalVector<T>,
        want_mass: bool,
        want_stiffness: bool,
    ) -> Result<(Option<SparseSymMatrix<T>>, Option<SparseSymMatrix<T>>)> {
        self.check_positions(x)?;
        let n_loc = self.reference.node_count();
        let nq = self.quadrature.len();
        let mut mass = want_mass.then(|| SparseSymMatrix::zeros_on(&self.pattern));
        let mut stiff = want_stiffness.then(|| SparseSymMatrix::zeros_on(&self.pattern));
        let mut m_loc = vec![T::zero(); n_loc * n_loc];
        let mut a_loc = vec![T::zero(); n_loc * n_loc];
        let mut grads: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];

        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
            }
            m_loc.iter_mut().for_each(|v| *v = T::zero());
            a_loc.iter_mut().for_each(|v| *v = T::zero());
            for q in 0..nq {
                let dphi = &self.tables.dphi[q];
                let core = femspace::frame_core(dphi, &pos).map_err(|det| Error::Geometry {
                    element: e,
                    detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                })?;
                let wq = self.quadrature.weights[q] * core.sqrt_det;
                if want_mass {
                    let phi = &self.tables.phi[q];
                    for i in 0..n_loc {
                        let wphi = wq * phi[i];
                        for j in 0..=i {
                            m_loc[i * n_loc + j] = m_loc[i * n_loc + j] + wphi * phi[j];
                        }
                    }
                }
                if want_stiffness {
                    let gi = &core.inv_metric;
                    for i in 0..n_loc {
                        let a = gi[0][0] * dphi[i][0] + gi[0][1] * dphi[i][1];
                        let b = gi[1][0] * dphi[i][0] + gi[1][1] * dphi[i][1];
                        grads[i] = [
                            core.j[0][0] * a + core.j[1][0] * b,
                            core.j[0][1] * a + core.j[1][1] * b,
                            core.j[0][2] * a + core.j[1][2] * b,
                        ];
                    }
                    for i in 0..n_loc {
                        for j in 0..=i {
                            a_loc[i * n_loc + j] =
                                a_loc[i * n_loc + j] + wq * linalg::dot3(&grads[i], &grads[j]);
                        }
                    }
                }
            }
            // Scatter both triangles from the same local value: exact
            // symmetry by construction.
            for i in 0..n_loc {
                let gi = el[i];
                for j in 0..=i {
                    let gj = el[j];
                    if let Some(m) = mass.as_mut() {
                        let v = m_loc[i * n_loc + j];
                        let s = self.pattern.slot(gi, gj);
                        m.values[s] = m.values[s] + v;
                        if gi != gj {
                            let s = self.pattern.slot(gj, gi);
                            m.values[s] = m.values[s] + v;
                        }
                    }
                    if let Some(a) = stiff.as_mut() {
                        let v = a_loc[i * n_loc + j];
                        let s = self.pattern.slot(gi, gj);
                        a.values[s] = a.values[s] + v;
                        if gi != gj {
                            let s = self.pattern.slot(gj, gi);
                            a.values[s] = a.values[s] + v;
                        }
                    }
                }
            }
        }
        Ok((mass, stiff))
    }

    /// Mass matrix `M(x)` on `Γ_h[x]`.
    pub fn mass(&self, x: &NodalVector<T>) -> Result<SparseSymMatrix<T>> {
        Ok(self.assemble(x, true, false)?.0.unwrap())
    }

    /// Stiffness matrix `A(x)` on `Γ_h[x]`.
    pub fn stiffness(&self, x: &NodalVector<T>) -> Result<SparseSymMatrix<T>> {
        Ok(self.assemble(x, false, true)?.1.unwrap())
    }

    /// Both matrices from one geometry pass.
    pub fn mass_and_stiffness(
        &self,
        x: &NodalVector<T>,
    ) -> Result<(SparseSymMatrix<T>, SparseSymMatrix<T>)> {
        let (m, a) = self.assemble(x, true, true)?;
        Ok((m.unwrap(), a.unwrap()))
    }

    /// Mass matrix and stiffness action `A(x)·x` from a single geometry
    /// pass; the hot path of the explicit integrator.
    pub fn mass_and_stiffness_action(
        &self,
        x: &NodalVector<T>,
    ) -> Result<(SparseSymMatrix<T>, NodalVector<T>)> {
        self.check_positions(x)?;
        let n_loc = self.reference.node_count();
        let nq = self.quadrature.len();
        let mut mass = SparseSymMatrix::zeros_on(&self.pattern);
        let mut out = NodalVector::zeros(x.len());
        let mut m_loc = vec![T::zero(); n_loc * n_loc];
        let mut grads: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
            }
            m_loc.iter_mut().for_each(|v| *v = T::zero());
            for q in 0..nq {
                let dphi = &self.tables.dphi[q];
                let core = femspace::frame_core(dphi, &pos).map_err(|det| Error::Geometry {
                    element: e,
                    detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                })?;
                let wq = self.quadrature.weights[q] * core.sqrt_det;
                let phi = &self.tables.phi[q];
                for i in 0..n_loc {
                    let wphi = wq * phi[i];
                    for j in 0..=i {
                        m_loc[i * n_loc + j] = m_loc[i * n_loc + j] + wphi * phi[j];
                    }
                }
                let gi = &core.inv_metric;
                for i in 0..n_loc {
                    let a = gi[0][0] * dphi[i][0] + gi[0][1] * dphi[i][1];
                    let b = gi[1][0] * dphi[i][0] + gi[1][1] * dphi[i][1];
                    grads[i] = [
                        core.j[0][0] * a + core.j[1][0] * b,
                        core.j[0][1] * a + core.j[1][1] * b,
                        core.j[0][2] * a + core.j[1][2] * b,
                    ];
                }
                let mut s = [[T::zero(); 3]; 3];
                for j in 0..n_loc {
                    for c in 0..3 {
                        linalg::axpy3(&mut s[c], pos[j][c], &grads[j]);
                    }
                }
                for i in 0..n_loc {
                    let g = el[i];
                    for c in 0..3 {
                        out[g][c] = out[g][c] + wq * linalg::dot3(&grads[i], &s[c]);
                    }
                }
            }
            for i in 0..n_loc {
                let gi = el[i];
                for j in 0..=i {
                    let gj = el[j];
                    let v = m_loc[i * n_loc + j];
                    let slot = self.pattern.slot(gi, gj);
                    mass.values[slot] = mass.values[slot] + v;
                    if gi != gj {
                        let slot = self.pattern.slot(gj, gi);
                        mass.values[slot] = mass.values[slot] + v;
                    }
                }
            }
        }
        Ok((mass, out))
    }

    /// The product `A(x)·x` evaluated elementwise, without forming the
    /// matrix.
    pub fn apply_stiffness(&self, x: &NodalVector<T>) -> Result<NodalVector<T>> {
        self.check_positions(x)?;
        let n_loc = self.reference.node_count();
        let nq = self.quadrature.len();
        let mut out = NodalVector::zeros(x.len());
        let mut grads: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
            }
            for q in 0..nq {
                let dphi = &self.tables.dphi[q];
                let core = femspace::frame_core(dphi, &pos).map_err(|det| Error::Geometry {
                    element: e,
                    detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                })?;
                let wq = self.quadrature.weights[q] * core.sqrt_det;
                let gi = &core.inv_metric;
                for i in 0..n_loc {
                    let a = gi[0][0] * dphi[i][0] + gi[0][1] * dphi[i][1];
                    let b = gi[1][0] * dphi[i][0] + gi[1][1] * dphi[i][1];
                    grads[i] = [
                        core.j[0][0] * a + core.j[1][0] * b,
                        core.j[0][1] * a + core.j[1][1] * b,
                        core.j[0][2] * a + core.j[1][2] * b,
                    ];
                }
                // S[c] = Σ_j x_j[c] ∇φ_j, then (Ax)_i[c] = w ∇φ_i · S[c].
                let mut s = [[T::zero(); 3]; 3];
                for j in 0..n_loc {
                    for c in 0..3 {
                        linalg::axpy3(&mut s[c], pos[j][c], &grads[j]);
                    }
                }
                for i in 0..n_loc {
                    let g = el[i];
                    for c in 0..3 {
                        out[g][c] = out[g][c] + wq * linalg::dot3(&grads[i], &s[c]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Quadrature surface area of `Γ_h[x]`.
    pub fn area(&self, x: &NodalVector<T>) -> Result<T> {
        self.check_positions(x)?;
        let nq = self.quadrature.len();
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; self.reference.node_count()];
        let mut total = T::zero();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
            }
            for q in 0..nq {
                let core = femspace::frame_core(&self.tables.dphi[q], &pos).map_err(|det| {
                    Error::Geometry {
                        element: e,
                        detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                    }
                })?;
                total = total + self.quadrature.weights[q] * core.sqrt_det;
            }
        }
        Ok(total)
    }

    /// Discrete L² norm `√(wᵀ M(x) w)` evaluated elementwise.
    pub fn norm_m(&self, x: &NodalVector<T>, w: &NodalVector<T>) -> Result<T> {
        self.check_positions(x)?;
        self.check_positions(w)?;
        let nq = self.quadrature.len();
        let n_loc = self.reference.node_count();
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut acc = T::zero();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
            }
            for q in 0..nq {
                let core = femspace::frame_core(&self.tables.dphi[q], &pos).map_err(|det| {
                    Error::Geometry {
                        element: e,
                        detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                    }
                })?;
                let phi = &self.tables.phi[q];
                let mut value = [T::zero(); 3];
                for (i, &g) in el.iter().enumerate() {
                    linalg::axpy3(&mut value, phi[i], &w[g]);
                }
                acc = acc
                    + self.quadrature.weights[q] * core.sqrt_det * linalg::dot3(&value, &value);
            }
        }
        Ok(clip_sqrt(acc))
    }

    /// Discrete H¹ seminorm `√(wᵀ A(x) w)` evaluated elementwise.
    pub fn seminorm_a(&self, x: &NodalVector<T>, w: &NodalVector<T>) -> Result<T> {
        self.check_positions(x)?;
        self.check_positions(w)?;
        let nq = self.quadrature.len();
        let n_loc = self.reference.node_count();
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut field: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut acc = T::zero();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
                field[i] = w[g];
            }
            for q in 0..nq {
                let dphi = &self.tables.dphi[q];
                let core = femspace::frame_core(dphi, &pos).map_err(|det| Error::Geometry {
                    element: e,
                    detail: format!("det g = {:.3e} at quadrature point {q}", det.as_f64()),
                })?;
                let grad = femspace::tangential_gradient_matrix(&core, dphi, &field);
                acc = acc
                    + self.quadrature.weights[q]
                        * core.sqrt_det
                        * linalg::mat3_frobenius(&grad, &grad);
            }
        }
        Ok(clip_sqrt(acc))
    }

    /// Discrete L∞ norm of the tangential gradient of an FE field: the max
    /// of the Frobenius norm over all quadrature points and lattice nodes.
    pub fn sup_gradient(&self, x: &NodalVector<T>, w: &NodalVector<T>) -> Result<T> {
        self.check_positions(x)?;
        self.check_positions(w)?;
        let n_loc = self.reference.node_count();
        let mut pos: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut field: Vec<Vec3<T>> = vec![[T::zero(); 3]; n_loc];
        let mut sup = T::zero();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (i, &g) in el.iter().enumerate() {
                pos[i] = x[g];
                field[i] = w[g];
            }
            for tables in [&self.tables, &self.node_tables] {
                for dphi in tables.dphi.iter() {
                    let core =
                        femspace::frame_core(dphi, &pos).map_err(|det| Error::Geometry {
                            element: e,
                            detail: format!("det g = {:.3e}", det.as_f64()),
                        })?;
                    let grad = femspace::tangential_gradient_matrix(&core, dphi, &field);
                    sup = sup.max(linalg::mat3_frobenius_norm(&grad));
                }
            }
        }
        Ok(sup)
    }

    /// Discrete L∞ norm of an FE field: max Euclidean value over quadrature
    /// points and lattice nodes.
    pub fn sup_value(&self, w: &NodalVector<T>) -> Result<T> {
        self.check_positions(w)?;
        let mut sup = T::zero();
        for el in self.mesh.elements() {
            for tables in [&self.tables, &self.node_tables] {
                for phi in tables.phi.iter() {
                    let mut value = [T::zero(); 3];
                    for (i, &g) in el.iter().enumerate() {
                        linalg::axpy3(&mut value, phi[i], &w[g]);
                    }
                    sup = sup.max(linalg::norm3(&value));
                }
            }
        }
        Ok(sup)
    }
}

fn clip_sqrt<T: Real>(value: T) -> T {
    if value < T::zero() {
        log::warn!(
            "quadratic form returned {:.3e} < 0 from roundoff; clipping to 0",
            value.as_f64()
        );
        T::zero()
    } else {
        value.sqrt()
    }
}

/// Mass matrix `M(x)` on `Γ_h[x]`.
pub fn mass_matrix<T: Real>(
    mesh: &SurfaceMesh,
    x: &NodalVector<T>,
    quad: &QuadratureRule<T>,
) -> Result<SparseSymMatrix<T>> {
    Assembler::new(mesh, quad.clone())?.mass(x)
}

/// Stiffness matrix `A(x)` on `Γ_h[x]`.
pub fn stiffness_matrix<T: Real>(
    mesh: &SurfaceMesh,
    x: &NodalVector<T>,
    quad: &QuadratureRule<T>,
) -> Result<SparseSymMatrix<T>> {
    Assembler::new(mesh, quad.clone())?.stiffness(x)
}

/// `A(x)·x` in one elementwise pass.
pub fn apply_stiffness<T: Real>(
    mesh: &SurfaceMesh,
    x: &NodalVector<T>,
    quad: &QuadratureRule<T>,
) -> Result<NodalVector<T>> {
    Assembler::new(mesh, quad.clone())?.apply_stiffness(x)
}

/// Convex combination `x^θ = (1−θ) x* + θ x` of two nodal vectors.
pub fn intermediate_nodal<T: Real>(
    x_star: &NodalVector<T>,
    x: &NodalVector<T>,
    theta: T,
) -> NodalVector<T> {
    NodalVector::lin_comb(T::one() - theta, x_star, theta, x)
}

/// `√(wᵀ M(x) w)`.
pub fn norm_m<T: Real>(
    mesh: &SurfaceMesh,
    x: &NodalVector<T>,
    w: &NodalVector<T>,
    quad: &QuadratureRule<T>,
) -> Result<T> {
    Assembler::new(mesh, quad.clone())?.norm_m(x, w)
}

/// `√(wᵀ A(x) w)`.
pub fn seminorm_a<T: Real>(
    mesh: &SurfaceMesh,
    x: &NodalVector<T>,
    w: &NodalVector<T>,
    quad: &QuadratureRule<T>,
) -> Result<T> {
    Assembler::new(mesh, quad.clone())?.seminorm_a(x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femspace::make_quadrature;
    use crate::mesh::build_icosphere;
    use proptest::prelude::*;

    fn icosphere_assembler(
        level: usize,
        degree: usize,
    ) -> (SurfaceMesh, NodalVector<f64>, QuadratureRule<f64>) {
        let (mesh, pos) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
        let quad = make_quadrature(2 * degree + 2).unwrap();
        (mesh, pos, quad)
    }

    #[test]
    fn icosahedron_mass_total_matches_analytic_area() {
        let (mesh, pos, quad) = icosphere_assembler(0, 1);
        let m = mass_matrix(&mesh, &pos, &quad).unwrap();
        let ones = NodalVector::ones(mesh.node_count());
        // Each component contributes the area; divide by 3.
        let total = m.quad_form(&ones, &ones) / 3.0;
        let exact = 5.0 * 3.0_f64.sqrt() * 16.0 / (10.0 + 2.0 * 5.0_f64.sqrt());
        assert!(
            (total - exact).abs() < 1e-12 * exact,
            "area {total} vs {exact}"
        );
    }

    #[test]
    fn fine_mesh_area_approaches_sphere_area() {
        let (mesh, pos, quad) = icosphere_assembler(4, 1);
        let asm = Assembler::new(&mesh, quad).unwrap();
        let area = asm.area(&pos).unwrap();
        let sphere = 4.0 * std::f64::consts::PI;
        let h = crate::mesh::mesh_size(&mesh, &pos).unwrap().h_max;
        assert!(
            (area - sphere).abs() < 0.5 * h * h * sphere,
            "area {area}, h {h}"
        );
    }

    #[test]
    fn area_convergence_order_is_k_plus_1() {
        for degree in [1usize, 2] {
            let mut errors = Vec::new();
            let mut hs = Vec::new();
            for level in 1..=3 {
                let (mesh, pos, quad) = icosphere_assembler(level, degree);
                let asm = Assembler::new(&mesh, quad).unwrap();
                let area = asm.area(&pos).unwrap();
                errors.push((area - 4.0 * std::f64::consts::PI).abs());
                hs.push(crate::mesh::mesh_size(&mesh, &pos).unwrap().h_max);
            }
            let eoc = (errors[1] / errors[2]).ln() / (hs[1] / hs[2]).ln();
            // At least k+1; even degrees superconverge on the symmetric
            // icosphere family (k = 2 measures ~4).
            let expected = degree as f64 + 1.0;
            assert!(
                eoc > expected - 0.4,
                "degree {degree}: area EOC {eoc}, expected >= {expected}"
            );
        }
    }

    #[test]
    fn mass_is_positive_definite_probe() {
        let (mesh, pos, quad) = icosphere_assembler(1, 2);
        let m = mass_matrix(&mesh, &pos, &quad).unwrap();
        let mut state = 0x12345678_u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..20 {
            let w = NodalVector::from_fn(mesh.node_count(), |_| [next(), next(), next()]);
            let q = m.quad_form(&w, &w);
            assert!(q > 0.0, "mass quadratic form must be positive");
        }
        assert_eq!(m.symmetry_residual(), 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let (mesh, pos, quad) = icosphere_assembler(2, 2);
        let a = stiffness_matrix(&mesh, &pos, &quad).unwrap();
        assert!(a.ones_residual() <= 1e-11 * a.inf_norm());
        assert_eq!(a.symmetry_residual(), 0.0);
    }

    #[test]
    fn stiffness_times_positions_gives_twice_area() {
        // |∇_Γ id|² = tr P = 2 pointwise, so xᵀA(x)x = 2·area.
        for (level, degree) in [(1usize, 1usize), (1, 2), (0, 3)] {
            let (mesh, pos, quad) = icosphere_assembler(level, degree);
            let asm = Assembler::new(&mesh, quad).unwrap();
            let a = asm.stiffness(&pos).unwrap();
            let area = asm.area(&pos).unwrap();
            let form = a.quad_form(&pos, &pos);
            assert!(
                (form - 2.0 * area).abs() < 1e-11 * area,
                "k={degree} level={level}: {form} vs {}",
                2.0 * area
            );
        }
    }

    #[test]
    fn apply_stiffness_matches_explicit_product() {
        let (mesh, pos, quad) = icosphere_assembler(1, 2);
        let asm = Assembler::new(&mesh, quad).unwrap();
        let direct = asm.apply_stiffness(&pos).unwrap();
        let product = asm.stiffness(&pos).unwrap().apply(&pos);
        let scale = product.max_norm();
        assert!(direct.max_distance(&product) <= 1e-13 * scale);

        // Left-multiplying by the constant vector annihilates the product.
        let ones = NodalVector::ones(mesh.node_count());
        let total = ones.dot(&direct);
        assert!(total.abs() <= 1e-11 * scale * mesh.node_count() as f64);
    }

    #[test]
    fn stiffness_action_scaling_law() {
        // A(λx)(λx) = λ·A(x)x: gradients scale 1/λ, measure λ².
        let (mesh, pos, quad) = icosphere_assembler(1, 1);
        let asm = Assembler::new(&mesh, quad).unwrap();
        let base = asm.apply_stiffness(&pos).unwrap();
        let lambda = 1.7;
        let scaled = asm.apply_stiffness(&pos.scaled(lambda)).unwrap();
        let expect = base.scaled(lambda);
        assert!(scaled.max_distance(&expect) <= 1e-12 * expect.max_norm());
    }

    #[test]
    fn quadrature_refinement_stability() {
        // Raising the exactness beyond the default changes entries only
        // at the level of the curved geometry's quadrature error, which
        // the 2k+2 default keeps under the 1e-8 residual budget of the
        // identity checks (measured: ~4e-9 at k=2, ~1.1e-8 at k=3 on
        // level 4, relative to the matrix inf-norm).
        for (degree, tol) in [(2usize, 5e-8), (3, 5e-8)] {
            let (mesh, pos) = build_icosphere::<f64>(4, degree, 1.0).unwrap();
            let quad_lo = make_quadrature(2 * degree + 2).unwrap();
            let quad_hi = make_quadrature(2 * degree + 6).unwrap();
            let m_lo = mass_matrix(&mesh, &pos, &quad_lo).unwrap();
            let m_hi = mass_matrix(&mesh, &pos, &quad_hi).unwrap();
            let a_lo = stiffness_matrix(&mesh, &pos, &quad_lo).unwrap();
            let a_hi = stiffness_matrix(&mesh, &pos, &quad_hi).unwrap();
            for (lo, hi) in [(&m_lo, &m_hi), (&a_lo, &a_hi)] {
                let scale = lo.inf_norm();
                let mut worst = 0.0_f64;
                for (a, b) in lo.values().iter().zip(hi.values().iter()) {
                    worst = worst.max((a - b).abs());
                }
                assert!(
                    worst <= tol * scale,
                    "k={degree}: entry drift {worst:.3e} vs {:.3e}",
                    tol * scale
                );
            }
        }
    }

    #[test]
    fn norms_of_simple_fields() {
        let (mesh, pos, quad) = icosphere_assembler(1, 1);
        let asm = Assembler::new(&mesh, quad).unwrap();
        let zero = NodalVector::zeros(mesh.node_count());
        assert_eq!(asm.norm_m(&pos, &zero).unwrap(), 0.0);
        assert_eq!(asm.seminorm_a(&pos, &zero).unwrap(), 0.0);

        let ones = NodalVector::ones(mesh.node_count());
        let area = asm.area(&pos).unwrap();
        // |𝟙|² = 3 per point, so the M-norm of the all-ones field is √(3·area).
        let nm = asm.norm_m(&pos, &ones).unwrap();
        assert!((nm - (3.0 * area).sqrt()).abs() < 1e-12);
        assert!(asm.seminorm_a(&pos, &ones).unwrap() < 1e-11);
    }

    #[test]
    fn gradient_energy_is_rotation_invariant() {
        let (mesh, pos, quad) = icosphere_assembler(1, 2);
        let asm = Assembler::new(&mesh, quad).unwrap();
        let field = NodalVector::from_fn(mesh.node_count(), |i| {
            let p = pos[i];
            [p[0] * p[0], p[1] * p[2], p[0] - p[2]]
        });
        let before = asm.seminorm_a(&pos, &field).unwrap();
        let rot = crate::linalg::rotation3(&[0.3, -1.0, 0.8], 1.234_f64);
        let rpos = NodalVector(
            pos.iter()
                .map(|p| crate::linalg::mat3_vec(&rot, p))
                .collect(),
        );
        // Same coefficients on the rigidly rotated surface.
        let after = asm.seminorm_a(&rpos, &field).unwrap();
        assert!(
            (before - after).abs() <= 1e-12 * before,
            "{before} vs {after}"
        );
    }

    #[test]
    fn locality_of_sparsity() {
        let (mesh, _, _) = icosphere_assembler(1, 2);
        let pattern = MatrixPattern::from_mesh(&mesh);
        // Entry (i, j) exists only when i and j share an element.
        let mut share = std::collections::HashSet::new();
        for el in mesh.elements() {
            for &i in el {
                for &j in el {
                    share.insert((i, j));
                }
            }
        }
        for i in 0..pattern.n {
            for off in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                assert!(share.contains(&(i, pattern.col_idx[off])));
            }
        }
    }

    #[test]
    fn intermediate_nodal_endpoints() {
        let x_star = NodalVector(vec![[1.0, 2.0, 3.0]]);
        let x = NodalVector(vec![[4.0, 5.0, 6.0]]);
        assert_eq!(intermediate_nodal(&x_star, &x, 0.0), x_star);
        assert_eq!(intermediate_nodal(&x_star, &x, 1.0), x);
        let half = intermediate_nodal(&NodalVector::zeros(1), &x, 0.5);
        assert_eq!(half[0], [2.0, 2.5, 3.0]);
    }

    proptest! {
        #[test]
        fn intermediate_nodal_is_affine(theta in 0.0_f64..=1.0) {
            let x_star = NodalVector(vec![[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]]);
            let x = NodalVector(vec![[2.0, 0.0, 1.5], [-1.0, 1.0, 4.0]]);
            let xt = intermediate_nodal(&x_star, &x, theta);
            // x^θ − x* = θ (x − x*) exactly for the affine combination.
            let lhs = xt.sub(&x_star);
            let rhs = x.sub(&x_star).scaled(theta);
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                for c in 0..3 {
                    prop_assert!((a[c] - b[c]).abs() <= 1e-15 * (1.0 + b[c].abs()));
                }
            }
        }
    }
}
