//! Degree-k curved triangulations of the sphere.
//!
//! The generator is the projected icosphere family: the icosahedron is
//! subdivided `level` times with radial projection of new vertices, then
//! degree-k Lagrange nodes are inserted on the equispaced barycentric
//! lattice and projected radially, so every node lies exactly on the
//! sphere. The family is shape-regular and quasi-uniform across levels.
//!
//! Global node numbering: corner vertices first, then one block of `k − 1`
//! nodes per undirected edge (ordered from the smaller vertex index), then
//! one interior block per element.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::femspace::{self, lattice_nodes, ReferenceElement};
use crate::linalg::{self, Mat3, Vec3};
use crate::nodal::NodalVector;
use crate::scalar::Real;

/// Largest supported refinement level.
pub const MAX_LEVEL: usize = 8;
/// Largest supported element degree (matches the reference-element cap).
pub const MAX_DEGREE: usize = femspace::MAX_DEGREE;

/// Connectivity and reference-element layout of a degree-k closed surface
/// triangulation. Coordinates live in a separate [`NodalVector`].
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    degree: usize,
    level: usize,
    node_count: usize,
    vertex_count: usize,
    elements: Vec<Vec<usize>>,
    reference_layout: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of corner vertices; vertices occupy node indices `[0, V)`.
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }

    pub fn nodes_per_element(&self) -> usize {
        self.reference_layout.len()
    }

    /// Barycentric numerators (over `degree`) of the Lagrange nodes on the
    /// reference triangle, in local ordering.
    pub fn reference_layout(&self) -> &[[usize; 3]] {
        &self.reference_layout
    }

    /// Corner node indices of an element.
    pub fn corners(&self, e: usize) -> [usize; 3] {
        let el = &self.elements[e];
        [el[0], el[1], el[2]]
    }

    /// Rebuilds a mesh from raw connectivity, recomputing the vertex count
    /// and validating the structural invariants.
    pub fn from_parts(degree: usize, level: usize, elements: Vec<Vec<usize>>) -> Result<Self> {
        if degree < 1 || degree > MAX_DEGREE {
            return Err(Error::Capacity {
                what: "mesh degree",
                requested: degree,
                cap: MAX_DEGREE,
            });
        }
        let npe = femspace::node_count(degree);
        let mut node_count = 0;
        let mut vertex_count = 0;
        for (e, el) in elements.iter().enumerate() {
            if el.len() != npe {
                return Err(Error::Precondition(format!(
                    "element {e} has {} nodes, expected {npe} for degree {degree}",
                    el.len()
                )));
            }
            for &i in el.iter() {
                node_count = node_count.max(i + 1);
            }
            for &i in &el[..3] {
                vertex_count = vertex_count.max(i + 1);
            }
        }
        let mesh = SurfaceMesh {
            degree,
            level,
            node_count,
            vertex_count,
            elements,
            reference_layout: lattice_nodes(degree),
        };
        mesh.check_structure()?;
        Ok(mesh)
    }

    /// Verifies conformity, closedness, consistent orientation and sphere
    /// topology (Euler characteristic 2 of the vertex-level complex).
    pub fn check_structure(&self) -> Result<()> {
        let mut referenced = vec![false; self.node_count];
        for (e, el) in self.elements.iter().enumerate() {
            for &i in el {
                if i >= self.node_count {
                    return Err(Error::Precondition(format!(
                        "element {e} references node {i} out of range {}",
                        self.node_count
                    )));
                }
                referenced[i] = true;
            }
            for &c in &el[..3] {
                if c >= self.vertex_count {
                    return Err(Error::Precondition(format!(
                        "element {e} corner {c} outside the vertex range {}",
                        self.vertex_count
                    )));
                }
            }
        }
        if let Some(idle) = referenced.iter().position(|r| !r) {
            return Err(Error::Precondition(format!(
                "node {idle} is not referenced by any element"
            )));
        }

        // Directed corner edges must be unique (consistent orientation) and
        // each undirected edge must belong to exactly two elements.
        let k = self.degree;
        let mut directed: HashMap<(usize, usize), (usize, Vec<usize>)> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            let c = [el[0], el[1], el[2]];
            for (le, (a, b)) in [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])]
                .into_iter()
                .enumerate()
            {
                let interior: Vec<usize> = (0..k.saturating_sub(1))
                    .map(|i| el[3 + le * (k - 1) + i])
                    .collect();
                if directed.insert((a, b), (e, interior)).is_some() {
                    return Err(Error::Precondition(format!(
                        "directed edge ({a},{b}) appears twice: orientation inconsistent"
                    )));
                }
            }
        }
        let mut undirected = 0usize;
        for (&(a, b), (_, fwd)) in directed.iter() {
            if a < b {
                undirected += 1;
                match directed.get(&(b, a)) {
                    None => {
                        return Err(Error::Precondition(format!(
                            "edge ({a},{b}) has no oppositely oriented partner: mesh not closed"
                        )))
                    }
                    Some((_, rev)) => {
                        let mut rev = rev.clone();
                        rev.reverse();
                        if *fwd != rev {
                            return Err(Error::Precondition(format!(
                                "edge ({a},{b}) carries mismatched node sequences"
                            )));
                        }
                    }
                }
            }
        }
        let v = self.vertex_count as i64;
        let e = undirected as i64;
        let f = self.elements.len() as i64;
        if v - e + f != 2 {
            return Err(Error::Precondition(format!(
                "Euler characteristic {} != 2 (V={v}, E={e}, F={f})",
                v - e + f
            )));
        }
        Ok(())
    }

    /// Gathers the positions of one element's nodes.
    pub fn gather<T: Real>(&self, e: usize, positions: &NodalVector<T>) -> Vec<Vec3<T>> {
        self.elements[e].iter().map(|&i| positions[i]).collect()
    }
}

/// JSON schema for a mesh together with nodal positions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshFile<T> {
    pub degree: usize,
    pub level: usize,
    pub nodes: Vec<Vec3<T>>,
    pub elements: Vec<Vec<usize>>,
}

impl<T: Real> MeshFile<T> {
    pub fn pack(mesh: &SurfaceMesh, positions: &NodalVector<T>) -> Self {
        MeshFile {
            degree: mesh.degree,
            level: mesh.level,
            nodes: positions.0.clone(),
            elements: mesh.elements.clone(),
        }
    }

    pub fn unpack(self) -> Result<(SurfaceMesh, NodalVector<T>)> {
        let mesh = SurfaceMesh::from_parts(self.degree, self.level, self.elements)?;
        if self.nodes.len() != mesh.node_count() {
            return Err(Error::Precondition(format!(
                "{} nodes in file, connectivity references {}",
                self.nodes.len(),
                mesh.node_count()
            )));
        }
        Ok((mesh, NodalVector(self.nodes)))
    }
}

/// Icosahedron with unit circumradius, outward-oriented faces.
fn icosahedron<T: Real>() -> (Vec<Vec3<T>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let norm = (1.0 + phi * phi).sqrt();
    let vertices = raw
        .iter()
        .map(|v| [T::lit(v[0] / norm), T::lit(v[1] / norm), T::lit(v[2] / norm)])
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn project_to_radius<T: Real>(p: &Vec3<T>, radius: T) -> Result<Vec3<T>> {
    let n = linalg::norm3(p);
    if n == T::zero() {
        return Err(Error::UndefinedLift);
    }
    Ok(linalg::scale3(p, radius / n))
}

/// One 4-way vertex-level subdivision; new vertices projected if a radius
/// is given.
fn subdivide_vertex_mesh<T: Real>(
    vertices: &[Vec3<T>],
    faces: &[[usize; 3]],
    project_radius: Option<T>,
) -> Result<(Vec<Vec3<T>>, Vec<[usize; 3]>)> {
    let mut verts = vertices.to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_faces = Vec::with_capacity(faces.len() * 4);
    let half = T::lit(0.5);
    for &[a, b, c] in faces {
        let mut mid = |u: usize, v: usize, verts: &mut Vec<Vec3<T>>| -> Result<usize> {
            let key = (u.min(v), u.max(v));
            if let Some(&i) = midpoint.get(&key) {
                return Ok(i);
            }
            let mut p = linalg::scale3(&linalg::add3(&verts[key.0], &verts[key.1]), half);
            if let Some(r) = project_radius {
                p = project_to_radius(&p, r)?;
            }
            verts.push(p);
            let idx = verts.len() - 1;
            midpoint.insert(key, idx);
            Ok(idx)
        };
        let mab = mid(a, b, &mut verts)?;
        let mbc = mid(b, c, &mut verts)?;
        let mca = mid(c, a, &mut verts)?;
        new_faces.push([a, mab, mca]);
        new_faces.push([b, mbc, mab]);
        new_faces.push([c, mca, mbc]);
        new_faces.push([mab, mbc, mca]);
    }
    Ok((verts, new_faces))
}

/// Assigns global indices to the degree-k Lagrange nodes over a vertex
/// mesh: vertices, then edge blocks, then interior blocks.
fn attach_nodes(
    faces: &[[usize; 3]],
    vertex_count: usize,
    degree: usize,
) -> (Vec<Vec<usize>>, usize) {
    let k = degree;
    let per_interior = if k >= 2 { (k - 1) * (k - 2) / 2 } else { 0 };
    let mut edge_base: HashMap<(usize, usize), usize> = HashMap::new();
    let mut next = vertex_count;
    let mut elements = Vec::with_capacity(faces.len());
    for &[v0, v1, v2] in faces {
        let mut el = Vec::with_capacity(femspace::node_count(k));
        el.push(v0);
        el.push(v1);
        el.push(v2);
        for (a, b) in [(v0, v1), (v1, v2), (v2, v0)] {
            let key = (a.min(b), a.max(b));
            let base = *edge_base.entry(key).or_insert_with(|| {
                let base = next;
                next += k - 1;
                base
            });
            for i in 1..k {
                let step_from_lo = if a == key.0 { i } else { k - i };
                el.push(base + step_from_lo - 1);
            }
        }
        for t in 0..per_interior {
            el.push(next + t);
        }
        next += per_interior;
        elements.push(el);
    }
    (elements, next)
}

/// Builds the projected icosphere of the given refinement level and element
/// degree, with every node exactly on the sphere of the given radius.
pub fn build_icosphere<T: Real>(
    level: usize,
    degree: usize,
    radius: T,
) -> Result<(SurfaceMesh, NodalVector<T>)> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::Precondition(format!(
            "icosphere radius must be positive, got {radius}"
        )));
    }
    if level > MAX_LEVEL {
        return Err(Error::Capacity {
            what: "icosphere level",
            requested: level,
            cap: MAX_LEVEL,
        });
    }
    if degree < 1 || degree > MAX_DEGREE {
        return Err(Error::Capacity {
            what: "icosphere degree",
            requested: degree,
            cap: MAX_DEGREE,
        });
    }
    let (mut verts, mut faces) = icosahedron::<T>();
    for v in verts.iter_mut() {
        *v = linalg::scale3(v, radius);
    }
    for _ in 0..level {
        let (v, f) = subdivide_vertex_mesh(&verts, &faces, Some(radius))?;
        verts = v;
        faces = f;
    }
    let vertex_count = verts.len();
    let (elements, node_count) = attach_nodes(&faces, vertex_count, degree);
    let lattice = lattice_nodes(degree);
    let inv_k = T::one() / T::from_usize(degree).unwrap();

    let mut positions = vec![None::<Vec3<T>>; node_count];
    for (f, el) in elements.iter().enumerate() {
        let [a, b, c] = faces[f];
        let (pa, pb, pc) = (verts[a], verts[b], verts[c]);
        for (local, &gid) in el.iter().enumerate() {
            if positions[gid].is_some() {
                continue;
            }
            let tri = lattice[local];
            let w0 = T::from_usize(tri[0]).unwrap() * inv_k;
            let w1 = T::from_usize(tri[1]).unwrap() * inv_k;
            let w2 = T::from_usize(tri[2]).unwrap() * inv_k;
            let mut p = linalg::scale3(&pa, w0);
            linalg::axpy3(&mut p, w1, &pb);
            linalg::axpy3(&mut p, w2, &pc);
            positions[gid] = Some(project_to_radius(&p, radius)?);
        }
    }
    let positions = NodalVector(positions.into_iter().map(|p| p.unwrap()).collect());
    let mesh = SurfaceMesh {
        degree,
        level,
        node_count,
        vertex_count,
        elements,
        reference_layout: lattice,
    };
    debug_assert!(mesh.check_structure().is_ok());
    Ok((mesh, positions))
}

/// Splits every element into four, evaluating new node positions through
/// the parent's curved geometric map (old node coordinates are copied
/// bit-for-bit). New nodes are radially projected when `project_radius` is
/// given.
pub fn refine<T: Real>(
    mesh: &SurfaceMesh,
    positions: &NodalVector<T>,
    project_radius: Option<T>,
) -> Result<(SurfaceMesh, NodalVector<T>)> {
    if positions.len() != mesh.node_count {
        return Err(Error::Precondition(format!(
            "{} positions for a mesh with {} nodes",
            positions.len(),
            mesh.node_count
        )));
    }
    let k = mesh.degree;
    let reference = ReferenceElement::<T>::new(k)?;

    for e in 0..mesh.element_count() {
        let [a, b, c] = mesh.corners(e);
        let (pa, pb, pc) = (positions[a], positions[b], positions[c]);
        let cross = linalg::cross3(&linalg::sub3(&pb, &pa), &linalg::sub3(&pc, &pa));
        let area2 = linalg::norm3(&cross);
        let diam = linalg::dist3(&pa, &pb)
            .max(linalg::dist3(&pb, &pc))
            .max(linalg::dist3(&pc, &pa));
        if area2 <= T::lit(1e-14) * diam * diam {
            return Err(Error::Geometry {
                element: e,
                detail: "zero-area parent element".into(),
            });
        }
    }

    // Parent vertex mesh; vertices occupy indices [0, V) by construction.
    let parent_faces: Vec<[usize; 3]> =
        (0..mesh.element_count()).map(|e| mesh.corners(e)).collect();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut child_vertex_count = mesh.vertex_count;
    let mut child_faces: Vec<[usize; 3]> = Vec::with_capacity(parent_faces.len() * 4);
    // Corner barycentric numerators of each child, over denominator 2.
    const CHILD_CORNERS: [[[usize; 3]; 3]; 4] = [
        [[2, 0, 0], [1, 1, 0], [1, 0, 1]],
        [[0, 2, 0], [0, 1, 1], [1, 1, 0]],
        [[0, 0, 2], [1, 0, 1], [0, 1, 1]],
        [[1, 1, 0], [0, 1, 1], [1, 0, 1]],
    ];
    for &[a, b, c] in &parent_faces {
        let mut mid = |u: usize, v: usize| -> usize {
            let key = (u.min(v), u.max(v));
            *midpoint.entry(key).or_insert_with(|| {
                let idx = child_vertex_count;
                child_vertex_count += 1;
                idx
            })
        };
        let mab = mid(a, b);
        let mbc = mid(b, c);
        let mca = mid(c, a);
        child_faces.push([a, mab, mca]);
        child_faces.push([b, mbc, mab]);
        child_faces.push([c, mca, mbc]);
        child_faces.push([mab, mbc, mca]);
    }
    let (child_elements, child_node_count) = attach_nodes(&child_faces, child_vertex_count, k);

    let lattice = lattice_nodes(k);
    let lattice_index: HashMap<[usize; 3], usize> =
        lattice.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    // Parent barycentric numerators (over 2k) of each child-local node, and
    // tabulated parent basis values where an evaluation is required.
    let two_k = 2 * k;
    let inv_2k = T::one() / T::from_usize(two_k).unwrap();
    let mut site_bary: Vec<Vec<[usize; 3]>> = Vec::with_capacity(4);
    let mut site_basis: Vec<Vec<Option<Vec<T>>>> = Vec::with_capacity(4);
    for corners in CHILD_CORNERS.iter() {
        let mut barys = Vec::with_capacity(lattice.len());
        let mut bases = Vec::with_capacity(lattice.len());
        for tri in &lattice {
            let num = [
                tri[0] * corners[0][0] + tri[1] * corners[1][0] + tri[2] * corners[2][0],
                tri[0] * corners[0][1] + tri[1] * corners[1][1] + tri[2] * corners[2][1],
                tri[0] * corners[0][2] + tri[1] * corners[1][2] + tri[2] * corners[2][2],
            ];
            debug_assert_eq!(num[0] + num[1] + num[2], two_k);
            let copies_parent = num.iter().all(|&x| x % 2 == 0);
            if copies_parent {
                bases.push(None);
            } else {
                let bary = [
                    T::from_usize(num[0]).unwrap() * inv_2k,
                    T::from_usize(num[1]).unwrap() * inv_2k,
                    T::from_usize(num[2]).unwrap() * inv_2k,
                ];
                bases.push(Some(reference.eval(&bary)));
            }
            barys.push(num);
        }
        site_bary.push(barys);
        site_basis.push(bases);
    }

    let mut new_positions = vec![None::<Vec3<T>>; child_node_count];
    for (ce, el) in child_elements.iter().enumerate() {
        let parent = ce / 4;
        let child = ce % 4;
        let parent_nodes = mesh.element(parent);
        for (local, &gid) in el.iter().enumerate() {
            if new_positions[gid].is_some() {
                continue;
            }
            let num = site_bary[child][local];
            let p = match &site_basis[child][local] {
                None => {
                    let parent_local = lattice_index[&[num[0] / 2, num[1] / 2, num[2] / 2]];
                    positions[parent_nodes[parent_local]]
                }
                Some(basis) => {
                    let mut p = [T::zero(); 3];
                    for (i, &pn) in parent_nodes.iter().enumerate() {
                        linalg::axpy3(&mut p, basis[i], &positions[pn]);
                    }
                    match project_radius {
                        Some(r) => project_to_radius(&p, r)?,
                        None => p,
                    }
                }
            };
            new_positions[gid] = Some(p);
        }
    }

    let refined = SurfaceMesh {
        degree: k,
        level: mesh.level + 1,
        node_count: child_node_count,
        vertex_count: child_vertex_count,
        elements: child_elements,
        reference_layout: lattice,
    };
    let new_positions = NodalVector(new_positions.into_iter().map(|p| p.unwrap()).collect());
    Ok((refined, new_positions))
}

/// Element-size and shape statistics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeshStats<T> {
    /// Maximum element diameter (over corner-node pairs).
    pub h_max: T,
    /// Minimum element diameter.
    pub h_min: T,
    /// Minimum over elements of inradius/diameter of the corner triangle.
    pub quality: T,
    /// Set when some element has (numerically) collinear corners.
    pub degenerate: bool,
}

/// Mesh size `h`, minimum element size, and the shape-quality indicator
/// used to detect degeneration during flows.
pub fn mesh_size<T: Real>(mesh: &SurfaceMesh, positions: &NodalVector<T>) -> Result<MeshStats<T>> {
    if positions.len() != mesh.node_count {
        return Err(Error::Precondition(format!(
            "{} positions for a mesh with {} nodes",
            positions.len(),
            mesh.node_count
        )));
    }
    if !positions.all_finite() {
        return Err(Error::Precondition("non-finite node positions".into()));
    }
    let mut h_max = T::zero();
    let mut h_min = T::infinity();
    let mut quality = T::infinity();
    let mut degenerate = false;
    for e in 0..mesh.element_count() {
        let [a, b, c] = mesh.corners(e);
        let (pa, pb, pc) = (positions[a], positions[b], positions[c]);
        let d01 = linalg::dist3(&pa, &pb);
        let d12 = linalg::dist3(&pb, &pc);
        let d20 = linalg::dist3(&pc, &pa);
        let diam = d01.max(d12).max(d20);
        h_max = h_max.max(diam);
        h_min = h_min.min(diam);
        let cross = linalg::cross3(&linalg::sub3(&pb, &pa), &linalg::sub3(&pc, &pa));
        let area = T::lit(0.5) * linalg::norm3(&cross);
        let q = if area <= T::lit(1e-14) * diam * diam || diam == T::zero() {
            degenerate = true;
            T::zero()
        } else {
            let s = T::lit(0.5) * (d01 + d12 + d20);
            (area / s) / diam
        };
        quality = quality.min(q);
    }
    Ok(MeshStats {
        h_max,
        h_min,
        quality,
        degenerate,
    })
}

/// The 60 rotations of the icosahedral group, generated by closure from a
/// five-fold vertex rotation and a three-fold face rotation.
pub fn icosahedral_rotation_group() -> Vec<Mat3<f64>> {
    let (verts, faces) = icosahedron::<f64>();
    let v_axis = verts[0];
    let f = faces[0];
    let centroid = linalg::scale3(
        &linalg::add3(&linalg::add3(&verts[f[0]], &verts[f[1]]), &verts[f[2]]),
        1.0 / 3.0,
    );
    let g5 = linalg::rotation3(&v_axis, 2.0 * std::f64::consts::PI / 5.0);
    let g3 = linalg::rotation3(&centroid, 2.0 * std::f64::consts::PI / 3.0);

    let close_enough = |a: &Mat3<f64>, b: &Mat3<f64>| {
        let mut d = 0.0_f64;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((a[r][c] - b[r][c]).abs());
            }
        }
        d < 1e-8
    };
    // Gram-Schmidt re-orthonormalization keeps products from drifting.
    let orthonormalize = |m: &Mat3<f64>| -> Mat3<f64> {
        let mut r0 = m[0];
        linalg::normalize3(&mut r0);
        let mut r1 = m[1];
        let d = linalg::dot3(&r1, &r0);
        linalg::axpy3(&mut r1, -d, &r0);
        linalg::normalize3(&mut r1);
        let r2 = linalg::cross3(&r0, &r1);
        [r0, r1, r2]
    };

    let mut group: Vec<Mat3<f64>> = vec![linalg::mat3_identity()];
    let mut frontier = vec![g5, g3];
    while let Some(m) = frontier.pop() {
        if group.iter().any(|g| close_enough(g, &m)) {
            continue;
        }
        group.push(m);
        for g in group.clone() {
            frontier.push(orthonormalize(&linalg::mat3_mul(&g, &m)));
            frontier.push(orthonormalize(&linalg::mat3_mul(&m, &g)));
        }
    }
    assert_eq!(group.len(), 60, "icosahedral closure must have 60 rotations");
    group
}

/// Partitions the nodes of an icosphere-family mesh into orbits of the
/// icosahedral rotation group. Two nodes share an orbit exactly when some
/// group rotation maps one position onto the other.
pub fn icosahedral_orbits<T: Real>(
    mesh: &SurfaceMesh,
    positions: &NodalVector<T>,
) -> Result<Vec<usize>> {
    let n = mesh.node_count;
    if positions.len() != n {
        return Err(Error::Precondition("positions/mesh size mismatch".into()));
    }
    let pts: Vec<[f64; 3]> = positions
        .iter()
        .map(|p| [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()])
        .collect();
    let scale = pts
        .iter()
        .map(|p| linalg::norm3(p))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let tol = 1e-8 * scale;

    // Spatial hash with cell size = tol; query scans the adjacent cells.
    let key = |p: &[f64; 3]| -> (i64, i64, i64) {
        (
            (p[0] / tol).floor() as i64,
            (p[1] / tol).floor() as i64,
            (p[2] / tol).floor() as i64,
        )
    };
    let mut grid: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let locate = |p: &[f64; 3]| -> Option<usize> {
        let (kx, ky, kz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cands) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &i in cands {
                            if linalg::dist3(&pts[i], p) <= tol {
                                return Some(i);
                            }
                        }
                    }
                }
            }
        }
        None
    };

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for rot in icosahedral_rotation_group() {
        for i in 0..n {
            let image = linalg::mat3_vec(&rot, &pts[i]);
            let j = locate(&image).ok_or_else(|| {
                Error::Precondition(format!(
                    "node {i} has no partner under an icosahedral rotation: \
                     node set is not icosahedrally symmetric"
                ))
            })?;
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
            }
        }
    }
    let mut relabel: HashMap<usize, usize> = HashMap::new();
    let mut orbit = vec![0usize; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        let next = relabel.len();
        orbit[i] = *relabel.entry(root).or_insert(next);
    }
    Ok(orbit)
}
