//! Small fixed-size vector/matrix helpers used by the geometry kernels.
//!
//! Everything works on plain arrays; 3x3 matrices are row-major.

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Mat2<T> = [[T; 2]; 2];

#[inline]
pub fn dot3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub fn cross3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy3<T: Real>(y: &mut Vec3<T>, alpha: T, x: &Vec3<T>) {
    y[0] = y[0] + alpha * x[0];
    y[1] = y[1] + alpha * x[1];
    y[2] = y[2] + alpha * x[2];
}

#[inline]
pub fn dist3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    norm3(&sub3(a, b))
}

/// Normalizes in place; returns the original norm.
pub fn normalize3<T: Real>(a: &mut Vec3<T>) -> T {
    let n = norm3(a);
    if n > T::zero() {
        let inv = T::one() / n;
        a[0] = a[0] * inv;
        a[1] = a[1] * inv;
        a[2] = a[2] * inv;
    }
    n
}

#[inline]
pub fn mat3_zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

#[inline]
pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let mut m = mat3_zero();
    m[0][0] = T::one();
    m[1][1] = T::one();
    m[2][2] = T::one();
    m
}

#[inline]
pub fn mat3_trace<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] + m[1][1] + m[2][2]
}

#[inline]
pub fn mat3_transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut t = mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            t[c][r] = m[r][c];
        }
    }
    t
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            let mut s = T::zero();
            for k in 0..3 {
                s = s + a[r][k] * b[k][c];
            }
            out[r][c] = s;
        }
    }
    out
}

#[inline]
pub fn mat3_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn mat3_frobenius<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    let mut s = T::zero();
    for r in 0..3 {
        for c in 0..3 {
            s = s + a[r][c] * b[r][c];
        }
    }
    s
}

#[inline]
pub fn mat3_frobenius_norm<T: Real>(a: &Mat3<T>) -> T {
    mat3_frobenius(a, a).sqrt()
}

/// Outer product `a bᵀ`.
pub fn outer3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Mat3<T> {
    let mut m = mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = a[r] * b[c];
        }
    }
    m
}

pub fn mat3_add_scaled<T: Real>(a: &Mat3<T>, b: &Mat3<T>, beta: T) -> Mat3<T> {
    let mut m = mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = a[r][c] + beta * b[r][c];
        }
    }
    m
}

#[inline]
pub fn det2<T: Real>(g: &Mat2<T>) -> T {
    g[0][0] * g[1][1] - g[0][1] * g[1][0]
}

/// Inverse of a 2x2 matrix; caller guarantees a nonzero determinant.
pub fn inv2<T: Real>(g: &Mat2<T>) -> Mat2<T> {
    let d = det2(g);
    let inv = T::one() / d;
    [
        [g[1][1] * inv, -g[0][1] * inv],
        [-g[1][0] * inv, g[0][0] * inv],
    ]
}

/// Rotation matrix about `axis` (normalized internally) by `angle` radians.
pub fn rotation3<T: Real>(axis: &Vec3<T>, angle: T) -> Mat3<T> {
    let mut u = *axis;
    normalize3(&mut u);
    let c = angle.cos();
    let s = angle.sin();
    let omc = T::one() - c;
    let mut m = mat3_zero();
    for r in 0..3 {
        for cidx in 0..3 {
            m[r][cidx] = omc * u[r] * u[cidx];
        }
        m[r][r] = m[r][r] + c;
    }
    m[0][1] = m[0][1] - s * u[2];
    m[0][2] = m[0][2] + s * u[1];
    m[1][0] = m[1][0] + s * u[2];
    m[1][2] = m[1][2] - s * u[0];
    m[2][0] = m[2][0] - s * u[1];
    m[2][1] = m[2][1] + s * u[0];
    m
}

/// Inverts a small dense matrix by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` on a (numerically) singular input.
pub fn invert_dense<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut work: Vec<Vec<T>> = Vec::with_capacity(n);
    for (i, row) in a.iter().enumerate() {
        debug_assert_eq!(row.len(), n);
        let mut r = Vec::with_capacity(2 * n);
        r.extend_from_slice(row);
        for j in 0..n {
            r.push(if i == j { T::one() } else { T::zero() });
        }
        work.push(r);
    }
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if work[row][col].abs() > work[pivot][col].abs() {
                pivot = row;
            }
        }
        if work[pivot][col].abs() == T::zero() {
            return None;
        }
        work.swap(col, pivot);
        let inv_p = T::one() / work[col][col];
        for j in col..(2 * n) {
            work[col][j] = work[col][j] * inv_p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = work[row][col];
            if factor == T::zero() {
                continue;
            }
            for j in col..(2 * n) {
                let upd = work[col][j];
                work[row][j] = work[row][j] - factor * upd;
            }
        }
    }
    Some(work.into_iter().map(|row| row[n..].to_vec()).collect())
}
