//! Fixed-size vector and rigid-transform helpers over [`Real`].
//!
//! Matrices are row-major `[[T; 3]; 3]`.

use crate::real::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    T::dot(&a, &b)
}

#[inline]
pub fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3<T: Real>(a: Vec3<T>) -> T {
    T::norm(&a)
}

pub fn lift3<T: Real>(a: [f64; 3]) -> Vec3<T> {
    [T::lit(a[0]), T::lit(a[1]), T::lit(a[2])]
}

pub fn value3<T: Real>(a: Vec3<T>) -> [f64; 3] {
    [a[0].value(), a[1].value(), a[2].value()]
}

pub fn identity3<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

#[inline]
pub fn mat_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [T::dot(&m[0], &v), T::dot(&m[1], &v), T::dot(&m[2], &v)]
}

pub fn transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let bt = transpose(b);
    let mut out = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = T::dot(&a[r], &bt[c]);
        }
    }
    out
}

pub fn lift_mat<T: Real>(m: &Mat3<f64>) -> Mat3<T> {
    m.map(|row| row.map(T::lit))
}

pub fn value_mat<T: Real>(m: &Mat3<T>) -> Mat3<f64> {
    m.map(|row| row.map(|x| x.value()))
}

pub fn det3(m: &Mat3<f64>) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rotation about a unit axis by `angle` radians.
pub fn axis_angle(axis: [f64; 3], angle: f64) -> Mat3<f64> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rigid transform `p ↦ rot·p + trans`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid<T> {
    pub rot: Mat3<T>,
    pub trans: Vec3<T>,
}

impl<T: Real> Rigid<T> {
    pub fn identity() -> Self {
        Rigid {
            rot: identity3(),
            trans: [T::zero(); 3],
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        add3(mat_vec(&self.rot, p), self.trans)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rigid<T>) -> Rigid<T> {
        Rigid {
            rot: mat_mul(&self.rot, &other.rot),
            trans: self.apply(other.trans),
        }
    }

    pub fn inverse(&self) -> Rigid<T> {
        let rt = transpose(&self.rot);
        let t = mat_vec(&rt, self.trans);
        Rigid {
            rot: rt,
            trans: [-t[0], -t[1], -t[2]],
        }
    }
}

impl Rigid<f64> {
    pub fn lift<T: Real>(&self) -> Rigid<T> {
        Rigid {
            rot: lift_mat(&self.rot),
            trans: lift3(self.trans),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_angle_quarter_turn() {
        let r = axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let p = mat_vec(&r, [1.0, 0.0, 0.0]);
        assert!((p[0]).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        assert!((det3(&r) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rigid_inverse_roundtrip() {
        let g = Rigid {
            rot: axis_angle([1.0, 2.0, 3.0], 0.7),
            trans: [0.3, -1.0, 2.0],
        };
        let p = [0.5, 0.25, -4.0];
        let q = g.inverse().apply(g.apply(p));
        for k in 0..3 {
            assert!((q[k] - p[k]).abs() < 1e-12);
        }
    }
}
