//! Fixed-size real and complex linear algebra for 2x2, 3x3 and 4x4 matrices.
//!
//! Everything downstream runs on two small constant-coefficient structures:
//! the 4x4 fundamental system
//!
//! ```text
//! M = | 0    I   |        L = |  0  1 |
//!     | -S0  -B0 L |,         | -1  0 |,
//! ```
//!
//! whose eigenvalues mu solve det(mu^2 I + mu B0 L + S0) = 0, and the 3x3
//! periodic-coefficient system of the axisymmetric reduction. The module
//! provides exactly the kernels those need: determinants, products, a 4x4
//! matrix exponential (scaling and squaring with a [6/6] Pade approximant),
//! and a quartic eigensolver built from the characteristic polynomial
//! (Faddeev-LeVerrier) with closed-form roots refined by Newton polish.
//! There is deliberately no general-dimension linear algebra here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The four eigenvalues of a real 4x4 matrix, conjugation-closed.
pub type ComplexQuad = [Complex64; 4];

/// A real 2x2 matrix with entry (i, j) named `aij`.
///
/// When it holds a velocity-derivative matrix the layout is row = component,
/// column = differentiation direction: `a12` is dV_1/dx_2. The scalar
/// accessors [`Mat2::divergence`], [`Mat2::jacobian_det`] and
/// [`Mat2::vorticity`] are the single source of truth for the derived
/// quantities D, J and xi; every other module goes through them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    /// The rotation generator L = [[0, 1], [-1, 0]]; L^2 = -I and
    /// exp(-theta L) is the rotation by angle theta.
    pub const L: Mat2 = Mat2 {
        a11: 0.0,
        a12: 1.0,
        a21: -1.0,
        a22: 0.0,
    };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub const fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// Divergence of the velocity field this derivative matrix belongs to.
    pub fn divergence(&self) -> f64 {
        self.trace()
    }

    /// Jacobian determinant J of the velocity field.
    pub fn jacobian_det(&self) -> f64 {
        self.det()
    }

    /// Scalar vorticity xi = dV_2/dx_1 - dV_1/dx_2, so Rot v = (0, 0, xi).
    pub fn vorticity(&self) -> f64 {
        self.a21 - self.a12
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Largest entry magnitude; used for escape detection on Riccati states.
    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular {
                context: "2x2 inverse",
            });
        }
        Ok(Mat2::new(
            self.a22 / d,
            -self.a12 / d,
            -self.a21 / d,
            self.a11 / d,
        ))
    }
}

/// A real 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const fn zero() -> Self {
        Mat3 { m: [[0.0; 3]; 3] }
    }

    pub const fn identity() -> Self {
        Mat3 {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut r = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for (k, ok) in o.m.iter().enumerate() {
                    s += self.m[i][k] * ok[j];
                }
                r.m[i][j] = s;
            }
        }
        r
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (i, row) in self.m.iter().enumerate() {
            r[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
        r
    }
}

/// A real 4x4 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4 {
    pub m: [[f64; 4]; 4],
}

impl Mat4 {
    pub const fn zero() -> Self {
        Mat4 { m: [[0.0; 4]; 4] }
    }

    pub const fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 1.0;
        m[1][1] = 1.0;
        m[2][2] = 1.0;
        m[3][3] = 1.0;
        Mat4 { m }
    }

    /// Assemble from 2x2 blocks [[a, b], [c, d]].
    pub fn from_blocks(a: &Mat2, b: &Mat2, c: &Mat2, d: &Mat2) -> Mat4 {
        Mat4 {
            m: [
                [a.a11, a.a12, b.a11, b.a12],
                [a.a21, a.a22, b.a21, b.a22],
                [c.a11, c.a12, d.a11, d.a12],
                [c.a21, c.a22, d.a21, d.a22],
            ],
        }
    }

    /// Extract the 2x2 block with block-row `i` and block-column `j` (0 or 1).
    pub fn block(&self, i: usize, j: usize) -> Mat2 {
        let (r, c) = (2 * i, 2 * j);
        Mat2::new(
            self.m[r][c],
            self.m[r][c + 1],
            self.m[r + 1][c],
            self.m[r + 1][c + 1],
        )
    }

    pub fn add(&self, o: &Mat4) -> Mat4 {
        let mut r = *self;
        for i in 0..4 {
            for j in 0..4 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: f64) -> Mat4 {
        let mut r = *self;
        for row in r.m.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        r
    }

    pub fn mul(&self, o: &Mat4) -> Mat4 {
        let mut r = Mat4::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for (k, ok) in o.m.iter().enumerate() {
                    s += self.m[i][k] * ok[j];
                }
                r.m[i][j] = s;
            }
        }
        r
    }

    pub fn mul_vec(&self, v: [f64; 4]) -> [f64; 4] {
        let mut r = [0.0; 4];
        for (i, row) in self.m.iter().enumerate() {
            r[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
        r
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2] + self.m[3][3]
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.m
            .iter()
            .map(|row| row.iter().map(|e| e.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Determinant via LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let mut a = self.m;
        let mut det = 1.0;
        for k in 0..4 {
            let mut piv = k;
            for i in k + 1..4 {
                if a[i][k].abs() > a[piv][k].abs() {
                    piv = i;
                }
            }
            if piv != k {
                a.swap(piv, k);
                det = -det;
            }
            let p = a[k][k];
            if p == 0.0 {
                return 0.0;
            }
            det *= p;
            for i in k + 1..4 {
                let f = a[i][k] / p;
                for j in k..4 {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        det
    }
}

/// Solve A X = B for the 4x4 matrix X by Gaussian elimination with partial
/// pivoting.
pub fn solve4(a: &Mat4, b: &Mat4) -> Result<Mat4> {
    let mut aug = [[0.0; 8]; 4];
    for i in 0..4 {
        aug[i][..4].copy_from_slice(&a.m[i]);
        aug[i][4..].copy_from_slice(&b.m[i]);
    }
    for k in 0..4 {
        let mut piv = k;
        for i in k + 1..4 {
            if aug[i][k].abs() > aug[piv][k].abs() {
                piv = i;
            }
        }
        if aug[piv][k].abs() < 1e-300 {
            return Err(Error::Singular {
                context: "4x4 linear solve",
            });
        }
        aug.swap(piv, k);
        let p = aug[k][k];
        for j in k..8 {
            aug[k][j] /= p;
        }
        for i in 0..4 {
            if i != k {
                let f = aug[i][k];
                if f != 0.0 {
                    for j in k..8 {
                        aug[i][j] -= f * aug[k][j];
                    }
                }
            }
        }
    }
    let mut x = Mat4::zero();
    for i in 0..4 {
        x.m[i].copy_from_slice(&aug[i][4..]);
    }
    Ok(x)
}

/// Pade [6/6] numerator coefficients for exp, constant term first.
/// c_{k+1} = c_k (6-k) / ((12-k)(k+1)) scaled to integers.
const PADE6: [f64; 7] = [665280.0, 332640.0, 75600.0, 10080.0, 840.0, 42.0, 1.0];

/// Matrix exponential of `m * t` by scaling and squaring with a [6/6] Pade
/// approximant. The argument is scaled until its infinity norm is at most
/// one half, which keeps the approximant well inside its accuracy region;
/// the group property exp(A(t1+t2)) = exp(A t1) exp(A t2) holds to 1e-10 on
/// the scales this crate uses.
pub fn expm(m: &Mat4, t: f64) -> Result<Mat4> {
    let a = m.scale(t);
    let norm = a.norm_inf();
    if !norm.is_finite() {
        return Err(Error::InvalidParameter(
            "matrix exponential of a non-finite matrix".into(),
        ));
    }
    // 2^60 of headroom: beyond this exp overflows f64 for generic matrices.
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    if s > 60 {
        return Err(Error::ExpmOverflow { norm });
    }
    let a = a.scale(0.5f64.powi(s));

    let a2 = a.mul(&a);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);
    let id = Mat4::identity();
    // Odd part U = A (b1 I + b3 A^2 + b5 A^4), even part V.
    let u = a.mul(
        &id.scale(PADE6[1])
            .add(&a2.scale(PADE6[3]))
            .add(&a4.scale(PADE6[5])),
    );
    let v = id
        .scale(PADE6[0])
        .add(&a2.scale(PADE6[2]))
        .add(&a4.scale(PADE6[4]))
        .add(&a6.scale(PADE6[6]));
    let num = v.add(&u);
    let den = v.add(&u.scale(-1.0));
    let mut e = solve4(&den, &num)?;
    for _ in 0..s {
        e = e.mul(&e);
    }
    if e.m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::ExpmOverflow { norm });
    }
    Ok(e)
}

/// det(m - mu I) in complex arithmetic, for eigenvalue residual checks.
pub fn det4_shifted(m: &Mat4, mu: Complex64) -> Complex64 {
    let mut a = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = Complex64::new(m.m[i][j], 0.0);
        }
        a[i][i] -= mu;
    }
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..4 {
        let mut piv = k;
        for i in k + 1..4 {
            if a[i][k].norm_sqr() > a[piv][k].norm_sqr() {
                piv = i;
            }
        }
        if piv != k {
            a.swap(piv, k);
            det = -det;
        }
        let p = a[k][k];
        if p.norm_sqr() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        det *= p;
        for i in k + 1..4 {
            let f = a[i][k] / p;
            for j in k..4 {
                let akj = a[k][j];
                a[i][j] -= f * akj;
            }
        }
    }
    det
}

/// Largest real root of the monic cubic x^3 + a x^2 + b x + c.
///
/// Used by the quartic solver, whose resolvent cubic always has a real root.
fn cubic_largest_real_root(a: f64, b: f64, c: f64) -> f64 {
    // Depress with x = t - a/3.
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    if disc > 0.0 {
        // One real root; avoid cancellation by deriving the second cube root
        // from the product u v = -p/3.
        let sq = disc.sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = if u.abs() > 1e-300 {
            -p / (3.0 * u)
        } else {
            (-q / 2.0 - sq).cbrt()
        };
        u + v + shift
    } else {
        let s = (-p / 3.0).max(0.0).sqrt();
        if s < 1e-300 {
            return (-q).cbrt() + shift;
        }
        let arg = (-q / (2.0 * s * s * s)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        // cos(phi/3) is the largest of the three cosines.
        2.0 * s * (phi / 3.0).cos() + shift
    }
}

fn quadratic_roots(b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = b * b - c.scale(4.0);
    let sq = disc.sqrt();
    [(-b - sq) / 2.0, (-b + sq) / 2.0]
}

/// All four roots of the monic real quartic x^4 + c3 x^3 + c2 x^2 + c1 x + c0,
/// via Ferrari's factorization into two quadratics (biquadratic shortcut when
/// the depressed cubic term vanishes). Roots are unpolished; callers polish
/// against their own target polynomial.
pub fn quartic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> [Complex64; 4] {
    // Depress with x = y - c3/4.
    let sh = c3 / 4.0;
    let p = c2 - 3.0 * c3 * c3 / 8.0;
    let q = c1 - c3 * c2 / 2.0 + c3 * c3 * c3 / 8.0;
    let r = c0 - c3 * c1 / 4.0 + c3 * c3 * c2 / 16.0 - 3.0 * c3 * c3 * c3 * c3 / 256.0;

    let scale = 1.0 + p.abs().powf(1.5) + r.abs().powf(0.75);
    let ys: [Complex64; 4] = if q.abs() <= 1e-12 * scale {
        // Biquadratic: y^2 solves z^2 + p z + r = 0.
        let z = quadratic_roots(Complex64::new(p, 0.0), Complex64::new(r, 0.0));
        let s0 = z[0].sqrt();
        let s1 = z[1].sqrt();
        [s0, -s0, s1, -s1]
    } else {
        // Resolvent cubic m^3 + p m^2 + (p^2/4 - r) m - q^2/8; its largest
        // real root is positive because the value at m = 0 is negative.
        let m = cubic_largest_real_root(p, p * p / 4.0 - r, -q * q / 8.0).max(1e-300);
        let alpha = (2.0 * m).sqrt();
        let beta = p / 2.0 + m;
        let gamma = q / (2.0 * alpha);
        let r1 = quadratic_roots(
            Complex64::new(-alpha, 0.0),
            Complex64::new(beta + gamma, 0.0),
        );
        let r2 = quadratic_roots(Complex64::new(alpha, 0.0), Complex64::new(beta - gamma, 0.0));
        [r1[0], r1[1], r2[0], r2[1]]
    };
    ys.map(|y| y - sh)
}

/// Characteristic polynomial coefficients of a 4x4 matrix by the
/// Faddeev-LeVerrier recurrence: p(x) = x^4 + c[0] x^3 + c[1] x^2 + c[2] x + c[3].
pub fn char_poly4(m: &Mat4) -> [f64; 4] {
    let id = Mat4::identity();
    let m1 = *m;
    let c3 = -m1.trace();
    let m2 = m.mul(&m1.add(&id.scale(c3)));
    let c2 = -m2.trace() / 2.0;
    let m3 = m.mul(&m2.add(&id.scale(c2)));
    let c1 = -m3.trace() / 3.0;
    let m4 = m.mul(&m3.add(&id.scale(c1)));
    let c0 = -m4.trace() / 4.0;
    [c3, c2, c1, c0]
}

fn eval_poly(c: &[f64; 4], x: Complex64) -> (Complex64, Complex64) {
    // Horner for p and p'.
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ck in c.iter() {
        dp = dp * x + p;
        p = p * x + ck;
    }
    (p, dp)
}

/// Eigenvalues of a real 4x4 matrix, sorted by (Re, Im) and exactly closed
/// under conjugation.
///
/// The characteristic quartic is solved in closed form and each root gets a
/// Newton polish; conjugate pairs are then symmetrized. The residual
/// det(m - mu I) is checked per root against 1e-9, relaxed by the fourth
/// power of the matrix norm beyond unit scale.
pub fn eig4(m: &Mat4) -> Result<[Complex64; 4]> {
    let c = char_poly4(m);
    let mut roots = quartic_roots(c[0], c[1], c[2], c[3]);

    let mag = 1.0 + m.norm_inf();
    for mu in roots.iter_mut() {
        for _ in 0..50 {
            let (p, dp) = eval_poly(&c, *mu);
            let scale = mu.norm().max(1.0).powi(4);
            if p.norm() <= 1e-16 * scale {
                break;
            }
            if dp.norm() <= 1e-14 * mag.powi(3) {
                // Multiple root: Newton stalls, the closed form is kept.
                break;
            }
            let step = p / dp;
            *mu -= step;
            if step.norm() <= 1e-16 * mu.norm().max(1.0) {
                break;
            }
        }
    }

    // Snap near-real roots, then average conjugate partners so the set is
    // exactly conjugation-closed.
    for mu in roots.iter_mut() {
        if mu.im.abs() <= 1e-10 * (1.0 + mu.norm()) {
            *mu = Complex64::new(mu.re, 0.0);
        }
    }
    let mut paired = [false; 4];
    for i in 0..4 {
        if paired[i] || roots[i].im == 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..4 {
            if j == i || paired[j] || roots[j].im == 0.0 {
                continue;
            }
            let d = (roots[j].conj() - roots[i]).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            let avg = (roots[i] + roots[j].conj()) / 2.0;
            roots[i] = avg;
            roots[j] = avg.conj();
            paired[i] = true;
            paired[j] = true;
        }
    }

    roots.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .expect("eigenvalues are finite")
    });

    let tol = 1e-9 * mag.powi(4).max(1.0);
    for mu in roots.iter() {
        let res = det4_shifted(m, *mu).norm();
        if res > tol {
            return Err(Error::EigNonConvergence { residual: res });
        }
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// The fundamental matrix of the linearized affine system.
    fn radon_m(s: &Mat2, b0: f64) -> Mat4 {
        Mat4::from_blocks(
            &Mat2::zero(),
            &Mat2::identity(),
            &s.scale(-1.0),
            &Mat2::L.scale(-b0),
        )
    }

    #[test]
    fn det2_examples() {
        assert_eq!(Mat2::identity().det(), 1.0);
        assert_eq!(Mat2::L.det(), 1.0);
        assert_eq!(Mat2::new(2.0, 1.0, 1.0, 1.0).det(), 1.0);
    }

    #[test]
    fn derivative_accessors_shear() {
        // Shear field V0 = [[0,0],[-a,0]] has divergence 0, Jacobian 0 and
        // vorticity -a.
        let a = 1.5;
        let v0 = Mat2::new(0.0, 0.0, -a, 0.0);
        assert_eq!(v0.divergence(), 0.0);
        assert_eq!(v0.jacobian_det(), 0.0);
        assert_eq!(v0.vorticity(), -a);
    }

    #[test]
    fn l_squares_to_minus_identity() {
        let l2 = Mat2::L.mul(&Mat2::L);
        assert_eq!(l2, Mat2::identity().scale(-1.0));
    }

    #[test]
    fn mat2_inverse_roundtrip() {
        let m = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        assert_abs_diff_eq!(id.a11, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(id.a12, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(id.a21, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(id.a22, 1.0, epsilon = 1e-15);
        assert!(Mat2::zero().inverse().is_err());
    }

    #[test]
    fn eig4_identity() {
        let mu = eig4(&Mat4::identity()).unwrap();
        for m in mu {
            assert_abs_diff_eq!(m.re, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(m.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn eig4_diagonal() {
        let mut d = Mat4::zero();
        for (i, v) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            d.m[i][i] = v;
        }
        let mu = eig4(&d).unwrap();
        for (m, want) in mu.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(m.re, want, epsilon = 1e-9);
            assert_abs_diff_eq!(m.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn eig4_oscillatory_unit_field() {
        // S0 = I, B0 = 1: omega_pm^2 = (3 +- sqrt(5))/2, eigenvalues +-i omega.
        let m = radon_m(&Mat2::identity(), 1.0);
        let mu = eig4(&m).unwrap();
        let wp = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        let wm = ((3.0 - 5f64.sqrt()) / 2.0).sqrt();
        let mut ims: Vec<f64> = mu.iter().map(|z| z.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ims[0], -wp, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[1], -wm, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[2], wm, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[3], wp, epsilon = 1e-9);
        for z in mu {
            assert_abs_diff_eq!(z.re, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn eig4_resonant_field() {
        // S0 = 6I, B0 = 1: the quartic factors as (mu^2+4)(mu^2+9).
        let m = radon_m(&Mat2::identity().scale(6.0), 1.0);
        let mu = eig4(&m).unwrap();
        let mut ims: Vec<f64> = mu.iter().map(|z| z.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ims[0], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[1], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[2], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ims[3], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn eig4_zero_field_double_root() {
        // S0 = 0, B0 = 1: mu^2 (mu^2 + 1), a double root at zero.
        let m = radon_m(&Mat2::zero(), 1.0);
        let mu = eig4(&m).unwrap();
        let mut zeros = 0;
        let mut unit_imag = 0;
        for z in mu {
            if z.norm() < 1e-7 {
                zeros += 1;
            }
            if (z.im.abs() - 1.0).abs() < 1e-9 && z.re.abs() < 1e-9 {
                unit_imag += 1;
            }
        }
        assert_eq!(zeros, 2);
        assert_eq!(unit_imag, 2);
    }

    #[test]
    fn char_poly_matches_radon_structure() {
        // For symmetric S0 the quartic is mu^4 + (B0^2 + lambda) mu^2 + K.
        let s = Mat2::new(1.2, -0.4, -0.4, 0.7);
        let b0 = 1.7;
        let c = char_poly4(&radon_m(&s, b0));
        assert_abs_diff_eq!(c[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], b0 * b0 + s.trace(), epsilon = 1e-12);
        assert_abs_diff_eq!(c[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[3], s.det(), epsilon = 1e-12);
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let m = radon_m(&Mat2::identity(), 2.0);
        let e = expm(&m, 0.0).unwrap();
        assert_eq!(e, Mat4::identity());
    }

    #[test]
    fn expm_rotation_block() {
        // exp(t diag(0, -B0 L)) has a rotation by B0 t in the lower block.
        let b0 = 1.3;
        let t = 0.7;
        let m = Mat4::from_blocks(
            &Mat2::zero(),
            &Mat2::zero(),
            &Mat2::zero(),
            &Mat2::L.scale(-b0),
        );
        let e = expm(&m, t).unwrap();
        let th = b0 * t;
        let want = Mat2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        let got = e.block(1, 1);
        assert_abs_diff_eq!(got.a11, want.a11, epsilon = 1e-12);
        assert_abs_diff_eq!(got.a12, want.a12, epsilon = 1e-12);
        assert_abs_diff_eq!(got.a21, want.a21, epsilon = 1e-12);
        assert_abs_diff_eq!(got.a22, want.a22, epsilon = 1e-12);
        let top = e.block(0, 0);
        assert_abs_diff_eq!(top.a11, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(top.a22, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_nilpotent_is_exact() {
        // N = [[0, I], [0, 0]] squares to zero, so exp(tN) = I + tN.
        let n = Mat4::from_blocks(
            &Mat2::zero(),
            &Mat2::identity(),
            &Mat2::zero(),
            &Mat2::zero(),
        );
        let t = 3.25;
        let e = expm(&n, t).unwrap();
        let want = Mat4::identity().add(&n.scale(t));
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(e.m[i][j], want.m[i][j], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn expm_group_property() {
        let m = radon_m(&Mat2::new(1.0, 0.5, 0.5, -0.3), 1.1);
        let e1 = expm(&m, 0.3).unwrap();
        let e2 = expm(&m, 0.7).unwrap();
        let e12 = expm(&m, 1.0).unwrap();
        let prod = e2.mul(&e1);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(prod.m[i][j], e12.m[i][j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn expm_liouville() {
        let m = Mat4 {
            m: [
                [0.3, -0.2, 0.1, 0.0],
                [0.5, 0.1, -0.4, 0.2],
                [-0.1, 0.6, 0.2, -0.3],
                [0.2, 0.0, 0.5, -0.6],
            ],
        };
        let t = 1.4;
        let e = expm(&m, t).unwrap();
        assert_abs_diff_eq!(e.det(), (t * m.trace()).exp(), epsilon = 1e-9);
    }

    #[test]
    fn expm_overflow_guard() {
        let m = Mat4::identity().scale(1e300);
        assert!(matches!(expm(&m, 1.0), Err(Error::ExpmOverflow { .. })));
    }

    #[test]
    fn solve4_roundtrip() {
        let a = radon_m(&Mat2::new(1.0, 0.2, 0.2, 2.0), 0.9);
        let b = Mat4::identity();
        let x = solve4(&a, &b).unwrap();
        let id = a.mul(&x);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id.m[i][j], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quartic_known_roots() {
        // (x-1)(x-2)(x-3)(x-4) = x^4 - 10x^3 + 35x^2 - 50x + 24.
        let mut roots = quartic_roots(-10.0, 35.0, -50.0, 24.0);
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (r, want) in roots.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(r.re, want, epsilon = 1e-7);
            assert_abs_diff_eq!(r.im, 0.0, epsilon = 1e-7);
        }
        // x^4 + 1: the primitive eighth roots of unity.
        let roots = quartic_roots(0.0, 0.0, 0.0, 1.0);
        for r in roots {
            assert_abs_diff_eq!(r.norm(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.re.abs(), (0.5f64).sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn mat3_det_and_mul() {
        let a = Mat3 {
            m: [[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [4.0, 0.0, 1.0]],
        };
        assert_abs_diff_eq!(a.det(), 25.0, epsilon = 1e-12);
        let id = Mat3::identity();
        assert_eq!(a.mul(&id), a);
    }

    proptest! {
        #[test]
        fn eig4_conjugation_and_residual(
            entries in proptest::array::uniform16(-4.0f64..4.0),
        ) {
            let mut m = Mat4::zero();
            for i in 0..4 {
                for j in 0..4 {
                    m.m[i][j] = entries[4 * i + j];
                }
            }
            let mu = eig4(&m).unwrap();
            // Multiset closed under conjugation.
            for z in mu.iter() {
                let has_conj = mu
                    .iter()
                    .any(|w| (w - z.conj()).norm() <= 1e-9 * (1.0 + z.norm()));
                prop_assert!(has_conj);
            }
            // Root sum equals the trace.
            let sum: Complex64 = mu.iter().sum();
            prop_assert!((sum.re - m.trace()).abs() <= 1e-7 * (1.0 + m.trace().abs()));
            prop_assert!(sum.im.abs() <= 1e-9);
        }

        #[test]
        fn expm_inverse_property(
            entries in proptest::array::uniform16(-1.5f64..1.5),
        ) {
            let mut m = Mat4::zero();
            for i in 0..4 {
                for j in 0..4 {
                    m.m[i][j] = entries[4 * i + j];
                }
            }
            let e = expm(&m, 1.0).unwrap();
            let einv = expm(&m, -1.0).unwrap();
            let id = e.mul(&einv);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((id.m[i][j] - want).abs() < 1e-9);
                }
            }
            prop_assert!((e.det() - m.trace().exp()).abs() <= 1e-9 * m.trace().exp().max(1.0));
        }
    }
}
