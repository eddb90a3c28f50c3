//! SO(3) / so(3) numerics: hat and vee, the Rodrigues exponential, the
//! logarithm, Haar-uniform sampling, the flattening embedding and the
//! manifold-distance diagnostic.
//!
//! Conventions used throughout the crate:
//! - rotations are 3x3 matrices acting on column vectors;
//! - `hat(v)` is the cross-product matrix, `hat(v) * w == v.cross(w)`;
//! - the embedding flattens matrices in column-major order, so
//!   `embed(R)[3*c + r] == R[(r, c)]`. The Euclidean norm of the embedded
//!   vector equals the Frobenius norm of the matrix.

use nalgebra::{Matrix3, SVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Construction tolerance on `|R R^T - I|_F` and `|det R - 1|`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Below this angle the trigonometric coefficients of the Rodrigues formula
/// are evaluated by Taylor expansion to avoid cancellation.
const SMALL_ANGLE: f64 = 1e-4;

/// Angles within this margin of pi take the dominant-eigenvector branch of
/// the logarithm, where the antisymmetric part no longer determines the axis.
const NEAR_PI: f64 = 1e-6;

/// Coordinates of an so(3) element under the vee map. Radians when the
/// vector is a rotation residual.
pub type TangentVector3 = Vector3<f64>;

/// Column-major flattening of a rotation matrix; see [`embed`].
pub type EmbeddedRotation = SVector<f64, 9>;

/// A 3x3 orthogonal matrix with determinant 1.
///
/// The checked constructor [`Rotation::try_new`] enforces the invariants to
/// [`ROTATION_TOLERANCE`]; group operations (`*`, [`Rotation::transpose`])
/// and [`exp_so3`] preserve them to roundoff without re-checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates the orthogonality and determinant invariants.
    pub fn try_new(m: Matrix3<f64>) -> Result<Self> {
        let distance = manifold_distance(&m);
        let det = m.determinant();
        if distance <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE {
            Ok(Rotation(m))
        } else {
            Err(Error::InvalidRotation { distance, det })
        }
    }

    /// Wraps a matrix that is orthonormal by construction.
    pub(crate) fn from_orthonormal(m: Matrix3<f64>) -> Self {
        debug_assert!(manifold_distance(&m) <= 1e-8, "matrix drifted off SO(3)");
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The inverse rotation.
    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Cross-product matrix of `v`: `hat(v) * w == v.cross(w)`.
pub fn hat(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds the
/// skew tolerance; within it, the result is read off the antisymmetric part
/// so that `hat(vee(M)) == M` to roundoff for valid input.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let deviation = (m + m.transpose()).norm();
    if deviation > ROTATION_TOLERANCE {
        return Err(Error::NotSkewSymmetric { deviation });
    }
    Ok(vee_unchecked(m))
}

/// Antisymmetric-part read-off without the skew check.
fn vee_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues coefficients `a = sin t / t` and `b = (1 - cos t) / t^2`.
fn rodrigues_coefficients(theta: f64, theta2: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    }
}

/// Exponential map so(3) -> SO(3) in closed form:
/// `exp(v) = I + a hat(v) + b hat(v)^2` with the coefficients of
/// [`rodrigues_coefficients`].
pub fn exp_so3(v: Vector3<f64>) -> Rotation {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = rodrigues_coefficients(theta, theta2);
    let k = hat(v);
    Rotation::from_orthonormal(Matrix3::identity() + a * k + b * (k * k))
}

/// Logarithm SO(3) -> so(3), returned in vee coordinates with angle in
/// [0, pi].
///
/// The angle comes from `acos((trace - 1) / 2)` with the argument clamped to
/// [-1, 1]. For angles within [`NEAR_PI`] of pi the antisymmetric part
/// vanishes and the axis is recovered as the dominant eigenvector of
/// `(R + R^T) / 2 + I` instead; at exactly pi the sign of the axis is
/// arbitrary (both map back to the same rotation).
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let w = vee_unchecked(m); // = sin(theta) * axis

    if theta >= std::f64::consts::PI - NEAR_PI {
        // Power iteration on (R + R^T)/2 + I, whose spectrum is {2, 1 + cos}:
        // two steps leave the axis accurate to roundoff this close to pi.
        let s = (m + m.transpose()) * 0.5 + Matrix3::identity();
        let k = (0..3)
            .max_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap())
            .unwrap();
        let mut u = (s.column(k)).normalize();
        u = (s * u).normalize();
        u = (s * u).normalize();
        if w.dot(&u) < 0.0 {
            u = -u;
        }
        // acos loses ~sqrt(eps) accuracy at the end of its range; |w| = sin
        // recovers the angle exactly this close to pi.
        let theta = std::f64::consts::PI - w.norm().clamp(0.0, 1.0).asin();
        return theta * u;
    }

    if theta < SMALL_ANGLE {
        // theta / sin(theta) expanded; w already carries the amplitude.
        return (1.0 + theta * theta / 6.0) * w;
    }
    // theta * axis. Normalizing w instead of dividing by sin(acos(..))
    // keeps the scale well-conditioned as theta approaches pi.
    theta * w.normalize()
}

/// Frobenius distance of `m m^T` from the identity; zero exactly on O(3).
pub fn manifold_distance(m: &Matrix3<f64>) -> f64 {
    (m * m.transpose() - Matrix3::identity()).norm()
}

/// Column-major flattening of the rotation matrix into R^9. An isometry
/// from the Frobenius to the Euclidean norm.
pub fn embed(r: &Rotation) -> EmbeddedRotation {
    EmbeddedRotation::from_column_slice(r.matrix().as_slice())
}

/// Inverse of [`embed`]; validates the rotation invariants.
pub fn unembed(e: &EmbeddedRotation) -> Result<Rotation> {
    Rotation::try_new(Matrix3::from_column_slice(e.as_slice()))
}

/// Haar-uniform random rotation, sampled by normalizing a 4-vector of
/// standard Gaussians into a unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if norm < 1e-6 {
            continue;
        }
        let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return Rotation::from_orthonormal(m);
    }
}

/// Nearest rotation to `m` in the Frobenius sense (polar projection via
/// SVD, with the determinant corrected to +1 if needed).
pub fn polar_project(m: &Matrix3<f64>) -> Rotation {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd of 3x3 matrix");
    let v_t = svd.v_t.expect("svd of 3x3 matrix");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        r = u * flip * v_t;
    }
    Rotation::from_orthonormal(r)
}

/// Geodesic angle between two rotations, in radians in [0, pi].
pub fn geodesic_angle(a: &Rotation, b: &Rotation) -> f64 {
    let cos_theta = (((a.matrix().transpose() * b.matrix()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos_theta.acos()
}

/// Reverse-mode derivative of [`exp_so3`]: contracts an upstream cotangent
/// `G = dL/dexp(v)` against the Jacobian of the Rodrigues formula, giving
/// `dL/dv`.
///
/// With `K = hat(v)` and `E(v) = I + a K + b K^2`,
/// `dE/dv_i = (a'/t) v_i K + a hat(e_i) + (b'/t) v_i K^2 + b (hat(e_i) K + K hat(e_i))`.
pub fn exp_so3_vjp(v: Vector3<f64>, cotangent: &Matrix3<f64>) -> Vector3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = rodrigues_coefficients(theta, theta2);
    // ca = a'(t)/t, cb = b'(t)/t; Taylor below the small-angle threshold.
    let (ca, cb) = if theta < SMALL_ANGLE {
        (-1.0 / 3.0 + theta2 / 30.0, -1.0 / 12.0 + theta2 / 180.0)
    } else {
        let (sin_t, cos_t) = (theta.sin(), theta.cos());
        (
            (theta * cos_t - sin_t) / (theta2 * theta),
            (theta * sin_t - 2.0 * (1.0 - cos_t)) / (theta2 * theta2),
        )
    };

    let k = hat(v);
    let k2 = k * k;
    let mut grad = Vector3::zeros();
    for i in 0..3 {
        let mut e_i = Vector3::zeros();
        e_i[i] = 1.0;
        let h_i = hat(e_i);
        let d_exp = ca * v[i] * k + a * h_i + cb * v[i] * k2 + b * (h_i * k + k * h_i);
        grad[i] = cotangent.dot(&d_exp);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Scaled-and-squared truncated Taylor series of the matrix exponential;
    /// independent oracle for `exp_so3`.
    fn taylor_expm(m: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
        let squarings = 8;
        let scaled = m / f64::powi(2.0, squarings);
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for n in 1..=terms {
            term = term * scaled / n as f64;
            sum += term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }

    fn rotation_x(theta: f64) -> Matrix3<f64> {
        Matrix3::new(
            1.0,
            0.0,
            0.0,
            0.0,
            theta.cos(),
            -theta.sin(),
            0.0,
            theta.sin(),
            theta.cos(),
        )
    }

    #[test]
    fn hat_of_zero_is_zero() {
        assert_eq!(hat(Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn hat_matches_component_expansion() {
        let expected = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(hat(Vector3::new(1.0, 2.0, 3.0)), expected);
    }

    #[test]
    fn hat_reproduces_cross_product() {
        let v = Vector3::new(0.3, -0.7, 0.2);
        let w = Vector3::new(-1.1, 0.5, 2.0);
        assert_relative_eq!(hat(v) * w, v.cross(&w), epsilon = 1e-15);
    }

    #[test]
    fn vee_of_zero_is_zero() {
        assert_eq!(vee(&Matrix3::zeros()).unwrap(), Vector3::zeros());
    }

    #[test]
    fn vee_inverts_hat_example() {
        let m = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(vee(&m).unwrap(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn vee_rejects_non_skew_input() {
        let mut m = hat(Vector3::new(1.0, 2.0, 3.0));
        m[(0, 0)] = 1e-6;
        assert!(matches!(
            vee(&m),
            Err(Error::NotSkewSymmetric { .. })
        ));
    }

    #[test]
    fn hat_vee_roundtrip() {
        let v = Vector3::new(0.3, -0.7, 0.2);
        assert_eq!(vee(&hat(v)).unwrap(), v);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(*exp_so3(Vector3::zeros()).matrix(), Matrix3::identity());
    }

    #[test]
    fn exp_quarter_turn_about_x() {
        let r = exp_so3(Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-12);
        assert_relative_eq!(
            *r.matrix(),
            taylor_expm(&hat(Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)), 30),
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_matches_taylor_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
                * rng.random_range(0.0..std::f64::consts::PI);
            let direct = exp_so3(v);
            let oracle = taylor_expm(&hat(v), 30);
            assert!((direct.matrix() - oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn exp_inverse_property() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..100 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize()
                * rng.random_range(0.0..std::f64::consts::PI);
            let product = exp_so3(v) * exp_so3(-v);
            assert!((product.matrix() - Matrix3::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        // Compare both sides of the small-angle threshold against the oracle.
        for &scale in &[9.9e-5, 1.01e-4, 1e-7, 1e-12] {
            let v = Vector3::new(0.6, -0.8, 0.0) * scale;
            let oracle = taylor_expm(&hat(v), 30);
            assert!((exp_so3(v).matrix() - oracle).norm() < 1e-13);
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(log_so3(&Rotation::identity()), Vector3::zeros());
    }

    #[test]
    fn log_exp_roundtrip() {
        let v = Vector3::new(0.1, 0.2, 0.3);
        assert_relative_eq!(log_so3(&exp_so3(v)), v, epsilon = 1e-12);
    }

    #[test]
    fn log_quarter_turn_about_x() {
        let r = Rotation::try_new(rotation_x(std::f64::consts::FRAC_PI_2)).unwrap();
        assert_relative_eq!(
            log_so3(&r),
            Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_handles_angles_near_pi() {
        let axis = Vector3::new(2.0, -1.0, 0.5).normalize();
        for &theta in &[
            std::f64::consts::PI - 1e-5,
            std::f64::consts::PI - 1e-7,
            std::f64::consts::PI,
        ] {
            let r = exp_so3(axis * theta);
            let back = exp_so3(log_so3(&r));
            assert!(
                (back.matrix() - r.matrix()).norm() < 1e-9,
                "roundtrip failed at theta = {theta}"
            );
        }
    }

    #[test]
    fn log_exact_pi_about_coordinate_axis() {
        let r = Rotation::try_new(rotation_x(std::f64::consts::PI)).unwrap();
        let v = log_so3(&r);
        assert_relative_eq!(v.norm(), std::f64::consts::PI, epsilon = 1e-9);
        let back = exp_so3(v);
        assert!((back.matrix() - r.matrix()).norm() < 1e-9);
    }

    #[test]
    fn manifold_distance_of_identity_is_zero() {
        assert_eq!(manifold_distance(&Matrix3::identity()), 0.0);
    }

    #[test]
    fn manifold_distance_of_scaled_identity() {
        // |4I - I|_F = 3 sqrt(3)
        assert_relative_eq!(
            manifold_distance(&(Matrix3::identity() * 2.0)),
            27.0_f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn exp_outputs_stay_on_manifold() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize()
                * rng.random_range(0.0..10.0);
            assert!(manifold_distance(exp_so3(v).matrix()) <= 1e-12);
        }
    }

    #[test]
    fn embed_identity() {
        let e = embed(&Rotation::identity());
        assert_eq!(
            e.as_slice(),
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn embed_is_column_major() {
        let r = exp_so3(Vector3::new(0.4, -0.2, 0.9));
        let e = embed(&r);
        for c in 0..3 {
            for row in 0..3 {
                assert_eq!(e[3 * c + row], r.matrix()[(row, c)]);
            }
        }
    }

    #[test]
    fn embed_unembed_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let back = unembed(&embed(&r)).unwrap();
            assert_eq!(back.matrix(), r.matrix());
        }
    }

    #[test]
    fn embed_is_an_isometry() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r1 = random_rotation(&mut rng);
            let r2 = random_rotation(&mut rng);
            let embedded = (embed(&r1) - embed(&r2)).norm();
            let frobenius = (r1.matrix() - r2.matrix()).norm();
            assert_relative_eq!(embedded, frobenius, epsilon = 1e-13);
        }
    }

    #[test]
    fn random_rotations_satisfy_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            assert!(Rotation::try_new(*r.matrix()).is_ok());
        }
    }

    #[test]
    fn random_rotation_trace_has_zero_mean() {
        // Haar expectation of the trace is 0; the variance is 1, so the
        // mean over 1e5 samples stays within 0.02 with huge margin.
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| random_rotation(&mut rng).matrix().trace())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "mean trace {mean}");
    }

    #[test]
    fn random_rotation_angle_follows_haar_density() {
        // Kolmogorov-Smirnov test of the rotation angle against the Haar
        // CDF F(t) = (t - sin t) / pi on [0, pi].
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let n = 10_000;
        let mut angles: Vec<f64> = (0..n)
            .map(|_| geodesic_angle(&Rotation::identity(), &random_rotation(&mut rng)))
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat: f64 = 0.0;
        for (i, &t) in angles.iter().enumerate() {
            let cdf = (t - t.sin()) / std::f64::consts::PI;
            let emp_low = i as f64 / n as f64;
            let emp_high = (i + 1) as f64 / n as f64;
            d_stat = d_stat.max((cdf - emp_low).abs()).max((emp_high - cdf).abs());
        }
        // 1.63 / sqrt(n) rejects at alpha = 0.01.
        assert!(d_stat < 1.63 / (n as f64).sqrt(), "KS statistic {d_stat}");
    }

    #[test]
    fn polar_projection_restores_drifted_matrix() {
        let r = exp_so3(Vector3::new(0.3, 1.1, -0.4));
        let drifted = r.matrix() + Matrix3::from_element(1e-7);
        let projected = polar_project(&drifted);
        assert!(manifold_distance(projected.matrix()) <= 1e-14);
        assert!((projected.matrix() - r.matrix()).norm() < 1e-6);
    }

    #[test]
    fn exp_vjp_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for trial in 0..50 {
            let scale = match trial % 4 {
                0 => 1e-6,
                1 => 1e-3,
                2 => 1.0,
                _ => 3.0,
            };
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * scale;
            let cotangent = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let grad = exp_so3_vjp(v, &cotangent);
            for i in 0..3 {
                let h = 1e-6;
                let mut vp = v;
                let mut vm = v;
                vp[i] += h;
                vm[i] -= h;
                let fd = (cotangent.dot(exp_so3(vp).matrix())
                    - cotangent.dot(exp_so3(vm).matrix()))
                    / (2.0 * h);
                assert!(
                    (grad[i] - fd).abs() <= 1e-6 * grad[i].abs().max(fd.abs()).max(1.0),
                    "component {i} at scale {scale}: vjp {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn tangent(max_norm: f64) -> impl Strategy<Value = Vector3<f64>> {
            (
                -1.0..1.0f64,
                -1.0..1.0f64,
                -1.0..1.0f64,
                0.0..max_norm,
            )
                .prop_filter_map("nonzero direction", move |(x, y, z, s)| {
                    let v = Vector3::new(x, y, z);
                    (v.norm() > 1e-3).then(|| v.normalize() * s)
                })
        }

        proptest! {
            #[test]
            fn vee_inverts_hat(v in tangent(10.0)) {
                let back = vee(&hat(v)).unwrap();
                prop_assert!((back - v).norm() <= 1e-9);
            }

            #[test]
            fn exp_log_mutually_inverse(v in tangent(std::f64::consts::PI - 1e-3)) {
                let back = log_so3(&exp_so3(v));
                prop_assert!((back - v).norm() <= 1e-9);
            }

            #[test]
            fn exp_stays_on_manifold(v in tangent(10.0)) {
                prop_assert!(manifold_distance(exp_so3(v).matrix()) <= 1e-12);
            }
        }
    }
}
