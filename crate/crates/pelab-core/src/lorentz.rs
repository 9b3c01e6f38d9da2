//! Lorentz-group utilities: 4D rotations and boosts on (t, x, y, z), the
//! Minkowski interval, and the 2D generator pair (circular rotation vs
//! hyperbolic boost) that the positional encoders are built on.
//!
//! All matrices here satisfy ΛᵀηΛ = η with η = diag(1, −1, −1, −1); boosts
//! compose by adding rapidities, rotations by adding angles.

use std::fmt;

/// Rapidity/angle magnitude above which cosh overflows 64-bit floats.
/// Callers needing larger arguments must use the fused log-space score path
/// in `encodings`.
pub const RAPIDITY_CAP: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub enum LorentzError {
    /// `gen2_compose` requires both generators to be the same kind.
    MixedKinds { left: Gen2Kind, right: Gen2Kind },
}

impl fmt::Display for LorentzError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MixedKinds { left, right } => {
                write!(f, "cannot compose a {left:?} generator with a {right:?} generator")
            }
        }
    }
}

impl std::error::Error for LorentzError {}

/// Spatial axis selector for 4D rotations and boosts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// 4×4 matrix acting on (t, x, y, z) column vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self(m)
    }

    pub fn mul(&self, other: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                for j in 0..4 {
                    out[i][j] += a * other.0[k][j];
                }
            }
        }
        Mat4(out)
    }

    pub fn apply(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (o, row) in out.iter_mut().zip(&self.0) {
            *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
        out
    }

    pub fn transpose(&self) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in self.0.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                out[j][i] = x;
            }
        }
        Mat4(out)
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        let mut m = 0.0f64;
        for (ra, rb) in self.0.iter().zip(&other.0) {
            for (&a, &b) in ra.iter().zip(rb) {
                m = m.max((a - b).abs());
            }
        }
        m
    }
}

/// Max-abs residual of ΛᵀηΛ − η; zero for exact Lorentz transformations.
pub fn lorentz_defect(m: &Mat4) -> f64 {
    let eta = Mat4([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
    ]);
    m.transpose().mul(&eta).mul(m).max_abs_diff(&eta)
}

/// Standard boost along one spatial axis; mixes the temporal component with
/// that axis via cosh/sinh of the rapidity.
pub fn boost_matrix(axis: Axis, eta: f64) -> Mat4 {
    assert!(eta.is_finite(), "boost rapidity must be finite");
    assert!(eta.abs() <= RAPIDITY_CAP, "rapidity {eta} beyond the overflow cap {RAPIDITY_CAP}");
    let (ch, sh) = (eta.cosh(), eta.sinh());
    let mut m = Mat4::identity().0;
    let a = spatial_index(axis);
    m[0][0] = ch;
    m[a][a] = ch;
    m[0][a] = -sh;
    m[a][0] = -sh;
    Mat4(m)
}

/// Spatial rotation about one axis; the temporal component is untouched.
pub fn rotation_matrix(axis: Axis, theta: f64) -> Mat4 {
    assert!(theta.is_finite(), "rotation angle must be finite");
    let (c, s) = (theta.cos(), theta.sin());
    // The rotated plane is the pair of spatial axes other than `axis`,
    // ordered (x, y, z); sign convention follows the finite-rotation form.
    let (p, q) = match axis {
        Axis::X => (2, 3),
        Axis::Y => (3, 1),
        Axis::Z => (1, 2),
    };
    let mut m = Mat4::identity().0;
    m[p][p] = c;
    m[q][q] = c;
    m[p][q] = -s;
    m[q][p] = s;
    Mat4(m)
}

fn spatial_index(axis: Axis) -> usize {
    match axis {
        Axis::X => 1,
        Axis::Y => 2,
        Axis::Z => 3,
    }
}

/// t² − x² − y² − z².
pub fn minkowski_interval(v: [f64; 4]) -> f64 {
    v[0] * v[0] - v[1] * v[1] - v[2] * v[2] - v[3] * v[3]
}

/// Kind of a 2D one-parameter subgroup element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gen2Kind {
    Rotation,
    Boost,
}

/// 2D generator element: a circular rotation by an angle or a hyperbolic
/// boost by a rapidity. The two kinds unify the rotary encoders: circular
/// for RoPE, hyperbolic for HoPE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gen2 {
    pub kind: Gen2Kind,
    pub angle: f64,
}

impl Gen2 {
    pub fn rotation(angle: f64) -> Self {
        Self { kind: Gen2Kind::Rotation, angle }
    }

    pub fn boost(angle: f64) -> Self {
        Self { kind: Gen2Kind::Boost, angle }
    }
}

/// Matrix form of a 2D generator element.
pub fn gen2_matrix(g: Gen2) -> [[f64; 2]; 2] {
    match g.kind {
        Gen2Kind::Rotation => {
            let (c, s) = (g.angle.cos(), g.angle.sin());
            [[c, -s], [s, c]]
        }
        Gen2Kind::Boost => {
            assert!(
                g.angle.abs() <= RAPIDITY_CAP,
                "rapidity {} beyond the overflow cap {RAPIDITY_CAP}",
                g.angle
            );
            let (c, s) = (g.angle.cosh(), g.angle.sinh());
            [[c, s], [s, c]]
        }
    }
}

/// Compose two same-kind generators by adding their parameters; the matrix
/// of the result equals the product of the matrices.
pub fn gen2_compose(g1: Gen2, g2: Gen2) -> Result<Gen2, LorentzError> {
    if g1.kind != g2.kind {
        return Err(LorentzError::MixedKinds { left: g1.kind, right: g2.kind });
    }
    Ok(Gen2 { kind: g1.kind, angle: g1.angle + g2.angle })
}

/// Spectral norm of `e^{−damp}·B(a)` for `a, damp ≥ 0`.
///
/// B(a) has eigenvalues e^{±a} on (1, ±1)/√2, so the norm is exactly
/// e^{a−damp}; `damp = a` cancels the worst-case growth.
pub fn damped_boost_norm(a: f64, damp: f64) -> f64 {
    assert!(a >= 0.0 && damp >= 0.0, "damped_boost_norm wants non-negative arguments");
    (a - damp).exp()
}

pub fn mat2_apply(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    const TOL: f64 = 1e-12;

    #[test]
    fn zero_rapidity_boost_is_identity() {
        assert_eq!(boost_matrix(Axis::X, 0.0), Mat4::identity());
    }

    #[test]
    fn x_boost_column_action() {
        let b = boost_matrix(Axis::X, 0.5);
        let v = b.apply([1.0, 0.0, 0.0, 0.0]);
        assert!((v[0] - 0.5f64.cosh()).abs() <= TOL);
        assert!((v[1] + 0.5f64.sinh()).abs() <= TOL);
        assert_eq!(&v[2..], &[0.0, 0.0]);
    }

    #[test]
    fn rapidity_additivity() {
        let prod = boost_matrix(Axis::X, 0.3).mul(&boost_matrix(Axis::X, 0.4));
        assert!(prod.max_abs_diff(&boost_matrix(Axis::X, 0.7)) <= TOL);
    }

    #[test]
    fn zero_angle_rotation_is_identity() {
        assert_eq!(rotation_matrix(Axis::Y, 0.0), Mat4::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotation_matrix(Axis::Z, std::f64::consts::FRAC_PI_2);
        let v = r.apply([0.0, 1.0, 0.0, 0.0]);
        assert!(v[1].abs() <= TOL && (v[2] - 1.0).abs() <= TOL);
        assert_eq!((v[0], v[3]), (0.0, 0.0));
    }

    #[test]
    fn rotation_angle_additivity() {
        let prod = rotation_matrix(Axis::X, 0.2).mul(&rotation_matrix(Axis::X, 0.9));
        assert!(prod.max_abs_diff(&rotation_matrix(Axis::X, 1.1)) <= TOL);
    }

    #[test]
    fn interval_basics() {
        assert_eq!(minkowski_interval([1.0, 0.0, 0.0, 0.0]), 1.0);
        assert_eq!(minkowski_interval([1.0, 1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn interval_is_boost_invariant() {
        let b = boost_matrix(Axis::X, 0.7);
        let v = [1.3, 0.2, -0.5, 0.9];
        let before = minkowski_interval(v);
        let after = minkowski_interval(b.apply(v));
        assert!((before - after).abs() <= TOL);
    }

    #[test]
    fn every_produced_matrix_preserves_the_metric() {
        let mut rng = RngState::new(17);
        for i in 0..100 {
            let a = 4.0 * (rng.next_uniform() - 0.5);
            let m = match i % 6 {
                0 => boost_matrix(Axis::X, a),
                1 => boost_matrix(Axis::Y, a),
                2 => boost_matrix(Axis::Z, a),
                3 => rotation_matrix(Axis::X, a),
                4 => rotation_matrix(Axis::Y, a),
                _ => rotation_matrix(Axis::Z, a),
            };
            assert!(lorentz_defect(&m) <= TOL, "defect {} at angle {a}", lorentz_defect(&m));
        }
    }

    #[test]
    fn gen2_boost_identity_and_column_action() {
        let id = gen2_matrix(Gen2::boost(0.0));
        assert_eq!(id, [[1.0, 0.0], [0.0, 1.0]]);
        let v = mat2_apply(&gen2_matrix(Gen2::boost(0.5)), [1.0, 0.0]);
        assert!((v[0] - 0.5f64.cosh()).abs() <= TOL);
        assert!((v[1] - 0.5f64.sinh()).abs() <= TOL);
    }

    #[test]
    fn gen2_rotation_quarter_turn() {
        let v = mat2_apply(&gen2_matrix(Gen2::rotation(std::f64::consts::FRAC_PI_2)), [1.0, 0.0]);
        assert!(v[0].abs() <= TOL && (v[1] - 1.0).abs() <= TOL);
    }

    #[test]
    fn gen2_boost_matrices_are_symmetric_and_rotations_orthogonal() {
        let b = gen2_matrix(Gen2::boost(0.8));
        assert_eq!(b[0][1], b[1][0]);
        let r = gen2_matrix(Gen2::rotation(0.8));
        // RᵀR = I
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let prod = mat2_mul(&rt, &r);
        assert!((prod[0][0] - 1.0).abs() <= TOL && (prod[1][1] - 1.0).abs() <= TOL);
        assert!(prod[0][1].abs() <= TOL && prod[1][0].abs() <= TOL);
    }

    #[test]
    fn compose_inverse_gives_identity() {
        let g = gen2_compose(Gen2::boost(0.2), Gen2::boost(-0.2)).unwrap();
        let m = gen2_matrix(g);
        assert!((m[0][0] - 1.0).abs() <= TOL && m[0][1].abs() <= TOL);
    }

    #[test]
    fn compose_adds_angles() {
        let g = gen2_compose(Gen2::rotation(0.3), Gen2::rotation(0.4)).unwrap();
        assert_eq!(g, Gen2::rotation(0.7));
    }

    #[test]
    fn compose_rejects_mixed_kinds() {
        assert!(matches!(
            gen2_compose(Gen2::rotation(0.1), Gen2::boost(0.1)),
            Err(LorentzError::MixedKinds { .. })
        ));
    }

    #[test]
    fn power_law_matches_repeated_multiplication() {
        // boost(0.1)^5 against five explicit matrix multiplications.
        let single = gen2_matrix(Gen2::boost(0.1));
        let mut acc = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..5 {
            acc = mat2_mul(&acc, &single);
        }
        let fused = gen2_matrix(Gen2::boost(0.5));
        for i in 0..2 {
            for j in 0..2 {
                assert!((acc[i][j] - fused[i][j]).abs() <= TOL);
            }
        }
    }

    #[test]
    fn group_law_over_random_parameters() {
        let mut rng = RngState::new(23);
        for _ in 0..100 {
            let a = 10.0 * (rng.next_uniform() - 0.5);
            let b = 10.0 * (rng.next_uniform() - 0.5);
            for make in [Gen2::rotation, Gen2::boost] {
                let lhs = gen2_matrix(gen2_compose(make(a), make(b)).unwrap());
                let rhs = mat2_mul(&gen2_matrix(make(a)), &gen2_matrix(make(b)));
                for i in 0..2 {
                    for j in 0..2 {
                        let scale = 1.0f64.max(rhs[i][j].abs());
                        assert!((lhs[i][j] - rhs[i][j]).abs() <= TOL * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn damped_norm_trivial_cases() {
        assert_eq!(damped_boost_norm(0.0, 0.0), 1.0);
        // The penalty e^{−θ} exactly cancels the worst-case growth e^{θ}.
        assert_eq!(damped_boost_norm(0.37, 0.37), 1.0);
    }

    #[test]
    fn damped_norm_matches_random_vector_maximization() {
        let (a, damp) = (0.3f64, 0.5f64);
        let m = gen2_matrix(Gen2::boost(a));
        let factor = (-damp).exp();
        let mut rng = RngState::new(41);
        let mut best = 0.0f64;
        for _ in 0..10_000 {
            let phi = rng.next_uniform() * std::f64::consts::TAU;
            let v = [phi.cos(), phi.sin()];
            let w = mat2_apply(&m, v);
            best = best.max(factor * (w[0] * w[0] + w[1] * w[1]).sqrt());
        }
        let expect = damped_boost_norm(a, damp);
        assert!((expect - (-0.2f64).exp()).abs() <= 1e-12);
        assert!(best <= expect + 1e-12, "max {best} exceeds spectral norm {expect}");
        assert!((best - expect).abs() <= 1e-5, "max {best} vs {expect}");
    }

    #[test]
    fn boost_norm_bound_with_equality_on_the_diagonal_direction() {
        let theta = 0.6;
        let m = gen2_matrix(Gen2::boost(theta));
        let bound = theta.exp();
        let mut rng = RngState::new(59);
        for _ in 0..10_000 {
            let phi = rng.next_uniform() * std::f64::consts::TAU;
            let v = [phi.cos(), phi.sin()];
            let w = mat2_apply(&m, v);
            let ratio = (w[0] * w[0] + w[1] * w[1]).sqrt();
            assert!(ratio <= bound + 1e-12);
        }
        let diag = std::f64::consts::FRAC_1_SQRT_2;
        let w = mat2_apply(&m, [diag, diag]);
        let ratio = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!((ratio - bound).abs() <= 1e-12);
    }
}
