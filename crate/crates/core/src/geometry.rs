//! Directional matrices, span/kernel projectors and frame-rotated gains.
//!
//! Every port of the controller is a conjugate pair of a [`Twist`] (flow) and
//! a [`Wrench`] (effort), both 6-vectors in the world frame. The force-control
//! directions of a task are selected by a [`BinaryPattern`] expressed in the
//! force frame; [`build_directional_basis`] turns the pattern into the
//! orthogonal projectors that split any power flow into its constrained
//! (C-space) and unconstrained (U-space) parts.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Orthonormality tolerance accepted by [`Rotation::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-10;

/// Relative singular-value cutoff of the projector pseudoinverse.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

macro_rules! six_vector {
    ($name:ident, $head:ident, $tail:ident) => {
        #[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vector6<f64>);

        impl $name {
            pub fn zero() -> Self {
                Self(Vector6::zeros())
            }

            pub fn new(head: Vector3<f64>, tail: Vector3<f64>) -> Self {
                Self(Vector6::new(head.x, head.y, head.z, tail.x, tail.y, tail.z))
            }

            pub fn from_array(values: [f64; 6]) -> Self {
                Self(Vector6::from(values))
            }

            pub fn to_array(&self) -> [f64; 6] {
                self.0.into()
            }

            pub fn $head(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(0).into_owned()
            }

            pub fn $tail(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(3).into_owned()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: Self) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            fn mul(self, rhs: f64) -> Self {
                Self(self.0 * rhs)
            }
        }

        impl From<Vector6<f64>> for $name {
            fn from(v: Vector6<f64>) -> Self {
                Self(v)
            }
        }
    };
}

six_vector!(Wrench, force, moment);
six_vector!(Twist, linear, angular);

impl Twist {
    /// Power delivered by `wrench` along this flow.
    pub fn power(&self, wrench: &Wrench) -> f64 {
        self.0.dot(&wrench.0)
    }
}

/// Orientation of a frame with respect to the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self, GeometryError> {
        let orthogonality = (matrix.transpose() * matrix - Matrix3::identity()).abs().max();
        let det = matrix.determinant();
        if !matrix.iter().all(|v| v.is_finite())
            || orthogonality > ROTATION_TOLERANCE
            || (det - 1.0).abs() > ROTATION_TOLERANCE
        {
            return Err(GeometryError::InvalidRotation { orthogonality, det });
        }
        Ok(Self(matrix))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `blockdiag(R, R)`, the action of the rotation on a wrench or twist.
    pub fn block(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.0);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.0);
        m
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Selection of the axes of a 6-D frame, force/linear slots first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryPattern(pub [bool; 6]);

impl BinaryPattern {
    pub fn from_values(values: &[f64]) -> Result<Self, GeometryError> {
        if values.len() != 6 {
            return Err(GeometryError::PatternLength(values.len()));
        }
        let mut bits = [false; 6];
        for (bit, &v) in bits.iter_mut().zip(values) {
            *bit = if v == 1.0 {
                true
            } else if v == 0.0 {
                false
            } else {
                return Err(GeometryError::NonBinaryPattern(v));
            };
        }
        Ok(Self(bits))
    }

    /// Ones wherever `v` is non-zero.
    pub fn from_nonzeros(v: &Vector6<f64>) -> Self {
        let mut bits = [false; 6];
        for (bit, x) in bits.iter_mut().zip(v.iter()) {
            *bit = *x != 0.0;
        }
        Self(bits)
    }

    pub fn full() -> Self {
        Self([true; 6])
    }

    pub fn empty() -> Self {
        Self([false; 6])
    }

    pub fn complement(&self) -> Self {
        Self(self.0.map(|b| !b))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_iterator(self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }))
    }
}

/// A directional matrix with its span projector `[D]` and kernel projector
/// `<D> = I - [D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalBasis {
    pub directions: Matrix6<f64>,
    pub span: Matrix6<f64>,
    pub kernel: Matrix6<f64>,
    pub rank: usize,
}

impl DirectionalBasis {
    pub fn project_span(&self, v: &Vector6<f64>) -> Vector6<f64> {
        self.span * v
    }

    pub fn project_kernel(&self, v: &Vector6<f64>) -> Vector6<f64> {
        self.kernel * v
    }
}

/// Builds `D = [d_f,x d_f,y d_f,z d_m,x d_m,y d_m,z] diag(pattern)` and its
/// projectors. The span is `D (DᵀD)⁺ Dᵀ`, with the pseudoinverse taken through
/// an SVD that drops singular values below `1e-10 σ_max`.
pub fn build_directional_basis(rotation: &Rotation, pattern: &BinaryPattern) -> DirectionalBasis {
    let mut directions = rotation.block();
    for (i, &on) in pattern.0.iter().enumerate() {
        if !on {
            directions.column_mut(i).fill(0.0);
        }
    }

    let gram = directions.transpose() * directions;
    let svd = gram.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let span = if sigma_max > 0.0 {
        let pinv = svd
            .pseudo_inverse(PINV_RELATIVE_CUTOFF * sigma_max)
            .expect("svd computed with both singular bases");
        directions * pinv * directions.transpose()
    } else {
        Matrix6::zeros()
    };
    // symmetrize away rounding so [D] is exactly symmetric
    let span = (span + span.transpose()) * 0.5;
    let kernel = Matrix6::identity() - span;

    DirectionalBasis {
        directions,
        span,
        kernel,
        rank: pattern.count(),
    }
}

/// Interaction power split into its C-space and U-space shares.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InteractionPowers {
    pub constrained: f64,
    pub unconstrained: f64,
}

/// `P_c = vᵀ[D_w]f` and `P_u = vᵀ<D_w>f`.
pub fn interaction_powers(v: &Twist, f: &Wrench, basis: &DirectionalBasis) -> InteractionPowers {
    InteractionPowers {
        constrained: v.0.dot(&(basis.span * f.0)),
        unconstrained: v.0.dot(&(basis.kernel * f.0)),
    }
}

/// Expresses a force-frame gain in the world frame: `R̄ K R̄ᵀ`.
pub fn rotate_gain(gain: &Matrix6<f64>, rotation: &Rotation) -> Matrix6<f64> {
    let block = rotation.block();
    let k = block * gain * block.transpose();
    (k + k.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pattern(bits: [u8; 6]) -> BinaryPattern {
        BinaryPattern(bits.map(|b| b == 1))
    }

    #[test]
    fn axis_aligned_single_force_direction() {
        let basis = build_directional_basis(&Rotation::identity(), &pattern([0, 0, 1, 0, 0, 0]));
        let mut expected_d = Matrix6::zeros();
        expected_d[(2, 2)] = 1.0;
        assert_eq!(basis.directions, expected_d);
        assert_relative_eq!(basis.span, expected_d, epsilon = 1e-12);
        assert_eq!(basis.rank, 1);
    }

    #[test]
    fn wiping_pattern_force_z_and_tilting_moments() {
        let basis = build_directional_basis(&Rotation::identity(), &pattern([0, 0, 1, 1, 1, 0]));
        let expected = Matrix6::from_diagonal(&Vector6::new(0.0, 0.0, 1.0, 1.0, 1.0, 0.0));
        assert_relative_eq!(basis.span, expected, epsilon = 1e-12);
        assert_eq!(basis.rank, 3);
    }

    #[test]
    fn tilted_frame_projector_matches_outer_product() {
        let r = Rotation::from_axis_angle(Vector3::y(), 30f64.to_radians());
        let basis = build_directional_basis(&r, &pattern([0, 0, 1, 0, 0, 0]));
        // rank-one oracle: d dᵀ / (dᵀ d)
        let mut d = Vector6::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&r.matrix().column(2));
        let oracle = d * d.transpose() / d.dot(&d);
        assert_relative_eq!(basis.span, oracle, epsilon = 1e-12);
        assert!((basis.span * basis.span - basis.span).abs().max() <= 1e-9);
        assert!((basis.span * basis.kernel).abs().max() <= 1e-9);
    }

    #[test]
    fn empty_and_full_patterns() {
        let r = Rotation::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.7);
        let empty = build_directional_basis(&r, &BinaryPattern::empty());
        assert_eq!(empty.span, Matrix6::zeros());
        assert_eq!(empty.kernel, Matrix6::identity());
        let full = build_directional_basis(&r, &BinaryPattern::full());
        assert_relative_eq!(full.span, Matrix6::identity(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_rotation_is_rejected() {
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(Rotation::new(skewed), Err(GeometryError::InvalidRotation { .. })));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation::new(reflection).is_err());
        assert!(Rotation::new(Matrix3::identity()).is_ok());
    }

    #[test]
    fn pattern_must_be_binary() {
        assert!(BinaryPattern::from_values(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(BinaryPattern::from_values(&[0.0, 0.5, 1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(BinaryPattern::from_values(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_flow_has_zero_power() {
        let basis = build_directional_basis(&Rotation::identity(), &pattern([0, 0, 1, 0, 0, 0]));
        let f = Wrench::from_array([3.0, -1.0, 7.0, 0.1, 0.2, 0.3]);
        let p = interaction_powers(&Twist::zero(), &f, &basis);
        assert_eq!(p, InteractionPowers::default());
    }

    #[test]
    fn power_split_by_hand() {
        let basis = build_directional_basis(&Rotation::identity(), &pattern([0, 0, 1, 0, 0, 0]));
        let v = Twist::from_array([0.1, 0.0, 0.05, 0.0, 0.0, 0.0]);
        let f = Wrench::from_array([2.0, 0.0, -10.0, 0.0, 0.0, 0.0]);
        let p = interaction_powers(&v, &f, &basis);
        assert_relative_eq!(p.constrained, -0.5, epsilon = 1e-15);
        assert_relative_eq!(p.unconstrained, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn full_constraint_puts_all_power_in_c_space() {
        let basis = build_directional_basis(&Rotation::identity(), &BinaryPattern::full());
        let v = Twist::from_array([0.3, -0.2, 0.1, 0.5, 0.0, -0.4]);
        let f = Wrench::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = interaction_powers(&v, &f, &basis);
        assert_relative_eq!(p.constrained, v.power(&f), epsilon = 1e-14);
        assert_eq!(p.unconstrained, 0.0);
    }

    #[test]
    fn rotate_gain_examples() {
        let kf = Matrix6::from_diagonal(&Vector6::new(1.0, 2.0, 3.0, 1.0, 1.0, 1.0));
        assert_eq!(rotate_gain(&kf, &Rotation::identity()), kf);

        let r = Rotation::from_axis_angle(Vector3::new(0.3, -1.0, 2.0), 1.1);
        let iso = Matrix6::identity() * 2.0;
        assert_relative_eq!(rotate_gain(&iso, &r), iso, epsilon = 1e-14);

        let rz = Rotation::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let k = rotate_gain(&kf, &rz);
        // oracle: element-wise triple product
        let b = rz.block();
        let mut oracle = Matrix6::zeros();
        for i in 0..6 {
            for j in 0..6 {
                for m in 0..6 {
                    oracle[(i, j)] += b[(i, m)] * kf[(m, m)] * b[(j, m)];
                }
            }
        }
        assert_relative_eq!(k, oracle, epsilon = 1e-14);
        assert_relative_eq!(k[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(k[(1, 1)], 1.0, epsilon = 1e-14);
    }
}
