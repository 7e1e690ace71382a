use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};

/// Tolerance on `RᵀR = I` accepted when a transform is read from outside.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid transform: rotation followed by translation, lengths in mm.
///
/// Stored as a 3×3 rotation block plus a translation column; the implicit
/// bottom row of the homogeneous matrix is always `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", try_from = "TransformRepr")]
pub struct Transform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn from_translation(v: Vec3) -> Self {
        Self::translation(v.x, v.y, v.z)
    }

    /// Rotation about +X, angle in degrees (right-hand rule).
    pub fn rot_x(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::from_rotation_unchecked(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation about +Y, angle in degrees (right-hand rule).
    pub fn rot_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::from_rotation_unchecked(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Rotation about +Z, angle in degrees (right-hand rule).
    pub fn rot_z(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::from_rotation_unchecked(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation about an arbitrary axis through the origin.
    pub fn rotation_about(axis: Vec3, deg: f64) -> Result<Self, GeometryError> {
        if !axis.iter().all(|c| c.is_finite()) || axis.norm() == 0.0 {
            return Err(GeometryError::InvalidTransform("zero or non-finite rotation axis".into()));
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians());
        Ok(Self::from_rotation_unchecked(*rot.matrix()))
    }

    /// Intrinsic X-Y-Z Euler angles in degrees, applied as `Rz·Ry·Rx`.
    pub fn from_euler_deg(rx: f64, ry: f64, rz: f64) -> Self {
        Self::rot_z(rz).compose(&Self::rot_y(ry)).compose(&Self::rot_x(rx))
    }

    /// Builds a transform from parts, validating the rotation block.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    fn from_rotation_unchecked(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation_part(&self) -> Vec3 {
        self.translation
    }

    /// Matrix product `self · other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rigid inverse `(Rᵀ, −Rᵀp)`.
    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction; translation is ignored.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::InvalidTransform(
                "bottom row must be exactly (0, 0, 0, 1)".into(),
            ));
        }
        Self::from_parts(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Checks finiteness, `RᵀR = I` and `det R = +1`.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation block is not orthonormal (max |RᵀR − I| = {dev:e})"
            )));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(GeometryError::InvalidTransform("rotation has negative determinant".into()));
        }
        Ok(())
    }

    /// Largest absolute entry-wise difference between two homogeneous matrices.
    pub fn max_abs_diff(&self, other: &Transform) -> f64 {
        (self.to_matrix() - other.to_matrix()).abs().max()
    }

    /// Lexicographic total order over matrix entries, used to pick a
    /// canonical operand order in symmetric queries.
    pub(crate) fn total_cmp(&self, other: &Transform) -> std::cmp::Ordering {
        self.rotation
            .iter()
            .chain(self.translation.iter())
            .zip(other.rotation.iter().chain(other.translation.iter()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

/// Row-major 4×4 wire form.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    matrix: [[f64; 4]; 4],
}

impl From<Transform> for TransformRepr {
    fn from(t: Transform) -> Self {
        let m = t.to_matrix();
        let mut matrix = [[0.0; 4]; 4];
        for (r, row) in matrix.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        TransformRepr { matrix }
    }
}

impl TryFrom<TransformRepr> for Transform {
    type Error = GeometryError;

    fn try_from(r: TransformRepr) -> Result<Self, Self::Error> {
        let m = Matrix4::from_fn(|i, j| r.matrix[i][j]);
        Transform::from_matrix(&m)
    }
}
