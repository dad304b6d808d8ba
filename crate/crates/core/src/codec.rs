//! Continuous end-effector controls <-> discrete 7-integer actions.
//!
//! Translation is binned into `V` uniform voxels per axis of an axis-aligned
//! workspace box and decoded to voxel centers. Orientation goes through
//! Euler angles (extrinsic x-y-z, degrees) binned at resolution `Δ`.
//! Encoding clips out-of-range values, so it is total for finite input.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vec3 = [f64; 3];

/// Norm deviation tolerated before a quaternion is rejected.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

/// Angles this close below +180° are treated as −180° before binning, so
/// float noise from the quaternion conversion cannot push them into the
/// last bin.
pub const WRAP_SNAP_DEG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("{field} index {value} out of range [0, {max}]")]
    IndexOutOfRange { field: &'static str, value: u32, max: u32 },
    #[error("quaternion norm {norm} is not 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("gripper command must be 0 or 1, got {0}")]
    InvalidGripper(u32),
    #[error("invalid codec config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl WorkspaceBounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, CodecError> {
        let b = Self { min, max };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<(), CodecError> {
        for axis in 0..3 {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CodecError::InvalidConfig(format!(
                    "bounds axis {axis}: min {lo} must be < max {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

impl Default for WorkspaceBounds {
    fn default() -> Self {
        Self { min: [-0.5, -0.5, 0.0], max: [0.5, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EulerConvention {
    /// Rotations about the fixed x, then y, then z axes (roll, pitch, yaw).
    #[default]
    #[serde(rename = "extrinsic-xyz")]
    ExtrinsicXyz,
}

/// How a continuous angle is assigned to a rotation bin. Decoding always
/// yields `Δ·k − 180°`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationBinning {
    /// Bin whose decoded angle is nearest; ties go to the lower bin.
    #[default]
    Nearest,
    /// `⌊(θ + 180°)/Δ⌋`.
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub bins_per_axis: u32,
    pub angle_resolution_deg: f64,
    pub bounds: WorkspaceBounds,
    #[serde(default)]
    pub euler_convention: EulerConvention,
    #[serde(default)]
    pub rotation_binning: RotationBinning,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            bins_per_axis: 100,
            angle_resolution_deg: 5.0,
            bounds: WorkspaceBounds::default(),
            euler_convention: EulerConvention::ExtrinsicXyz,
            rotation_binning: RotationBinning::Nearest,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        self.bounds.check()?;
        if self.bins_per_axis < 2 {
            return Err(CodecError::InvalidConfig(format!(
                "bins_per_axis must be >= 2, got {}",
                self.bins_per_axis
            )));
        }
        let d = self.angle_resolution_deg;
        let n = 360.0 / d;
        if !(d > 0.0 && d <= 180.0 && (n - n.round()).abs() < 1e-9) {
            return Err(CodecError::InvalidConfig(format!("angle resolution {d} must divide 360")));
        }
        Ok(())
    }

    /// Per-axis voxel size `(b_max − b_min) / V`.
    pub fn resolution(&self) -> Vec3 {
        let v = f64::from(self.bins_per_axis);
        let b = &self.bounds;
        [(b.max[0] - b.min[0]) / v, (b.max[1] - b.min[1]) / v, (b.max[2] - b.min[2]) / v]
    }

    /// `⌊360 / Δ⌋`.
    pub fn rotation_bins(&self) -> u32 {
        (360.0 / self.angle_resolution_deg + 1e-9).floor() as u32
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

impl Serialize for Quaternion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Ok(Self { w, x, y, z })
    }
}

/// Executable control `u = [p, q, g]`; `g = 1` is open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousControl {
    pub position: Vec3,
    pub orientation: Quaternion,
    pub gripper: u8,
}

/// The LLM-facing `[ix, iy, iz, ir, ip, iψ, g]` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteAction {
    pub translation: [u32; 3],
    pub rotation: [u32; 3],
    pub gripper: u32,
}

impl DiscreteAction {
    pub fn new(values: [u32; 7]) -> Self {
        Self {
            translation: [values[0], values[1], values[2]],
            rotation: [values[3], values[4], values[5]],
            gripper: values[6],
        }
    }

    pub fn to_array(self) -> [u32; 7] {
        let [ix, iy, iz] = self.translation;
        let [ir, ip, iw] = self.rotation;
        [ix, iy, iz, ir, ip, iw, self.gripper]
    }

    /// Range check against a codec config.
    pub fn check(&self, cfg: &CodecConfig) -> Result<(), CodecError> {
        check_translation(&self.translation, cfg)?;
        check_rotation(&self.rotation, cfg)?;
        if self.gripper > 1 {
            return Err(CodecError::InvalidGripper(self.gripper));
        }
        Ok(())
    }
}

impl fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "[{}, {}, {}, {}, {}, {}, {}]", a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }
}

impl Serialize for DiscreteAction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteAction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Self::new(<[u32; 7]>::deserialize(d)?))
    }
}

const TRANSLATION_FIELDS: [&str; 3] = ["ix", "iy", "iz"];
const ROTATION_FIELDS: [&str; 3] = ["i_roll", "i_pitch", "i_yaw"];

fn check_translation(i: &[u32; 3], cfg: &CodecConfig) -> Result<(), CodecError> {
    let max = cfg.bins_per_axis - 1;
    for (axis, &value) in i.iter().enumerate() {
        if value > max {
            return Err(CodecError::IndexOutOfRange { field: TRANSLATION_FIELDS[axis], value, max });
        }
    }
    Ok(())
}

fn check_rotation(k: &[u32; 3], cfg: &CodecConfig) -> Result<(), CodecError> {
    let max = cfg.rotation_bins() - 1;
    for (axis, &value) in k.iter().enumerate() {
        if value > max {
            return Err(CodecError::IndexOutOfRange { field: ROTATION_FIELDS[axis], value, max });
        }
    }
    Ok(())
}

fn clip_index(raw: f64, max: u32) -> u32 {
    // NaN saturates to 0 through the cast.
    raw.clamp(0.0, f64::from(max)) as u32
}

/// Voxel index per axis, clipped to `[0, V−1]`.
pub fn encode_translation(p: &Vec3, cfg: &CodecConfig) -> [u32; 3] {
    let r = cfg.resolution();
    let max = cfg.bins_per_axis - 1;
    std::array::from_fn(|a| clip_index(((p[a] - cfg.bounds.min[a]) / r[a]).floor(), max))
}

/// Voxel-center position `b_min + r·i + r/2`.
pub fn decode_translation(i: &[u32; 3], cfg: &CodecConfig) -> Result<Vec3, CodecError> {
    check_translation(i, cfg)?;
    let r = cfg.resolution();
    Ok(std::array::from_fn(|a| cfg.bounds.min[a] + r[a] * f64::from(i[a]) + r[a] / 2.0))
}

/// Wraps an angle in degrees to `[−180, 180)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut w = (angle + 180.0).rem_euclid(360.0);
    if w >= 360.0 {
        w -= 360.0;
    }
    w - 180.0
}

/// Rotation bins for Euler angles in degrees; angles are wrapped first and
/// bins clipped to `[0, ⌊360/Δ⌋ − 1]`.
pub fn encode_rotation(theta: &Vec3, cfg: &CodecConfig) -> [u32; 3] {
    let max = cfg.rotation_bins() - 1;
    let d = cfg.angle_resolution_deg;
    std::array::from_fn(|a| {
        let w = wrap_degrees(theta[a]);
        let w = if 180.0 - w < WRAP_SNAP_DEG { -180.0 } else { w };
        let t = (w + 180.0) / d;
        let k = match cfg.rotation_binning {
            RotationBinning::Nearest => (t - 0.5).ceil(),
            RotationBinning::Floor => t.floor(),
        };
        clip_index(k, max)
    })
}

/// `θ = Δ·k − 180°`.
pub fn decode_rotation(k: &[u32; 3], cfg: &CodecConfig) -> Result<Vec3, CodecError> {
    check_rotation(k, cfg)?;
    let d = cfg.angle_resolution_deg;
    Ok(std::array::from_fn(|a| d * f64::from(k[a]) - 180.0))
}

/// Roll, pitch, yaw in degrees, each in `[−180, 180)`; pitch lies in
/// `[−90, 90]`. At gimbal lock roll is fixed to 0.
pub fn quat_to_euler(q: &Quaternion) -> Result<Vec3, CodecError> {
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_TOLERANCE {
        return Err(CodecError::NonUnitQuaternion { norm });
    }
    let Quaternion { w, x, y, z } = q.normalized();
    let sin_pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let (roll, pitch, yaw) = if sin_pitch.abs() > 1.0 - 1e-12 {
        // R01 = 2(xy − wz), R11 = 1 − 2(x² + z²)
        let yaw = (-2.0 * (x * y - w * z)).atan2(1.0 - 2.0 * (x * x + z * z));
        (0.0, sin_pitch.signum() * std::f64::consts::FRAC_PI_2, yaw)
    } else {
        (
            (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y)),
            sin_pitch.asin(),
            (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z)),
        )
    };
    Ok([wrap_degrees(roll.to_degrees()), wrap_degrees(pitch.to_degrees()), wrap_degrees(yaw.to_degrees())])
}

/// Unit quaternion for extrinsic x-y-z Euler angles in degrees.
pub fn euler_to_quat(theta: &Vec3) -> Quaternion {
    let (sr, cr) = (theta[0].to_radians() / 2.0).sin_cos();
    let (sp, cp) = (theta[1].to_radians() / 2.0).sin_cos();
    let (sy, cy) = (theta[2].to_radians() / 2.0).sin_cos();
    Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )
    .normalized()
}

pub fn encode_action(u: &ContinuousControl, cfg: &CodecConfig) -> Result<DiscreteAction, CodecError> {
    if u.gripper > 1 {
        return Err(CodecError::InvalidGripper(u32::from(u.gripper)));
    }
    let euler = quat_to_euler(&u.orientation)?;
    Ok(DiscreteAction {
        translation: encode_translation(&u.position, cfg),
        rotation: encode_rotation(&euler, cfg),
        gripper: u32::from(u.gripper),
    })
}

pub fn decode_action(a: &DiscreteAction, cfg: &CodecConfig) -> Result<ContinuousControl, CodecError> {
    a.check(cfg)?;
    Ok(ContinuousControl {
        position: decode_translation(&a.translation, cfg)?,
        orientation: euler_to_quat(&decode_rotation(&a.rotation, cfg)?),
        gripper: a.gripper as u8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rotation matrix for extrinsic x-y-z angles, composed as Rz·Ry·Rx.
    fn matrix_from_euler(t: &Vec3) -> [[f64; 3]; 3] {
        let (r, p, y) = (t[0].to_radians(), t[1].to_radians(), t[2].to_radians());
        let rx = [[1.0, 0.0, 0.0], [0.0, r.cos(), -r.sin()], [0.0, r.sin(), r.cos()]];
        let ry = [[p.cos(), 0.0, p.sin()], [0.0, 1.0, 0.0], [-p.sin(), 0.0, p.cos()]];
        let rz = [[y.cos(), -y.sin(), 0.0], [y.sin(), y.cos(), 0.0], [0.0, 0.0, 1.0]];
        mul(&rz, &mul(&ry, &rx))
    }

    fn matrix_from_quat(q: &Quaternion) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *q;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
    }

    fn max_diff(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
        (0..9).map(|n| (a[n / 3][n % 3] - b[n / 3][n % 3]).abs()).fold(0.0, f64::max)
    }

    fn close3(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = CodecConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.rotation_bins(), 72);
        let mut bad = cfg;
        bad.angle_resolution_deg = 7.0;
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.bins_per_axis = 1;
        assert!(bad.validate().is_err());
        assert!(WorkspaceBounds::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn translation_examples() {
        let cfg = CodecConfig::default();
        assert_eq!(encode_translation(&[0.0, 0.0, 0.5], &cfg), [50, 50, 50]);
        assert_eq!(encode_translation(&cfg.bounds.min, &cfg), [0, 0, 0]);
        assert_eq!(encode_translation(&cfg.bounds.max, &cfg), [99, 99, 99]);
        assert_eq!(encode_translation(&[-9.0, 9.0, f64::NAN], &cfg), [0, 99, 0]);

        assert!(close3(&decode_translation(&[0, 0, 0], &cfg).unwrap(), &[-0.495, -0.495, 0.005], 1e-12));
        assert!(close3(&decode_translation(&[50, 50, 50], &cfg).unwrap(), &[0.005, 0.005, 0.505], 1e-12));
        assert!(close3(&decode_translation(&[99, 99, 99], &cfg).unwrap(), &[0.495, 0.495, 0.995], 1e-12));
        assert!(matches!(
            decode_translation(&[100, 0, 0], &cfg),
            Err(CodecError::IndexOutOfRange { field: "ix", value: 100, max: 99 })
        ));
    }

    #[test]
    fn rotation_examples() {
        let cfg = CodecConfig::default();
        assert_eq!(encode_rotation(&[-180.0; 3], &cfg), [0, 0, 0]);
        assert_eq!(encode_rotation(&[0.0, 90.0, -90.0], &cfg), [36, 54, 18]);
        assert_eq!(encode_rotation(&[180.0 - 1e-12; 3], &cfg), [0, 0, 0]);
        assert_eq!(encode_rotation(&[179.9; 3], &cfg)[0], 71);
        assert_eq!(decode_rotation(&[0, 0, 0], &cfg).unwrap(), [-180.0; 3]);
        assert_eq!(decode_rotation(&[36, 36, 36], &cfg).unwrap(), [0.0; 3]);
        assert_eq!(decode_rotation(&[71, 71, 71], &cfg).unwrap(), [175.0; 3]);
        assert!(decode_rotation(&[72, 0, 0], &cfg).is_err());
    }

    #[test]
    fn floor_binning_matches_literal_formula() {
        let cfg = CodecConfig { rotation_binning: RotationBinning::Floor, ..CodecConfig::default() };
        assert_eq!(encode_rotation(&[0.0, 90.0, -90.0], &cfg), [36, 54, 18]);
        assert_eq!(encode_rotation(&[179.9, 4.9, -0.1], &cfg), [71, 36, 35]);
        let nearest = CodecConfig::default();
        assert_eq!(encode_rotation(&[179.9, 4.9, -0.1], &nearest), [71, 37, 36]);
        // Ties resolve to the lower bin.
        assert_eq!(encode_rotation(&[2.5, -2.5, 0.0], &nearest), [36, 35, 36]);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_degrees(180.0), -180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert_eq!(wrap_degrees(540.0), -180.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        let w = wrap_degrees(-1e-20);
        assert!((-180.0..180.0).contains(&w));
    }

    #[test]
    fn euler_quaternion_examples() {
        assert_eq!(quat_to_euler(&Quaternion::IDENTITY).unwrap(), [0.0, 0.0, 0.0]);
        let h = std::f64::consts::FRAC_PI_4;
        let qz = Quaternion::new(h.cos(), 0.0, 0.0, h.sin());
        assert!(close3(&quat_to_euler(&qz).unwrap(), &[0.0, 0.0, 90.0], 1e-9));
        // The matrix oracle agrees that this quaternion is a +90° z rotation.
        assert!(max_diff(&matrix_from_quat(&qz), &matrix_from_euler(&[0.0, 0.0, 90.0])) < 1e-12);

        let q = euler_to_quat(&[0.0, 0.0, 90.0]);
        assert!((q.w - 0.5f64.sqrt()).abs() < 1e-12 && (q.z - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(euler_to_quat(&[0.0; 3]), Quaternion::IDENTITY);

        let back = quat_to_euler(&euler_to_quat(&[10.0, 20.0, 30.0])).unwrap();
        assert!(close3(&back, &[10.0, 20.0, 30.0], 1e-6));

        assert!(matches!(
            quat_to_euler(&Quaternion::new(2.0, 0.0, 0.0, 0.0)),
            Err(CodecError::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn gimbal_lock_fixes_roll() {
        for pitch in [90.0, -90.0] {
            let q = euler_to_quat(&[30.0, pitch, 40.0]);
            let e = quat_to_euler(&q).unwrap();
            assert_eq!(e[0], 0.0);
            assert!((e[1] - pitch).abs() < 1e-6);
            assert!(max_diff(&matrix_from_euler(&e), &matrix_from_quat(&q)) < 1e-6);
        }
    }

    #[test]
    fn action_examples() {
        let cfg = CodecConfig::default();
        let a = DiscreteAction::new([50, 50, 50, 36, 36, 36, 0]);
        let u = decode_action(&a, &cfg).unwrap();
        assert!((u.orientation.norm() - 1.0).abs() < 1e-9);
        assert_eq!(encode_action(&u, &cfg).unwrap(), a);
        let open = DiscreteAction::new([1, 2, 3, 40, 30, 20, 1]);
        let u = decode_action(&open, &cfg).unwrap();
        assert_eq!(u.gripper, 1);
        assert_eq!(encode_action(&u, &cfg).unwrap().gripper, 1);
        assert_eq!(a.to_string(), "[50, 50, 50, 36, 36, 36, 0]");
        assert!(matches!(
            decode_action(&DiscreteAction::new([0, 0, 0, 0, 0, 0, 2]), &cfg),
            Err(CodecError::InvalidGripper(2))
        ));
    }

    #[test]
    fn action_serializes_as_seven_integers() {
        let a = DiscreteAction::new([1, 2, 3, 4, 5, 6, 1]);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[1,2,3,4,5,6,1]");
        let back: DiscreteAction = serde_json::from_str("[1, 2, 3, 4, 5, 6, 1]").unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<DiscreteAction>("[1,2,3]").is_err());
    }

    #[test]
    fn per_axis_right_inverse_is_exhaustive() {
        let cfg = CodecConfig::default();
        for i in 0..cfg.bins_per_axis {
            let p = decode_translation(&[i; 3], &cfg).unwrap();
            assert_eq!(encode_translation(&p, &cfg), [i; 3]);
        }
        for k in 0..cfg.rotation_bins() {
            let t = decode_rotation(&[k; 3], &cfg).unwrap();
            assert_eq!(encode_rotation(&t, &cfg), [k; 3]);
        }
    }

    proptest! {
        #[test]
        fn encoding_is_total(p in prop::array::uniform3(-1e6f64..1e6), t in prop::array::uniform3(-1e4f64..1e4)) {
            let cfg = CodecConfig::default();
            prop_assert!(encode_translation(&p, &cfg).iter().all(|&i| i < 100));
            prop_assert!(encode_rotation(&t, &cfg).iter().all(|&k| k < 72));
        }

        #[test]
        fn translation_error_within_half_voxel(
            x in -0.5f64..0.5, y in -0.5f64..0.5, z in 0.0f64..1.0,
        ) {
            let cfg = CodecConfig::default();
            let r = cfg.resolution();
            let back = decode_translation(&encode_translation(&[x, y, z], &cfg), &cfg).unwrap();
            for (a, v) in [x, y, z].iter().enumerate() {
                prop_assert!((back[a] - v).abs() <= r[a] / 2.0 + 1e-12);
            }
        }

        #[test]
        fn euler_round_trip_away_from_gimbal_lock(
            r in -179.0f64..179.0, p in -89.0f64..89.0, y in -179.0f64..179.0,
        ) {
            let q = euler_to_quat(&[r, p, y]);
            prop_assert!((q.norm() - 1.0).abs() < 1e-9);
            let back = quat_to_euler(&q).unwrap();
            prop_assert!(close3(&back, &[r, p, y], 1e-6), "{:?} vs {:?}", back, [r, p, y]);
        }

        #[test]
        fn quaternion_matches_matrix_oracle(t in prop::array::uniform3(-180.0f64..180.0)) {
            let q = euler_to_quat(&t);
            prop_assert!(max_diff(&matrix_from_quat(&q), &matrix_from_euler(&t)) < 1e-12);
            let e = quat_to_euler(&q).unwrap();
            prop_assert!(max_diff(&matrix_from_euler(&e), &matrix_from_euler(&t)) < 1e-6);
        }
    }
}
