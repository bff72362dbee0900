//! Field of the three-magnet actuation rig: two static magnets on the y axis
//! and one rotor above the working space. Everything here is SI.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};

pub const MU0: f64 = 4.0e-7 * PI;
pub const G: f64 = 9.81;

/// Dipole queries closer than this to a source centre are rejected.
pub const SINGULAR_EPS_M: f64 = 1.0e-3;
/// Central-difference step for gradient sampling.
pub const GRAD_STEP_M: f64 = 1.0e-4;
/// Half-extent of the cube around the centre where crawling is controlled.
pub const WORKSPACE_HALF_M: f64 = 0.025;

pub fn magnet_moment_from_remanence(remanence_t: f64, volume_m3: f64) -> Result<f64> {
    if !(remanence_t > 0.0) {
        return Err(invalid("remanence", "must be > 0"));
    }
    if !(volume_m3 > 0.0) {
        return Err(invalid("volume", "must be > 0"));
    }
    Ok(remanence_t / MU0 * volume_m3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
}

pub fn dipole_field(src: &DipoleSource, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let r = point - src.position;
    let d = r.norm();
    if d < SINGULAR_EPS_M {
        return Err(SimError::SingularPoint { dist_m: d, eps_m: SINGULAR_EPS_M });
    }
    let rh = r / d;
    Ok(MU0 / (4.0 * PI) * (3.0 * rh * rh.dot(&src.moment) - src.moment) / (d * d * d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationSetup {
    pub m_s: f64,
    pub m_r: f64,
    pub w: f64,
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ActuationSetup {
    fn default() -> Self {
        Self { m_s: 205.4, m_r: 133.0, w: 0.25975, h: 0.1905, alpha: 0.0, beta: 0.0 }
    }
}

impl ActuationSetup {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(invalid("w", "must be > 0"));
        }
        if !(self.h > 0.0) {
            return Err(invalid("h", "must be > 0"));
        }
        if !(self.m_s >= 0.0 && self.m_r >= 0.0) {
            return Err(invalid("moment", "must be >= 0"));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(invalid("angle", "must be finite"));
        }
        Ok(())
    }

    pub fn at_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_height(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// Rotor height that produces the requested maximum pose angle.
    pub fn with_pose_angle(self, phi_max: f64) -> Self {
        let by = static_field_y(&self);
        let h = (MU0 * self.m_r / (2.0 * PI * by * phi_max.tan())).cbrt();
        self.with_height(h)
    }

    fn yaw(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.beta)
    }

    /// Static pair first, rotor last.
    pub fn sources(&self) -> [DipoleSource; 3] {
        let q = self.yaw();
        let (s, c) = self.alpha.sin_cos();
        let stat = q * Vector3::new(0.0, self.m_s, 0.0);
        [
            DipoleSource { position: q * Vector3::new(0.0, self.w, 0.0), moment: stat },
            DipoleSource { position: q * Vector3::new(0.0, -self.w, 0.0), moment: stat },
            DipoleSource {
                position: Vector3::new(0.0, 0.0, self.h),
                moment: q * Vector3::new(self.m_r * s, 0.0, -self.m_r * c),
            },
        ]
    }
}

pub fn static_field_y(s: &ActuationSetup) -> f64 {
    MU0 * s.m_s / (PI * s.w.powi(3))
}

pub fn rotor_field_z_max(s: &ActuationSetup) -> f64 {
    MU0 * s.m_r / (2.0 * PI * s.h.powi(3))
}

pub fn rotor_field_x_max(s: &ActuationSetup) -> f64 {
    MU0 * s.m_r / (4.0 * PI * s.h.powi(3))
}

/// Closed-form field at the centre point.
pub fn setup_field_analytic(s: &ActuationSetup) -> Vector3<f64> {
    let (sa, ca) = s.alpha.sin_cos();
    let b = Vector3::new(-rotor_field_x_max(s) * sa, static_field_y(s), -rotor_field_z_max(s) * ca);
    s.yaw() * b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub b: Vector3<f64>,
    /// `grad[(i, j)] = dB_i / dx_j`
    pub grad: Matrix3<f64>,
    pub in_workspace: bool,
}

impl FieldSample {
    /// Gradient of |B|, i.e. the force per unit moment on a dipole aligned with B.
    pub fn grad_magnitude(&self) -> Vector3<f64> {
        match self.b.try_normalize(0.0) {
            Some(u) => self.grad.transpose() * u,
            None => Vector3::zeros(),
        }
    }
}

pub fn superposed_field(s: &ActuationSetup, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    let mut b = Vector3::zeros();
    for src in s.sources().iter() {
        b += dipole_field(src, p)?;
    }
    Ok(b)
}

pub fn setup_field_full(s: &ActuationSetup, p: &Vector3<f64>) -> Result<FieldSample> {
    setup_field_full_step(s, p, GRAD_STEP_M)
}

pub fn setup_field_full_step(s: &ActuationSetup, p: &Vector3<f64>, step: f64) -> Result<FieldSample> {
    if !(step > 0.0) {
        return Err(invalid("step", "must be > 0"));
    }
    let b = superposed_field(s, p)?;
    let mut grad = Matrix3::zeros();
    for j in 0..3 {
        let mut e = Vector3::zeros();
        e[j] = step;
        let d = (superposed_field(s, &(p + e))? - superposed_field(s, &(p - e))?) / (2.0 * step);
        grad.set_column(j, &d);
    }
    let in_workspace = p.iter().all(|c| c.abs() <= WORKSPACE_HALF_M);
    Ok(FieldSample { b, grad, in_workspace })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOrientation {
    pub theta: f64,
    pub phi: f64,
}

pub fn field_orientation(b: &Vector3<f64>) -> Result<FieldOrientation> {
    if b.norm() == 0.0 || !b.norm().is_finite() {
        return Err(SimError::ZeroField);
    }
    let theta = b.y.atan2(b.x).rem_euclid(2.0 * PI);
    let phi = b.z.atan2(b.x.hypot(b.y));
    Ok(FieldOrientation { theta, phi })
}

pub fn pose_angle_max(s: &ActuationSetup) -> f64 {
    rotor_field_z_max(s).atan2(static_field_y(s))
}

/// Orientation of the centre field at `n` evenly spaced rotor angles.
pub fn orientation_cycle(s: &ActuationSetup, n: usize) -> Result<Vec<(f64, FieldOrientation)>> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            Ok((a, field_orientation(&setup_field_analytic(&s.at_alpha(a)))?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleGradient {
    /// Largest |d|B|/dx_j| seen over the cycle.
    pub max_grad_magnitude: f64,
    /// Largest |dB_i/dx_j| seen over the cycle.
    pub max_tensor_entry: f64,
    pub max_trace_ratio: f64,
}

pub fn cycle_gradient(s: &ActuationSetup, p: &Vector3<f64>, n: usize) -> Result<CycleGradient> {
    let mut out = CycleGradient::default();
    for k in 0..n {
        let fs = setup_field_full(&s.at_alpha(2.0 * PI * k as f64 / n as f64), p)?;
        out.max_grad_magnitude = out.max_grad_magnitude.max(fs.grad_magnitude().amax());
        let m = fs.grad.amax();
        out.max_tensor_entry = out.max_tensor_entry.max(m);
        if m > 0.0 {
            out.max_trace_ratio = out.max_trace_ratio.max(fs.grad.trace().abs() / m);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Horizontal,
    Vertical,
    Inverted,
}

impl Surface {
    /// Empirical gradient needed to hold a unit on this surface, T/m.
    pub fn required_gradient(self) -> f64 {
        match self {
            Surface::Horizontal => 0.0,
            Surface::Vertical => 0.35,
            Surface::Inverted => 0.6,
        }
    }
}

impl std::str::FromStr for Surface {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Surface::Horizontal),
            "vertical" => Ok(Surface::Vertical),
            "inverted" => Ok(Surface::Inverted),
            other => Err(SimError::UnknownSurface(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityCheck {
    pub feasible: bool,
    pub required_gradient: f64,
    pub available_gradient: f64,
    pub ideal_lower_bound: f64,
}

pub fn gravity_check_with_available(
    surface: Surface,
    unit_mass_kg: f64,
    unit_moment: f64,
    available: f64,
) -> Result<GravityCheck> {
    if !(unit_mass_kg > 0.0) {
        return Err(invalid("unit_mass", "must be > 0"));
    }
    if !(unit_moment > 0.0) {
        return Err(invalid("unit_moment", "must be > 0"));
    }
    let required = surface.required_gradient();
    Ok(GravityCheck {
        feasible: available >= required,
        required_gradient: required,
        available_gradient: available,
        ideal_lower_bound: unit_mass_kg * G / unit_moment,
    })
}

/// Available gradient is the cycle maximum of |B|'s gradient at the centre.
pub fn gravity_compensation_check(
    s: &ActuationSetup,
    surface: Surface,
    unit_mass_kg: f64,
    unit_moment: f64,
) -> Result<GravityCheck> {
    let avail = cycle_gradient(s, &Vector3::zeros(), 72)?.max_grad_magnitude;
    gravity_check_with_available(surface, unit_mass_kg, unit_moment, avail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_from_magnet_blocks() {
        let ms = magnet_moment_from_remanence(1.345, 0.1106 * 0.089 * 0.0195).unwrap();
        let mr = magnet_moment_from_remanence(1.275, 0.0508f64.powi(3)).unwrap();
        assert!((ms - 205.4).abs() < 0.5, "{ms}");
        assert!((mr - 133.0).abs() < 0.5, "{mr}");
        assert_relative_eq!(magnet_moment_from_remanence(MU0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(magnet_moment_from_remanence(0.0, 1.0).is_err());
        assert!(magnet_moment_from_remanence(1.0, -1.0).is_err());
    }

    #[test]
    fn axial_and_equatorial() {
        let src = DipoleSource { position: Vector3::zeros(), moment: Vector3::z() };
        let ax = dipole_field(&src, &Vector3::new(0.0, 0.0, 0.1)).unwrap();
        let eq = dipole_field(&src, &Vector3::new(0.1, 0.0, 0.0)).unwrap();
        assert_relative_eq!(ax, Vector3::new(0.0, 0.0, 2e-4), epsilon = 1e-15);
        assert_relative_eq!(eq, Vector3::new(0.0, 0.0, -1e-4), epsilon = 1e-15);
        assert!(dipole_field(&src, &Vector3::new(0.0, 0.0, 5e-4)).is_err());
    }

    #[test]
    fn analytic_centre_values() {
        let s = ActuationSetup::default();
        let b0 = setup_field_analytic(&s) * 1e3;
        assert_relative_eq!(b0.y, 4.69, epsilon = 0.01);
        assert_relative_eq!(b0.z, -3.85, epsilon = 0.01);
        let b90 = setup_field_analytic(&s.at_alpha(PI / 2.0)) * 1e3;
        assert_relative_eq!(b90.x, -1.92, epsilon = 0.01);
        assert!(b90.z.abs() < 1e-12);
    }

    #[test]
    fn static_pair_cancels_off_axis() {
        let s = ActuationSetup { m_r: 0.0, ..Default::default() };
        let b = superposed_field(&s, &Vector3::zeros()).unwrap();
        assert!(b.x.abs() < 1e-18 && b.z.abs() < 1e-18);
    }

    #[test]
    fn workspace_flag() {
        let s = ActuationSetup::default();
        assert!(setup_field_full(&s, &Vector3::zeros()).unwrap().in_workspace);
        assert!(!setup_field_full(&s, &Vector3::new(0.03, 0.0, 0.0)).unwrap().in_workspace);
    }

    #[test]
    fn orientation_basics() {
        let o = field_orientation(&Vector3::new(0.0, 4.69e-3, 0.0)).unwrap();
        assert_relative_eq!(o.theta, PI / 2.0);
        assert_eq!(o.phi, 0.0);
        assert!(field_orientation(&Vector3::zeros()).is_err());
    }

    #[test]
    fn pose_angle_targets() {
        let s = ActuationSetup::default();
        assert!((pose_angle_max(&s.with_height(0.238)).to_degrees() - 22.8).abs() < 0.2);
        assert!((pose_angle_max(&s.with_height(0.182)).to_degrees() - 43.2).abs() < 0.2);
        assert_eq!(pose_angle_max(&ActuationSetup { m_r: 0.0, ..s }), 0.0);
        let p = pose_angle_max(&s.with_pose_angle(41f64.to_radians()));
        assert_relative_eq!(p.to_degrees(), 41.0, epsilon = 1e-9);
    }

    #[test]
    fn gravity_thresholds() {
        let m = 2.0 * magnet_moment_from_remanence(1.345, PI * 0.5e-3 * 0.5e-3 * 1e-3).unwrap();
        let c = gravity_check_with_available(Surface::Inverted, 20e-6, 1.68e-3, 0.7).unwrap();
        assert!(c.feasible);
        assert!((c.ideal_lower_bound - 0.117).abs() < 0.002);
        assert!((m - 1.68e-3).abs() < 0.01e-3, "{m}");
        let h = gravity_check_with_available(Surface::Horizontal, 20e-6, 1.68e-3, 0.0).unwrap();
        assert!(h.feasible);
        assert!("sideways".parse::<Surface>().is_err());
    }
}
