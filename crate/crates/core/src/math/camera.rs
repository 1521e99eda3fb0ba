use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera.
///
/// Camera space follows the computer-vision convention: +x right, +y down,
/// +z forward. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` and is sampled at
/// its center; the principal point is the image center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
    pub fov_x: f64,
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(
        world_to_camera: &Matrix4<f64>,
        fov_x: f64,
        fov_y: f64,
        near: f64,
        far: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam = Self {
            rotation: world_to_camera.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: world_to_camera.fixed_view::<3, 1>(0, 3).into_owned(),
            fov_x,
            fov_y,
            near,
            far,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` pointing toward -y in
    /// the image. Square pixels: `fov_y` derives from `fov_x` and the aspect.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_x: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("eye and target coincide"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("up is parallel to the view direction"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let fov_y = 2.0 * ((fov_x * 0.5).tan() * height as f64 / width as f64).atan();
        let cam = Self {
            rotation,
            translation,
            fov_x,
            fov_y,
            near: 0.01,
            far: 100.0,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid(format!(
                "camera planes must satisfy 0 < near < far (got {} / {})",
                self.near, self.far
            )));
        }
        if !fov_ok(self.fov_x) || !fov_ok(self.fov_y) {
            return Err(Error::invalid("camera field of view must lie in (0, π)"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation is not a proper rotation"));
        }
        Ok(())
    }

    pub fn focal_x(&self) -> f64 {
        self.width as f64 / (2.0 * (self.fov_x * 0.5).tan())
    }

    pub fn focal_y(&self) -> f64 {
        self.height as f64 / (2.0 * (self.fov_y * 0.5).tan())
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 * 0.5, self.height as f64 * 0.5)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn view_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Same intrinsics at a different resolution (focal lengths scale with it).
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..self.clone()
        }
    }

    /// Orbits the camera about `pivot` (world space): azimuth turns about the
    /// camera's vertical axis, elevation about its horizontal axis. Zero
    /// offsets return the camera unchanged bit for bit.
    pub fn orbit(&self, pivot: &Vector3<f64>, azimuth: f64, elevation: f64) -> Self {
        if azimuth == 0.0 && elevation == 0.0 {
            return self.clone();
        }
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        // Rotations expressed in camera axes, applied to the scene.
        let yaw = Matrix3::new(ca, 0.0, sa, 0.0, 1.0, 0.0, -sa, 0.0, ca);
        let pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, ce, -se, 0.0, se, ce);
        let spin_cam = pitch * yaw;
        // World-space rotation about the pivot: x ↦ Q (x − c) + c.
        let q = self.rotation.transpose() * spin_cam * self.rotation;
        let offset = pivot - q * pivot;
        let rotation = self.rotation * q;
        let translation = self.rotation * offset + self.translation;
        Self {
            rotation,
            translation,
            ..self.clone()
        }
    }
}
