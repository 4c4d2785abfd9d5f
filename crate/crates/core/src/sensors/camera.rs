//! Third-person camera rig and pinhole projection.

use serde::{Deserialize, Serialize};

use crate::controller::AgentState;
use crate::math::{forward_from_yaw, right_from_yaw, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    /// Distance behind the agent, meters.
    pub offset_back: f64,
    /// Height above the agent's feet, meters.
    pub height: f64,
    /// Degrees; negative looks down.
    pub pitch_deg: f64,
    /// Vertical field of view, degrees.
    pub vfov_deg: f64,
    pub near: f64,
    pub far: f64,
    /// Output image side, pixels.
    pub resolution: usize,
    /// Internal render scale before box-filter downsampling.
    pub supersample: usize,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            offset_back: 2.0,
            height: 1.5,
            pitch_deg: -10.0,
            vfov_deg: 60.0,
            near: 0.1,
            far: 200.0,
            resolution: 84,
            supersample: 2,
        }
    }
}

/// Camera placed behind an agent: origin plus orthonormal basis.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    pub origin: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl CameraPose {
    /// World point to camera coordinates `(x right, y up, z depth)`.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates in the output image (pixel `i` spans
    /// `[i, i+1)`) and camera-space depth.
    Visible { u: f64, v: f64, depth: f64 },
    Behind,
}

impl CameraRig {
    /// Camera pose for an agent; yaw always follows the agent.
    pub fn pose(&self, agent: &AgentState) -> CameraPose {
        let f = forward_from_yaw(agent.yaw);
        let right = right_from_yaw(agent.yaw);
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let forward = f * cp + Vec3::UP * sp;
        let up = Vec3::UP * cp - f * sp;
        CameraPose {
            origin: agent.pos - f * self.offset_back + Vec3::UP * self.height,
            right,
            up,
            forward,
        }
    }

    /// Focal length in pixels for an image `size` pixels tall.
    pub fn focal_px(&self, size: usize) -> f64 {
        0.5 * size as f64 / (0.5 * self.vfov_deg.to_radians()).tan()
    }

    /// Camera-space point to continuous pixel coordinates for a `size`² image.
    pub fn camera_to_pixel(&self, c: Vec3, size: usize) -> (f64, f64) {
        let f = self.focal_px(size);
        let half = 0.5 * size as f64;
        (half + f * c.x / c.z, half - f * c.y / c.z)
    }

    /// Projects a world point into the output image of an agent's camera.
    pub fn project_point(&self, world_point: Vec3, agent: &AgentState) -> Projection {
        let c = self.pose(agent).to_camera(world_point);
        if c.z <= self.near {
            return Projection::Behind;
        }
        let (u, v) = self.camera_to_pixel(c, self.resolution);
        Projection::Visible { u, v, depth: c.z }
    }
}
