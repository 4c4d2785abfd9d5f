//! Z-buffered, flat-shaded triangle rasterizer.

use crate::math::Vec3;

use super::camera::{CameraPose, CameraRig};

pub type Rgb = [f32; 3];

#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub verts: [Vec3; 3],
    pub color: Rgb,
}

/// RGB color buffer plus inverse-depth buffer.
pub struct Framebuffer {
    pub size: usize,
    pub color: Vec<Rgb>,
    inv_depth: Vec<f64>,
}

impl Framebuffer {
    pub fn new(size: usize, clear: Rgb) -> Self {
        Self {
            size,
            color: vec![clear; size * size],
            inv_depth: vec![0.0; size * size],
        }
    }

    /// Box-filters `factor`×`factor` blocks into a `size/factor` square image,
    /// returned row-major with interleaved RGB.
    pub fn downsample(&self, factor: usize) -> Vec<f32> {
        let out = self.size / factor;
        let norm = 1.0 / (factor * factor) as f32;
        let mut img = Vec::with_capacity(out * out * 3);
        for r in 0..out {
            for c in 0..out {
                let mut acc = [0.0f32; 3];
                for dr in 0..factor {
                    let row = (r * factor + dr) * self.size;
                    for dc in 0..factor {
                        let px = self.color[row + c * factor + dc];
                        for k in 0..3 {
                            acc[k] += px[k];
                        }
                    }
                }
                img.extend(acc.iter().map(|a| (a * norm).clamp(0.0, 1.0)));
            }
        }
        img
    }
}

/// Clips a camera-space polygon against the `z = near` plane.
fn clip_near(poly: &[Vec3], near: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.z >= near;
        let b_in = b.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Draws world-space triangles as seen from `pose` into `fb`.
pub fn draw(fb: &mut Framebuffer, rig: &CameraRig, pose: &CameraPose, tris: &[Triangle]) {
    let size = fb.size;
    for tri in tris {
        let cam: Vec<Vec3> = tri.verts.iter().map(|&v| pose.to_camera(v)).collect();
        if cam.iter().all(|c| c.z < rig.near) || cam.iter().all(|c| c.z > rig.far) {
            continue;
        }
        let poly = clip_near(&cam, rig.near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<((f64, f64), f64)> = poly
            .iter()
            .map(|&c| (rig.camera_to_pixel(c, size), 1.0 / c.z))
            .collect();
        for k in 1..screen.len() - 1 {
            fill(fb, screen[0], screen[k], screen[k + 1], tri.color, 1.0 / rig.far);
        }
    }
}

fn fill(fb: &mut Framebuffer, a: ((f64, f64), f64), b: ((f64, f64), f64), c: ((f64, f64), f64), color: Rgb, min_inv_depth: f64) {
    let area = edge(a.0, b.0, c.0);
    if area.abs() < 1e-12 || !area.is_finite() {
        return;
    }
    let size = fb.size as f64;
    let min_x = a.0 .0.min(b.0 .0).min(c.0 .0).floor().max(0.0);
    let max_x = a.0 .0.max(b.0 .0).max(c.0 .0).ceil().min(size);
    let min_y = a.0 .1.min(b.0 .1).min(c.0 .1).floor().max(0.0);
    let max_y = a.0 .1.max(b.0 .1).max(c.0 .1).ceil().min(size);
    if min_x >= max_x || min_y >= max_y {
        return;
    }
    let inv_area = 1.0 / area;
    for py in min_y as usize..max_y as usize {
        for px in min_x as usize..max_x as usize {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let w0 = edge(b.0, c.0, p) * inv_area;
            let w1 = edge(c.0, a.0, p) * inv_area;
            let w2 = edge(a.0, b.0, p) * inv_area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // 1/z is affine in screen space
            let inv_z = w0 * a.1 + w1 * b.1 + w2 * c.1;
            let idx = py * fb.size + px;
            if inv_z >= min_inv_depth && inv_z > fb.inv_depth[idx] {
                fb.inv_depth[idx] = inv_z;
                fb.color[idx] = color;
            }
        }
    }
}
