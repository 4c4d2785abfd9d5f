//! Agent observations: the 20-float vector encoding and the 84×84 RGB image.
//!
//! The vector encoding needs the target position, which only the environment
//! model knows. The image is rendered from an [`EmbodiedView`], which carries
//! the agent's own pose and scene geometry but no notion of which object is
//! the target, where home is, or what phase the task is in.

pub mod camera;
pub mod raster;

use std::io::Write;

use crate::config::{CollectibleKind, SimConfig};
use crate::controller::AgentState;
use crate::error::{Error, Result};
use crate::math::{forward_from_yaw, normalize, right_from_yaw, Vec3};
use crate::world::{normalized_border, WorldState};

pub use camera::{CameraPose, CameraRig, Projection};
use raster::{Framebuffer, Rgb, Triangle};

pub const VECTOR_OBS_DIM: usize = 20;
pub const IMAGE_SIZE: usize = 84;
pub const IMAGE_LEN: usize = IMAGE_SIZE * IMAGE_SIZE * 3;

/// Component ranges inside [`ObservationVec`].
pub mod layout {
    use std::ops::Range;
    pub const D_TARGET: Range<usize> = 0..3;
    pub const D_BORDER: Range<usize> = 3..5;
    pub const V_LINEAR: Range<usize> = 5..8;
    pub const V_ANGULAR: Range<usize> = 8..11;
    pub const D_FORWARD: Range<usize> = 11..14;
    pub const D_UP: Range<usize> = 14..17;
    pub const P_LOCAL: Range<usize> = 17..20;
}

/// `d_target(3) d_border(2) v_linear(3) v_angular(3) d_forward(3) d_up(3) p_local(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationVec(pub [f64; VECTOR_OBS_DIM]);

impl ObservationVec {
    fn vec3(&self, r: std::ops::Range<usize>) -> Vec3 {
        Vec3::new(self.0[r.start], self.0[r.start + 1], self.0[r.start + 2])
    }

    pub fn d_target(&self) -> Vec3 {
        self.vec3(layout::D_TARGET)
    }

    pub fn d_border(&self) -> (f64, f64) {
        (self.0[3], self.0[4])
    }

    pub fn v_linear(&self) -> Vec3 {
        self.vec3(layout::V_LINEAR)
    }

    pub fn v_angular(&self) -> Vec3 {
        self.vec3(layout::V_ANGULAR)
    }

    pub fn d_forward(&self) -> Vec3 {
        self.vec3(layout::D_FORWARD)
    }

    pub fn d_up(&self) -> Vec3 {
        self.vec3(layout::D_UP)
    }

    pub fn p_local(&self) -> Vec3 {
        self.vec3(layout::P_LOCAL)
    }

    /// `‖d_border‖∞ < 1`.
    pub fn inside(&self) -> bool {
        let (x, z) = self.d_border();
        x.abs().max(z.abs()) < 1.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Vector observation toward `target`.
///
/// Fails with `DegenerateVector` when the agent sits exactly on the target;
/// [`observe_vector_or_forward`] substitutes the facing direction instead.
pub fn observe_vector(state: &WorldState, target: Vec3, cfg: &SimConfig) -> Result<ObservationVec> {
    let d_target = normalize(target - state.agent.pos)?;
    Ok(build_vector(&state.agent, d_target, cfg))
}

pub fn observe_vector_or_forward(state: &WorldState, target: Vec3, cfg: &SimConfig) -> ObservationVec {
    match observe_vector(state, target, cfg) {
        Ok(o) => o,
        Err(_) => build_vector(&state.agent, state.agent.forward(), cfg),
    }
}

fn build_vector(agent: &AgentState, d_target: Vec3, cfg: &SimConfig) -> ObservationVec {
    let (bx, bz) = normalized_border(agent.pos, cfg.arena_half_extent);
    let f = forward_from_yaw(agent.yaw);
    let mut o = [0.0; VECTOR_OBS_DIM];
    o[layout::D_TARGET].copy_from_slice(&d_target.to_array());
    o[3] = bx;
    o[4] = bz;
    o[layout::V_LINEAR].copy_from_slice(&agent.vel.to_array());
    o[layout::V_ANGULAR].copy_from_slice(&[0.0, agent.ang_vel.y, 0.0]);
    o[layout::D_FORWARD].copy_from_slice(&f.to_array());
    o[layout::D_UP].copy_from_slice(&Vec3::UP.to_array());
    o[layout::P_LOCAL].copy_from_slice(&agent.pos.to_array());
    ObservationVec(o)
}

/// 84×84×3 row-major RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationImg(Vec<f32>);

impl ObservationImg {
    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        if data.len() != IMAGE_LEN {
            return Err(Error::ShapeMismatch(format!("image has {} values, expected {IMAGE_LEN}", data.len())));
        }
        Ok(Self(data))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * IMAGE_SIZE + col) * 3;
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    /// Binary PPM (P6, maxval 255, channel = round(255·v)).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n")?;
        let bytes: Vec<u8> = self.0.iter().map(|v| (255.0 * v).round().clamp(0.0, 255.0) as u8).collect();
        w.write_all(&bytes)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(IMAGE_LEN + 16);
        self.write_ppm(&mut buf).expect("writing to Vec");
        buf
    }
}

/// Something the camera can see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Renderable {
    pub kind: CollectibleKind,
    pub position: Vec3,
}

/// What an embodied agent can sense: its own pose and the visible scene.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbodiedView {
    pub agent: AgentState,
    pub objects: Vec<Renderable>,
    pub arena_half_extent: f64,
    pub border_width: f64,
}

impl EmbodiedView {
    pub fn of(state: &WorldState, cfg: &SimConfig) -> Self {
        Self {
            agent: state.agent,
            objects: state
                .collectibles
                .iter()
                .filter(|c| c.alive)
                .map(|c| Renderable {
                    kind: c.kind,
                    position: c.position,
                })
                .collect(),
            arena_half_extent: cfg.arena_half_extent,
            border_width: cfg.border_width,
        }
    }
}

pub mod palette {
    use super::Rgb;
    pub const GROUND: Rgb = [0.5, 0.5, 0.5];
    pub const BORDER: Rgb = [1.0, 1.0, 1.0];
    pub const CUBE: Rgb = [1.0, 0.0, 0.0];
    pub const COIN: Rgb = [1.0, 0.85, 0.0];
    pub const AGENT: Rgb = [0.55, 0.35, 0.17];
    pub const SKY: Rgb = [0.53, 0.81, 0.92];
}

const COIN_SEGMENTS: usize = 24;
const COIN_THICKNESS: f64 = 0.2;
const AGENT_SIZE: (f64, f64, f64) = (0.5, 0.7, 1.0); // width, height, length
const AGENT_CROUCH_HEIGHT: f64 = 0.45;

/// Upward-facing surfaces keep their palette color, vertical ones are dimmed.
fn shade(color: Rgb, verts: &[Vec3; 3]) -> Rgb {
    let n = (verts[1] - verts[0]).cross(verts[2] - verts[0]);
    let up = n.normalize().map(|n| n.y.abs()).unwrap_or(1.0);
    let k = (0.7 + 0.3 * up) as f32;
    [color[0] * k, color[1] * k, color[2] * k]
}

fn push_quad(tris: &mut Vec<Triangle>, q: [Vec3; 4], color: Rgb, shaded: bool) {
    for verts in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
        let color = if shaded { shade(color, &verts) } else { color };
        tris.push(Triangle { verts, color });
    }
}

fn ground_rect(tris: &mut Vec<Triangle>, x0: f64, x1: f64, z0: f64, z1: f64, color: Rgb) {
    push_quad(
        tris,
        [Vec3::new(x0, 0.0, z0), Vec3::new(x1, 0.0, z0), Vec3::new(x1, 0.0, z1), Vec3::new(x0, 0.0, z1)],
        color,
        false,
    );
}

/// Oriented box from its bottom-center, yaw and size.
fn push_box(tris: &mut Vec<Triangle>, base: Vec3, yaw: f64, w: f64, h: f64, l: f64, color: Rgb) {
    let f = forward_from_yaw(yaw) * (0.5 * l);
    let r = right_from_yaw(yaw) * (0.5 * w);
    let up = Vec3::UP * h;
    let c = |sf: f64, sr: f64, top: bool| base + f * sf + r * sr + if top { up } else { Vec3::ZERO };
    let b = [c(-1.0, -1.0, false), c(1.0, -1.0, false), c(1.0, 1.0, false), c(-1.0, 1.0, false)];
    let t = [c(-1.0, -1.0, true), c(1.0, -1.0, true), c(1.0, 1.0, true), c(-1.0, 1.0, true)];
    push_quad(tris, [b[0], b[1], b[2], b[3]], color, true);
    push_quad(tris, [t[0], t[1], t[2], t[3]], color, true);
    for i in 0..4 {
        let j = (i + 1) % 4;
        push_quad(tris, [b[i], b[j], t[j], t[i]], color, true);
    }
}

/// Upright disc with its axis along world z.
fn push_coin(tris: &mut Vec<Triangle>, center: Vec3, radius: f64, color: Rgb) {
    let half = 0.5 * COIN_THICKNESS;
    let ring = |side: f64| -> Vec<Vec3> {
        (0..COIN_SEGMENTS)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / COIN_SEGMENTS as f64;
                center + Vec3::new(radius * a.cos(), radius * a.sin(), side * half)
            })
            .collect()
    };
    let (left, right) = (ring(-1.0), ring(1.0));
    for (rim, side) in [(&left, -1.0), (&right, 1.0)] {
        let hub = center + Vec3::new(0.0, 0.0, side * half);
        for k in 0..COIN_SEGMENTS {
            let verts = [hub, rim[k], rim[(k + 1) % COIN_SEGMENTS]];
            tris.push(Triangle { verts, color: shade(color, &verts) });
        }
    }
    for k in 0..COIN_SEGMENTS {
        let n = (k + 1) % COIN_SEGMENTS;
        push_quad(tris, [left[k], left[n], right[n], right[k]], color, true);
    }
}

/// Triangle soup for everything visible in `view`.
pub fn scene_triangles(view: &EmbodiedView) -> Vec<Triangle> {
    let h = view.arena_half_extent;
    let inner = h - view.border_width;
    let mut tris = Vec::with_capacity(64 + view.objects.len() * 100);
    ground_rect(&mut tris, -inner, inner, -inner, inner, palette::GROUND);
    if view.border_width > 0.0 {
        ground_rect(&mut tris, -h, h, inner, h, palette::BORDER);
        ground_rect(&mut tris, -h, h, -h, -inner, palette::BORDER);
        ground_rect(&mut tris, inner, h, -inner, inner, palette::BORDER);
        ground_rect(&mut tris, -h, -inner, -inner, inner, palette::BORDER);
    }
    for o in &view.objects {
        match o.kind {
            CollectibleKind::Cube => {
                let base = Vec3::new(o.position.x, o.position.y - 0.5, o.position.z);
                push_box(&mut tris, base, 0.0, 1.0, 1.0, 1.0, palette::CUBE);
            }
            CollectibleKind::Coin => push_coin(&mut tris, o.position, 0.75, palette::COIN),
        }
    }
    let a = &view.agent;
    let height = if a.crouching { AGENT_CROUCH_HEIGHT } else { AGENT_SIZE.1 };
    push_box(&mut tris, a.pos, a.yaw, AGENT_SIZE.0, height, AGENT_SIZE.2, palette::AGENT);
    tris
}

/// Renders the third-person view at `resolution × supersample` and box-filters
/// it down to the observation size.
pub fn observe_visual(view: &EmbodiedView, rig: &CameraRig) -> ObservationImg {
    let ss = rig.supersample.max(1);
    let mut fb = Framebuffer::new(rig.resolution * ss, palette::SKY);
    raster::draw(&mut fb, rig, &rig.pose(&view.agent), &scene_triangles(view));
    ObservationImg(fb.downsample(ss))
}
