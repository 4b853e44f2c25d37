//! Independent oracles and fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use armsim_core::{JointState, ObbWorld, RobotModel};
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(repo_root().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn load_pose(name: &str) -> JointState {
    serde_json::from_str(&read_fixture(&format!("poses/{name}.json"))).unwrap()
}

pub fn pose_corpus() -> Vec<(String, JointState)> {
    let mut out: Vec<_> = std::fs::read_dir(repo_root().join("poses"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name.clone(), load_pose(&name))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn random_q(model: &RobotModel, rng: &mut ChaCha8Rng) -> JointState {
    random_q_inset(model, rng, 0.0)
}

/// Uniform within the limits shrunk by `inset` on both sides.
pub fn random_q_inset(model: &RobotModel, rng: &mut ChaCha8Rng, inset: f64) -> JointState {
    JointState::new(
        (0..model.dof())
            .map(|s| {
                let l = &model.actuated_joint(s).limits;
                let (lo, hi) = (l.lower + inset, l.upper - inset);
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    l.lower
                }
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// 4×4 homogeneous chain read straight from the URDF text.

pub struct OracleJoint {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub revolute: bool,
    pub origin: Matrix4<f64>,
    pub axis: Vector3<f64>,
}

pub struct OracleChain {
    pub joints: Vec<OracleJoint>,
}

fn triple(s: Option<&str>, default: [f64; 3]) -> [f64; 3] {
    match s {
        None => default,
        Some(s) => {
            let v: Vec<f64> = s.split_whitespace().map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        }
    }
}

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, c, -s, 0.0, //
        0.0, s, c, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn rot_y(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        c, 0.0, s, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -s, 0.0, c, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        c, -s, 0.0, 0.0, //
        s, c, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn translation(p: [f64; 3]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = p[0];
    m[(1, 3)] = p[1];
    m[(2, 3)] = p[2];
    m
}

/// Rodrigues rotation about a unit axis, as a 4×4 matrix.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    let r = Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos());
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m
}

impl OracleChain {
    pub fn from_urdf(text: &str) -> Self {
        let doc = roxmltree::Document::parse(text).unwrap();
        let joints = doc
            .root_element()
            .children()
            .filter(|n| n.has_tag_name("joint"))
            .map(|j| {
                let child_attr = |tag: &str, attr: &str| {
                    j.children()
                        .find(|c| c.has_tag_name(tag))
                        .and_then(|c| c.attribute(attr))
                };
                let xyz = triple(child_attr("origin", "xyz"), [0.0; 3]);
                let rpy = triple(child_attr("origin", "rpy"), [0.0; 3]);
                let axis = triple(child_attr("axis", "xyz"), [1.0, 0.0, 0.0]);
                OracleJoint {
                    name: j.attribute("name").unwrap().into(),
                    parent: child_attr("parent", "link").unwrap().into(),
                    child: child_attr("child", "link").unwrap().into(),
                    revolute: j.attribute("type") == Some("revolute"),
                    origin: translation(xyz) * rot_z(rpy[2]) * rot_y(rpy[1]) * rot_x(rpy[0]),
                    axis: Vector3::from(axis),
                }
            })
            .collect();
        Self { joints }
    }

    /// World pose of `link`, with joint angles looked up by joint name.
    pub fn link_pose(&self, link: &str, angle: &dyn Fn(&str) -> f64) -> Matrix4<f64> {
        match self.joints.iter().find(|j| j.child == link) {
            None => Matrix4::identity(),
            Some(j) => {
                let motion = if j.revolute {
                    rodrigues(&j.axis, angle(&j.name))
                } else {
                    Matrix4::identity()
                };
                self.link_pose(&j.parent, angle) * j.origin * motion
            }
        }
    }

    pub fn point(&self, link: &str, angle: &dyn Fn(&str) -> f64) -> Vector3<f64> {
        let p = self.link_pose(link, angle) * Vector4::new(0.0, 0.0, 0.0, 1.0);
        Vector3::new(p.x, p.y, p.z)
    }
}

/// Angle lookup for the oracle from a model's actuated-joint vector.
pub fn angles<'a>(model: &'a RobotModel, q: &'a [f64]) -> impl Fn(&str) -> f64 + 'a {
    move |name: &str| {
        let slot = model
            .actuated_joint_names()
            .iter()
            .position(|n| n == name)
            .unwrap();
        q[slot]
    }
}

// ---------------------------------------------------------------------------
// Box intersection without separating axes.
//
// Two convex polytopes meet iff some edge of one touches the other solid
// (every vertex of the intersection lies on such an edge, or is a vertex of
// one inside the other, which is an edge endpoint). Each edge is clipped
// against the other box's slabs in its local frame.

pub fn corners(b: &ObbWorld) -> [Vector3<f64>; 8] {
    let mut out = [Vector3::zeros(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
        *c = b.center
            + b.axes.column(0) * (s(0) * b.half_extents.x)
            + b.axes.column(1) * (s(1) * b.half_extents.y)
            + b.axes.column(2) * (s(2) * b.half_extents.z);
    }
    out
}

fn edges(b: &ObbWorld) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let c = corners(b);
    let mut out = Vec::with_capacity(12);
    for i in 0..8 {
        for bit in 0..3 {
            if i & (1 << bit) == 0 {
                out.push((c[i], c[i | (1 << bit)]));
            }
        }
    }
    out
}

fn local(b: &ObbWorld, p: &Vector3<f64>) -> Vector3<f64> {
    b.axes.transpose() * (p - b.center)
}

/// Whether the segment `p0 → p1` touches the closed box.
fn segment_hits_box(p0: &Vector3<f64>, p1: &Vector3<f64>, b: &ObbWorld) -> bool {
    let (a, e) = (local(b, p0), local(b, p1));
    let d = e - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let h = b.half_extents[k];
        if d[k] == 0.0 {
            if a[k].abs() > h {
                return false;
            }
            continue;
        }
        let (mut lo, mut hi) = ((-h - a[k]) / d[k], (h - a[k]) / d[k]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

pub fn clip_oracle(a: &ObbWorld, b: &ObbWorld) -> bool {
    edges(a).iter().any(|(p, q)| segment_hits_box(p, q, b))
        || edges(b).iter().any(|(p, q)| segment_hits_box(p, q, a))
}

pub fn point_inside(b: &ObbWorld, p: &Vector3<f64>) -> bool {
    let l = local(b, p);
    (0..3).all(|k| l[k].abs() <= b.half_extents[k])
}

/// Rejection sampling: `n` uniform points in `a`, true if any lies in `b`.
/// Only a positive answer is conclusive.
pub fn sampled_overlap(a: &ObbWorld, b: &ObbWorld, n: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..n).any(|_| {
        let u = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let p = a.center + a.axes * u.component_mul(&a.half_extents);
        point_inside(b, &p)
    })
}

pub fn with_half_extents_offset(b: &ObbWorld, delta: f64) -> ObbWorld {
    ObbWorld {
        half_extents: b.half_extents.add_scalar(delta),
        ..b.clone()
    }
}

/// Uniform random rotation: a quaternion rejection-sampled in the unit ball.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    loop {
        let q = nalgebra::Vector4::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                q.w, q.x, q.y, q.z,
            ));
            return *uq.to_rotation_matrix().matrix();
        }
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> ObbWorld {
    ObbWorld {
        link_name: "box".into(),
        center: Vector3::new(
            rng.random_range(-spread..=spread),
            rng.random_range(-spread..=spread),
            rng.random_range(-spread..=spread),
        ),
        axes: random_rotation(rng),
        half_extents: Vector3::new(
            rng.random_range(0.05..=1.0),
            rng.random_range(0.05..=1.0),
            rng.random_range(0.05..=1.0),
        ),
    }
}

/// A random pair whose intersection status does not change when every
/// half-extent grows or shrinks by `margin`, with the oracle's verdict.
pub fn margin_pair(rng: &mut ChaCha8Rng, margin: f64) -> (ObbWorld, ObbWorld, bool) {
    loop {
        let a = random_box(rng, 1.2);
        let b = random_box(rng, 1.2);
        let grown = clip_oracle(
            &with_half_extents_offset(&a, margin),
            &with_half_extents_offset(&b, margin),
        );
        let shrunk = clip_oracle(
            &with_half_extents_offset(&a, -margin),
            &with_half_extents_offset(&b, -margin),
        );
        if grown == shrunk {
            return (a, b, grown);
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted sessions.

use armsim_core::sim::{CommandMessage, Mode};

/// A deterministic mixed-mode command script spread over `ticks` ticks.
pub fn scripted_commands(ticks: u64, rng: &mut ChaCha8Rng) -> Vec<(u64, CommandMessage)> {
    let mut out = Vec::new();
    let mut mode = Mode::Direct;
    let mut t = 1;
    while t < ticks {
        let cmd = match rng.random_range(0..10) {
            0 => {
                mode = if mode == Mode::Direct {
                    Mode::Pot
                } else {
                    Mode::Direct
                };
                CommandMessage::SetMode { mode }
            }
            1 | 2 if mode == Mode::Pot => CommandMessage::PotInput {
                adc: [
                    rng.random_range(0..=1023),
                    rng.random_range(0..=1023),
                    rng.random_range(0..=1023),
                    rng.random_range(0..=1023),
                ],
            },
            1 | 2 => CommandMessage::DirectTarget {
                q: vec![
                    rng.random_range(-1.5..=1.5),
                    rng.random_range(-1.5..=1.5),
                    rng.random_range(-2.5..=2.5),
                    rng.random_range(-1.9..=1.9),
                ],
            },
            3 => CommandMessage::IkGoal {
                target: [
                    rng.random_range(-0.2..=0.2),
                    rng.random_range(-0.2..=0.2),
                    rng.random_range(0.1..=0.35),
                ],
            },
            4 => CommandMessage::Button { pressed: true },
            5 => CommandMessage::Button { pressed: false },
            6 if rng.random_bool(0.1) => CommandMessage::Reset,
            // occasional malformed target
            7 if rng.random_bool(0.2) => CommandMessage::DirectTarget { q: vec![0.0; 2] },
            _ => CommandMessage::PotInput {
                adc: [512, 512, 512, 512],
            },
        };
        out.push((t, cmd));
        t += rng.random_range(1..=25);
    }
    out
}

/// Runs the script through a simulator and recorder; returns the record text.
pub fn record_session(
    model: std::sync::Arc<RobotModel>,
    script: &[(u64, CommandMessage)],
    ticks: u64,
) -> String {
    use armsim_core::sim::{Recorder, Simulator, DEFAULT_TICK_RATE};
    let mut sim = Simulator::new(model.clone(), DEFAULT_TICK_RATE);
    let mut rec = Recorder::new(Vec::new(), model.name(), DEFAULT_TICK_RATE).unwrap();
    let mut it = script.iter().peekable();
    for _ in 0..ticks {
        let now = sim.state().tick;
        while let Some((t, cmd)) = it.next_if(|(t, _)| *t == now) {
            sim.handle(cmd);
            rec.command(*t, cmd).unwrap();
        }
        rec.state(&sim.step()).unwrap();
    }
    String::from_utf8(rec.into_inner()).unwrap()
}
