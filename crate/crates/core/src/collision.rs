//! Self-collision checks between per-link oriented bounding boxes.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{chain_frames, check_limits, JointState, KinematicsError};
use crate::model::RobotModel;
use crate::transform::RigidTransform;

/// Edge cross products shorter than this are treated as parallel edges.
const DEGENERATE_AXIS: f64 = 1e-9;

/// A link's collision box in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObbWorld {
    pub link_name: String,
    pub center: Vector3<f64>,
    /// Box axes as columns.
    pub axes: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl ObbWorld {
    pub fn transformed(&self, t: &RigidTransform) -> ObbWorld {
        ObbWorld {
            link_name: self.link_name.clone(),
            center: t.transform_point(&self.center),
            axes: t.rotation * self.axes,
            half_extents: self.half_extents,
        }
    }

    /// Projection radius of the box onto `axis` (scaled by `|axis|`).
    fn radius_along(&self, axis: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|i| self.half_extents[i] * self.axes.column(i).dot(axis).abs())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    /// Sorted; each pair ordered `(a, b)` with `a < b`.
    pub colliding_pairs: Vec<(String, String)>,
    pub checked_pairs: usize,
}

impl CollisionReport {
    pub fn is_clear(&self) -> bool {
        self.colliding_pairs.is_empty()
    }
}

/// World boxes for every link that has one, in link order.
pub fn world_boxes(model: &RobotModel, q: &JointState) -> Result<Vec<ObbWorld>, KinematicsError> {
    check_limits(model, &q.q)?;
    Ok(boxes_with_index(model, &q.q)
        .into_iter()
        .map(|(_, b)| b)
        .collect())
}

fn boxes_with_index(model: &RobotModel, q: &[f64]) -> Vec<(usize, ObbWorld)> {
    let frames = chain_frames(model, q);
    model
        .links()
        .iter()
        .enumerate()
        .filter_map(|(i, link)| {
            let b = link.collision_box.as_ref()?;
            let pose = &frames.links[i];
            Some((
                i,
                ObbWorld {
                    link_name: link.name.clone(),
                    center: pose.transform_point(&b.center),
                    axes: pose.rotation,
                    half_extents: b.half_extents,
                },
            ))
        })
        .collect()
}

/// Separating-axis test over the 15 candidate axes. Touching boxes intersect.
pub fn obb_intersect(a: &ObbWorld, b: &ObbWorld) -> bool {
    let t = b.center - a.center;
    let separated =
        |axis: &Vector3<f64>| t.dot(axis).abs() > a.radius_along(axis) + b.radius_along(axis);
    for i in 0..3 {
        if separated(&a.axes.column(i).into_owned()) || separated(&b.axes.column(i).into_owned()) {
            return false;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let axis = a.axes.column(i).cross(&b.axes.column(j));
            if axis.norm() < DEGENERATE_AXIS {
                continue;
            }
            if separated(&axis) {
                return false;
            }
        }
    }
    true
}

/// Tests every unordered pair of boxed links not joined directly by a joint.
pub fn check_self_collision(
    model: &RobotModel,
    q: &JointState,
) -> Result<CollisionReport, KinematicsError> {
    check_limits(model, &q.q)?;
    let boxes = boxes_with_index(model, &q.q);
    let mut report = CollisionReport::default();
    for (n, (ia, a)) in boxes.iter().enumerate() {
        for (ib, b) in &boxes[n + 1..] {
            if model.links_adjacent(*ia, *ib) {
                continue;
            }
            report.checked_pairs += 1;
            if obb_intersect(a, b) {
                let (x, y) = if a.link_name < b.link_name {
                    (a, b)
                } else {
                    (b, a)
                };
                report
                    .colliding_pairs
                    .push((x.link_name.clone(), y.link_name.clone()));
            }
        }
    }
    report.colliding_pairs.sort();
    Ok(report)
}
