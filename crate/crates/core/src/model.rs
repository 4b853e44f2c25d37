//! Kinematic tree model: links, joints and the topology derived from them.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::RigidTransform;

/// Name of the joint driven by the push-button rather than a potentiometer.
pub const GRIPPER_JOINT: &str = "gripper";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// Radians.
    pub lower: f64,
    /// Radians.
    pub upper: f64,
    /// Radians per second.
    pub max_velocity: f64,
}

impl JointLimits {
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.lower && angle <= self.upper
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.lower, self.upper)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub parent_link: String,
    pub child_link: String,
    pub origin: RigidTransform,
    /// Not normalized on input; a non-unit axis is reported by validation.
    pub axis: Vector3<f64>,
    pub limits: JointLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionBox {
    /// Box center in the link frame (m). Box axes are the link axes.
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    /// Kilograms.
    pub mass: f64,
    /// Center of mass in the link frame (m).
    pub com: Vector3<f64>,
    pub collision_box: Option<CollisionBox>,
}

/// Errors raised while building a model, either from URDF text or from parts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    XmlMalformed(String),
    #[error("<{element}> is missing required attribute `{attribute}`")]
    MissingAttribute { element: String, attribute: String },
    #[error("invalid value {value:?} for `{attribute}` on <{element}>")]
    InvalidValue {
        element: String,
        attribute: String,
        value: String,
    },
    #[error("joint `{joint}` references unknown link `{link}`")]
    UnresolvedLink { joint: String, link: String },
    #[error("joints form a cycle through links {0:?}")]
    CyclicTree(Vec<String>),
    #[error("model has more than one root link: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("joint `{joint}` has unsupported type `{kind}`")]
    UnsupportedJointType { joint: String, kind: String },
    #[error("invalid limits on joint `{joint}`: {reason}")]
    InvalidLimits { joint: String, reason: String },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("link `{link}` is the child of more than one joint")]
    MultipleParents { link: String },
    #[error("model has no links")]
    NoLinks,
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::XmlMalformed(_) => "XmlMalformed",
            ParseError::MissingAttribute { .. } => "MissingAttribute",
            ParseError::InvalidValue { .. } => "InvalidValue",
            ParseError::UnresolvedLink { .. } => "UnresolvedLink",
            ParseError::CyclicTree(_) => "CyclicTree",
            ParseError::MultipleRoots(_) => "MultipleRoots",
            ParseError::UnsupportedJointType { .. } => "UnsupportedJointType",
            ParseError::InvalidLimits { .. } => "InvalidLimits",
            ParseError::DuplicateName(_) => "DuplicateName",
            ParseError::MultipleParents { .. } => "MultipleParents",
            ParseError::NoLinks => "NoLinks",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Topology {
    link_index: HashMap<String, usize>,
    joint_parent: Vec<usize>,
    joint_child: Vec<usize>,
    /// Joint whose child is this link; `None` for the root.
    link_parent_joint: Vec<Option<usize>>,
    /// Joint indices of the actuated joints, in tree order.
    actuated: Vec<usize>,
    /// For each joint, the actuated slot it occupies.
    joint_slot: Vec<Option<usize>>,
    /// Links in the subtree below each joint (child link included).
    distal_links: Vec<Vec<usize>>,
    end_effector: usize,
}

/// An immutable, validated kinematic tree.
///
/// Links and joints are stored in depth-first tree order starting at the root
/// link, so every joint's parent link precedes its child.
#[derive(Debug, Clone, Serialize)]
pub struct RobotModel {
    name: String,
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
    actuated_joint_names: Vec<String>,
    end_effector_link: String,
    #[serde(skip)]
    topo: Topology,
}

impl PartialEq for RobotModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.links == other.links
            && self.joints == other.joints
            && self.actuated_joint_names == other.actuated_joint_names
            && self.end_effector_link == other.end_effector_link
    }
}

#[derive(Deserialize)]
struct RawModel {
    name: String,
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
    #[serde(default)]
    end_effector_link: Option<String>,
}

impl<'de> Deserialize<'de> for RobotModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawModel::deserialize(d)?;
        RobotModel::new(raw.name, raw.links, raw.joints, raw.end_effector_link)
            .map_err(serde::de::Error::custom)
    }
}

fn check_finite3(v: &Vector3<f64>, element: &str, attribute: &str) -> Result<(), ParseError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ParseError::InvalidValue {
            element: element.into(),
            attribute: attribute.into(),
            value: format!("{} {} {}", v.x, v.y, v.z),
        })
    }
}

impl RobotModel {
    /// Builds a model from parts, enforcing the tree invariants.
    ///
    /// When `end_effector_link` is `None` the deepest leaf link is used (ties
    /// go to the first in tree order).
    pub fn new(
        name: impl Into<String>,
        links: Vec<LinkSpec>,
        joints: Vec<JointSpec>,
        end_effector_link: Option<String>,
    ) -> Result<Self, ParseError> {
        if links.is_empty() {
            return Err(ParseError::NoLinks);
        }
        let mut link_index = HashMap::new();
        for (i, link) in links.iter().enumerate() {
            if link_index.insert(link.name.clone(), i).is_some() {
                return Err(ParseError::DuplicateName(link.name.clone()));
            }
            if !(link.mass >= 0.0 && link.mass.is_finite()) {
                return Err(ParseError::InvalidValue {
                    element: format!("link {}", link.name),
                    attribute: "mass".into(),
                    value: link.mass.to_string(),
                });
            }
            check_finite3(&link.com, &format!("link {}", link.name), "com")?;
            if let Some(b) = &link.collision_box {
                check_finite3(&b.center, &format!("link {}", link.name), "center")?;
                if !b.half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
                    return Err(ParseError::InvalidValue {
                        element: format!("link {} box", link.name),
                        attribute: "size".into(),
                        value: format!(
                            "{} {} {}",
                            2.0 * b.half_extents.x,
                            2.0 * b.half_extents.y,
                            2.0 * b.half_extents.z
                        ),
                    });
                }
            }
        }

        let mut joint_names = HashMap::new();
        let mut parent_of: Vec<Option<usize>> = vec![None; links.len()];
        for (j, joint) in joints.iter().enumerate() {
            if joint_names.insert(joint.name.clone(), j).is_some() {
                return Err(ParseError::DuplicateName(joint.name.clone()));
            }
            for link in [&joint.parent_link, &joint.child_link] {
                if !link_index.contains_key(link) {
                    return Err(ParseError::UnresolvedLink {
                        joint: joint.name.clone(),
                        link: link.clone(),
                    });
                }
            }
            let child = link_index[&joint.child_link];
            if parent_of[child].replace(j).is_some() {
                return Err(ParseError::MultipleParents {
                    link: joint.child_link.clone(),
                });
            }
            check_finite3(&joint.axis, &format!("joint {}", joint.name), "axis")?;
            check_finite3(
                &joint.origin.translation,
                &format!("joint {}", joint.name),
                "origin",
            )?;
            if joint.kind == JointKind::Revolute {
                let l = &joint.limits;
                if !(l.lower.is_finite() && l.upper.is_finite()) {
                    return Err(ParseError::InvalidLimits {
                        joint: joint.name.clone(),
                        reason: "limits must be finite".into(),
                    });
                }
                if l.lower > l.upper {
                    return Err(ParseError::InvalidLimits {
                        joint: joint.name.clone(),
                        reason: format!("lower {} exceeds upper {}", l.lower, l.upper),
                    });
                }
                if !(l.max_velocity > 0.0 && l.max_velocity.is_finite()) {
                    return Err(ParseError::InvalidLimits {
                        joint: joint.name.clone(),
                        reason: format!("velocity {} must be positive", l.max_velocity),
                    });
                }
            }
        }

        let roots: Vec<usize> = (0..links.len())
            .filter(|&i| parent_of[i].is_none())
            .collect();
        if roots.len() > 1 {
            return Err(ParseError::MultipleRoots(
                roots.iter().map(|&i| links[i].name.clone()).collect(),
            ));
        }
        let Some(&root) = roots.first() else {
            return Err(ParseError::CyclicTree(
                links.iter().map(|l| l.name.clone()).collect(),
            ));
        };

        // Children of each link, in input joint order.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for joint in &joints {
            children[link_index[&joint.parent_link]].push(link_index[&joint.child_link]);
        }

        // Depth-first preorder from the root.
        let mut link_order = Vec::with_capacity(links.len());
        let mut depth = vec![0usize; links.len()];
        let mut stack = vec![root];
        let mut visited = vec![false; links.len()];
        while let Some(l) = stack.pop() {
            visited[l] = true;
            link_order.push(l);
            for &c in children[l].iter().rev() {
                depth[c] = depth[l] + 1;
                stack.push(c);
            }
        }
        if link_order.len() != links.len() {
            return Err(ParseError::CyclicTree(
                (0..links.len())
                    .filter(|&i| !visited[i])
                    .map(|i| links[i].name.clone())
                    .collect(),
            ));
        }

        let leaf_depth = |l: usize| children[l].is_empty().then_some(depth[l]);
        let end_effector_link = match end_effector_link {
            Some(name) => {
                if !link_index.contains_key(&name) {
                    return Err(ParseError::UnresolvedLink {
                        joint: "<end effector>".into(),
                        link: name,
                    });
                }
                name
            }
            None => {
                let mut best = link_order[0];
                let mut best_depth = None;
                for &l in &link_order {
                    if let Some(d) = leaf_depth(l) {
                        if best_depth.is_none_or(|b| d > b) {
                            best = l;
                            best_depth = Some(d);
                        }
                    }
                }
                links[best].name.clone()
            }
        };

        let mut new_links = Vec::with_capacity(links.len());
        let mut new_joints = Vec::with_capacity(joints.len());
        let mut links_opt: Vec<Option<LinkSpec>> = links.into_iter().map(Some).collect();
        let mut joints_opt: Vec<Option<JointSpec>> = joints.into_iter().map(Some).collect();
        for &l in &link_order {
            if let Some(j) = parent_of[l] {
                new_joints.push(joints_opt[j].take().expect("each joint visited once"));
            }
            new_links.push(links_opt[l].take().expect("each link visited once"));
        }

        Ok(Self::assemble(
            name.into(),
            new_links,
            new_joints,
            end_effector_link,
        ))
    }

    /// `links` and `joints` must already be in tree order and validated.
    fn assemble(
        name: String,
        links: Vec<LinkSpec>,
        joints: Vec<JointSpec>,
        end_effector_link: String,
    ) -> Self {
        let link_index: HashMap<String, usize> = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i))
            .collect();
        let joint_parent: Vec<usize> = joints.iter().map(|j| link_index[&j.parent_link]).collect();
        let joint_child: Vec<usize> = joints.iter().map(|j| link_index[&j.child_link]).collect();
        let mut link_parent_joint = vec![None; links.len()];
        for (j, &c) in joint_child.iter().enumerate() {
            link_parent_joint[c] = Some(j);
        }
        let mut actuated = Vec::new();
        let mut joint_slot = vec![None; joints.len()];
        for (j, joint) in joints.iter().enumerate() {
            if joint.kind == JointKind::Revolute {
                joint_slot[j] = Some(actuated.len());
                actuated.push(j);
            }
        }
        // A link is distal to joint j iff walking up from it passes through j.
        let mut distal_links = vec![Vec::new(); joints.len()];
        for l in 0..links.len() {
            let mut cur = link_parent_joint[l];
            while let Some(j) = cur {
                distal_links[j].push(l);
                cur = link_parent_joint[joint_parent[j]];
            }
        }
        let end_effector = link_index[&end_effector_link];
        let actuated_joint_names = actuated.iter().map(|&j| joints[j].name.clone()).collect();
        RobotModel {
            name,
            links,
            joints,
            actuated_joint_names,
            end_effector_link,
            topo: Topology {
                link_index,
                joint_parent,
                joint_child,
                link_parent_joint,
                actuated,
                joint_slot,
                distal_links,
                end_effector,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn actuated_joint_names(&self) -> &[String] {
        &self.actuated_joint_names
    }

    pub fn end_effector_link(&self) -> &str {
        &self.end_effector_link
    }

    pub fn end_effector_index(&self) -> usize {
        self.topo.end_effector
    }

    pub fn root_link(&self) -> &LinkSpec {
        &self.links[0]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.topo.link_index.get(name).copied()
    }

    pub fn joint_parent_index(&self, joint: usize) -> usize {
        self.topo.joint_parent[joint]
    }

    pub fn joint_child_index(&self, joint: usize) -> usize {
        self.topo.joint_child[joint]
    }

    pub fn link_parent_joint(&self, link: usize) -> Option<usize> {
        self.topo.link_parent_joint[link]
    }

    /// Number of actuated (revolute) joints, i.e. the length of a joint vector.
    pub fn dof(&self) -> usize {
        self.topo.actuated.len()
    }

    /// Joint indices of the actuated joints in slot order.
    pub fn actuated_joints(&self) -> &[usize] {
        &self.topo.actuated
    }

    pub fn actuated_joint(&self, slot: usize) -> &JointSpec {
        &self.joints[self.topo.actuated[slot]]
    }

    pub fn joint_slot(&self, joint: usize) -> Option<usize> {
        self.topo.joint_slot[joint]
    }

    pub fn distal_links(&self, joint: usize) -> &[usize] {
        &self.topo.distal_links[joint]
    }

    /// True when joint motion moves `link`.
    pub fn joint_moves_link(&self, joint: usize, link: usize) -> bool {
        self.topo.distal_links[joint].contains(&link)
    }

    /// Actuated slot of the push-button gripper joint, if the model has one.
    pub fn gripper_slot(&self) -> Option<usize> {
        self.actuated_joint_names
            .iter()
            .position(|n| n == GRIPPER_JOINT)
    }

    /// Actuated slots other than the gripper: the IK joint set and the
    /// potentiometer channels, in order.
    pub fn arm_slots(&self) -> Vec<usize> {
        let gripper = self.gripper_slot();
        (0..self.dof()).filter(|s| Some(*s) != gripper).collect()
    }

    /// True when `a` and `b` are joined directly by a joint.
    pub fn links_adjacent(&self, a: usize, b: usize) -> bool {
        let parent_is = |child: usize, parent: usize| {
            self.topo.link_parent_joint[child].is_some_and(|j| self.topo.joint_parent[j] == parent)
        };
        parent_is(a, b) || parent_is(b, a)
    }
}
