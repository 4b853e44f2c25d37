//! URDF-subset reader and canonical writer.
//!
//! Supported elements: `robot`, `link` (`inertial` mass/origin, `collision`
//! with box geometry), `joint` (type `revolute` or `fixed`, `origin` xyz/rpy,
//! `axis`, `limit`). Anything else is skipped and reported as a warning.

use std::fmt::Write as _;

use nalgebra::Vector3;
use roxmltree::{Document, Node};

use crate::model::{
    CollisionBox, JointKind, JointLimits, JointSpec, LinkSpec, ParseError, RobotModel,
};
use crate::transform::RigidTransform;
use crate::validate::{Finding, FindingCode};

const TARA_URDF: &str = include_str!("../../../models/tara.urdf");

/// The bundled five-joint TARA model (`models/tara.urdf`).
pub fn builtin_tara_model() -> RobotModel {
    parse_urdf(TARA_URDF).expect("bundled model parses")
}

pub fn builtin_tara_urdf() -> &'static str {
    TARA_URDF
}

pub fn parse_urdf(text: &str) -> Result<RobotModel, ParseError> {
    parse_urdf_with_warnings(text).map(|(model, _)| model)
}

/// Parses and also returns a warning for every element that was ignored.
pub fn parse_urdf_with_warnings(text: &str) -> Result<(RobotModel, Vec<Finding>), ParseError> {
    let doc = Document::parse(text).map_err(|e| ParseError::XmlMalformed(e.to_string()))?;
    let mut reader = Reader {
        doc: &doc,
        warnings: Vec::new(),
    };
    let model = reader.robot(doc.root_element())?;
    Ok((model, reader.warnings))
}

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
    warnings: Vec<Finding>,
}

fn elements<'a, 'input>(node: Node<'a, 'input>) -> impl Iterator<Item = Node<'a, 'input>> {
    node.children().filter(|n| n.is_element())
}

fn required<'a>(node: Node<'a, '_>, element: &str, attribute: &str) -> Result<&'a str, ParseError> {
    node.attribute(attribute)
        .ok_or_else(|| ParseError::MissingAttribute {
            element: element.into(),
            attribute: attribute.into(),
        })
}

fn parse_f64(text: &str, element: &str, attribute: &str) -> Result<f64, ParseError> {
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::InvalidValue {
            element: element.into(),
            attribute: attribute.into(),
            value: text.into(),
        }),
    }
}

fn parse_vec3(text: &str, element: &str, attribute: &str) -> Result<Vector3<f64>, ParseError> {
    let invalid = || ParseError::InvalidValue {
        element: element.into(),
        attribute: attribute.into(),
        value: text.into(),
    };
    let mut out = [0.0; 3];
    let mut parts = text.split_whitespace();
    for slot in &mut out {
        let part = parts.next().ok_or_else(invalid)?;
        *slot = parse_f64(part, element, attribute).map_err(|_| invalid())?;
    }
    if parts.next().is_some() {
        return Err(invalid());
    }
    Ok(Vector3::from(out))
}

fn optional_vec3(
    node: Node<'_, '_>,
    element: &str,
    attribute: &str,
    default: Vector3<f64>,
) -> Result<Vector3<f64>, ParseError> {
    node.attribute(attribute)
        .map_or(Ok(default), |s| parse_vec3(s, element, attribute))
}

impl Reader<'_, '_> {
    fn location(&self, node: Node<'_, '_>) -> String {
        let pos = self.doc.text_pos_at(node.range().start);
        format!("line {}:{}", pos.row, pos.col)
    }

    fn ignore(&mut self, node: Node<'_, '_>, within: &str) {
        self.warnings.push(Finding::new(
            FindingCode::UnknownElement,
            format!("ignored <{}> in {within}", node.tag_name().name()),
            self.location(node),
        ));
    }

    fn robot(&mut self, node: Node<'_, '_>) -> Result<RobotModel, ParseError> {
        if node.tag_name().name() != "robot" {
            return Err(ParseError::XmlMalformed(format!(
                "root element is <{}>, expected <robot>",
                node.tag_name().name()
            )));
        }
        let name = required(node, "robot", "name")?.to_string();
        let mut links = Vec::new();
        let mut joints = Vec::new();
        for child in elements(node) {
            match child.tag_name().name() {
                "link" => links.push(self.link(child)?),
                "joint" => joints.push(self.joint(child)?),
                _ => self.ignore(child, "robot"),
            }
        }
        RobotModel::new(name, links, joints, None)
    }

    fn link(&mut self, node: Node<'_, '_>) -> Result<LinkSpec, ParseError> {
        let name = required(node, "link", "name")?.to_string();
        let within = format!("link {name}");
        let mut mass = 0.0;
        let mut com = Vector3::zeros();
        let mut collision_box = None;
        for child in elements(node) {
            match child.tag_name().name() {
                "inertial" => {
                    for part in elements(child) {
                        match part.tag_name().name() {
                            "mass" => {
                                let value = required(part, "mass", "value")?;
                                mass = parse_f64(value, "mass", "value")?;
                                if mass < 0.0 {
                                    return Err(ParseError::InvalidValue {
                                        element: "mass".into(),
                                        attribute: "value".into(),
                                        value: value.into(),
                                    });
                                }
                            }
                            "origin" => com = optional_vec3(part, "origin", "xyz", com)?,
                            _ => self.ignore(part, &within),
                        }
                    }
                }
                "collision" => {
                    if collision_box.is_some() {
                        self.warnings.push(Finding::new(
                            FindingCode::UnsupportedGeometry,
                            format!("{within}: only the first collision box is used"),
                            self.location(child),
                        ));
                        continue;
                    }
                    collision_box = self.collision(child, &within)?;
                }
                _ => self.ignore(child, &within),
            }
        }
        Ok(LinkSpec {
            name,
            mass,
            com,
            collision_box,
        })
    }

    fn collision(
        &mut self,
        node: Node<'_, '_>,
        within: &str,
    ) -> Result<Option<CollisionBox>, ParseError> {
        let mut center = Vector3::zeros();
        let mut rotated = false;
        let mut size = None;
        let mut unsupported = None;
        for part in elements(node) {
            match part.tag_name().name() {
                "origin" => {
                    center = optional_vec3(part, "origin", "xyz", center)?;
                    let rpy = optional_vec3(part, "origin", "rpy", Vector3::zeros())?;
                    rotated = rpy != Vector3::zeros();
                }
                "geometry" => {
                    for shape in elements(part) {
                        match shape.tag_name().name() {
                            "box" if size.is_none() => {
                                size = Some(parse_vec3(
                                    required(shape, "box", "size")?,
                                    "box",
                                    "size",
                                )?)
                            }
                            other => unsupported = Some(other.to_string()),
                        }
                    }
                }
                _ => self.ignore(part, within),
            }
        }
        let location = self.location(node);
        if let Some(shape) = unsupported {
            self.warnings.push(Finding::new(
                FindingCode::UnsupportedGeometry,
                format!("{within}: <{shape}> collision geometry is not supported"),
                location.clone(),
            ));
        }
        if rotated {
            self.warnings.push(Finding::new(
                FindingCode::UnsupportedGeometry,
                format!("{within}: rotated collision boxes are not supported; box dropped"),
                location,
            ));
            return Ok(None);
        }
        match size {
            Some(size) if size.iter().all(|s| *s > 0.0) => Ok(Some(CollisionBox {
                center,
                half_extents: size / 2.0,
            })),
            Some(size) => Err(ParseError::InvalidValue {
                element: "box".into(),
                attribute: "size".into(),
                value: format!("{} {} {}", size.x, size.y, size.z),
            }),
            None => Ok(None),
        }
    }

    fn joint(&mut self, node: Node<'_, '_>) -> Result<JointSpec, ParseError> {
        let name = required(node, "joint", "name")?.to_string();
        let element = format!("joint {name}");
        let kind = match required(node, "joint", "type")? {
            "revolute" => JointKind::Revolute,
            "fixed" => JointKind::Fixed,
            other => {
                return Err(ParseError::UnsupportedJointType {
                    joint: name,
                    kind: other.into(),
                })
            }
        };
        let mut parent = None;
        let mut child = None;
        let mut origin = RigidTransform::identity();
        let mut axis = Vector3::x();
        let mut limit = None;
        for part in elements(node) {
            match part.tag_name().name() {
                "parent" => parent = Some(required(part, "parent", "link")?.to_string()),
                "child" => child = Some(required(part, "child", "link")?.to_string()),
                "origin" => {
                    let xyz = optional_vec3(part, "origin", "xyz", Vector3::zeros())?;
                    let rpy = optional_vec3(part, "origin", "rpy", Vector3::zeros())?;
                    origin = RigidTransform::from_xyz_rpy(xyz.into(), rpy.into());
                }
                "axis" => axis = optional_vec3(part, "axis", "xyz", axis)?,
                "limit" => limit = Some(part),
                _ => self.ignore(part, &element),
            }
        }
        let missing = |attribute: &str| ParseError::MissingAttribute {
            element: element.clone(),
            attribute: attribute.into(),
        };
        let parent_link = parent.ok_or_else(|| missing("parent"))?;
        let child_link = child.ok_or_else(|| missing("child"))?;
        let limits = match kind {
            JointKind::Fixed => JointLimits {
                lower: 0.0,
                upper: 0.0,
                max_velocity: 0.0,
            },
            JointKind::Revolute => {
                let node = limit.ok_or_else(|| missing("limit"))?;
                let get = |attr: &str| {
                    node.attribute(attr)
                        .map_or(Ok(0.0), |s| parse_f64(s, "limit", attr))
                };
                JointLimits {
                    lower: get("lower")?,
                    upper: get("upper")?,
                    max_velocity: parse_f64(
                        required(node, "limit", "velocity")?,
                        "limit",
                        "velocity",
                    )?,
                }
            }
        };
        Ok(JointSpec {
            name,
            kind,
            parent_link,
            child_link,
            origin,
            axis,
            limits,
        })
    }
}

/// Formats with 9 significant digits, shortest form.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}")
        .parse()
        .expect("formatted float reparses");
    format!("{rounded}")
}

fn format_vec3(v: &Vector3<f64>) -> String {
    format!(
        "{} {} {}",
        format_float(v.x),
        format_float(v.y),
        format_float(v.z)
    )
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Canonical serialization: links then joints in tree order, fixed attribute
/// order, floats at 9 significant digits.
pub fn emit_urdf(model: &RobotModel) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    let _ = writeln!(out, "<robot name=\"{}\">", escape(model.name()));
    for link in model.links() {
        let _ = writeln!(out, "  <link name=\"{}\">", escape(&link.name));
        out.push_str("    <inertial>\n");
        let _ = writeln!(out, "      <origin xyz=\"{}\"/>", format_vec3(&link.com));
        let _ = writeln!(out, "      <mass value=\"{}\"/>", format_float(link.mass));
        out.push_str("    </inertial>\n");
        if let Some(b) = &link.collision_box {
            out.push_str("    <collision>\n");
            let _ = writeln!(out, "      <origin xyz=\"{}\"/>", format_vec3(&b.center));
            out.push_str("      <geometry>\n");
            let _ = writeln!(
                out,
                "        <box size=\"{}\"/>",
                format_vec3(&(b.half_extents * 2.0))
            );
            out.push_str("      </geometry>\n");
            out.push_str("    </collision>\n");
        }
        out.push_str("  </link>\n");
    }
    for joint in model.joints() {
        let kind = match joint.kind {
            JointKind::Revolute => "revolute",
            JointKind::Fixed => "fixed",
        };
        let _ = writeln!(
            out,
            "  <joint name=\"{}\" type=\"{kind}\">",
            escape(&joint.name)
        );
        let _ = writeln!(out, "    <parent link=\"{}\"/>", escape(&joint.parent_link));
        let _ = writeln!(out, "    <child link=\"{}\"/>", escape(&joint.child_link));
        let rpy = Vector3::from(joint.origin.rpy());
        let _ = writeln!(
            out,
            "    <origin xyz=\"{}\" rpy=\"{}\"/>",
            format_vec3(&joint.origin.translation),
            format_vec3(&rpy)
        );
        let _ = writeln!(out, "    <axis xyz=\"{}\"/>", format_vec3(&joint.axis));
        if joint.kind == JointKind::Revolute {
            let l = &joint.limits;
            let _ = writeln!(
                out,
                "    <limit lower=\"{}\" upper=\"{}\" velocity=\"{}\"/>",
                format_float(l.lower),
                format_float(l.upper),
                format_float(l.max_velocity)
            );
        }
        out.push_str("  </joint>\n");
    }
    out.push_str("</robot>\n");
    out
}
