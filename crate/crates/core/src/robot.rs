//! Serial kinematic chains: parsing, validation and forward kinematics.
//!
//! Chains are described by a small URDF-like XML dialect:
//!
//! ```xml
//! <robot name="planar2">
//!   <origin xyz="0 0 0" rpy="0 0 0"/>              <!-- optional base pose -->
//!   <joint name="j0" type="revolute">
//!     <parent link="base"/>                          <!-- optional -->
//!     <child link="l0"/>                             <!-- optional -->
//!     <origin xyz="0 0 0" rpy="0 0 0"/>
//!     <axis xyz="0 0 1"/>
//!     <limit lower="-3.14" upper="3.14"/>
//!   </joint>
//!   <link name="l0">
//!     <segment from="0 0 0" to="1 0 0"/>
//!   </link>
//!   <!-- joint/link pairs repeat -->
//! </robot>
//! ```
//!
//! Joints and links alternate, each joint followed by the link it moves.
//! Joint `i` hangs off link `i - 1` (the first joint hangs off the base).

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose;

const AXIS_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RobotError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: u32, column: u32, message: String },
    #[error("structural error at {line}:{column}: {message}")]
    Structure { line: u32, column: u32, message: String },
    #[error("validation error at {line}:{column}: {message}")]
    Validation { line: u32, column: u32, message: String },
    #[error("invalid chain: {0}")]
    Invalid(String),
    #[error("joint configuration has {actual} values, chain has {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "revolute" => Some(JointKind::Revolute),
            "prismatic" => Some(JointKind::Prismatic),
            "fixed" => Some(JointKind::Fixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the parent frame (ignored for fixed joints).
    pub axis: [f64; 3],
    /// Transform from the parent link frame to the joint frame.
    pub origin: Pose,
    /// `[lower, upper]` in radians or meters.
    pub limits: [f64; 2],
}

impl JointSpec {
    pub fn revolute(name: impl Into<String>, origin: Pose, axis: [f64; 3], limits: [f64; 2]) -> Self {
        JointSpec { name: name.into(), kind: JointKind::Revolute, axis, origin, limits }
    }

    fn motion(&self, value: f64) -> Isometry3<f64> {
        let axis = Vector3::from(self.axis);
        match self.kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis), value),
            ),
            JointKind::Prismatic => {
                Isometry3::from_parts(Translation3::from(axis * value), UnitQuaternion::identity())
            }
            JointKind::Fixed => Isometry3::identity(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.kind == JointKind::Fixed {
            return Ok(());
        }
        let norm = Vector3::from(self.axis).norm();
        if !norm.is_finite() || (norm - 1.0).abs() > AXIS_NORM_TOL {
            return Err(format!("joint '{}' axis has norm {norm}, expected 1", self.name));
        }
        let [lo, hi] = self.limits;
        if !(lo <= hi) {
            return Err(format!("joint '{}' has inverted limits [{lo}, {hi}]", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    /// Drawable bone of the link, in the link's own frame.
    pub segment: [[f64; 3]; 2],
}

/// A world-frame line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Point3<f64>,
    pub end: Point3<f64>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(dof: usize) -> Self {
        JointConfig(vec![0.0; dof])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

/// A validated serial chain. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainFields", into = "ChainFields")]
pub struct KinematicChain {
    name: String,
    joints: Vec<JointSpec>,
    links: Vec<LinkSpec>,
    base_pose: Pose,
    dof: usize,
}

#[derive(Serialize, Deserialize)]
struct ChainFields {
    name: String,
    joints: Vec<JointSpec>,
    links: Vec<LinkSpec>,
    base_pose: Pose,
}

impl TryFrom<ChainFields> for KinematicChain {
    type Error = RobotError;
    fn try_from(f: ChainFields) -> Result<Self, RobotError> {
        KinematicChain::new(f.name, f.joints, f.links, f.base_pose)
    }
}

impl From<KinematicChain> for ChainFields {
    fn from(c: KinematicChain) -> Self {
        ChainFields { name: c.name, joints: c.joints, links: c.links, base_pose: c.base_pose }
    }
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        links: Vec<LinkSpec>,
        base_pose: Pose,
    ) -> Result<Self, RobotError> {
        if joints.len() != links.len() {
            return Err(RobotError::Invalid(format!(
                "{} joints but {} links",
                joints.len(),
                links.len()
            )));
        }
        for j in &joints {
            j.check().map_err(RobotError::Invalid)?;
        }
        for l in &links {
            if l.segment.iter().flatten().any(|v| !v.is_finite()) {
                return Err(RobotError::Invalid(format!("link '{}' has a non-finite segment", l.name)));
            }
        }
        let dof = joints.iter().filter(|j| j.kind != JointKind::Fixed).count();
        Ok(KinematicChain { name: name.into(), joints, links, base_pose, dof })
    }

    /// A planar arm in the world XY plane: revolute joints about +z, each
    /// link a bone of the given length along its local +x.
    pub fn planar(name: impl Into<String>, lengths: &[f64], limits: &[[f64; 2]]) -> Result<Self, RobotError> {
        assert_eq!(lengths.len(), limits.len());
        let mut joints = Vec::with_capacity(lengths.len());
        let mut links = Vec::with_capacity(lengths.len());
        let mut offset = 0.0;
        for (i, (&len, &lim)) in lengths.iter().zip(limits).enumerate() {
            joints.push(JointSpec::revolute(
                format!("joint{i}"),
                Pose::from_translation([offset, 0.0, 0.0]),
                [0.0, 0.0, 1.0],
                lim,
            ));
            links.push(LinkSpec { name: format!("link{i}"), segment: [[0.0; 3], [len, 0.0, 0.0]] });
            offset = len;
        }
        KinematicChain::new(name, joints, links, Pose::identity())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn base_pose(&self) -> &Pose {
        &self.base_pose
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Limits of the movable joints, in configuration order.
    pub fn movable_limits(&self) -> Vec<[f64; 2]> {
        self.joints.iter().filter(|j| j.kind != JointKind::Fixed).map(|j| j.limits).collect()
    }

    /// Sum of the drawable bone lengths.
    pub fn total_length(&self) -> f64 {
        self.links
            .iter()
            .map(|l| (Vector3::from(l.segment[1]) - Vector3::from(l.segment[0])).norm())
            .sum()
    }

    fn check_dim(&self, q: &JointConfig) -> Result<(), RobotError> {
        if q.len() != self.dof {
            return Err(RobotError::DimensionMismatch { expected: self.dof, actual: q.len() });
        }
        Ok(())
    }

    /// Clamps every value into its joint's limits. The flag reports whether
    /// anything moved.
    pub fn clamp(&self, q: &JointConfig) -> Result<(JointConfig, bool), RobotError> {
        self.check_dim(q)?;
        let mut clamped = false;
        let values = q
            .0
            .iter()
            .zip(self.movable_limits())
            .map(|(&v, [lo, hi])| {
                let c = v.clamp(lo, hi);
                clamped |= c != v;
                c
            })
            .collect();
        Ok((JointConfig(values), clamped))
    }

    /// World transforms of each link frame.
    pub fn link_frames(&self, q: &JointConfig) -> Result<Vec<Isometry3<f64>>, RobotError> {
        self.check_dim(q)?;
        let mut frame = *self.base_pose.isometry();
        let mut values = q.0.iter();
        let mut frames = Vec::with_capacity(self.joints.len());
        for joint in &self.joints {
            let value = if joint.kind == JointKind::Fixed { 0.0 } else { *values.next().unwrap() };
            frame = frame * joint.origin.isometry() * joint.motion(value);
            frames.push(frame);
        }
        Ok(frames)
    }

    /// Writes the chain back out in the document dialect parsed by [`parse_chain`].
    pub fn to_document(&self) -> String {
        fn v3(v: [f64; 3]) -> String {
            format!("{} {} {}", v[0], v[1], v[2])
        }
        let mut out = String::new();
        let _ = writeln!(out, "<robot name=\"{}\">", xml_escape(&self.name));
        let b = &self.base_pose;
        let _ = writeln!(out, "  <origin xyz=\"{}\" rpy=\"{}\"/>", v3(b.xyz()), v3(b.rpy()));
        let mut parent = "base".to_string();
        for (joint, link) in self.joints.iter().zip(&self.links) {
            let _ = writeln!(
                out,
                "  <joint name=\"{}\" type=\"{}\">",
                xml_escape(&joint.name),
                joint.kind.as_str()
            );
            let _ = writeln!(out, "    <parent link=\"{}\"/>", xml_escape(&parent));
            let _ = writeln!(out, "    <child link=\"{}\"/>", xml_escape(&link.name));
            let _ = writeln!(
                out,
                "    <origin xyz=\"{}\" rpy=\"{}\"/>",
                v3(joint.origin.xyz()),
                v3(joint.origin.rpy())
            );
            let _ = writeln!(out, "    <axis xyz=\"{}\"/>", v3(joint.axis));
            let _ = writeln!(out, "    <limit lower=\"{}\" upper=\"{}\"/>", joint.limits[0], joint.limits[1]);
            let _ = writeln!(out, "  </joint>");
            let _ = writeln!(out, "  <link name=\"{}\">", xml_escape(&link.name));
            let _ = writeln!(
                out,
                "    <segment from=\"{}\" to=\"{}\"/>",
                v3(link.segment[0]),
                v3(link.segment[1])
            );
            let _ = writeln!(out, "  </link>");
            parent = link.name.clone();
        }
        out.push_str("</robot>\n");
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;").replace('>', "&gt;")
}

/// World-frame bones of every link, base to end-effector.
pub fn forward_kinematics(chain: &KinematicChain, q: &JointConfig) -> Result<Vec<Segment>, RobotError> {
    let frames = chain.link_frames(q)?;
    Ok(frames
        .iter()
        .zip(&chain.links)
        .map(|(frame, link)| Segment {
            start: frame.transform_point(&Point3::from(link.segment[0])),
            end: frame.transform_point(&Point3::from(link.segment[1])),
        })
        .collect())
}

/// The second endpoint of the last link's bone.
pub fn end_effector(chain: &KinematicChain, q: &JointConfig) -> Result<Point3<f64>, RobotError> {
    let frames = chain.link_frames(q)?;
    let (frame, link) = frames
        .last()
        .zip(chain.links.last())
        .ok_or_else(|| RobotError::Invalid("chain has no links".into()))?;
    Ok(frame.transform_point(&Point3::from(link.segment[1])))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        w = PI;
    }
    w
}

struct Located<'a, 'input> {
    doc: &'a roxmltree::Document<'input>,
}

impl Located<'_, '_> {
    fn pos(&self, node: roxmltree::Node) -> (u32, u32) {
        let p = self.doc.text_pos_at(node.range().start);
        (p.row, p.col)
    }

    fn parse_err(&self, node: roxmltree::Node, message: impl Into<String>) -> RobotError {
        let (line, column) = self.pos(node);
        RobotError::Parse { line, column, message: message.into() }
    }

    fn structure_err(&self, node: roxmltree::Node, message: impl Into<String>) -> RobotError {
        let (line, column) = self.pos(node);
        RobotError::Structure { line, column, message: message.into() }
    }

    fn validation_err(&self, node: roxmltree::Node, message: impl Into<String>) -> RobotError {
        let (line, column) = self.pos(node);
        RobotError::Validation { line, column, message: message.into() }
    }

    fn attr<'n>(&self, node: roxmltree::Node<'n, '_>, name: &str) -> Result<&'n str, RobotError> {
        node.attribute(name)
            .ok_or_else(|| self.parse_err(node, format!("<{}> is missing attribute '{name}'", node.tag_name().name())))
    }

    fn numbers<const N: usize>(&self, node: roxmltree::Node, name: &str) -> Result<[f64; N], RobotError> {
        let text = self.attr(node, name)?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != N {
            return Err(self.parse_err(node, format!("attribute '{name}' needs {N} numbers, found {}", parts.len())));
        }
        let mut out = [0.0; N];
        for (slot, part) in out.iter_mut().zip(parts) {
            *slot = part
                .parse::<f64>()
                .map_err(|_| self.parse_err(node, format!("attribute '{name}': '{part}' is not a number")))?;
            if !slot.is_finite() {
                return Err(self.validation_err(node, format!("attribute '{name}' is not finite")));
            }
        }
        Ok(out)
    }

    fn origin(&self, node: roxmltree::Node) -> Result<Pose, RobotError> {
        let xyz = if node.has_attribute("xyz") { self.numbers::<3>(node, "xyz")? } else { [0.0; 3] };
        let rpy = if node.has_attribute("rpy") { self.numbers::<3>(node, "rpy")? } else { [0.0; 3] };
        Ok(Pose::new(xyz, rpy))
    }
}

struct ParsedJoint<'a, 'input> {
    spec: JointSpec,
    node: roxmltree::Node<'a, 'input>,
    parent: Option<String>,
    child: Option<String>,
}

/// Parses a chain document. Joint order follows document order.
pub fn parse_chain(doc: &str) -> Result<KinematicChain, RobotError> {
    let xml = roxmltree::Document::parse(doc).map_err(|e| {
        let p = e.pos();
        RobotError::Parse { line: p.row, column: p.col, message: e.to_string() }
    })?;
    let loc = Located { doc: &xml };
    let root = xml.root_element();
    if root.tag_name().name() != "robot" {
        return Err(loc.parse_err(root, format!("expected <robot>, found <{}>", root.tag_name().name())));
    }
    let name = root.attribute("name").unwrap_or("robot").to_string();

    let mut base_pose = Pose::identity();
    let mut joints: Vec<ParsedJoint> = Vec::new();
    let mut links: Vec<(LinkSpec, roxmltree::Node)> = Vec::new();

    for node in root.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "origin" => {
                if !joints.is_empty() {
                    return Err(loc.parse_err(node, "base <origin> must precede the first joint"));
                }
                base_pose = loc.origin(node)?;
            }
            "joint" => {
                if joints.len() != links.len() {
                    return Err(loc.structure_err(node, "two consecutive <joint> elements; each joint must be followed by its link"));
                }
                joints.push(parse_joint(&loc, node)?);
            }
            "link" => {
                if links.len() + 1 != joints.len() {
                    return Err(loc.structure_err(
                        node,
                        "<link> without a preceding <joint>; joints and links must alternate starting with a joint",
                    ));
                }
                links.push((parse_link(&loc, node)?, node));
            }
            other => return Err(loc.parse_err(node, format!("unsupported element <{other}>"))),
        }
    }
    if joints.is_empty() {
        return Err(loc.structure_err(root, "chain has no joints"));
    }
    if joints.len() != links.len() {
        let last = joints.last().unwrap().node;
        return Err(loc.structure_err(last, "last joint has no child link"));
    }

    // Parent/child declarations, when present, must describe one serial path.
    let link_names: Vec<&str> = links.iter().map(|(l, _)| l.name.as_str()).collect();
    let mut child_count = vec![0usize; links.len()];
    for (i, j) in joints.iter().enumerate() {
        if let Some(child) = &j.child {
            if child != link_names[i] {
                return Err(loc.structure_err(
                    j.node,
                    format!("joint '{}' declares child '{child}' but is followed by link '{}'", j.spec.name, link_names[i]),
                ));
            }
        }
        if let Some(parent) = &j.parent {
            match link_names.iter().position(|n| n == parent) {
                Some(p) => {
                    child_count[p] += 1;
                    if child_count[p] > 1 {
                        return Err(loc.structure_err(
                            j.node,
                            format!("link '{parent}' has more than one child joint; only serial chains are supported"),
                        ));
                    }
                    if p + 1 != i {
                        return Err(loc.structure_err(
                            j.node,
                            format!("joint '{}' hangs off link '{parent}', not the preceding link", j.spec.name),
                        ));
                    }
                }
                None if i == 0 => {}
                None => {
                    return Err(loc.structure_err(j.node, format!("joint '{}' names unknown parent link '{parent}'", j.spec.name)));
                }
            }
        }
    }

    let joints: Vec<JointSpec> = joints.into_iter().map(|j| j.spec).collect();
    let links: Vec<LinkSpec> = links.into_iter().map(|(l, _)| l).collect();
    KinematicChain::new(name, joints, links, base_pose)
}

fn parse_joint<'a, 'input>(
    loc: &Located<'_, 'input>,
    node: roxmltree::Node<'a, 'input>,
) -> Result<ParsedJoint<'a, 'input>, RobotError> {
    let name = loc.attr(node, "name")?.to_string();
    let kind_text = loc.attr(node, "type")?;
    let kind = JointKind::parse(kind_text)
        .ok_or_else(|| loc.parse_err(node, format!("unknown joint type '{kind_text}'")))?;
    let mut origin = Pose::identity();
    let mut axis = [1.0, 0.0, 0.0];
    let mut limits = [f64::NEG_INFINITY, f64::INFINITY];
    let mut parent = None;
    let mut child = None;
    for c in node.children().filter(|n| n.is_element()) {
        match c.tag_name().name() {
            "origin" => origin = loc.origin(c)?,
            "axis" => {
                axis = loc.numbers::<3>(c, "xyz")?;
                if kind != JointKind::Fixed {
                    let norm = Vector3::from(axis).norm();
                    if (norm - 1.0).abs() > AXIS_NORM_TOL {
                        return Err(loc.validation_err(c, format!("axis of joint '{name}' has norm {norm}, expected unit length")));
                    }
                }
            }
            "limit" => {
                let lo = loc.numbers::<1>(c, "lower")?[0];
                let hi = loc.numbers::<1>(c, "upper")?[0];
                if lo > hi {
                    return Err(loc.validation_err(c, format!("limits of joint '{name}' are inverted: lower {lo} > upper {hi}")));
                }
                limits = [lo, hi];
            }
            "parent" => parent = Some(loc.attr(c, "link")?.to_string()),
            "child" => child = Some(loc.attr(c, "link")?.to_string()),
            other => return Err(loc.parse_err(c, format!("unsupported element <{other}> in joint"))),
        }
    }
    if kind == JointKind::Fixed {
        limits = [0.0, 0.0];
    }
    Ok(ParsedJoint { spec: JointSpec { name, kind, axis, origin, limits }, node, parent, child })
}

fn parse_link(loc: &Located, node: roxmltree::Node) -> Result<LinkSpec, RobotError> {
    let name = loc.attr(node, "name")?.to_string();
    let mut segment = [[0.0; 3]; 2];
    for c in node.children().filter(|n| n.is_element()) {
        match c.tag_name().name() {
            "segment" => segment = [loc.numbers::<3>(c, "from")?, loc.numbers::<3>(c, "to")?],
            other => return Err(loc.parse_err(c, format!("unsupported element <{other}> in link"))),
        }
    }
    Ok(LinkSpec { name, segment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const PLANAR2: &str = r#"<robot name="planar2">
  <joint name="shoulder" type="revolute">
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.2" upper="3.2"/>
  </joint>
  <link name="upper">
    <segment from="0 0 0" to="1 0 0"/>
  </link>
  <joint name="elbow" type="revolute">
    <origin xyz="1 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.2" upper="3.2"/>
  </joint>
  <link name="fore">
    <segment from="0 0 0" to="1 0 0"/>
  </link>
</robot>"#;

    fn close(a: Point3<f64>, b: [f64; 3]) -> bool {
        (a - Point3::from(b)).norm() < 1e-12
    }

    #[test]
    fn parses_planar_arm() {
        let chain = parse_chain(PLANAR2).unwrap();
        assert_eq!(chain.dof(), 2);
        assert_eq!(chain.links().len(), 2);
        assert_eq!(chain.joints()[0].name, "shoulder");
        assert_eq!(chain.joints()[1].origin.xyz(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn branching_is_a_structural_error() {
        let doc = r#"<robot>
  <joint name="a" type="revolute"><axis xyz="0 0 1"/></joint>
  <link name="l0"><segment from="0 0 0" to="1 0 0"/></link>
  <joint name="b" type="revolute"><parent link="l0"/><axis xyz="0 0 1"/></joint>
  <link name="l1"><segment from="0 0 0" to="1 0 0"/></link>
  <joint name="c" type="revolute"><parent link="l0"/><axis xyz="0 0 1"/></joint>
  <link name="l2"><segment from="0 0 0" to="1 0 0"/></link>
</robot>"#;
        match parse_chain(doc) {
            Err(RobotError::Structure { line, message, .. }) => {
                assert_eq!(line, 6);
                assert!(message.contains("more than one child"), "{message}");
            }
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn non_unit_axis_is_a_validation_error() {
        let doc = PLANAR2.replacen("0 0 1", "0 0 2", 1);
        assert!(matches!(parse_chain(&doc), Err(RobotError::Validation { line: 4, .. })));
    }

    #[test]
    fn inverted_limits_are_rejected() {
        let doc = PLANAR2.replacen(r#"lower="-3.2" upper="3.2""#, r#"lower="1" upper="-1""#, 1);
        assert!(matches!(parse_chain(&doc), Err(RobotError::Validation { .. })));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let doc = "<robot>\n  <joint name=\"a\" type=\"revolute\">\n</robot>";
        match parse_chain(doc) {
            Err(RobotError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_joint_type() {
        let doc = PLANAR2.replacen("revolute", "spherical", 1);
        assert!(matches!(parse_chain(&doc), Err(RobotError::Parse { .. })));
    }

    #[test]
    fn fk_examples() {
        let chain = parse_chain(PLANAR2).unwrap();
        let segs = forward_kinematics(&chain, &JointConfig(vec![0.0, 0.0])).unwrap();
        assert!(close(segs[0].start, [0.0, 0.0, 0.0]) && close(segs[0].end, [1.0, 0.0, 0.0]));
        assert!(close(segs[1].start, [1.0, 0.0, 0.0]) && close(segs[1].end, [2.0, 0.0, 0.0]));

        let segs = forward_kinematics(&chain, &JointConfig(vec![FRAC_PI_2, 0.0])).unwrap();
        assert!(close(segs[0].end, [0.0, 1.0, 0.0]));
        assert!(close(segs[1].start, [0.0, 1.0, 0.0]) && close(segs[1].end, [0.0, 2.0, 0.0]));

        let ee = end_effector(&chain, &JointConfig(vec![FRAC_PI_2, -FRAC_PI_2])).unwrap();
        assert!(close(ee, [1.0, 1.0, 0.0]));
        let ee = end_effector(&chain, &JointConfig(vec![PI, 0.0])).unwrap();
        assert!(close(ee, [-2.0, 0.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch() {
        let chain = parse_chain(PLANAR2).unwrap();
        assert_eq!(
            forward_kinematics(&chain, &JointConfig(vec![0.0])).unwrap_err(),
            RobotError::DimensionMismatch { expected: 2, actual: 1 }
        );
        assert!(end_effector(&chain, &JointConfig(vec![0.0; 3])).is_err());
    }

    #[test]
    fn fixed_joints_consume_no_values() {
        let doc = r#"<robot>
  <joint name="a" type="revolute"><axis xyz="0 0 1"/></joint>
  <link name="l0"><segment from="0 0 0" to="1 0 0"/></link>
  <joint name="wrist" type="fixed"><origin xyz="1 0 0"/></joint>
  <link name="stub"><segment from="0 0 0" to="0 0 0"/></link>
</robot>"#;
        let chain = parse_chain(doc).unwrap();
        assert_eq!(chain.dof(), 1);
        let ee = end_effector(&chain, &JointConfig(vec![FRAC_PI_2])).unwrap();
        assert!(close(ee, [0.0, 1.0, 0.0]));
    }

    #[test]
    fn prismatic_translates_along_axis() {
        let doc = r#"<robot>
  <joint name="slide" type="prismatic"><axis xyz="0 1 0"/><limit lower="0" upper="2"/></joint>
  <link name="carriage"><segment from="0 0 0" to="1 0 0"/></link>
</robot>"#;
        let chain = parse_chain(doc).unwrap();
        let segs = forward_kinematics(&chain, &JointConfig(vec![0.5])).unwrap();
        assert!(close(segs[0].start, [0.0, 0.5, 0.0]) && close(segs[0].end, [1.0, 0.5, 0.0]));
    }

    #[test]
    fn clamping_reports_flag() {
        let chain = parse_chain(PLANAR2).unwrap();
        let (q, flag) = chain.clamp(&JointConfig(vec![4.0, 0.1])).unwrap();
        assert!(flag);
        assert_eq!(q.0, vec![3.2, 0.1]);
        let (_, flag) = chain.clamp(&JointConfig(vec![1.0, 0.1])).unwrap();
        assert!(!flag);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
    }
}
