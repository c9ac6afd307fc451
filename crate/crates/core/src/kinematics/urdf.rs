//! The URDF subset: links with visual/collision meshes and revolute,
//! continuous, prismatic and fixed joints. Inertial, transmission and
//! primitive-geometry tags are ignored.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use roxmltree::{Document, Node};

use super::{JointKind, JointSpec, KinematicChain, Link, MeshRef, RigidTransform};
use crate::{Error, Result};

struct RawJoint {
    name: String,
    kind: JointKind,
    parent: String,
    child: String,
    origin: RigidTransform,
    axis: Vector3<f64>,
    limits: Option<(f64, f64)>,
    velocity: f64,
}

fn parse_floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N]> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Urdf(format!("bad number in {what}: `{text}`")))?;
    vals.try_into()
        .map_err(|_| Error::Urdf(format!("{what} needs {N} numbers: `{text}`")))
}

fn parse_attr_f64(node: Node, attr: &str) -> Result<Option<f64>> {
    node.attribute(attr)
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Urdf(format!("bad `{attr}` value `{s}`")))
        })
        .transpose()
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn parse_origin(node: Node) -> Result<RigidTransform> {
    let Some(origin) = child(node, "origin") else {
        return Ok(RigidTransform::identity());
    };
    let xyz = origin
        .attribute("xyz")
        .map(|s| parse_floats::<3>(s, "origin xyz"))
        .transpose()?
        .unwrap_or([0.0; 3]);
    let rpy = origin
        .attribute("rpy")
        .map(|s| parse_floats::<3>(s, "origin rpy"))
        .transpose()?
        .unwrap_or([0.0; 3]);
    Ok(RigidTransform::from_xyz_rpy(xyz, rpy))
}

fn resolve_mesh_path(filename: &str, root: Option<&Path>) -> PathBuf {
    let stripped = if let Some(rest) = filename.strip_prefix("package://") {
        // Drop the package name; assume the package root is the URDF directory.
        rest.split_once('/').map(|(_, p)| p).unwrap_or(rest)
    } else if let Some(rest) = filename.strip_prefix("file://") {
        rest
    } else {
        filename
    };
    let path = PathBuf::from(stripped);
    match root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path,
    }
}

fn parse_meshes(link: Node, root: Option<&Path>) -> Result<Vec<MeshRef>> {
    let collect = |tag: &str| -> Result<Vec<MeshRef>> {
        let mut out = Vec::new();
        for geom_owner in link.children().filter(|c| c.has_tag_name(tag)) {
            let Some(geometry) = child(geom_owner, "geometry") else {
                continue;
            };
            let Some(mesh) = child(geometry, "mesh") else {
                continue;
            };
            let filename = mesh
                .attribute("filename")
                .ok_or_else(|| Error::Urdf("mesh without filename".into()))?;
            let scale = mesh
                .attribute("scale")
                .map(|s| parse_floats::<3>(s, "mesh scale"))
                .transpose()?
                .unwrap_or([1.0; 3]);
            out.push(MeshRef {
                path: resolve_mesh_path(filename, root),
                origin: parse_origin(geom_owner)?,
                scale: Vector3::from(scale),
            });
        }
        Ok(out)
    };
    let visual = collect("visual")?;
    if visual.is_empty() {
        collect("collision")
    } else {
        Ok(visual)
    }
}

fn parse_joint(node: Node) -> Result<RawJoint> {
    let name = node
        .attribute("name")
        .ok_or_else(|| Error::Urdf("joint without name".into()))?
        .to_string();
    let type_attr = node
        .attribute("type")
        .ok_or_else(|| Error::Urdf(format!("joint `{name}` has no type")))?;
    let kind = match type_attr {
        "revolute" => JointKind::Revolute,
        "continuous" => JointKind::Continuous,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        "planar" | "floating" => {
            return Err(Error::Unsupported(format!(
                "{type_attr} joint `{name}`"
            )))
        }
        other => return Err(Error::Urdf(format!("unknown joint type `{other}`"))),
    };
    let link_ref = |tag: &str| -> Result<String> {
        child(node, tag)
            .and_then(|c| c.attribute("link"))
            .map(str::to_string)
            .ok_or_else(|| Error::Urdf(format!("joint `{name}` missing <{tag}>")))
    };
    let parent = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let origin = parse_origin(node)?;
    let axis = match child(node, "axis").and_then(|a| a.attribute("xyz")) {
        Some(s) => Vector3::from(parse_floats::<3>(s, "axis")?),
        None => Vector3::x(),
    };
    let norm = axis.norm();
    if !kind.is_fixed() && !(norm > 1e-12 && norm.is_finite()) {
        return Err(Error::Urdf(format!("joint `{name}` has a zero axis")));
    }
    let axis = if norm > 1e-12 { axis / norm } else { Vector3::x() };

    let limit = child(node, "limit");
    let (limits, velocity) = match limit {
        Some(l) => {
            let lower = parse_attr_f64(l, "lower")?.unwrap_or(0.0);
            let upper = parse_attr_f64(l, "upper")?.unwrap_or(0.0);
            let velocity = parse_attr_f64(l, "velocity")?.unwrap_or(f64::INFINITY);
            (Some((lower, upper)), velocity)
        }
        None => (None, f64::INFINITY),
    };
    match kind {
        JointKind::Revolute | JointKind::Prismatic if limits.is_none() => {
            return Err(Error::Urdf(format!("joint `{name}` needs <limit>")))
        }
        _ => {}
    }
    if let Some((lo, hi)) = limits {
        if !(lo <= hi) {
            return Err(Error::Urdf(format!(
                "joint `{name}` has lower limit {lo} above upper limit {hi}"
            )));
        }
    }
    if velocity < 0.0 {
        return Err(Error::Urdf(format!("joint `{name}` has a negative velocity limit")));
    }
    let limits = if kind == JointKind::Continuous {
        None
    } else {
        limits
    };
    Ok(RawJoint {
        name,
        kind,
        parent,
        child: child_link,
        origin,
        axis,
        limits,
        velocity,
    })
}

pub(super) fn parse(
    text: &str,
    base_link: &str,
    tool_link: &str,
    root: Option<&Path>,
) -> Result<KinematicChain> {
    let doc = Document::parse(text).map_err(|e| Error::Urdf(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(Error::Urdf("root element is not <robot>".into()));
    }

    let mut link_meshes: HashMap<String, Vec<MeshRef>> = HashMap::new();
    for node in robot.children().filter(|c| c.has_tag_name("link")) {
        let name = node
            .attribute("name")
            .ok_or_else(|| Error::Urdf("link without name".into()))?
            .to_string();
        if link_meshes.contains_key(&name) {
            return Err(Error::Urdf(format!("duplicate link `{name}`")));
        }
        link_meshes.insert(name, parse_meshes(node, root)?);
    }
    let raw: Vec<RawJoint> = robot
        .children()
        .filter(|c| c.has_tag_name("joint"))
        .map(parse_joint)
        .collect::<Result<_>>()?;

    let mut parent_of: HashMap<&str, usize> = HashMap::new();
    for (i, j) in raw.iter().enumerate() {
        for end in [&j.parent, &j.child] {
            if !link_meshes.contains_key(end.as_str()) {
                return Err(Error::Urdf(format!(
                    "joint `{}` references missing link `{end}`",
                    j.name
                )));
            }
        }
        if parent_of.insert(j.child.as_str(), i).is_some() {
            return Err(Error::Unsupported(format!(
                "link `{}` has several parent joints (closed loop)",
                j.child
            )));
        }
    }

    if !link_meshes.contains_key(base_link) {
        return Err(Error::UnknownLink(base_link.to_string()));
    }

    // Breadth-first from the base, in document order.
    let mut children: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, j) in raw.iter().enumerate() {
        children.entry(j.parent.as_str()).or_default().push(i);
    }
    let mut link_idx: HashMap<String, usize> = HashMap::new();
    let mut links = vec![Link {
        name: base_link.to_string(),
        meshes: link_meshes[base_link].clone(),
        parent_joint: None,
    }];
    link_idx.insert(base_link.to_string(), 0);
    let mut joint_order = Vec::new();
    let mut queue = VecDeque::from([base_link.to_string()]);
    while let Some(name) = queue.pop_front() {
        for &ji in children.get(name.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            let child_name = &raw[ji].child;
            if link_idx.contains_key(child_name) {
                return Err(Error::Unsupported(format!(
                    "kinematic loop through `{child_name}`"
                )));
            }
            link_idx.insert(child_name.clone(), links.len());
            links.push(Link {
                name: child_name.clone(),
                meshes: link_meshes[child_name].clone(),
                parent_joint: Some(joint_order.len()),
            });
            joint_order.push(ji);
            queue.push_back(child_name.clone());
        }
    }

    let tool_idx = *link_idx
        .get(tool_link)
        .ok_or_else(|| Error::DisconnectedLink(tool_link.to_string()))?;

    // Joints on the base-to-tool path stay actuated.
    let mut on_path = vec![false; raw.len()];
    let mut cur = tool_link;
    while cur != base_link {
        let ji = parent_of[cur];
        on_path[ji] = true;
        cur = raw[ji].parent.as_str();
    }

    let joints = joint_order
        .iter()
        .map(|&ji| {
            let r = &raw[ji];
            let mut spec = JointSpec {
                name: r.name.clone(),
                kind: r.kind,
                axis: r.axis,
                origin: r.origin,
                limits: r.limits,
                velocity_limit: r.velocity,
                parent: link_idx[&r.parent],
                child: link_idx[&r.child],
            };
            if !spec.kind.is_fixed() && !on_path[ji] {
                let (lo, hi) = spec.bounds();
                let rest = 0.0_f64.clamp(lo, hi);
                spec.origin = spec.origin.compose(&spec.motion(rest));
                spec.kind = JointKind::Fixed;
                spec.limits = None;
            }
            spec
        })
        .collect();

    Ok(KinematicChain::assemble(links, joints, 0, tool_idx))
}

/// The root link and the unique leaf link of a URDF, when both exist.
pub fn infer_base_and_tool(text: &str) -> Result<(String, String)> {
    let doc = Document::parse(text).map_err(|e| Error::Urdf(e.to_string()))?;
    let robot = doc.root_element();
    let links: Vec<&str> = robot
        .children()
        .filter(|c| c.has_tag_name("link"))
        .filter_map(|c| c.attribute("name"))
        .collect();
    let mut parents = Vec::new();
    let mut childs = Vec::new();
    for j in robot.children().filter(|c| c.has_tag_name("joint")) {
        if let Some(p) = child(j, "parent").and_then(|c| c.attribute("link")) {
            parents.push(p);
        }
        if let Some(c) = child(j, "child").and_then(|c| c.attribute("link")) {
            childs.push(c);
        }
    }
    let roots: Vec<&str> = links
        .iter()
        .copied()
        .filter(|l| !childs.contains(l))
        .collect();
    let leaves: Vec<&str> = links
        .iter()
        .copied()
        .filter(|l| !parents.contains(l))
        .collect();
    match (roots.as_slice(), leaves.as_slice()) {
        ([root], [leaf]) => Ok((root.to_string(), leaf.to_string())),
        _ => Err(Error::Invalid(format!(
            "cannot infer base/tool links (roots {roots:?}, leaves {leaves:?})"
        ))),
    }
}
