//! Kinematic chains parsed from a URDF subset.
//!
//! A [`KinematicChain`] is a fixed-base tree of links rooted at the base
//! link. Only the non-fixed joints on the path from the base to the tool link
//! are actuated; every other joint is frozen at its rest position during
//! parsing, so `dof` is always the number of non-fixed joints in the chain.

mod transform;
mod urdf;

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{DVector, Matrix3xX, Matrix6xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use transform::{rotation_from_euler_xyz, RigidTransform};
pub(crate) use transform::{euler_xyz, skew};
pub use urdf::infer_base_and_tool;

pub const CONTINUOUS_LIMIT: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Continuous,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_fixed(self) -> bool {
        matches!(self, JointKind::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Parent link frame to joint frame.
    pub origin: RigidTransform,
    pub limits: Option<(f64, f64)>,
    pub velocity_limit: f64,
    pub parent: usize,
    pub child: usize,
}

impl JointSpec {
    /// Transform contributed by moving the joint to `value`.
    pub fn motion(&self, value: f64) -> RigidTransform {
        match self.kind {
            JointKind::Revolute | JointKind::Continuous => {
                RigidTransform::from_axis_angle(&self.axis, value)
            }
            JointKind::Prismatic => RigidTransform::from_translation(self.axis * value),
            JointKind::Fixed => RigidTransform::identity(),
        }
    }

    /// Position bounds used by the optimizers.
    pub fn bounds(&self) -> (f64, f64) {
        match (self.kind, self.limits) {
            (JointKind::Continuous, _) => (-CONTINUOUS_LIMIT, CONTINUOUS_LIMIT),
            (_, Some(l)) => l,
            (_, None) => (0.0, 0.0),
        }
    }
}

/// A mesh file attached to a link, with the visual/collision origin and scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshRef {
    pub path: PathBuf,
    pub origin: RigidTransform,
    pub scale: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub meshes: Vec<MeshRef>,
    /// Index of the joint whose child is this link; `None` for the base.
    pub parent_joint: Option<usize>,
}

/// Joint positions ordered like the chain's actuated dofs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointConfig(pub DVector<f64>);

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

impl From<JointConfig> for Vec<f64> {
    fn from(q: JointConfig) -> Self {
        q.0.as_slice().to_vec()
    }
}

impl From<&[f64]> for JointConfig {
    fn from(v: &[f64]) -> Self {
        Self(DVector::from_column_slice(v))
    }
}

/// Poses of every link in the base frame, indexed like [`KinematicChain::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPoses {
    pub poses: Vec<RigidTransform>,
    /// World-frame axis of each actuated joint.
    pub joint_axes: Vec<Vector3<f64>>,
    /// World-frame origin of each actuated joint.
    pub joint_origins: Vec<Vector3<f64>>,
}

impl LinkPoses {
    pub fn get(&self, link: usize) -> &RigidTransform {
        &self.poses[link]
    }
}

#[derive(Debug, Clone)]
pub struct KinematicChain {
    /// Links in topological order; `links[0]` is the base link.
    pub links: Vec<Link>,
    /// Joints ordered so that a joint's parent link is posed before it.
    pub joints: Vec<JointSpec>,
    pub base_link: usize,
    pub tool_link: usize,
    /// Joint index of each actuated degree of freedom, ordered base to tool.
    active: Vec<usize>,
    /// Degree-of-freedom index of each joint, if actuated.
    dof_of_joint: Vec<Option<usize>>,
    /// For each link, the actuated dofs between the base and the link.
    link_dofs: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl KinematicChain {
    pub(crate) fn assemble(
        links: Vec<Link>,
        joints: Vec<JointSpec>,
        base_link: usize,
        tool_link: usize,
    ) -> Self {
        let active: Vec<usize> = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| !j.kind.is_fixed())
            .map(|(i, _)| i)
            .collect();
        let mut dof_of_joint = vec![None; joints.len()];
        for (d, &j) in active.iter().enumerate() {
            dof_of_joint[j] = Some(d);
        }
        let mut link_dofs = vec![Vec::new(); links.len()];
        for (li, link) in links.iter().enumerate() {
            let mut dofs = Vec::new();
            let mut cur = link.parent_joint;
            while let Some(j) = cur {
                if let Some(d) = dof_of_joint[j] {
                    dofs.push(d);
                }
                cur = links[joints[j].parent].parent_joint;
            }
            dofs.reverse();
            link_dofs[li] = dofs;
        }
        let index = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i))
            .collect();
        Self {
            links,
            joints,
            base_link,
            tool_link,
            active,
            dof_of_joint,
            link_dofs,
            index,
        }
    }

    pub fn from_urdf_str(text: &str, base_link: &str, tool_link: &str) -> Result<Self> {
        urdf::parse(text, base_link, tool_link, None)
    }

    /// Parses a URDF file; relative mesh paths resolve against its directory.
    pub fn from_urdf_file(
        path: impl AsRef<std::path::Path>,
        base_link: &str,
        tool_link: &str,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        urdf::parse(&text, base_link, tool_link, path.parent())
    }

    pub fn dof(&self) -> usize {
        self.active.len()
    }

    pub fn link_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownLink(name.to_string()))
    }

    pub fn link_name(&self, link: usize) -> &str {
        &self.links[link].name
    }

    /// Actuated joints, ordered base to tool.
    pub fn active_joints(&self) -> impl Iterator<Item = &JointSpec> {
        self.active.iter().map(move |&j| &self.joints[j])
    }

    pub fn dof_of_joint(&self, joint: usize) -> Option<usize> {
        self.dof_of_joint[joint]
    }

    /// Actuated dofs that move `link`.
    pub fn link_dofs(&self, link: usize) -> &[usize] {
        &self.link_dofs[link]
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.active_joints().map(|j| j.bounds().0).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.active_joints().map(|j| j.bounds().1).collect()
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        self.active_joints().map(|j| j.velocity_limit).collect()
    }

    pub fn mid_range(&self) -> JointConfig {
        JointConfig::new(
            self.active_joints()
                .map(|j| {
                    let (lo, hi) = j.bounds();
                    0.5 * (lo + hi)
                })
                .collect(),
        )
    }

    pub fn clamp_to_limits(&self, q: &JointConfig) -> JointConfig {
        JointConfig::new(
            self.active_joints()
                .zip(q.0.iter())
                .map(|(j, &v)| {
                    let (lo, hi) = j.bounds();
                    v.clamp(lo, hi)
                })
                .collect(),
        )
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.len() == self.dof()
            && self.active_joints().zip(q.0.iter()).all(|(j, &v)| {
                let (lo, hi) = j.bounds();
                v >= lo && v <= hi
            })
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("joint configuration is not finite".into()));
        }
        Ok(())
    }

    /// Base-frame pose of every link at `q`.
    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<LinkPoses> {
        self.forward_kinematics_slice(q.as_slice())
    }

    pub fn forward_kinematics_slice(&self, q: &[f64]) -> Result<LinkPoses> {
        self.check_dim(q)?;
        Ok(self.fk_unchecked(q))
    }

    pub(crate) fn fk_unchecked(&self, q: &[f64]) -> LinkPoses {
        let mut poses = vec![RigidTransform::identity(); self.links.len()];
        let mut joint_axes = vec![Vector3::zeros(); self.dof()];
        let mut joint_origins = vec![Vector3::zeros(); self.dof()];
        for (ji, joint) in self.joints.iter().enumerate() {
            let frame = poses[joint.parent].compose(&joint.origin);
            let pose = match self.dof_of_joint[ji] {
                Some(d) => {
                    joint_axes[d] = frame.rotate(&joint.axis);
                    joint_origins[d] = frame.translation;
                    frame.compose(&joint.motion(q[d]))
                }
                None => frame,
            };
            poses[joint.child] = pose;
        }
        LinkPoses {
            poses,
            joint_axes,
            joint_origins,
        }
    }

    /// Tool link pose `T(q)`.
    pub fn tool_pose(&self, q: &JointConfig) -> Result<RigidTransform> {
        Ok(self.forward_kinematics(q)?.poses[self.tool_link])
    }

    /// Jacobian of the world position of `p_local` (attached to `link`) with
    /// respect to the joint configuration.
    pub fn point_jacobian(
        &self,
        q: &JointConfig,
        link: &str,
        p_local: &Vector3<f64>,
    ) -> Result<Matrix3xX<f64>> {
        let link = self.link_index(link)?;
        if p_local.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("point is not finite".into()));
        }
        let fk = self.forward_kinematics(q)?;
        let p_world = fk.poses[link].transform_point(p_local);
        let mut jac = Matrix3xX::zeros(self.dof());
        self.accumulate_point_jacobian(&fk, link, &p_world, |d, col| {
            jac.set_column(d, &col);
        });
        Ok(jac)
    }

    /// Calls `sink(dof, column)` for every dof that moves `link`, where the
    /// column is the velocity of the world point `p_world` per unit joint rate.
    #[inline]
    pub(crate) fn accumulate_point_jacobian<F>(
        &self,
        fk: &LinkPoses,
        link: usize,
        p_world: &Vector3<f64>,
        mut sink: F,
    ) where
        F: FnMut(usize, Vector3<f64>),
    {
        for &d in &self.link_dofs[link] {
            let axis = &fk.joint_axes[d];
            let col = match self.joints[self.active[d]].kind {
                JointKind::Prismatic => *axis,
                _ => axis.cross(&(p_world - fk.joint_origins[d])),
            };
            sink(d, col);
        }
    }

    /// Adds `Jᵀ w` to `grad` for a wrench acting on `link`: `force` is the
    /// summed linear sensitivity and `moment` the summed `p × f` about the
    /// world origin plus any pure rotational sensitivity.
    #[inline]
    pub(crate) fn accumulate_wrench(
        &self,
        fk: &LinkPoses,
        link: usize,
        force: &Vector3<f64>,
        moment: &Vector3<f64>,
        grad: &mut [f64],
    ) {
        for &d in &self.link_dofs[link] {
            let axis = &fk.joint_axes[d];
            grad[d] += match self.joints[self.active[d]].kind {
                JointKind::Prismatic => axis.dot(force),
                _ => axis.dot(&(moment - fk.joint_origins[d].cross(force))),
            };
        }
    }

    /// Geometric Jacobian of `link`'s origin: rows 0..3 linear, 3..6 angular.
    pub fn link_jacobian(&self, q: &JointConfig, link: usize) -> Result<Matrix6xX<f64>> {
        let fk = self.forward_kinematics(q)?;
        Ok(self.link_jacobian_from(&fk, link))
    }

    pub(crate) fn link_jacobian_from(&self, fk: &LinkPoses, link: usize) -> Matrix6xX<f64> {
        let mut jac = Matrix6xX::zeros(self.dof());
        let origin = fk.poses[link].translation;
        for &d in &self.link_dofs[link] {
            let axis = fk.joint_axes[d];
            match self.joints[self.active[d]].kind {
                JointKind::Prismatic => {
                    jac.fixed_view_mut::<3, 1>(0, d).copy_from(&axis);
                }
                _ => {
                    let lin = axis.cross(&(origin - fk.joint_origins[d]));
                    jac.fixed_view_mut::<3, 1>(0, d).copy_from(&lin);
                    jac.fixed_view_mut::<3, 1>(3, d).copy_from(&axis);
                }
            }
        }
        jac
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) const PLANAR_2R: &str = r#"<?xml version="1.0"?>
<robot name="planar">
  <link name="base"/>
  <link name="l1"/>
  <link name="l2"/>
  <link name="tool"/>
  <joint name="j1" type="revolute">
    <parent link="base"/><child link="l1"/>
    <origin xyz="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.14" upper="3.14" velocity="1.0"/>
  </joint>
  <joint name="j2" type="revolute">
    <parent link="l1"/><child link="l2"/>
    <origin xyz="1 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.14" upper="3.14" velocity="1.0"/>
  </joint>
  <joint name="j3" type="fixed">
    <parent link="l2"/><child link="tool"/>
    <origin xyz="1 0 0"/>
  </joint>
</robot>"#;

    fn planar() -> KinematicChain {
        KinematicChain::from_urdf_str(PLANAR_2R, "base", "tool").unwrap()
    }

    #[test]
    fn planar_fk_zero_and_quarter_turn() {
        let chain = planar();
        assert_eq!(chain.dof(), 2);
        let t = chain.tool_pose(&JointConfig::new(vec![0.0, 0.0])).unwrap();
        assert!((t.translation - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((t.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-12);

        let t = chain
            .tool_pose(&JointConfig::new(vec![FRAC_PI_2, 0.0]))
            .unwrap();
        assert!((t.translation - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        let expected = RigidTransform::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        assert!((t.rotation - expected.rotation).abs().max() < 1e-12);
    }

    #[test]
    fn fk_rejects_wrong_dimension() {
        let chain = planar();
        let err = chain.forward_kinematics(&JointConfig::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, actual: 3 }));
    }

    #[test]
    fn revolute_axis_point_has_zero_column() {
        let chain = planar();
        let q = JointConfig::new(vec![0.3, -0.8]);
        // The origin of l1 lies on joint 1's axis.
        let jac = chain.point_jacobian(&q, "l1", &Vector3::zeros()).unwrap();
        assert!(jac.column(0).norm() < 1e-15);
        // The origin of l2 lies on joint 2's axis, but joint 1 still moves it.
        let jac = chain.point_jacobian(&q, "l2", &Vector3::zeros()).unwrap();
        assert!(jac.column(1).norm() < 1e-15);
        assert!(jac.column(0).norm() > 0.5);
    }

    #[test]
    fn unknown_link_jacobian_errors() {
        let chain = planar();
        let q = JointConfig::zeros(2);
        assert!(matches!(
            chain.point_jacobian(&q, "nope", &Vector3::zeros()),
            Err(Error::UnknownLink(_))
        ));
    }

    #[test]
    fn prismatic_column_is_world_axis() {
        let urdf = r#"<robot name="p">
  <link name="base"/><link name="a"/><link name="b"/>
  <joint name="r" type="revolute"><parent link="base"/><child link="a"/>
    <axis xyz="0 0 1"/><limit lower="-1" upper="1" velocity="1"/></joint>
  <joint name="p" type="prismatic"><parent link="a"/><child link="b"/>
    <origin xyz="0.5 0 0" rpy="0 0.3 0"/><axis xyz="1 0 0"/>
    <limit lower="0" upper="0.4" velocity="0.2"/></joint>
</robot>"#;
        let chain = KinematicChain::from_urdf_str(urdf, "base", "b").unwrap();
        let q = JointConfig::new(vec![0.7, 0.1]);
        let fk = chain.forward_kinematics(&q).unwrap();
        let jac = chain
            .point_jacobian(&q, "b", &Vector3::new(0.1, 0.2, 0.3))
            .unwrap();
        let b = chain.link_index("b").unwrap();
        let world_axis = fk.poses[b].rotate(&Vector3::x());
        assert!((jac.column(1) - world_axis).norm() < 1e-14);
    }

    #[test]
    fn fk_at_zero_is_composition_of_origins() {
        let chain = planar();
        let fk = chain.forward_kinematics(&JointConfig::zeros(2)).unwrap();
        let mut expected = RigidTransform::identity();
        for j in &chain.joints {
            expected = expected * j.origin;
        }
        assert_eq!(fk.poses[chain.tool_link], expected);
    }
}
