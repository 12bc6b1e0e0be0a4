use rayon::prelude::*;

use super::{Grasp, NodeGroup, RegraspError, RegraspNode};
use crate::collision::{ArmModel, Scene};
use crate::kinematics::{IkParams, JointConfig};
use crate::math::Pose;

/// Everything needed to judge whether a grasp is realizable.
#[derive(Debug, Clone)]
pub struct GraspContext<'a> {
    pub scene: &'a Scene,
    pub arms: &'a [ArmModel],
    /// Body id of the object being grasped.
    pub object: &'a str,
    pub ik: IkParams,
    /// Configurations of arms not performing the grasp.
    pub rest: Vec<JointConfig>,
}

impl<'a> GraspContext<'a> {
    pub fn new(scene: &'a Scene, arms: &'a [ArmModel], object: &'a str) -> Self {
        Self { scene, arms, object, ik: IkParams::default(), rest: arms.iter().map(|a| a.home.clone()).collect() }
    }

    /// Scene with the object resting free at `object_pose`, touchable by `hands`.
    fn scene_with_object(&self, object_pose: Pose, hands: &[usize]) -> Result<Scene, RegraspError> {
        let mut scene = self.scene.clone();
        scene.detach(self.object, object_pose)?;
        for &h in hands {
            scene.allow_hand_contact(h, self.object);
        }
        Ok(scene)
    }

    /// IK solutions for the grasp from a fixed seed list, deduplicated, with
    /// joints wrapped into [-π, π) where the limits allow and sorted by
    /// distance to the arm's rest configuration.
    pub fn ik_solutions(&self, grasp: &Grasp, object_pose: &Pose) -> Vec<JointConfig> {
        let a = grasp.arm.index();
        let arm = &self.arms[a];
        let target = object_pose.compose(&grasp.hand_pose_in_object);
        let mut out: Vec<JointConfig> = Vec::new();
        for seed in seeds(arm, &target) {
            if let Ok(mut q) = arm.chain.inverse_kinematics(&target, &seed, &self.ik) {
                for (v, j) in q.iter_mut().zip(&arm.chain.joints) {
                    let w = wrap(*v);
                    if (j.lower..=j.upper).contains(&w) {
                        *v = w;
                    }
                }
                if out.iter().all(|o| o.distance(&q) > 1e-3) {
                    out.push(q);
                }
            }
        }
        let rest = &self.rest[a];
        out.sort_by(|x, y| x.distance(rest).total_cmp(&y.distance(rest)));
        out
    }

    /// Collision-free IK solution nearest the rest configuration, other arms at rest.
    /// Returns `(ik_ok, config)`.
    pub fn evaluate(&self, grasp: &Grasp, object_pose: &Pose) -> Result<(bool, Option<JointConfig>), RegraspError> {
        let a = grasp.arm.index();
        let solutions = self.ik_solutions(grasp, object_pose);
        if solutions.is_empty() {
            return Ok((false, None));
        }
        let scene = self.scene_with_object(*object_pose, &[a])?;
        let mut q_all = self.rest.clone();
        for q in solutions {
            q_all[a] = q;
            if scene.config_collision_free(self.arms, &q_all)? {
                return Ok((true, Some(q_all.swap_remove(a))));
            }
        }
        Ok((true, None))
    }

    fn node(&self, group: NodeGroup, pose_index: usize, grasp: &Grasp, pose: &Pose) -> Result<RegraspNode, RegraspError> {
        let (ik_ok, config) = self.evaluate(grasp, pose)?;
        let mut node = RegraspNode::feasible(group, pose_index, grasp.clone(), *pose, config.clone().unwrap_or_default());
        node.ik_ok = ik_ok;
        node.collision_ok = config.is_some();
        Ok(node)
    }
}

/// Seeds: the home pose, then home with the base joint turned to face the target.
fn seeds(arm: &ArmModel, target: &Pose) -> Vec<JointConfig> {
    let mut out = vec![arm.home.clone()];
    if arm.home.is_empty() {
        return out;
    }
    let local = arm.chain.base.inverse().transform_point(&target.translation);
    let azimuth = local.y.atan2(local.x);
    for offset in [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::PI] {
        let mut q = arm.home.clone();
        q[0] = wrap(azimuth + offset);
        arm.chain.clamp(&mut q);
        out.push(q);
    }
    out
}

fn wrap(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}

/// Nodes for exactly the candidates that are IK-feasible and collision-free at `object_pose`.
pub fn filter_feasible_grasps(
    ctx: &GraspContext<'_>,
    object_pose: &Pose,
    candidates: &[Grasp],
    group: NodeGroup,
    pose_index: usize,
) -> Result<Vec<RegraspNode>, RegraspError> {
    if candidates.is_empty() {
        return Err(RegraspError::NoCandidates);
    }
    let nodes = candidates
        .par_iter()
        .map(|g| ctx.node(group, pose_index, g, object_pose))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nodes.into_iter().filter(RegraspNode::is_feasible).collect())
}

/// Handover nodes and the pairs of them that can hold the object together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HandoverNodes {
    pub nodes: Vec<RegraspNode>,
    pub pairs: Vec<(String, String)>,
}

/// Grasp pairs (one per arm) that are simultaneously feasible at a handover
/// pose without the hands colliding. Only grasps in at least one pair become nodes.
pub fn generate_handover_nodes(
    ctx: &GraspContext<'_>,
    left: &[Grasp],
    right: &[Grasp],
    handover_poses: &[Pose],
) -> Result<HandoverNodes, RegraspError> {
    let mut out = HandoverNodes::default();
    for (k, pose) in handover_poses.iter().enumerate() {
        let l = filter_feasible_grasps(ctx, pose, left, NodeGroup::Handover, k)?;
        let r = filter_feasible_grasps(ctx, pose, right, NodeGroup::Handover, k)?;
        let (li, ri) = (left.first().map_or(0, |g| g.arm.index()), right.first().map_or(1, |g| g.arm.index()));
        let scene = ctx.scene_with_object(*pose, &[li, ri])?;
        let pairs = l
            .par_iter()
            .flat_map_iter(|a| r.iter().map(move |b| (a, b)))
            .map(|(a, b)| {
                let mut q_all = ctx.rest.clone();
                q_all[a.grasp.arm.index()] = a.config.clone();
                q_all[b.grasp.arm.index()] = b.config.clone();
                Ok(scene.config_collision_free(ctx.arms, &q_all)?.then(|| (a.id.clone(), b.id.clone())))
            })
            .collect::<Result<Vec<_>, RegraspError>>()?;
        let pairs: Vec<(String, String)> = pairs.into_iter().flatten().collect();
        for n in l.into_iter().chain(r) {
            if pairs.iter().any(|(a, b)| *a == n.id || *b == n.id) {
                out.nodes.push(n);
            }
        }
        out.pairs.extend(pairs);
    }
    Ok(out)
}

/// Nodes for every (stable placement, feasible grasp) combination.
pub fn generate_placement_nodes(
    ctx: &GraspContext<'_>,
    placements: &[Pose],
    candidates: &[Grasp],
) -> Result<Vec<RegraspNode>, RegraspError> {
    let mut out = Vec::new();
    for (k, pose) in placements.iter().enumerate() {
        out.extend(filter_feasible_grasps(ctx, pose, candidates, NodeGroup::Placement, k)?);
    }
    Ok(out)
}
