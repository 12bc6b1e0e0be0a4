use serde::{Deserialize, Serialize};

use super::{plan_motion, ArmSpace, JointPath, PlanError, PlannerParams};
use crate::collision::{ArmModel, Scene};
use crate::kinematics::JointConfig;
use crate::math::Pose;
use crate::regrasp::{Action, EdgeKind, GraspContext, NodeGroup, RegraspError, RegraspGraph, RegraspPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktrackBudget {
    /// Graph searches allowed after the first, one per deleted edge.
    pub re_searches: usize,
    /// Placement stations that may be moved to alternate poses.
    pub rebuilds: usize,
}

impl Default for BacktrackBudget {
    fn default() -> Self {
        Self { re_searches: 5, rebuilds: 3 }
    }
}

/// Inputs for moving one object through the regrasp graph.
#[derive(Debug, Clone)]
pub struct RegraspProblem<'a> {
    /// Scene with the object resting free at its initial pose.
    pub scene: &'a Scene,
    pub arms: &'a [ArmModel],
    pub object: &'a str,
    pub start: Vec<JointConfig>,
    pub require_perpendicular: bool,
    pub perpendicular_tol: f64,
    /// Poses tried, in order, when placement nodes must be rebuilt.
    pub alternate_placements: Vec<Pose>,
    pub budget: BacktrackBudget,
}

/// One planned arm motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    /// Index of the regrasp edge this motion serves.
    pub edge: usize,
    pub arm: usize,
    pub action: Action,
    /// Whether the moving arm carries the object.
    pub carrying: bool,
    pub path: JointPath,
    /// Scene the motion was planned in.
    #[serde(skip)]
    pub scene: Scene,
    /// All arm configurations when the motion starts.
    #[serde(skip)]
    pub q_start: Vec<JointConfig>,
}

#[derive(Debug, Clone)]
pub struct RegraspPlan {
    pub path: RegraspPath,
    pub segments: Vec<MotionSegment>,
    pub final_configs: Vec<JointConfig>,
    /// Scene after execution, with the object attached to its final holder.
    pub final_scene: Scene,
    pub deleted_edges: Vec<(String, String)>,
    pub searches: usize,
    pub rebuilds: usize,
}

/// Search the graph, realize each edge with RRT-connect, and on a motion
/// failure delete the failing edge and search again. When the search runs dry,
/// placement nodes touching deleted edges are rebuilt at the next alternate pose.
pub fn plan_regrasp_motion(
    graph: &mut RegraspGraph,
    problem: &RegraspProblem<'_>,
    params: &PlannerParams,
) -> Result<RegraspPlan, PlanError> {
    params.validate()?;
    let mut attempts = 0usize;
    let mut searches = 0usize;
    let mut rebuilds = 0usize;
    let fail = |searches, rebuilds, reason: String| Err(PlanError::Infeasible { searches, rebuilds, reason });
    loop {
        let found = graph.search_shortest_path(problem.require_perpendicular, problem.perpendicular_tol);
        searches += 1;
        match found {
            Ok(path) => {
                if attempts > problem.budget.re_searches {
                    return fail(searches, rebuilds, "re-search budget exhausted".into());
                }
                let seed = params.seed.wrapping_add(1000 * attempts as u64);
                attempts += 1;
                match realize(problem, &path, params, seed) {
                    Ok((segments, final_configs, final_scene)) => {
                        let deleted_edges = graph.deleted_edges().map(|(a, b)| (a.to_string(), b.to_string())).collect();
                        return Ok(RegraspPlan { path, segments, final_configs, final_scene, deleted_edges, searches, rebuilds });
                    }
                    Err(edge) => {
                        let (a, b) = (&path.nodes[edge].id, &path.nodes[edge + 1].id);
                        graph.delete_edge(a, b).expect("path edges exist");
                    }
                }
            }
            Err(RegraspError::NoPath) => {
                if rebuilds >= problem.budget.rebuilds {
                    return fail(searches, rebuilds, "rebuild budget exhausted".into());
                }
                let Some(pose) = problem.alternate_placements.get(rebuilds).copied() else {
                    return fail(searches, rebuilds, "no alternate placement left".into());
                };
                let station = blocked_station(graph);
                if station.is_empty() {
                    return fail(searches, rebuilds, "no placement node to rebuild".into());
                }
                let mut ctx = GraspContext::new(problem.scene, problem.arms, problem.object);
                ctx.rest = problem.start.clone();
                for id in station {
                    graph
                        .rebuild_node(&id, pose, |g, p| Ok(ctx.evaluate(g, p)?.1))
                        .map_err(|e| PlanError::Infeasible { searches, rebuilds, reason: e.to_string() })?;
                }
                rebuilds += 1;
            }
            Err(e) => return fail(searches, rebuilds, e.to_string()),
        }
    }
}

/// Placement nodes sharing the pose of the first placement node on a deleted edge.
fn blocked_station(graph: &RegraspGraph) -> Vec<String> {
    let first = graph
        .deleted_edges()
        .flat_map(|(a, b)| [a, b])
        .filter_map(|id| graph.node(id))
        .filter(|n| n.group == NodeGroup::Placement)
        .min_by(|x, y| x.id.cmp(&y.id));
    let Some(first) = first else { return Vec::new() };
    graph
        .nodes()
        .filter(|n| n.group == NodeGroup::Placement && n.object_pose.approx_eq(&first.object_pose, 1e-9))
        .map(|n| n.id.clone())
        .collect()
}

struct Executor<'p, 'a> {
    problem: &'p RegraspProblem<'a>,
    params: PlannerParams,
    scene: Scene,
    q: Vec<JointConfig>,
    segments: Vec<MotionSegment>,
    holder: Option<usize>,
}

impl Executor<'_, '_> {
    fn go(&mut self, arm: usize, goal: &JointConfig, edge: usize, action: Action) -> Result<(), usize> {
        let arms = self.problem.arms;
        let start = self.q[arm].clone();
        let space = ArmSpace::new(&self.scene, arms, self.q.clone(), arm, &[&start, goal]);
        let mut p = self.params;
        p.seed = p.seed.wrapping_add(self.segments.len() as u64);
        let path = plan_motion(&start, goal, &space, &p).map_err(|_| edge)?;
        self.segments.push(MotionSegment {
            edge,
            arm,
            action,
            carrying: self.holder == Some(arm),
            path,
            scene: self.scene.clone(),
            q_start: self.q.clone(),
        });
        self.q[arm] = goal.clone();
        Ok(())
    }

    fn object_pose(&self) -> Pose {
        let obj = self.problem.object;
        match (self.holder, self.scene.attachment(obj)) {
            (Some(h), Some(att)) => self.problem.arms[h]
                .hand_pose(&self.q[h])
                .expect("valid config")
                .compose(&att.hand_to_object),
            _ => self.scene.body(obj).expect("object exists").pose,
        }
    }

    fn release(&mut self) {
        let pose = self.object_pose();
        self.scene.detach(self.problem.object, pose).expect("object exists");
        self.holder = None;
    }

    fn grip(&mut self, arm: usize, hand_pose_in_object: &Pose) {
        self.scene
            .attach(self.problem.object, arm, hand_pose_in_object.inverse())
            .expect("object is free");
        self.holder = Some(arm);
    }

    fn retreat(&mut self, arm: usize, edge: usize) -> Result<(), usize> {
        let home = self.problem.arms[arm].home.clone();
        self.go(arm, &home, edge, Action::Transit)?;
        self.scene.forbid_hand_contact(arm, self.problem.object);
        Ok(())
    }
}

/// Motions for every edge of `path`; on failure, the index of the failing edge.
fn realize(
    problem: &RegraspProblem<'_>,
    path: &RegraspPath,
    params: &PlannerParams,
    seed: u64,
) -> Result<(Vec<MotionSegment>, Vec<JointConfig>, Scene), usize> {
    let obj = problem.object;
    let mut ex = Executor {
        problem,
        params: PlannerParams { seed, ..*params },
        scene: problem.scene.clone(),
        q: problem.start.clone(),
        segments: Vec::new(),
        holder: None,
    };
    let first = &path.nodes[0];
    let a = first.grasp.arm.index();
    ex.scene.allow_hand_contact(a, obj);
    ex.go(a, &first.config, 0, Action::Pick)?;
    ex.grip(a, &first.grasp.hand_pose_in_object);

    for (i, (w, kind)) in path.nodes.windows(2).zip(&path.edge_kinds).enumerate() {
        let (from, to) = (&w[0], &w[1]);
        let action = path.actions[i];
        let giver = from.grasp.arm.index();
        let taker = to.grasp.arm.index();
        match kind {
            EdgeKind::Transport => ex.go(giver, &to.config, i, action)?,
            EdgeKind::Handover => {
                ex.scene.allow_hand_contact(taker, obj);
                ex.go(taker, &to.config, i, action)?;
                ex.release();
                ex.grip(taker, &to.grasp.hand_pose_in_object);
                ex.scene.allow_hand_contact(giver, obj);
                ex.retreat(giver, i)?;
            }
            EdgeKind::SurfaceRegrasp => {
                ex.release();
                ex.scene.allow_hand_contact(giver, obj);
                ex.retreat(giver, i)?;
                ex.scene.allow_hand_contact(taker, obj);
                ex.go(taker, &to.config, i, action)?;
                ex.grip(taker, &to.grasp.hand_pose_in_object);
            }
        }
    }
    Ok((ex.segments, ex.q, ex.scene))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{Body, BodyKind, ShapePrimitive};
    use crate::kinematics::{Joint, KinematicChain};
    use crate::math::{Rotation, Vec3};
    use crate::planner::segment_free;
    use crate::regrasp::{build_regrasp_graph, ArmSide, Grasp, RegraspGroups, RegraspNode, PERPENDICULAR_TOL};
    use std::f64::consts::{FRAC_PI_2, PI};

    const STICK: f64 = 0.55;
    const REACH: f64 = 0.6;

    /// Yaw-then-roll stick arm; the tool looks along the stick.
    fn stick_arm(name: &str, base: Vec3, home: [f64; 2]) -> ArmModel {
        let chain = KinematicChain::new(
            Pose::from_translation(base),
            vec![
                Joint { axis: Vec3::z(), offset: Pose::identity(), lower: -PI, upper: PI },
                Joint { axis: Vec3::x(), offset: Pose::from_translation(Vec3::new(STICK, 0.0, 0.0)), lower: -PI, upper: PI },
            ],
            Pose::from_rotation(Rotation::about_y(FRAC_PI_2)),
        )
        .unwrap();
        ArmModel {
            name: name.into(),
            chain,
            link_radius: 0.01,
            hand: ShapePrimitive::cuboid(Vec3::repeat(0.01)).at(Pose::from_translation(Vec3::new(0.0, 0.0, -0.01))),
            home: JointConfig(home.to_vec()),
        }
    }

    struct Fixture {
        arms: Vec<ArmModel>,
        scene: Scene,
        groups: RegraspGroups,
    }

    /// Left arm at the origin, right arm at x = 1. The puck starts on the
    /// left's circle; the goal sits where both circles meet. A post on the
    /// left's direct sweep blocks carrying the puck straight there; the
    /// handover at the lower meeting point stays clear.
    fn fixture() -> Fixture {
        let arms = vec![stick_arm("left", Vec3::zeros(), [-1.2, 0.0]), stick_arm("right", Vec3::x(), [0.0, 0.0])];
        let post = Body::new("post", ShapePrimitive::cuboid(Vec3::new(0.015, 0.015, 0.05)), Pose::from_translation(Vec3::new(0.62, 0.0, 0.0)), BodyKind::StaticEnvironment);
        let obj_at = |arm: usize, yaw: f64| -> Pose {
            Pose::new(Rotation::about_z(yaw), arms[arm].chain.base.translation + Vec3::new(yaw.cos(), yaw.sin(), 0.0) * REACH)
        };
        let grasp_of = |arm: usize, q: [f64; 2], pose: &Pose, id: &str| -> Grasp {
            let hand = arms[arm].hand_pose(&q).unwrap();
            let side = if arm == 0 { ArmSide::Left } else { ArmSide::Right };
            Grasp::new(id, side, pose.inverse().compose(&hand), 0.04).unwrap()
        };
        // Left yaw to where the two reach circles meet.
        let meet = (REACH * REACH - 0.25).sqrt().atan2(0.5);
        let right_meet = PI - meet;
        let p0 = obj_at(0, -1.2);
        let ph = obj_at(0, -meet);
        let gl = grasp_of(0, [-1.2, 0.0], &p0, "g");
        let gl2 = grasp_of(0, [-1.2, PI], &p0, "h");
        let gr = grasp_of(1, [-right_meet, 0.0], &ph, "g");
        let node = |g: NodeGroup, grasp: &Grasp, pose: Pose, q: [f64; 2]| RegraspNode::feasible(g, 0, grasp.clone(), pose, JointConfig(q.to_vec()));
        let goal_right = arms[1].hand_pose(&[right_meet, 0.0]).unwrap().compose(&gr.hand_pose_in_object.inverse());
        let bl = node(NodeGroup::Handover, &gl2, ph, [-meet, PI]);
        let br = node(NodeGroup::Handover, &gr, ph, [-right_meet, 0.0]);
        let groups = RegraspGroups {
            initial: vec![node(NodeGroup::Initial, &gl, p0, [-1.2, 0.0]), node(NodeGroup::Initial, &gl2, p0, [-1.2, PI])],
            handover: vec![bl.clone(), br.clone()],
            placement: vec![],
            goal: vec![node(NodeGroup::Goal, &gl, obj_at(0, meet), [meet, 0.0]), node(NodeGroup::Goal, &gr, goal_right, [right_meet, 0.0])],
            handover_pairs: vec![(bl.id, br.id)],
        };
        let puck = Body::new("puck", ShapePrimitive::cylinder(0.02, 0.02), p0, BodyKind::Object);
        Fixture { scene: Scene::new(vec![post, puck]).unwrap(), arms, groups }
    }

    fn problem<'a>(f: &'a Fixture) -> RegraspProblem<'a> {
        RegraspProblem {
            scene: &f.scene,
            arms: &f.arms,
            object: "puck",
            start: f.arms.iter().map(|a| a.home.clone()).collect(),
            require_perpendicular: false,
            perpendicular_tol: PERPENDICULAR_TOL,
            alternate_placements: vec![],
            budget: BacktrackBudget::default(),
        }
    }

    fn params() -> PlannerParams {
        PlannerParams { seed: 11, ..Default::default() }
    }

    #[test]
    fn blocked_direct_edge_reroutes_through_handover() {
        let f = fixture();
        let mut graph = build_regrasp_graph(f.groups.clone()).unwrap();
        let first = graph.search_shortest_path(false, PERPENDICULAR_TOL).unwrap();
        assert_eq!(first.node_ids(), ["a0-left-g", "d0-left-g"]);

        let plan = plan_regrasp_motion(&mut graph, &problem(&f), &params()).unwrap();
        assert_eq!(plan.deleted_edges, vec![("a0-left-g".to_string(), "d0-left-g".to_string())]);
        assert_eq!(plan.path.node_ids(), ["a0-left-h", "b0-left-h", "b0-right-g", "d0-right-g"]);
        assert_eq!(plan.searches, 2);
        assert_eq!(plan.final_scene.attachment("puck").map(|a| a.arm), Some(1));

        // Every segment re-checked at 10x finer resolution, chained end to start.
        let mut q: Vec<JointConfig> = f.arms.iter().map(|a| a.home.clone()).collect();
        for seg in &plan.segments {
            assert_eq!(seg.q_start, q);
            assert_eq!(seg.path.start(), Some(&q[seg.arm]));
            let space = ArmSpace::new(&seg.scene, &f.arms, q.clone(), seg.arm, &[]);
            for w in seg.path.0.windows(2) {
                assert!(segment_free(&space, &w[0], &w[1], params().edge_resolution / 10.0));
            }
            q[seg.arm] = seg.path.end().unwrap().clone();
        }
        assert_eq!(q, plan.final_configs);
    }

    #[test]
    fn deleted_edges_never_reappear() {
        let f = fixture();
        let mut graph = build_regrasp_graph(f.groups.clone()).unwrap();
        let plan = plan_regrasp_motion(&mut graph, &problem(&f), &params()).unwrap();
        for w in plan.path.nodes.windows(2) {
            assert!(!graph.is_deleted(&w[0].id, &w[1].id));
        }
    }

    #[test]
    fn zero_motion_budget_is_infeasible() {
        let f = fixture();
        let mut graph = build_regrasp_graph(f.groups.clone()).unwrap();
        let p = PlannerParams { max_iterations: 0, ..params() };
        assert!(matches!(plan_regrasp_motion(&mut graph, &problem(&f), &p), Err(PlanError::Infeasible { .. })));
    }

    #[test]
    fn unobstructed_first_path_is_realized() {
        let mut f = fixture();
        f.scene = Scene::new(f.scene.bodies().iter().filter(|b| b.id != "post").cloned().collect()).unwrap();
        let mut graph = build_regrasp_graph(f.groups.clone()).unwrap();
        let plan = plan_regrasp_motion(&mut graph, &problem(&f), &params()).unwrap();
        assert_eq!(plan.path.node_ids(), ["a0-left-g", "d0-left-g"]);
        assert!(plan.deleted_edges.is_empty());
        assert_eq!(plan.searches, 1);
    }

    #[test]
    fn planning_is_seeded() {
        let f = fixture();
        let run = || {
            let mut graph = build_regrasp_graph(f.groups.clone()).unwrap();
            plan_regrasp_motion(&mut graph, &problem(&f), &params()).unwrap().segments
        };
        assert_eq!(run(), run());
    }
}
