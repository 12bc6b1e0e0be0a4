//! Regrasp graph over (grasp, object pose) nodes and its constrained shortest-path search.

mod generate;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::SceneError;
use crate::kinematics::JointConfig;
use crate::math::{Pose, PoseSpec, Vec3};

pub use generate::{
    filter_feasible_grasps, generate_handover_nodes, generate_placement_nodes, GraspContext, HandoverNodes,
};

/// Largest jaw opening of the simulated gripper (m).
pub const GRIPPER_STROKE: f64 = 0.085;
/// Default tolerance (rad) on the right angle between handover approach axes.
pub const PERPENDICULAR_TOL: f64 = 0.15;
const POSE_EQ_TOL: f64 = 1e-9;
const SEARCH_BUDGET: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegraspError {
    #[error("no grasp candidates supplied")]
    NoCandidates,
    #[error("invalid grasp `{id}`: {reason}")]
    InvalidGrasp { id: String, reason: String },
    #[error("group {0} has no feasible nodes")]
    EmptyGroup(NodeGroup),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no edge between `{0}` and `{1}`")]
    UnknownEdge(String, String),
    #[error("no path from the initial to the goal group")]
    NoPath,
    #[error("search budget exhausted")]
    SearchBudget,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmSide {
    Left,
    Right,
}

impl ArmSide {
    pub fn index(self) -> usize {
        match self {
            ArmSide::Left => 0,
            ArmSide::Right => 1,
        }
    }

    pub fn other(self) -> ArmSide {
        match self {
            ArmSide::Left => ArmSide::Right,
            ArmSide::Right => ArmSide::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArmSide::Left => "left",
            ArmSide::Right => "right",
        }
    }
}

impl fmt::Display for ArmSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A hand pose relative to an object, for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Grasp {
    pub id: String,
    pub arm: ArmSide,
    pub hand_pose_in_object: Pose,
    /// Unit approach direction in the object frame (the hand's tool z axis).
    pub approach_axis_in_object: Vec3,
    pub jaw_width: f64,
}

impl Grasp {
    pub fn new(id: impl Into<String>, arm: ArmSide, hand_pose_in_object: Pose, jaw_width: f64) -> Result<Self, RegraspError> {
        let id = id.into();
        if !(0.0..=GRIPPER_STROKE).contains(&jaw_width) {
            return Err(RegraspError::InvalidGrasp {
                id,
                reason: format!("jaw width {jaw_width} outside [0, {GRIPPER_STROKE}]"),
            });
        }
        Ok(Self {
            id,
            arm,
            approach_axis_in_object: hand_pose_in_object.rotation.z_axis(),
            hand_pose_in_object,
            jaw_width,
        })
    }

    pub fn with_arm(&self, arm: ArmSide) -> Self {
        Self { arm, ..self.clone() }
    }

    fn key(&self) -> (ArmSide, &str) {
        (self.arm, &self.id)
    }
}

/// Scenario form of a grasp; instantiated once per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspSpec {
    pub id: String,
    pub pose: PoseSpec,
    pub jaw_width: f64,
}

impl GraspSpec {
    pub fn build(&self, arm: ArmSide) -> Result<Grasp, RegraspError> {
        Grasp::new(self.id.clone(), arm, self.pose.to_pose(), self.jaw_width)
    }
}

/// True iff the approach axes meet at a right angle within `tol` radians.
pub fn is_perpendicular_handover(g1: &Grasp, g2: &Grasp, tol: f64) -> bool {
    let a = g1.approach_axis_in_object.normalize();
    let b = g2.approach_axis_in_object.normalize();
    let angle = a.dot(&b).clamp(-1.0, 1.0).acos();
    (angle - std::f64::consts::FRAC_PI_2).abs() <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeGroup {
    Initial,
    Handover,
    Placement,
    Goal,
}

impl NodeGroup {
    pub fn letter(self) -> char {
        match self {
            NodeGroup::Initial => 'a',
            NodeGroup::Handover => 'b',
            NodeGroup::Placement => 'c',
            NodeGroup::Goal => 'd',
        }
    }
}

impl fmt::Display for NodeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.letter())
    }
}

/// A grasp on the object at one object pose, with the arm configuration realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegraspNode {
    pub id: String,
    pub group: NodeGroup,
    pub grasp: Grasp,
    pub object_pose: Pose,
    pub ik_ok: bool,
    pub collision_ok: bool,
    pub config: JointConfig,
}

impl RegraspNode {
    /// A feasible node; ids sort by group, pose index, arm, then grasp id.
    pub fn feasible(group: NodeGroup, pose_index: usize, grasp: Grasp, object_pose: Pose, config: JointConfig) -> Self {
        Self {
            id: format!("{}{}-{}-{}", group.letter(), pose_index, grasp.arm, grasp.id),
            group,
            grasp,
            object_pose,
            ik_ok: true,
            collision_ok: true,
            config,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.ik_ok && self.collision_ok
    }

    fn same_pose(&self, other: &RegraspNode) -> bool {
        self.object_pose.approx_eq(&other.object_pose, POSE_EQ_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    /// Same grasp, object carried between two poses.
    Transport,
    /// Same object pose, passed between the two hands.
    Handover,
    /// Same resting pose, released and picked again by the same hand with another grasp.
    SurfaceRegrasp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Pick,
    Place,
    Handover,
    Transit,
    GoalMove,
}

impl Action {
    fn along(kind: EdgeKind, from: NodeGroup, to: NodeGroup) -> Action {
        match kind {
            EdgeKind::Handover => Action::Handover,
            EdgeKind::SurfaceRegrasp => Action::Transit,
            EdgeKind::Transport => match (from, to) {
                (_, NodeGroup::Goal) => Action::GoalMove,
                (_, NodeGroup::Placement) => Action::Place,
                (NodeGroup::Initial | NodeGroup::Placement, _) => Action::Pick,
                _ => Action::Transit,
            },
        }
    }
}

/// Node lists for the four groups plus the handover pairs found jointly feasible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegraspGroups {
    pub initial: Vec<RegraspNode>,
    pub handover: Vec<RegraspNode>,
    pub placement: Vec<RegraspNode>,
    pub goal: Vec<RegraspNode>,
    pub handover_pairs: Vec<(String, String)>,
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegraspGraph {
    nodes: BTreeMap<String, RegraspNode>,
    edges: BTreeMap<(String, String), EdgeKind>,
    deleted: BTreeSet<(String, String)>,
    handover_pairs: BTreeSet<(String, String)>,
}

/// Builds the graph from feasible nodes; infeasible nodes are dropped.
pub fn build_regrasp_graph(groups: RegraspGroups) -> Result<RegraspGraph, RegraspError> {
    let RegraspGroups { initial, handover, placement, goal, handover_pairs } = groups;
    let mut graph = RegraspGraph {
        handover_pairs: handover_pairs.iter().map(|(a, b)| edge_key(a, b)).collect(),
        ..Default::default()
    };
    for node in initial.into_iter().chain(handover).chain(placement).chain(goal) {
        if node.is_feasible() {
            graph.nodes.insert(node.id.clone(), node);
        }
    }
    for group in [NodeGroup::Initial, NodeGroup::Goal] {
        if !graph.nodes.values().any(|n| n.group == group) {
            return Err(RegraspError::EmptyGroup(group));
        }
    }
    let ids: Vec<String> = graph.nodes.keys().cloned().collect();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if let Some(kind) = graph.edge_rule(&graph.nodes[a], &graph.nodes[b]) {
                graph.edges.insert(edge_key(a, b), kind);
            }
        }
    }
    Ok(graph)
}

/// One solution of the graph search.
#[derive(Debug, Clone, PartialEq)]
pub struct RegraspPath {
    pub nodes: Vec<RegraspNode>,
    /// `actions[i]` labels the move from `nodes[i]` to `nodes[i + 1]`.
    pub actions: Vec<Action>,
    pub edge_kinds: Vec<EdgeKind>,
}

impl RegraspPath {
    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn has_perpendicular_handover(&self, tol: f64) -> bool {
        self.nodes.windows(2).zip(&self.edge_kinds).any(|(w, k)| {
            *k == EdgeKind::Handover && is_perpendicular_handover(&w[0].grasp, &w[1].grasp, tol)
        })
    }
}

impl RegraspGraph {
    pub fn nodes(&self) -> impl Iterator<Item = &RegraspNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&RegraspNode> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Live and deleted edges with their kinds.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, EdgeKind)> {
        self.edges.iter().map(|((a, b), k)| (a.as_str(), b.as_str(), *k))
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<EdgeKind> {
        self.edges.get(&edge_key(a, b)).copied()
    }

    pub fn is_deleted(&self, a: &str, b: &str) -> bool {
        self.deleted.contains(&edge_key(a, b))
    }

    pub fn deleted_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.deleted.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn live_edge_count(&self) -> usize {
        self.edges.len() - self.deleted.len()
    }

    fn edge_rule(&self, a: &RegraspNode, b: &RegraspNode) -> Option<EdgeKind> {
        use NodeGroup::*;
        if a.group == b.group && matches!(a.group, Initial | Goal) {
            return None;
        }
        let same_pose = a.same_pose(b);
        if a.grasp.key() == b.grasp.key() {
            return (!same_pose).then_some(EdgeKind::Transport);
        }
        if !same_pose || a.group != b.group {
            return None;
        }
        match a.group {
            Handover if a.grasp.arm != b.grasp.arm && self.handover_pairs.contains(&edge_key(&a.id, &b.id)) => {
                Some(EdgeKind::Handover)
            }
            Placement if a.grasp.arm == b.grasp.arm => Some(EdgeKind::SurfaceRegrasp),
            _ => None,
        }
    }

    /// Marks an edge as unusable for all later searches.
    pub fn delete_edge(&mut self, a: &str, b: &str) -> Result<(), RegraspError> {
        let key = edge_key(a, b);
        if !self.edges.contains_key(&key) {
            return Err(RegraspError::UnknownEdge(key.0, key.1));
        }
        self.deleted.insert(key);
        Ok(())
    }

    /// Removes the node and its edges, then re-inserts it at `new_pose` if
    /// `evaluate` finds a configuration there. Returns whether the node is present.
    pub fn rebuild_node<F>(&mut self, id: &str, new_pose: Pose, evaluate: F) -> Result<bool, RegraspError>
    where
        F: FnOnce(&Grasp, &Pose) -> Result<Option<JointConfig>, RegraspError>,
    {
        let old = self.nodes.remove(id).ok_or_else(|| RegraspError::UnknownNode(id.to_string()))?;
        let touches = |k: &(String, String)| k.0 == id || k.1 == id;
        self.edges.retain(|k, _| !touches(k));
        self.deleted.retain(|k| !touches(k));
        if !old.same_pose(&RegraspNode { object_pose: new_pose, ..old.clone() }) {
            self.handover_pairs.retain(|k| !touches(k));
        }
        let Some(config) = evaluate(&old.grasp, &new_pose)? else {
            return Ok(false);
        };
        let node = RegraspNode { object_pose: new_pose, config, ik_ok: true, collision_ok: true, ..old };
        for other in self.nodes.values() {
            if let Some(kind) = self.edge_rule(&node, other) {
                self.edges.insert(edge_key(&node.id, &other.id), kind);
            }
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(true)
    }

    /// Fewest-edge simple path from any (a) node to any (d) node avoiding
    /// deleted edges. Ties go to the lexicographically smallest id sequence.
    /// With `require_perpendicular`, the path must cross a handover edge whose
    /// grasps are perpendicular within `tol`.
    pub fn search_shortest_path(&self, require_perpendicular: bool, tol: f64) -> Result<RegraspPath, RegraspError> {
        let ids: Vec<&String> = self.nodes.keys().collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let n = ids.len();
        let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
        for ((a, b), kind) in &self.edges {
            if self.deleted.contains(&(a.clone(), b.clone())) {
                continue;
            }
            let (ia, ib) = (index[a.as_str()], index[b.as_str()]);
            let perp = *kind == EdgeKind::Handover
                && is_perpendicular_handover(&self.nodes[a].grasp, &self.nodes[b].grasp, tol);
            adj[ia].push((ib, perp));
            adj[ib].push((ia, perp));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let group = |i: usize| self.nodes[ids[i]].group;
        let is_goal = |i: usize, flag: bool| group(i) == NodeGroup::Goal && (flag || !require_perpendicular);

        // Exact distance to a goal in the (node, flag) product graph, ignoring simplicity.
        let mut h = vec![[usize::MAX; 2]; n];
        let mut queue = VecDeque::new();
        for i in 0..n {
            for flag in [false, true] {
                if is_goal(i, flag) {
                    h[i][flag as usize] = 0;
                    queue.push_back((i, flag));
                }
            }
        }
        while let Some((u, fu)) = queue.pop_front() {
            let d = h[u][fu as usize] + 1;
            for &(v, perp) in &adj[u] {
                for fv in [false, true] {
                    if (fv || perp) == fu && h[v][fv as usize] == usize::MAX {
                        h[v][fv as usize] = d;
                        queue.push_back((v, fv));
                    }
                }
            }
        }

        // Best-first over simple paths ordered by (cost bound, id sequence).
        let mut heap: BinaryHeap<Reverse<(usize, Vec<usize>, bool)>> = BinaryHeap::new();
        for i in (0..n).filter(|&i| group(i) == NodeGroup::Initial) {
            if h[i][0] != usize::MAX {
                heap.push(Reverse((h[i][0], vec![i], false)));
            }
        }
        let mut pops = 0usize;
        while let Some(Reverse((_, path, flag))) = heap.pop() {
            pops += 1;
            if pops > SEARCH_BUDGET {
                return Err(RegraspError::SearchBudget);
            }
            let last = *path.last().expect("paths are nonempty");
            if is_goal(last, flag) {
                return Ok(self.materialize(&path.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>()));
            }
            let g = path.len() - 1;
            for &(next, perp) in &adj[last] {
                if path.contains(&next) {
                    continue;
                }
                let nf = flag || perp;
                let hn = h[next][nf as usize];
                if hn == usize::MAX {
                    continue;
                }
                let mut p = path.clone();
                p.push(next);
                heap.push(Reverse((g + 1 + hn, p, nf)));
            }
        }
        Err(RegraspError::NoPath)
    }

    /// Builds a path record from node ids joined by existing edges.
    pub fn materialize(&self, ids: &[&str]) -> RegraspPath {
        let nodes: Vec<RegraspNode> = ids.iter().map(|id| self.nodes[*id].clone()).collect();
        let mut actions = Vec::with_capacity(ids.len().saturating_sub(1));
        let mut edge_kinds = Vec::with_capacity(actions.capacity());
        for w in nodes.windows(2) {
            let kind = self.edge(&w[0].id, &w[1].id).expect("consecutive nodes share an edge");
            edge_kinds.push(kind);
            actions.push(Action::along(kind, w[0].group, w[1].group));
        }
        RegraspPath { nodes, actions, edge_kinds }
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeDump {
                    id: n.id.clone(),
                    group: n.group,
                    arm: n.grasp.arm,
                    grasp: n.grasp.id.clone(),
                    object_pose: PoseSpec::from_pose(&n.object_pose),
                    config: n.config.0.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|((a, b), k)| EdgeDump { a: a.clone(), b: b.clone(), kind: *k, deleted: self.deleted.contains(&(a.clone(), b.clone())) })
                .collect(),
        }
    }
}

/// Serializable snapshot of a graph for debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: String,
    pub group: NodeGroup,
    pub arm: ArmSide,
    pub grasp: String,
    pub object_pose: PoseSpec,
    pub config: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub a: String,
    pub b: String,
    pub kind: EdgeKind,
    pub deleted: bool,
}
