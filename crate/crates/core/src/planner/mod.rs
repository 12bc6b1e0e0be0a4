//! Joint-space RRT-connect, shortcut smoothing, and the regrasp/motion backtracking loop.

mod backtrack;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{ArmModel, Scene};
use crate::kinematics::JointConfig;

pub use backtrack::{plan_regrasp_motion, BacktrackBudget, MotionSegment, RegraspPlan, RegraspProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Largest joint-space extension per tree step (rad).
    pub step: f64,
    /// Trees are joined once their closest nodes are this near (rad).
    pub connect_threshold: f64,
    pub max_iterations: usize,
    /// Largest per-joint move between collision-checked samples on an edge (rad).
    pub edge_resolution: f64,
    pub smoothing_attempts: usize,
    pub seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { step: 0.1, connect_threshold: 0.1, max_iterations: 5000, edge_resolution: 0.02, smoothing_attempts: 100, seed: 0 }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = [self.step, self.connect_threshold, self.edge_resolution];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(PlanError::InvalidParams("step, threshold and resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("goal configuration is in collision")]
    GoalInCollision,
    #[error("no path found in {iterations} iterations")]
    NoPath { iterations: usize },
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("configurations have different lengths")]
    DimensionMismatch,
    #[error("plan infeasible after {searches} searches and {rebuilds} rebuilds: {reason}")]
    Infeasible { searches: usize, rebuilds: usize, reason: String },
}

/// Configuration space seen by the planner.
pub trait ConfigSpace {
    /// Sampling box per joint.
    fn bounds(&self) -> &[(f64, f64)];
    fn is_free(&self, q: &[f64]) -> bool;
}

/// Samples along `a → b` so no joint moves more than `resolution` between
/// checks; both endpoints included.
pub fn segment_free(space: &dyn ConfigSpace, a: &JointConfig, b: &JointConfig, resolution: f64) -> bool {
    let max_delta = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let steps = (max_delta / resolution).ceil().max(1.0) as usize;
    (0..=steps).all(|k| space.is_free(&a.lerp(b, k as f64 / steps as f64)))
}

/// One arm moving through a scene while the other arms hold still.
pub struct ArmSpace<'a> {
    scene: &'a Scene,
    arms: &'a [ArmModel],
    q_all: Vec<JointConfig>,
    moving: usize,
    bounds: Vec<(f64, f64)>,
}

impl<'a> ArmSpace<'a> {
    /// Sampling is limited to [-π, π] per joint, widened to cover `include`.
    pub fn new(scene: &'a Scene, arms: &'a [ArmModel], q_all: Vec<JointConfig>, moving: usize, include: &[&JointConfig]) -> Self {
        let pi = std::f64::consts::PI;
        let bounds = arms[moving]
            .chain
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let mut lo = j.lower.max(-pi);
                let mut hi = j.upper.min(pi);
                for q in include {
                    lo = lo.min(q[i]);
                    hi = hi.max(q[i]);
                }
                (lo, hi)
            })
            .collect();
        Self { scene, arms, q_all, moving, bounds }
    }
}

impl ConfigSpace for ArmSpace<'_> {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn is_free(&self, q: &[f64]) -> bool {
        if !self.arms[self.moving].chain.within_limits(q) {
            return false;
        }
        let mut q_all = self.q_all.clone();
        q_all[self.moving] = JointConfig(q.to_vec());
        self.scene.config_collision_free(self.arms, &q_all).unwrap_or(false)
    }
}

/// Tree rooted at index 0; every parent index is smaller than its child's.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub nodes: Vec<JointConfig>,
    pub parents: Vec<Option<usize>>,
}

impl SearchTree {
    pub fn new(root: JointConfig) -> Self {
        Self { nodes: vec![root], parents: vec![None] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, q: JointConfig, parent: usize) -> usize {
        self.nodes.push(q);
        self.parents.push(Some(parent));
        self.nodes.len() - 1
    }

    pub fn nearest(&self, q: &JointConfig) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.distance(q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Configurations from the root to `i`.
    pub fn branch(&self, mut i: usize) -> Vec<JointConfig> {
        let mut out = vec![self.nodes[i].clone()];
        while let Some(p) = self.parents[i] {
            out.push(self.nodes[p].clone());
            i = p;
        }
        out.reverse();
        out
    }
}

/// Ordered joint configurations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointPath(pub Vec<JointConfig>);

impl JointPath {
    /// Sum of joint-space distances between consecutive configurations.
    pub fn length(&self) -> f64 {
        self.0.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn start(&self) -> Option<&JointConfig> {
        self.0.first()
    }

    pub fn end(&self) -> Option<&JointConfig> {
        self.0.last()
    }

    /// Inserts evenly spaced points so consecutive configurations are at most `step` apart.
    pub fn densified(&self, step: f64) -> JointPath {
        let mut out = Vec::new();
        for w in self.0.windows(2) {
            let n = (w[0].distance(&w[1]) / step).ceil().max(1.0) as usize;
            for k in 0..n {
                out.push(w[0].lerp(&w[1], k as f64 / n as f64));
            }
        }
        out.extend(self.0.last().cloned());
        JointPath(out)
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(tree: &mut SearchTree, target: &JointConfig, space: &dyn ConfigSpace, p: &PlannerParams) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near].clone();
    let d = from.distance(target);
    let (q_new, reached) = if d <= p.step { (target.clone(), true) } else { (from.lerp(target, p.step / d), false) };
    if !segment_free(space, &from, &q_new, p.edge_resolution) {
        return Extend::Trapped;
    }
    let idx = tree.push(q_new, near);
    if reached { Extend::Reached(idx) } else { Extend::Advanced(idx) }
}

/// Greedily grows `tree` toward `target` until it is within the connect
/// threshold and a straight free edge joins them.
fn connect(tree: &mut SearchTree, target: &JointConfig, space: &dyn ConfigSpace, p: &PlannerParams) -> Option<usize> {
    loop {
        let near = tree.nearest(target);
        if tree.nodes[near].distance(target) <= p.connect_threshold {
            if segment_free(space, &tree.nodes[near], target, p.edge_resolution) {
                return Some(near);
            }
            return None;
        }
        match extend(tree, target, space, p) {
            Extend::Reached(i) => return Some(i),
            Extend::Advanced(_) => continue,
            Extend::Trapped => return None,
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> JointConfig {
    JointConfig(bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }).collect())
}

/// Bidirectional RRT between two free configurations.
///
/// The returned path runs from `start` to `goal` and every edge between its
/// waypoints passes [`segment_free`] at `params.edge_resolution`.
pub fn rrt_connect(start: &JointConfig, goal: &JointConfig, space: &dyn ConfigSpace, params: &PlannerParams) -> Result<JointPath, PlanError> {
    params.validate()?;
    if start.len() != goal.len() || start.len() != space.bounds().len() {
        return Err(PlanError::DimensionMismatch);
    }
    if !space.is_free(start) {
        return Err(PlanError::StartInCollision);
    }
    if !space.is_free(goal) {
        return Err(PlanError::GoalInCollision);
    }
    if start == goal {
        return Ok(JointPath(vec![start.clone()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut a = SearchTree::new(start.clone());
    let mut b = SearchTree::new(goal.clone());
    // `a` holds the start tree while `swapped` is false.
    let mut swapped = false;
    for it in 0..params.max_iterations {
        // The first iteration aims straight at the other root.
        let target = if it == 0 { b.nodes[0].clone() } else { sample(&mut rng, space.bounds()) };
        let new_idx = match extend(&mut a, &target, space, params) {
            Extend::Trapped => None,
            Extend::Reached(i) | Extend::Advanced(i) => Some(i),
        };
        if let Some(i) = new_idx {
            let q_new = a.nodes[i].clone();
            if let Some(j) = connect(&mut b, &q_new, space, params) {
                let mut head = a.branch(i);
                let mut tail = b.branch(j);
                tail.reverse();
                if head.last() == tail.first() {
                    tail.remove(0);
                }
                head.extend(tail);
                if swapped {
                    head.reverse();
                }
                return Ok(JointPath(head));
            }
        }
        std::mem::swap(&mut a, &mut b);
        swapped = !swapped;
    }
    Err(PlanError::NoPath { iterations: params.max_iterations })
}

/// Random shortcutting: joins two random waypoints directly when the segment
/// is free. Never lengthens the path and keeps both endpoints.
pub fn shortcut_smooth(path: &JointPath, space: &dyn ConfigSpace, attempts: usize, resolution: f64, rng: &mut ChaCha8Rng) -> JointPath {
    let mut pts = path.0.clone();
    for _ in 0..attempts {
        if pts.len() < 3 {
            break;
        }
        let i = rng.random_range(0..pts.len() - 2);
        let j = rng.random_range(i + 2..pts.len());
        if segment_free(space, &pts[i], &pts[j], resolution) {
            pts.drain(i + 1..j);
        }
    }
    JointPath(pts)
}

/// Final paths are re-checked at this many times the planning resolution.
pub const CERTIFY_REFINEMENT: f64 = 10.0;
const CERTIFY_RETRIES: u64 = 4;

/// Plan, smooth, densify to `params.step`, then certify every edge at
/// `edge_resolution / CERTIFY_REFINEMENT`. A path that clips an obstacle
/// between coarse samples is discarded and planning restarts with a new seed.
pub fn plan_motion(start: &JointConfig, goal: &JointConfig, space: &dyn ConfigSpace, params: &PlannerParams) -> Result<JointPath, PlanError> {
    let fine = params.edge_resolution / CERTIFY_REFINEMENT;
    for retry in 0..CERTIFY_RETRIES {
        let p = PlannerParams { seed: params.seed.wrapping_add(retry.wrapping_mul(0x9e37_79b9)), ..*params };
        let raw = rrt_connect(start, goal, space, &p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_5eed);
        let smooth = shortcut_smooth(&raw, space, p.smoothing_attempts, p.edge_resolution, &mut rng);
        let dense = smooth.densified(p.step);
        if dense.0.windows(2).all(|w| segment_free(space, &w[0], &w[1], fine)) {
            return Ok(dense);
        }
    }
    Err(PlanError::NoPath { iterations: params.max_iterations })
}
