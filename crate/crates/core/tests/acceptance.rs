//! Acceptance gate: each criterion prints one PASS/FAIL line; the binary
//! exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dualarm_core::collision::{ArmModel, Body, BodyKind, Scene, ShapePrimitive};
use dualarm_core::contact::{Plant, SensorModel};
use dualarm_core::controller::{
    impedance_update, spiral_next_position, ImpedanceGains, Phase, SpiralMode, SpiralState, Triple,
};
use dualarm_core::harness::{
    batch_sweep, emit_trace_csv, load_scenario, run_pipeline, run_pipeline_with, ErrorSpec, InjectedError, Injection, Mode,
    Outcome, Scenario,
};
use dualarm_core::kinematics::{Joint, JointConfig, KinematicChain};
use dualarm_core::math::{Pose, Rotation, Vec3};
use dualarm_core::planner::{plan_motion, plan_regrasp_motion, BacktrackBudget, ConfigSpace, PlannerParams, RegraspProblem};
use dualarm_core::regrasp::{build_regrasp_graph, ArmSide, Grasp, NodeGroup, RegraspGroups, RegraspNode, PERPENDICULAR_TOL};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    load_scenario(path).expect("bundled scenario loads")
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Substituting the update into the finite-difference impedance equation returns the force.
fn impedance_consistency() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let f = Vec3::from_fn(|_, _| rng.random_range(1.0..100.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let p = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let p_prev = p + Vec3::from_fn(|_, _| rng.random_range(-0.01..0.01));
        let mut axes = || [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)];
        let gains = ImpedanceGains { m: Triple::Axes(axes()), c: Triple::Axes(axes()), k: Triple::Axes(axes()) };
        let dt = rng.random_range(1e-3..0.05);
        let next = impedance_update(&f, &p, &p_prev, &gains, dt).unwrap();
        let (m, c, k) = (gains.m.axes(), gains.c.axes(), gains.k.axes());
        for i in 0..3 {
            let recovered = m[i] * (next[i] - 2.0 * p[i] + p_prev[i]) / (dt * dt)
                + c[i] * (next[i] - p[i]) / dt
                + k[i] * (next[i] - p[i]);
            worst = worst.max((recovered - f[i]).abs() / f[i].abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(worst < 1e-9 && elapsed < Duration::from_secs(1), format!("10^4 tuples, max rel err {worst:.2e}, {elapsed:.2?}"))
}

fn series_exp(theta: f64, axis: &Vec3) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0) * theta;
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for n in 1..60 {
        term = term * k / n as f64;
        sum += term;
    }
    sum
}

/// Rodrigues against a truncated exponential series, plus group axioms.
fn rodrigues_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut series, mut axioms): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let axis = unit(&mut rng);
        let theta = rng.random_range(-PI..PI);
        let r = Rotation::rodrigues(theta, &axis).unwrap();
        series = series.max((r.matrix() - series_exp(theta, &axis)).abs().max());

        let inv = Rotation::rodrigues(-theta, &axis).unwrap();
        axioms = axioms.max((r.matrix() * inv.matrix() - Matrix3::identity()).abs().max());
        axioms = axioms.max((r.inverse().matrix() - inv.matrix()).abs().max());
        let v = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        axioms = axioms.max((r.apply(&v).norm() - v.norm()).abs());
        let wrapped = Rotation::rodrigues(theta + 2.0 * PI, &axis).unwrap();
        axioms = axioms.max((wrapped.matrix() - r.matrix()).abs().max());
        axioms = axioms.max((r.matrix().determinant() - 1.0).abs());
    }
    verdict(series < 1e-12 && axioms < 1e-9, format!("10^3 pairs, series err {series:.2e}, axiom err {axioms:.2e}"))
}

/// Full runs give contiguous Linear→Spiral→Impedance with orientation frozen
/// until impedance: once with the scenario's seeded error, once with an offset
/// across the narrow slot axis that leaves the peg on the rim so the spiral
/// has to search.
fn three_phase_trace() -> Verdict {
    let s = bundled("usb");
    let searched = Injection::Fixed(InjectedError { position: [0.0, 0.003, 0.0], rotation_deg: [0.5, 0.5, 0.0] });
    let mut pass = true;
    let mut details = Vec::new();
    for (label, out) in [
        ("nominal", run_pipeline(&s, Mode::Full).unwrap()),
        ("searched", run_pipeline_with(&s, Mode::Full, s.seed, searched).unwrap()),
    ] {
        let Some(trace) = out.trace else {
            pass = false;
            details.push(format!("{label}: no trace, outcome {}", out.report.outcome));
            continue;
        };
        let runs: Vec<Phase> = trace.phase_runs().into_iter().map(|(p, _)| p).collect();
        let r0 = trace.records[0].rotation;
        let drift = trace
            .records
            .iter()
            .filter(|r| r.phase != Phase::Impedance)
            .map(|r| (r.rotation.matrix() - r0.matrix()).abs().max())
            .fold(0.0, f64::max);
        pass &= out.report.outcome == Outcome::Done
            && runs == [Phase::Linear, Phase::Spiral, Phase::Impedance]
            && drift < 1e-12;
        let counts: Vec<String> = trace.phase_runs().iter().map(|(p, n)| format!("{}={n}", p.as_str())).collect();
        details.push(format!("{label}: {} [{}] drift {drift:.1e}", out.report.outcome, counts.join(" ")));
    }
    verdict(pass, details.join("; "))
}

/// Zero-contact readings stay inside the uniform noise bounds.
fn sensor_envelope() -> Verdict {
    let s = bundled("usb");
    let model = s.peg_model().unwrap();
    let sensor = SensorModel { seed: 4, ..SensorModel::default() };
    // Hand 0.2 m above the hole, far from any contact.
    let hand = Pose::from_translation(s.hole_frame().translation + Vec3::new(0.0, 0.0, 0.2));
    let mut plant = Plant::new(model, Pose::from_translation(Vec3::new(0.0, 0.0, -0.05)), hand, sensor).unwrap();
    let mut peak = [0.0f64; 3];
    let mut inside = true;
    for _ in 0..10_000 {
        let w = plant.command(&hand);
        inside &= w.force.x.abs() <= 1.2 && w.force.y.abs() <= 1.2 && w.force.z.abs() <= 0.5;
        inside &= plant.true_wrench().force == Vec3::zeros();
        for i in 0..3 {
            peak[i] = peak[i].max(w.force[i].abs());
        }
    }
    // The bounds are also nearly attained, so the noise is not degenerate.
    let spans = peak[0] > 1.15 && peak[1] > 1.15 && peak[2] > 0.48;
    verdict(inside && spans, format!("10^4 samples, peak |F| = [{:.3}, {:.3}, {:.3}] N", peak[0], peak[1], peak[2]))
}

/// Monte-Carlo insertion within spiral coverage, both modes.
fn insertion_robustness() -> Verdict {
    let start = Instant::now();
    let mut s = bundled("usb");
    let bounds = ErrorSpec { position_mm: 3.0, min_position_mm: 0.0, rotation_deg: 1.5 };
    let mut rates = Vec::new();
    for mode in [SpiralMode::Literal, SpiralMode::Centered] {
        s.controller.spiral_mode = mode;
        rates.push(batch_sweep(&s, 100, bounds).unwrap().success_rate);
        rates.push(batch_sweep(&s, 100, ErrorSpec::zero()).unwrap().success_rate);
    }
    let elapsed = start.elapsed();
    let ok = rates[0] >= 0.9 && rates[2] >= 0.9 && rates[1] == 1.0 && rates[3] == 1.0 && elapsed < Duration::from_secs(120);
    verdict(
        ok,
        format!(
            "literal {:.2} (zero-error {:.2}), centered {:.2} (zero-error {:.2}), {elapsed:.1?}",
            rates[0], rates[1], rates[2], rates[3]
        ),
    )
}

fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() == 0.0 { 0.0 } else { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) };
    (a + ab * t - p).norm()
}

/// Geometric reachability of the centered spiral, and controller agreement with it.
fn spiral_coverage() -> Verdict {
    let mut s = bundled("usb");
    s.controller.spiral_mode = SpiralMode::Centered;
    let c = &s.controller;
    let clearance = s.peg.clearance;
    assert!(c.spiral_pitch < 2.0 * clearance, "precondition: pitch below the clearance diameter");

    // Probe path from the origin until the radius bound ends it.
    let v = c.v();
    let dr = c.effective_delta_r();
    let mut state = SpiralState::new(Vec3::zeros());
    let mut path = vec![Vec3::zeros()];
    let mut shape_err: f64 = 0.0;
    while let Ok((p, next)) = spiral_next_position(&state, c) {
        // Each probe sits √2·k·δr from the center, δθ further round, in the plane normal to v.
        let k = next.index as f64;
        shape_err = shape_err.max((p.norm() - SQRT_2 * k * dr).abs()).max(p.dot(&v).abs());
        if let Some(prev) = path.last().filter(|q| q.norm() > 0.0) {
            let turn = prev.normalize().dot(&p.normalize()).clamp(-1.0, 1.0).acos();
            shape_err = shape_err.max((turn - c.delta_theta).abs() * dr);
        }
        path.push(p);
        state = next;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (e1, e2) = dualarm_core::math::plane_basis(&v);
    let offsets: Vec<[f64; 2]> = (0..1000)
        .map(|_| {
            let r = c.max_spiral_radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..2.0 * PI);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let reachable: Vec<bool> = offsets
        .iter()
        .map(|o| {
            let hole = e1 * o[0] + e2 * o[1];
            path.windows(2).map(|w| point_segment_distance(&hole, &w[0], &w[1])).fold(f64::MAX, f64::min) < clearance
        })
        .collect();
    let geometric = reachable.iter().all(|r| *r);

    // The controller sees the same hole offset as an in-plane peg error.
    let agree = offsets
        .par_iter()
        .zip(&reachable)
        .enumerate()
        .filter(|(i, (o, reach))| {
            let e = InjectedError { position: [o[0], o[1], 0.0], rotation_deg: [0.0; 3] };
            let out = run_pipeline_with(&s, Mode::ControlOnly, 600 + *i as u64, Injection::Fixed(e)).unwrap();
            (out.report.outcome == Outcome::Done) == **reach
        })
        .count();
    let rate = agree as f64 / offsets.len() as f64;
    verdict(
        geometric && shape_err < 1e-12 && rate >= 0.95,
        format!("10^3 offsets, all reachable: {geometric}, path shape err {shape_err:.1e}, agreement {rate:.3}"),
    )
}

/// Random small regrasp graphs versus exhaustive search over simple paths.
fn regrasp_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let axes = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
    let poses = [
        Pose::identity(),
        Pose::from_translation(Vec3::new(0.5, 0.5, 0.0)),
        Pose::from_translation(Vec3::new(0.5, -0.5, 0.0)),
        Pose::from_translation(Vec3::new(0.0, 1.0, 0.0)),
        Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
    ];
    let (mut matched, mut constrained_ok, mut constrained_total, mut solvable) = (0, 0, 0, 0);
    for _ in 0..200 {
        // Grasps g0.. with approach axes drawn from the six signed axes.
        let n_grasps = rng.random_range(2..=4);
        let approach: Vec<Vec3> = (0..n_grasps).map(|_| axes[rng.random_range(0..6)]).collect();
        let grasp = |g: usize, arm: ArmSide| {
            let a = approach[g];
            let r = Rotation::rodrigues(a.z.acos(), &Vec3::z().cross(&a)).unwrap_or_else(|_| {
                if a.z > 0.0 { Rotation::identity() } else { Rotation::about_x(PI) }
            });
            Grasp::new(format!("g{g}"), arm, Pose::from_rotation(r), 0.02).unwrap()
        };
        let mut candidates = Vec::new();
        for (group, pose_idx) in [
            (NodeGroup::Initial, 0),
            (NodeGroup::Handover, 1),
            (NodeGroup::Handover, 2),
            (NodeGroup::Placement, 3),
            (NodeGroup::Goal, 4),
        ] {
            for arm in [ArmSide::Left, ArmSide::Right] {
                for g in 0..n_grasps {
                    candidates.push((group, pose_idx, arm, g));
                }
            }
        }
        // One initial and one goal node always, then random extras.
        let pick = |rng: &mut ChaCha8Rng, g: NodeGroup| {
            let of: Vec<_> = candidates.iter().filter(|c| c.0 == g).copied().collect();
            of[rng.random_range(0..of.len())]
        };
        let mut chosen = vec![pick(&mut rng, NodeGroup::Initial), pick(&mut rng, NodeGroup::Goal)];
        let keep = rng.random_range(4..=12);
        while chosen.len() < keep {
            let c = candidates[rng.random_range(0..candidates.len())];
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        let mut groups = RegraspGroups::default();
        for &(group, pose_idx, arm, g) in &chosen {
            let node = RegraspNode::feasible(group, pose_idx, grasp(g, arm), poses[pose_idx], JointConfig(vec![0.0]));
            match group {
                NodeGroup::Initial => groups.initial.push(node),
                NodeGroup::Handover => groups.handover.push(node),
                NodeGroup::Placement => groups.placement.push(node),
                NodeGroup::Goal => groups.goal.push(node),
            }
        }
        for a in &groups.handover {
            for b in &groups.handover {
                if a.id < b.id && a.grasp.arm != b.grasp.arm && a.object_pose == b.object_pose && rng.random_bool(0.7) {
                    groups.handover_pairs.push((a.id.clone(), b.id.clone()));
                }
            }
        }
        let mut graph = build_regrasp_graph(groups).unwrap();
        let edges: Vec<(String, String)> = graph.edges().map(|(a, b, _)| (a.to_string(), b.to_string())).collect();
        for (a, b) in &edges {
            if rng.random_bool(0.15) {
                graph.delete_edge(a, b).unwrap();
            }
        }
        let require = rng.random_bool(0.5);

        // Exhaustive: every simple path from an (a) node to a (d) node over live edges.
        let ids: Vec<String> = graph.nodes().map(|n| n.id.clone()).collect();
        let live: Vec<(usize, usize, bool)> = graph
            .edges()
            .filter(|(a, b, _)| !graph.is_deleted(a, b))
            .map(|(a, b, kind)| {
                let (na, nb) = (graph.node(a).unwrap(), graph.node(b).unwrap());
                let angle = na.grasp.approach_axis_in_object.dot(&nb.grasp.approach_axis_in_object).clamp(-1.0, 1.0).acos();
                let perp = kind == dualarm_core::regrasp::EdgeKind::Handover && (angle - FRAC_PI_2).abs() <= PERPENDICULAR_TOL;
                let ia = ids.iter().position(|x| x == a).unwrap();
                let ib = ids.iter().position(|x| x == b).unwrap();
                (ia, ib, perp)
            })
            .collect();
        let group_of = |i: usize| graph.node(&ids[i]).unwrap().group;
        let mut best: Option<Vec<usize>> = None;
        fn dfs(
            path: &mut Vec<usize>,
            perp: bool,
            live: &[(usize, usize, bool)],
            goal: &dyn Fn(usize) -> bool,
            require: bool,
            names: &dyn Fn(&[usize]) -> Vec<String>,
            best: &mut Option<Vec<usize>>,
        ) {
            let last = *path.last().unwrap();
            if goal(last) && (perp || !require) {
                let better = match best {
                    None => true,
                    Some(b) => path.len() < b.len() || (path.len() == b.len() && names(path) < names(b)),
                };
                if better {
                    *best = Some(path.clone());
                }
            }
            for &(a, b, p) in live {
                let next = if a == last { b } else if b == last { a } else { continue };
                if path.contains(&next) {
                    continue;
                }
                path.push(next);
                dfs(path, perp || p, live, goal, require, names, best);
                path.pop();
            }
        }
        let is_goal = |i: usize| group_of(i) == NodeGroup::Goal;
        let names = |p: &[usize]| p.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
        for start in (0..ids.len()).filter(|&i| group_of(i) == NodeGroup::Initial) {
            dfs(&mut vec![start], false, &live, &is_goal, require, &names, &mut best);
        }

        let found = graph.search_shortest_path(require, PERPENDICULAR_TOL);
        let same = match (&best, &found) {
            (None, Err(_)) => true,
            (Some(b), Ok(p)) => {
                let expect: Vec<&str> = b.iter().map(|&i| ids[i].as_str()).collect();
                p.node_ids() == expect
            }
            _ => false,
        };
        matched += same as usize;
        if let Ok(p) = &found {
            solvable += 1;
            if require {
                constrained_total += 1;
                constrained_ok += p.has_perpendicular_handover(PERPENDICULAR_TOL) as usize;
            }
        }
    }
    verdict(
        matched == 200 && constrained_ok == constrained_total && constrained_total > 0,
        format!(
            "{matched}/200 match exhaustive search ({solvable} solvable), perpendicular pair in {constrained_ok}/{constrained_total} constrained paths"
        ),
    )
}

/// Unit square with a vertical wall at x ∈ [0.45, 0.55] pierced by one gap.
struct GapWall {
    bounds: Vec<(f64, f64)>,
    gap: (f64, f64),
}

impl ConfigSpace for GapWall {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn is_free(&self, q: &[f64]) -> bool {
        !(0.45..=0.55).contains(&q[0]) || (q[1] > self.gap.0 && q[1] < self.gap.1)
    }
}

/// Samples every segment so no coordinate moves more than `step` between checks.
fn dense_free(path: &[JointConfig], step: f64, free: &dyn Fn(&JointConfig) -> bool) -> bool {
    path.windows(2).all(|w| {
        let span = w[0].0.iter().zip(&w[1].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let n = (span / step).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            free(&JointConfig(w[0].0.iter().zip(&w[1].0).map(|(a, b)| a + (b - a) * t).collect()))
        })
    })
}

const STICK: f64 = 0.55;
const REACH: f64 = 0.6;

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

/// Two planar stick arms; a post blocks the direct carry so backtracking must
/// delete that edge and hand the puck over instead.
fn blocked_carry() -> (Vec<ArmModel>, Scene, RegraspGroups) {
    let arms = vec![stick_arm("left", Vec3::zeros(), [-1.2, 0.0]), stick_arm("right", Vec3::x(), [0.0, 0.0])];
    let post = Body::new(
        "post",
        ShapePrimitive::cuboid(Vec3::new(0.015, 0.015, 0.05)),
        Pose::from_translation(Vec3::new(0.62, 0.0, 0.0)),
        BodyKind::StaticEnvironment,
    );
    let obj_at = |arm: usize, yaw: f64| {
        Pose::new(Rotation::about_z(yaw), arms[arm].chain.base.translation + Vec3::new(yaw.cos(), yaw.sin(), 0.0) * REACH)
    };
    let grasp_of = |arm: usize, q: [f64; 2], pose: &Pose, id: &str| {
        let hand = arms[arm].hand_pose(&q).unwrap();
        let side = if arm == 0 { ArmSide::Left } else { ArmSide::Right };
        Grasp::new(id, side, pose.inverse().compose(&hand), 0.04).unwrap()
    };
    let meet = (REACH * REACH - 0.25).sqrt().atan2(0.5);
    let right_meet = PI - meet;
    let p0 = obj_at(0, -1.2);
    let ph = obj_at(0, -meet);
    let gl = grasp_of(0, [-1.2, 0.0], &p0, "g");
    let gl2 = grasp_of(0, [-1.2, PI], &p0, "h");
    let gr = grasp_of(1, [-right_meet, 0.0], &ph, "g");
    let node = |g: NodeGroup, grasp: &Grasp, pose: Pose, q: [f64; 2]| {
        RegraspNode::feasible(g, 0, grasp.clone(), pose, JointConfig(q.to_vec()))
    };
    let goal_right = arms[1].hand_pose(&[right_meet, 0.0]).unwrap().compose(&gr.hand_pose_in_object.inverse());
    let bl = node(NodeGroup::Handover, &gl2, ph, [-meet, PI]);
    let br = node(NodeGroup::Handover, &gr, ph, [-right_meet, 0.0]);
    let groups = RegraspGroups {
        initial: vec![node(NodeGroup::Initial, &gl, p0, [-1.2, 0.0]), node(NodeGroup::Initial, &gl2, p0, [-1.2, PI])],
        handover: vec![bl.clone(), br.clone()],
        placement: vec![],
        goal: vec![
            node(NodeGroup::Goal, &gl, obj_at(0, meet), [meet, 0.0]),
            node(NodeGroup::Goal, &gr, goal_right, [right_meet, 0.0]),
        ],
        handover_pairs: vec![(bl.id, br.id)],
    };
    let puck = Body::new("puck", ShapePrimitive::cylinder(0.02, 0.02), p0, BodyKind::Object);
    (arms, Scene::new(vec![post, puck]).unwrap(), groups)
}

/// Planned motions survive 10× finer re-validation; deleted edges stay out of plans.
fn planner_soundness() -> Verdict {
    let (mut ok, mut sound, mut clean) = (0, 0, 0);
    let start = JointConfig(vec![0.1, 0.5]);
    let goal = JointConfig(vec![0.9, 0.5]);
    for seed in 0..20u64 {
        let space = GapWall { bounds: vec![(0.0, 1.0), (0.0, 1.0)], gap: (0.26 + 0.02 * seed as f64, 0.34 + 0.02 * seed as f64) };
        let params = PlannerParams { step: 0.05, connect_threshold: 0.05, edge_resolution: 0.005, seed, ..Default::default() };
        if let Ok(path) = plan_motion(&start, &goal, &space, &params) {
            ok += 1;
            let ends = path.0.first() == Some(&start) && path.0.last() == Some(&goal);
            sound += (ends && dense_free(&path.0, params.edge_resolution / 10.0, &|q| space.is_free(&q.0))) as usize;
        }
    }

    let (arms, scene, groups) = blocked_carry();
    let (mut b_ok, mut b_sound) = (0, 0);
    for seed in 0..20u64 {
        let mut graph = build_regrasp_graph(groups.clone()).unwrap();
        let problem = RegraspProblem {
            scene: &scene,
            arms: &arms,
            object: "puck",
            start: arms.iter().map(|a| a.home.clone()).collect(),
            require_perpendicular: false,
            perpendicular_tol: PERPENDICULAR_TOL,
            alternate_placements: vec![],
            budget: BacktrackBudget::default(),
        };
        let params = PlannerParams { seed: 100 + seed, ..Default::default() };
        let Ok(plan) = plan_regrasp_motion(&mut graph, &problem, &params) else { continue };
        b_ok += 1;
        let deleted: BTreeSet<(String, String)> = plan.deleted_edges.iter().cloned().collect();
        let reused = plan.path.nodes.windows(2).any(|w| {
            deleted.contains(&(w[0].id.clone(), w[1].id.clone())) || deleted.contains(&(w[1].id.clone(), w[0].id.clone()))
        });
        clean += (!reused && !deleted.is_empty()) as usize;
        let mut q = problem.start.clone();
        let mut all = true;
        for seg in &plan.segments {
            all &= seg.path.0.first() == Some(&q[seg.arm]);
            let fixed = q.clone();
            let arm = seg.arm;
            all &= dense_free(&seg.path.0, params.edge_resolution / 10.0, &|c| {
                let mut cfg = fixed.clone();
                cfg[arm] = c.clone();
                seg.scene.config_collision_free(&arms, &cfg).unwrap_or(false)
            });
            q[seg.arm] = seg.path.0.last().unwrap().clone();
        }
        b_sound += (all && q == plan.final_configs) as usize;
    }
    let rate = (ok + b_ok) as f64 / 40.0;
    verdict(
        sound == ok && b_sound == b_ok && clean == b_ok && rate >= 0.95,
        format!(
            "gap-in-wall {ok}/20 solved ({sound} certified), blocked carry {b_ok}/20 solved ({b_sound} certified, {clean} with deleted edge kept out)"
        ),
    )
}

/// Same scenario and seed give byte-identical CSV traces and reports.
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for name in ["usb", "manifold_connector"] {
        let s = bundled(name);
        let mut files = Vec::new();
        for run in 0..2 {
            let out = run_pipeline(&s, Mode::Full).unwrap();
            let csv = dir.path().join(format!("{name}-{run}.csv"));
            let report = dir.path().join(format!("{name}-{run}.toml"));
            emit_trace_csv(out.trace.as_ref().unwrap(), &csv).unwrap();
            out.report.write(&report).unwrap();
            files.push((std::fs::read(csv).unwrap(), std::fs::read(report).unwrap()));
        }
        same &= files[0] == files[1];
    }
    verdict(same, "usb and manifold_connector, full mode, two runs each")
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("impedance discretization consistency", impedance_consistency),
        ("rodrigues correctness", rodrigues_correctness),
        ("three-phase trace structure", three_phase_trace),
        ("sensor-noise envelope", sensor_envelope),
        ("insertion robustness", insertion_robustness),
        ("spiral coverage oracle", spiral_coverage),
        ("regrasp-graph optimality and constraint", regrasp_optimality),
        ("motion-planner soundness", planner_soundness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += !v.pass as usize;
        println!("criterion {}: {} ... {} ({})", i + 1, name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
