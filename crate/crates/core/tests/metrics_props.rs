use isocast::geometry::{relative_frame, RigidTransform, Rotation, Vec3};
use isocast::metrics::{
    mean_tracking_errors, mpjpe, penalties, reward, tracking_errors, ErrorVector, Frame, JointLimits, MetricsError,
    RewardConfig, RobotState,
};
use isocast::motion::{LinkState, MotionFrame};
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn rot(rng: &mut ChaCha8Rng) -> Rotation {
    let m = Rotation::rot_z(rng.random_range(-3.0..3.0)).matrix()
        * Rotation::rot_y(rng.random_range(-1.2..1.2)).matrix()
        * Rotation::rot_x(rng.random_range(-3.0..3.0)).matrix();
    Rotation::from_matrix_lossy(m, 1e-9).unwrap()
}

fn vec3(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn pose(rng: &mut ChaCha8Rng) -> RigidTransform {
    RigidTransform::new(rot(rng), vec3(rng, 2.0))
}

fn frame(rng: &mut ChaCha8Rng, links: usize, joints: usize) -> MotionFrame {
    MotionFrame {
        root: pose(rng),
        joint_pos: (0..joints).map(|_| rng.random_range(-1.0..1.0)).collect(),
        joint_vel: (0..joints).map(|_| rng.random_range(-1.0..1.0)).collect(),
        links: (0..links)
            .map(|_| LinkState { pose: pose(rng), lin_vel: vec3(rng, 1.0), ang_vel: vec3(rng, 2.0) })
            .collect(),
    }
}

fn trajectory(rng: &mut ChaCha8Rng, frames: usize, links: usize) -> Vec<MotionFrame> {
    (0..frames).map(|_| frame(rng, links, 3)).collect()
}

fn moved(traj: &[MotionFrame], world: &RigidTransform) -> Vec<MotionFrame> {
    traj.iter()
        .map(|f| MotionFrame {
            root: world.compose(&f.root),
            links: f
                .links
                .iter()
                .map(|l| LinkState {
                    pose: world.compose(&l.pose),
                    lin_vel: world.rotation.matrix() * l.lin_vel,
                    ang_vel: world.rotation.matrix() * l.ang_vel,
                })
                .collect(),
            ..f.clone()
        })
        .collect()
}

fn geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Every pose expressed explicitly with 3×3 matrices and vectors.
fn explicit_errors(s: &MotionFrame, r: &MotionFrame, rel: &RigidTransform) -> [f64; 6] {
    let (rr, tr) = (*rel.rotation.matrix(), rel.translation);
    let (rf, tf) = (*r.root.rotation.matrix(), r.root.translation);
    let n = s.links.len() as f64;
    let mut e = [0.0; 6];
    e[0] = (s.root.translation - r.root.translation).norm();
    e[1] = geodesic(r.root.rotation.matrix(), s.root.rotation.matrix());
    for (ls, lr) in s.links.iter().zip(&r.links) {
        let ps = rr.transpose() * (ls.pose.translation - tr);
        let pr = rf.transpose() * (lr.pose.translation - tf);
        e[2] += (ps - pr).norm() / n;
        e[3] +=
            geodesic(&(rf.transpose() * lr.pose.rotation.matrix()), &(rr.transpose() * ls.pose.rotation.matrix())) / n;
        e[4] += (ls.lin_vel - lr.lin_vel).norm() / n;
        e[5] += (ls.ang_vel - lr.ang_vel).norm() / n;
    }
    e
}

#[test]
fn identical_state_has_zero_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = frame(&mut rng, 5, 4);
    let rel = relative_frame(&f.root, &f.root).unwrap();
    let e = tracking_errors(&RobotState::from_frame(&f), &f, &rel).unwrap();
    assert!(e.to_array().iter().all(|v| v.abs() < 1e-9), "{e:?}");
}

#[test]
fn planar_root_shift_is_absorbed() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reference = frame(&mut rng, 4, 3);
    let shift = RigidTransform::from_translation(Vec3::new(0.2, 0.0, 0.0));
    let state = moved(std::slice::from_ref(&reference), &shift).remove(0);
    let rel = relative_frame(&reference.root, &state.root).unwrap();
    let e = tracking_errors(&RobotState::from_frame(&state), &reference, &rel).unwrap();
    assert!((e.root_pos - 0.2).abs() < 1e-12);
    assert!(e.link_pos < 1e-9 && e.link_rot < 1e-9 && e.root_rot < 1e-9);
}

#[test]
fn errors_match_explicit_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let s = frame(&mut rng, 6, 3);
        let r = frame(&mut rng, 6, 3);
        let rel = relative_frame(&r.root, &s.root).unwrap();
        let got = tracking_errors(&RobotState::from_frame(&s), &r, &rel).unwrap().to_array();
        let want = explicit_errors(&s, &r, &rel);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn reward_examples() {
    let cfg = RewardConfig::default();
    assert_eq!(reward(&ErrorVector::default(), &cfg), cfg.max_reward());
    let terms = cfg.terms();
    for i in 0..6 {
        let mut e = [0.0; 6];
        e[i] = terms[i].sigma;
        let r = reward(&ErrorVector::from_array(e), &cfg);
        let expected = cfg.max_reward() - terms[i].weight + terms[i].weight * (-1.0f64).exp();
        assert!((r - expected).abs() < 1e-12);
    }
}

#[test]
fn reward_decreases_along_each_axis() {
    let cfg = RewardConfig::default();
    // Scan up to 4σ; beyond that the term drops below one ulp of the sum.
    for (i, term) in cfg.terms().iter().enumerate() {
        let mut last = f64::INFINITY;
        for step in 0..60 {
            let mut e = [0.05; 6];
            e[i] = step as f64 / 59.0 * 4.0 * term.sigma;
            let r = reward(&ErrorVector::from_array(e), &cfg);
            assert!(r < last, "term {i} step {step}");
            assert!(r > 0.0 && r <= cfg.max_reward());
            last = r;
        }
    }
}

#[test]
fn penalty_examples() {
    let n = 3;
    let state = RobotState {
        root: RigidTransform::identity(),
        joint_pos: vec![0.0, 1.1, -0.2],
        joint_vel: vec![0.0; n],
        links: Vec::new(),
        last_action: vec![0.1; n],
        action: vec![0.1; n],
        joint_torques: vec![1.0; n],
        contact_flags: vec![false, false],
    };
    let limits = JointLimits::symmetric(&[1.0, 1.0, 1.0], &[10.0; 3]);
    let p = penalties(&state, &limits, &HashSet::from([0, 1])).unwrap();
    assert!((p.joint_limit_violation - 0.01).abs() < 1e-12);
    assert_eq!((p.action_rate, p.undesired_contact, p.torque_limit_violation), (0.0, 0.0, 0.0));

    let bad = RobotState { action: vec![0.0; 2], ..state.clone() };
    assert!(matches!(penalties(&bad, &limits, &HashSet::new()), Err(MetricsError::SchemaMismatch(_))));
    assert!(penalties(&state, &limits, &HashSet::from([5])).is_err());
}

#[test]
fn penalties_match_elementwise_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.random_range(1..12);
        let bodies = rng.random_range(1..8);
        let mut v = |s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
        let (q, a, la, tau) = (v(2.0), v(1.0), v(1.0), v(50.0));
        let lower: Vec<f64> = v(1.0).iter().map(|x| -1.0 + 0.2 * x).collect();
        let upper: Vec<f64> = v(1.0).iter().map(|x| 1.0 + 0.2 * x).collect();
        let torque: Vec<f64> = v(1.0).iter().map(|x| 30.0 + 5.0 * x).collect();
        let contact: Vec<bool> = (0..bodies).map(|_| rng.random_bool(0.5)).collect();
        let undesired: HashSet<usize> = (0..bodies).filter(|_| rng.random_bool(0.5)).collect();
        let state = RobotState {
            root: RigidTransform::identity(),
            joint_pos: q.clone(),
            joint_vel: vec![0.0; n],
            links: Vec::new(),
            last_action: la.clone(),
            action: a.clone(),
            joint_torques: tau.clone(),
            contact_flags: contact.clone(),
        };
        let limits = JointLimits { lower: lower.clone(), upper: upper.clone(), torque: torque.clone() };
        let p = penalties(&state, &limits, &undesired).unwrap();

        let (mut rate, mut lim, mut tq) = (0.0, 0.0, 0.0);
        for i in 0..n {
            rate += (a[i] - la[i]) * (a[i] - la[i]);
            if q[i] > upper[i] {
                lim += (q[i] - upper[i]).powi(2);
            }
            if q[i] < lower[i] {
                lim += (lower[i] - q[i]).powi(2);
            }
            if tau[i].abs() > torque[i] {
                tq += (tau[i].abs() - torque[i]).powi(2);
            }
        }
        let mut hits = 0.0;
        for (b, &touching) in contact.iter().enumerate() {
            if undesired.contains(&b) && touching {
                hits += 1.0;
            }
        }
        assert!((p.action_rate - rate).abs() < 1e-12);
        assert!((p.joint_limit_violation - lim).abs() < 1e-12);
        assert!((p.torque_limit_violation - tq).abs() < 1e-9);
        assert_eq!(p.undesired_contact, hits);
    }
}

#[test]
fn mpjpe_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let frames = rng.random_range(1..20);
        let links = rng.random_range(1..8);
        let a = trajectory(&mut rng, frames, links);
        let b = trajectory(&mut rng, frames, links);
        let (mut g, mut base) = (0.0, 0.0);
        for t in 0..frames {
            let (ra, rb) = (*a[t].root.rotation.matrix(), *b[t].root.rotation.matrix());
            for l in 0..links {
                let (pa, pb) = (a[t].links[l].pose.translation, b[t].links[l].pose.translation);
                g += (pa - pb).norm();
                let la = ra.transpose() * (pa - a[t].root.translation);
                let lb = rb.transpose() * (pb - b[t].root.translation);
                base += (la - lb).norm();
            }
        }
        let count = (frames * links) as f64;
        assert!((mpjpe(&a, &b, Frame::Global).unwrap() - g / count).abs() < 1e-12);
        assert!((mpjpe(&a, &b, Frame::Base).unwrap() - base / count).abs() < 1e-12);
    }
}

#[test]
fn translated_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = trajectory(&mut rng, 10, 5);
    let shift = RigidTransform::from_translation(Vec3::new(0.3, 0.0, 0.0));
    let b = moved(&a, &shift);
    assert_eq!(mpjpe(&a, &a, Frame::Global).unwrap(), 0.0);
    assert_eq!(mpjpe(&a, &a, Frame::Base).unwrap(), 0.0);
    assert!((mpjpe(&b, &a, Frame::Global).unwrap() - 0.3).abs() < 1e-12);
    assert!(mpjpe(&b, &a, Frame::Base).unwrap() < 1e-12);
}

#[test]
fn schema_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = trajectory(&mut rng, 4, 3);
    let b = trajectory(&mut rng, 4, 2);
    assert!(matches!(mpjpe(&a, &b, Frame::Global), Err(MetricsError::SchemaMismatch(_))));
    assert!(matches!(mpjpe(&a, &a[..2], Frame::Global), Err(MetricsError::LengthMismatch(4, 2))));
    assert!(matches!(mpjpe(&[], &[], Frame::Base), Err(MetricsError::EmptyTrajectory)));
    assert!(matches!(mean_tracking_errors(&a, &b), Err(MetricsError::SchemaMismatch(_))));
    let mut cfg = RewardConfig::default();
    cfg.link_rot.sigma = 0.0;
    assert!(matches!(cfg.validate(), Err(MetricsError::InvalidSigma { term: "link_rot", .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn base_mpjpe_is_rigidly_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = trajectory(&mut rng, 6, 4);
        let b = trajectory(&mut rng, 6, 4);
        let world = RigidTransform::new(rot(&mut rng), vec3(&mut rng, 50.0));
        let before = mpjpe(&a, &b, Frame::Base).unwrap();
        let after = mpjpe(&moved(&a, &world), &b, Frame::Base).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn global_mpjpe_grows_by_translation_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = trajectory(&mut rng, 5, 3);
        let t = vec3(&mut rng, 5.0);
        let b = moved(&a, &RigidTransform::from_translation(t));
        prop_assert!((mpjpe(&b, &a, Frame::Global).unwrap() - t.norm()).abs() < 1e-9);
    }

    #[test]
    fn outputs_are_non_negative_and_reward_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = trajectory(&mut rng, 3, 4);
        let b = trajectory(&mut rng, 3, 4);
        let e = mean_tracking_errors(&a, &b).unwrap();
        prop_assert!(e.to_array().iter().all(|&v| v >= 0.0));
        let cfg = RewardConfig::default();
        let r = reward(&e, &cfg);
        prop_assert!(r > 0.0 && r <= cfg.max_reward());
    }
}
