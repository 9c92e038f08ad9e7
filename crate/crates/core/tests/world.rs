use proptest::prelude::*;
use tactile_retrieval::geometry::{ConvexPolygon, Vec2, Vec3};
use tactile_retrieval::world::{
    move_finger, probe_descend, push_response, BodyState, ContactTarget, Finger, ObjectShape, Pose,
    ProbeConfig, PushParams, Scene, Slice,
};

fn prism(poly: ConvexPolygon, height: f64) -> ObjectShape {
    ObjectShape::new(
        "prism",
        vec![Slice {
            z_lo: 0.0,
            z_hi: height,
            footprint: vec![poly],
        }],
    )
    .unwrap()
}

/// 64-gon of circumradius 5 with a vertex on the +x axis.
fn cylinder(height: f64) -> ObjectShape {
    prism(ConvexPolygon::regular(64, 5.0, 0.0).unwrap(), height)
}

fn square(half: f64, height: f64) -> ObjectShape {
    prism(ConvexPolygon::rect(-half, -half, half, half).unwrap(), height)
}

fn scene_with(shape: ObjectShape, at: Vec2, mass: f64, mu: f64, static_mode: bool) -> Scene {
    let body = BodyState::new(shape, Pose::new(at.x, at.y, 0.0), mass, mu).unwrap();
    Scene::new(60.0, vec![body], static_mode)
}

#[test]
fn move_through_empty_space() {
    let mut scene = Scene::empty(60.0);
    let mut f = Finger::new(0, Vec3::new(10.0, 10.0, 5.0));
    let ev = move_finger(&mut scene, &mut f, Vec3::new(20.0, 15.0, 5.0), 0.2).unwrap();
    assert!(ev.is_empty());
    assert_eq!(f.position, Vec3::new(20.0, 15.0, 5.0));
    assert!(!f.contact && f.contact_normal.is_none());
}

#[test]
fn move_finger_rejects_bad_inputs() {
    let mut scene = Scene::empty(60.0);
    let mut f = Finger::new(0, Vec3::new(10.0, 10.0, 5.0));
    assert!(move_finger(&mut scene, &mut f, Vec3::new(70.0, 10.0, 5.0), 0.2).is_err());
    assert!(move_finger(&mut scene, &mut f, Vec3::new(20.0, 10.0, 5.0), 0.0).is_err());
    assert!(move_finger(&mut scene, &mut f, Vec3::new(20.0, 10.0, 5.0), 0.6).is_err());
}

#[test]
fn static_cylinder_contact_on_offset_circle() {
    // analytic oracle: the fingertip centre stops at distance R + r from the axis
    let mut scene = scene_with(cylinder(10.0), Vec2::new(30.0, 30.0), 0.2, 0.5, true);
    let mut f = Finger::new(1, Vec3::new(42.0, 30.0, 5.0));
    let ev = move_finger(&mut scene, &mut f, Vec3::new(30.0, 30.0, 5.0), 0.2).unwrap();
    assert_eq!(ev.len(), 1);
    let e = ev[0];
    assert_eq!(e.target, ContactTarget::Body(0));
    assert!((e.point.x - 36.0).abs() < 1e-6, "{:?}", e.point);
    assert!(e.point.y.abs() - 30.0 < 1e-9);
    assert!(e.depth >= scene.physics.contact_threshold);
    assert!(f.contact);
    assert!(scene.displacement_report().iter().all(|&(_, d)| d == 0.0));
}

#[test]
fn movable_body_moves_more_than_static() {
    let run = |static_mode| {
        let mut scene = scene_with(cylinder(10.0), Vec2::new(30.0, 30.0), 0.1, 0.1, static_mode);
        let mut f = Finger::new(0, Vec3::new(42.0, 31.0, 5.0));
        move_finger(&mut scene, &mut f, Vec3::new(30.0, 31.0, 5.0), 0.2).unwrap();
        scene.displacement_report()[0].1
    };
    let moving = run(false);
    assert!(moving > run(true));
    assert!(moving > 0.0);
}

#[test]
fn probe_empty_cell_hits_floor() {
    let mut scene = Scene::empty(60.0);
    let ev = probe_descend(&mut scene, Vec2::new(12.5, 7.5), &ProbeConfig::default()).unwrap();
    assert_eq!(ev.target, ContactTarget::Floor);
    assert!((ev.point.z - scene.physics.finger_radius).abs() < 1e-12);
}

#[test]
fn probe_rejects_outside_bin() {
    let mut scene = Scene::empty(60.0);
    assert!(probe_descend(&mut scene, Vec2::new(-1.0, 7.5), &ProbeConfig::default()).is_err());
}

#[test]
fn probe_on_top_face_has_no_push() {
    let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), 0.2, 0.5, false);
    let ev = probe_descend(&mut scene, Vec2::new(32.5, 27.5), &ProbeConfig::default()).unwrap();
    assert_eq!(ev.target, ContactTarget::Body(0));
    assert!((ev.point.z - 11.0).abs() < 1e-9);
    assert_eq!(scene.displacement_report()[0].1, 0.0);
}

/// Reference integrator: the same probe with 0.1 mm increments.
fn grazing_probe(step: f64) -> (f64, Vec3) {
    let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), 0.2, 0.5, false);
    let probe = ProbeConfig { z_start: 25.0, step };
    let ev = probe_descend(&mut scene, Vec2::new(35.6, 30.0), &probe).unwrap();
    (scene.displacement_report()[0].1, ev.normal)
}

#[test]
fn probe_grazing_side_wall() {
    let (d, n) = grazing_probe(0.5);
    assert!(n.x > 0.0, "expected a horizontal normal component, got {n:?}");
    let beta = 0.5;
    assert!(d <= beta * 0.5 + 1e-12, "displacement {d}");
    let (d_ref, _) = grazing_probe(0.01);
    assert!((d - d_ref).abs() < 0.05, "coarse {d} vs micro-step {d_ref}");
}

#[test]
fn halving_the_step_barely_changes_the_pose() {
    let run = |step: f64| {
        let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), 0.2, 0.5, false);
        let mut f = Finger::new(0, Vec3::new(42.0, 32.0, 4.0));
        move_finger(&mut scene, &mut f, Vec3::new(30.0, 32.0, 4.0), step).unwrap();
        scene.bodies[0].pose
    };
    for step in [0.5, 0.2, 0.1] {
        let a = run(step);
        let b = run(step / 2.0);
        let dp = (a.position() - b.position()).norm();
        assert!(dp < 0.05, "step {step}: pose moved by {dp}");
        assert!((a.theta - b.theta).abs() * 5.0 < 0.05);
    }
}

#[test]
fn identical_commands_are_bit_identical() {
    let run = || {
        let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), 0.2, 0.25, false);
        let mut events = Vec::new();
        for k in 0..5 {
            let y = 27.0 + k as f64;
            let mut f = Finger::new(0, Vec3::new(44.0, y, 3.0));
            events.extend(move_finger(&mut scene, &mut f, Vec3::new(30.0, y, 3.0), 0.2).unwrap());
        }
        (events, scene.poses())
    };
    assert_eq!(run(), run());
}

#[test]
fn pushed_body_shoves_neighbour_without_interpenetration() {
    let a = BodyState::new(square(5.0, 10.0), Pose::new(20.0, 30.0, 0.0), 0.2, 0.1).unwrap();
    let b = BodyState::new(square(5.0, 10.0), Pose::new(30.5, 30.0, 0.0), 0.2, 0.1).unwrap();
    let mut scene = Scene::new(60.0, vec![a, b], false);
    for _ in 0..10 {
        let mut f = Finger::new(0, Vec3::new(5.0, 30.0, 4.0));
        move_finger(&mut scene, &mut f, Vec3::new(20.0, 30.0, 4.0), 0.2).unwrap();
    }
    assert!(scene.bodies[1].pose.x > 30.5, "neighbour never moved");
    let gap = scene.body_gap(0, 1);
    assert!(gap >= 0.0);
    let pa = scene.bodies[0].world_footprint(0);
    let pb = scene.bodies[1].world_footprint(0);
    if let Some(o) = pa[0].overlap(&pb[0]) {
        assert!(o.depth <= scene.physics.surface_tolerance + 1e-9, "overlap {}", o.depth);
    }
}

#[test]
fn bodies_stay_in_bin() {
    let mut scene = scene_with(square(5.0, 10.0), Vec2::new(54.0, 30.0), 0.1, 0.1, false);
    for _ in 0..30 {
        let mut f = Finger::new(0, Vec3::new(40.0, 30.5, 4.0));
        move_finger(&mut scene, &mut f, Vec3::new(55.0, 30.5, 4.0), 0.2).unwrap();
    }
    let (lo, hi) = scene.bodies[0].world_bounds();
    assert!(lo.x >= -1e-9 && hi.x <= 60.0 + 1e-9);
}

#[test]
fn push_example_values() {
    let body = BodyState::new(square(5.0, 10.0), Pose::new(30.0, 30.0, 0.0), 0.2, 0.5).unwrap();
    let p = push_response(&body, Vec2::new(25.0, 30.0), 0.2, Vec2::new(1.0, 0.0), &PushParams::default());
    assert!((p.position() - body.pose.position()).norm() - 0.1 < 1e-12);
    let mut scene = Scene::new(60.0, vec![body], false);
    scene.bodies[0].pose = p;
    let report = scene.displacement_report();
    assert_eq!(report[0].0, 0);
    assert!((report[0].1 - 0.1).abs() < 1e-12);
}

#[test]
fn push_matches_micro_step_integration() {
    // oracle: split the push into 1000 slices with a re-evaluated lever arm
    let body = BodyState::new(square(5.0, 10.0), Pose::new(30.0, 30.0, 0.0), 0.2, 0.5).unwrap();
    let params = PushParams::default();
    let contact = Vec2::new(25.0, 31.0);
    let one = push_response(&body, contact, 0.2, Vec2::new(1.0, 0.0), &params);
    let mut b = body.clone();
    let mut c = contact;
    for _ in 0..1000 {
        let before = b.pose;
        b.pose = push_response(&b, c, 0.2 / 1000.0, Vec2::new(1.0, 0.0), &params);
        // the contact point rides with the body
        let local = before.to_local(c);
        c = b.pose.isometry().apply(local);
    }
    assert!((one.position() - b.pose.position()).norm() < 1e-4);
    assert!((one.theta - b.pose.theta).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn displacement_non_increasing_in_friction_and_mass(
        mu in 0.05f64..1.0, dmu in 0.0f64..0.5,
        m in 0.05f64..1.0, dm in 0.0f64..0.5,
        y in 26.0f64..34.0,
    ) {
        let run = |mu: f64, m: f64| {
            let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), m, mu, false);
            let mut f = Finger::new(0, Vec3::new(44.0, y, 4.0));
            move_finger(&mut scene, &mut f, Vec3::new(30.0, y, 4.0), 0.2).unwrap();
            scene.displacement_report()[0].1
        };
        let base = run(mu, m);
        prop_assert!(run(mu + dmu, m) <= base + 1e-9);
        prop_assert!(run(mu, m + dm) <= base + 1e-9);
    }

    #[test]
    fn static_mode_never_moves(xs in proptest::collection::vec((5.0f64..55.0, 5.0f64..55.0, 0.5f64..12.0), 1..12)) {
        let mut scene = scene_with(square(5.5, 10.0), Vec2::new(30.0, 30.0), 0.05, 0.05, true);
        for (x, y, z) in xs {
            let mut f = Finger::new(0, Vec3::new(x, y, 18.0));
            let _ = move_finger(&mut scene, &mut f, Vec3::new(60.0 - x, 60.0 - y, z), 0.3);
            let _ = probe_descend(&mut scene, Vec2::new(x, y), &ProbeConfig::default());
        }
        prop_assert!(scene.displacement_report().iter().all(|&(_, d)| d == 0.0));
    }

    #[test]
    fn contact_fires_at_threshold(y in 26.0f64..34.0, z in 0.5f64..9.5, static_mode: bool) {
        let mut scene = scene_with(square(5.0, 10.0), Vec2::new(30.0, 30.0), 0.2, 0.5, static_mode);
        let mut f = Finger::new(0, Vec3::new(44.0, y, z));
        let ev = move_finger(&mut scene, &mut f, Vec3::new(30.0, y, z), 0.2).unwrap();
        prop_assert_eq!(ev.len(), 1);
        let eps = scene.physics.contact_threshold;
        prop_assert!(ev[0].depth >= eps && ev[0].depth < eps + 1e-6);
        // resolved fingertip sits on the inflated surface
        let residual = scene.max_penetration(ev[0].point).map_or(0.0, |(_, p)| p.depth);
        prop_assert!(residual <= scene.physics.surface_tolerance);
    }
}
