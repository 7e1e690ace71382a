use ebrt_core::collision::{closest_pair, collides, compute_collision, Collider, QueryOptions, Shape};
use ebrt_core::geometry::{primitives, triangle_closest, triangles_intersect, Transform, TriMesh, Triangle, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bodies() -> Vec<Shape> {
    [
        primitives::ellipsoid(Vec3::zeros(), Vec3::new(40.0, 25.0, 15.0), 10, 20),
        primitives::cuboid_subdivided(Vec3::new(-30.0, -10.0, -20.0), Vec3::new(30.0, 10.0, 20.0), [4, 2, 3]),
        primitives::cylinder(Vec3::zeros(), 2, 18.0, 70.0, 24, 3),
    ]
    .into_iter()
    .map(|m| Shape::new(m).unwrap())
    .collect()
}

fn random_pose(rng: &mut ChaCha8Rng, reach: f64) -> Transform {
    let t = Vec3::new(
        rng.gen_range(-reach..reach),
        rng.gen_range(-reach..reach),
        rng.gen_range(-reach..reach),
    );
    Transform::from_translation(t).compose(&Transform::from_euler_deg(
        rng.gen_range(-180.0..180.0),
        rng.gen_range(-180.0..180.0),
        rng.gen_range(-180.0..180.0),
    ))
}

fn world(m: &TriMesh, t: &Transform) -> Vec<Triangle> {
    m.iter_triangles().map(|tr| tr.map(|p| t.apply(p))).collect()
}

/// All-pairs evaluation on world-space triangles.
fn brute(a: &[Triangle], b: &[Triangle]) -> (bool, f64) {
    let mut hit = false;
    let mut best = f64::INFINITY;
    for ta in a {
        for tb in b {
            hit |= triangles_intersect(ta, tb);
            best = best.min(triangle_closest(ta, tb).distance);
        }
    }
    (hit, best)
}

#[test]
fn bvh_matches_brute_force_on_random_poses() {
    let shapes = bodies();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut hits, mut misses) = (0, 0);
    for i in 0..500 {
        let (ia, ib) = (i % shapes.len(), (i / shapes.len()) % shapes.len());
        let (ta, tb) = (random_pose(&mut rng, 30.0), random_pose(&mut rng, 30.0));
        let a = Collider::new("a", &shapes[ia], ta);
        let b = Collider::new("b", &shapes[ib], tb);
        let (hit, dist) = brute(&world(shapes[ia].mesh(), &ta), &world(shapes[ib].mesh(), &tb));
        let report = compute_collision(&a, &[b], QueryOptions::default()).unwrap();
        assert_eq!(report.colliding, hit, "pose {i}");
        assert_eq!(collides(&a, &b, QueryOptions::default()), hit, "pose {i}");
        let expect = if hit { 0.0 } else { dist };
        assert!((report.distance_mm - expect).abs() < 1e-6, "pose {i}: {} vs {expect}", report.distance_mm);
        if hit {
            hits += 1;
        } else {
            misses += 1;
        }
    }
    assert!(hits > 50 && misses > 50, "pose sampler is lopsided: {hits} hits, {misses} misses");
}

#[test]
fn swapping_operands_changes_nothing() {
    let shapes = bodies();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let a = Collider::new("a", &shapes[i % 3], random_pose(&mut rng, 40.0));
        let b = Collider::new("b", &shapes[(i + 1) % 3], random_pose(&mut rng, 40.0));
        let ab = compute_collision(&a, &[b], QueryOptions::default()).unwrap();
        let ba = compute_collision(&b, &[a], QueryOptions::default()).unwrap();
        assert_eq!(ab.colliding, ba.colliding);
        assert_eq!(ab.distance_mm, ba.distance_mm);
        assert_eq!(ab.witness, [ba.witness[1], ba.witness[0]]);
    }
}

#[test]
fn bvh_toggle_gives_same_answers() {
    let shapes = bodies();
    let brute = QueryOptions { use_bvh: false };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..150 {
        let a = Collider::new("a", &shapes[(i + 2) % 3], random_pose(&mut rng, 35.0));
        let b = Collider::new("b", &shapes[i % 3], random_pose(&mut rng, 35.0));
        let fast = closest_pair(&a, &b, QueryOptions::default());
        let slow = closest_pair(&a, &b, brute);
        assert!((fast.distance - slow.distance).abs() < 1e-9);
        assert_eq!(collides(&a, &b, QueryOptions::default()), collides(&a, &b, brute));
    }
}

#[test]
fn separation_grows_along_the_separating_axis() {
    let shapes = bodies();
    let a = Collider::new("a", &shapes[1], Transform::identity());
    let mut last = 0.0;
    for k in 0..40 {
        let gap = 2.5 * k as f64;
        // box reaches x = 30, ellipsoid reaches x = -40 about its centre
        let t = Transform::translation(70.0 + gap, 3.0, -2.0).compose(&Transform::rot_x(25.0));
        let b = Collider::new("b", &shapes[0], t);
        let d = closest_pair(&a, &b, QueryOptions::default()).distance;
        assert!(d >= last, "distance shrank at step {k}");
        last = d;
    }
    assert!(last > 90.0);
}

#[test]
fn rigid_motion_of_both_bodies_preserves_results() {
    let shapes = bodies();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let (ta, tb) = (random_pose(&mut rng, 30.0), random_pose(&mut rng, 30.0));
        let g = random_pose(&mut rng, 2000.0);
        let r0 = compute_collision(
            &Collider::new("a", &shapes[i % 3], ta),
            &[Collider::new("b", &shapes[(i + 1) % 3], tb)],
            QueryOptions::default(),
        )
        .unwrap();
        let r1 = compute_collision(
            &Collider::new("a", &shapes[i % 3], g.compose(&ta)),
            &[Collider::new("b", &shapes[(i + 1) % 3], g.compose(&tb))],
            QueryOptions::default(),
        )
        .unwrap();
        assert_eq!(r0.colliding, r1.colliding, "pose {i}");
        assert!((r0.distance_mm - r1.distance_mm).abs() < 1e-6);
    }
}
