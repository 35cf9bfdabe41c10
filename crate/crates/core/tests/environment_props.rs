use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use udld::environment::*;
use udld::link_budget::LinkBudgetParams;
use udld::simulation::RadioContext;

fn room() -> Room {
    SceneConfig::default().room().unwrap()
}

fn point() -> impl Strategy<Value = Point> {
    (0.0..10.0f64, 0.0..10.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn devices(max: usize) -> impl Strategy<Value = Vec<Device>> {
    prop::collection::vec(point(), 0..max).prop_map(|ps| {
        ps.into_iter()
            .enumerate()
            .map(|(i, p)| Device::new(i, p, 0.0))
            .collect()
    })
}

/// Blocking test written independently of the library: sample the segment
/// densely and look for a sample inside a disk. Only used away from tangency.
fn sampled_blocked(a: Point, b: Point, c: Point, r: f64) -> bool {
    (0..=20_000).any(|k| {
        let t = k as f64 / 20_000.0;
        let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        p.distance(c) < r
    })
}

proptest! {
    #[test]
    fn los_is_symmetric(devs in devices(30), a in point(), b in point()) {
        let r = room();
        prop_assert_eq!(line_of_sight(a, b, &r, &devs, &[]), line_of_sight(b, a, &r, &devs, &[]));
    }

    #[test]
    fn removing_a_device_never_blocks(devs in devices(30), a in point(), b in point(), k in any::<prop::sample::Index>()) {
        prop_assume!(!devs.is_empty());
        let r = room();
        let before = line_of_sight(a, b, &r, &devs, &[]);
        let mut fewer = devs.clone();
        fewer.remove(k.index(devs.len()));
        let after = line_of_sight(a, b, &r, &fewer, &[]);
        prop_assert!(!before || after);
    }

    #[test]
    fn single_disk_blocking_matches_sampling(a in point(), b in point(), c in point()) {
        let empty = Room::new(10.0, 10.0, Point::new(5.0, 5.0), vec![]).unwrap();
        let d = point_segment_distance(c, a, b);
        prop_assume!((d - DEFAULT_BODY_RADIUS).abs() > 1e-3);
        let blocked = !line_of_sight(a, b, &empty, &[Device::new(0, c, 0.0)], &[]);
        prop_assert_eq!(blocked, sampled_blocked(a, b, c, DEFAULT_BODY_RADIUS));
    }

    #[test]
    fn motion_stays_in_the_room(seed in any::<u64>(), speed in 0.1..3.0f64, steps in 1usize..300) {
        let r = room();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = r.sample_free_point(&mut rng);
        let mut d = Device::new(0, start, speed);
        d.waypoint = r.sample_waypoint(start, &mut rng);
        for _ in 0..steps {
            random_waypoint_step(&mut d, &r, 1.0, &mut rng);
            prop_assert!(r.contains(d.position), "{:?}", d.position);
            prop_assert!(r.static_obstacles.iter().all(|o| !o.contains(d.position) || on_edge(o, d.position)));
        }
    }

    #[test]
    fn layers_partition_every_scene(seed in any::<u64>(), n in 1usize..60) {
        let cfg = SceneConfig { device_count: n, ..SceneConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = Scene::generate(&cfg, &mut rng).unwrap();
        let radio = RadioContext::from_config(&Default::default()).unwrap();
        for _ in 0..3 {
            let snap = scene.classify(&radio.params, radio.gamma0_dbm).unwrap();
            let mut all: Vec<usize> = snap.layer1.iter().chain(&snap.layer2).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            scene.step(1.0, &mut rng);
        }
    }
}

fn on_edge(o: &Rect, p: Point) -> bool {
    let eps = 1e-9;
    (p.x - o.min.x).abs() < eps
        || (p.x - o.max.x).abs() < eps
        || (p.y - o.min.y).abs() < eps
        || (p.y - o.max.y).abs() < eps
}

/// Re-derive every role and pairwise visibility of a 40-device scene by
/// brute force.
#[test]
fn classification_matches_brute_force() {
    let radio = RadioContext::from_config(&Default::default()).unwrap();
    let params = LinkBudgetParams::default();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = Scene::generate(&SceneConfig::default(), &mut rng).unwrap();
        let snap = classify_layers(&scene.room, &scene.devices, &params, radio.gamma0_dbm).unwrap();
        let ap = scene.room.ap_position;
        for (i, d) in scene.devices.iter().enumerate() {
            let others: Vec<Device> = scene.devices.iter().filter(|o| o.id != d.id).cloned().collect();
            let clear = scene
                .room
                .static_obstacles
                .iter()
                .all(|o| !o.intersects_segment(ap, d.position))
                && others
                    .iter()
                    .all(|o| point_segment_distance(o.position, ap, d.position) >= o.body_radius);
            let strong = params.received_power_dbm(d.position.distance(ap)).unwrap() >= radio.gamma0_dbm;
            assert_eq!(snap.is_layer1(i), clear && strong, "seed {seed} device {i}");
            for (j, e) in scene.devices.iter().enumerate().skip(i + 1) {
                let visible = scene
                    .room
                    .static_obstacles
                    .iter()
                    .all(|o| !o.intersects_segment(d.position, e.position))
                    && scene
                        .devices
                        .iter()
                        .filter(|o| o.id != d.id && o.id != e.id)
                        .all(|o| point_segment_distance(o.position, d.position, e.position) >= o.body_radius);
                assert_eq!(snap.has_los(i, j), visible, "seed {seed} pair {i},{j}");
            }
        }
    }
}

#[test]
fn neighbour_counts_match_a_direct_scan() {
    let radio = RadioContext::from_config(&Default::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SceneConfig {
        device_count: 80,
        ..SceneConfig::default()
    };
    let mut scene = Scene::generate(&cfg, &mut rng).unwrap();
    let snap = scene.classify(&radio.params, radio.gamma0_dbm).unwrap();
    for i in 0..80 {
        let direct = (0..80)
            .filter(|&k| k != i && snap.is_layer1(k))
            .filter(|&k| scene.devices[i].position.distance(scene.devices[k].position) <= 3.0)
            .count();
        assert_eq!(neighbors_within(i, &snap, 3.0).unwrap(), direct);
    }
    assert!(neighbors_within(80, &snap, 3.0).is_err());
}

#[test]
fn same_seed_same_trajectory() {
    let radio = RadioContext::from_config(&Default::default()).unwrap();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut scene = Scene::generate(&SceneConfig::default(), &mut rng).unwrap();
        (0..20)
            .map(|_| {
                let s = scene.classify(&radio.params, radio.gamma0_dbm).unwrap();
                scene.step(1.0, &mut rng);
                s
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
