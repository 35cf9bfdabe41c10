//! Room geometry, random waypoint mobility and the Layer 1 / Layer 2 split.
//!
//! The scene is a 2D top-down room with a single access point, static
//! axis-aligned obstacles, and devices carried by people. Each device body is
//! a disk that blocks every link except its own.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_budget::LinkBudgetParams;

pub const DEFAULT_BODY_RADIUS: f64 = 0.2;
pub const MAX_QUEUE_CAPACITY: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Liang-Barsky clip of segment `a`-`b` against the rectangle.
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a.x - self.min.x),
            (dx, self.max.x - a.x),
            (-dy, a.y - self.min.y),
            (dy, self.max.y - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub width: f64,
    pub height: f64,
    pub ap_position: Point,
    pub static_obstacles: Vec<Rect>,
}

impl Room {
    pub fn new(width: f64, height: f64, ap_position: Point, static_obstacles: Vec<Rect>) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Config(format!(
                "room must have positive size, got {width} x {height}"
            )));
        }
        let room = Self {
            width,
            height,
            ap_position,
            static_obstacles,
        };
        if !room.contains(ap_position) {
            return Err(Error::Config("access point lies outside the room".into()));
        }
        for (i, r) in room.static_obstacles.iter().enumerate() {
            if !(r.max.x > r.min.x && r.max.y > r.min.y) {
                return Err(Error::Config(format!("obstacle {i} is degenerate")));
            }
            if !(room.contains(r.min) && room.contains(r.max)) {
                return Err(Error::Config(format!("obstacle {i} extends outside the room")));
            }
            if r.contains(ap_position) {
                return Err(Error::Config(format!("obstacle {i} covers the access point")));
            }
        }
        Ok(room)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    fn in_obstacle(&self, p: Point) -> bool {
        self.static_obstacles.iter().any(|r| r.contains(p))
    }

    /// Uniform point in the room outside every obstacle.
    pub fn sample_free_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        loop {
            let p = Point::new(rng.random::<f64>() * self.width, rng.random::<f64>() * self.height);
            if !self.in_obstacle(p) {
                return p;
            }
        }
    }

    /// Uniform free point whose straight path from `from` clears every
    /// obstacle. Falls back to `from` if none is found in `MAX_WAYPOINT_DRAWS`.
    pub fn sample_waypoint<R: Rng + ?Sized>(&self, from: Point, rng: &mut R) -> Point {
        for _ in 0..MAX_WAYPOINT_DRAWS {
            let p = self.sample_free_point(rng);
            if !self.static_obstacles.iter().any(|r| r.intersects_segment(from, p)) {
                return p;
            }
        }
        from
    }
}

const MAX_WAYPOINT_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Layer 1: sees the access point and may relay.
    Agent,
    Layer2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: usize,
    pub position: Point,
    pub body_radius: f64,
    pub speed: f64,
    pub waypoint: Point,
    pub role: Role,
    pub queue_capacity: u32,
    pub queue_in_use: u32,
}

impl Device {
    pub fn new(id: usize, position: Point, speed: f64) -> Self {
        Self {
            id,
            position,
            body_radius: DEFAULT_BODY_RADIUS,
            speed,
            waypoint: position,
            role: Role::Layer2,
            queue_capacity: MAX_QUEUE_CAPACITY,
            queue_in_use: 0,
        }
    }

    pub fn remaining_queue(&self) -> u32 {
        self.queue_capacity - self.queue_in_use
    }
}

/// Mobility classes used by the density/mobility sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Static,
    Slow,
    Fast,
}

impl SpeedClass {
    pub const ALL: [SpeedClass; 3] = [SpeedClass::Static, SpeedClass::Slow, SpeedClass::Fast];

    pub fn speed(self) -> f64 {
        match self {
            SpeedClass::Static => 0.0,
            SpeedClass::Slow => 0.5,
            SpeedClass::Fast => 1.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpeedClass::Static => "static",
            SpeedClass::Slow => "slow",
            SpeedClass::Fast => "fast",
        }
    }
}

impl std::str::FromStr for SpeedClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "static" => Ok(SpeedClass::Static),
            "slow" => Ok(SpeedClass::Slow),
            "fast" => Ok(SpeedClass::Fast),
            other => Err(format!(
                "unknown mobility class {other:?} (expected static, slow or fast)"
            )),
        }
    }
}

/// True iff segment `a`-`b` crosses no obstacle and no device body other
/// than those listed in `exclude`.
pub fn line_of_sight(a: Point, b: Point, room: &Room, devices: &[Device], exclude: &[usize]) -> bool {
    if room.static_obstacles.iter().any(|r| r.intersects_segment(a, b)) {
        return false;
    }
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let (lo_x, hi_x) = (a.x.min(b.x), a.x.max(b.x));
    let (lo_y, hi_y) = (a.y.min(b.y), a.y.max(b.y));
    devices.iter().all(|d| {
        let (p, r) = (d.position, d.body_radius);
        if p.x + r < lo_x || p.x - r > hi_x || p.y + r < lo_y || p.y - r > hi_y || exclude.contains(&d.id) {
            return true;
        }
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
        };
        let (ex, ey) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
        ex * ex + ey * ey >= r * r
    })
}

/// Per-episode view of who sees the access point and who sees whom.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySnapshot {
    pub device_count: usize,
    /// Sorted ids of Layer 1 devices.
    pub layer1: Vec<usize>,
    /// Sorted ids of Layer 2 devices.
    pub layer2: Vec<usize>,
    pub roles: Vec<Role>,
    /// Row-major `n x n` device distances.
    pub distances: Vec<f64>,
    /// Row-major `n x n` device-to-device line of sight.
    pub los: Vec<bool>,
    pub ap_distance: Vec<f64>,
    pub ap_los: Vec<bool>,
    pub ap_received_power_dbm: Vec<f64>,
    pub queue_capacity: Vec<u32>,
}

impl TopologySnapshot {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.device_count + j]
    }

    pub fn has_los(&self, i: usize, j: usize) -> bool {
        self.los[i * self.device_count + j]
    }

    pub fn is_layer1(&self, id: usize) -> bool {
        self.roles[id] == Role::Agent
    }
}

/// Split devices into layers: Layer 1 needs line of sight to the access point
/// and at least `gamma0_dbm` of received power.
pub fn classify_layers(
    room: &Room,
    devices: &[Device],
    params: &LinkBudgetParams,
    gamma0_dbm: f64,
) -> Result<TopologySnapshot> {
    let n = devices.len();
    let ap = room.ap_position;
    let mut ap_distance = Vec::with_capacity(n);
    let mut ap_los = Vec::with_capacity(n);
    let mut ap_received_power_dbm = Vec::with_capacity(n);
    let mut roles = Vec::with_capacity(n);
    for dev in devices {
        let d = dev.position.distance(ap);
        let los = d > 0.0 && line_of_sight(ap, dev.position, room, devices, &[dev.id]);
        // A device sitting on the AP is treated as directly served.
        let power = if d > 0.0 {
            params.received_power_dbm(d)?
        } else {
            f64::INFINITY
        };
        let layer1 = (los || d == 0.0) && power >= gamma0_dbm;
        ap_distance.push(d);
        ap_los.push(los || d == 0.0);
        ap_received_power_dbm.push(power);
        roles.push(if layer1 { Role::Agent } else { Role::Layer2 });
    }

    let mut distances = vec![0.0; n * n];
    let mut los = vec![true; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (devices[i].position, devices[j].position);
            let d = a.distance(b);
            let visible = d > 0.0 && line_of_sight(a, b, room, devices, &[devices[i].id, devices[j].id]);
            distances[i * n + j] = d;
            distances[j * n + i] = d;
            los[i * n + j] = visible;
            los[j * n + i] = visible;
        }
    }

    let layer1 = (0..n).filter(|&i| roles[i] == Role::Agent).collect();
    let layer2 = (0..n).filter(|&i| roles[i] == Role::Layer2).collect();
    Ok(TopologySnapshot {
        device_count: n,
        layer1,
        layer2,
        roles,
        distances,
        los,
        ap_distance,
        ap_los,
        ap_received_power_dbm,
        queue_capacity: devices.iter().map(|d| d.queue_capacity).collect(),
    })
}

/// Advance one device by `dt` seconds of random waypoint motion.
///
/// A device that would reach or pass its waypoint stops on it and draws a new
/// one reachable in a straight line; leftover travel time is dropped.
pub fn random_waypoint_step<R: Rng + ?Sized>(device: &mut Device, room: &Room, dt: f64, rng: &mut R) {
    if device.speed <= 0.0 {
        return;
    }
    let step = device.speed * dt;
    let remaining = device.position.distance(device.waypoint);
    if step >= remaining {
        device.position = device.waypoint;
        device.waypoint = room.sample_waypoint(device.position, rng);
    } else {
        let s = step / remaining;
        device.position = Point::new(
            device.position.x + s * (device.waypoint.x - device.position.x),
            device.position.y + s * (device.waypoint.y - device.position.y),
        );
    }
}

/// Number of other Layer 1 devices within `radius` of `id`.
pub fn neighbors_within(id: usize, snapshot: &TopologySnapshot, radius: f64) -> Result<usize> {
    if id >= snapshot.device_count {
        return Err(Error::UnknownDevice(id));
    }
    Ok(snapshot
        .layer1
        .iter()
        .filter(|&&k| k != id && snapshot.distance(id, k) <= radius)
        .count())
}

/// Scene description as it appears in the `scene` config block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub ap_position: Point,
    pub obstacles: Vec<Rect>,
    pub device_count: usize,
    pub mobility: SpeedClass,
    pub body_radius_m: f64,
    pub queue_capacity: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width_m: 10.0,
            height_m: 10.0,
            ap_position: Point::new(5.0, 5.0),
            obstacles: vec![Rect::new(1.5, 6.5, 3.5, 7.5), Rect::new(6.5, 2.0, 8.0, 3.5)],
            device_count: 40,
            mobility: SpeedClass::Fast,
            body_radius_m: DEFAULT_BODY_RADIUS,
            queue_capacity: MAX_QUEUE_CAPACITY,
        }
    }
}

impl SceneConfig {
    pub fn room(&self) -> Result<Room> {
        Room::new(self.width_m, self.height_m, self.ap_position, self.obstacles.clone())
    }
}

/// Room plus the devices moving in it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub room: Room,
    pub devices: Vec<Device>,
}

impl Scene {
    pub fn generate<R: Rng + ?Sized>(config: &SceneConfig, rng: &mut R) -> Result<Self> {
        let room = config.room()?;
        let speed = config.mobility.speed();
        let devices = (0..config.device_count)
            .map(|id| {
                let mut d = Device::new(id, room.sample_free_point(rng), speed);
                d.waypoint = room.sample_waypoint(d.position, rng);
                d.body_radius = config.body_radius_m;
                d.queue_capacity = config.queue_capacity;
                d
            })
            .collect();
        Ok(Self { room, devices })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        for d in &mut self.devices {
            random_waypoint_step(d, &self.room, dt, rng);
        }
    }

    pub fn classify(&mut self, params: &LinkBudgetParams, gamma0_dbm: f64) -> Result<TopologySnapshot> {
        let snap = classify_layers(&self.room, &self.devices, params, gamma0_dbm)?;
        for d in &mut self.devices {
            d.role = snap.roles[d.id];
            d.queue_in_use = 0;
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_room() -> Room {
        Room::new(10.0, 10.0, Point::new(5.0, 5.0), vec![]).unwrap()
    }

    fn blocker(id: usize, x: f64, y: f64) -> Device {
        Device::new(id, Point::new(x, y), 0.0)
    }

    #[test]
    fn clear_line_of_sight_in_empty_room() {
        let room = empty_room();
        assert!(line_of_sight(
            Point::new(5.0, 5.0),
            Point::new(8.0, 5.0),
            &room,
            &[],
            &[]
        ));
    }

    #[test]
    fn body_on_the_segment_blocks() {
        let room = empty_room();
        let devs = [blocker(0, 5.0, 6.5)];
        assert!(!line_of_sight(
            Point::new(5.0, 5.0),
            Point::new(5.0, 8.0),
            &room,
            &devs,
            &[]
        ));
    }

    #[test]
    fn body_off_the_segment_does_not_block() {
        let room = empty_room();
        let devs = [blocker(0, 6.0, 6.5)];
        assert_eq!(
            point_segment_distance(Point::new(6.0, 6.5), Point::new(5.0, 5.0), Point::new(5.0, 8.0)),
            1.0
        );
        assert!(line_of_sight(
            Point::new(5.0, 5.0),
            Point::new(5.0, 8.0),
            &room,
            &devs,
            &[]
        ));
    }

    #[test]
    fn excluded_bodies_do_not_block() {
        let room = empty_room();
        let devs = [blocker(3, 5.0, 6.5)];
        assert!(line_of_sight(
            Point::new(5.0, 5.0),
            Point::new(5.0, 8.0),
            &room,
            &devs,
            &[3]
        ));
    }

    #[test]
    fn wall_blocks_regardless_of_distance() {
        let room = Room::new(10.0, 10.0, Point::new(5.0, 5.0), vec![Rect::new(5.5, 4.0, 6.0, 6.0)]).unwrap();
        let devs = vec![blocker(0, 6.5, 5.0)];
        let snap = classify_layers(&room, &devs, &LinkBudgetParams::default(), -1000.0).unwrap();
        assert_eq!(snap.layer1, Vec::<usize>::new());
        assert_eq!(snap.layer2, vec![0]);
    }

    #[test]
    fn devices_near_the_ap_are_all_layer1() {
        let room = empty_room();
        let devs: Vec<Device> = (0..6)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 6.0;
                blocker(i, 5.0 + 0.8 * a.cos(), 5.0 + 0.8 * a.sin())
            })
            .collect();
        let params = LinkBudgetParams::default();
        let gamma0 = params.received_power_dbm(3.0).unwrap();
        let snap = classify_layers(&room, &devs, &params, gamma0).unwrap();
        assert!(snap.layer2.is_empty());
        assert_eq!(snap.layer1.len(), 6);
    }

    #[test]
    fn waypoint_step_follows_unit_vector() {
        let room = empty_room();
        let mut d = Device::new(0, Point::new(0.0, 0.0), 1.0);
        d.waypoint = Point::new(3.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        random_waypoint_step(&mut d, &room, 1.0, &mut rng);
        assert!((d.position.x - 0.6).abs() < 1e-12 && (d.position.y - 0.8).abs() < 1e-12);
        assert_eq!(d.waypoint, Point::new(3.0, 4.0));
    }

    #[test]
    fn static_device_never_moves() {
        let room = empty_room();
        let mut d = Device::new(0, Point::new(2.0, 2.0), 0.0);
        d.waypoint = Point::new(7.0, 7.0);
        let before = d.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            random_waypoint_step(&mut d, &room, 1.0, &mut rng);
        }
        assert_eq!(d, before);
    }

    #[test]
    fn overshoot_lands_on_waypoint_and_redraws() {
        let room = empty_room();
        let mut d = Device::new(0, Point::new(2.0, 2.0), 1.0);
        d.waypoint = Point::new(2.3, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        random_waypoint_step(&mut d, &room, 1.0, &mut rng);
        assert_eq!(d.position, Point::new(2.3, 2.0));
        let mut replay = ChaCha8Rng::seed_from_u64(42);
        let expected = Point::new(replay.random::<f64>() * 10.0, replay.random::<f64>() * 10.0);
        assert_eq!(d.waypoint, expected);
    }

    #[test]
    fn neighbor_threshold_count() {
        let room = empty_room();
        let devs = vec![
            blocker(0, 5.0, 5.0),
            blocker(1, 6.0, 5.0),
            blocker(2, 5.0, 7.5),
            blocker(3, 1.0, 5.0),
        ];
        let mut snap = classify_layers(&room, &devs, &LinkBudgetParams::default(), -1000.0).unwrap();
        // Force every device into Layer 1 so only distance matters.
        snap.layer1 = vec![0, 1, 2, 3];
        snap.roles = vec![Role::Agent; 4];
        assert_eq!(neighbors_within(0, &snap, 3.0).unwrap(), 2);
        assert!(matches!(neighbors_within(9, &snap, 3.0), Err(Error::UnknownDevice(9))));
    }

    #[test]
    fn sole_agent_has_no_neighbors() {
        let room = empty_room();
        let devs = vec![blocker(0, 5.5, 5.0)];
        let snap = classify_layers(&room, &devs, &LinkBudgetParams::default(), -1000.0).unwrap();
        assert_eq!(neighbors_within(0, &snap, 3.0).unwrap(), 0);
    }

    #[test]
    fn room_rejects_bad_geometry() {
        assert!(Room::new(0.0, 10.0, Point::new(0.0, 0.0), vec![]).is_err());
        assert!(Room::new(10.0, 10.0, Point::new(11.0, 5.0), vec![]).is_err());
        assert!(Room::new(10.0, 10.0, Point::new(5.0, 5.0), vec![Rect::new(1.0, 1.0, 1.0, 2.0)]).is_err());
        assert!(Room::new(10.0, 10.0, Point::new(5.0, 5.0), vec![Rect::new(4.0, 4.0, 6.0, 6.0)]).is_err());
    }

    #[test]
    fn rect_segment_cases() {
        let r = Rect::new(1.0, 1.0, 2.0, 2.0);
        assert!(r.intersects_segment(Point::new(0.0, 1.5), Point::new(3.0, 1.5)));
        assert!(!r.intersects_segment(Point::new(0.0, 2.5), Point::new(3.0, 2.5)));
        assert!(!r.intersects_segment(Point::new(0.0, 0.0), Point::new(0.9, 0.9)));
        assert!(r.intersects_segment(Point::new(0.0, 0.0), Point::new(3.0, 3.0)));
        assert!(r.intersects_segment(Point::new(1.5, 1.5), Point::new(1.6, 1.6)));
    }
}
