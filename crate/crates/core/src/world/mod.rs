//! Quasi-static room simulation: furniture, movable boxes, spring contacts and
//! rule-based grasping.
//!
//! Objects never move on their own. A box is either resting on a support, carried
//! rigidly by the frame at the midpoint of the two hands, or fallen. Contacts are
//! linear springs evaluated at the two end-effector points.

mod scenario;

pub use scenario::{BoxSpec, FurnitureSpec, ScenarioSpec};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impedance::{spring_contact_force, ContactSource, ExternalForce, Surface};
use crate::kinematics::Side;
use crate::pose::{yaw_rotation, Pose3, RootPose};

/// Tolerances of the grasp, release and carry rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspRules {
    /// Each hand must be this close to its face centre to attach, meters.
    pub tolerance: f64,
    /// Allowed deviation of the hand separation from the grip width while carrying.
    pub slack: f64,
    /// How long the separation may stay out of the slack band before the object drops, seconds.
    pub slack_time: f64,
    /// Largest gap between the object bottom and a support for a clean placement, meters.
    pub place_height: f64,
}

impl Default for GraspRules {
    fn default() -> Self {
        Self { tolerance: 0.06, slack: 0.08, slack_time: 0.2, place_height: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FurnitureKind {
    Table,
    Sofa,
    Bed,
}

impl FurnitureKind {
    pub const ALL: [FurnitureKind; 3] = [FurnitureKind::Table, FurnitureKind::Sofa, FurnitureKind::Bed];

    pub fn id(self) -> &'static str {
        match self {
            FurnitureKind::Table => "table",
            FurnitureKind::Sofa => "sofa",
            FurnitureKind::Bed => "bed",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }
}

/// A rectangular piece of furniture whose top is a support surface. `facing` is
/// the yaw of the outward normal of its front edge, a multiple of π/2, so the
/// footprint stays axis-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub kind: FurnitureKind,
    pub center: [f64; 2],
    /// Extent along the front edge, meters.
    pub length: f64,
    /// Extent perpendicular to the front edge, meters.
    pub depth: f64,
    pub height: f64,
    pub facing: f64,
}

impl Furniture {
    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Outward normal of the front edge.
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.facing.cos().round(), self.facing.sin().round())
    }

    /// The furniture's own left: the front normal turned a quarter turn counter-clockwise.
    pub fn left_axis(&self) -> Vector2<f64> {
        let n = self.normal();
        Vector2::new(-n.y, n.x)
    }

    pub fn half_extents(&self) -> Vector2<f64> {
        let n = self.normal();
        if n.x.abs() > 0.5 {
            Vector2::new(self.depth / 2.0, self.length / 2.0)
        } else {
            Vector2::new(self.length / 2.0, self.depth / 2.0)
        }
    }

    pub fn min(&self) -> Vector2<f64> {
        Vector2::from(self.center) - self.half_extents()
    }

    pub fn max(&self) -> Vector2<f64> {
        Vector2::from(self.center) + self.half_extents()
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [Vector2<f64>; 4] {
        let (lo, hi) = (self.min(), self.max());
        [lo, Vector2::new(hi.x, lo.y), hi, Vector2::new(lo.x, hi.y)]
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    /// Distance from a point to the footprint (zero inside).
    pub fn distance_to(&self, p: &Vector2<f64>) -> f64 {
        let (lo, hi) = (self.min(), self.max());
        let dx = (lo.x - p.x).max(p.x - hi.x).max(0.0);
        let dy = (lo.y - p.y).max(p.y - hi.y).max(0.0);
        dx.hypot(dy)
    }

    pub fn gap_to(&self, other: &Furniture) -> f64 {
        let dx = (other.min().x - self.max().x).max(self.min().x - other.max().x).max(0.0);
        let dy = (other.min().y - self.max().y).max(self.min().y - other.max().y).max(0.0);
        dx.hypot(dy)
    }

    pub fn front_center(&self) -> Vector2<f64> {
        Vector2::from(self.center) + self.normal() * (self.depth / 2.0)
    }

    /// Point on the top surface `lateral` meters along the left axis from the
    /// front-edge centre and `depth` meters in from the front edge.
    pub fn surface_point(&self, lateral: f64, depth: f64) -> Vector2<f64> {
        self.front_center() + self.left_axis() * lateral - self.normal() * depth
    }

    /// Inverse of [`Furniture::surface_point`]: `(lateral, depth)` of a planar point.
    pub fn local_coords(&self, p: &Vector2<f64>) -> (f64, f64) {
        let d = p - self.front_center();
        (d.dot(&self.left_axis()), -d.dot(&self.normal()))
    }

    /// Root pose `standoff` meters in front of the front edge, `lateral` along
    /// the left axis, facing the furniture.
    pub fn approach_pose(&self, standoff: f64, lateral: f64, z: f64) -> RootPose {
        let p = self.surface_point(lateral, -standoff);
        RootPose::new(p.x, p.y, z, self.facing + std::f64::consts::PI).wrapped()
    }

    pub fn solid(&self) -> Surface {
        let (lo, hi) = (self.min(), self.max());
        Surface::Aabb { min: Vector3::new(lo.x, lo.y, 0.0), max: Vector3::new(hi.x, hi.y, self.height) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Support {
    Floor,
    Furniture(String),
}

impl Support {
    pub fn id(&self) -> &str {
        match self {
            Support::Floor => "floor",
            Support::Furniture(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BoxStatus {
    Resting { on: Support },
    Carried,
    Fallen { on: Support },
}

/// A cube that can be squeezed between the two hands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovableBox {
    pub id: String,
    pub color: String,
    /// Edge length, meters.
    pub size: f64,
    pub position: Vector3<f64>,
    pub yaw: f64,
    #[serde(flatten)]
    pub status: BoxStatus,
}

impl MovableBox {
    pub fn is_resting_on(&self, support: &str) -> bool {
        matches!(&self.status, BoxStatus::Resting { on } if on.id() == support)
    }

    pub fn planar(&self) -> Vector2<f64> {
        self.position.xy()
    }

    pub fn bottom(&self) -> f64 {
        self.position.z - self.size / 2.0
    }

    /// Outward face normals `±x, ±y` of the box, world frame.
    fn side_normals(&self) -> [Vector3<f64>; 4] {
        let r = yaw_rotation(self.yaw);
        [Vector3::x(), -Vector3::x(), Vector3::y(), -Vector3::y()].map(|n| r * n)
    }

    /// Centre of the side face whose outward normal best matches `direction`.
    pub fn face_center(&self, direction: &Vector3<f64>) -> Vector3<f64> {
        let n = self
            .side_normals()
            .into_iter()
            .max_by(|a, b| a.dot(direction).total_cmp(&b.dot(direction)))
            .unwrap_or_else(Vector3::x);
        self.position + n * (self.size / 2.0)
    }

    /// Penetration of a point into the box, with the world-frame exit normal.
    fn penetration(&self, p: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let r = yaw_rotation(self.yaw);
        let local = r.inverse() * (p - self.position);
        let h = Vector3::repeat(self.size / 2.0);
        let (depth, n) = Surface::Aabb { min: -h, max: h }.penetration(&local)?;
        Some((depth, r * n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carry {
    pub index: usize,
    /// Box pose in the hand-midpoint frame.
    pub offset: Pose3,
    /// Hand separation the object is squeezed at.
    pub grip: f64,
    /// Consecutive ticks with the separation outside the slack band.
    pub slack_ticks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    Grasped { tick: u64, object: String },
    Placed { tick: u64, object: String, on: String },
    Dropped { tick: u64, object: String, on: String },
}

impl WorldEvent {
    pub fn tick(&self) -> u64 {
        match self {
            WorldEvent::Grasped { tick, .. } | WorldEvent::Placed { tick, .. } | WorldEvent::Dropped { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("no object `{0}`")]
    UnknownObject(String),
    #[error("object `{0}` is not resting")]
    NotResting(String),
    #[error("already carrying an object")]
    HandsFull,
    #[error("grasp failed: left hand {distance_left:.3} m, right hand {distance_right:.3} m from the faces")]
    GraspFailed { distance_left: f64, distance_right: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ReleaseError {
    #[error("object `{0}` is not carried")]
    NotCarried(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlaceResult {
    Placed { on: String },
    Dropped { on: String },
}

/// Frame at the midpoint of the hands, yawed with the pelvis.
pub fn hand_midpoint_frame(ee: &(Pose3, Pose3), root: &RootPose) -> Pose3 {
    Pose3::new((ee.0.position + ee.1.position) / 2.0, yaw_rotation(root.yaw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Half the side length of the square room centred on the origin.
    pub half_size: f64,
    pub furniture: Vec<Furniture>,
    pub boxes: Vec<MovableBox>,
    pub carried: Option<Carry>,
    pub tick: u64,
    pub events: Vec<WorldEvent>,
}

impl Scene {
    pub fn empty(room_size: f64) -> Self {
        Self { half_size: room_size / 2.0, furniture: Vec::new(), boxes: Vec::new(), carried: None, tick: 0, events: Vec::new() }
    }

    pub fn furniture(&self, id: &str) -> Option<&Furniture> {
        self.furniture.iter().find(|f| f.id() == id)
    }

    pub fn box_index(&self, id: &str) -> Option<usize> {
        self.boxes.iter().position(|b| b.id == id)
    }

    pub fn object(&self, id: &str) -> Option<&MovableBox> {
        self.boxes.iter().find(|b| b.id == id)
    }

    pub fn carried_box(&self) -> Option<&MovableBox> {
        self.carried.as_ref().map(|c| &self.boxes[c.index])
    }

    /// Everything an end-effector can press into, tagged with an id.
    pub fn surfaces(&self) -> Vec<(String, Surface)> {
        let h = self.half_size;
        let wall = |id: &str, point: Vector3<f64>, normal: Vector3<f64>| (id.to_string(), Surface::HalfSpace { point, normal });
        let mut out = vec![
            wall("floor", Vector3::zeros(), Vector3::z()),
            wall("wall_east", Vector3::new(h, 0.0, 0.0), -Vector3::x()),
            wall("wall_west", Vector3::new(-h, 0.0, 0.0), Vector3::x()),
            wall("wall_north", Vector3::new(0.0, h, 0.0), -Vector3::y()),
            wall("wall_south", Vector3::new(0.0, -h, 0.0), Vector3::y()),
        ];
        out.extend(self.furniture.iter().map(|f| (f.id().to_string(), f.solid())));
        out
    }

    /// Spring force on one end-effector point, summed over every contact.
    pub fn contact_force(&self, p: &Vector3<f64>, k_s: f64) -> ExternalForce {
        let mut total = ExternalForce::zero();
        for (id, s) in self.surfaces() {
            let mut f = spring_contact_force(p, &s, k_s);
            if !f.is_zero() {
                f.source = ContactSource::Surface(id);
                total.accumulate(f);
            }
        }
        for b in &self.boxes {
            if let Some((depth, n)) = b.penetration(p) {
                total.accumulate(ExternalForce { force: n * (k_s * depth), source: ContactSource::Surface(b.id.clone()) });
            }
        }
        total
    }

    pub fn contact_forces(&self, ee: &(Pose3, Pose3), k_s: f64) -> [ExternalForce; 2] {
        [self.contact_force(&ee.0.position, k_s), self.contact_force(&ee.1.position, k_s)]
    }

    /// Advances one control period: carried boxes follow the hands, the carry
    /// rule may drop them, and the contact forces for the next controller step
    /// are returned.
    pub fn step(
        &mut self,
        ee: &(Pose3, Pose3),
        root: &RootPose,
        expected_grip: impl Fn(f64) -> f64,
        rules: &GraspRules,
        k_s: f64,
        dt: f64,
    ) -> [ExternalForce; 2] {
        self.tick += 1;
        if let Some(carry) = self.carried.as_mut() {
            let frame = hand_midpoint_frame(ee, root);
            let pose = frame.compose(&carry.offset);
            let b = &mut self.boxes[carry.index];
            b.position = pose.position;
            b.yaw = pose.orientation.euler_angles().2;
            let separation = (ee.0.position - ee.1.position).norm();
            let width = b.size;
            if (separation - expected_grip(width)).abs() > rules.slack {
                carry.slack_ticks += 1;
            } else {
                carry.slack_ticks = 0;
            }
            if carry.slack_ticks as f64 * dt > rules.slack_time + 1e-9 {
                let index = carry.index;
                self.carried = None;
                self.drop_box(index);
            }
        }
        self.contact_forces(ee, k_s)
    }

    /// Attaches `object` when each hand is within tolerance of the face on its side.
    pub fn try_grasp(&mut self, ee: &(Pose3, Pose3), root: &RootPose, object: &str, rules: &GraspRules) -> Result<(), GraspError> {
        let index = self.box_index(object).ok_or_else(|| GraspError::UnknownObject(object.to_string()))?;
        if self.carried.is_some() {
            return Err(GraspError::HandsFull);
        }
        let b = &self.boxes[index];
        if !matches!(b.status, BoxStatus::Resting { .. }) {
            return Err(GraspError::NotResting(object.to_string()));
        }
        let left_dir = yaw_rotation(root.yaw) * Vector3::y();
        let distance_left = (ee.0.position - b.face_center(&left_dir)).norm();
        let distance_right = (ee.1.position - b.face_center(&-left_dir)).norm();
        if distance_left > rules.tolerance || distance_right > rules.tolerance {
            return Err(GraspError::GraspFailed { distance_left, distance_right });
        }
        let frame = hand_midpoint_frame(ee, root);
        let offset = frame.inverse().compose(&Pose3::new(b.position, yaw_rotation(b.yaw)));
        let grip = (ee.0.position - ee.1.position).norm();
        self.boxes[index].status = BoxStatus::Carried;
        self.carried = Some(Carry { index, offset, grip, slack_ticks: 0 });
        self.events.push(WorldEvent::Grasped { tick: self.tick, object: object.to_string() });
        Ok(())
    }

    /// Highest support under a planar point and its top height.
    fn support_below(&self, p: &Vector2<f64>) -> (Support, f64) {
        self.furniture
            .iter()
            .filter(|f| f.contains(p))
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .map(|f| (Support::Furniture(f.id().to_string()), f.height))
            .unwrap_or((Support::Floor, 0.0))
    }

    fn drop_box(&mut self, index: usize) {
        let p = self.boxes[index].planar();
        let (on, top) = self.support_below(&p);
        let b = &mut self.boxes[index];
        b.position.z = top + b.size / 2.0;
        self.events.push(WorldEvent::Dropped { tick: self.tick, object: b.id.clone(), on: on.id().to_string() });
        b.status = BoxStatus::Fallen { on };
    }

    /// Lets go of the carried object. It is placed when its bottom is at most
    /// `place_height` above the support under its bottom centre, and dropped otherwise.
    pub fn try_release(&mut self, object: &str, rules: &GraspRules) -> Result<PlaceResult, ReleaseError> {
        let index = match &self.carried {
            Some(c) if self.boxes[c.index].id == object => c.index,
            _ => return Err(ReleaseError::NotCarried(object.to_string())),
        };
        self.carried = None;
        let p = self.boxes[index].planar();
        let (on, top) = self.support_below(&p);
        let gap = self.boxes[index].bottom() - top;
        if (-0.02..=rules.place_height).contains(&gap) {
            let b = &mut self.boxes[index];
            b.position.z = top + b.size / 2.0;
            b.status = BoxStatus::Resting { on: on.clone() };
            self.events.push(WorldEvent::Placed { tick: self.tick, object: object.to_string(), on: on.id().to_string() });
            Ok(PlaceResult::Placed { on: on.id().to_string() })
        } else {
            self.drop_box(index);
            Ok(PlaceResult::Dropped { on: on.id().to_string() })
        }
    }
}

/// Side of the robot a hand contact belongs to, as used by the grasp rule.
pub fn hand_face(b: &MovableBox, root: &RootPose, side: Side) -> Vector3<f64> {
    let left = yaw_rotation(root.yaw) * Vector3::y();
    b.face_center(&(left * side.sign()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    pub(crate) fn table_scene() -> Scene {
        let mut s = Scene::empty(6.0);
        s.furniture.push(Furniture {
            kind: FurnitureKind::Table,
            center: [0.0, 2.0],
            length: 1.2,
            depth: 0.5,
            height: 0.6,
            facing: -std::f64::consts::FRAC_PI_2,
        });
        s.boxes.push(MovableBox {
            id: "red_box".into(),
            color: "red".into(),
            size: 0.2,
            position: Vector3::new(0.0, 1.9, 0.7),
            yaw: 0.0,
            status: BoxStatus::Resting { on: Support::Furniture("table".into()) },
        });
        s
    }

    fn at(p: Vector3<f64>) -> Pose3 {
        Pose3::new(p, UnitQuaternion::identity())
    }

    fn facing_table() -> RootPose {
        RootPose::new(0.0, 1.6, 0.5, std::f64::consts::FRAC_PI_2)
    }

    #[test]
    fn geometry() {
        let s = table_scene();
        let t = s.furniture("table").unwrap();
        assert!((t.normal() - Vector2::new(0.0, -1.0)).norm() < 1e-12);
        assert!((t.front_center() - Vector2::new(0.0, 1.75)).norm() < 1e-12);
        assert!((t.min() - Vector2::new(-0.6, 1.75)).norm() < 1e-12);
        let p = t.surface_point(0.3, 0.2);
        let (l, d) = t.local_coords(&p);
        assert!((l - 0.3).abs() < 1e-12 && (d - 0.2).abs() < 1e-12);
        let a = t.approach_pose(0.5, 0.0, 0.7);
        assert!((a.y - 1.25).abs() < 1e-12 && (a.yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn no_contact_no_force() {
        let s = table_scene();
        let f = s.contact_forces(&(at(Vector3::new(0.3, 0.0, 1.0)), at(Vector3::new(-0.3, 0.0, 1.0))), 500.0);
        assert!(f[0].is_zero() && f[1].is_zero());
    }

    #[test]
    fn table_side_contact() {
        let s = table_scene();
        let f = s.contact_force(&Vector3::new(-0.3, 1.754, 0.3), 500.0);
        assert!((f.force - Vector3::new(0.0, -2.0, 0.0)).norm() < 1e-9);
        assert_eq!(f.source, ContactSource::Surface("table".into()));
    }

    #[test]
    fn grasp_grid() {
        let rules = GraspRules::default();
        let root = facing_table();
        let offsets: Vec<f64> = (0..10).map(|i| i as f64 * 0.0125).collect();
        for &ol in &offsets {
            for &or in &offsets {
                let mut s = table_scene();
                let b = s.boxes[0].clone();
                let left = hand_face(&b, &root, Side::Left) + Vector3::new(ol, 0.0, 0.0);
                let right = hand_face(&b, &root, Side::Right) + Vector3::new(0.0, 0.0, or);
                let res = s.try_grasp(&(at(left), at(right)), &root, "red_box", &rules);
                assert_eq!(res.is_ok(), ol <= 0.06 && or <= 0.06, "{ol} {or}");
            }
        }
    }

    #[test]
    fn grasp_fails_far_away() {
        let mut s = table_scene();
        let root = facing_table();
        let b = s.boxes[0].clone();
        let left = hand_face(&b, &root, Side::Left) + Vector3::new(0.0, 0.0, 0.10);
        let right = hand_face(&b, &root, Side::Right);
        let err = s.try_grasp(&(at(left), at(right)), &root, "red_box", &GraspRules::default()).unwrap_err();
        assert!(matches!(err, GraspError::GraspFailed { distance_left, .. } if (distance_left - 0.1).abs() < 1e-12));
    }

    fn grasped() -> (Scene, (Pose3, Pose3), RootPose) {
        let mut s = table_scene();
        let root = facing_table();
        let b = s.boxes[0].clone();
        let ee = (at(hand_face(&b, &root, Side::Left)), at(hand_face(&b, &root, Side::Right)));
        s.try_grasp(&ee, &root, "red_box", &GraspRules::default()).unwrap();
        (s, ee, root)
    }

    #[test]
    fn carried_box_follows_hands() {
        let (mut s, mut ee, root) = grasped();
        let z0 = s.boxes[0].position.z;
        let rules = GraspRules::default();
        for _ in 0..50 {
            ee.0.position.z += 0.002;
            ee.1.position.z += 0.002;
            s.step(&ee, &root, |w| w, &rules, 500.0, 0.02);
        }
        assert!((s.boxes[0].position.z - z0 - 0.1).abs() < 1e-12);
        assert_eq!(s.boxes[0].status, BoxStatus::Carried);
    }

    #[test]
    fn spreading_hands_drops_box() {
        let (mut s, mut ee, root) = grasped();
        let rules = GraspRules::default();
        ee.0.position.x -= 0.1;
        ee.1.position.x += 0.1;
        let mut dropped_at = None;
        for k in 1..=30 {
            s.step(&ee, &root, |w| w, &rules, 500.0, 0.02);
            if s.carried.is_none() && dropped_at.is_none() {
                dropped_at = Some(k);
            }
        }
        // 0.2 s is ten ticks; the rule fires on the first tick past it
        assert_eq!(dropped_at, Some(11));
        assert!(matches!(s.boxes[0].status, BoxStatus::Fallen { .. }));
    }

    #[test]
    fn release_rules() {
        let rules = GraspRules::default();
        let (mut s, _, _) = grasped();
        s.boxes[0].position = Vector3::new(0.0, 2.0, 0.6 + 0.05 + 0.1);
        assert_eq!(s.try_release("red_box", &rules), Ok(PlaceResult::Placed { on: "table".into() }));
        assert!((s.boxes[0].bottom() - 0.6).abs() < 1e-12);
        assert_eq!(s.try_release("red_box", &rules), Err(ReleaseError::NotCarried("red_box".into())));

        let (mut s, _, _) = grasped();
        s.boxes[0].position = Vector3::new(1.0, 0.0, 0.8);
        assert_eq!(s.try_release("red_box", &rules), Ok(PlaceResult::Dropped { on: "floor".into() }));
        assert!((s.boxes[0].bottom()).abs() < 1e-12);
    }

    /// Ray-casting point-in-polygon.
    fn inside(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
        let mut c = false;
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                c = !c;
            }
        }
        c
    }

    #[test]
    fn partial_overlap_release() {
        let rules = GraspRules::default();
        // box hanging over the table's right edge by various amounts
        for i in 0..21 {
            let x = 0.455 + 0.01 * i as f64;
            let (mut s, _, _) = grasped();
            s.boxes[0].position = Vector3::new(x, 2.0, 0.75);
            let t = s.furniture("table").unwrap().clone();
            let expect = inside(&t.footprint(), &Vector2::new(x, 2.0));
            let placed = matches!(s.try_release("red_box", &rules), Ok(PlaceResult::Placed { .. }));
            assert_eq!(placed, expect, "x = {x}");
        }
    }

    #[test]
    fn compliant_squeeze_is_stable() {
        use crate::impedance::{compliant_target, ImpedanceGains};
        let gains = ImpedanceGains::default();
        let k_s = 500.0;
        let (mut s, _, root) = grasped();
        let b = s.boxes[0].clone();
        // commanded 0.02 m narrower than the box; iterate the quasi-static loop
        let left = yaw_rotation(root.yaw) * Vector3::y();
        let cmd_l = hand_face(&b, &root, Side::Left) - left * 0.01;
        let cmd_r = hand_face(&b, &root, Side::Right) + left * 0.01;
        let (mut pl, mut pr) = (cmd_l, cmd_r);
        let rules = GraspRules::default();
        for _ in 0..200 {
            let ee = (at(pl), at(pr));
            let f = s.step(&ee, &root, |w| w - 0.02, &rules, k_s, 0.02);
            pl = pl + (compliant_target(&cmd_l, &f[0], &gains).position - pl) * 0.2;
            pr = pr + (compliant_target(&cmd_r, &f[1], &gains).position - pr) * 0.2;
        }
        let expected = 0.01 * 100.0 / (100.0 + k_s);
        let pen_l = (hand_face(&s.boxes[0], &root, Side::Left) - pl).dot(&left);
        assert!((pen_l - expected).abs() < 1e-4, "{pen_l}");
        assert!(s.carried.is_some());
    }
}
