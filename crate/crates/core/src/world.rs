//! Simulated shared 2D space: agent bodies, the human, labelled entities and
//! camera field-of-view visibility.
//!
//! Coordinates are meters, headings are degrees counter-clockwise from the
//! +x axis. Head pan is added to the body heading to obtain the camera
//! boresight; tilt is carried for completeness but ignored by visibility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::AgentId;

/// Id reported by [`WorldState::visible_entities`] for the human user.
pub const HUMAN_ID: &str = "human";

pub const MAX_LOCOMOTION_M: f64 = 2.0;
pub const PAN_LIMIT_DEG: f64 = 90.0;
pub const TILT_LIMIT_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("locomotion magnitude {0} m outside [0, {MAX_LOCOMOTION_M}]")]
    MagnitudeOutOfRange(f64),
    #[error("head angle out of range: pan {pan_deg}° (±90), tilt {tilt_deg}° (±30)")]
    AngleOutOfRange { pan_deg: f64, tilt_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading_deg: f64) -> Self {
        Self {
            x,
            y,
            heading_deg: normalize_heading(heading_deg),
        }
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub pan_deg: f64,
    pub tilt_deg: f64,
}

impl HeadPose {
    pub fn new(pan_deg: f64, tilt_deg: f64) -> Result<Self, WorldError> {
        let ok = (-PAN_LIMIT_DEG..=PAN_LIMIT_DEG).contains(&pan_deg)
            && (-TILT_LIMIT_DEG..=TILT_LIMIT_DEG).contains(&tilt_deg);
        if ok {
            Ok(Self { pan_deg, tilt_deg })
        } else {
            Err(WorldError::AngleOutOfRange { pan_deg, tilt_deg })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    pub position: Pose2D,
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 10.0,
            max_y: 10.0,
        }
    }
}

impl Bounds {
    pub fn contains(&self, p: &Pose2D) -> bool {
        (self.min_x..=self.max_x).contains(&p.x) && (self.min_y..=self.max_y).contains(&p.y)
    }

    fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.min_x, self.max_x), y.clamp(self.min_y, self.max_y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub half_angle_deg: f64,
    pub range_m: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        Self {
            half_angle_deg: 30.0,
            range_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Forward,
        Direction::Backward,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    /// Offset from the body heading at which the translation happens.
    fn offset_deg(self) -> f64 {
        match self {
            Direction::Forward => 0.0,
            Direction::Left => 90.0,
            Direction::Backward => 180.0,
            Direction::Right => -90.0,
        }
    }
}

/// Geometry plus the symbolic annotations set by posture, gesture and hand
/// primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub pose: Pose2D,
    #[serde(default)]
    pub head: HeadPose,
    #[serde(default = "default_posture")]
    pub posture: String,
    #[serde(default = "default_hand")]
    pub hand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_gesture: Option<String>,
}

fn default_posture() -> String {
    "stand".to_string()
}

fn default_hand() -> String {
    "open".to_string()
}

impl AgentBody {
    pub fn at(pose: Pose2D) -> Self {
        Self {
            pose,
            head: HeadPose::default(),
            posture: default_posture(),
            hand: default_hand(),
            last_gesture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub bounds: Bounds,
    pub fov: FieldOfView,
    pub agents: BTreeMap<AgentId, AgentBody>,
    pub human: Pose2D,
    pub entities: Vec<Entity>,
    pub clock_ms: u64,
}

impl WorldState {
    pub fn body(&self, agent: &AgentId) -> Result<&AgentBody, WorldError> {
        self.agents
            .get(agent)
            .ok_or_else(|| WorldError::UnknownAgent(agent.clone()))
    }

    pub fn body_mut(&mut self, agent: &AgentId) -> Result<&mut AgentBody, WorldError> {
        self.agents
            .get_mut(agent)
            .ok_or_else(|| WorldError::UnknownAgent(agent.clone()))
    }

    /// Translates `agent` by `magnitude` meters. Left and right strafe without
    /// changing heading. The result is clamped to the world bounds.
    pub fn apply_locomotion(
        &mut self,
        agent: &AgentId,
        direction: Direction,
        magnitude: f64,
    ) -> Result<(), WorldError> {
        if !(0.0..=MAX_LOCOMOTION_M).contains(&magnitude) {
            return Err(WorldError::MagnitudeOutOfRange(magnitude));
        }
        let bounds = self.bounds;
        let body = self.body_mut(agent)?;
        let angle = (body.pose.heading_deg + direction.offset_deg()).to_radians();
        let (x, y) = bounds.clamp(
            body.pose.x + magnitude * angle.cos(),
            body.pose.y + magnitude * angle.sin(),
        );
        body.pose.x = x;
        body.pose.y = y;
        Ok(())
    }

    /// Sets the head pose absolutely.
    pub fn apply_head_move(
        &mut self,
        agent: &AgentId,
        pan_deg: f64,
        tilt_deg: f64,
    ) -> Result<(), WorldError> {
        self.body(agent)?;
        let head = HeadPose::new(pan_deg, tilt_deg)?;
        self.body_mut(agent)?.head = head;
        Ok(())
    }

    /// Moves the clock forward; earlier times are ignored.
    pub fn advance_clock(&mut self, to_ms: u64) {
        self.clock_ms = self.clock_ms.max(to_ms);
    }

    /// Ids of entities (and [`HUMAN_ID`]) inside the agent's camera cone,
    /// nearest first with ties broken by id.
    pub fn visible_entities(&self, agent: &AgentId) -> Result<Vec<String>, WorldError> {
        Ok(self
            .visible_targets(agent)?
            .into_iter()
            .map(|t| t.id)
            .collect())
    }

    /// Like [`visible_entities`](Self::visible_entities) but with label,
    /// distance and bearing relative to the camera boresight.
    pub fn visible_targets(&self, agent: &AgentId) -> Result<Vec<VisibleTarget>, WorldError> {
        let body = self.body(agent)?;
        let boresight = body.pose.heading_deg + body.head.pan_deg;
        let candidates = self
            .entities
            .iter()
            .map(|e| (e.id.as_str(), e.label.as_str(), &e.position))
            .chain(std::iter::once((HUMAN_ID, "the human user", &self.human)));

        let mut seen: Vec<VisibleTarget> = candidates
            .filter_map(|(id, label, pos)| {
                let dx = pos.x - body.pose.x;
                let dy = pos.y - body.pose.y;
                let distance = dx.hypot(dy);
                if distance > self.fov.range_m {
                    return None;
                }
                let relative = if distance == 0.0 {
                    0.0
                } else {
                    signed_angle_deg(dy.atan2(dx).to_degrees() - boresight)
                };
                (relative.abs() <= self.fov.half_angle_deg).then(|| VisibleTarget {
                    id: id.to_string(),
                    label: label.to_string(),
                    distance_m: distance,
                    bearing_deg: relative,
                })
            })
            .collect();
        seen.sort_by(|a, b| {
            a.distance_m
                .total_cmp(&b.distance_m)
                .then_with(|| a.id.cmp(&b.id))
        });
        Ok(seen)
    }

    pub fn distance_to_human(&self, agent: &AgentId) -> Result<f64, WorldError> {
        Ok(self.body(agent)?.pose.distance_to(&self.human))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibleTarget {
    pub id: String,
    pub label: String,
    pub distance_m: f64,
    /// Signed, relative to the camera boresight, in (-180, 180].
    pub bearing_deg: f64,
}

pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Wraps an angle into (-180, 180].
pub fn signed_angle_deg(deg: f64) -> f64 {
    let a = normalize_heading(deg);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> AgentId {
        AgentId::new(s).unwrap()
    }

    fn world_with(agent_pose: Pose2D, entities: Vec<Entity>) -> WorldState {
        let mut agents = BTreeMap::new();
        agents.insert(id("sam"), AgentBody::at(agent_pose));
        WorldState {
            bounds: Bounds::default(),
            fov: FieldOfView::default(),
            agents,
            human: Pose2D::new(9.5, 9.5, 0.0),
            entities,
            clock_ms: 0,
        }
    }

    fn bottle(id: &str, x: f64, y: f64) -> Entity {
        Entity {
            id: id.into(),
            label: "water bottle".into(),
            position: Pose2D::new(x, y, 0.0),
        }
    }

    #[test]
    fn forward_along_x_axis() {
        let mut w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![]);
        w.apply_locomotion(&id("sam"), Direction::Forward, 1.0).unwrap();
        let p = w.agents[&id("sam")].pose;
        assert_eq!((p.x, p.y), (1.0, 0.0));
    }

    #[test]
    fn forward_at_ninety_degrees() {
        let mut w = world_with(Pose2D::new(0.0, 0.0, 90.0), vec![]);
        w.apply_locomotion(&id("sam"), Direction::Forward, 1.0).unwrap();
        let p = w.agents[&id("sam")].pose;
        // x += m cos(90°), y += m sin(90°)
        assert!((p.x - 0.0).abs() < 1e-9);
        assert!((p.y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strafe_keeps_heading() {
        let mut w = world_with(Pose2D::new(5.0, 5.0, 0.0), vec![]);
        w.apply_locomotion(&id("sam"), Direction::Left, 1.0).unwrap();
        let p = w.agents[&id("sam")].pose;
        assert!((p.x - 5.0).abs() < 1e-9 && (p.y - 6.0).abs() < 1e-9);
        assert_eq!(p.heading_deg, 0.0);
        w.apply_locomotion(&id("sam"), Direction::Right, 2.0).unwrap();
        let p = w.agents[&id("sam")].pose;
        assert!((p.y - 4.0).abs() < 1e-9);
        w.apply_locomotion(&id("sam"), Direction::Backward, 1.5).unwrap();
        assert!((w.agents[&id("sam")].pose.x - 3.5).abs() < 1e-9);
    }

    #[test]
    fn locomotion_clamps_to_bounds() {
        let mut w = world_with(Pose2D::new(9.9, 0.0, 0.0), vec![]);
        w.apply_locomotion(&id("sam"), Direction::Forward, 1.0).unwrap();
        assert_eq!(w.agents[&id("sam")].pose.x, 10.0);
    }

    #[test]
    fn locomotion_errors() {
        let mut w = world_with(Pose2D::new(1.0, 1.0, 0.0), vec![]);
        assert_eq!(
            w.apply_locomotion(&id("sam"), Direction::Forward, 2.5),
            Err(WorldError::MagnitudeOutOfRange(2.5))
        );
        assert!(matches!(
            w.apply_locomotion(&id("nobody"), Direction::Forward, 1.0),
            Err(WorldError::UnknownAgent(_))
        ));
        assert!(w
            .apply_locomotion(&id("sam"), Direction::Forward, f64::NAN)
            .is_err());
        assert_eq!(w.agents[&id("sam")].pose, Pose2D::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn head_move_is_absolute_and_bounded() {
        let mut w = world_with(Pose2D::new(1.0, 1.0, 0.0), vec![]);
        w.apply_head_move(&id("sam"), 30.0, 10.0).unwrap();
        w.apply_head_move(&id("sam"), 30.0, 10.0).unwrap();
        assert_eq!(w.agents[&id("sam")].head, HeadPose { pan_deg: 30.0, tilt_deg: 10.0 });
        assert!(matches!(
            w.apply_head_move(&id("sam"), 120.0, 0.0),
            Err(WorldError::AngleOutOfRange { .. })
        ));
        assert!(w.apply_head_move(&id("sam"), 0.0, -31.0).is_err());
        assert_eq!(w.agents[&id("sam")].head.pan_deg, 30.0);
    }

    #[test]
    fn entity_on_boresight_is_visible() {
        let w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![bottle("b1", 2.0, 0.0)]);
        assert_eq!(w.visible_entities(&id("sam")).unwrap(), vec!["b1"]);
    }

    #[test]
    fn panning_away_hides_entity() {
        let mut w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![bottle("b1", 2.0, 0.0)]);
        w.apply_head_move(&id("sam"), 90.0, 0.0).unwrap();
        assert!(w.visible_entities(&id("sam")).unwrap().is_empty());
    }

    #[test]
    fn pan_sixty_brings_side_entity_into_view() {
        let side = bottle("b2", 1.0, 3.0_f64.sqrt()); // bearing 60°
        let mut w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![side]);
        assert!(w.visible_entities(&id("sam")).unwrap().is_empty());
        w.apply_head_move(&id("sam"), 60.0, 0.0).unwrap();
        assert_eq!(w.visible_entities(&id("sam")).unwrap(), vec!["b2"]);
    }

    #[test]
    fn beyond_range_is_invisible() {
        let w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![bottle("far", 6.0, 0.0)]);
        assert!(w.visible_entities(&id("sam")).unwrap().is_empty());
    }

    #[test]
    fn visible_sorted_by_distance_then_id() {
        let w = world_with(
            Pose2D::new(0.0, 5.0, 0.0),
            vec![bottle("c", 2.0, 5.0), bottle("b", 1.0, 5.0), bottle("a", 2.0, 5.0)],
        );
        assert_eq!(w.visible_entities(&id("sam")).unwrap(), vec!["b", "a", "c"]);
    }

    #[test]
    fn human_is_a_pseudo_entity() {
        let mut w = world_with(Pose2D::new(5.0, 5.0, 0.0), vec![]);
        w.human = Pose2D::new(7.0, 5.0, 180.0);
        assert_eq!(w.visible_entities(&id("sam")).unwrap(), vec![HUMAN_ID]);
    }

    #[test]
    fn heading_wraps() {
        assert_eq!(normalize_heading(-90.0), 270.0);
        assert_eq!(normalize_heading(360.0), 0.0);
        assert_eq!(normalize_heading(725.0), 5.0);
        assert_eq!(signed_angle_deg(270.0), -90.0);
        assert_eq!(signed_angle_deg(180.0), 180.0);
    }

    #[test]
    fn clock_never_decreases() {
        let mut w = world_with(Pose2D::new(0.0, 0.0, 0.0), vec![]);
        w.advance_clock(100);
        w.advance_clock(50);
        assert_eq!(w.clock_ms, 100);
    }
}
