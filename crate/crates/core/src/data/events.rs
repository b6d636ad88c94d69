use super::{Dataset, Track, TrajectoryRecord, VehicleId};
use crate::game::HavAction;
use crate::scenario::ScenarioKind;
use crate::trust::{classify_action, classify_driver_type, ActionLabel, DriverType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Longitudinal intervals `[start, end]` of ramp or exit zones; a
    /// crossing inside one is mandatory.
    pub ramp_zones: Vec<[f64; 2]>,
    pub min_duration_s: f64,
    /// Neighbours further than this from the changer at onset do not count.
    pub max_initial_gap: f64,
    pub lookback_s: f64,
    pub lookahead_s: f64,
    /// Lateral speed toward the target lane above which the changer is
    /// taken to be moving over (m/s).
    pub lateral_threshold: f64,
    pub action_threshold: f64,
    pub cooperation_ratio: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            ramp_zones: Vec::new(),
            min_duration_s: 2.0,
            max_initial_gap: 150.0,
            lookback_s: 10.0,
            lookahead_s: 2.0,
            lateral_threshold: 0.2,
            action_threshold: 1.0,
            cooperation_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOutcome {
    Yielded,
    DidNotYield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub hav: VehicleId,
    pub hv: VehicleId,
    pub lv: VehicleId,
    pub tlv: VehicleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub id: usize,
    pub kind: ScenarioKind,
    pub start_frame: i64,
    pub end_frame: i64,
    /// Frame where the changer starts moving over.
    pub onset_frame: i64,
    /// First frame with the changer in the target lane.
    pub crossing_frame: i64,
    pub origin_lane: i32,
    pub target_lane: i32,
    /// Sign of `y` motion toward the target lane.
    pub lateral_direction: f64,
    pub roles: RoleAssignment,
    pub hv_actions: Vec<(i64, ActionLabel)>,
    pub outcome: EventOutcome,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub events: Vec<InteractionEvent>,
    pub skipped_missing_roles: usize,
    pub skipped_short: usize,
}

fn nearest<'a>(
    dataset: &'a Dataset,
    frame: i64,
    me: &TrajectoryRecord,
    lane: i32,
    ahead: bool,
    max_gap: f64,
) -> Option<&'a TrajectoryRecord> {
    dataset
        .at_frame(frame)
        .filter(|r| r.vehicle_id != me.vehicle_id && r.lane_id == lane)
        .filter(|r| if ahead { r.x > me.x } else { r.x < me.x })
        .filter(|r| (r.x - me.x).abs() <= max_gap)
        .min_by(|a, b| (a.x - me.x).abs().total_cmp(&(b.x - me.x).abs()))
}

/// Finds every lane-boundary crossing and assigns the four roles at the
/// onset of the lateral movement.
pub fn extract_events(dataset: &Dataset, cfg: &ExtractConfig) -> Extraction {
    let fps = dataset.frame_rate;
    let lookback = (cfg.lookback_s * fps).round() as i64;
    let lookahead = (cfg.lookahead_s * fps).round() as i64;
    let mut out = Extraction::default();
    for track in dataset.tracks.values() {
        let recs = &track.records;
        let crossings: Vec<usize> = (1..recs.len()).filter(|&i| recs[i].lane_id != recs[i - 1].lane_id).collect();
        for (ci, &i) in crossings.iter().enumerate() {
            let seg_lo = if ci == 0 { 0 } else { crossings[ci - 1] };
            let seg_hi = crossings.get(ci + 1).map_or(recs.len() - 1, |&n| n - 1);
            let cross = &recs[i];
            let before = &recs[i - 1];
            let mut dir = (cross.y - before.y).signum();
            if dir == 0.0 {
                dir = f64::from((cross.lane_id - before.lane_id).signum());
            }
            let mut onset = i - 1;
            while onset > seg_lo && recs[onset - 1].vy * dir > cfg.lateral_threshold {
                onset -= 1;
            }
            let at = &recs[onset];
            let (origin, target) = (before.lane_id, cross.lane_id);
            let lv = nearest(dataset, at.frame, at, origin, true, cfg.max_initial_gap);
            let tlv = nearest(dataset, at.frame, at, target, true, cfg.max_initial_gap);
            let hv = nearest(dataset, at.frame, at, target, false, cfg.max_initial_gap);
            let (Some(lv), Some(tlv), Some(hv)) = (lv, tlv, hv) else {
                out.skipped_missing_roles += 1;
                continue;
            };
            let roles = RoleAssignment {
                hav: track.id,
                hv: hv.vehicle_id,
                lv: lv.vehicle_id,
                tlv: tlv.vehicle_id,
            };
            let mut start = recs[seg_lo].frame.max(cross.frame - lookback);
            let mut end = recs[seg_hi].frame.min(cross.frame + lookahead);
            for id in [roles.hv, roles.lv, roles.tlv] {
                let t: &Track = dataset.track(id).expect("role ids come from the dataset");
                start = start.max(t.first_frame());
                end = end.min(t.last_frame());
            }
            if start > at.frame || end < cross.frame || ((end - start) as f64) < cfg.min_duration_s * fps - 1e-9 {
                out.skipped_short += 1;
                continue;
            }
            let hv_track = dataset.track(roles.hv).expect("role ids come from the dataset");
            let hv_actions: Vec<(i64, ActionLabel)> = hv_track
                .records
                .iter()
                .filter(|r| r.frame >= start && r.frame <= end)
                .filter_map(|r| classify_action(r.a, cfg.action_threshold).ok().map(|l| (r.frame, l)))
                .collect();
            let timed: Vec<(f64, ActionLabel)> = hv_actions.iter().map(|&(f, l)| (dataset.time(f), l)).collect();
            let outcome = match classify_driver_type(&timed, dataset.time(end), cfg.cooperation_ratio) {
                Ok(DriverType::Cooperative) => EventOutcome::Yielded,
                _ => EventOutcome::DidNotYield,
            };
            let in_ramp = cfg.ramp_zones.iter().any(|[lo, hi]| cross.x >= *lo && cross.x <= *hi);
            out.events.push(InteractionEvent {
                id: out.events.len(),
                kind: if in_ramp { ScenarioKind::Mlc } else { ScenarioKind::Dlc },
                start_frame: start,
                end_frame: end,
                onset_frame: at.frame,
                crossing_frame: cross.frame,
                origin_lane: origin,
                target_lane: target,
                lateral_direction: dir,
                roles,
                hv_actions,
                outcome,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStrategy {
    pub frame: i64,
    pub t: f64,
    pub follower_a: f64,
    pub follower_action: ActionLabel,
    pub changer_vy: f64,
    pub changer_intent: HavAction,
}

/// Per-frame labels over the event window, for frames where both the
/// changer and the follower are recorded.
pub fn infer_frame_strategies(event: &InteractionEvent, dataset: &Dataset, cfg: &ExtractConfig) -> Vec<FrameStrategy> {
    let (Some(changer), Some(follower)) = (dataset.track(event.roles.hav), dataset.track(event.roles.hv)) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for r in follower.records.iter().filter(|r| r.frame >= event.start_frame && r.frame <= event.end_frame) {
        let Some(c) = changer.at(r.frame) else { continue };
        let Ok(label) = classify_action(r.a, cfg.action_threshold) else { continue };
        let intent = if c.vy * event.lateral_direction > cfg.lateral_threshold {
            HavAction::LaneChange
        } else {
            HavAction::Yield
        };
        out.push(FrameStrategy {
            frame: r.frame,
            t: dataset.time(r.frame),
            follower_a: r.a,
            follower_action: label,
            changer_vy: c.vy,
            changer_intent: intent,
        });
    }
    out
}
