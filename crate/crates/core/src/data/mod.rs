//! Trajectory recordings: ingestion, lane-change event extraction, frame
//! labels, driving-style clustering and synthetic recordings.

mod events;
mod load;
mod styles;
mod synth;

pub use events::{
    extract_events, infer_frame_strategies, EventOutcome, Extraction, ExtractConfig, FrameStrategy,
    InteractionEvent, RoleAssignment,
};
pub use load::{derive_derivatives, load_trajectories, read_trajectories, SchemaMap};
pub use styles::{cluster_driving_styles, driver_features, DrivingStyle, StyleClustering, StyleConfig, StyleFeatures};
pub use synth::{generate_synthetic, GenConfig, GroundTruth, GroundTruthEvent, StyleProfile, SyntheticDataset};

use crate::sim::SimError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("missing required column `{column}` (header `{header}` not found)")]
    MissingColumn { column: &'static str, header: String },
    #[error("row {row}: column `{column}`: cannot parse `{value}`")]
    Parse { row: u64, column: String, value: String },
    #[error("row {row}: vehicle {vehicle} frame {frame} does not follow frame {previous}")]
    NonMonotone {
        row: u64,
        vehicle: VehicleId,
        frame: i64,
        previous: i64,
    },
    #[error("frame rate must be positive and finite, got {0}")]
    BadFrameRate(f64),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type VehicleId = u64;

/// One vehicle at one frame. `vy` is the lateral velocity, derived from `y`
/// when the file does not carry it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: i64,
    pub vehicle_id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub lane_id: i32,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: VehicleId,
    /// Strictly increasing frames.
    pub records: Vec<TrajectoryRecord>,
}

impl Track {
    pub fn at(&self, frame: i64) -> Option<&TrajectoryRecord> {
        self.records
            .binary_search_by_key(&frame, |r| r.frame)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn first_frame(&self) -> i64 {
        self.records.first().map_or(0, |r| r.frame)
    }

    pub fn last_frame(&self) -> i64 {
        self.records.last().map_or(0, |r| r.frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frame_rate: f64,
    pub tracks: BTreeMap<VehicleId, Track>,
    by_frame: BTreeMap<i64, Vec<VehicleId>>,
}

impl Dataset {
    /// Groups records into tracks. Records of one vehicle must appear in
    /// strictly increasing frame order.
    pub fn from_records(records: Vec<TrajectoryRecord>, frame_rate: f64) -> Result<Self, DataError> {
        let rows: Vec<u64> = (1..=records.len() as u64).collect();
        Self::build(records, &rows, frame_rate)
    }

    /// `rows` gives the source line of each record for error messages.
    pub(crate) fn build(records: Vec<TrajectoryRecord>, rows: &[u64], frame_rate: f64) -> Result<Self, DataError> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(DataError::BadFrameRate(frame_rate));
        }
        let mut tracks: BTreeMap<VehicleId, Track> = BTreeMap::new();
        for (i, r) in records.into_iter().enumerate() {
            let track = tracks.entry(r.vehicle_id).or_insert_with(|| Track {
                id: r.vehicle_id,
                records: Vec::new(),
            });
            if let Some(prev) = track.records.last() {
                if r.frame <= prev.frame {
                    return Err(DataError::NonMonotone {
                        row: rows.get(i).copied().unwrap_or(i as u64 + 1),
                        vehicle: r.vehicle_id,
                        frame: r.frame,
                        previous: prev.frame,
                    });
                }
            }
            track.records.push(r);
        }
        Ok(Self::from_tracks(tracks, frame_rate))
    }

    fn from_tracks(tracks: BTreeMap<VehicleId, Track>, frame_rate: f64) -> Self {
        let mut by_frame: BTreeMap<i64, Vec<VehicleId>> = BTreeMap::new();
        for t in tracks.values() {
            for r in &t.records {
                by_frame.entry(r.frame).or_default().push(t.id);
            }
        }
        Self {
            frame_rate,
            tracks,
            by_frame,
        }
    }

    pub fn empty(frame_rate: f64) -> Self {
        Self::from_tracks(BTreeMap::new(), frame_rate)
    }

    pub fn track(&self, id: VehicleId) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn record(&self, id: VehicleId, frame: i64) -> Option<&TrajectoryRecord> {
        self.tracks.get(&id)?.at(frame)
    }

    /// Every vehicle present at `frame`, by id.
    pub fn at_frame(&self, frame: i64) -> impl Iterator<Item = &TrajectoryRecord> + '_ {
        self.by_frame
            .get(&frame)
            .into_iter()
            .flatten()
            .filter_map(move |id| self.record(*id, frame))
    }

    pub fn time(&self, frame: i64) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn n_records(&self) -> usize {
        self.tracks.values().map(|t| t.records.len()).sum()
    }

    /// Writes frame-major rows under the schema's header names. The lateral
    /// velocity is not written.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &SchemaMap) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            &schema.frame,
            &schema.id,
            &schema.x,
            &schema.y,
            &schema.v,
            &schema.a,
            &schema.lane_id,
        ])?;
        for frame in self.by_frame.keys() {
            for r in self.at_frame(*frame) {
                w.write_record([
                    r.frame.to_string(),
                    r.vehicle_id.to_string(),
                    r.x.to_string(),
                    r.y.to_string(),
                    r.v.to_string(),
                    r.a.to_string(),
                    r.lane_id.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
