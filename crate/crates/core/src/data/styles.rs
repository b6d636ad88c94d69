use super::{DataError, Dataset, VehicleId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingStyle {
    Conservative,
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub min_frames: usize,
    /// Leaders further ahead than this are ignored for headway (m).
    pub max_leader_gap: f64,
    /// Headway cap, also used for frames with no leader (s).
    pub free_headway: f64,
    pub decel_threshold: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            min_frames: 50,
            max_leader_gap: 150.0,
            free_headway: 10.0,
            decel_threshold: 1.0,
            max_iter: 100,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleFeatures {
    pub id: VehicleId,
    pub mean_time_headway: f64,
    pub decel_rate: f64,
    pub speed_variance: f64,
    pub mean_abs_accel: f64,
}

impl StyleFeatures {
    fn vector(&self) -> [f64; 4] {
        [self.mean_time_headway, self.decel_rate, self.speed_variance, self.mean_abs_accel]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleClustering {
    pub labels: BTreeMap<VehicleId, DrivingStyle>,
    pub features: Vec<StyleFeatures>,
    pub conservative_proportion: f64,
    /// All drivers had identical features; labels are all conservative and
    /// the proportion is set to 0.5.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// `None` when the driver has fewer than `min_frames` frames.
pub fn driver_features(dataset: &Dataset, id: VehicleId, cfg: &StyleConfig) -> Option<StyleFeatures> {
    let track = dataset.track(id)?;
    let n = track.records.len();
    if n < cfg.min_frames || n == 0 {
        return None;
    }
    let mut headway = 0.0;
    let mut decels = 0usize;
    let mut abs_a = 0.0;
    let mean_v = track.records.iter().map(|r| r.v).sum::<f64>() / n as f64;
    let mut var_v = 0.0;
    for r in &track.records {
        let lead = dataset
            .at_frame(r.frame)
            .filter(|o| o.vehicle_id != id && o.lane_id == r.lane_id && o.x > r.x && o.x - r.x <= cfg.max_leader_gap)
            .min_by(|a, b| a.x.total_cmp(&b.x));
        let h = match lead {
            Some(l) if r.v > 0.0 => ((l.x - r.x) / r.v).min(cfg.free_headway),
            _ => cfg.free_headway,
        };
        headway += h;
        decels += usize::from(r.a < -cfg.decel_threshold);
        abs_a += r.a.abs();
        var_v += (r.v - mean_v).powi(2);
    }
    let nf = n as f64;
    Some(StyleFeatures {
        id,
        mean_time_headway: headway / nf,
        decel_rate: decels as f64 / nf,
        speed_variance: var_v / nf,
        mean_abs_accel: abs_a / nf,
    })
}

fn lloyd(z: &[[f64; 4]], mut centroids: [[f64; 4]; 2], max_iter: usize) -> ([[f64; 4]; 2], Vec<usize>, f64) {
    let mut assign = vec![usize::MAX; z.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, v) in z.iter().enumerate() {
            let c = usize::from(dist2(v, &centroids[1]) < dist2(v, &centroids[0]));
            if c != assign[i] {
                assign[i] = c;
                changed = true;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64; 4]> = z.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(v, _)| v).collect();
            if members.is_empty() {
                continue;
            }
            for k in 0..4 {
                centroid[k] = members.iter().map(|v| v[k]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = z.iter().zip(&assign).map(|(v, &a)| dist2(v, &centroids[a])).sum();
    (centroids, assign, inertia)
}

/// k-means++ seeding from a fixed-seed generator, best of `restarts` runs.
fn best_two_means(z: &[[f64; 4]], cfg: &StyleConfig) -> ([[f64; 4]; 2], Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<([[f64; 4]; 2], Vec<usize>, f64)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let first = z[rng.random_range(0..z.len())];
        let d: Vec<f64> = z.iter().map(|v| dist2(v, &first)).collect();
        let total: f64 = d.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut second = z.len() - 1;
        for (i, di) in d.iter().enumerate() {
            if pick < *di {
                second = i;
                break;
            }
            pick -= di;
        }
        let run = lloyd(z, [first, z[second]], cfg.max_iter);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (c, a, _) = best.expect("at least one restart");
    (c, a)
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Two-means clustering of standardized per-driver features. `drivers`
/// restricts the population (e.g. to event followers); drivers below
/// `min_frames` are left out. Seeding is k-means++ from `cfg.seed`, so the
/// result is deterministic.
pub fn cluster_driving_styles(
    dataset: &Dataset,
    drivers: Option<&[VehicleId]>,
    cfg: &StyleConfig,
) -> Result<StyleClustering, DataError> {
    let ids: Vec<VehicleId> = match drivers {
        Some(d) => {
            let mut d = d.to_vec();
            d.sort_unstable();
            d.dedup();
            d
        }
        None => dataset.tracks.keys().copied().collect(),
    };
    let features: Vec<StyleFeatures> = ids.iter().filter_map(|&id| driver_features(dataset, id, cfg)).collect();
    if features.len() < 2 {
        return Err(DataError::Insufficient(format!(
            "need at least 2 drivers with {} frames, found {}",
            cfg.min_frames,
            features.len()
        )));
    }
    let n = features.len() as f64;
    let raw: Vec<[f64; 4]> = features.iter().map(StyleFeatures::vector).collect();
    let mut mean = [0.0; 4];
    let mut sd = [0.0; 4];
    for k in 0..4 {
        mean[k] = raw.iter().map(|v| v[k]).sum::<f64>() / n;
        sd[k] = (raw.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
    }
    let z: Vec<[f64; 4]> = raw
        .iter()
        .map(|v| {
            let mut o = [0.0; 4];
            for k in 0..4 {
                o[k] = if sd[k] > 1e-12 { (v[k] - mean[k]) / sd[k] } else { 0.0 };
            }
            o
        })
        .collect();
    // headway up, braking, variance and |a| down
    let score = |v: &[f64; 4]| v[0] - v[1] - v[2] - v[3];

    if z.iter().all(|v| v.iter().all(|x| *x == 0.0)) {
        return Ok(StyleClustering {
            labels: features.iter().map(|f| (f.id, DrivingStyle::Conservative)).collect(),
            features,
            conservative_proportion: 0.5,
            degenerate: true,
            warnings: vec!["all drivers have identical features; proportion set to 0.5".into()],
        });
    }

    let (centroids, assign) = best_two_means(&z, cfg);
    let conservative = usize::from(score(&centroids[1]) > score(&centroids[0]));
    let mut warnings = Vec::new();
    if assign.iter().all(|&a| a == assign[0]) {
        warnings.push("clustering put every driver in one group".into());
    }
    let labels: BTreeMap<VehicleId, DrivingStyle> = features
        .iter()
        .zip(&assign)
        .map(|(f, &a)| {
            let s = if a == conservative {
                DrivingStyle::Conservative
            } else {
                DrivingStyle::Aggressive
            };
            (f.id, s)
        })
        .collect();
    let n_cons = labels.values().filter(|s| **s == DrivingStyle::Conservative).count();
    Ok(StyleClustering {
        conservative_proportion: n_cons as f64 / labels.len() as f64,
        labels,
        features,
        degenerate: false,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrajectoryRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // each driver follows its own leader in a private lane
    fn population(n: usize, seed: u64) -> (Dataset, Vec<(VehicleId, DrivingStyle)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        let mut truth = Vec::new();
        for d in 0..n {
            let conservative = rng.random::<f64>() < 0.5;
            let (headway, sd) = if conservative { (2.2, 0.1) } else { (0.8, 1.2) };
            let id = 2 * d as u64 + 1;
            truth.push((id, if conservative { DrivingStyle::Conservative } else { DrivingStyle::Aggressive }));
            let mut v = 25.0;
            let mut x = 0.0;
            for f in 0..80i64 {
                let a: f64 = sd * (rng.random::<f64>() * 2.0 - 1.0) * 1.7;
                v += a * 0.1;
                x += v * 0.1;
                let lane = d as i32 + 1;
                let rec = |vehicle_id, x, v, a| TrajectoryRecord {
                    frame: f,
                    vehicle_id,
                    x,
                    y: 0.0,
                    v,
                    a,
                    lane_id: lane,
                    vy: 0.0,
                };
                recs.push(rec(id, x, v, a));
                recs.push(rec(id + 1, x + headway * v, v, 0.0));
            }
        }
        (Dataset::from_records(recs, 10.0).unwrap(), truth)
    }

    #[test]
    fn separated_populations_are_recovered() {
        let (ds, truth) = population(60, 4);
        let ids: Vec<VehicleId> = truth.iter().map(|t| t.0).collect();
        let c = cluster_driving_styles(&ds, Some(&ids), &StyleConfig::default()).unwrap();
        let agree = truth.iter().filter(|(id, s)| c.labels[id] == *s).count();
        assert!(agree as f64 / truth.len() as f64 >= 0.95, "agreement {agree}/{}", truth.len());
        let share = truth.iter().filter(|t| t.1 == DrivingStyle::Conservative).count() as f64 / 60.0;
        assert!((c.conservative_proportion - share).abs() < 0.05);
        assert!(!c.degenerate);
        let again = cluster_driving_styles(&ds, Some(&ids), &StyleConfig::default()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn identical_drivers_are_degenerate() {
        let mut recs = Vec::new();
        for id in [1u64, 2, 3] {
            for f in 0..60 {
                recs.push(TrajectoryRecord {
                    frame: f,
                    vehicle_id: id,
                    x: 20.0 * f as f64 + 1000.0 * id as f64,
                    y: 0.0,
                    v: 20.0,
                    a: 0.0,
                    lane_id: id as i32,
                    vy: 0.0,
                });
            }
        }
        let ds = Dataset::from_records(recs, 10.0).unwrap();
        let c = cluster_driving_styles(&ds, None, &StyleConfig::default()).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.conservative_proportion, 0.5);
        assert!(!c.warnings.is_empty());
    }

    #[test]
    fn too_few_drivers_rejected() {
        let (ds, _) = population(1, 0);
        assert!(cluster_driving_styles(&ds, Some(&[1]), &StyleConfig::default()).is_err());
        let short = StyleConfig {
            min_frames: 500,
            ..StyleConfig::default()
        };
        assert!(cluster_driving_styles(&ds, None, &short).is_err());
    }
}
