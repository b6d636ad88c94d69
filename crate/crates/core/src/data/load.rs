use super::{DataError, Dataset, TrajectoryRecord};
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

/// Binds the canonical fields to file headers. `v`, `a` and `vy` are
/// optional in the file: when their header is absent they are derived from
/// positions by finite differences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub frame: String,
    pub id: String,
    pub x: String,
    pub y: String,
    pub v: String,
    pub a: String,
    pub lane_id: String,
    pub vy: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            frame: "frame".into(),
            id: "id".into(),
            x: "x".into(),
            y: "y".into(),
            v: "xVelocity".into(),
            a: "xAcceleration".into(),
            lane_id: "laneId".into(),
            vy: "yVelocity".into(),
        }
    }
}

pub fn load_trajectories(path: impl AsRef<Path>, schema: &SchemaMap, frame_rate: f64) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_trajectories(file, schema, frame_rate)
}

pub fn read_trajectories<R: Read>(reader: R, schema: &SchemaMap, frame_rate: f64) -> Result<Dataset, DataError> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(DataError::BadFrameRate(frame_rate));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |h: &str| headers.iter().position(|x| x == h);
    let required = |column: &'static str, h: &String| {
        find(h).ok_or_else(|| DataError::MissingColumn {
            column,
            header: h.clone(),
        })
    };
    let c_frame = required("frame", &schema.frame)?;
    let c_id = required("id", &schema.id)?;
    let c_x = required("x", &schema.x)?;
    let c_y = required("y", &schema.y)?;
    let c_lane = required("lane_id", &schema.lane_id)?;
    let c_v = find(&schema.v);
    let c_a = find(&schema.a);
    let c_vy = find(&schema.vy);

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let float = |c: usize| -> Result<f64, DataError> {
            let s = cell(c);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    row,
                    column: headers[c].to_string(),
                    value: s.to_string(),
                })
        };
        let int = |c: usize| -> Result<i64, DataError> {
            let s = cell(c);
            s.parse::<i64>()
                .ok()
                .or_else(|| s.parse::<f64>().ok().filter(|f| f.fract() == 0.0 && f.is_finite()).map(|f| f as i64))
                .ok_or_else(|| DataError::Parse {
                    row,
                    column: headers[c].to_string(),
                    value: s.to_string(),
                })
        };
        let id = int(c_id)?;
        if id < 0 {
            return Err(DataError::Parse {
                row,
                column: headers[c_id].to_string(),
                value: cell(c_id).to_string(),
            });
        }
        records.push(TrajectoryRecord {
            frame: int(c_frame)?,
            vehicle_id: id as u64,
            x: float(c_x)?,
            y: float(c_y)?,
            v: c_v.map(float).transpose()?.unwrap_or(f64::NAN),
            a: c_a.map(float).transpose()?.unwrap_or(f64::NAN),
            lane_id: int(c_lane)? as i32,
            vy: c_vy.map(float).transpose()?.unwrap_or(f64::NAN),
        });
        rows.push(row);
    }
    let mut ds = Dataset::build(records, &rows, frame_rate)?;
    let (derive_v, derive_a, derive_vy) = (c_v.is_none(), c_a.is_none(), c_vy.is_none());
    for track in ds.tracks.values_mut() {
        let t: Vec<f64> = track.records.iter().map(|r| r.frame as f64 / frame_rate).collect();
        if derive_v || derive_a {
            let x: Vec<f64> = track.records.iter().map(|r| r.x).collect();
            let (v, a) = derive_derivatives(&t, &x);
            for (r, (v, a)) in track.records.iter_mut().zip(v.into_iter().zip(a)) {
                if derive_v {
                    r.v = v;
                }
                if derive_a {
                    r.a = a;
                }
            }
        }
        if derive_vy {
            let y: Vec<f64> = track.records.iter().map(|r| r.y).collect();
            let (vy, _) = derive_derivatives(&t, &y);
            for (r, vy) in track.records.iter_mut().zip(vy) {
                r.vy = vy;
            }
        }
    }
    Ok(ds)
}

/// First and second derivatives of samples `x(t)` from the quadratic through
/// each point and its neighbours (the first or last three points at the
/// ends), so quadratics are reproduced exactly on uneven spacing too. Two
/// samples give a constant slope and zero curvature; one gives zeros.
pub fn derive_derivatives(t: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = t.len().min(x.len());
    match n {
        0 => return (Vec::new(), Vec::new()),
        1 => return (vec![0.0], vec![0.0]),
        2 => {
            let s = (x[1] - x[0]) / (t[1] - t[0]);
            return (vec![s; 2], vec![0.0; 2]);
        }
        _ => {}
    }
    let mut v = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let k = i.clamp(1, n - 2) - 1;
        let (t0, t1, t2) = (t[k], t[k + 1], t[k + 2]);
        let d01 = (x[k + 1] - x[k]) / (t1 - t0);
        let d12 = (x[k + 2] - x[k + 1]) / (t2 - t1);
        let second = (d12 - d01) / (t2 - t0);
        v.push(d01 + second * ((t[i] - t0) + (t[i] - t1)));
        a.push(2.0 * second);
    }
    (v, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TWO: &str = "frame,id,x,y,xVelocity,xAcceleration,laneId
0,1,0.0,1.75,20,0,1
1,1,0.8,1.75,20,0,1
0,2,30.0,5.25,22,0.5,2
1,2,30.88,5.25,22.02,0.5,2
";

    #[test]
    fn two_tracks() {
        let ds = read_trajectories(TWO.as_bytes(), &SchemaMap::default(), 25.0).unwrap();
        assert_eq!(ds.tracks.len(), 2);
        assert_eq!(ds.track(2).unwrap().records[1].v, 22.02);
        assert_eq!(ds.at_frame(1).count(), 2);
    }

    #[test]
    fn missing_lane_column_is_named() {
        let text = "frame,id,x,y\n0,1,0,0\n";
        let err = read_trajectories(text.as_bytes(), &SchemaMap::default(), 25.0).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { column: "lane_id", .. }));
        assert!(err.to_string().contains("laneId"));
    }

    #[test]
    fn bad_cells_and_order_report_rows() {
        let text = "frame,id,x,y,laneId\n0,1,0,0,1\n1,1,abc,0,1\n";
        match read_trajectories(text.as_bytes(), &SchemaMap::default(), 25.0).unwrap_err() {
            DataError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x");
            }
            e => panic!("unexpected {e}"),
        }
        let text = "frame,id,x,y,laneId\n0,1,0,0,1\n5,1,1,0,1\n5,1,2,0,1\n";
        assert!(matches!(
            read_trajectories(text.as_bytes(), &SchemaMap::default(), 25.0).unwrap_err(),
            DataError::NonMonotone { row: 4, vehicle: 1, .. }
        ));
    }

    #[test]
    fn renamed_headers() {
        let text = "f,vid,px,py,lane\n0,7,0,0,1\n1,7,1,0,1\n2,7,2,0,1\n";
        let schema = SchemaMap {
            frame: "f".into(),
            id: "vid".into(),
            x: "px".into(),
            y: "py".into(),
            lane_id: "lane".into(),
            ..SchemaMap::default()
        };
        let ds = read_trajectories(text.as_bytes(), &schema, 10.0).unwrap();
        for r in &ds.track(7).unwrap().records {
            assert_abs_diff_eq!(r.v, 10.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.a, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_positions_give_exact_acceleration() {
        // x = 3 + 21 t - 0.9 t², 25 fps
        let mut text = String::from("frame,id,x,y,laneId\n");
        for f in 0..120 {
            let t = f as f64 / 25.0;
            let x = 3.0 + 21.0 * t - 0.9 * t * t;
            text.push_str(&format!("{f},1,{x},0,1\n"));
        }
        let ds = read_trajectories(text.as_bytes(), &SchemaMap::default(), 25.0).unwrap();
        for r in &ds.track(1).unwrap().records {
            let t = r.frame as f64 / 25.0;
            assert_abs_diff_eq!(r.a, -1.8, epsilon = 1e-9);
            assert_abs_diff_eq!(r.v, 21.0 - 1.8 * t, epsilon = 1e-9);
        }
    }

    #[test]
    fn uneven_spacing_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.4, 1.0];
        let x: Vec<f64> = t.iter().map(|t| 1.0 - 2.0 * t + 1.5 * t * t).collect();
        let (v, a) = derive_derivatives(&t, &x);
        for i in 0..t.len() {
            assert_abs_diff_eq!(a[i], 3.0, epsilon = 1e-9);
            assert_abs_diff_eq!(v[i], -2.0 + 3.0 * t[i], epsilon = 1e-9);
        }
        assert_eq!(derive_derivatives(&[0.0], &[4.0]), (vec![0.0], vec![0.0]));
    }
}
