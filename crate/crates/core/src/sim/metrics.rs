use super::TraceRow;

/// Time from the first disclosure to the end of the step in which the
/// lateral movement completes. `None` when it never completes.
pub fn lane_change_time(trace: &[TraceRow], dt: f64) -> Option<f64> {
    let first = trace.first()?.step;
    let done = trace.iter().find(|r| r.committed && r.progress_after >= 1.0)?;
    Some((done.step - first + 1) as f64 * dt)
}

/// TDTC for one decision instant: difference of constant-speed arrival
/// times at `conflict_x`. Infinite when the follower is not closing on the
/// HAV.
pub fn step_tdtc(x_hav: f64, v_hav: f64, x_hv: f64, v_hv: f64, conflict_x: f64) -> f64 {
    if v_hv <= v_hav {
        return f64::INFINITY;
    }
    let t_hav = if v_hav > 0.0 {
        (conflict_x - x_hav) / v_hav
    } else if conflict_x <= x_hav {
        0.0
    } else {
        return f64::INFINITY;
    };
    let t_hv = (conflict_x - x_hv) / v_hv;
    (t_hav - t_hv).abs()
}

/// Minimum TDTC over every step with a committed maneuver. Each maneuver's
/// conflict point is where the HAV ends up on completion; for a maneuver
/// cut short it is the constant-speed projection over the remaining
/// duration. `None` when no maneuver was ever committed.
pub fn tdtc(trace: &[TraceRow], lateral_duration: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut i = 0;
    while i < trace.len() {
        if !trace[i].committed {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < trace.len() && trace[i + 1].committed && trace[i + 1].progress_after > trace[i].progress_after {
            i += 1;
        }
        let last = &trace[i];
        let conflict_x = if last.progress_after >= 1.0 {
            last.hav_x_after
        } else {
            last.hav_x_after + last.hav_v_after * (1.0 - last.progress_after) * lateral_duration
        };
        for r in &trace[start..=i] {
            let s = &r.scene;
            let d = step_tdtc(s.hav.x, s.hav.v, s.hv.x, s.hv.v, conflict_x);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
        i += 1;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disclosure::DisclosureEvent;
    use crate::game::HavAction;
    use crate::trust::ActionLabel;
    use approx::assert_abs_diff_eq;

    fn rows(waits: usize, maneuver: usize) -> Vec<TraceRow> {
        let scene = crate::sim::tests::open_scene().validate().unwrap();
        (0..waits + maneuver)
            .map(|k| {
                let committed = k >= waits;
                let progress = if committed { (k + 1 - waits) as f64 / maneuver as f64 } else { 0.0 };
                TraceRow {
                    step: k,
                    t: k as f64 * 0.2,
                    scene,
                    intended: HavAction::LaneChange,
                    disclosed: HavAction::LaneChange,
                    deception_active: false,
                    event: DisclosureEvent::Truthful,
                    hv_action: ActionLabel::Maintain,
                    hv_accel: 0.0,
                    tau: 0.8,
                    tau_at_start: None,
                    u_a: 0.0,
                    u_h: 0.0,
                    committed,
                    progress_after: progress,
                    hav_x_after: 0.0,
                    hav_v_after: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn clock_runs_from_first_disclosure() {
        assert_abs_diff_eq!(lane_change_time(&rows(0, 15), 0.2).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lane_change_time(&rows(10, 15), 0.2).unwrap(), 5.0, epsilon = 1e-12);
        let mut unfinished = rows(3, 15);
        unfinished.truncate(10);
        assert!(lane_change_time(&unfinished, 0.2).is_none());
        assert!(lane_change_time(&[], 0.2).is_none());
    }

    #[test]
    fn arrival_difference() {
        // HAV 40 m short at 20 m/s, HV 125 m short at 25 m/s
        assert_abs_diff_eq!(step_tdtc(0.0, 20.0, -85.0, 25.0, 40.0), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(step_tdtc(0.0, 20.0, -10.0, 25.0, 40.0), 0.0, epsilon = 1e-12);
        assert!(step_tdtc(0.0, 20.0, -10.0, 18.0, 40.0).is_infinite());
        assert!(step_tdtc(0.0, 20.0, -10.0, 20.0, 40.0).is_infinite());
    }
}
