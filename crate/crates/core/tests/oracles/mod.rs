//! Independent re-computations used by the integration and acceptance tests.
#![allow(dead_code)]

use lanetrust::game::GameParams;
use lanetrust::scenario::{Scene, ScenarioKind, VehicleState};
use lanetrust::{ActionLabel, Weights};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

/// Exact two-type belief with responsibility-weighted pseudo-counts.
pub struct ExactBelief {
    pub tau: BigRational,
    pub counts: [[BigRational; 3]; 2],
    pub credit: bool,
}

impl ExactBelief {
    pub fn new(tau: f64, counts: [[f64; 3]; 2], credit: bool) -> Self {
        Self {
            tau: rat(tau),
            counts: counts.map(|row| row.map(rat)),
            credit,
        }
    }

    pub fn observe(&mut self, label: ActionLabel) {
        let j = label.index();
        let p = |row: &[BigRational; 3]| {
            let total: BigRational = row.iter().cloned().fold(BigRational::zero(), |a, b| a + b);
            row[j].clone() / total
        };
        let p_c = p(&self.counts[0]);
        let p_nc = p(&self.counts[1]);
        let one = BigRational::one();
        if !(self.tau.is_zero() || self.tau == one) {
            let num = self.tau.clone() * p_c;
            let den = num.clone() + (one.clone() - self.tau.clone()) * p_nc;
            self.tau = num / den;
        }
        if self.credit {
            self.counts[0][j] += self.tau.clone();
            self.counts[1][j] += one - self.tau.clone();
        }
    }

    pub fn tau_f64(&self) -> f64 {
        to_f64(&self.tau)
    }
}

fn step(s: &VehicleState, a: f64, dt: f64) -> (f64, f64, f64) {
    let v_end = s.v + a * dt;
    if v_end < 0.0 {
        let d = if s.v > 0.0 { -s.v * s.v / (2.0 * a) } else { 0.0 };
        (s.x + d, 0.0, -s.v / dt)
    } else {
        (s.x + s.v * dt + 0.5 * a * dt * dt, v_end, a)
    }
}

fn ttc(xf: f64, xl: f64, vf: f64, vl: f64) -> f64 {
    let t = (xl - xf) / (vf - vl);
    if t.is_finite() && t > 0.0 {
        t
    } else {
        f64::INFINITY
    }
}

fn s_of(t: f64, eps: f64) -> f64 {
    if t == f64::INFINITY {
        1.0
    } else {
        (-1.0 / (t + eps)).exp()
    }
}

/// Payoff tables `[column][row]`, columns (coop LC, coop Yield, nc LC,
/// nc Yield), rows (maintain, accelerate, decelerate), written out one
/// formula at a time.
pub fn payoffs(scene: &Scene, kind: ScenarioKind, tau: f64, w: Weights, p: &GameParams) -> ([[f64; 3]; 4], [[f64; 3]; 4]) {
    let dt = p.dt;
    let k = p.hv_kinematics;
    let hv_acc = [k.maintain, k.accelerate, k.decelerate];
    let mlc = matches!(kind, ScenarioKind::Mlc);
    let mut ua = [[0.0; 3]; 4];
    let mut uh = [[0.0; 3]; 4];
    for j in 0..3 {
        let (xa, va, aa) = step(&scene.hav, scene.hav.a, dt);
        let (xh, vh, _) = step(&scene.hv, hv_acc[j], dt);
        let (xl, vl, al) = step(&scene.lv, scene.lv.a, dt);
        let (xt, vt, at) = step(&scene.tlv, scene.tlv.a, dt);
        // lane change disclosed
        let sa_lc = s_of(ttc(xa, xt, va, vt).min(ttc(xa, xh, va, vh)), p.epsilon);
        let ea_lc = vt - va + at * (xt - xa);
        let sh_lc = s_of(ttc(xh, xa, vh, va), p.epsilon);
        let eh_lc = va - vh + aa * (xa - xh);
        // yield disclosed
        let sa_y = s_of(ttc(xa, xl, va, vl), p.epsilon);
        let ea_y = vl - va + al * (xl - xa);
        let sh_y = s_of(ttc(xh, xt, vh, vt), p.epsilon);
        let eh_y = vt - vh + at * (xt - xh);

        let ind = if mlc { 0.0 } else { 1.0 };
        let ua_lc = w.w_s * sa_lc + w.w_e * ea_lc * ind;
        let ua_y = w.w_s * sa_y + w.w_e * ea_y * ind;
        ua[0][j] = ua_lc;
        ua[2][j] = ua_lc;
        ua[1][j] = ua_y;
        ua[3][j] = ua_y;
        uh[0][j] = tau * (w.w_s * sh_lc + w.w_e * eh_lc + w.w_a * ua_lc);
        uh[1][j] = tau * (w.w_s * sh_y + w.w_e * eh_y + w.w_a * ua_y);
        uh[2][j] = (1.0 - tau) * (w.w_s * sh_lc + w.w_e * eh_lc);
        uh[3][j] = (1.0 - tau) * (w.w_s * sh_y + w.w_e * eh_y);
    }
    (ua, uh)
}
