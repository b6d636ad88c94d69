//! Driver-type inference and the Bayesian trust estimate.
//!
//! Trust `tau` is the HAV's belief that the follower is the cooperative type.
//! Each observed follower action moves the belief by the ratio of the two
//! type-conditioned action likelihoods, which are kept as pseudo-count tables
//! so every likelihood stays strictly positive.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum TrustError {
    #[error("non-finite acceleration {0}")]
    NonFinite(f64),
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("action sequence is empty")]
    EmptySequence,
    #[error("cooperation threshold must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("trust must lie in [0, 1], got {0}")]
    BadTau(f64),
    #[error("pseudo-counts must be positive and finite")]
    BadCounts,
    #[error("need at least two labeled drivers, got {0}")]
    InsufficientDrivers(usize),
    #[error("likelihood table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Follower action. Declaration order is the game's row order (v, v+, v−),
/// which is also the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLabel {
    Maintain,
    Accelerate,
    Decelerate,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 3] = [
        ActionLabel::Maintain,
        ActionLabel::Accelerate,
        ActionLabel::Decelerate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Maintain => "maintain",
            ActionLabel::Accelerate => "accelerate",
            ActionLabel::Decelerate => "decelerate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maintain" | "v" | "m" => Some(ActionLabel::Maintain),
            "accelerate" | "v+" | "acc" | "a" => Some(ActionLabel::Accelerate),
            "decelerate" | "v-" | "dec" | "d" => Some(ActionLabel::Decelerate),
            _ => None,
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverType {
    Cooperative,
    NonCooperative,
}

impl DriverType {
    pub const ALL: [DriverType; 2] = [DriverType::Cooperative, DriverType::NonCooperative];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DriverType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriverType::Cooperative => "cooperative",
            DriverType::NonCooperative => "non_cooperative",
        })
    }
}

pub const DEFAULT_ACTION_THRESHOLD: f64 = 1.0;
pub const DEFAULT_COOPERATION_RATIO: f64 = 0.5;

/// Labels an acceleration with strict inequalities at `±threshold`.
pub fn classify_action(a: f64, threshold: f64) -> Result<ActionLabel, TrustError> {
    if !a.is_finite() {
        return Err(TrustError::NonFinite(a));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(TrustError::BadThreshold(threshold));
    }
    Ok(if a < -threshold {
        ActionLabel::Decelerate
    } else if a > threshold {
        ActionLabel::Accelerate
    } else {
        ActionLabel::Maintain
    })
}

/// Recency-weighted share of decelerations: `Σ e^{-(T-t)}·1[dec] / Σ e^{-(T-t)}`.
pub fn deceleration_ratio(actions: &[(f64, ActionLabel)], final_t: f64) -> Result<f64, TrustError> {
    if actions.is_empty() {
        return Err(TrustError::EmptySequence);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, label) in actions {
        let w = (-(final_t - t)).exp();
        den += w;
        if label == ActionLabel::Decelerate {
            num += w;
        }
    }
    Ok(num / den)
}

pub fn classify_driver_type(
    actions: &[(f64, ActionLabel)],
    final_t: f64,
    rho_c: f64,
) -> Result<DriverType, TrustError> {
    if !(rho_c > 0.0 && rho_c < 1.0) {
        return Err(TrustError::BadRatio(rho_c));
    }
    let r = deceleration_ratio(actions, final_t)?;
    Ok(if r >= rho_c {
        DriverType::Cooperative
    } else {
        DriverType::NonCooperative
    })
}

/// Pseudo-count weights per (driver type × action).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    /// `counts[type][action]`, action in row order (maintain, accelerate, decelerate).
    pub counts: [[f64; 3]; 2],
}

impl Default for LikelihoodTable {
    /// Cooperative: dec 4, maintain 4, accelerate 2. Non-cooperative: dec 1,
    /// maintain 4, accelerate 5.
    fn default() -> Self {
        Self {
            counts: [[4.0, 2.0, 4.0], [4.0, 5.0, 1.0]],
        }
    }
}

impl LikelihoodTable {
    pub fn new(cooperative: [f64; 3], non_cooperative: [f64; 3]) -> Result<Self, TrustError> {
        let table = Self {
            counts: [cooperative, non_cooperative],
        };
        table.validate()?;
        Ok(table)
    }

    pub fn uniform() -> Self {
        Self {
            counts: [[1.0; 3]; 2],
        }
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        if self
            .counts
            .iter()
            .flatten()
            .all(|c| c.is_finite() && *c > 0.0)
        {
            Ok(())
        } else {
            Err(TrustError::BadCounts)
        }
    }

    pub fn count(&self, action: ActionLabel, driver: DriverType) -> f64 {
        self.counts[driver.index()][action.index()]
    }

    pub fn probability(&self, action: ActionLabel, driver: DriverType) -> f64 {
        let row = &self.counts[driver.index()];
        row[action.index()] / row.iter().sum::<f64>()
    }

    pub fn credit(&mut self, action: ActionLabel, driver: DriverType, weight: f64) {
        self.counts[driver.index()][action.index()] += weight;
    }

    /// Estimates both rows from action frequencies of drivers already split by
    /// type, on top of one Laplace count per cell.
    pub fn from_labeled_actions<'a, I>(data: I) -> Self
    where
        I: IntoIterator<Item = (DriverType, &'a [ActionLabel])>,
    {
        let mut table = Self::uniform();
        for (driver, actions) in data {
            for &a in actions {
                table.credit(a, driver, 1.0);
            }
        }
        table
    }

    /// Reads `action,cooperative,non_cooperative` rows; every action must
    /// appear exactly once.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TrustError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut counts = [[f64::NAN; 3]; 2];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(TrustError::Table(format!("row {} needs 3 fields", row + 2)));
            }
            let action = ActionLabel::parse(&rec[0])
                .ok_or_else(|| TrustError::Table(format!("row {}: unknown action {:?}", row + 2, &rec[0])))?;
            for (k, cell) in [&rec[1], &rec[2]].into_iter().enumerate() {
                let val: f64 = cell
                    .parse()
                    .map_err(|_| TrustError::Table(format!("row {}: bad count {:?}", row + 2, cell)))?;
                if !counts[k][action.index()].is_nan() {
                    return Err(TrustError::Table(format!("duplicate action {action}")));
                }
                counts[k][action.index()] = val;
            }
        }
        if counts.iter().flatten().any(|c| c.is_nan()) {
            return Err(TrustError::Table("every action needs a row".into()));
        }
        let table = Self { counts };
        table.validate()?;
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrustError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["action", "cooperative", "non_cooperative"])?;
        for a in [ActionLabel::Decelerate, ActionLabel::Maintain, ActionLabel::Accelerate] {
            w.write_record([
                a.as_str().to_string(),
                self.count(a, DriverType::Cooperative).to_string(),
                self.count(a, DriverType::NonCooperative).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// How the pseudo-count tables evolve as actions are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountUpdate {
    /// Credit the cooperative row with the posterior `tau'` and the
    /// non-cooperative row with `1 - tau'`.
    #[default]
    Responsibility,
    /// Keep the seed tables fixed.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub label: ActionLabel,
    pub raw_a: f64,
    /// Trust after incorporating this observation.
    pub tau_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustBelief {
    pub tau: f64,
    pub tau_initial: f64,
    pub likelihoods: LikelihoodTable,
    pub count_update: CountUpdate,
    pub observed: Vec<Observation>,
}

impl TrustBelief {
    pub fn new(tau0: f64, likelihoods: LikelihoodTable, count_update: CountUpdate) -> Result<Self, TrustError> {
        if !(0.0..=1.0).contains(&tau0) {
            return Err(TrustError::BadTau(tau0));
        }
        likelihoods.validate()?;
        Ok(Self {
            tau: tau0,
            tau_initial: tau0,
            likelihoods,
            count_update,
            observed: Vec::new(),
        })
    }

    pub fn non_cooperative(&self) -> f64 {
        1.0 - self.tau
    }

    pub fn action_likelihood(&self, action: ActionLabel, driver: DriverType) -> f64 {
        self.likelihoods.probability(action, driver)
    }

    /// In-place version of [`update_trust`].
    pub fn observe(&mut self, t: f64, label: ActionLabel, raw_a: f64) {
        let p_c = self.action_likelihood(label, DriverType::Cooperative);
        let p_nc = self.action_likelihood(label, DriverType::NonCooperative);
        let tau = posterior(self.tau, p_c, p_nc);
        if self.count_update == CountUpdate::Responsibility {
            self.likelihoods.credit(label, DriverType::Cooperative, tau);
            self.likelihoods.credit(label, DriverType::NonCooperative, 1.0 - tau);
        }
        self.tau = tau;
        self.observed.push(Observation {
            t,
            label,
            raw_a,
            tau_after: tau,
        });
    }

    /// Writes `t,tau,action,raw_a` with trust after each observation.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<(), TrustError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "tau", "action", "raw_a"])?;
        for o in &self.observed {
            w.write_record([
                o.t.to_string(),
                o.tau_after.to_string(),
                o.label.as_str().to_string(),
                o.raw_a.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One Bayes step on the two-type belief. Boundary beliefs are absorbing.
pub fn posterior(tau: f64, p_c: f64, p_nc: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return 1.0;
    }
    let num = tau * p_c;
    let den = num + (1.0 - tau) * p_nc;
    (num / den).clamp(0.0, 1.0)
}

/// Returns the belief after observing `label` at time `t`. Likelihoods are
/// evaluated before the observation is credited to the count tables.
pub fn update_trust(belief: &TrustBelief, t: f64, label: ActionLabel, raw_a: f64) -> TrustBelief {
    let mut next = belief.clone();
    next.observe(t, label, raw_a);
    next
}

/// Share of conservative drivers, used as the prior trust of a population.
pub fn estimate_prior(conservative: &[bool]) -> Result<f64, TrustError> {
    if conservative.len() < 2 {
        return Err(TrustError::InsufficientDrivers(conservative.len()));
    }
    let n = conservative.iter().filter(|c| **c).count();
    Ok(n as f64 / conservative.len() as f64)
}
