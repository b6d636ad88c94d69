//! eHMI disclosure policy: truthful signalling, benevolent deception and the
//! trust-protection rule that ends a deception once the follower's trust has
//! fallen too far.

use crate::game::{predicted_yield_mass, Equilibrium, HavAction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Honest,
    Deceptive,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Honest => "honest",
            Policy::Deceptive => "deceptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Stop once trust has lost more than `1 - value` of its level at the
    /// start of the deception.
    #[default]
    RelativeLoss,
    /// Stop once trust drops below `value`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protection {
    pub mode: ThresholdMode,
    pub value: f64,
}

impl Default for Protection {
    fn default() -> Self {
        Self {
            mode: ThresholdMode::RelativeLoss,
            value: 0.5,
        }
    }
}

impl Protection {
    pub fn threshold(&self, tau_ref: f64) -> f64 {
        match self.mode {
            ThresholdMode::RelativeLoss => self.value * tau_ref,
            ThresholdMode::Absolute => self.value,
        }
    }

    pub fn check(&self, tau_now: f64, tau_ref: f64) -> ProtectionDecision {
        check_trust_protection(tau_now, tau_ref, self.mode, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtectionDecision {
    Continue,
    Terminate,
}

pub fn check_trust_protection(tau_now: f64, tau_ref: f64, mode: ThresholdMode, value: f64) -> ProtectionDecision {
    let limit = match mode {
        ThresholdMode::RelativeLoss => value * tau_ref,
        ThresholdMode::Absolute => value,
    };
    if tau_now < limit {
        ProtectionDecision::Terminate
    } else {
        ProtectionDecision::Continue
    }
}

/// What happened to the disclosure at one decision step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisclosureEvent {
    Truthful,
    DeceptionStarted,
    DeceptionContinued,
    /// Deception no longer predicted to work; back to the truth voluntarily.
    DeceptionEnded,
    /// Trust fell through the protection threshold mid-deception.
    ProtectiveTermination,
    /// Deception would have helped but trust was already below threshold.
    Refused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisclosureState {
    pub intended: HavAction,
    pub disclosed: HavAction,
    pub deception_active: bool,
    /// Trust when the episode's first deception began.
    pub tau_at_start: Option<f64>,
    pub policy: Policy,
    pub protection: Protection,
    /// Set by a protective termination; no deception afterwards.
    pub locked_out: bool,
    pub last_event: DisclosureEvent,
}

impl DisclosureState {
    pub fn new(policy: Policy, protection: Protection) -> Self {
        Self {
            intended: HavAction::LaneChange,
            disclosed: HavAction::LaneChange,
            deception_active: false,
            tau_at_start: None,
            policy,
            protection,
            locked_out: false,
            last_event: DisclosureEvent::Truthful,
        }
    }

    fn truthful(mut self, intended: HavAction, event: DisclosureEvent) -> Self {
        self.intended = intended;
        self.disclosed = intended;
        self.deception_active = false;
        self.last_event = event;
        self
    }

    /// Disclose `intended` without considering deception, e.g. while the
    /// lateral maneuver is under way.
    pub fn reveal(&self, intended: HavAction) -> Self {
        let event = if self.deception_active {
            DisclosureEvent::DeceptionEnded
        } else {
            DisclosureEvent::Truthful
        };
        self.truthful(intended, event)
    }
}

/// Whether misreporting the intent is predicted to make the follower yield:
/// at least half of the belief mass sits on types whose equilibrium reply to
/// the opposite disclosure is to decelerate.
pub fn deception_predicted_successful(eq: &Equilibrium, intended: HavAction, tau: f64) -> bool {
    predicted_yield_mass(eq, intended.other(), tau) >= 0.5
}

/// Picks the disclosure for this step. `eq` supplies the intended strategy
/// and the follower replies to either disclosure.
pub fn choose_disclosure(eq: &Equilibrium, tau: f64, state: &DisclosureState) -> DisclosureState {
    let intended = eq.hav_choice;
    if state.policy == Policy::Honest {
        return state.truthful(intended, DisclosureEvent::Truthful);
    }
    if state.locked_out {
        return state.truthful(intended, DisclosureEvent::Truthful);
    }
    if state.deception_active {
        let tau_ref = state.tau_at_start.unwrap_or(tau);
        if state.protection.check(tau, tau_ref) == ProtectionDecision::Terminate {
            return on_termination(state, intended);
        }
    }
    if !deception_predicted_successful(eq, intended, tau) {
        return state.reveal(intended);
    }
    let tau_ref = state.tau_at_start.unwrap_or(tau);
    if state.protection.check(tau, tau_ref) == ProtectionDecision::Terminate {
        return state.truthful(intended, DisclosureEvent::Refused);
    }
    let mut next = *state;
    next.intended = intended;
    next.disclosed = intended.other();
    next.tau_at_start = Some(tau_ref);
    next.last_event = if state.deception_active {
        DisclosureEvent::DeceptionContinued
    } else {
        DisclosureEvent::DeceptionStarted
    };
    next.deception_active = true;
    next
}

/// Protective stop: tell the truth from now on. A no-op when not deceiving.
pub fn on_termination(state: &DisclosureState, intended: HavAction) -> DisclosureState {
    if !state.deception_active {
        return *state;
    }
    let mut next = state.truthful(intended, DisclosureEvent::ProtectiveTermination);
    next.locked_out = true;
    next
}
