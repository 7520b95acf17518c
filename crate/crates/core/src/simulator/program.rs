//! Ground-truth signal programs.

use serde::{Deserialize, Serialize};

use crate::detection::{TlClass, TlType};
use crate::statefilter::is_legal_transition;

/// Slack for phase boundaries and flashing edges so grid times that land
/// on a boundary up to rounding fall on the later side.
const EDGE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    Steady {
        state: TlClass,
        duration: f64,
    },
    /// Alternates `on_class` with the dark state, starting with the on part.
    Flashing {
        on_class: TlClass,
        frequency_hz: f64,
        duty: f64,
        duration: f64,
    },
}

impl Phase {
    pub fn duration(&self) -> f64 {
        match self {
            Phase::Steady { duration, .. } | Phase::Flashing { duration, .. } => *duration,
        }
    }

    /// The class a labeller assigns to this phase.
    pub fn label(&self) -> TlClass {
        match self {
            Phase::Steady { state, .. } => *state,
            Phase::Flashing { on_class, .. } => *on_class,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightProgram {
    pub light_id: String,
    /// Scenario time at which the first phase starts. Earlier times show
    /// the first phase.
    #[serde(default)]
    pub offset: f64,
    pub phases: Vec<Phase>,
    /// Cycle the phase list; otherwise the last phase holds.
    #[serde(default)]
    pub repeat: bool,
}

/// What a light shows at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrueState {
    /// What the camera sees right now (`4-off` in the dark part of a flash).
    pub displayed: TlClass,
    /// Ground-truth label; flashing is labelled with its on class.
    pub label: TlClass,
    pub flashing: bool,
}

impl LightProgram {
    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(Phase::duration).sum()
    }

    /// State at scenario time `t`, or `None` for an empty program.
    pub fn state_at(&self, t: f64) -> Option<TrueState> {
        let last = self.phases.last()?;
        let cycle = self.cycle_length();
        let mut local = (t - self.offset).max(0.0);
        if self.repeat && cycle > 0.0 {
            local = local.rem_euclid(cycle);
            if local + EDGE_EPS >= cycle {
                local = 0.0;
            }
        }
        let mut start = 0.0;
        let mut current = (last, local - (cycle - last.duration()));
        for phase in &self.phases {
            let end = start + phase.duration();
            if local + EDGE_EPS < end {
                current = (phase, local - start);
                break;
            }
            start = end;
        }
        Some(phase_state(current.0, current.1))
    }
}

fn phase_state(phase: &Phase, into_phase: f64) -> TrueState {
    match *phase {
        Phase::Steady { state, .. } => TrueState {
            displayed: state,
            label: state,
            flashing: false,
        },
        Phase::Flashing {
            on_class,
            frequency_hz,
            duty,
            ..
        } => {
            let cycle_pos = (into_phase.max(0.0) * frequency_hz + EDGE_EPS).fract();
            TrueState {
                displayed: if cycle_pos < duty { on_class } else { TlClass::Off4 },
                label: on_class,
                flashing: true,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProgramViolation {
    /// Index of the offending phase (for transitions, the earlier phase).
    pub index: usize,
    pub message: String,
}

pub const DUTY_MIN: f64 = 0.5;
pub const DUTY_MAX: f64 = 2.0 / 3.0;

/// Checks phase legality for `tl_type`: every class belongs to the type,
/// durations are positive, flashing is a `4-off` alternation with a legal
/// duty cycle, and each consecutive pair (including the wrap-around of a
/// repeating program) is a regulated transition.
pub fn validate_program(program: &LightProgram, tl_type: TlType) -> Vec<ProgramViolation> {
    let mut out = Vec::new();
    let mut flag = |index: usize, message: String| out.push(ProgramViolation { index, message });
    for (i, phase) in program.phases.iter().enumerate() {
        if !(phase.duration() > 0.0 && phase.duration().is_finite()) {
            flag(i, format!("duration {} must be positive", phase.duration()));
        }
        if !tl_type.contains(phase.label()) {
            flag(i, format!("{} is not a {} state", phase.label(), tl_type));
        }
        if let Phase::Flashing {
            on_class,
            frequency_hz,
            duty,
            ..
        } = *phase
        {
            if tl_type != TlType::FourArrow || on_class == TlClass::Off4 {
                flag(i, "flashing needs a four_arrow on state".into());
            }
            if !(frequency_hz > 0.0) {
                flag(i, format!("flash frequency {frequency_hz} must be positive"));
            }
            if !(DUTY_MIN..=DUTY_MAX).contains(&duty) {
                flag(i, format!("duty {duty} outside [1/2, 2/3]"));
            }
        }
    }
    let n = program.phases.len();
    let pairs = if program.repeat && n > 1 { n } else { n.saturating_sub(1) };
    for i in 0..pairs {
        let from = program.phases[i].label();
        let to = program.phases[(i + 1) % n].label();
        if tl_type.contains(from) && tl_type.contains(to) && !is_legal_transition(from, to) {
            flag(i, format!("{from} -> {to} is not a regulated transition"));
        }
    }
    out
}
