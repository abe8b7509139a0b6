//! Stop-restart control of the mask generator.
//!
//! Masking stops when the target depth jumps while the core is unsure, or when
//! the core's score is very low; it restarts once the score is convincing.
//! Stop rules are checked before the restart rule.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyParams {
    /// Score below which a depth jump stops masking.
    pub mu1: f64,
    /// Score below which masking always stops.
    pub mu2: f64,
    /// Score above which masking restarts.
    pub mu3: f64,
    /// Depth-jump tolerance as a fraction of the frame's maximum depth.
    pub gamma_frac: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            mu1: 0.65,
            mu2: 0.55,
            mu3: 0.92,
            gamma_frac: 0.01,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(in_unit(self.mu1) && in_unit(self.mu2) && in_unit(self.mu3)) {
            return Err(Error::Config("mu1, mu2, mu3 must lie in (0, 1)".into()));
        }
        if !(self.mu2 < self.mu1 && self.mu1 < self.mu3) {
            return Err(Error::Config("thresholds must satisfy mu2 < mu1 < mu3".into()));
        }
        if !(self.gamma_frac > 0.0) {
            return Err(Error::Config("gamma_frac must be positive".into()));
        }
        Ok(())
    }

    pub fn gamma(&self, frame_max_depth: f64) -> f64 {
        self.gamma_frac * frame_max_depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MgState {
    Active,
    Stopped,
}

impl MgState {
    pub fn as_str(&self) -> &'static str {
        match self {
            MgState::Active => "active",
            MgState::Stopped => "stopped",
        }
    }
}

impl std::str::FromStr for MgState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "active" => Ok(MgState::Active),
            "stopped" => Ok(MgState::Stopped),
            other => Err(Error::Parse(format!("unknown mask state `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transition {
    DepthJumpLowScore,
    VeryLowScore,
    Restart,
    Unchanged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MgStatus {
    pub state: MgState,
    pub reason: Transition,
}

impl MgStatus {
    pub fn active() -> Self {
        MgStatus {
            state: MgState::Active,
            reason: Transition::Unchanged,
        }
    }

    pub fn is_active(&self) -> bool {
        self.state == MgState::Active
    }
}

/// One step of the stop-restart machine.
pub fn step(
    status: MgStatus,
    score: f64,
    dt_now: f64,
    dt_prev: f64,
    frame_max_depth: f64,
    params: &StrategyParams,
) -> Result<MgStatus> {
    if !(dt_prev > 0.0) {
        return Err(Error::invalid("previous target depth must be positive"));
    }
    let gamma = params.gamma(frame_max_depth);
    let next = if (dt_now - dt_prev).abs() > gamma && score < params.mu1 {
        MgStatus {
            state: MgState::Stopped,
            reason: Transition::DepthJumpLowScore,
        }
    } else if score < params.mu2 {
        MgStatus {
            state: MgState::Stopped,
            reason: Transition::VeryLowScore,
        }
    } else if score > params.mu3 {
        MgStatus {
            state: MgState::Active,
            reason: Transition::Restart,
        }
    } else {
        MgStatus {
            state: status.state,
            reason: Transition::Unchanged,
        }
    };
    Ok(next)
}
