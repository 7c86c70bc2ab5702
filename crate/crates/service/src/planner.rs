//! Energy-minimal actuator planning over a discrete level grid.

use serde::{Deserialize, Serialize};

pub const NECK_COOLER: &str = "NECK_COOLER";
pub const FAN: &str = "FAN";
pub const CHAIR: &str = "CHAIR";

/// Largest level grid searched exhaustively.
pub const MAX_COMBINATIONS: usize = 1 << 20;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("actuator {name}: {reason}")]
    InvalidActuator { name: String, reason: String },
    #[error("catalog has {0} level combinations; at most {MAX_COMBINATIONS} are searched")]
    TooLarge(usize),
    #[error("comfort values must be finite")]
    NonFinite,
}

/// Index 0 of `power_w` and `comfort_delta` is the off setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actuator {
    pub name: String,
    pub power_w: Vec<f64>,
    pub comfort_delta: Vec<f64>,
}

impl Actuator {
    pub fn levels(&self) -> usize {
        self.power_w.len()
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |reason: &str| PlanError::InvalidActuator {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.power_w.is_empty() || self.power_w.len() != self.comfort_delta.len() {
            return Err(bad("power_w and comfort_delta need one entry per level"));
        }
        if self.power_w[0] != 0.0 || self.comfort_delta[0] != 0.0 {
            return Err(bad("level 0 must draw no power and change nothing"));
        }
        if self.power_w.iter().chain(&self.comfort_delta).any(|v| !v.is_finite()) {
            return Err(bad("values must be finite"));
        }
        for w in self.power_w.windows(2) {
            if w[1] < w[0] {
                return Err(bad("power must not decrease with level"));
            }
        }
        for w in self.comfort_delta.windows(2) {
            if w[1].abs() < w[0].abs() {
                return Err(bad("|comfort_delta| must not decrease with level"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ActuatorCatalog {
    pub actuators: Vec<Actuator>,
}

impl ActuatorCatalog {
    pub fn validate(&self) -> Result<usize, PlanError> {
        let mut combos: usize = 1;
        for a in &self.actuators {
            a.validate()?;
            combos = combos.saturating_mul(a.levels());
        }
        if combos > MAX_COMBINATIONS {
            return Err(PlanError::TooLarge(combos));
        }
        Ok(combos)
    }

    /// Neck cooler, fan and chair with illustrative settings.
    pub fn default_office() -> Self {
        Self {
            actuators: vec![
                Actuator {
                    name: NECK_COOLER.into(),
                    power_w: vec![0.0, 4.0, 8.0],
                    comfort_delta: vec![0.0, 1.0, 1.8],
                },
                Actuator {
                    name: FAN.into(),
                    power_w: vec![0.0, 15.0, 30.0, 45.0],
                    comfort_delta: vec![0.0, 0.6, 1.1, 1.5],
                },
                Actuator {
                    name: CHAIR.into(),
                    power_w: vec![0.0, 40.0, 80.0],
                    comfort_delta: vec![0.0, 0.8, 1.4],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSetting {
    pub name: String,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorPlan {
    pub settings: Vec<ActuatorSetting>,
    pub total_power_w: f64,
    pub predicted_comfort_after: f64,
    pub target_unmet: bool,
}

pub fn clamp_comfort(v: f64) -> f64 {
    v.clamp(1.0, 10.0)
}

struct Candidate {
    levels: Vec<usize>,
    power: f64,
    comfort: f64,
    active: usize,
}

/// `(power, active count, levels)` ordering used among feasible plans.
fn cheaper(a: &Candidate, b: &Candidate) -> bool {
    (a.power, a.active)
        .partial_cmp(&(b.power, b.active))
        .map(|o| o.then_with(|| a.levels.cmp(&b.levels)).is_lt())
        .unwrap_or(false)
}

/// Exhaustive search for the cheapest setting whose clamped predicted
/// comfort reaches `target`. When no setting reaches it, the plan with the
/// highest predicted comfort is returned (cheapest among equals) and
/// flagged `target_unmet`.
pub fn plan_actuation(current: f64, target: f64, catalog: &ActuatorCatalog) -> Result<ActuatorPlan, PlanError> {
    if !current.is_finite() || !target.is_finite() {
        return Err(PlanError::NonFinite);
    }
    catalog.validate()?;
    let n = catalog.actuators.len();
    let mut levels = vec![0usize; n];
    let mut best_feasible: Option<Candidate> = None;
    let mut best_effort: Option<Candidate> = None;
    loop {
        let mut power = 0.0;
        let mut delta = 0.0;
        for (a, &l) in catalog.actuators.iter().zip(&levels) {
            power += a.power_w[l];
            delta += a.comfort_delta[l];
        }
        let cand = Candidate {
            levels: levels.clone(),
            power,
            comfort: clamp_comfort(current + delta),
            active: levels.iter().filter(|&&l| l > 0).count(),
        };
        if cand.comfort >= target {
            if best_feasible.as_ref().is_none_or(|b| cheaper(&cand, b)) {
                best_feasible = Some(cand);
            }
        } else if best_feasible.is_none()
            && best_effort
                .as_ref()
                .is_none_or(|b| cand.comfort > b.comfort || (cand.comfort == b.comfort && cheaper(&cand, b)))
        {
            best_effort = Some(cand);
        }
        // mixed-radix increment, last actuator fastest
        let mut i = n;
        loop {
            if i == 0 {
                let (chosen, unmet) = match best_feasible {
                    Some(c) => (c, false),
                    None => (best_effort.expect("at least one combination"), true),
                };
                return Ok(ActuatorPlan {
                    settings: catalog
                        .actuators
                        .iter()
                        .zip(&chosen.levels)
                        .map(|(a, &level)| ActuatorSetting {
                            name: a.name.clone(),
                            level,
                        })
                        .collect(),
                    total_power_w: chosen.power,
                    predicted_comfort_after: chosen.comfort,
                    target_unmet: unmet,
                });
            }
            i -= 1;
            levels[i] += 1;
            if levels[i] < catalog.actuators[i].levels() {
                break;
            }
            levels[i] = 0;
        }
    }
}
