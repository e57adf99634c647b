//! Battery-drop power estimation and the per-device energy loan.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::RawSample;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("interval length must be > 0, got {0} s")]
    NonPositiveDuration(f64),
    #[error("energy must be >= 0, got {0} J")]
    NegativeEnergy(f64),
    #[error("settlement day {day} is not after last settled day {last}")]
    StaleSettlement { day: i64, last: i64 },
}

/// A stretch of discharge covering one percent of battery charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryInterval {
    pub start_seconds: f64,
    pub v_start: f64,
    pub v_end: f64,
    pub delta_t: f64,
    pub capacity_coulombs: f64,
}

impl BatteryInterval {
    pub fn end_seconds(&self) -> f64 {
        self.start_seconds + self.delta_t
    }
}

/// Mean voltage times the charge in one percent, over the interval length.
pub fn average_power(interval: &BatteryInterval) -> Result<f64, EnergyError> {
    if !(interval.delta_t > 0.0) {
        return Err(EnergyError::NonPositiveDuration(interval.delta_t));
    }
    Ok((interval.v_start + interval.v_end) / 2.0 * (interval.capacity_coulombs / 100.0)
        / interval.delta_t)
}

/// Sums `power * overlap` over every interval that intersects `window`.
pub fn interval_energy_sum(
    intervals: &[BatteryInterval],
    window: (f64, f64),
) -> Result<f64, EnergyError> {
    let (lo, hi) = window;
    let mut total = 0.0;
    for iv in intervals {
        let overlap = iv.end_seconds().min(hi) - iv.start_seconds.max(lo);
        if overlap > 0.0 {
            total += average_power(iv)? * overlap;
        }
    }
    Ok(total)
}

/// Open-circuit voltage at a charge level: linear, ±10% around nominal with
/// nominal at 50%.
pub fn open_circuit_voltage(nominal_voltage: f64, level_percent: f64) -> f64 {
    nominal_voltage * (0.9 + 0.002 * level_percent)
}

/// Turns every level drop between consecutive samples into an interval.
///
/// Resampled levels drop by fractions of a percent per step, so each interval
/// carries the charge of its actual drop: `capacity * drop` coulombs in the
/// one-percent formula.
pub fn discharge_intervals(
    samples: &[RawSample],
    capacity_coulombs: f64,
    nominal_voltage: f64,
) -> Vec<BatteryInterval> {
    samples
        .windows(2)
        .filter_map(|w| {
            let drop = w[0].battery_level - w[1].battery_level;
            let dt = (w[1].timestamp - w[0].timestamp) as f64;
            (drop > 0.0 && dt > 0.0).then(|| BatteryInterval {
                start_seconds: w[0].timestamp as f64,
                v_start: open_circuit_voltage(nominal_voltage, w[0].battery_level),
                v_end: open_circuit_voltage(nominal_voltage, w[1].battery_level),
                delta_t: dt,
                capacity_coulombs: capacity_coulombs * drop,
            })
        })
        .collect()
}

pub const DEFAULT_CRITICAL_LEVEL_PERCENT: f64 = 20.0;

/// Energy spent on training that has not yet been repaid by the charger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub loan_joules: f64,
    pub daily_budget_joules: f64,
    pub critical_level_percent: f64,
    pub nominal_voltage: f64,
    pub capacity_coulombs: f64,
    pub last_settlement_day: i64,
}

impl EnergyLedger {
    pub fn new(
        daily_budget_joules: f64,
        critical_level_percent: f64,
        nominal_voltage: f64,
        capacity_coulombs: f64,
        start_day: i64,
    ) -> Self {
        Self {
            loan_joules: 0.0,
            daily_budget_joules,
            critical_level_percent,
            nominal_voltage,
            capacity_coulombs,
            last_settlement_day: start_day,
        }
    }

    pub fn joules_per_percent(&self) -> f64 {
        self.capacity_coulombs * self.nominal_voltage / 100.0
    }

    pub fn loan_percent(&self) -> f64 {
        self.loan_joules / self.joules_per_percent()
    }

    pub fn accrue_loan(&mut self, training_energy: f64) -> Result<(), EnergyError> {
        if !(training_energy >= 0.0) {
            return Err(EnergyError::NegativeEnergy(training_energy));
        }
        self.loan_joules += training_energy;
        Ok(())
    }

    /// Repays one daily budget for every day since the last settlement.
    pub fn settle_day(&mut self, day_index: i64) -> Result<(), EnergyError> {
        if day_index <= self.last_settlement_day {
            return Err(EnergyError::StaleSettlement {
                day: day_index,
                last: self.last_settlement_day,
            });
        }
        for _ in self.last_settlement_day..day_index {
            self.loan_joules = (self.loan_joules - self.daily_budget_joules).max(0.0);
        }
        self.last_settlement_day = day_index;
        Ok(())
    }

    /// Whether the trace level, with the loan taken off it, stays above critical.
    pub fn is_available(&self, trace_level: f64) -> bool {
        trace_level - self.loan_percent() > self.critical_level_percent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(start: f64, dt: f64, watts: f64) -> BatteryInterval {
        // capacity chosen so that average_power == watts at 1 V
        BatteryInterval {
            start_seconds: start,
            v_start: 1.0,
            v_end: 1.0,
            delta_t: dt,
            capacity_coulombs: watts * dt * 100.0,
        }
    }

    #[test]
    fn average_power_by_hand() {
        let p = average_power(&BatteryInterval {
            start_seconds: 0.0,
            v_start: 4.0,
            v_end: 3.9,
            delta_t: 426.6,
            capacity_coulombs: 10800.0,
        })
        .unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        let p = average_power(&BatteryInterval {
            start_seconds: 0.0,
            v_start: 4.0,
            v_end: 4.0,
            delta_t: 4.0,
            capacity_coulombs: 100.0,
        })
        .unwrap();
        assert_eq!(p, 1.0);
        let bad = BatteryInterval {
            delta_t: 0.0,
            ..iv(0.0, 1.0, 1.0)
        };
        assert_eq!(average_power(&bad), Err(EnergyError::NonPositiveDuration(0.0)));
    }

    #[test]
    fn doubling_duration_halves_power() {
        let a = iv(0.0, 10.0, 2.0);
        let b = BatteryInterval { delta_t: 20.0, ..a };
        assert_eq!(average_power(&a).unwrap(), 2.0 * average_power(&b).unwrap());
    }

    #[test]
    fn piecewise_sums() {
        let e = interval_energy_sum(&[iv(10.0, 50.0, 1.0)], (0.0, 100.0)).unwrap();
        assert!((e - 50.0).abs() < 1e-9);
        let e = interval_energy_sum(&[iv(0.0, 400.0, 1.0)], (0.0, 200.0)).unwrap();
        assert!((e - 200.0).abs() < 1e-9);
        let e = interval_energy_sum(&[iv(0.0, 100.0, 1.0), iv(100.0, 100.0, 2.0)], (0.0, 200.0))
            .unwrap();
        assert!((e - 300.0).abs() < 1e-9);
        let e = interval_energy_sum(&[iv(0.0, 100.0, 1.0)], (200.0, 300.0)).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn loan_accrual_and_settlement() {
        let mut l = EnergyLedger::new(500.0, 20.0, 3.85, 10800.0, 0);
        l.accrue_loan(600.0).unwrap();
        assert_eq!(l.loan_joules, 600.0);
        l.accrue_loan(0.0).unwrap();
        assert_eq!(l.loan_joules, 600.0);
        assert!(l.accrue_loan(-1.0).is_err());

        let mut one = l.clone();
        one.settle_day(1).unwrap();
        assert_eq!(one.loan_joules, 100.0);
        one.settle_day(2).unwrap();
        assert_eq!(one.loan_joules, 0.0);

        let mut two = l.clone();
        two.settle_day(2).unwrap();
        assert_eq!(two.loan_joules, 0.0);
        assert!(two.settle_day(2).is_err());

        let mut steps = EnergyLedger::new(500.0, 20.0, 3.85, 10800.0, 0);
        for _ in 0..300 {
            steps.accrue_loan(2.0).unwrap();
        }
        assert!((steps.loan_joules - 600.0).abs() < 1e-9);
    }

    #[test]
    fn availability() {
        let mut l = EnergyLedger::new(0.0, 20.0, 3.85, 10800.0, 0);
        assert!(l.is_available(80.0));
        l.accrue_loan(831.6).unwrap();
        assert!((l.loan_percent() - 2.0).abs() < 1e-9);
        assert!(!l.is_available(21.0));
        assert!(l.is_available(22.5));
    }

    #[test]
    fn discharge_intervals_carry_fractional_charge() {
        let samples = [RawSample::new(0, 50.5), RawSample::new(3600, 49.5)];
        let ivs = discharge_intervals(&samples, 10800.0, 3.95);
        assert_eq!(ivs.len(), 1);
        let e = interval_energy_sum(&ivs, (0.0, 3600.0)).unwrap();
        assert!((e - 426.6).abs() < 1e-9, "{e}");
        let charging = [RawSample::new(0, 50.0), RawSample::new(600, 51.0)];
        assert!(discharge_intervals(&charging, 10800.0, 3.85).is_empty());
    }
}
