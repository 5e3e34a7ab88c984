//! PHEV fleet model: post-trip SOC, charge-energy requirements, plug-in
//! availability windows and the aggregate per-lot flexibility envelope
//! consumed by the scheduling stage.
//!
//! All SOC values are fractions in [0, 1]; battery capacity is
//! `beta * aer` kWh.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FleetKind {
    /// Private vehicle (PEV), plugged during working hours.
    Private,
    /// Official vehicle (OEV), plugged overnight after work.
    Official,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetClass {
    pub name: String,
    pub kind: FleetKind,
    pub count: usize,
    /// Electric-mode distance fraction.
    pub psi: f64,
    /// Daily driven distance, miles.
    pub phi: f64,
    /// All-electric range, miles.
    pub aer: f64,
    /// Energy consumption, kWh per mile.
    pub beta: f64,
    /// Charger efficiency.
    pub xi: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub departure_soc_target: f64,
    /// First plugged hour of day, 0..23.
    pub window_start: usize,
    /// Last plugged hour of day, 0..23; may wrap past midnight.
    pub window_end: usize,
    /// Daily one-way energy-consumption parameter (validated, not modeled).
    pub consumption_param: f64,
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("class {0}: all-electric range must be positive")]
    NonPositiveAer(String),
    #[error("class {0}: charger efficiency must be in (0, 1]")]
    ZeroEfficiency(String),
    #[error("class {0}: plug-in window is empty")]
    EmptyWindow(String),
    #[error("class {0}: {1}")]
    Invalid(String, String),
    #[error("horizon {0} is not a multiple of 24")]
    BadHorizon(usize),
}

impl FleetClass {
    pub fn validate(&self) -> Result<(), FleetError> {
        let bad = |msg: &str| Err(FleetError::Invalid(self.name.clone(), msg.into()));
        if self.aer <= 0.0 {
            return Err(FleetError::NonPositiveAer(self.name.clone()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(FleetError::ZeroEfficiency(self.name.clone()));
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) || !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return bad("charge/discharge efficiency must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.psi) || self.phi < 0.0 || self.beta < 0.0 {
            return bad("psi must be in [0,1], phi and beta nonnegative");
        }
        if !(self.soc_min <= self.departure_soc_target
            && self.departure_soc_target <= self.soc_max
            && self.soc_max <= 1.0
            && self.soc_min >= 0.0)
        {
            return bad("need soc_min <= departure target <= soc_max <= 1");
        }
        match self.kind {
            FleetKind::Private => {
                if !(0.0..=0.25).contains(&self.consumption_param) {
                    return bad("PEV consumption parameter must be in [0, 0.25]");
                }
                if self.departure_soc_target < 0.45 {
                    return bad("PEV departure SOC target must be >= 0.45");
                }
            }
            FleetKind::Official => {
                if !(0.0..=0.4).contains(&self.consumption_param) {
                    return bad("OEV consumption parameter must be in [0, 0.4]");
                }
                if self.departure_soc_target < 0.98 {
                    return bad("OEV departure SOC target must be >= 0.98");
                }
            }
        }
        if self.window_start >= HOURS_PER_DAY || self.window_end >= HOURS_PER_DAY {
            return Err(FleetError::EmptyWindow(self.name.clone()));
        }
        Ok(())
    }

    /// Hours of day in the plug-in window, in order; wraps past midnight.
    pub fn window_hours(&self) -> Vec<usize> {
        let mut hours = Vec::new();
        let mut h = self.window_start;
        loop {
            hours.push(h);
            if h == self.window_end {
                break;
            }
            h = (h + 1) % HOURS_PER_DAY;
            if hours.len() > HOURS_PER_DAY {
                break;
            }
        }
        hours
    }

    pub fn in_window(&self, hour: usize) -> bool {
        let h = hour % HOURS_PER_DAY;
        if self.window_start <= self.window_end {
            (self.window_start..=self.window_end).contains(&h)
        } else {
            h >= self.window_start || h <= self.window_end
        }
    }

    pub fn battery_capacity_kwh(&self) -> f64 {
        battery_capacity(self.beta, self.aer)
    }

    pub fn arrival_soc(&self) -> f64 {
        soc_after_trip(self.psi, self.phi, self.aer).expect("validated class")
    }
}

/// SOC fraction remaining after the daily trip: `1 - psi*phi/aer`, clamped
/// to zero once the electric distance reaches the all-electric range.
pub fn soc_after_trip(psi: f64, phi: f64, aer: f64) -> Result<f64, FleetError> {
    if aer <= 0.0 {
        return Err(FleetError::NonPositiveAer(String::new()));
    }
    let electric = psi * phi;
    if electric >= aer {
        Ok(0.0)
    } else {
        Ok(1.0 - electric / aer)
    }
}

/// Usable battery capacity, kWh.
pub fn battery_capacity(beta: f64, aer: f64) -> f64 {
    beta * aer
}

/// Energy needed to fill the battery from `soc` (fraction), kWh.
pub fn charge_energy(soc: f64, capacity: f64) -> f64 {
    (1.0 - soc) * capacity
}

/// Grid-side energy for a battery-side charge `e_c` through a charger of
/// efficiency `xi`.
pub fn grid_energy(e_c: f64, xi: f64) -> Result<f64, FleetError> {
    if xi <= 0.0 {
        return Err(FleetError::ZeroEfficiency(String::new()));
    }
    Ok(e_c / xi)
}

/// Plugged-in vehicle counts per lot, hour and class over the horizon.
#[derive(Debug, Clone)]
pub struct AvailabilityProfile {
    /// counts[lot][hour][class], vehicles (fractional after lot splitting).
    pub counts: Vec<Vec<Vec<f64>>>,
    pub horizon: usize,
}

/// Builds the availability profile. `lot_shares[class][lot]` is the fraction
/// of each class parked at each lot (rows must sum to 1 for served classes);
/// the window repeats daily.
pub fn availability(
    classes: &[FleetClass],
    lot_shares: &[Vec<f64>],
    num_lots: usize,
    horizon: usize,
) -> Result<AvailabilityProfile, FleetError> {
    if horizon == 0 || horizon % HOURS_PER_DAY != 0 {
        return Err(FleetError::BadHorizon(horizon));
    }
    for c in classes {
        if c.window_hours().is_empty() {
            return Err(FleetError::EmptyWindow(c.name.clone()));
        }
    }
    let mut counts = vec![vec![vec![0.0; classes.len()]; horizon]; num_lots];
    for (ci, class) in classes.iter().enumerate() {
        let shares = lot_shares
            .get(ci)
            .ok_or_else(|| FleetError::Invalid(class.name.clone(), "missing lot shares".into()))?;
        for (lot, &share) in shares.iter().enumerate().take(num_lots) {
            let n = class.count as f64 * share;
            if n == 0.0 {
                continue;
            }
            for h in 0..horizon {
                if class.in_window(h) {
                    counts[lot][h][ci] = n;
                }
            }
        }
    }
    Ok(AvailabilityProfile { counts, horizon })
}

/// Aggregate flexibility envelope of one lot, per hour of day.
#[derive(Debug, Clone)]
pub struct LotEnvelope {
    pub max_charge_kw: Vec<f64>,
    pub max_discharge_kw: Vec<f64>,
    /// Plugged aggregate battery capacity, kWh.
    pub capacity_kwh: Vec<f64>,
    pub soc_min_kwh: Vec<f64>,
    pub soc_max_kwh: Vec<f64>,
    /// Energy brought in by vehicles plugging in at each hour, kWh.
    pub arrival_kwh: Vec<f64>,
    /// Energy leaving with departing vehicles at each hour (at target SOC), kWh.
    pub departure_kwh: Vec<f64>,
    /// Minimum SOC required at each hour to cover imminent departures, kWh.
    pub departure_floor_kwh: Vec<f64>,
    /// Mean charge/discharge efficiency of the plugged mix, per hour.
    pub eta_c: Vec<f64>,
    pub eta_d: Vec<f64>,
}

/// Aggregates one lot's availability into an hourly envelope.
///
/// Charge and discharge limits are `min(lot_size, plugged * station_rate)`.
/// Arrivals inject `arrival_soc * capacity`; departures remove exactly the
/// target energy, and the hour before a departure carries a floor of the
/// target energy plus the minimum SOC of the vehicles that stay.
pub fn aggregate_envelope(
    profile: &AvailabilityProfile,
    lot: usize,
    classes: &[FleetClass],
    station_rate_kw: f64,
    lot_size_kw: f64,
) -> LotEnvelope {
    assert!(station_rate_kw > 0.0 && lot_size_kw > 0.0);
    let h24 = profile.horizon;
    let counts = &profile.counts[lot];
    let mut env = LotEnvelope {
        max_charge_kw: vec![0.0; h24],
        max_discharge_kw: vec![0.0; h24],
        capacity_kwh: vec![0.0; h24],
        soc_min_kwh: vec![0.0; h24],
        soc_max_kwh: vec![0.0; h24],
        arrival_kwh: vec![0.0; h24],
        departure_kwh: vec![0.0; h24],
        departure_floor_kwh: vec![0.0; h24],
        eta_c: vec![1.0; h24],
        eta_d: vec![1.0; h24],
    };
    for h in 0..h24 {
        let mut plugged = 0.0;
        let mut eta_c_num = 0.0;
        let mut eta_d_num = 0.0;
        for (ci, class) in classes.iter().enumerate() {
            let n = counts[h][ci];
            if n == 0.0 {
                continue;
            }
            let cap = class.battery_capacity_kwh();
            plugged += n;
            env.capacity_kwh[h] += n * cap;
            env.soc_min_kwh[h] += n * cap * class.soc_min;
            env.soc_max_kwh[h] += n * cap * class.soc_max;
            eta_c_num += n * class.eta_c;
            eta_d_num += n * class.eta_d;

            let prev = (h + h24 - 1) % h24;
            let next = (h + 1) % h24;
            if counts[prev][ci] == 0.0 {
                // Window start: vehicles arrive with their post-trip SOC.
                env.arrival_kwh[h] += n * cap * class.arrival_soc();
            }
            if counts[next][ci] == 0.0 {
                // Last plugged hour: departure target must be met now.
                env.departure_floor_kwh[h] += n * cap * class.departure_soc_target;
                env.departure_kwh[next] += n * cap * class.departure_soc_target;
            }
        }
        env.max_charge_kw[h] = lot_size_kw.min(plugged * station_rate_kw);
        env.max_discharge_kw[h] = lot_size_kw.min(plugged * station_rate_kw);
        if plugged > 0.0 {
            env.eta_c[h] = eta_c_num / plugged;
            env.eta_d[h] = eta_d_num / plugged;
        }
    }
    // Floors also cover the minimum SOC of vehicles remaining after departure.
    for h in 0..h24 {
        if env.departure_floor_kwh[h] > 0.0 {
            let next = (h + 1) % h24;
            env.departure_floor_kwh[h] += env.soc_min_kwh[next];
            env.departure_floor_kwh[h] = env.departure_floor_kwh[h].min(env.soc_max_kwh[h]);
        }
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pev(name: &str, count: usize) -> FleetClass {
        FleetClass {
            name: name.into(),
            kind: FleetKind::Private,
            count,
            psi: 0.5,
            phi: 40.0,
            aer: 40.0,
            beta: 0.3,
            xi: 0.9,
            eta_c: 0.95,
            eta_d: 0.95,
            soc_min: 0.1,
            soc_max: 1.0,
            departure_soc_target: 0.45,
            window_start: 8,
            window_end: 15,
            consumption_param: 0.2,
        }
    }

    fn oev(name: &str, count: usize) -> FleetClass {
        FleetClass {
            kind: FleetKind::Official,
            departure_soc_target: 0.98,
            window_start: 16,
            window_end: 6,
            consumption_param: 0.3,
            ..pev(name, count)
        }
    }

    #[test]
    fn soc_after_trip_branches() {
        assert_eq!(soc_after_trip(0.0, 100.0, 40.0).unwrap(), 1.0);
        assert_eq!(soc_after_trip(1.0, 40.0, 40.0).unwrap(), 0.0);
        assert_eq!(soc_after_trip(1.0, 400.0, 40.0).unwrap(), 0.0);
        assert!((soc_after_trip(0.5, 40.0, 40.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(soc_after_trip(0.5, 40.0, 0.0).is_err());
    }

    #[test]
    fn energy_formulas() {
        assert_eq!(battery_capacity(0.0, 40.0), 0.0);
        assert!((battery_capacity(0.3, 40.0) - 12.0).abs() < 1e-15);
        assert!((battery_capacity(0.25, 48.0) - 12.0).abs() < 1e-15);
        assert_eq!(charge_energy(1.0, 12.0), 0.0);
        assert_eq!(charge_energy(0.0, 12.0), 12.0);
        assert!((charge_energy(0.5, 12.0) - 6.0).abs() < 1e-15);
        assert_eq!(grid_energy(9.0, 1.0).unwrap(), 9.0);
        assert!((grid_energy(9.0, 0.9).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(grid_energy(0.0, 0.9).unwrap(), 0.0);
        assert!(grid_energy(1.0, 0.0).is_err());
    }

    #[test]
    fn wraparound_window_membership() {
        let o = oev("o1", 10);
        assert!(o.in_window(3)); // inside 16:00 -> 7:00
        assert!(o.in_window(16) && o.in_window(6) && o.in_window(23));
        assert!(!o.in_window(12));
        let p = pev("p1", 10);
        assert!(!p.in_window(20));
        assert!(p.in_window(8) && p.in_window(15));
    }

    #[test]
    fn availability_counts() {
        let classes = vec![pev("p1", 30), oev("o1", 10)];
        let shares = vec![vec![1.0], vec![1.0]];
        let prof = availability(&classes, &shares, 1, 24).unwrap();
        assert_eq!(prof.counts[0][20][0], 0.0); // PEV outside 8-15
        assert_eq!(prof.counts[0][3][1], 10.0); // OEV inside the wrap window
        let empty = availability(&[pev("p0", 0)], &[vec![1.0]], 1, 24).unwrap();
        assert!(empty.counts[0].iter().all(|h| h[0] == 0.0));
        assert!(availability(&classes, &shares, 1, 25).is_err());
    }

    #[test]
    fn envelope_limits() {
        let classes = vec![pev("p1", 30)];
        let prof = availability(&classes, &[vec![1.0]], 1, 24).unwrap();
        let env = aggregate_envelope(&prof, 0, &classes, 11.0, 250.0);
        // 30 plugged x 11 kW = 330, lot-limited to 250.
        assert_eq!(env.max_charge_kw[10], 250.0);
        assert_eq!(env.max_charge_kw[20], 0.0);
        let classes10 = vec![pev("p1", 10)];
        let prof10 = availability(&classes10, &[vec![1.0]], 1, 24).unwrap();
        let env10 = aggregate_envelope(&prof10, 0, &classes10, 11.0, 250.0);
        assert_eq!(env10.max_charge_kw[10], 110.0); // vehicle-limited
    }

    #[test]
    fn envelope_arrivals_and_floor() {
        let classes = vec![pev("p1", 10)];
        let prof = availability(&classes, &[vec![1.0]], 1, 24).unwrap();
        let env = aggregate_envelope(&prof, 0, &classes, 11.0, 250.0);
        // Arrival at hour 8 with SOC 0.5 x 12 kWh x 10 vehicles.
        assert!((env.arrival_kwh[8] - 60.0).abs() < 1e-9);
        // Floor at the last window hour covers the 45% departure target.
        assert!(env.departure_floor_kwh[15] >= 0.45 * 12.0 * 10.0);
        assert!((env.departure_kwh[16] - 0.45 * 12.0 * 10.0).abs() < 1e-9);
    }

    #[test]
    fn class_validation_rules() {
        let mut c = pev("p1", 10);
        c.validate().unwrap();
        c.consumption_param = 0.3; // above the PEV range
        assert!(c.validate().is_err());
        let mut o = oev("o1", 10);
        o.validate().unwrap();
        o.departure_soc_target = 0.9; // OEV must leave at >= 98%
        assert!(o.validate().is_err());
    }
}
