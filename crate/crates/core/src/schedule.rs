//! Time-of-day clock: peak window, 3b deferral target and the GSNR
//! re-estimation cadence. One tick is one second; tick 0 is midnight of
//! day 0.

use serde::{Deserialize, Serialize};

pub const TICKS_PER_MINUTE: u64 = 60;
pub const TICKS_PER_HOUR: u64 = 3600;
pub const TICKS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub peak_start_hour: f64,
    pub peak_end_hour: f64,
    /// `m`: hours after the peak end at which deferred 3b traffic starts.
    pub deferral_margin_hours: f64,
    pub reestimate_peak_ticks: u64,
    pub reestimate_offpeak_ticks: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            peak_start_hour: 8.0,
            peak_end_hour: 20.0,
            deferral_margin_hours: 2.0,
            reestimate_peak_ticks: 10,
            reestimate_offpeak_ticks: 100,
        }
    }
}

/// Peak window `[p_s, p_e)` and deferral target `p'_e`, all as tick-of-day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakSchedule {
    pub p_s: u64,
    pub p_e: u64,
    pub p_e_prime: u64,
    pub t_p: u64,
    pub t_o: u64,
}

fn hours_to_ticks(h: f64) -> u64 {
    (h * TICKS_PER_HOUR as f64).round() as u64
}

impl PeakSchedule {
    pub fn from_config(c: &ScheduleConfig) -> Result<Self, String> {
        for (name, v) in [
            ("peak_start_hour", c.peak_start_hour),
            ("peak_end_hour", c.peak_end_hour),
            ("deferral_margin_hours", c.deferral_margin_hours),
        ] {
            if !(v >= 0.0 && v <= 24.0) {
                return Err(format!("schedule.{name} must be within [0, 24], got {v}"));
            }
        }
        let s = Self {
            p_s: hours_to_ticks(c.peak_start_hour),
            p_e: hours_to_ticks(c.peak_end_hour),
            p_e_prime: hours_to_ticks(c.peak_end_hour + c.deferral_margin_hours),
            t_p: c.reestimate_peak_ticks,
            t_o: c.reestimate_offpeak_ticks,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.p_s < self.p_e && self.p_e < self.p_e_prime && self.p_e_prime <= TICKS_PER_DAY) {
            return Err(format!(
                "schedule needs 0 <= p_s < p_e < p'_e <= 24h, got p_s={} p_e={} p'_e={}",
                self.p_s, self.p_e, self.p_e_prime
            ));
        }
        if self.t_p == 0 || self.t_p > self.t_o {
            return Err(format!(
                "schedule needs 0 < t_p <= t_o, got t_p={} t_o={}",
                self.t_p, self.t_o
            ));
        }
        Ok(())
    }

    pub fn time_of_day(t: u64) -> u64 {
        t % TICKS_PER_DAY
    }

    pub fn day_start(t: u64) -> u64 {
        t - t % TICKS_PER_DAY
    }

    pub fn is_peak(&self, t: u64) -> bool {
        let tod = Self::time_of_day(t);
        self.p_s <= tod && tod < self.p_e
    }

    pub fn is_peak_at(&self, t: f64) -> bool {
        let tod = t.rem_euclid(TICKS_PER_DAY as f64);
        self.p_s as f64 <= tod && tod < self.p_e as f64
    }

    /// First peak/off-peak boundary strictly after `t`.
    pub fn next_boundary(&self, t: u64) -> u64 {
        let day = Self::day_start(t);
        [day + self.p_s, day + self.p_e, day + TICKS_PER_DAY + self.p_s]
            .into_iter()
            .find(|&b| b > t)
            .expect("next day's peak start is always ahead")
    }

    pub fn next_boundary_at(&self, t: f64) -> f64 {
        let day = (t / TICKS_PER_DAY as f64).floor() * TICKS_PER_DAY as f64;
        [
            day + self.p_s as f64,
            day + self.p_e as f64,
            day + (TICKS_PER_DAY + self.p_s) as f64,
        ]
        .into_iter()
        .find(|&b| b > t)
        .expect("next day's peak start is always ahead")
    }

    /// Next re-estimation after one at `t`: every `t_p` inside the peak,
    /// every `t_o` outside, snapping to the boundary when one comes first.
    pub fn next_reestimate(&self, t: u64) -> u64 {
        let period = if self.is_peak(t) { self.t_p } else { self.t_o };
        (t + period).min(self.next_boundary(t))
    }

    /// Absolute tick of `p'_e` on the day containing `t`.
    pub fn deferral_target(&self, t: u64) -> u64 {
        Self::day_start(t) + self.p_e_prime
    }

    /// 3b window rule: does `t + delta` land strictly inside `(p_s, p'_e)`
    /// of the current day?
    pub fn in_deferral_window(&self, t: u64, delta: u64) -> bool {
        let due = Self::time_of_day(t) + delta;
        self.p_s < due && due < self.p_e_prime
    }
}

impl Default for PeakSchedule {
    fn default() -> Self {
        Self::from_config(&ScheduleConfig::default()).expect("default schedule is valid")
    }
}
