//! Session outlier filtering.
//!
//! Rules run in order: missing duration, minimum duration, then the
//! percentile window. The window bounds are percentiles of the durations that
//! survived the first two rules, and sessions inside `[lo, hi]` (inclusive)
//! are kept.

use serde::{Deserialize, Serialize};

use super::log::QuizSession;
use super::metrics::session_duration_secs;
use super::stats::{percentile_sorted, sorted};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub drop_missing_duration: bool,
    pub min_duration_secs: Option<f64>,
    /// Percentile window `(lo, hi)` in 0..=100.
    pub percentile_window: Option<(f64, f64)>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy::none()
    }
}

impl FilterPolicy {
    pub fn none() -> Self {
        FilterPolicy { drop_missing_duration: false, min_duration_secs: None, percentile_window: None }
    }

    /// Drop unfinished sessions and those shorter than five seconds.
    pub fn cleaned() -> Self {
        FilterPolicy { drop_missing_duration: true, min_duration_secs: Some(5.0), percentile_window: None }
    }

    /// `cleaned` plus the central 90% (5th to 95th percentile) of durations.
    pub fn central_90() -> Self {
        FilterPolicy { percentile_window: Some((5.0, 95.0)), ..FilterPolicy::cleaned() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.percentile_window {
            if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
                return Err(Error::InvalidConfig(format!(
                    "percentile window ({lo}, {hi}) must satisfy 0 <= lo < hi <= 100"
                )));
            }
        }
        if self.min_duration_secs.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::InvalidConfig("min_duration_secs must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.drop_missing_duration {
            parts.push("drop sessions without duration".to_string());
        }
        if let Some(m) = self.min_duration_secs {
            parts.push(format!("drop sessions shorter than {m} s"));
        }
        if let Some((lo, hi)) = self.percentile_window {
            parts.push(format!("keep durations within the {lo}th-{hi}th percentiles"));
        }
        if parts.is_empty() {
            "no filtering".into()
        } else {
            parts.join("; ")
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input: usize,
    pub missing_duration: usize,
    pub too_short: usize,
    pub below_window: usize,
    pub above_window: usize,
    pub retained: usize,
    /// Duration bounds (minutes) of the percentile window, when applied.
    pub window_minutes: Option<(f64, f64)>,
}

impl ExclusionReport {
    pub fn excluded(&self) -> usize {
        self.missing_duration + self.too_short + self.below_window + self.above_window
    }
}

pub fn filter_sessions<'a>(
    sessions: &'a [QuizSession],
    policy: &FilterPolicy,
) -> Result<(Vec<&'a QuizSession>, ExclusionReport)> {
    policy.validate()?;
    let mut report = ExclusionReport { input: sessions.len(), ..Default::default() };
    let mut stage: Vec<(&QuizSession, Option<f64>)> = Vec::with_capacity(sessions.len());
    for s in sessions {
        let secs = session_duration_secs(s)?;
        match secs {
            None if policy.drop_missing_duration => report.missing_duration += 1,
            Some(v) if policy.min_duration_secs.is_some_and(|min| v < min) => report.too_short += 1,
            _ => stage.push((s, secs.map(|v| v / 60.0))),
        }
    }
    let kept = match policy.percentile_window {
        Some((lo, hi)) => {
            let durations: Vec<f64> = stage.iter().filter_map(|(_, d)| *d).collect();
            if durations.is_empty() {
                stage
            } else {
                let s = sorted(&durations);
                let (lo_v, hi_v) = (percentile_sorted(&s, lo), percentile_sorted(&s, hi));
                report.window_minutes = Some((lo_v, hi_v));
                stage
                    .into_iter()
                    .filter(|(_, d)| match d {
                        Some(v) if *v < lo_v => {
                            report.below_window += 1;
                            false
                        }
                        Some(v) if *v > hi_v => {
                            report.above_window += 1;
                            false
                        }
                        _ => true,
                    })
                    .collect()
            }
        }
        None => stage,
    };
    report.retained = kept.len();
    Ok((kept.into_iter().map(|(s, _)| s).collect(), report))
}
