//! Assembles every session and question metric into one report.
//!
//! Each section carries the filter policy it was computed under, since the
//! sections deliberately use different policies (durations drop the
//! percentile tails, questions-per-session does not).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::filter::{filter_sessions, ExclusionReport, FilterPolicy};
use super::log::{QuizSession, SessionLog};
use super::metrics::{
    correctness_rate, questions_by_algorithm, questions_per_session, response_time_stats, session_duration,
    streak_distribution, Correctness, ResponseTimes, StreakDistribution, StreakPolicy,
};
use super::stats::{summarize, SummaryStats};
use crate::error::Result;
use crate::registry::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportFilters {
    pub durations: FilterPolicy,
    pub questions_per_session: FilterPolicy,
    pub ratings: FilterPolicy,
    pub correctness: FilterPolicy,
    pub response_times: FilterPolicy,
    pub streaks: FilterPolicy,
    pub streak_policy: StreakPolicy,
}

impl Default for ReportFilters {
    fn default() -> Self {
        ReportFilters {
            durations: FilterPolicy::central_90(),
            questions_per_session: FilterPolicy::cleaned(),
            ratings: FilterPolicy::none(),
            correctness: FilterPolicy::none(),
            response_times: FilterPolicy::none(),
            streaks: FilterPolicy::none(),
            streak_policy: StreakPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section<T> {
    pub policy: FilterPolicy,
    pub policy_description: String,
    pub exclusions: ExclusionReport,
    pub by_algorithm: BTreeMap<Strategy, T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub total_sessions: usize,
    pub total_questions: usize,
    pub session_counts: BTreeMap<Strategy, usize>,
    pub durations_minutes: Section<Option<SummaryStats>>,
    pub questions_per_session: Section<Option<SummaryStats>>,
    pub ratings: Section<Option<SummaryStats>>,
    pub correctness: Section<Correctness>,
    pub response_times_secs: Section<ResponseTimes>,
    pub streaks: Section<StreakDistribution>,
}

fn arms_in(sessions: &[QuizSession]) -> Vec<Strategy> {
    let mut arms: Vec<Strategy> = Strategy::EXPERIMENT.to_vec();
    for s in sessions {
        if !arms.contains(&s.algorithm) {
            arms.push(s.algorithm);
        }
    }
    arms.sort();
    arms
}

fn section<T>(
    log: &SessionLog,
    policy: &FilterPolicy,
    compute: impl FnOnce(&[&QuizSession]) -> Result<BTreeMap<Strategy, T>>,
) -> Result<Section<T>> {
    let (kept, exclusions) = filter_sessions(&log.sessions, policy)?;
    Ok(Section { policy: *policy, policy_description: policy.describe(), exclusions, by_algorithm: compute(&kept)? })
}

fn summaries(arms: &[Strategy], mut values: BTreeMap<Strategy, Vec<f64>>) -> BTreeMap<Strategy, Option<SummaryStats>> {
    arms.iter()
        .map(|a| (*a, values.remove(a).filter(|v| !v.is_empty()).map(|v| summarize(&v).expect("non-empty"))))
        .collect()
}

pub fn report(log: &SessionLog, filters: &ReportFilters) -> Result<Report> {
    let arms = arms_in(&log.sessions);
    let mut session_counts: BTreeMap<Strategy, usize> = arms.iter().map(|a| (*a, 0)).collect();
    for s in &log.sessions {
        *session_counts.entry(s.algorithm).or_default() += 1;
    }

    let durations_minutes = section(log, &filters.durations, |kept| {
        let mut values: BTreeMap<Strategy, Vec<f64>> = BTreeMap::new();
        for s in kept {
            if let Some(d) = session_duration(s)? {
                values.entry(s.algorithm).or_default().push(d);
            }
        }
        Ok(summaries(&arms, values))
    })?;
    let questions_per_session = section(log, &filters.questions_per_session, |kept| {
        Ok(summaries(&arms, questions_per_session(kept, &log.questions)))
    })?;
    let ratings = section(log, &filters.ratings, |kept| {
        let mut values: BTreeMap<Strategy, Vec<f64>> = BTreeMap::new();
        for s in kept {
            if let Some(r) = s.rating {
                values.entry(s.algorithm).or_default().push(f64::from(r));
            }
        }
        Ok(summaries(&arms, values))
    })?;
    let correctness =
        section(log, &filters.correctness, |kept| Ok(correctness_rate(&questions_by_algorithm(kept, &log.questions))))?;
    let response_times_secs = section(log, &filters.response_times, |kept| {
        response_time_stats(&questions_by_algorithm(kept, &log.questions))
    })?;
    let streaks =
        section(log, &filters.streaks, |kept| Ok(streak_distribution(kept, &log.questions, filters.streak_policy)))?;

    Ok(Report {
        total_sessions: log.sessions.len(),
        total_questions: log.questions.len(),
        session_counts,
        durations_minutes,
        questions_per_session,
        ratings,
        correctness,
        response_times_secs,
        streaks,
    })
}

fn stats_table(out: &mut String, title: &str, section: &Section<Option<SummaryStats>>) {
    let _ = writeln!(out, "\n{title}\n  filter: {}", section.policy_description);
    let _ = writeln!(
        out,
        "  {:<22}{:>7}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}",
        "algorithm", "count", "mean", "std", "min", "25%", "50%", "75%", "max"
    );
    for (alg, s) in &section.by_algorithm {
        match s {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "  {:<22}{:>7}{:>9.2}{:>9.2}{:>9.2}{:>9.2}{:>9.2}{:>9.2}{:>9.2}",
                    alg.as_str(),
                    s.count,
                    s.mean,
                    s.std,
                    s.min,
                    s.p25,
                    s.p50,
                    s.p75,
                    s.max
                );
            }
            None => {
                let _ = writeln!(out, "  {:<22}{:>7}", alg.as_str(), 0);
            }
        }
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Sessions: {}  Questions: {}", self.total_sessions, self.total_questions);
        let _ = writeln!(out, "\nSessions per algorithm");
        for (alg, n) in &self.session_counts {
            let _ = writeln!(out, "  {:<22}{n:>7}", alg.as_str());
        }
        stats_table(&mut out, "Session duration (minutes)", &self.durations_minutes);
        stats_table(&mut out, "Questions per session", &self.questions_per_session);
        stats_table(&mut out, "Ratings", &self.ratings);

        let _ = writeln!(out, "\nCorrectness\n  filter: {}", self.correctness.policy_description);
        for (alg, c) in &self.correctness.by_algorithm {
            let rate = c.rate.map_or("n/a".to_string(), |r| format!("{:.1}%", 100.0 * r));
            let _ = writeln!(
                out,
                "  {:<22}{rate:>8}  ({} of {} answered, {} without flag)",
                alg.as_str(),
                c.correct,
                c.answered,
                c.missing_flag
            );
        }

        let _ = writeln!(out, "\nResponse time (seconds)\n  filter: {}", self.response_times_secs.policy_description);
        for (alg, r) in &self.response_times_secs.by_algorithm {
            let _ = writeln!(
                out,
                "  {:<22}median {:>8.2}  mean {:>8.2}  p95 {:>8.2}  (n = {})",
                alg.as_str(),
                r.median,
                r.mean,
                r.p95,
                r.count
            );
        }

        let _ = writeln!(out, "\nWrong-answer streak lengths (%)\n  filter: {}", self.streaks.policy_description);
        for (alg, d) in &self.streaks.by_algorithm {
            let cells: Vec<String> = d.percentages.iter().map(|(l, p)| format!("{l}:{p:.2}")).collect();
            let _ = writeln!(out, "  {:<22}n={:<6}{}", alg.as_str(), d.streaks, cells.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_reports_zero_counts() {
        let r = report(&SessionLog::default(), &ReportFilters::default()).unwrap();
        assert_eq!(r.total_sessions, 0);
        assert_eq!(r.session_counts.len(), 3);
        assert!(r.session_counts.values().all(|&n| n == 0));
        assert!(r.durations_minutes.by_algorithm.values().all(Option::is_none));
        assert!(r.correctness.by_algorithm.is_empty());
        let text = r.to_text();
        assert!(text.contains("cosineSimilarityAlg"));
        serde_json::to_string(&r).unwrap();
    }
}
