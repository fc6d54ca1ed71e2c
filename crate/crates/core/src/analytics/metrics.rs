//! Per-session and per-question metrics, grouped by recommendation strategy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::log::{QuizSession, SessionQuestion};
use super::stats::{percentile_sorted, sorted};
use crate::error::{Error, Result};
use crate::registry::Strategy;

pub fn session_duration_secs(s: &QuizSession) -> Result<Option<f64>> {
    let Some(end) = s.ended_at else { return Ok(None) };
    let secs = (end - s.started_at)
        .num_microseconds()
        .map_or_else(|| (end - s.started_at).num_milliseconds() as f64 / 1e3, |us| us as f64 / 1e6);
    if secs < 0.0 {
        return Err(Error::Consistency(format!("session {:?} has negative duration", s.session_id)));
    }
    Ok(Some(secs))
}

/// Duration in minutes, absent for unfinished sessions.
pub fn session_duration(s: &QuizSession) -> Result<Option<f64>> {
    Ok(session_duration_secs(s)?.map(|v| v / 60.0))
}

pub fn response_time_secs(q: &SessionQuestion) -> Option<f64> {
    q.answered_at.map(|a| (a - q.presented_at).num_microseconds().unwrap_or(i64::MAX) as f64 / 1e6)
}

/// Questions belonging to the given sessions, grouped by the session's strategy
/// and kept in input order.
pub fn questions_by_algorithm<'a>(
    sessions: &[&QuizSession],
    questions: &'a [SessionQuestion],
) -> BTreeMap<Strategy, Vec<&'a SessionQuestion>> {
    let alg: HashMap<&str, Strategy> = sessions.iter().map(|s| (s.session_id.as_str(), s.algorithm)).collect();
    let mut out: BTreeMap<Strategy, Vec<&SessionQuestion>> = BTreeMap::new();
    for q in questions {
        if let Some(&a) = alg.get(q.session_id.as_str()) {
            out.entry(a).or_default().push(q);
        }
    }
    out
}

/// Number of logged questions in each session (zero for sessions with none).
pub fn questions_per_session(sessions: &[&QuizSession], questions: &[SessionQuestion]) -> BTreeMap<Strategy, Vec<f64>> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for q in questions {
        *counts.entry(q.session_id.as_str()).or_insert(0) += 1;
    }
    let mut out: BTreeMap<Strategy, Vec<f64>> = BTreeMap::new();
    for s in sessions {
        out.entry(s.algorithm).or_default().push(counts.get(s.session_id.as_str()).copied().unwrap_or(0) as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correctness {
    /// `correct / answered`; absent when nothing was answered.
    pub rate: Option<f64>,
    pub correct: usize,
    pub answered: usize,
    /// Questions without a correctness flag, excluded from the rate.
    pub missing_flag: usize,
}

pub fn correctness_rate(groups: &BTreeMap<Strategy, Vec<&SessionQuestion>>) -> BTreeMap<Strategy, Correctness> {
    groups
        .iter()
        .map(|(&alg, qs)| {
            let correct = qs.iter().filter(|q| q.correct == Some(true)).count();
            let answered = qs.iter().filter(|q| q.correct.is_some()).count();
            let rate = (answered > 0).then(|| correct as f64 / answered as f64);
            (alg, Correctness { rate, correct, answered, missing_flag: qs.len() - answered })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimes {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub p95: f64,
    /// Questions without an answer timestamp, excluded.
    pub unanswered: usize,
}

/// Median, mean and 95th percentile of response times in seconds. Groups with
/// no answered question are omitted.
pub fn response_time_stats(
    groups: &BTreeMap<Strategy, Vec<&SessionQuestion>>,
) -> Result<BTreeMap<Strategy, ResponseTimes>> {
    let mut offenders = Vec::new();
    let mut out = BTreeMap::new();
    for (&alg, qs) in groups {
        let mut times = Vec::with_capacity(qs.len());
        for q in qs {
            if let Some(t) = response_time_secs(q) {
                if t < 0.0 {
                    offenders.push(format!("{}/{} ({t} s)", q.session_id, q.question_id));
                }
                times.push(t);
            }
        }
        if times.is_empty() {
            continue;
        }
        let s = sorted(&times);
        out.insert(
            alg,
            ResponseTimes {
                count: s.len(),
                median: percentile_sorted(&s, 50.0),
                mean: s.iter().sum::<f64>() / s.len() as f64,
                p95: percentile_sorted(&s, 95.0),
                unanswered: qs.len() - s.len(),
            },
        );
    }
    if !offenders.is_empty() {
        return Err(Error::Consistency(format!("negative response times: {}", offenders.join(", "))));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreakPolicy {
    /// Count a run of wrong answers that is still open when the session ends.
    pub count_trailing: bool,
}

impl Default for StreakPolicy {
    fn default() -> Self {
        StreakPolicy { count_trailing: true }
    }
}

/// Lengths of maximal runs of consecutive wrong answers, in order. Questions
/// without a correctness flag are skipped.
pub fn wrong_streaks(flags: impl IntoIterator<Item = Option<bool>>, policy: StreakPolicy) -> Vec<usize> {
    let mut streaks = Vec::new();
    let mut run = 0;
    for correct in flags.into_iter().flatten() {
        if correct {
            if run > 0 {
                streaks.push(run);
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    if run > 0 && policy.count_trailing {
        streaks.push(run);
    }
    streaks
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreakDistribution {
    pub streaks: usize,
    pub counts: BTreeMap<usize, usize>,
    /// Share of streaks at each length 1..=max, in percent.
    pub percentages: BTreeMap<usize, f64>,
}

impl StreakDistribution {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        let mut streaks = 0;
        for l in lengths {
            *counts.entry(l).or_insert(0) += 1;
            streaks += 1;
        }
        let max = counts.keys().next_back().copied().unwrap_or(0);
        let percentages =
            (1..=max).map(|l| (l, 100.0 * counts.get(&l).copied().unwrap_or(0) as f64 / streaks as f64)).collect();
        StreakDistribution { streaks, counts, percentages }
    }
}

pub fn streak_distribution(
    sessions: &[&QuizSession],
    questions: &[SessionQuestion],
    policy: StreakPolicy,
) -> BTreeMap<Strategy, StreakDistribution> {
    let mut by_session: HashMap<&str, Vec<&SessionQuestion>> = HashMap::new();
    for q in questions {
        by_session.entry(q.session_id.as_str()).or_default().push(q);
    }
    let mut lengths: BTreeMap<Strategy, Vec<usize>> = BTreeMap::new();
    for s in sessions {
        let entry = lengths.entry(s.algorithm).or_default();
        if let Some(qs) = by_session.get_mut(s.session_id.as_str()) {
            qs.sort_by_key(|q| q.sequence_order);
            entry.extend(wrong_streaks(qs.iter().map(|q| q.correct), policy));
        }
    }
    lengths.into_iter().map(|(a, l)| (a, StreakDistribution::from_lengths(l))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn flags(s: &str) -> Vec<Option<bool>> {
        s.chars()
            .map(|c| match c {
                'C' => Some(true),
                'W' => Some(false),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn streak_examples() {
        assert_eq!(wrong_streaks(flags("WWCWC"), StreakPolicy::default()), vec![2, 1]);
        assert!(wrong_streaks(flags("CCC"), StreakPolicy::default()).is_empty());
        assert_eq!(wrong_streaks(flags("CWW"), StreakPolicy::default()), vec![2]);
        assert!(wrong_streaks(flags("CWW"), StreakPolicy { count_trailing: false }).is_empty());
        assert_eq!(wrong_streaks(flags("W-WC"), StreakPolicy::default()), vec![2]);
        assert!(wrong_streaks(flags(""), StreakPolicy::default()).is_empty());
    }

    #[test]
    fn distribution_example() {
        let d = StreakDistribution::from_lengths([1, 1, 2]);
        assert!((d.percentages[&1] - 66.67).abs() < 0.01);
        assert!((d.percentages[&2] - 33.33).abs() < 0.01);
        let d = StreakDistribution::from_lengths([1, 3]);
        assert_eq!(d.percentages.len(), 3);
        assert_eq!(d.percentages[&2], 0.0);
        assert!(StreakDistribution::from_lengths([]).percentages.is_empty());
    }

    #[test]
    fn duration_arithmetic() {
        let start = Utc.with_ymd_and_hms(2024, 5, 1, 10, 0, 0).unwrap();
        let mut s = QuizSession {
            session_id: "s".into(),
            user_id: None,
            algorithm: Strategy::Som,
            question_types: Default::default(),
            started_at: start,
            ended_at: Some(Utc.with_ymd_and_hms(2024, 5, 1, 10, 13, 8).unwrap()),
            rating: None,
        };
        let m = session_duration(&s).unwrap().unwrap();
        assert!((m - 788.0 / 60.0).abs() < 1e-12);
        assert!((m - 13.13).abs() < 0.01);
        s.ended_at = None;
        assert_eq!(session_duration(&s).unwrap(), None);
        s.ended_at = Some(start - Duration::seconds(1));
        assert!(session_duration(&s).is_err());
    }

    fn q(sid: &str, order: u32, answer_after: Option<f64>, correct: Option<bool>) -> SessionQuestion {
        let t = Utc.with_ymd_and_hms(2024, 5, 1, 10, 0, 0).unwrap();
        SessionQuestion {
            session_id: sid.into(),
            question_id: format!("{sid}-{order}"),
            sequence_order: order,
            presented_at: t,
            answered_at: answer_after.map(|a| t + Duration::microseconds((a * 1e6).round() as i64)),
            correct,
        }
    }

    #[test]
    fn correctness_and_response_times() {
        let qs = [
            q("a", 1, Some(64.49), Some(true)),
            q("a", 2, Some(10.0), Some(true)),
            q("a", 3, Some(20.0), Some(false)),
            q("a", 4, None, Some(true)),
            q("a", 5, Some(30.0), Some(false)),
            q("a", 6, Some(30.0), None),
        ];
        let groups: BTreeMap<Strategy, Vec<&SessionQuestion>> = [(Strategy::Cosine, qs.iter().collect())].into();
        let c = correctness_rate(&groups)[&Strategy::Cosine];
        assert_eq!((c.correct, c.answered, c.missing_flag), (3, 5, 1));
        assert_eq!(c.rate, Some(0.6));

        let single: BTreeMap<Strategy, Vec<&SessionQuestion>> = [(Strategy::Som, vec![&qs[0]])].into();
        let r = response_time_stats(&single).unwrap()[&Strategy::Som];
        assert!((r.median - 64.49).abs() < 1e-9 && (r.mean - 64.49).abs() < 1e-9 && (r.p95 - 64.49).abs() < 1e-9);

        let none: BTreeMap<Strategy, Vec<&SessionQuestion>> = [(Strategy::GmmKl, vec![&qs[5]])].into();
        assert_eq!(correctness_rate(&none)[&Strategy::GmmKl].rate, None);
    }

    #[test]
    fn negative_response_time_lists_offender() {
        let mut bad = q("x", 1, Some(5.0), Some(true));
        bad.answered_at = Some(bad.presented_at - Duration::seconds(3));
        let groups: BTreeMap<Strategy, Vec<&SessionQuestion>> = [(Strategy::Cosine, vec![&bad])].into();
        let err = response_time_stats(&groups).unwrap_err();
        assert!(err.to_string().contains("x/x-1"), "{err}");
    }
}
