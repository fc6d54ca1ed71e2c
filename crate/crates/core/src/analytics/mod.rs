//! Interaction-log analytics used to compare recommendation strategies.

mod filter;
mod log;
mod metrics;
mod report;
mod stats;

pub use filter::{filter_sessions, ExclusionReport, FilterPolicy};
pub use log::{
    format_timestamp, parse_timestamp, read_questions, read_sessions, write_questions, write_sessions, QuizSession,
    SessionLog, SessionQuestion, Timestamp, QUESTIONS_HEADER, SESSIONS_HEADER,
};
pub use metrics::{
    correctness_rate, questions_by_algorithm, questions_per_session, response_time_secs, response_time_stats,
    session_duration, session_duration_secs, streak_distribution, wrong_streaks, Correctness, ResponseTimes,
    StreakDistribution, StreakPolicy,
};
pub use report::{report, Report, ReportFilters, Section};
pub use stats::{percentile_sorted, summarize, SummaryStats};
