//! Session and per-question interaction logs, with their CSV encoding.
//!
//! `sessions.csv`: `session_id,user_id,algorithm,question_types,started_at,ended_at,rating`
//! `session_questions.csv`: `session_id,question_id,sequence_order,presented_at,answered_at,correct`
//!
//! Timestamps are ISO-8601; values without an offset are read as UTC. Absent
//! values are empty strings and `question_types` is a `;`-joined subject list.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::data::Subject;
use crate::error::{Error, Result};
use crate::registry::Strategy;

pub type Timestamp = DateTime<Utc>;

pub const SESSIONS_HEADER: [&str; 7] =
    ["session_id", "user_id", "algorithm", "question_types", "started_at", "ended_at", "rating"];
pub const QUESTIONS_HEADER: [&str; 6] =
    ["session_id", "question_id", "sequence_order", "presented_at", "answered_at", "correct"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizSession {
    pub session_id: String,
    pub user_id: Option<String>,
    pub algorithm: Strategy,
    pub question_types: BTreeSet<Subject>,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
    pub rating: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionQuestion {
    pub session_id: String,
    pub question_id: String,
    pub sequence_order: u32,
    pub presented_at: Timestamp,
    pub answered_at: Option<Timestamp>,
    pub correct: Option<bool>,
}

/// Both log tables, checked for cross-table consistency.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub sessions: Vec<QuizSession>,
    pub questions: Vec<SessionQuestion>,
}

pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn opt(s: &str) -> Option<&str> {
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

struct RowCtx<'a> {
    file: &'a str,
    row: usize,
}

impl RowCtx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Csv { file: self.file.to_string(), row: self.row, message: message.into() }
    }

    fn time(&self, field: &str, s: &str) -> Result<Timestamp> {
        parse_timestamp(s).ok_or_else(|| self.err(format!("{field}: bad timestamp {s:?}")))
    }
}

fn read_rows<R: Read>(reader: R, file: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let found = rdr.headers().map_err(|e| Error::Csv { file: file.into(), row: 1, message: e.to_string() })?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Csv { file: file.into(), row: 1, message: format!("expected header {}", header.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            file: file.into(),
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok(rows)
}

pub fn read_sessions<R: Read>(reader: R) -> Result<Vec<QuizSession>> {
    const FILE: &str = "sessions.csv";
    let mut out = Vec::new();
    for (row, rec) in read_rows(reader, FILE, &SESSIONS_HEADER)? {
        let ctx = RowCtx { file: FILE, row };
        let f = |i: usize| rec.get(i).unwrap_or("");
        let session_id = f(0).to_string();
        if session_id.is_empty() {
            return Err(ctx.err("empty session_id"));
        }
        let algorithm = f(2).parse::<Strategy>().map_err(|e| ctx.err(e.to_string()))?;
        let question_types = f(3)
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Subject>())
            .collect::<Result<BTreeSet<_>>>()
            .map_err(|e| ctx.err(e.to_string()))?;
        let started_at = ctx.time("started_at", f(4))?;
        let ended_at = opt(f(5)).map(|s| ctx.time("ended_at", s)).transpose()?;
        let rating = opt(f(6))
            .map(|s| match s.parse::<u8>() {
                Ok(r @ 1..=5) => Ok(r),
                _ => Err(ctx.err(format!("rating must be an integer in 1..=5, got {s:?}"))),
            })
            .transpose()?;
        if let Some(end) = ended_at {
            if end < started_at {
                return Err(ctx.err(format!("session {session_id:?} ends before it starts")));
            }
        }
        out.push(QuizSession {
            session_id,
            user_id: opt(f(1)).map(str::to_string),
            algorithm,
            question_types,
            started_at,
            ended_at,
            rating,
        });
    }
    Ok(out)
}

pub fn read_questions<R: Read>(reader: R) -> Result<Vec<SessionQuestion>> {
    const FILE: &str = "session_questions.csv";
    let mut out = Vec::new();
    for (row, rec) in read_rows(reader, FILE, &QUESTIONS_HEADER)? {
        let ctx = RowCtx { file: FILE, row };
        let f = |i: usize| rec.get(i).unwrap_or("");
        let sequence_order = f(2)
            .parse::<u32>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| ctx.err(format!("sequence_order must be a positive integer, got {:?}", f(2))))?;
        let presented_at = ctx.time("presented_at", f(3))?;
        let answered_at = opt(f(4)).map(|s| ctx.time("answered_at", s)).transpose()?;
        let correct = match f(5) {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(ctx.err(format!("correct must be true, false or empty, got {other:?}"))),
        };
        out.push(SessionQuestion {
            session_id: f(0).to_string(),
            question_id: f(1).to_string(),
            sequence_order,
            presented_at,
            answered_at,
            correct,
        });
    }
    Ok(out)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_sessions<W: Write>(sessions: &[QuizSession], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SESSIONS_HEADER).map_err(csv_io)?;
    for s in sessions {
        let types: Vec<&str> = s.question_types.iter().map(|t| t.as_str()).collect();
        w.write_record([
            s.session_id.clone(),
            s.user_id.clone().unwrap_or_default(),
            s.algorithm.to_string(),
            types.join(";"),
            format_timestamp(&s.started_at),
            s.ended_at.as_ref().map(format_timestamp).unwrap_or_default(),
            s.rating.map(|r| r.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_questions<W: Write>(questions: &[SessionQuestion], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(QUESTIONS_HEADER).map_err(csv_io)?;
    for q in questions {
        w.write_record([
            q.session_id.clone(),
            q.question_id.clone(),
            q.sequence_order.to_string(),
            format_timestamp(&q.presented_at),
            q.answered_at.as_ref().map(format_timestamp).unwrap_or_default(),
            q.correct.map(|c| c.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

impl SessionLog {
    pub fn new(sessions: Vec<QuizSession>, questions: Vec<SessionQuestion>) -> Result<Self> {
        let log = SessionLog { sessions, questions };
        log.validate()?;
        Ok(log)
    }

    pub fn read<R1: Read, R2: Read>(sessions: R1, questions: R2) -> Result<Self> {
        SessionLog::new(read_sessions(sessions)?, read_questions(questions)?)
    }

    pub fn load(sessions: impl AsRef<Path>, questions: impl AsRef<Path>) -> Result<Self> {
        SessionLog::read(File::open(sessions)?, File::open(questions)?)
    }

    pub fn write<W1: Write, W2: Write>(&self, sessions: W1, questions: W2) -> Result<()> {
        write_sessions(&self.sessions, sessions)?;
        write_questions(&self.questions, questions)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for s in &self.sessions {
            if !ids.insert(s.session_id.as_str()) {
                return Err(Error::Consistency(format!("duplicate session {:?}", s.session_id)));
            }
            if s.ended_at.is_some_and(|e| e < s.started_at) {
                return Err(Error::Consistency(format!("session {:?} ends before it starts", s.session_id)));
            }
            if s.rating.is_some_and(|r| !(1..=5).contains(&r)) {
                return Err(Error::Consistency(format!("session {:?} has rating outside 1..=5", s.session_id)));
            }
        }
        let mut orders: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for q in &self.questions {
            if !ids.contains(q.session_id.as_str()) {
                return Err(Error::Consistency(format!(
                    "question {:?} references unknown session {:?}",
                    q.question_id, q.session_id
                )));
            }
            if q.answered_at.is_some_and(|a| a < q.presented_at) {
                return Err(Error::Consistency(format!(
                    "question {:?} in session {:?} answered before it was presented",
                    q.question_id, q.session_id
                )));
            }
            orders.entry(q.session_id.as_str()).or_default().push(q.sequence_order);
        }
        for (sid, mut seq) in orders {
            seq.sort_unstable();
            if seq.iter().enumerate().any(|(i, &o)| o as usize != i + 1) {
                return Err(Error::Consistency(format!("session {sid:?}: sequence_order is not 1..m")));
            }
        }
        Ok(())
    }

    /// Questions of each session, ordered by `sequence_order`.
    pub fn questions_by_session(&self) -> BTreeMap<&str, Vec<&SessionQuestion>> {
        let mut map: BTreeMap<&str, Vec<&SessionQuestion>> = BTreeMap::new();
        for q in &self.questions {
            map.entry(q.session_id.as_str()).or_default().push(q);
        }
        for qs in map.values_mut() {
            qs.sort_by_key(|q| q.sequence_order);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SESSIONS: &str = "session_id,user_id,algorithm,question_types,started_at,ended_at,rating\n\
        s1,u1,cosineSimilarityAlg,XYZ;KVA,2024-03-01T10:00:00Z,2024-03-01T10:13:08Z,5\n\
        s2,,somSimilarityAlg,NOG,2024-03-01 11:00:00,,\n";
    const QUESTIONS: &str = "session_id,question_id,sequence_order,presented_at,answered_at,correct\n\
        s1,q1,1,2024-03-01T10:00:00Z,2024-03-01T10:01:04.49Z,false\n\
        s1,q2,2,2024-03-01T10:01:05Z,2024-03-01T10:02:00Z,true\n\
        s2,q9,1,2024-03-01T11:00:00Z,,\n";

    #[test]
    fn parses_and_round_trips() {
        let log = SessionLog::read(SESSIONS.as_bytes(), QUESTIONS.as_bytes()).unwrap();
        assert_eq!(log.sessions.len(), 2);
        assert_eq!(log.sessions[0].question_types.len(), 2);
        assert_eq!(log.sessions[1].user_id, None);
        assert_eq!(log.sessions[1].rating, None);
        assert_eq!(log.questions[2].correct, None);
        let mut s = Vec::new();
        let mut q = Vec::new();
        log.write(&mut s, &mut q).unwrap();
        let back = SessionLog::read(s.as_slice(), q.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn bad_rows_report_row_numbers() {
        let bad = SESSIONS.replace(",5\n", ",7\n");
        match read_sessions(bad.as_bytes()) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let bad = QUESTIONS.replace(",true\n", ",yes\n");
        match read_questions(bad.as_bytes()) {
            Err(Error::Csv { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("yes"));
            }
            other => panic!("{other:?}"),
        }
        assert!(read_sessions("a,b\n".as_bytes()).is_err());
        let bad = SESSIONS.replace("cosineSimilarityAlg", "randomAlg");
        assert!(read_sessions(bad.as_bytes()).is_err());
    }

    #[test]
    fn consistency_checks() {
        let bad = SESSIONS.replace("2024-03-01T10:13:08Z", "2024-03-01T09:00:00Z");
        assert!(read_sessions(bad.as_bytes()).is_err());
        let gap = QUESTIONS.replace("s1,q2,2", "s1,q2,3");
        assert!(matches!(SessionLog::read(SESSIONS.as_bytes(), gap.as_bytes()), Err(Error::Consistency(_))));
        let orphan = QUESTIONS.replace("s2,q9", "s3,q9");
        assert!(SessionLog::read(SESSIONS.as_bytes(), orphan.as_bytes()).is_err());
        let early = QUESTIONS.replace("2024-03-01T10:02:00Z", "2024-03-01T10:00:00Z");
        assert!(SessionLog::read(SESSIONS.as_bytes(), early.as_bytes()).is_err());
    }

    #[test]
    fn empty_logs() {
        let log = SessionLog::read(
            "session_id,user_id,algorithm,question_types,started_at,ended_at,rating\n".as_bytes(),
            "session_id,question_id,sequence_order,presented_at,answered_at,correct\n".as_bytes(),
        )
        .unwrap();
        assert!(log.sessions.is_empty() && log.questions.is_empty());
    }
}
