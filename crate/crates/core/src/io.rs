//! Newline-delimited JSON event logs with `articles.json` / `users.json`
//! sidecars, and atomic file output.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_event, Article, Catalog, Defect, EventLog, InteractionEvent, User};

pub const EVENTS_FILE: &str = "events.ndjson";
pub const ARTICLES_FILE: &str = "articles.json";
pub const USERS_FILE: &str = "users.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    pub line: usize,
    pub defect: Defect,
}

#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub log: EventLog,
    pub rejected: Vec<RejectedRecord>,
}

fn sidecar(events_path: &Path, name: &str) -> PathBuf {
    events_path
        .parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_catalog(dir: &Path) -> Result<Catalog> {
    let articles: Vec<Article> = read_json(&dir.join(ARTICLES_FILE))?;
    let users: Vec<User> = read_json(&dir.join(USERS_FILE))?;
    Catalog::new(articles, users)
}

/// Loads an event log. Catalogs are read from sidecar files next to
/// `events_path`. Records failing validation are dropped and reported;
/// unparseable lines and decreasing timestamps abort with the line number.
pub fn load_event_log(events_path: &Path) -> Result<LoadedLog> {
    let articles: Vec<Article> = read_json(&sidecar(events_path, ARTICLES_FILE))?;
    let users: Vec<User> = read_json(&sidecar(events_path, USERS_FILE))?;
    let catalog = Catalog::new(articles, users)?;

    let file = fs::File::open(events_path).map_err(|e| Error::io(events_path, e))?;
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    let mut last_at = i64::MIN;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(events_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: InteractionEvent =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: events_path.to_owned(),
                line: lineno,
                message: e.to_string(),
            })?;
        if event.at < last_at {
            return Err(Error::Malformed {
                path: events_path.to_owned(),
                line: lineno,
                message: format!(
                    "timestamp {} precedes previous event at {}",
                    event.at, last_at
                ),
            });
        }
        last_at = event.at;
        match validate_event(&event, &catalog) {
            Ok(()) => events.push(event),
            Err(defect) => rejected.push(RejectedRecord {
                line: lineno,
                defect,
            }),
        }
    }
    Ok(LoadedLog {
        log: EventLog {
            catalog: Arc::new(catalog),
            events,
        },
        rejected,
    })
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_pretty(value)?)
}

pub fn events_to_ndjson(events: &[InteractionEvent]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(events.len() * 128);
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(|e| Error::Serialize(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `events.ndjson`, `articles.json` and `users.json` into `dir`.
pub fn save_event_log(log: &EventLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let articles: Vec<&Article> = log.catalog.articles.values().collect();
    let users: Vec<&User> = log.catalog.users.values().collect();
    write_json(&dir.join(ARTICLES_FILE), &articles)?;
    write_json(&dir.join(USERS_FILE), &users)?;
    write_atomic(&dir.join(EVENTS_FILE), &events_to_ndjson(&log.events)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arm, EventKind};

    fn catalog() -> Catalog {
        Catalog::new(
            vec![Article {
                article_id: "a".into(),
                section: "Norge".into(),
                published_at: 0,
                initial_news_value: 70,
                length_chars: 2500,
                editorial_pinned: false,
                pinned_position: None,
            }],
            vec![User {
                user_id: "u".into(),
                subscriber: true,
                subscribed_since: -100,
                arm: Some(Arm::Personalization),
            }],
        )
        .unwrap()
    }

    fn write_dir(events: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let cat = catalog();
        let articles: Vec<_> = cat.articles.values().collect();
        let users: Vec<_> = cat.users.values().collect();
        fs::write(
            dir.path().join(ARTICLES_FILE),
            serde_json::to_string(&articles).unwrap(),
        )
        .unwrap();
        fs::write(
            dir.path().join(USERS_FILE),
            serde_json::to_string(&users).unwrap(),
        )
        .unwrap();
        fs::write(dir.path().join(EVENTS_FILE), events).unwrap();
        dir
    }

    #[test]
    fn five_valid_lines() {
        let mut s = String::new();
        for t in 0..5 {
            s.push_str(&format!(
                r#"{{"user_id":"u","article_id":"a","kind":"impression","at":{t},"feed_position":4}}"#
            ));
            s.push('\n');
        }
        let dir = write_dir(&s);
        let loaded = load_event_log(&dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(loaded.log.len(), 5);
        assert!(loaded.rejected.is_empty());
    }

    #[test]
    fn incomplete_click_rejected() {
        let mut s = String::new();
        for t in 0..4 {
            s.push_str(&format!(
                r#"{{"user_id":"u","article_id":"a","kind":"impression","at":{t},"feed_position":4}}"#
            ));
            s.push('\n');
        }
        s.push_str(r#"{"user_id":"u","article_id":"a","kind":"click","at":9,"reading_percentage":0.4,"feed_position":4}"#);
        let dir = write_dir(&s);
        let loaded = load_event_log(&dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(loaded.log.len(), 4);
        assert_eq!(
            loaded.rejected,
            vec![RejectedRecord {
                line: 5,
                defect: Defect::IncompleteClick
            }]
        );
    }

    #[test]
    fn empty_file_is_empty_log() {
        let dir = write_dir("");
        let loaded = load_event_log(&dir.path().join(EVENTS_FILE)).unwrap();
        assert!(loaded.log.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = write_dir(
            "{\"user_id\":\"u\",\"article_id\":\"a\",\"kind\":\"impression\",\"at\":1,\"feed_position\":0}\nnot json\n",
        );
        let err = load_event_log(&dir.path().join(EVENTS_FILE)).unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamps_are_malformed() {
        let dir = write_dir(
            "{\"user_id\":\"u\",\"article_id\":\"a\",\"kind\":\"impression\",\"at\":5,\"feed_position\":0}\n\
             {\"user_id\":\"u\",\"article_id\":\"a\",\"kind\":\"impression\",\"at\":4,\"feed_position\":0}\n",
        );
        assert!(matches!(
            load_event_log(&dir.path().join(EVENTS_FILE)),
            Err(Error::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_event_log(&dir.path().join(EVENTS_FILE)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn save_then_load_round_trips() {
        let cat = Arc::new(catalog());
        let events = vec![
            InteractionEvent::impression(&"u".into(), &"a".into(), 3, 7),
            InteractionEvent::click(
                &"u".into(),
                &"a".into(),
                4,
                7,
                0.1 + 0.2,
                12.345678901234567,
            ),
        ];
        let log = EventLog::new(cat, events).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_event_log(&log, dir.path()).unwrap();
        let back = load_event_log(&dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(back.log, log);
        assert_eq!(back.log.events[1].kind, EventKind::Click);
    }
}
