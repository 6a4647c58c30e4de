use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ChannelKind, LabelTrack, Session, SessionMeta, SignalChannel};
use crate::error::{Error, Result};

const META_FILE: &str = "meta.json";
const PLACEMENTS_FILE: &str = "placements.jsonl";
const LABELS_FILE: &str = "labels.jsonl";

/// Reads and validates a session directory.
pub fn load_session(dir: impl AsRef<Path>) -> Result<Session> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: SessionMeta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;

    let channels = ChannelKind::ALL.map(|kind| load_channel(dir, kind, &meta));
    let [ecg, gsr, emg_l, emg_r] = channels;
    let session = Session {
        channels: [ecg?, gsr?, emg_l?, emg_r?],
        placements: read_jsonl(&dir.join(PLACEMENTS_FILE))?,
        labels: LabelTrack {
            entries: read_jsonl(&dir.join(LABELS_FILE))?,
        },
        meta,
    };
    session.validate()?;
    Ok(session)
}

/// Loads `root` itself when it is a session directory, otherwise every
/// immediate subdirectory holding a `meta.json`, in name order.
pub fn load_sessions(root: impl AsRef<Path>) -> Result<Vec<Session>> {
    let root = root.as_ref();
    if root.join(META_FILE).is_file() {
        return Ok(vec![load_session(root)?]);
    }
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::format(root, "no session directories found"));
    }
    dirs.iter().map(load_session).collect()
}

/// Writes a session directory; the inverse of [`load_session`].
pub fn save_session(session: &Session, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_all(dir, session).map_err(|source| Error::SessionWrite {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_all(dir: &Path, session: &Session) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&session.meta)? + "\n")?;
    for ch in &session.channels {
        let mut w = BufWriter::new(fs::File::create(dir.join(ch.kind.file_name()))?);
        writeln!(w, "# rate_hz={} t0_ms={}", ch.sample_rate_hz, ch.t0_ms)?;
        for v in &ch.samples {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
    }
    write_jsonl(&dir.join(PLACEMENTS_FILE), &session.placements)?;
    write_jsonl(&dir.join(LABELS_FILE), &session.labels.entries)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::format(path, e.to_string()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn load_channel(dir: &Path, kind: ChannelKind, meta: &SessionMeta) -> Result<SignalChannel> {
    let path = dir.join(kind.file_name());
    if !path.is_file() {
        return Err(Error::MissingChannel(kind));
    }
    let text = read_text(&path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&path, "empty file"))?;
    let (rate, t0) = parse_header(header).ok_or_else(|| {
        Error::format(&path, format!("bad header {header:?}, expected `# rate_hz=<r> t0_ms=<t>`"))
    })?;
    let expected = meta.rates.get(kind);
    if (rate - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(Error::format(
            &path,
            format!("rate {rate} Hz does not match meta rate {expected} Hz"),
        ));
    }
    let samples = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(&path, format!("line {}: {e}", i + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalChannel {
        kind,
        sample_rate_hz: rate,
        samples,
        t0_ms: t0,
    })
}

fn parse_header(line: &str) -> Option<(f64, i64)> {
    let rest = line.trim().strip_prefix('#')?;
    let mut rate = None;
    let mut t0 = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=')?;
        match key {
            "rate_hz" => rate = value.parse().ok(),
            "t0_ms" => t0 = value.parse().ok(),
            _ => {}
        }
    }
    Some((rate?, t0?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::tests::tiny_session;

    #[test]
    fn round_trip_is_lossless() {
        let mut s = tiny_session(4000);
        s.channels[0].samples[3] = 0.1 + 0.2;
        s.channels[2].samples[5] = -1.234_567_890_123_456_7e-7;
        let dir = tempfile::tempdir().unwrap();
        save_session(&s, dir.path()).unwrap();
        assert_eq!(load_session(dir.path()).unwrap(), s);
    }

    #[test]
    fn missing_gsr_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_session(&tiny_session(4000), dir.path()).unwrap();
        fs::remove_file(dir.path().join("gsr.csv")).unwrap();
        assert!(matches!(
            load_session(dir.path()),
            Err(Error::MissingChannel(ChannelKind::Gsr))
        ));
    }

    #[test]
    fn rate_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny_session(4000);
        s.meta.rates.ecg = 250.0;
        save_session(&s, dir.path()).unwrap();
        assert!(matches!(load_session(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn non_monotone_label_times_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny_session(4000);
        s.labels.entries[2].timestamp_ms = 0;
        save_session(&s, dir.path()).unwrap();
        assert!(matches!(load_session(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn header_parsing() {
        assert_eq!(parse_header("# rate_hz=1260 t0_ms=-5"), Some((1260.0, -5)));
        assert_eq!(parse_header("# t0_ms=7 rate_hz=125.5"), Some((125.5, 7)));
        assert_eq!(parse_header("rate_hz=1 t0_ms=0"), None);
        assert_eq!(parse_header("# rate_hz=1"), None);
    }
}
