//! Dataset persistence: a JSON header line plus one JSON record per item.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, GenConfig, QaItem, Vocabulary};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    seed: u64,
    config: GenConfig,
    vocab: Vocabulary,
    item_count: usize,
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header = Header {
        format_version: FORMAT_VERSION,
        seed: ds.seed,
        config: ds.config.clone(),
        vocab: ds.vocab.clone(),
        item_count: ds.items.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for item in &ds.items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: display.clone(),
        line,
        msg,
    };
    let f = fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))??;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let mut items: Vec<QaItem> = Vec::with_capacity(header.item_count);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 2;
        if items.len() == header.item_count {
            return Err(parse_err(lineno, "trailing data after declared items".into()));
        }
        let item: QaItem =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("bad item: {e}")))?;
        items.push(item);
    }
    if items.len() != header.item_count {
        return Err(parse_err(
            items.len() + 1,
            format!(
                "file truncated: header declares {} items, found {}",
                header.item_count,
                items.len()
            ),
        ));
    }
    Ok(Dataset {
        seed: header.seed,
        config: header.config,
        vocab: header.vocab,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::generator::generate_dataset;

    fn sample() -> Dataset {
        let cfg = GenConfig {
            feature_dim: 8,
            ..GenConfig::default()
        };
        generate_dataset(&cfg, 5, 100).unwrap()
    }

    #[test]
    fn round_trip_preserves_the_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = sample();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn identical_seed_and_config_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
        write_dataset(&sample(), &p1).unwrap();
        write_dataset(&sample(), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&sample(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let keep: Vec<&str> = text.lines().take(40).collect();
        fs::write(&path, keep.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&sample(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let patched = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert_ne!(text, patched);
        fs::write(&path, patched).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn corrupt_record_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&sample(), &path).unwrap();
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[3] = "{not json".into();
        fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
