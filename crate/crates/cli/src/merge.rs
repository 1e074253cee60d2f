//! `bicap report-merge`: concatenate CSV reports.
//!
//! A single input is passed through unchanged. Several inputs must share a
//! header; rows gain a leading `source` column and each input's config line
//! is kept as a comment.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use crate::{emit, input_err, internal, Outcome};

struct Parsed {
    comments: Vec<String>,
    header: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

fn parse(path: &Path) -> anyhow::Result<(String, Parsed)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let comments = text.lines().take_while(|l| l.starts_with('#')).map(str::to_owned).collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().with_context(|| format!("header of {}", path.display()))?.clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>().with_context(|| format!("rows of {}", path.display()))?;
    Ok((text, Parsed { comments, header, rows }))
}

pub fn merge(paths: &[PathBuf], out: Option<&Path>) -> Outcome {
    let parsed: Vec<_> = paths.iter().map(|p| parse(p)).collect::<anyhow::Result<_>>().map_err(input_err)?;
    if let [(text, _)] = parsed.as_slice() {
        return emit(out, text);
    }
    let header = &parsed[0].1.header;
    if let Some(i) = parsed.iter().position(|(_, p)| &p.header != header) {
        return Err(input_err(anyhow!("{} has a different header from {}", paths[i].display(), paths[0].display())));
    }
    let mut text = String::new();
    for (path, (_, p)) in paths.iter().zip(&parsed) {
        for c in &p.comments {
            text.push_str(&format!("# {}: {}\n", path.display(), c.trim_start_matches('#').trim()));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("source").chain(header.iter())).map_err(internal)?;
    for (path, (_, p)) in paths.iter().zip(&parsed) {
        let source = path.display().to_string();
        for row in &p.rows {
            w.write_record(std::iter::once(source.as_str()).chain(row.iter())).map_err(internal)?;
        }
    }
    text.push_str(&String::from_utf8(w.into_inner().map_err(internal)?).map_err(internal)?);
    emit(out, &text)
}
