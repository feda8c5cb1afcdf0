//! Plain whitespace-separated text and a small ASCII PLY subset.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlainText,
    PlyAscii,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::PlainText,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// Chooses the parser from the content: PLY when the first line is `ply`.
pub fn parse_cloud(text: &str) -> Result<PointSet> {
    if text.lines().next().map(str::trim) == Some("ply") {
        parse_ply(text)
    } else {
        parse_text(text)
    }
}

/// One point per line; blank lines and `#` comments are skipped.
pub fn parse_text(text: &str) -> Result<PointSet> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals = t
            .split_whitespace()
            .map(|tok| parse_number(tok, line))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {d} values, found {}", vals.len()),
                ))
            }
            _ => {}
        }
        coords.extend(vals);
    }
    let dim = dim.ok_or_else(|| parse_err(0, "no points in file"))?;
    PointSet::new(dim, coords)
}

pub fn parse_ply(text: &str) -> Result<PointSet> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing ply magic")),
    }
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        let (line, t) = lines
            .next()
            .ok_or_else(|| parse_err(0, "header ends before end_header"))?;
        let toks: Vec<&str> = t.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(parse_err(line, format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(parse_err(line, "duplicate vertex element"));
                }
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| parse_err(line, format!("bad vertex count {n:?}")))?,
                );
                in_vertex = true;
            }
            ["element", name, ..] => {
                return Err(parse_err(line, format!("unsupported PLY element {name:?}")))
            }
            ["property", ty, name] if in_vertex => {
                if !matches!(*ty, "float" | "double" | "float32" | "float64") {
                    return Err(parse_err(line, format!("unsupported property type {ty}")));
                }
                props.push((line, name.to_string()));
            }
            ["property", ..] => return Err(parse_err(line, format!("unsupported property: {t}"))),
            ["end_header"] => break,
            _ => return Err(parse_err(line, format!("unrecognized header line {t:?}"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(0, "no vertex element"))?;
    let names: Vec<&str> = props.iter().map(|(_, n)| n.as_str()).collect();
    if names != ["x", "y", "z"] {
        let line = props.first().map(|p| p.0).unwrap_or(0);
        return Err(parse_err(
            line,
            format!("expected properties x y z, found {names:?}"),
        ));
    }
    let mut coords = Vec::with_capacity(count * 3);
    let mut seen = 0;
    for (line, t) in lines {
        if t.is_empty() {
            continue;
        }
        if seen == count {
            return Err(parse_err(line, "more vertex lines than the header declares"));
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected 3 values, found {}", toks.len()),
            ));
        }
        for tok in toks {
            coords.push(parse_number(tok, line)?);
        }
        seen += 1;
    }
    if seen != count {
        return Err(parse_err(
            0,
            format!("header declares {count} vertices, file has {seen}"),
        ));
    }
    PointSet::new(3, coords)
}

pub fn format_text(points: &PointSet) -> String {
    let mut s = String::with_capacity(points.len() * points.dim() * 20);
    for p in points.iter() {
        let mut first = true;
        for v in p {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn format_ply(points: &PointSet) -> Result<String> {
    if points.dim() != 3 {
        return Err(Error::UnsupportedDimension(points.dim()));
    }
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    s.push_str(&format_text(points));
    Ok(s)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointSet> {
    parse_cloud(&std::fs::read_to_string(path)?)
}

pub fn write_cloud(path: impl AsRef<Path>, points: &PointSet) -> Result<()> {
    let path = path.as_ref();
    let text = match CloudFormat::from_path(path) {
        CloudFormat::PlyAscii => format_ply(points)?,
        CloudFormat::PlainText => format_text(points),
    };
    std::fs::write(path, text)?;
    Ok(())
}
