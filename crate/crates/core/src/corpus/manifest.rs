//! Texts manifest: the TSV handed to an external sentence encoder.
//!
//! One row per text, `kind<TAB>id<TAB>text`, where kind is `item` or
//! `profile`. Backslash, tab, newline and carriage return inside the text are
//! written as `\\`, `\t`, `\n` and `\r`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::semantics::EntryKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub kind: EntryKind,
    pub id: u64,
    pub text: String,
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// The manifest text exactly as `write_manifest` stores it.
pub fn render_manifest(rows: &[ManifestRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(row.kind.as_str());
        out.push('\t');
        out.push_str(&row.id.to_string());
        out.push('\t');
        out.push_str(&escape(&row.text));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    fs::write(path, render_manifest(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (n, line) in body.lines().enumerate() {
        let n = n + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(kind), Some(id), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, n, "expected kind<TAB>id<TAB>text"));
        };
        let kind = EntryKind::parse(kind)
            .ok_or_else(|| Error::parse(path, n, format!("unknown kind {kind:?}")))?;
        let id: u64 = id
            .parse()
            .map_err(|_| Error::parse(path, n, format!("invalid id {id:?}")))?;
        if !seen.insert((kind, id)) {
            return Err(Error::parse(path, n, format!("duplicate {} {id}", kind.as_str())));
        }
        rows.push(ManifestRow {
            kind,
            id,
            text: unescape(text),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manifest_round_trip_with_control_chars() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let rows = vec![
            ManifestRow {
                kind: EntryKind::Item,
                id: 3,
                text: "Toy Story (1995)\tAnimation\nline two \\ backslash".into(),
            },
            ManifestRow {
                kind: EntryKind::Profile,
                id: 1,
                text: String::new(),
            },
        ];
        write_manifest(&path, &rows).unwrap();
        let body = fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 2);
        assert!(body.starts_with("item\t3\tToy Story (1995)\\tAnimation\\nline two \\\\ backslash\n"));
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(&path, "item\t1\ta\nitem\t1\tb\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn escape_round_trips(s in "[a-z\\\\\t\n\r ]{0,40}") {
            let e = escape(&s);
            prop_assert!(!e.contains('\t') && !e.contains('\n'));
            prop_assert_eq!(unescape(&e), s);
        }
    }
}
