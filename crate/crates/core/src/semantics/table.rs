use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SAIDEMB1";

/// What an embedding row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Item,
    Profile,
}

impl EntryKind {
    pub fn code(self) -> u8 {
        match self {
            EntryKind::Item => 0,
            EntryKind::Profile => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EntryKind::Item),
            1 => Some(EntryKind::Profile),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Item => "item",
            EntryKind::Profile => "profile",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "item" | "0" => Some(EntryKind::Item),
            "profile" | "user" | "1" => Some(EntryKind::Profile),
            _ => None,
        }
    }
}

/// Dense vectors keyed by (kind, id), all of length `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<(EntryKind, u64), Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadDimension(0));
        }
        Ok(EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: EntryKind, id: u64) -> Option<&[f32]> {
        self.entries.get(&(kind, id)).map(Vec::as_slice)
    }

    pub fn contains(&self, kind: EntryKind, id: u64) -> bool {
        self.entries.contains_key(&(kind, id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntryKind, u64, &[f32])> {
        self.entries.iter().map(|(&(k, id), v)| (k, id, v.as_slice()))
    }

    /// Inserts a row, rejecting wrong lengths, non-finite values and
    /// duplicates.
    pub fn insert(&mut self, kind: EntryKind, id: u64, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::TruncatedRow {
                kind: kind.as_str(),
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding {
                kind: kind.as_str(),
                id,
            });
        }
        if self.entries.contains_key(&(kind, id)) {
            return Err(Error::DuplicateRow {
                kind: kind.as_str(),
                id,
            });
        }
        self.entries.insert((kind, id), vector);
        Ok(())
    }

    /// Replaces or adds a row (length and finiteness still checked).
    pub fn upsert(&mut self, kind: EntryKind, id: u64, vector: Vec<f32>) -> Result<()> {
        self.entries.remove(&(kind, id));
        self.insert(kind, id, vector)
    }
}

/// Loads a SAIDEMB binary file, or the debugging TSV form when the path ends
/// in `.tsv`.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    if path.extension().is_some_and(|e| e == "tsv") {
        return load_tsv(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn save_embedding_table(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(table)).map_err(|e| Error::io(&tmp, e))?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode(table: &EmbeddingTable) -> Vec<u8> {
    let row = 1 + 8 + 4 * table.dim;
    let mut out = Vec::with_capacity(20 + row * table.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(table.dim as u32).to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for (kind, id, v) in table.iter() {
        out.push(kind.code());
        out.extend_from_slice(&id.to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingTable> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        let found = &bytes[..bytes.len().min(8)];
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    if bytes.len() < 20 {
        return Err(Error::InvalidArgument("embedding header truncated".into()));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let mut table = EmbeddingTable::new(dim)?;
    let mut at = 20;
    for _ in 0..count {
        if at + 9 > bytes.len() {
            return Err(Error::TruncatedRow {
                kind: "row",
                id: 0,
                expected: dim,
                found: 0,
            });
        }
        let code = bytes[at];
        let id = u64::from_le_bytes(bytes[at + 1..at + 9].try_into().unwrap());
        let kind = EntryKind::from_code(code).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown embedding kind code {code} for id {id}"))
        })?;
        at += 9;
        let available = (bytes.len() - at) / 4;
        if available < dim {
            return Err(Error::TruncatedRow {
                kind: kind.as_str(),
                id,
                expected: dim,
                found: available,
            });
        }
        let v: Vec<f32> = bytes[at..at + 4 * dim]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        at += 4 * dim;
        table.insert(kind, id, v)?;
    }
    Ok(table)
}

/// `kind<TAB>id<TAB>v1,v2,...`, with an optional `# dim=N` first line.
fn load_tsv(path: &Path) -> Result<EmbeddingTable> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in body.lines().enumerate() {
        let n = n + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(d) = rest.trim().strip_prefix("dim=") {
                let d: i64 = d
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, n, "invalid dim header"))?;
                if d <= 0 {
                    return Err(Error::BadDimension(d));
                }
                table = Some(EmbeddingTable::new(d as usize)?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, n, "expected kind<TAB>id<TAB>values"));
        }
        let kind = EntryKind::parse(fields[0])
            .ok_or_else(|| Error::parse(path, n, format!("unknown kind {:?}", fields[0])))?;
        let id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("invalid id {:?}", fields[1])))?;
        let v = fields[2]
            .split(',')
            .map(|x| x.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|_| Error::parse(path, n, format!("invalid vector for id {id}")))?;
        let t = match &mut table {
            Some(t) => t,
            None => table.insert(EmbeddingTable::new(v.len())?),
        };
        t.insert(kind, id, v)?;
    }
    table.ok_or(Error::BadDimension(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3).unwrap();
        t.insert(EntryKind::Item, 5, vec![0.1, -0.2, 0.3]).unwrap();
        t.insert(EntryKind::Profile, 5, vec![1.0, 0.0, f32::MIN_POSITIVE]).unwrap();
        t
    }

    #[test]
    fn empty_table_keeps_dim() {
        let t = EmbeddingTable::new(384).unwrap();
        let back = decode(&encode(&t)).unwrap();
        assert_eq!(back.dim(), 384);
        assert!(back.is_empty());
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample_table());
        assert_eq!(&bytes[..8], b"SAIDEMB1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 20 + 2 * (1 + 8 + 12));
        assert_eq!(bytes[20], 0);
    }

    #[test]
    fn load_errors_are_distinct() {
        let good = encode(&sample_table());

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::BadMagic { .. })));

        let mut zero_dim = good.clone();
        zero_dim[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&zero_dim), Err(Error::BadDimension(0))));

        let truncated = &good[..good.len() - 2];
        match decode(truncated) {
            Err(Error::TruncatedRow { id, kind, .. }) => {
                assert_eq!((kind, id), ("profile", 5));
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut dup = good.clone();
        // rewrite the second record as another item 5
        dup[20 + 21] = 0;
        assert!(matches!(decode(&dup), Err(Error::DuplicateRow { id: 5, .. })));
    }

    #[test]
    fn file_round_trip_and_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.bin");
        save_embedding_table(&p, &sample_table()).unwrap();
        assert_eq!(load_embedding_table(&p).unwrap(), sample_table());

        let tsv = dir.path().join("emb.tsv");
        fs::write(&tsv, "item\t5\t0.1,-0.2,0.3\nprofile\t5\t1,0,0\n").unwrap();
        let t = load_embedding_table(&tsv).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get(EntryKind::Item, 5).unwrap(), &[0.1, -0.2, 0.3]);

        fs::write(&tsv, "item\t5\t0.1,-0.2,0.3\nitem\t9\t1,0\n").unwrap();
        match load_embedding_table(&tsv) {
            Err(Error::TruncatedRow { id, .. }) => assert_eq!(id, 9),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(&tsv, "# dim=4\n").unwrap();
        assert_eq!(load_embedding_table(&tsv).unwrap().dim(), 4);
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            rows in proptest::collection::btree_map(
                (0u8..2, any::<u64>()),
                proptest::collection::vec(-1.0e6f32..1.0e6, 4),
                0..20,
            )
        ) {
            let mut t = EmbeddingTable::new(4).unwrap();
            for ((k, id), v) in rows {
                t.insert(EntryKind::from_code(k).unwrap(), id, v).unwrap();
            }
            let back = decode(&encode(&t)).unwrap();
            for ((_, _, a), (_, _, b)) in t.iter().zip(back.iter()) {
                prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(back, t);
        }
    }
}
