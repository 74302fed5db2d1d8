use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::warn;

use super::{CorpusStats, Interaction, ItemText};
use crate::error::{Error, Result};

/// Ratings at or above this value are kept as positives.
pub const DEFAULT_MIN_RATING: f64 = 4.0;

/// Positives plus the full user and item universes seen in the raw ratings.
///
/// The universes include users and items whose ratings were all dropped by
/// binarization, which is what the published MovieLens-1M statistics count.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub interactions: Vec<Interaction>,
    /// One text per item in the universe, sorted by id.
    pub texts: Vec<ItemText>,
    pub users: BTreeSet<u64>,
}

impl LoadedCorpus {
    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            users: self.users.len(),
            items: self.texts.len(),
            positives: self.interactions.len(),
        }
    }

    /// Generic TSV ingestion (`user<TAB>item<TAB>rating<TAB>ts` plus
    /// `item<TAB>title<TAB>category`), with an optional k-core pass.
    pub fn from_tsv(ratings: &Path, items: &Path, min_rating: f64, min_core: usize) -> Result<Self> {
        let raw = load_ratings_tsv(ratings)?;
        let catalog = load_item_texts_tsv(items)?;
        let raw = if min_core > 1 { core_filter(raw, min_core) } else { raw };
        Ok(assemble(raw, catalog, min_rating))
    }
}

/// A raw rating line before binarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRating {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

/// Decodes one line as UTF-8, falling back to ISO-8859-1.
fn decode_line(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            (i + 1, decode_line(line))
        })
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} {raw:?}")))
}

fn parse_rating_fields(path: &Path, line: usize, fields: &[&str]) -> Result<RawRating> {
    if fields.len() != 4 {
        return Err(Error::parse(
            path,
            line,
            format!("expected 4 fields, found {}", fields.len()),
        ));
    }
    Ok(RawRating {
        user_id: field(path, line, "user id", fields[0])?,
        item_id: field(path, line, "item id", fields[1])?,
        rating: field(path, line, "rating", fields[2])?,
        timestamp: field(path, line, "timestamp", fields[3])?,
    })
}

fn load_movielens_ratings(path: &Path) -> Result<Vec<RawRating>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split("::").collect();
            parse_rating_fields(path, n, &fields)
        })
        .collect()
}

fn load_movielens_movies(path: &Path) -> Result<Vec<ItemText>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.splitn(3, "::").collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    n,
                    format!("expected MovieID::Title::Genres, found {} fields", fields.len()),
                ));
            }
            let genres = fields[2].trim();
            Ok(ItemText {
                item_id: field(path, n, "movie id", fields[0])?,
                title: fields[1].trim().to_owned(),
                category: (!genres.is_empty()).then(|| genres.to_owned()),
            })
        })
        .collect()
}

/// Loads MovieLens-1M `ratings.dat` / `movies.dat` and binarizes ratings
/// (>= 4 become positives).
pub fn load_movielens(ratings_path: &Path, movies_path: &Path) -> Result<LoadedCorpus> {
    load_movielens_with(ratings_path, movies_path, DEFAULT_MIN_RATING)
}

pub fn load_movielens_with(
    ratings_path: &Path,
    movies_path: &Path,
    min_rating: f64,
) -> Result<LoadedCorpus> {
    let raw = load_movielens_ratings(ratings_path)?;
    let catalog = load_movielens_movies(movies_path)?;
    Ok(assemble(raw, catalog, min_rating))
}

/// Reads `user<TAB>item<TAB>rating<TAB>timestamp`. A first line whose first
/// field is not numeric is treated as a header.
pub fn load_ratings_tsv(path: &Path) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (idx, (n, line)) in read_lines(path)?.into_iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && fields[0].trim().parse::<u64>().is_err() {
            continue;
        }
        out.push(parse_rating_fields(path, n, &fields)?);
    }
    Ok(out)
}

/// Reads `item<TAB>title<TAB>category` (category optional).
pub fn load_item_texts_tsv(path: &Path) -> Result<Vec<ItemText>> {
    let mut out = Vec::new();
    for (idx, (n, line)) in read_lines(path)?.into_iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && fields[0].trim().parse::<u64>().is_err() {
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                n,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        let category = fields.get(2).map(|c| c.trim()).filter(|c| !c.is_empty());
        out.push(ItemText {
            item_id: field(path, n, "item id", fields[0])?,
            title: manifest_unescape(fields[1].trim()),
            category: category.map(manifest_unescape),
        });
    }
    Ok(out)
}

fn manifest_unescape(s: &str) -> String {
    super::manifest::unescape(s)
}

/// Iteratively drops users and items with fewer than `min_count` ratings
/// until every remaining user and item meets the threshold.
pub fn core_filter(mut ratings: Vec<RawRating>, min_count: usize) -> Vec<RawRating> {
    loop {
        let mut per_user: HashMap<u64, usize> = HashMap::new();
        let mut per_item: HashMap<u64, usize> = HashMap::new();
        for r in &ratings {
            *per_user.entry(r.user_id).or_default() += 1;
            *per_item.entry(r.item_id).or_default() += 1;
        }
        let before = ratings.len();
        ratings.retain(|r| per_user[&r.user_id] >= min_count && per_item[&r.item_id] >= min_count);
        if ratings.len() == before {
            return ratings;
        }
    }
}

fn assemble(raw: Vec<RawRating>, catalog: Vec<ItemText>, min_rating: f64) -> LoadedCorpus {
    let catalog: BTreeMap<u64, ItemText> = catalog.into_iter().map(|t| (t.item_id, t)).collect();
    let mut users = BTreeSet::new();
    let mut rated = BTreeSet::new();
    let mut interactions = Vec::new();
    for r in raw {
        users.insert(r.user_id);
        rated.insert(r.item_id);
        if r.rating >= min_rating {
            interactions.push(Interaction::positive(r.user_id, r.item_id, r.timestamp));
        }
    }
    let mut missing = 0usize;
    let texts = rated
        .into_iter()
        .map(|id| match catalog.get(&id) {
            Some(t) if !t.title.trim().is_empty() => t.clone(),
            _ => {
                missing += 1;
                ItemText::synthetic(id)
            }
        })
        .collect();
    if missing > 0 {
        warn!("{missing} rated items have no text; using synthetic titles");
    }
    LoadedCorpus {
        interactions,
        texts,
        users,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body).unwrap();
        p
    }

    #[test]
    fn parses_movielens_line() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "ratings.dat", b"1::1193::5::978300760\n1::661::3::978302109\n");
        let m = write(
            &dir,
            "movies.dat",
            b"1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n661::James and the Giant Peach (1996)::Animation|Children's|Musical\n",
        );
        let c = load_movielens(&r, &m).unwrap();
        assert_eq!(c.interactions, vec![Interaction::positive(1, 1193, 978300760)]);
        assert_eq!(c.texts.len(), 2);
        assert_eq!(c.stats(), CorpusStats { users: 1, items: 2, positives: 1 });
        assert_eq!(c.texts[1].category.as_deref(), Some("Drama"));
    }

    #[test]
    fn empty_files_give_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "ratings.dat", b"");
        let m = write(&dir, "movies.dat", b"");
        let c = load_movielens(&r, &m).unwrap();
        assert!(c.interactions.is_empty());
        assert!(c.texts.is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "ratings.dat", b"1::2::5::10\n1::3::x::11\n");
        let m = write(&dir, "movies.dat", b"2::A::B\n");
        match load_movielens(&r, &m) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let r = write(&dir, "ratings2.dat", b"1::2::5\n");
        assert!(matches!(load_movielens(&r, &m), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_text_gets_synthetic_title() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "ratings.dat", b"1::7::4::10\n");
        let m = write(&dir, "movies.dat", b"");
        let c = load_movielens(&r, &m).unwrap();
        assert_eq!(c.texts, vec![ItemText::synthetic(7)]);
        assert_eq!(c.texts[0].title, "item 7");
    }

    #[test]
    fn latin1_titles_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "ratings.dat", b"1::9::4::10\n");
        let m = write(&dir, "movies.dat", b"9::Caf\xe9 (1990)::Drama\n");
        let c = load_movielens(&r, &m).unwrap();
        assert_eq!(c.texts[0].title, "Café (1990)");
    }

    #[test]
    fn tsv_with_header_and_core_filter() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            &dir,
            "r.tsv",
            b"user_id\titem_id\trating\ttimestamp\n1\t10\t5\t1\n1\t11\t5\t2\n2\t10\t5\t3\n2\t11\t4\t4\n3\t10\t5\t5\n",
        );
        let i = write(&dir, "i.tsv", b"10\tBook A\tFiction\n11\tBook B\t\n");
        let c = LoadedCorpus::from_tsv(&r, &i, 4.0, 2).unwrap();
        // user 3 has a single rating and is removed by the 2-core pass
        assert_eq!(c.stats(), CorpusStats { users: 2, items: 2, positives: 4 });
        assert_eq!(c.texts[1].category, None);
    }
}
