//! Item catalog: the music-release dataset and the query-term corpus.
//!
//! A catalog is immutable after load and shared by reference across the
//! whole simulation. Each item carries title/artist/album metadata plus a
//! non-empty set of genre tags; the query-term corpus is the union of all
//! tags, sorted lexicographically so every run sees the same term order.
//!
//! Two interchangeable file formats are accepted: a pipe-delimited text
//! table (`title|artist|album|tags`, tags semicolon-separated, one header
//! row) and a JSON array of records with the same fields. A deterministic
//! synthetic fixture generator stands in for the original dataset, which
//! is not distributed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::ItemId;

/// Item count of the reference dataset shape.
pub const REFERENCE_ITEM_COUNT: usize = 256;
/// Distinct tag count of the reference dataset shape.
pub const REFERENCE_TAG_COUNT: usize = 39;
/// Seed used for the canonical synthetic fixture.
pub const FIXTURE_SEED: u64 = 7;

/// A single music release.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub item_id: ItemId,
    pub title: String,
    pub artist: String,
    pub album: String,
    /// Genre tags; never empty, insertion order, no duplicates.
    pub tags: Vec<String>,
}

/// Lowercased lookup structures for one item, built once at load time.
#[derive(Debug, Clone)]
struct MatchData {
    /// Tokens of title, artist, album, and tags.
    tokens: HashSet<String>,
    /// Whole tags, lowercased. Catches multi-word tags that tokenizing splits.
    tags_lower: HashSet<String>,
}

/// The immutable item corpus plus the derived query-term corpus.
#[derive(Debug, Clone)]
pub struct Catalog {
    items: Vec<Item>,
    term_corpus: Vec<String>,
    term_index: HashMap<String, usize>,
    match_data: Vec<MatchData>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog file is empty")]
    Empty,
    #[error("bad header: expected `title|artist|album|tags`, found `{0}`")]
    BadHeader(String),
    #[error("row {row}: expected 4 `|`-delimited fields, found {found}")]
    BadFieldCount { row: usize, found: usize },
    #[error("row {row}: empty {field}")]
    EmptyField { row: usize, field: &'static str },
    #[error("row {row}: no tags")]
    NoTags { row: usize },
    #[error("row {row}: duplicate (title, artist, album), first seen at row {first}")]
    Duplicate { row: usize, first: usize },
    #[error("invalid JSON catalog: {0}")]
    Json(#[from] serde_json::Error),
}

/// One raw record before validation; `row` is the 1-based source position
/// used in error messages.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub row: usize,
    pub title: String,
    pub artist: String,
    pub album: String,
    pub tags: Vec<String>,
}

#[derive(Deserialize)]
struct JsonRecord {
    title: String,
    artist: String,
    album: String,
    tags: Vec<String>,
}

/// Lowercased alphanumeric runs of `text`.
fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

impl Catalog {
    /// Validate raw records and assemble the catalog. Item ids are dense in
    /// record order; the term corpus is the sorted union of all tags.
    pub fn from_records(records: Vec<RawRecord>) -> Result<Self, CatalogError> {
        if records.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen: HashMap<(String, String, String), usize> = HashMap::new();
        let mut items = Vec::with_capacity(records.len());
        let mut corpus: BTreeSet<String> = BTreeSet::new();
        for rec in records {
            if rec.title.trim().is_empty() {
                return Err(CatalogError::EmptyField {
                    row: rec.row,
                    field: "title",
                });
            }
            if rec.artist.trim().is_empty() {
                return Err(CatalogError::EmptyField {
                    row: rec.row,
                    field: "artist",
                });
            }
            let mut tags: Vec<String> = Vec::new();
            for tag in rec.tags {
                let tag = tag.trim().to_string();
                if !tag.is_empty() && !tags.contains(&tag) {
                    tags.push(tag);
                }
            }
            if tags.is_empty() {
                return Err(CatalogError::NoTags { row: rec.row });
            }
            let key = (rec.title.clone(), rec.artist.clone(), rec.album.clone());
            if let Some(&first) = seen.get(&key) {
                return Err(CatalogError::Duplicate {
                    row: rec.row,
                    first,
                });
            }
            seen.insert(key, rec.row);
            corpus.extend(tags.iter().cloned());
            items.push(Item {
                item_id: ItemId(items.len() as u32),
                title: rec.title,
                artist: rec.artist,
                album: rec.album,
                tags,
            });
        }
        let term_corpus: Vec<String> = corpus.into_iter().collect();
        let term_index = term_corpus
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let match_data = items
            .iter()
            .map(|item| {
                let mut tok: HashSet<String> = HashSet::new();
                tok.extend(tokens(&item.title));
                tok.extend(tokens(&item.artist));
                tok.extend(tokens(&item.album));
                for tag in &item.tags {
                    tok.extend(tokens(tag));
                }
                let tags_lower = item.tags.iter().map(|t| t.to_lowercase()).collect();
                MatchData {
                    tokens: tok,
                    tags_lower,
                }
            })
            .collect();
        Ok(Catalog {
            items,
            term_corpus,
            term_index,
            match_data,
        })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> &Item {
        &self.items[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// All distinct tags, sorted lexicographically.
    pub fn term_corpus(&self) -> &[String] {
        &self.term_corpus
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    /// Item ids from `library` whose title, artist, album, or tags contain
    /// `term` as a case-insensitive whole token (or equal a whole tag).
    /// Result is ascending and duplicate-free.
    pub fn items_matching_metadata(&self, term: &str, library: &[ItemId]) -> Vec<ItemId> {
        let term_l = term.to_lowercase();
        if term_l.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<ItemId> = library
            .iter()
            .copied()
            .filter(|id| {
                let md = &self.match_data[id.0 as usize];
                md.tokens.contains(&term_l) || md.tags_lower.contains(&term_l)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether the item's tags contain `term`, case-insensitively.
    pub fn item_has_tag(&self, id: ItemId, term: &str) -> bool {
        self.match_data[id.0 as usize]
            .tags_lower
            .contains(&term.to_lowercase())
    }

    /// Render the catalog in the pipe-delimited file format.
    pub fn to_pipe_string(&self) -> String {
        let mut out = String::from("title|artist|album|tags\n");
        for item in &self.items {
            writeln!(
                out,
                "{}|{}|{}|{}",
                item.title,
                item.artist,
                item.album,
                item.tags.join(";")
            )
            .expect("write to string");
        }
        out
    }
}

/// Load a catalog from disk. Files ending in `.json` are parsed as a JSON
/// array of records; anything else as the pipe-delimited table.
pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_json_catalog(&text)
    } else {
        parse_pipe_catalog(&text)
    }
}

/// Parse the pipe-delimited table format. Row numbers in errors are
/// 1-based file line numbers (the header is line 1).
pub fn parse_pipe_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(CatalogError::Empty),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
        }
    };
    if header.trim() != "title|artist|album|tags" {
        return Err(CatalogError::BadHeader(header.trim().to_string()));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 4 {
            return Err(CatalogError::BadFieldCount {
                row,
                found: fields.len(),
            });
        }
        records.push(RawRecord {
            row,
            title: fields[0].trim().to_string(),
            artist: fields[1].trim().to_string(),
            album: fields[2].trim().to_string(),
            tags: fields[3].split(';').map(|t| t.to_string()).collect(),
        });
    }
    Catalog::from_records(records)
}

/// Parse the JSON mirror format: an array of objects with `title`,
/// `artist`, `album`, and `tags` fields. Row numbers are 1-based array
/// positions.
pub fn parse_json_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let raw: Vec<JsonRecord> = serde_json::from_str(text)?;
    let records = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| RawRecord {
            row: i + 1,
            title: r.title,
            artist: r.artist,
            album: r.album,
            tags: r.tags,
        })
        .collect();
    Catalog::from_records(records)
}

const GENRES: [&str; REFERENCE_TAG_COUNT] = [
    "acid jazz",
    "afrobeat",
    "ambient",
    "bluegrass",
    "blues",
    "breakbeat",
    "chillwave",
    "chiptune",
    "classical",
    "darkwave",
    "deep house",
    "disco",
    "downtempo",
    "dream pop",
    "drone",
    "drum and bass",
    "dub",
    "dubstep",
    "folk",
    "funk",
    "garage rock",
    "glitch",
    "grime",
    "hip hop",
    "house",
    "idm",
    "indie rock",
    "jazz fusion",
    "lofi",
    "math rock",
    "neo soul",
    "post-punk",
    "post-rock",
    "progressive metal",
    "psytrance",
    "reggae",
    "shoegaze",
    "synthwave",
    "techno",
];

const ADJECTIVES: [&str; 48] = [
    "Amber", "Ancient", "Arctic", "Ashen", "Broken", "Burning", "Celestial", "Crimson",
    "Crystal", "Distant", "Drifting", "Dusty", "Electric", "Elusive", "Emerald", "Endless",
    "Fading", "Feral", "Flickering", "Forgotten", "Frozen", "Gilded", "Hollow", "Howling",
    "Infinite", "Iron", "Lunar", "Midnight", "Molten", "Nameless", "Neon", "Obsidian",
    "Pale", "Paper", "Phantom", "Quiet", "Radiant", "Restless", "Rusted", "Scarlet",
    "Silent", "Silver", "Solar", "Spectral", "Velvet", "Violet", "Wandering", "Wild",
];

const NOUNS: [&str; 48] = [
    "Anthem", "Archive", "Aurora", "Avenue", "Beacon", "Bloom", "Canyon", "Cascade",
    "Cathedral", "Circuit", "Cinder", "Comet", "Current", "Delta", "Drift", "Echo",
    "Ember", "Garden", "Harbor", "Horizon", "Lagoon", "Lantern", "Meadow", "Meridian",
    "Mirage", "Monolith", "Moth", "Nebula", "Orchard", "Outline", "Parade", "Pulse",
    "Reverie", "Ritual", "River", "Signal", "Sparrow", "Spiral", "Static", "Summit",
    "Tide", "Tundra", "Vapor", "Vault", "Voyage", "Whisper", "Willow", "Zenith",
];

const ARTIST_SUFFIXES: [&str; 12] = [
    "Collective", "Ensemble", "Orchestra", "Quartet", "Syndicate", "Division", "Project",
    "Brigade", "Society", "Union", "Assembly", "Bureau",
];

const EDITIONS: [&str; 6] = ["EP", "LP", "Single", "Vol. 1", "Vol. 2", "Deluxe Edition"];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

fn gen_title(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => format!("The {} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
        1 => format!("{} of the {} {}", pick(rng, &NOUNS), pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
        2 => format!("{} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
        _ => format!("{} / {}", pick(rng, &NOUNS), pick(rng, &NOUNS)),
    }
}

fn gen_artist(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => format!("{} {}", pick(rng, &NOUNS), pick(rng, &ARTIST_SUFFIXES)),
        1 => format!("The {} {}s", pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
        2 => format!("DJ {} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
        _ => format!("{} & {}", pick(rng, &NOUNS), pick(rng, &NOUNS)),
    }
}

fn gen_album(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => format!("{} {} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS), pick(rng, &EDITIONS)),
        1 => format!("{} {}", pick(rng, &NOUNS), pick(rng, &EDITIONS)),
        _ => format!("Live at the {} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS)),
    }
}

/// Generate the deterministic synthetic fixture: 256 releases over the 39
/// reference genres, each release tagged 2–5 times and every genre used by
/// at least 12 releases so no query term is vanishingly rare.
pub fn synthetic_catalog(seed: u64) -> Catalog {
    const MIN_ITEMS_PER_TAG: usize = 12;
    const MAX_TAGS_PER_ITEM: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut records: Vec<RawRecord> = Vec::with_capacity(REFERENCE_ITEM_COUNT);
    for row in 0..REFERENCE_ITEM_COUNT {
        let (title, artist, album) = loop {
            let t = gen_title(&mut rng);
            let ar = gen_artist(&mut rng);
            let al = gen_album(&mut rng);
            let key = (t.clone(), ar.clone(), al.clone());
            if seen.insert(key) {
                break (t, ar, al);
            }
        };
        let n_tags = rng.gen_range(2..=MAX_TAGS_PER_ITEM);
        let mut tag_idx: Vec<usize> = (0..GENRES.len()).collect();
        tag_idx.shuffle(&mut rng);
        let mut tags: Vec<String> = tag_idx[..n_tags].iter().map(|&i| GENRES[i].to_string()).collect();
        tags.sort();
        records.push(RawRecord {
            row: row + 2,
            title,
            artist,
            album,
            tags,
        });
    }
    // Top up rare genres so every term has a workable match pool.
    loop {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for rec in &records {
            for tag in &rec.tags {
                *counts.entry(tag.as_str()).or_default() += 1;
            }
        }
        let mut rare: Vec<&str> = GENRES
            .iter()
            .copied()
            .filter(|g| counts.get(g).copied().unwrap_or(0) < MIN_ITEMS_PER_TAG)
            .collect();
        rare.sort();
        let Some(genre) = rare.first().copied() else {
            break;
        };
        let genre = genre.to_string();
        let len = records.len();
        let start = rng.gen_range(0..len);
        for offset in 0..len {
            let rec = &mut records[(start + offset) % len];
            if rec.tags.len() < MAX_TAGS_PER_ITEM && !rec.tags.contains(&genre) {
                rec.tags.push(genre.clone());
                rec.tags.sort();
                break;
            }
        }
    }
    let catalog = Catalog::from_records(records).expect("synthetic records are valid");
    debug_assert_eq!(catalog.len(), REFERENCE_ITEM_COUNT);
    debug_assert_eq!(catalog.term_corpus().len(), REFERENCE_TAG_COUNT);
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn record(row: usize, title: &str, tags: &[&str]) -> RawRecord {
        RawRecord {
            row,
            title: title.to_string(),
            artist: format!("artist {title}"),
            album: String::new(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn fixture_matches_reference_shape() {
        let cat = synthetic_catalog(FIXTURE_SEED);
        assert_eq!(cat.len(), 256);
        assert_eq!(cat.term_corpus().len(), 39);
        // Every corpus term tags at least one item.
        for term in cat.term_corpus() {
            let all: Vec<ItemId> = cat.items().iter().map(|i| i.item_id).collect();
            let tagged = all.iter().any(|&id| cat.item_has_tag(id, term));
            assert!(tagged, "term {term} tags no item");
        }
        // Corpus is sorted and duplicate-free.
        let mut sorted = cat.term_corpus().to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, cat.term_corpus());
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = synthetic_catalog(3).to_pipe_string();
        let b = synthetic_catalog(3).to_pipe_string();
        assert_eq!(a, b);
        let c = synthetic_catalog(4).to_pipe_string();
        assert_ne!(a, c);
    }

    #[test]
    fn load_roundtrip_through_pipe_file() {
        let cat = synthetic_catalog(FIXTURE_SEED);
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(cat.to_pipe_string().as_bytes()).unwrap();
        let loaded = load_catalog(file.path()).unwrap();
        assert_eq!(loaded.len(), 256);
        assert_eq!(loaded.term_corpus().len(), 39);
        assert_eq!(loaded.items(), cat.items());
    }

    #[test]
    fn json_mirror_is_interchangeable() {
        let json = r#"[
            {"title": "A", "artist": "X", "album": "", "tags": ["a", "b"]},
            {"title": "B", "artist": "Y", "album": "", "tags": ["b", "c"]}
        ]"#;
        let cat = parse_json_catalog(json).unwrap();
        assert_eq!(cat.term_corpus(), &["a", "b", "c"]);
        assert_eq!(cat.item(ItemId(0)).title, "A");
    }

    #[test]
    fn singleton_tag_union() {
        let cat = Catalog::from_records(vec![record(2, "solo", &["ambient"])]).unwrap();
        assert_eq!(cat.term_corpus(), &["ambient"]);
    }

    #[test]
    fn corpus_is_tag_union() {
        let cat = Catalog::from_records(vec![
            record(2, "one", &["a", "b"]),
            record(3, "two", &["b", "c"]),
        ])
        .unwrap();
        assert_eq!(cat.term_corpus(), &["a", "b", "c"]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_catalog(Path::new("/definitely/not/here.txt")).unwrap_err();
        assert!(matches!(err, CatalogError::Io { .. }));
    }

    #[test]
    fn untagged_row_is_named() {
        let text = "title|artist|album|tags\nA|X|| \n";
        let err = parse_pipe_catalog(text).unwrap_err();
        match err {
            CatalogError::NoTags { row } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_triple_is_named() {
        let text = "title|artist|album|tags\nA|X|Z|a\nB|Y|Z|b\nA|X|Z|c\n";
        let err = parse_pipe_catalog(text).unwrap_err();
        match err {
            CatalogError::Duplicate { row, first } => {
                assert_eq!(row, 4);
                assert_eq!(first, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        assert!(matches!(parse_pipe_catalog(""), Err(CatalogError::Empty)));
        assert!(matches!(
            parse_pipe_catalog("title|artist|album|tags\n"),
            Err(CatalogError::Empty)
        ));
    }

    #[test]
    fn metadata_match_unique_tag() {
        let cat = Catalog::from_records(vec![
            record(2, "one", &["ambient"]),
            record(3, "two", &["techno"]),
        ])
        .unwrap();
        let lib = vec![ItemId(0), ItemId(1)];
        assert_eq!(cat.items_matching_metadata("ambient", &lib), vec![ItemId(0)]);
        assert_eq!(cat.items_matching_metadata("jazz", &lib), Vec::<ItemId>::new());
    }

    #[test]
    fn metadata_match_is_token_based_and_case_insensitive() {
        let mut rec = record(2, "Neon Cathedral", &["synthwave"]);
        rec.artist = "The Velvet Sparrows".to_string();
        let cat = Catalog::from_records(vec![rec]).unwrap();
        let lib = vec![ItemId(0)];
        assert_eq!(cat.items_matching_metadata("NEON", &lib).len(), 1);
        assert_eq!(cat.items_matching_metadata("velvet", &lib).len(), 1);
        // "neo" is a substring of "neon" but not a token.
        assert!(cat.items_matching_metadata("neo", &lib).is_empty());
        // Multi-word tags match as whole tags.
        let mut rec2 = record(2, "plain", &["drum and bass"]);
        rec2.artist = "someone".to_string();
        let cat2 = Catalog::from_records(vec![rec2]).unwrap();
        assert_eq!(cat2.items_matching_metadata("drum and bass", &[ItemId(0)]).len(), 1);
    }

    #[test]
    fn metadata_match_sorted_ascending() {
        // Items 2, 7, 9 share the tag; scan order in the library is shuffled.
        let mut records = Vec::new();
        for i in 0..10 {
            let tags: &[&str] = if [2usize, 7, 9].contains(&i) {
                &["wanted", "filler"]
            } else {
                &["filler"]
            };
            records.push(record(i + 2, &format!("item{i}"), tags));
        }
        let cat = Catalog::from_records(records).unwrap();
        let library: Vec<ItemId> = (0..10).map(ItemId).collect();
        // Independent oracle: plain linear scan over the fixture.
        let mut expected: Vec<ItemId> = library
            .iter()
            .copied()
            .filter(|&id| cat.item(id).tags.iter().any(|t| t == "wanted"))
            .collect();
        expected.sort_unstable();
        assert_eq!(expected, vec![ItemId(2), ItemId(7), ItemId(9)]);
        let got = cat.items_matching_metadata("wanted", &library);
        assert_eq!(got, expected);
    }

    #[test]
    fn metadata_match_subset_of_library() {
        let cat = synthetic_catalog(FIXTURE_SEED);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut lib: Vec<ItemId> = (0..cat.len() as u32).map(ItemId).collect();
            lib.shuffle(&mut rng);
            lib.truncate(rng.gen_range(1..60));
            lib.sort_unstable();
            let term = &cat.term_corpus()[rng.gen_range(0..cat.term_corpus().len())];
            let got = cat.items_matching_metadata(term, &lib);
            let mut deduped = got.clone();
            deduped.dedup();
            assert_eq!(got, deduped, "duplicates in result");
            assert!(got.windows(2).all(|w| w[0] < w[1]), "not ascending");
            assert!(got.iter().all(|id| lib.contains(id)), "result not in library");
        }
    }
}
