//! Tokenization, vocabulary construction, dataset loading, and the
//! POI-record-to-sentence pipeline.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub mod geo;

pub use geo::{encode_geo, encode_geo_u64, DEFAULT_BITS_PER_AXIS, MAX_BITS_PER_AXIS};

/// Reserved padding token; always id 0 and its embedding row stays zero.
pub const PAD_TOKEN: &str = "<PAD>";
/// Reserved out-of-vocabulary token; always id 1.
pub const UNK_TOKEN: &str = "<UNK>";
/// Id of [`PAD_TOKEN`].
pub const PAD_ID: u32 = 0;
/// Id of [`UNK_TOKEN`].
pub const UNK_ID: u32 = 1;

/// How raw text is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    /// Split on runs of whitespace.
    Whitespace,
    /// One token per non-whitespace Unicode scalar; the `<PAD>` literal is
    /// kept intact as a single separator token.
    PerChar,
}

impl std::str::FromStr for TokenizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizeMode::Whitespace),
            "per_char" => Ok(TokenizeMode::PerChar),
            other => Err(Error::Config(format!(
                "unknown tokenize mode `{other}` (expected whitespace or per_char)"
            ))),
        }
    }
}

impl std::fmt::Display for TokenizeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenizeMode::Whitespace => f.write_str("whitespace"),
            TokenizeMode::PerChar => f.write_str("per_char"),
        }
    }
}

/// A tokenized sentence. Token ids are assigned later by a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Deterministically split `text` into a [`Sentence`].
///
/// Empty text yields an empty token sequence; there is no error path.
pub fn tokenize(text: &str, mode: TokenizeMode) -> Sentence {
    let tokens = match mode {
        TokenizeMode::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
        TokenizeMode::PerChar => per_char_tokens(text),
    };
    Sentence {
        text: text.to_owned(),
        tokens,
    }
}

fn per_char_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix(PAD_TOKEN) {
            tokens.push(PAD_TOKEN.to_owned());
            rest = tail;
            continue;
        }
        let ch = rest.chars().next().expect("non-empty remainder");
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
        rest = &rest[ch.len_utf8()..];
    }
    tokens
}

/// Token table with dense ids; `<PAD>` and `<UNK>` are always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary containing only the reserved tokens.
    pub fn reserved() -> Self {
        let id_to_token = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    /// Rebuild a vocabulary from its id-ordered token list (checkpoint load).
    pub fn from_id_ordered(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Checkpoint(format!(
                "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token: tokens,
        })
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    /// Id for `token`, falling back to [`UNK_ID`].
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Encode a sentence into token ids, mapping unknowns to [`UNK_ID`].
    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence.tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Build a vocabulary from a corpus.
///
/// Tokens occurring at least `min_count` times receive ids in descending
/// frequency order, ties broken lexicographically; everything else encodes
/// to `<UNK>`. The result depends only on the corpus multiset, not on
/// sentence order.
pub fn build_vocab<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    if min_count == 0 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for token in &sentence.tokens {
            if token != PAD_TOKEN && token != UNK_TOKEN {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut vocab = Vocabulary::reserved();
    for (token, _) in ranked {
        let id = vocab.id_to_token.len() as u32;
        vocab.token_to_id.insert(token.to_owned(), id);
        vocab.id_to_token.push(token.to_owned());
    }
    Ok(vocab)
}

/// A point-of-interest record; `category` is kept as metadata and never
/// enters the concatenated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub category: String,
    pub name: String,
    pub address: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl PoiRecord {
    pub fn new(
        category: impl Into<String>,
        name: impl Into<String>,
        address: impl Into<String>,
        latitude: f64,
        longitude: f64,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Range("POI name must be non-empty".into()));
        }
        if !(-90.0..=90.0).contains(&latitude) || latitude.is_nan() {
            return Err(Error::Range(format!("latitude {latitude} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&longitude) || longitude.is_nan() {
            return Err(Error::Range(format!(
                "longitude {longitude} outside [-180, 180]"
            )));
        }
        Ok(PoiRecord {
            category: category.into(),
            name,
            address: address.into(),
            latitude,
            longitude,
        })
    }
}

/// Render a POI record as a character-tokenized sentence:
/// `address <PAD> name <PAD> geocode`.
pub fn poi_to_sentence(rec: &PoiRecord) -> Result<Sentence> {
    let code = encode_geo(rec.latitude, rec.longitude, DEFAULT_BITS_PER_AXIS)?;
    let text = format!("{} {PAD_TOKEN} {} {PAD_TOKEN} {}", rec.address, rec.name, code);
    Ok(tokenize(&text, TokenizeMode::PerChar))
}

/// Dataset flavour, matching the three supported file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Pairs,
    Triplets,
    Classes,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetKind::Pairs => f.write_str("pairs"),
            DatasetKind::Triplets => f.write_str("triplets"),
            DatasetKind::Classes => f.write_str("classes"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairRecord {
    pub first: Sentence,
    pub second: Sentence,
    /// 1 for a positive (same-intent) pair, 0 otherwise.
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct TripletRecord {
    pub anchor: Sentence,
    pub positive: Sentence,
    pub negative: Sentence,
}

#[derive(Debug, Clone)]
pub struct ClassRecord {
    pub sentence: Sentence,
    pub class_id: u32,
}

/// In-memory dataset; the variant fixes the record arity.
#[derive(Debug, Clone)]
pub enum Dataset {
    Pairs(Vec<PairRecord>),
    Triplets(Vec<TripletRecord>),
    Classes(Vec<ClassRecord>),
}

impl Dataset {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Pairs(_) => DatasetKind::Pairs,
            Dataset::Triplets(_) => DatasetKind::Triplets,
            Dataset::Classes(_) => DatasetKind::Classes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Pairs(r) => r.len(),
            Dataset::Triplets(r) => r.len(),
            Dataset::Classes(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All sentences in the dataset, for vocabulary construction.
    pub fn sentences(&self) -> Vec<&Sentence> {
        match self {
            Dataset::Pairs(rows) => rows
                .iter()
                .flat_map(|r| [&r.first, &r.second])
                .collect(),
            Dataset::Triplets(rows) => rows
                .iter()
                .flat_map(|r| [&r.anchor, &r.positive, &r.negative])
                .collect(),
            Dataset::Classes(rows) => rows.iter().map(|r| &r.sentence).collect(),
        }
    }
}

/// Load a tab-separated dataset file. Malformed rows are rejected with their
/// 1-based row number.
pub fn load_dataset(path: &Path, kind: DatasetKind, mode: TokenizeMode) -> Result<Dataset> {
    let content = fs::read_to_string(path)?;
    parse_dataset(&content, kind, mode)
}

/// Parse dataset rows from an in-memory string (one record per line).
pub fn parse_dataset(content: &str, kind: DatasetKind, mode: TokenizeMode) -> Result<Dataset> {
    let mut pairs = Vec::new();
    let mut triplets = Vec::new();
    let mut classes = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        match kind {
            DatasetKind::Pairs => {
                let [s1, s2, label] = expect_arity::<3>(&fields, row, "sent1\tsent2\tlabel")?;
                let label = match label.trim() {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::Parse {
                            row,
                            msg: format!("label must be 0 or 1, got `{other}`"),
                        })
                    }
                };
                pairs.push(PairRecord {
                    first: tokenize(s1, mode),
                    second: tokenize(s2, mode),
                    label,
                });
            }
            DatasetKind::Triplets => {
                let [a, p, n] = expect_arity::<3>(&fields, row, "anchor\tpos\tneg")?;
                triplets.push(TripletRecord {
                    anchor: tokenize(a, mode),
                    positive: tokenize(p, mode),
                    negative: tokenize(n, mode),
                });
            }
            DatasetKind::Classes => {
                let [s, class] = expect_arity::<2>(&fields, row, "sentence\tclass_id")?;
                let class_id = class.trim().parse::<u32>().map_err(|_| Error::Parse {
                    row,
                    msg: format!("class id must be a non-negative integer, got `{class}`"),
                })?;
                classes.push(ClassRecord {
                    sentence: tokenize(s, mode),
                    class_id,
                });
            }
        }
    }
    Ok(match kind {
        DatasetKind::Pairs => Dataset::Pairs(pairs),
        DatasetKind::Triplets => Dataset::Triplets(triplets),
        DatasetKind::Classes => Dataset::Classes(classes),
    })
}

fn expect_arity<'a, const N: usize>(
    fields: &[&'a str],
    row: usize,
    layout: &str,
) -> Result<[&'a str; N]> {
    <[&str; N]>::try_from(fields.to_vec()).map_err(|_| Error::Parse {
        row,
        msg: format!("expected {N} tab-separated fields ({layout}), got {}", fields.len()),
    })
}

/// Load POI records from `category \t name \t address \t lat \t lon` rows.
pub fn load_poi_records(path: &Path) -> Result<Vec<PoiRecord>> {
    let content = fs::read_to_string(path)?;
    parse_poi_records(&content)
}

/// Parse POI rows from an in-memory string.
pub fn parse_poi_records(content: &str) -> Result<Vec<PoiRecord>> {
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let [category, name, address, lat, lon] =
            expect_arity::<5>(&fields, row, "category\tname\taddress\tlat\tlon")?;
        let latitude = lat.trim().parse::<f64>().map_err(|_| Error::Parse {
            row,
            msg: format!("latitude must be a number, got `{lat}`"),
        })?;
        let longitude = lon.trim().parse::<f64>().map_err(|_| Error::Parse {
            row,
            msg: format!("longitude must be a number, got `{lon}`"),
        })?;
        let record = PoiRecord::new(category, name, address, latitude, longitude)
            .map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Convert POI records into a class-labeled dataset: the sentence is the
/// `address <PAD> name <PAD> geocode` rendering and the class id indexes the
/// record's category (categories sorted, ids dense from 0).
pub fn poi_class_dataset(records: &[PoiRecord]) -> Result<Dataset> {
    let mut categories: Vec<&str> = records.iter().map(|r| r.category.as_str()).collect();
    categories.sort_unstable();
    categories.dedup();
    let class_of: HashMap<&str, u32> = categories
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        rows.push(ClassRecord {
            sentence: poi_to_sentence(rec)?,
            class_id: class_of[rec.category.as_str()],
        });
    }
    Ok(Dataset::Classes(rows))
}

/// Load a whitespace-separated word-vector table (`token v1 .. vd` per line),
/// used for optional pretrained embedding initialization.
pub fn load_word_vectors(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let content = fs::read_to_string(path)?;
    let mut table = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        let mut parts = line.split_whitespace();
        let token = match parts.next() {
            Some(t) => t.to_owned(),
            None => continue,
        };
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    msg: format!("bad vector component `{v}`"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                row,
                msg: format!("expected {dim} components, got {}", values.len()),
            });
        }
        table.insert(token, values);
    }
    Ok(table)
}
