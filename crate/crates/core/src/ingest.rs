//! Message corpora: parsing, block streams and initial node features.
//!
//! A corpus is UTF-8 JSON lines, one message per line:
//!
//! ```text
//! {"id":"m1","tokens":["goal","match"],"author":"u1","mentioned_users":[],
//!  "hashtags":["#final"],"entities":["madrid"],"timestamp":"2012-10-11T06:00:00Z","event_id":3}
//! ```
//!
//! Node features are the mean word vector of the message tokens followed by a
//! two-component temporal feature derived from the OLE date.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike, Utc};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// One social message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    pub author: String,
    #[serde(default)]
    pub mentioned_users: Vec<String>,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(with = "whole_seconds")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub event_id: Option<i64>,
}

mod whole_seconds {
    use chrono::{DateTime, SecondsFormat, Timelike, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        let parsed = DateTime::parse_from_rfc3339(&raw)
            .map_err(|e| serde::de::Error::custom(format!("timestamp `{raw}`: {e}")))?
            .with_timezone(&Utc);
        Ok(parsed.with_nanosecond(0).unwrap_or(parsed))
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_messages<R: BufRead>(source: R) -> Result<Vec<MessageRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MessageRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_messages<W: Write>(mut sink: W, records: &[MessageRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Chronological, disjoint blocks `M0..Mi`.
///
/// `boundaries[j]..boundaries[j + 1]` is the half-open interval of block `j`,
/// so there is one more boundary than blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStream {
    pub blocks: Vec<Vec<MessageRecord>>,
    pub boundaries: Vec<DateTime<Utc>>,
}

impl BlockStream {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Splits records into an initial block of `initial_days` followed by blocks
/// of `block_days`, anchored at UTC midnight of the earliest message. Empty
/// blocks after the last message are dropped; empty blocks in between are
/// kept so block indices stay aligned with calendar windows.
pub fn split_blocks(
    records: &[MessageRecord],
    initial_days: u32,
    block_days: u32,
) -> Result<BlockStream> {
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty corpus".into()));
    }
    if initial_days == 0 || block_days == 0 {
        return Err(Error::InvalidInput(
            "initial_days and block_days must be at least 1".into(),
        ));
    }
    let earliest = records
        .iter()
        .map(|r| r.timestamp)
        .min()
        .expect("non-empty");
    let origin = Utc.from_utc_datetime(
        &earliest
            .date_naive()
            .and_hms_opt(0, 0, 0)
            .expect("midnight"),
    );
    let initial = i64::from(initial_days) * SECONDS_PER_DAY;
    let step = i64::from(block_days) * SECONDS_PER_DAY;

    let block_of = |ts: &DateTime<Utc>| -> usize {
        let elapsed = (*ts - origin).num_seconds();
        if elapsed < initial {
            0
        } else {
            1 + ((elapsed - initial) / step) as usize
        }
    };

    let n_blocks = records
        .iter()
        .map(|r| block_of(&r.timestamp))
        .max()
        .expect("non-empty")
        + 1;
    let mut blocks: Vec<Vec<MessageRecord>> = vec![Vec::new(); n_blocks];
    for r in records {
        blocks[block_of(&r.timestamp)].push(r.clone());
    }
    for block in &mut blocks {
        block.sort_by_key(|r| r.timestamp);
    }

    let mut boundaries = Vec::with_capacity(n_blocks + 1);
    boundaries.push(origin);
    for j in 0..n_blocks {
        let end = origin + Duration::seconds(initial + step * j as i64);
        boundaries.push(end);
    }
    Ok(BlockStream { blocks, boundaries })
}

fn ole_epoch() -> DateTime<Utc> {
    Utc.from_utc_datetime(
        &NaiveDate::from_ymd_opt(1899, 12, 30)
            .expect("valid date")
            .and_hms_opt(0, 0, 0)
            .expect("valid time"),
    )
}

/// Unscaled temporal feature: whole days since the OLE epoch and the elapsed
/// fraction of the current day.
pub fn temporal_feature(timestamp: DateTime<Utc>) -> Result<[f64; 2]> {
    let secs = (timestamp - ole_epoch()).num_seconds();
    if secs < 0 {
        return Err(Error::BeforeEpoch(timestamp.to_rfc3339()));
    }
    let days = secs.div_euclid(SECONDS_PER_DAY);
    let rem = secs.rem_euclid(SECONDS_PER_DAY);
    Ok([days as f64, rem as f64 / SECONDS_PER_DAY as f64])
}

/// Min-max scaling of both temporal components, fitted once per corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalScaler {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl TemporalScaler {
    pub fn fit(records: &[MessageRecord]) -> Result<Self> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for r in records {
            let f = temporal_feature(r.timestamp)?;
            for c in 0..2 {
                min[c] = min[c].min(f[c]);
                max[c] = max[c].max(f[c]);
            }
        }
        if records.is_empty() {
            return Ok(Self {
                min: [0.0; 2],
                max: [0.0; 2],
            });
        }
        Ok(Self { min, max })
    }

    pub fn transform(&self, raw: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for c in 0..2 {
            let span = self.max[c] - self.min[c];
            out[c] = if span > 0.0 {
                ((raw[c] - self.min[c]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        out
    }
}

/// Word vectors in word2vec text format: a `count dim` header followed by
/// `token v1 .. vd` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    order: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: vector.len(),
                context: "embedding table vector",
            });
        }
        let token = token.into();
        if self.vectors.insert(token.clone(), vector).is_none() {
            self.order.push(token);
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        message: "missing `count dim` header".into(),
                    })
                }
            }
        };
        let fields: Vec<&str> = header.1.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: header.0,
                message: format!("header: {e}"),
            })
        };
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: header.0,
                message: "header must be `count dim`".into(),
            });
        }
        let count = parse_usize(fields[0])?;
        let dim = parse_usize(fields[1])?;
        let mut table = Self::new(dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let vector = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if vector.len() != dim {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {dim} components, got {}", vector.len()),
                });
            }
            table.insert(token, vector)?;
        }
        if table.len() != count {
            return Err(Error::Parse {
                line: header.0,
                message: format!("header announces {count} vectors, found {}", table.len()),
            });
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "{} {}", self.len(), self.dim)?;
        for token in &self.order {
            write!(sink, "{token}")?;
            for v in &self.vectors[token] {
                write!(sink, " {v}")?;
            }
            writeln!(sink)?;
        }
        Ok(())
    }
}

/// Mean of the in-vocabulary token vectors. Messages without any known token
/// get a unit vector seeded from their sorted tokens, so two such messages
/// only coincide when their token multisets do.
pub fn semantic_feature(
    tokens: &[String],
    table: &EmbeddingTable,
    d_sem: usize,
    fallback_seed: u64,
) -> Vec<f64> {
    let mut sum = vec![0.0; d_sem];
    let mut hits = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        let inv = 1.0 / hits as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
        return sum;
    }
    fallback_vector(tokens, d_sem, fallback_seed)
}

fn fallback_vector(tokens: &[String], d_sem: usize, fallback_seed: u64) -> Vec<f64> {
    let mut sorted: Vec<&str> = tokens.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    let mut hasher = Sha256::new();
    hasher.update(fallback_seed.to_le_bytes());
    for t in sorted {
        hasher.update((t.len() as u64).to_le_bytes());
        hasher.update(t.as_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let v: Vec<f64> = (0..d_sem)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 || d_sem == 0 {
            return v
                .into_iter()
                .map(|x| x / norm.max(f64::MIN_POSITIVE))
                .collect();
        }
    }
}

/// Turns messages into `d_sem + 2` dimensional feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub d_sem: usize,
    pub fallback_seed: u64,
    pub scaler: TemporalScaler,
}

impl Featurizer {
    pub fn fit(records: &[MessageRecord], d_sem: usize, fallback_seed: u64) -> Result<Self> {
        Ok(Self {
            d_sem,
            fallback_seed,
            scaler: TemporalScaler::fit(records)?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.d_sem + 2
    }

    pub fn features(&self, block: &[MessageRecord], table: &EmbeddingTable) -> Result<Array2<f64>> {
        if !table.is_empty() && table.dim() != self.d_sem {
            return Err(Error::Dimension {
                expected: self.d_sem,
                actual: table.dim(),
                context: "embedding table dimension",
            });
        }
        let mut out = Array2::zeros((block.len(), self.feature_dim()));
        for (row, r) in out.rows_mut().into_iter().zip(block) {
            let sem = semantic_feature(&r.tokens, table, self.d_sem, self.fallback_seed);
            let temporal = self.scaler.transform(temporal_feature(r.timestamp)?);
            let mut row = row;
            for (dst, src) in row.iter_mut().zip(sem.iter().chain(temporal.iter())) {
                *dst = *src;
            }
        }
        Ok(out)
    }
}

/// Seconds-resolution timestamp helper used by tests and the generator.
pub fn utc(y: i32, m: u32, d: u32, hh: u32, mm: u32, ss: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, hh, mm, ss)
        .single()
        .expect("valid calendar instant")
        .with_nanosecond(0)
        .expect("zero nanos")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, ts: DateTime<Utc>) -> MessageRecord {
        MessageRecord {
            id: id.into(),
            tokens: vec![],
            author: "u".into(),
            mentioned_users: vec![],
            hashtags: vec![],
            entities: vec![],
            timestamp: ts,
            event_id: None,
        }
    }

    #[test]
    fn parses_full_line() {
        let line = r##"{"id":"a","tokens":["x"],"author":"u1","mentioned_users":["u2"],"hashtags":["#h"],"entities":["e"],"timestamp":"2012-10-11T06:00:00Z","event_id":3,"extra":1}"##;
        let recs = parse_messages(line.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].event_id, Some(3));
        assert_eq!(recs[0].mentioned_users, vec!["u2".to_string()]);
    }

    #[test]
    fn missing_timestamp_reports_line() {
        let src = "{\"id\":\"a\",\"author\":\"u\",\"timestamp\":\"2012-10-11T06:00:00Z\"}\n\
                   {\"id\":\"b\",\"author\":\"u\"}\n";
        match parse_messages(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_hashtags_and_null_event() {
        let src = r#"{"id":"a","author":"u","hashtags":[],"timestamp":"2012-10-11T06:00:00Z","event_id":null}"#;
        let recs = parse_messages(src.as_bytes()).unwrap();
        assert!(recs[0].hashtags.is_empty());
        assert_eq!(recs[0].event_id, None);
    }

    #[test]
    fn duplicate_id_is_named() {
        let src = "{\"id\":\"dup\",\"author\":\"u\",\"timestamp\":\"2012-10-11T06:00:00Z\"}\n\
                   {\"id\":\"dup\",\"author\":\"v\",\"timestamp\":\"2012-10-11T07:00:00Z\"}\n";
        match parse_messages(src.as_bytes()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "dup"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_nine_days() {
        let base = utc(2012, 10, 10, 3, 0, 0);
        let recs: Vec<_> = (0..10)
            .map(|i| record(&format!("m{i}"), base + Duration::hours(i * 22)))
            .collect();
        // hours 0..198 span days 0..8
        let s = split_blocks(&recs, 7, 1).unwrap();
        assert_eq!(s.len(), 3);
        for (j, block) in s.blocks.iter().enumerate() {
            for r in block {
                assert!(r.timestamp >= s.boundaries[j] && r.timestamp < s.boundaries[j + 1]);
            }
        }
        let day = |r: &MessageRecord| (r.timestamp - s.boundaries[0]).num_days();
        assert!(s.blocks[0].iter().all(|r| day(r) <= 6));
        assert!(s.blocks[1].iter().all(|r| day(r) == 7));
        assert!(s.blocks[2].iter().all(|r| day(r) == 8));
    }

    #[test]
    fn split_single_day() {
        let base = utc(2012, 10, 10, 0, 0, 0);
        let recs: Vec<_> = (0..5)
            .map(|i| record(&format!("m{i}"), base + Duration::hours(i)))
            .collect();
        let s = split_blocks(&recs, 7, 1).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.blocks[0].len(), 5);
    }

    #[test]
    fn split_twenty_eight_days() {
        let base = utc(2012, 10, 10, 0, 0, 0);
        let recs: Vec<_> = (0..28 * 4)
            .map(|i| record(&format!("m{i}"), base + Duration::hours(6 * i + 1)))
            .collect();
        let s = split_blocks(&recs, 7, 1).unwrap();
        // brute force: assign each record by scanning windows
        let mut counts = vec![0usize; 40];
        for r in &recs {
            let h = (r.timestamp - base).num_hours();
            let idx = (0..40)
                .find(|&j| {
                    let (lo, hi) = if j == 0 {
                        (0, 7 * 24)
                    } else {
                        ((6 + j) * 24, (7 + j) * 24)
                    };
                    h >= lo as i64 && h < hi as i64
                })
                .unwrap();
            counts[idx] += 1;
        }
        let expected = counts.iter().rposition(|&c| c > 0).unwrap() + 1;
        assert_eq!(expected, 22);
        assert_eq!(s.len(), expected);
        for (j, b) in s.blocks.iter().enumerate() {
            assert_eq!(b.len(), counts[j]);
        }
    }

    #[test]
    fn temporal_examples() {
        assert_eq!(
            temporal_feature(utc(1899, 12, 30, 0, 0, 0)).unwrap(),
            [0.0, 0.0]
        );
        assert_eq!(
            temporal_feature(utc(1900, 1, 1, 12, 0, 0)).unwrap(),
            [2.0, 0.5]
        );
        assert!(matches!(
            temporal_feature(utc(1899, 12, 29, 23, 0, 0)),
            Err(Error::BeforeEpoch(_))
        ));
    }

    /// Independent day count: whole years and months summed by hand.
    fn days_since_ole(y: i32, m: u32, d: u32) -> i64 {
        let leap = |y: i32| (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        let month_len = |y: i32, m: u32| match m {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            _ => {
                if leap(y) {
                    29
                } else {
                    28
                }
            }
        };
        // 1899-12-30 -> 1900-01-01 is 2 days
        let mut days = 2i64;
        for yy in 1900..y {
            days += if leap(yy) { 366 } else { 365 };
        }
        for mm in 1..m {
            days += month_len(y, mm);
        }
        days + i64::from(d) - 1
    }

    #[test]
    fn temporal_matches_calendar_oracle() {
        let expected_days = days_since_ole(2012, 10, 11);
        assert_eq!(expected_days, 41193);
        let f = temporal_feature(utc(2012, 10, 11, 6, 0, 0)).unwrap();
        assert_eq!(f, [expected_days as f64, 0.25]);
    }

    #[test]
    fn semantic_examples() {
        let mut table = EmbeddingTable::new(2);
        table.insert("w1", vec![1.0, 3.0]).unwrap();
        table.insert("w2", vec![3.0, -1.0]).unwrap();
        assert_eq!(
            semantic_feature(&["w1".into()], &table, 2, 0),
            vec![1.0, 3.0]
        );
        assert_eq!(
            semantic_feature(&["w1".into(), "w2".into(), "oov".into()], &table, 2, 0),
            vec![2.0, 1.0]
        );
        let oov = vec!["zz".to_string(), "yy".to_string()];
        let a = semantic_feature(&oov, &table, 2, 9);
        let b = semantic_feature(&oov, &table, 2, 9);
        assert_eq!(a, b);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let other = semantic_feature(&["xx".to_string()], &table, 2, 9);
        assert_ne!(a, other);
    }

    #[test]
    fn embedding_table_round_trip() {
        let src = "2 3\nfoo 1 2 3\nbar -0.5 0 1e-3\n";
        let table = EmbeddingTable::read(src.as_bytes()).unwrap();
        assert_eq!(table.get("bar"), Some(&[-0.5, 0.0, 1e-3][..]));
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::read(buf.as_slice()).unwrap(), table);
        assert!(EmbeddingTable::read("2 3\nfoo 1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn scaler_maps_to_unit_interval() {
        let recs = vec![
            record("a", utc(2012, 10, 10, 0, 0, 0)),
            record("b", utc(2012, 10, 12, 18, 0, 0)),
        ];
        let f = Featurizer::fit(&recs, 2, 0).unwrap();
        let x = f.features(&recs, &EmbeddingTable::new(2)).unwrap();
        assert_eq!(x.shape(), &[2, 4]);
        assert_eq!([x[[0, 2]], x[[0, 3]]], [0.0, 0.0]);
        assert_eq!([x[[1, 2]], x[[1, 3]]], [1.0, 1.0]);
    }

    fn arb_record() -> impl Strategy<Value = MessageRecord> {
        let words = prop::collection::vec("[a-z#]{1,6}", 0..4);
        (
            "[a-z0-9]{1,8}",
            words.clone(),
            "[a-z]{1,5}",
            words.clone(),
            words.clone(),
            words,
            0i64..2_000_000_000,
            prop::option::of(0i64..50),
        )
            .prop_map(
                |(id, tokens, author, mentioned_users, hashtags, entities, secs, event_id)| {
                    MessageRecord {
                        id,
                        tokens,
                        author,
                        mentioned_users,
                        hashtags,
                        entities,
                        timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
                        event_id,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_parse_identity(recs in prop::collection::vec(arb_record(), 1..8)) {
            let mut seen = HashSet::new();
            let recs: Vec<_> = recs.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
            let mut buf = Vec::new();
            write_messages(&mut buf, &recs).unwrap();
            prop_assert_eq!(parse_messages(buf.as_slice()).unwrap(), recs);
        }

        #[test]
        fn split_is_partition(offsets in prop::collection::vec(0i64..40 * 86_400, 1..60)) {
            let base = utc(2012, 10, 10, 5, 0, 0);
            let recs: Vec<_> = offsets.iter().enumerate()
                .map(|(i, o)| record(&format!("m{i}"), base + Duration::seconds(*o)))
                .collect();
            let s = split_blocks(&recs, 7, 1).unwrap();
            let mut ids: Vec<_> = s.blocks.iter().flatten().map(|r| r.id.clone()).collect();
            let mut expected: Vec<_> = recs.iter().map(|r| r.id.clone()).collect();
            ids.sort();
            expected.sort();
            prop_assert_eq!(ids, expected);
            prop_assert!(!s.blocks.last().unwrap().is_empty());
        }

        #[test]
        fn temporal_is_monotone(a in 0i64..4_000_000_000, b in 0i64..4_000_000_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fl = temporal_feature(Utc.timestamp_opt(lo, 0).unwrap()).unwrap();
            let fh = temporal_feature(Utc.timestamp_opt(hi, 0).unwrap()).unwrap();
            prop_assert!(fl[0] < fh[0] || (fl[0] == fh[0] && fl[1] <= fh[1]));
        }

        #[test]
        fn semantic_permutation_invariant(perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut table = EmbeddingTable::new(3);
            for (i, w) in ["a", "b", "c", "d"].iter().enumerate() {
                table.insert(*w, vec![i as f64, 1.0 / (i as f64 + 1.0), -(i as f64)]).unwrap();
            }
            let tokens: Vec<String> = ["a", "b", "c", "d", "b"].iter().map(|s| s.to_string()).collect();
            let mut shuffled = tokens.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let x = semantic_feature(&tokens, &table, 3, 1);
            let y = semantic_feature(&shuffled, &table, 3, 1);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            let oov: Vec<String> = ["p", "q", "r"].iter().map(|s| s.to_string()).collect();
            let mut oov_shuffled = oov.clone();
            oov_shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            prop_assert_eq!(semantic_feature(&oov, &table, 3, 1), semantic_feature(&oov_shuffled, &table, 3, 1));
        }
    }
}
