//! Planted-partition message streams with matching word embeddings.
//!
//! Every event owns a disjoint set of topic words, hashtags, entities and
//! a small user group. A message draws from its event's pools, and with
//! probability `noise_rate` borrows one element from another event that is
//! active in the same block. Block 0 holds only the known events; each
//! later block mixes a subset of the known events with fresh novel ones.

use chrono::{DateTime, Duration, Utc};
use ndarray::Array1;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EmbeddingTable, MessageRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_known_events: usize,
    pub n_novel_events_per_block: usize,
    /// Known events re-appearing in each later block.
    pub known_events_per_block: usize,
    pub msgs_per_event_per_block: usize,
    /// Blocks including the initial one.
    pub n_blocks: usize,
    pub initial_days: u32,
    pub block_days: u32,
    /// First instant of block 0, RFC 3339.
    pub start: DateTime<Utc>,
    pub vocab_size: usize,
    pub topic_words_per_event: usize,
    pub tokens_per_message: usize,
    /// Probability that a token comes from the event topic rather than the
    /// background vocabulary.
    pub topic_ratio: f64,
    pub shared_user_pool: usize,
    pub users_per_event: usize,
    /// Probability that the author is one of the event's users.
    pub user_bias: f64,
    pub hashtags_per_event: usize,
    pub entities_per_event: usize,
    pub mention_prob: f64,
    pub noise_rate: f64,
    pub embedding_dim: usize,
    /// Spread of topic words around their event anchor.
    pub word_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_known_events: 5,
            n_novel_events_per_block: 2,
            known_events_per_block: 3,
            msgs_per_event_per_block: 100,
            n_blocks: 4,
            initial_days: 7,
            block_days: 1,
            start: DateTime::parse_from_rfc3339("2012-10-10T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
            vocab_size: 2000,
            topic_words_per_event: 30,
            tokens_per_message: 10,
            topic_ratio: 0.5,
            shared_user_pool: 300,
            users_per_event: 15,
            user_bias: 0.7,
            hashtags_per_event: 3,
            entities_per_event: 4,
            mention_prob: 0.3,
            noise_rate: 0.1,
            embedding_dim: 32,
            word_spread: 0.6,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn total_events(&self) -> usize {
        self.n_known_events + self.n_novel_events_per_block * self.n_blocks.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_known_events", self.n_known_events),
            ("msgs_per_event_per_block", self.msgs_per_event_per_block),
            ("n_blocks", self.n_blocks),
            ("initial_days", self.initial_days as usize),
            ("block_days", self.block_days as usize),
            ("vocab_size", self.vocab_size),
            ("topic_words_per_event", self.topic_words_per_event),
            ("tokens_per_message", self.tokens_per_message),
            ("users_per_event", self.users_per_event),
            ("hashtags_per_event", self.hashtags_per_event),
            ("entities_per_event", self.entities_per_event),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, p) in [
            ("topic_ratio", self.topic_ratio),
            ("user_bias", self.user_bias),
            ("mention_prob", self.mention_prob),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.known_events_per_block > self.n_known_events {
            return Err(Error::Config(
                "known_events_per_block exceeds n_known_events".into(),
            ));
        }
        if self.total_events() * self.topic_words_per_event >= self.vocab_size {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no background words for {} topics of {}",
                self.vocab_size,
                self.total_events(),
                self.topic_words_per_event
            )));
        }
        if self.user_bias < 1.0 && self.shared_user_pool == 0 {
            return Err(Error::Config(
                "user_bias < 1 needs a non-empty shared_user_pool".into(),
            ));
        }
        if !(self.word_spread >= 0.0) {
            return Err(Error::Config("word_spread must be non-negative".into()));
        }
        Ok(())
    }

    /// Event ids per block: known events first, then novel ones.
    pub fn block_events(&self) -> Vec<Vec<i64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5bd1_e995);
        let mut out = vec![(0..self.n_known_events as i64).collect::<Vec<_>>()];
        for b in 1..self.n_blocks {
            let mut known: Vec<i64> =
                index::sample(&mut rng, self.n_known_events, self.known_events_per_block)
                    .into_iter()
                    .map(|e| e as i64)
                    .collect();
            known.sort_unstable();
            let first_novel = self.n_known_events + (b - 1) * self.n_novel_events_per_block;
            known.extend(
                (first_novel..first_novel + self.n_novel_events_per_block).map(|e| e as i64),
            );
            out.push(known);
        }
        out
    }

    fn window(&self, block: usize) -> (DateTime<Utc>, Duration) {
        if block == 0 {
            (self.start, Duration::days(self.initial_days as i64))
        } else {
            let offset = self.initial_days as i64 + (block as i64 - 1) * self.block_days as i64;
            (
                self.start + Duration::days(offset),
                Duration::days(self.block_days as i64),
            )
        }
    }
}

pub fn word(index: usize) -> String {
    format!("w{index:05}")
}

/// Topic word indices of `event`; background words follow all topics.
pub fn topic_words(config: &SynthConfig, event: i64) -> std::ops::Range<usize> {
    let t = config.topic_words_per_event;
    event as usize * t..(event as usize + 1) * t
}

pub fn background_words(config: &SynthConfig) -> std::ops::Range<usize> {
    config.total_events() * config.topic_words_per_event..config.vocab_size
}

pub fn hashtag(event: i64, k: usize) -> String {
    format!("ev{event}tag{k}")
}

pub fn entity(event: i64, k: usize) -> String {
    format!("ev{event}ent{k}")
}

pub fn event_user(event: i64, k: usize) -> String {
    format!("ev{event}user{k}")
}

pub fn shared_user(k: usize) -> String {
    format!("user{k}")
}

/// Some active event other than `own`, or `own` if it is alone.
fn other_event(rng: &mut ChaCha8Rng, own: i64, active: &[i64]) -> i64 {
    let others: Vec<i64> = active.iter().copied().filter(|&e| e != own).collect();
    others.choose(rng).copied().unwrap_or(own)
}

/// Draws an event-affine message. With probability `noise_rate` exactly one
/// of its hashtags, entities or mentions is replaced by the same kind of
/// element from another active event.
fn message(
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    event: i64,
    active: &[i64],
    timestamp: DateTime<Utc>,
) -> MessageRecord {
    let topic = topic_words(config, event);
    let background = background_words(config);
    let tokens = (0..config.tokens_per_message)
        .map(|_| {
            if rng.gen_bool(config.topic_ratio) {
                word(rng.gen_range(topic.clone()))
            } else {
                word(rng.gen_range(background.clone()))
            }
        })
        .collect();
    let author = if rng.gen_bool(config.user_bias) {
        event_user(event, rng.gen_range(0..config.users_per_event))
    } else {
        shared_user(rng.gen_range(0..config.shared_user_pool))
    };
    let mut mentioned_users = Vec::new();
    if rng.gen_bool(config.mention_prob) {
        mentioned_users.push(event_user(event, rng.gen_range(0..config.users_per_event)));
    }
    let mut hashtags = vec![hashtag(event, 0)];
    if config.hashtags_per_event > 1 && rng.gen_bool(0.5) {
        hashtags.push(hashtag(event, rng.gen_range(1..config.hashtags_per_event)));
    }
    let mut entities = vec![entity(event, rng.gen_range(0..config.entities_per_event))];
    if rng.gen_bool(config.noise_rate) {
        let src = other_event(rng, event, active);
        let slots = hashtags.len() + entities.len() + mentioned_users.len();
        let slot = rng.gen_range(0..slots);
        if slot < hashtags.len() {
            hashtags[slot] = hashtag(src, rng.gen_range(0..config.hashtags_per_event));
        } else if slot < hashtags.len() + entities.len() {
            entities[0] = entity(src, rng.gen_range(0..config.entities_per_event));
        } else {
            mentioned_users[0] = event_user(src, rng.gen_range(0..config.users_per_event));
        }
        hashtags.dedup();
    }
    MessageRecord {
        id: String::new(),
        tokens,
        author,
        mentioned_users,
        hashtags,
        entities,
        timestamp,
        event_id: Some(event),
    }
}

/// Labelled corpus in chronological order with ids `m000000, m000001, ...`.
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<MessageRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for (b, active) in config.block_events().iter().enumerate() {
        let (start, span) = config.window(b);
        let span_secs = span.num_seconds();
        let mut block = Vec::new();
        for &event in active {
            for _ in 0..config.msgs_per_event_per_block {
                let ts = start + Duration::seconds(rng.gen_range(0..span_secs));
                block.push(message(config, &mut rng, event, active, ts));
            }
        }
        if b == 0 {
            // anchor the stream at the first instant of block 0
            block[0].timestamp = start;
        }
        block.sort_by_key(|m| m.timestamp);
        out.extend(block);
    }
    for (i, m) in out.iter_mut().enumerate() {
        m.id = format!("m{i:06}");
    }
    Ok(out)
}

/// Word vectors: topic words scatter around a random unit anchor of their
/// event, background words around the origin.
pub fn generate_embedding_table(config: &SynthConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    let d = config.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let gaussian =
        |rng: &mut ChaCha8Rng| Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let scale = 1.0 / (d as f64).sqrt();
    let mut table = EmbeddingTable::new(d);
    for e in 0..config.total_events() as i64 {
        let mut anchor = gaussian(&mut rng);
        anchor /= anchor.dot(&anchor).sqrt();
        for w in topic_words(config, e) {
            let v = &anchor + &(gaussian(&mut rng) * (config.word_spread * scale));
            table.insert(word(w), v.to_vec())?;
        }
    }
    for w in background_words(config) {
        table.insert(word(w), (gaussian(&mut rng) * scale).to_vec())?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let c = SynthConfig::from_toml("seed = 3\nn_blocks = 2").unwrap();
        assert_eq!(
            (c.seed, c.n_blocks, c.noise_rate),
            (3, 2, SynthConfig::default().noise_rate)
        );
        assert!(SynthConfig::from_toml("no_such_key = 1").is_err());
    }
    use std::collections::{BTreeMap, BTreeSet};

    fn small() -> SynthConfig {
        SynthConfig {
            msgs_per_event_per_block: 20,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_hashtags_follow_events() {
        let cfg = SynthConfig {
            noise_rate: 0.0,
            ..small()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for m in &corpus {
            let e = m.event_id.unwrap();
            assert!(m.hashtags.contains(&hashtag(e, 0)));
            assert!(m
                .hashtags
                .iter()
                .all(|h| h.starts_with(&format!("ev{e}tag"))));
        }
    }

    #[test]
    fn no_novel_events_keeps_label_set() {
        let cfg = SynthConfig {
            n_novel_events_per_block: 0,
            known_events_per_block: 5,
            ..small()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let labels: BTreeSet<i64> = corpus.iter().filter_map(|m| m.event_id).collect();
        assert_eq!(labels, (0..5).collect());
    }

    #[test]
    fn counts_and_vocabulary_match_recipe() {
        let cfg = SynthConfig::default();
        let corpus = generate_corpus(&cfg).unwrap();
        let stream =
            crate::ingest::split_blocks(&corpus, cfg.initial_days, cfg.block_days).unwrap();
        assert_eq!(stream.len(), cfg.n_blocks);
        for (block, events) in stream.blocks.iter().zip(cfg.block_events()) {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for m in block {
                *counts.entry(m.event_id.unwrap()).or_default() += 1;
            }
            assert_eq!(counts.keys().copied().collect::<Vec<_>>(), events);
            assert!(counts.values().all(|&c| c == cfg.msgs_per_event_per_block));
        }
        assert!(stream.blocks[0]
            .iter()
            .all(|m| m.event_id.unwrap() < cfg.n_known_events as i64));

        let background = background_words(&cfg);
        let (mut topical, mut total) = (0usize, 0usize);
        for m in &corpus {
            let topic = topic_words(&cfg, m.event_id.unwrap());
            for t in &m.tokens {
                let idx: usize = t[1..].parse().unwrap();
                assert!(topic.contains(&idx) || background.contains(&idx), "{t}");
                topical += usize::from(topic.contains(&idx));
                total += 1;
            }
        }
        // binomial(total, 0.5): five standard deviations
        let sd = (total as f64 * 0.25).sqrt();
        assert!((topical as f64 - total as f64 * cfg.topic_ratio).abs() < 5.0 * sd);
    }

    #[test]
    fn regeneration_is_identical() {
        let cfg = small();
        assert_eq!(
            generate_corpus(&cfg).unwrap(),
            generate_corpus(&cfg).unwrap()
        );
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(
            generate_corpus(&cfg).unwrap(),
            generate_corpus(&other).unwrap()
        );
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_embedding_table(&cfg)
            .unwrap()
            .write(&mut a)
            .unwrap();
        generate_embedding_table(&cfg)
            .unwrap()
            .write(&mut b)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_covers_vocabulary_and_clusters_topics() {
        let cfg = SynthConfig::default();
        let table = generate_embedding_table(&cfg).unwrap();
        assert_eq!(table.len(), cfg.vocab_size);
        let cos = |a: &str, b: &str| {
            let (x, y) = (table.get(a).unwrap(), table.get(b).unwrap());
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
            dot / (nx * ny)
        };
        let mean_cos = |pairs: &[(usize, usize)]| {
            pairs
                .iter()
                .map(|&(a, b)| cos(&word(a), &word(b)))
                .sum::<f64>()
                / pairs.len() as f64
        };
        let t0 = topic_words(&cfg, 0);
        let t1 = topic_words(&cfg, 1);
        let same: Vec<_> = (0..10).map(|k| (t0.start + k, t0.start + k + 10)).collect();
        let cross: Vec<_> = (0..10).map(|k| (t0.start + k, t1.start + k)).collect();
        assert!(mean_cos(&same) > mean_cos(&cross) + 0.3);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SynthConfig {
            noise_rate: 1.5,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            vocab_size: 100,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            known_events_per_block: 9,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SynthConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<SynthConfig>(&text).unwrap(), cfg);
        let partial: SynthConfig = toml::from_str("seed = 3\nnoise_rate = 0.0").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.n_known_events, 5);
    }
}
