//! Interaction logs: parsing, binarization and holdout splitting.
//!
//! A [`Dataset`] is an immutable, canonically ordered collection of
//! `(user, item, rating)` events. User and item identifiers are opaque
//! strings; internally they are mapped to contiguous indices assigned in
//! lexicographic order of the identifiers, and interactions are stored sorted
//! by `(user, item)`. Two datasets built from the same set of events are
//! therefore identical regardless of input order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratings at or above this value are relevant unless told otherwise.
pub const DEFAULT_THRESHOLD: u8 = 4;

/// Largest admissible rating.
pub const MAX_RATING: u8 = 5;

/// How the feedback in a dataset was collected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    /// Exposure chosen by a deployed recommender.
    Closed,
    /// Exposure chosen uniformly at random.
    Open,
}

impl std::str::FromStr for LoopKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(LoopKind::Closed),
            "open" => Ok(LoopKind::Open),
            other => Err(Error::Config(format!(
                "loop kind must be `closed` or `open`, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for LoopKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LoopKind::Closed => "closed",
            LoopKind::Open => "open",
        })
    }
}

/// One rating event, with user and item given as dataset-local indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
    pub relevant: bool,
}

/// A rating event with opaque identifiers, as read from a file or produced
/// by the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub rating: u8,
}

impl RawInteraction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: u8) -> Self {
        RawInteraction {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
    interactions: Vec<Interaction>,
    /// `user_offsets[u]..user_offsets[u + 1]` spans user `u`'s interactions.
    user_offsets: Vec<usize>,
    item_counts: Vec<u32>,
    loop_kind: LoopKind,
    threshold: u8,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
            && self.items == other.items
            && self.interactions == other.interactions
            && self.loop_kind == other.loop_kind
            && self.threshold == other.threshold
    }
}

impl Dataset {
    /// Builds a dataset from raw events. Repeated `(user, item)` pairs keep
    /// the rating of their last occurrence.
    ///
    /// Ratings are validated by the parser, not here; callers constructing
    /// events directly must keep them in `0..=5`.
    pub fn from_raw<I>(events: I, loop_kind: LoopKind) -> Dataset
    where
        I: IntoIterator<Item = RawInteraction>,
    {
        let mut latest: HashMap<(String, String), u8> = HashMap::new();
        for ev in events {
            debug_assert!(ev.rating <= MAX_RATING);
            latest.insert((ev.user, ev.item), ev.rating);
        }
        let mut triples: Vec<(String, String, u8)> =
            latest.into_iter().map(|((u, i), r)| (u, i, r)).collect();
        triples.sort_unstable();
        Self::from_sorted_unique(triples, loop_kind, DEFAULT_THRESHOLD)
    }

    fn from_sorted_unique(
        triples: Vec<(String, String, u8)>,
        loop_kind: LoopKind,
        threshold: u8,
    ) -> Dataset {
        let mut users: Vec<String> = Vec::new();
        for (u, _, _) in &triples {
            if users.last() != Some(u) {
                users.push(u.clone());
            }
        }
        let mut items: Vec<String> = triples.iter().map(|(_, i, _)| i.clone()).collect();
        items.sort_unstable();
        items.dedup();

        let user_index: HashMap<String, u32> = users
            .iter()
            .enumerate()
            .map(|(k, u)| (u.clone(), k as u32))
            .collect();
        let item_index: HashMap<String, u32> = items
            .iter()
            .enumerate()
            .map(|(k, i)| (i.clone(), k as u32))
            .collect();

        let interactions: Vec<Interaction> = triples
            .iter()
            .map(|(u, i, r)| Interaction {
                user: user_index[u],
                item: item_index[i],
                rating: *r,
                relevant: *r >= threshold,
            })
            .collect();

        Self::assemble(users, items, user_index, item_index, interactions, loop_kind, threshold)
    }

    fn assemble(
        users: Vec<String>,
        items: Vec<String>,
        user_index: HashMap<String, u32>,
        item_index: HashMap<String, u32>,
        interactions: Vec<Interaction>,
        loop_kind: LoopKind,
        threshold: u8,
    ) -> Dataset {
        let mut item_counts = vec![0u32; items.len()];
        let mut user_offsets = vec![0usize; users.len() + 1];
        for it in &interactions {
            item_counts[it.item as usize] += 1;
            user_offsets[it.user as usize + 1] += 1;
        }
        for u in 0..users.len() {
            user_offsets[u + 1] += user_offsets[u];
        }
        Dataset {
            users,
            items,
            user_index,
            item_index,
            interactions,
            user_offsets,
            item_counts,
            loop_kind,
            threshold,
        }
    }

    pub fn empty(loop_kind: LoopKind) -> Dataset {
        Self::from_raw(std::iter::empty(), loop_kind)
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn loop_kind(&self) -> LoopKind {
        self.loop_kind
    }

    /// Returns a copy tagged with another loop kind.
    pub fn with_loop_kind(mut self, loop_kind: LoopKind) -> Dataset {
        self.loop_kind = loop_kind;
        self
    }

    pub fn threshold(&self) -> u8 {
        self.threshold
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Interactions of user `u`, sorted by item index.
    pub fn user_interactions(&self, u: u32) -> &[Interaction] {
        let u = u as usize;
        &self.interactions[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_id(&self, u: u32) -> &str {
        &self.users[u as usize]
    }

    pub fn item_id(&self, i: u32) -> &str {
        &self.items[i as usize]
    }

    pub fn user_index(&self, user: &str) -> Option<u32> {
        self.user_index.get(user).copied()
    }

    pub fn item_index(&self, item: &str) -> Option<u32> {
        self.item_index.get(item).copied()
    }

    /// Number of interactions per item, indexed like [`Dataset::items`].
    pub fn item_counts(&self) -> &[u32] {
        &self.item_counts
    }

    pub fn item_count(&self, item: &str) -> u32 {
        self.item_index(item)
            .map(|i| self.item_counts[i as usize])
            .unwrap_or(0)
    }

    pub fn n_relevant(&self) -> usize {
        self.interactions.iter().filter(|it| it.relevant).count()
    }

    /// Iterates over events with their identifiers resolved.
    pub fn raw(&self) -> impl Iterator<Item = RawInteraction> + '_ {
        self.interactions.iter().map(move |it| RawInteraction {
            user: self.users[it.user as usize].clone(),
            item: self.items[it.item as usize].clone(),
            rating: it.rating,
        })
    }

    /// Recomputes relevance flags as `rating >= threshold`; ratings are
    /// preserved.
    pub fn binarize(&self, threshold: u8) -> Dataset {
        let mut out = self.clone();
        out.threshold = threshold;
        for it in &mut out.interactions {
            it.relevant = it.rating >= threshold;
        }
        out
    }

    /// Union of several datasets. Pairs present in more than one keep the
    /// rating from the later dataset. The result carries the loop kind and
    /// threshold of the first dataset.
    pub fn merge(parts: &[&Dataset]) -> Dataset {
        let loop_kind = parts.first().map_or(LoopKind::Closed, |d| d.loop_kind);
        let threshold = parts.first().map_or(DEFAULT_THRESHOLD, |d| d.threshold);
        let merged = Self::from_raw(parts.iter().flat_map(|d| d.raw()), loop_kind);
        if threshold == DEFAULT_THRESHOLD {
            merged
        } else {
            merged.binarize(threshold)
        }
    }

    /// Dataset made of the interactions at `positions` (indices into
    /// [`Dataset::interactions`]), with rebuilt indices and counts.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let mut keep: Vec<usize> = positions.to_vec();
        keep.sort_unstable();
        keep.dedup();

        let mut user_map = vec![u32::MAX; self.users.len()];
        let mut item_map = vec![u32::MAX; self.items.len()];
        for &p in &keep {
            let it = self.interactions[p];
            user_map[it.user as usize] = 0;
            item_map[it.item as usize] = 0;
        }
        let users = remap(&self.users, &mut user_map);
        let items = remap(&self.items, &mut item_map);

        let interactions: Vec<Interaction> = keep
            .iter()
            .map(|&p| {
                let it = self.interactions[p];
                Interaction {
                    user: user_map[it.user as usize],
                    item: item_map[it.item as usize],
                    ..it
                }
            })
            .collect();
        let user_index = index_of(&users);
        let item_index = index_of(&items);
        Self::assemble(
            users,
            items,
            user_index,
            item_index,
            interactions,
            self.loop_kind,
            self.threshold,
        )
    }

    /// Writes the canonical tab-separated form: one `user\titem\trating`
    /// line per interaction, in canonical order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for it in &self.interactions {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.users[it.user as usize], self.items[it.item as usize], it.rating
            )?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("identifiers are UTF-8")
    }
}

fn remap(ids: &[String], map: &mut [u32]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        if map[k] != u32::MAX {
            map[k] = out.len() as u32;
            out.push(id.clone());
        }
    }
    out
}

fn index_of(ids: &[String]) -> HashMap<String, u32> {
    ids.iter()
        .enumerate()
        .map(|(k, id)| (id.clone(), k as u32))
        .collect()
}

/// Field separator of an interaction file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Char(char),
    /// Any run of ASCII whitespace.
    Whitespace,
}

impl Default for Delimiter {
    fn default() -> Self {
        Delimiter::Char(',')
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws" | "whitespace" => Ok(Delimiter::Whitespace),
            "tab" | "\\t" | "\t" => Ok(Delimiter::Char('\t')),
            "comma" => Ok(Delimiter::Char(',')),
            _ => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(Delimiter::Char(c)),
                    _ => Err(Error::Config(format!("delimiter must be one character, got {s:?}"))),
                }
            }
        }
    }
}

/// Zero-based positions of the user, item and rating columns. One column
/// beyond the last named one is tolerated (the timestamp slot).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            user: 0,
            item: 1,
            rating: 2,
        }
    }
}

impl ColumnSpec {
    fn min_columns(&self) -> usize {
        self.user.max(self.item).max(self.rating) + 1
    }
}

/// Parses a line-oriented interaction log. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    schema: ColumnSpec,
    delimiter: Delimiter,
    loop_kind: LoopKind,
) -> Result<Dataset> {
    let min = schema.min_columns();
    let max = min + 1;
    let mut events = Vec::new();

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match delimiter {
            Delimiter::Char(c) => trimmed.split(c).map(str::trim).collect(),
            Delimiter::Whitespace => trimmed.split_ascii_whitespace().collect(),
        };
        if fields.len() < min || fields.len() > max {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {min} or {max} columns, found {}",
                    fields.len()
                ),
            });
        }
        let raw_rating = fields[schema.rating];
        let rating: i64 = raw_rating.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("rating {raw_rating:?} is not an integer"),
        })?;
        if !(0..=MAX_RATING as i64).contains(&rating) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("rating {rating} outside [0, {MAX_RATING}]"),
            });
        }
        let (user, item) = (fields[schema.user], fields[schema.item]);
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty user or item identifier".into(),
            });
        }
        events.push(RawInteraction::new(user, item, rating as u8));
    }
    Ok(Dataset::from_raw(events, loop_kind))
}

/// Parses the canonical tab-separated format written by
/// [`Dataset::write_tsv`].
pub fn parse_tsv<R: BufRead>(reader: R, loop_kind: LoopKind) -> Result<Dataset> {
    parse_interactions(reader, ColumnSpec::default(), Delimiter::Char('\t'), loop_kind)
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub ratio: f64,
}

/// Global uniform split without replacement: `round(ratio * n)` interactions
/// go to train, the rest to test.
pub fn split_holdout(dataset: &Dataset, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Split(format!(
            "need at least 2 interactions to split, got {n}"
        )));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (train_pos, test_pos) = order.split_at(n_train);

    Ok(Split {
        train: dataset.subset(train_pos),
        test: dataset.subset(test_pos),
        seed,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_interactions(
            text.as_bytes(),
            ColumnSpec::default(),
            Delimiter::Char(','),
            LoopKind::Closed,
        )
    }

    fn check_counts(d: &Dataset) {
        let mut counts = vec![0u32; d.n_items()];
        for it in d.interactions() {
            counts[it.item as usize] += 1;
        }
        assert_eq!(counts, d.item_counts());
        assert_eq!(d.item_counts().iter().map(|&c| c as usize).sum::<usize>(), d.len());
    }

    #[test]
    fn single_line() {
        let d = parse("u1,i1,5").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.item_count("i1"), 1);
        assert!(d.interactions()[0].relevant);
    }

    #[test]
    fn duplicate_pair_keeps_last() {
        let d = parse("u1,i1,5\nu1,i1,2\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.interactions()[0].rating, 2);
        assert!(!d.interactions()[0].relevant);
    }

    #[test]
    fn out_of_range_rating() {
        match parse("u1,i1,9") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_their_number() {
        for (text, want) in [
            ("# header\nu1,i1,4\nu2,i2\n", 3),
            ("u1,i1,4\nu2,i2,x\n", 2),
            ("u1,i1,4,123,extra\n", 1),
            ("u1,i1,-1\n", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn empty_stream_and_timestamp_column() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
        let d = parse("u1,i1,4,978300760\n").unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn whitespace_and_custom_schema() {
        let d = parse_interactions(
            "5 i1 u1\n3  i2   u1\n".as_bytes(),
            ColumnSpec { user: 2, item: 1, rating: 0 },
            Delimiter::Whitespace,
            LoopKind::Open,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.loop_kind(), LoopKind::Open);
        assert_eq!(d.user_id(0), "u1");
    }

    #[test]
    fn binarize_threshold() {
        let d = parse("u1,a,4\nu1,b,3\nu2,a,0\n").unwrap();
        let rel: Vec<bool> = d.binarize(4).interactions().iter().map(|i| i.relevant).collect();
        assert_eq!(rel, vec![true, false, false]);
        assert!(d.binarize(0).interactions().iter().all(|i| i.relevant));
        assert_eq!(d.binarize(0).interactions()[2].rating, 0);
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let text: String = (0..10).map(|k| format!("u{},i{},4\n", k % 3, k)).collect();
        let d = parse(&text).unwrap();
        let a = split_holdout(&d, 0.8, 7).unwrap();
        let b = split_holdout(&d, 0.8, 7).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = split_holdout(&d, 0.8, 8).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (8, 2));
    }

    #[test]
    fn split_errors() {
        let d = parse("u1,i1,4").unwrap();
        assert!(matches!(split_holdout(&d, 0.8, 1), Err(Error::Split(_))));
        let d = parse("u1,i1,4\nu1,i2,4").unwrap();
        assert!(matches!(split_holdout(&d, 1.0, 1), Err(Error::Split(_))));
    }

    #[test]
    fn large_split_fraction() {
        let events = (0..100_000u32).map(|k| {
            RawInteraction::new(format!("u{}", k / 50), format!("i{}", k % 997), 5)
        });
        let d = Dataset::from_raw(events, LoopKind::Closed);
        let s = split_holdout(&d, 0.8, 3).unwrap();
        let frac = s.train.len() as f64 / d.len() as f64;
        assert!((0.799..=0.801).contains(&frac), "{frac}");
        check_counts(&s.train);
        check_counts(&s.test);
    }

    fn arb_events() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..12, 0u8..15, 0u8..=5), 2..80)
    }

    fn build(events: &[(u8, u8, u8)]) -> Dataset {
        Dataset::from_raw(
            events
                .iter()
                .map(|&(u, i, r)| RawInteraction::new(format!("u{u}"), format!("i{i}"), r)),
            LoopKind::Closed,
        )
    }

    proptest! {
        #[test]
        fn tsv_round_trip(events in arb_events()) {
            let d = build(&events);
            let back = parse_tsv(d.to_tsv_string().as_bytes(), LoopKind::Closed).unwrap();
            prop_assert_eq!(&back, &d);
            check_counts(&back);
        }

        #[test]
        fn split_partitions_source(events in arb_events(), seed in any::<u64>()) {
            let d = build(&events);
            prop_assume!(d.len() >= 2);
            let s = split_holdout(&d, 0.8, seed).unwrap();
            let mut parts: Vec<RawInteraction> = s.train.raw().chain(s.test.raw()).collect();
            parts.sort_by(|a, b| (&a.user, &a.item).cmp(&(&b.user, &b.item)));
            let whole: Vec<RawInteraction> = d.raw().collect();
            prop_assert_eq!(parts, whole);
            check_counts(&s.train);
            check_counts(&s.test);
        }
    }
}
