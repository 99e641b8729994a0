//! LIWC-style `.dic` dictionaries: parsing, wildcard matching and entity
//! extraction.
//!
//! A dictionary has a `%`-delimited category header followed by entry lines:
//!
//! ```text
//! %
//! 1	affect
//! 2	posemo
//! %
//! happy	1	2
//! happi*	1	2
//! ```
//!
//! A pattern ending in `*` matches every token with that prefix, including
//! the bare prefix. When several patterns match one token their category
//! sets are unioned.
#![allow(clippy::tabs_in_doc_comments)]

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

pub type CategoryId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate pattern {pattern:?}")]
    DuplicatePattern { line: usize, pattern: String },
    #[error("line {line}: duplicate category id {id}")]
    DuplicateCategory { line: usize, id: CategoryId },
    #[error("line {line}: unknown category {id}")]
    UnknownCategory { line: usize, id: CategoryId },
    #[error("line {line}: invalid pattern {pattern:?}")]
    InvalidPattern { line: usize, pattern: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub pattern: String,
    pub categories: Vec<CategoryId>,
}

impl LexiconEntry {
    pub fn is_wildcard(&self) -> bool {
        self.pattern.ends_with('*')
    }

    pub fn matches(&self, token: &str) -> bool {
        match self.pattern.strip_suffix('*') {
            Some(prefix) => token.starts_with(prefix),
            None => token == self.pattern,
        }
    }
}

/// How [`Lexicon::category_ids_with`] finds matching entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchStrategy {
    PrefixTrie,
    /// Scan every entry; kept as the reference for the trie.
    LinearScan,
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: HashMap<char, usize>,
    exact: Vec<CategoryId>,
    prefix: Vec<CategoryId>,
}

#[derive(Clone, Debug)]
pub struct Lexicon {
    categories: Vec<(CategoryId, String)>,
    category_index: HashMap<CategoryId, usize>,
    entries: Vec<LexiconEntry>,
    trie: Vec<TrieNode>,
}

fn malformed(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Malformed {
        line,
        message: message.into(),
    }
}

fn valid_pattern(p: &str) -> bool {
    !p.is_empty() && p != "*" && !p[..p.len() - 1].contains('*')
}

fn fields(line: &str) -> Vec<&str> {
    line.split('\t')
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .collect()
}

impl Lexicon {
    /// Parses `.dic` text. Category order is preserved; patterns are lowercased.
    pub fn parse_dic(text: &str) -> Result<Self, LexiconError> {
        #[derive(PartialEq)]
        enum Section {
            Preamble,
            Categories,
            Entries,
        }
        let mut section = Section::Preamble;
        let mut categories: Vec<(CategoryId, String)> = Vec::new();
        let mut known: HashSet<CategoryId> = HashSet::new();
        let mut entries = Vec::new();
        let mut seen_patterns: HashSet<String> = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            match section {
                Section::Preamble => {
                    if line != "%" {
                        return Err(malformed(line_no, "expected '%' to open the category section"));
                    }
                    section = Section::Categories;
                }
                Section::Categories => {
                    if line == "%" {
                        section = Section::Entries;
                        continue;
                    }
                    let parts = fields(line);
                    if parts.len() != 2 {
                        return Err(malformed(line_no, "category line must be ID<TAB>name"));
                    }
                    let id: CategoryId = parts[0]
                        .parse()
                        .map_err(|_| malformed(line_no, format!("bad category id {:?}", parts[0])))?;
                    if !known.insert(id) {
                        return Err(LexiconError::DuplicateCategory { line: line_no, id });
                    }
                    categories.push((id, parts[1].to_string()));
                }
                Section::Entries => {
                    let parts = fields(line);
                    if parts.len() < 2 {
                        return Err(malformed(line_no, "entry line must be pattern<TAB>ID[<TAB>ID...]"));
                    }
                    let pattern = parts[0].to_lowercase();
                    if !valid_pattern(&pattern) {
                        return Err(LexiconError::InvalidPattern {
                            line: line_no,
                            pattern,
                        });
                    }
                    let mut ids: Vec<CategoryId> = Vec::with_capacity(parts.len() - 1);
                    for f in &parts[1..] {
                        let id: CategoryId = f
                            .parse()
                            .map_err(|_| malformed(line_no, format!("bad category id {f:?}")))?;
                        if !known.contains(&id) {
                            return Err(LexiconError::UnknownCategory { line: line_no, id });
                        }
                        if !ids.contains(&id) {
                            ids.push(id);
                        }
                    }
                    if !seen_patterns.insert(pattern.clone()) {
                        return Err(LexiconError::DuplicatePattern {
                            line: line_no,
                            pattern,
                        });
                    }
                    entries.push(LexiconEntry {
                        pattern,
                        categories: ids,
                    });
                }
            }
        }
        if section != Section::Entries {
            return Err(malformed(
                text.lines().count().max(1),
                "unterminated category section",
            ));
        }
        Ok(Self::build(categories, entries))
    }

    fn build(categories: Vec<(CategoryId, String)>, entries: Vec<LexiconEntry>) -> Self {
        let category_index = categories
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, i))
            .collect();
        let mut trie = vec![TrieNode::default()];
        for entry in &entries {
            let (stem, wildcard) = match entry.pattern.strip_suffix('*') {
                Some(p) => (p, true),
                None => (entry.pattern.as_str(), false),
            };
            let mut node = 0;
            for c in stem.chars() {
                node = match trie[node].children.get(&c) {
                    Some(&next) => next,
                    None => {
                        trie.push(TrieNode::default());
                        let next = trie.len() - 1;
                        trie[node].children.insert(c, next);
                        next
                    }
                };
            }
            let slot = if wildcard {
                &mut trie[node].prefix
            } else {
                &mut trie[node].exact
            };
            slot.extend_from_slice(&entry.categories);
        }
        Self {
            categories,
            category_index,
            entries,
            trie,
        }
    }

    pub fn categories(&self) -> &[(CategoryId, String)] {
        &self.categories
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn category_name(&self, id: CategoryId) -> Option<&str> {
        self.category_index
            .get(&id)
            .map(|&i| self.categories[i].1.as_str())
    }

    pub fn category_ids(&self, token: &str) -> BTreeSet<CategoryId> {
        self.category_ids_with(token, MatchStrategy::PrefixTrie)
    }

    pub fn category_ids_with(&self, token: &str, strategy: MatchStrategy) -> BTreeSet<CategoryId> {
        let mut out = BTreeSet::new();
        match strategy {
            MatchStrategy::LinearScan => {
                for e in self.entries.iter().filter(|e| e.matches(token)) {
                    out.extend(e.categories.iter().copied());
                }
            }
            MatchStrategy::PrefixTrie => {
                let mut node = 0;
                let mut consumed_all = true;
                for c in token.chars() {
                    match self.trie[node].children.get(&c) {
                        Some(&next) => {
                            node = next;
                            out.extend(self.trie[node].prefix.iter().copied());
                        }
                        None => {
                            consumed_all = false;
                            break;
                        }
                    }
                }
                if consumed_all && node != 0 {
                    out.extend(self.trie[node].exact.iter().copied());
                }
            }
        }
        out
    }

    /// Category names of a lowercase token; empty when nothing matches.
    pub fn categories_of(&self, token: &str) -> BTreeSet<String> {
        self.category_ids(token)
            .into_iter()
            .filter_map(|id| self.category_name(id).map(str::to_string))
            .collect()
    }

    /// Normalizes a raw token (see [`normalize_token`]) before matching.
    pub fn lookup(&self, raw: &str) -> BTreeSet<String> {
        normalize_token(raw).map_or_else(BTreeSet::new, |t| self.categories_of(&t))
    }

    pub fn matches(&self, token: &str) -> bool {
        !self.category_ids(token).is_empty()
    }

    /// Canonical `.dic` text. Parsing the output yields an equal lexicon.
    pub fn to_dic(&self) -> String {
        let mut out = String::from("%\n");
        for (id, name) in &self.categories {
            out.push_str(&format!("{id}\t{name}\n"));
        }
        out.push_str("%\n");
        for e in &self.entries {
            out.push_str(&e.pattern);
            for id in &e.categories {
                out.push_str(&format!("\t{id}"));
            }
            out.push('\n');
        }
        out
    }

    /// Debug form with sorted keys: `{"categories": {id: name}, "entries": {pattern: [ids]}}`.
    pub fn to_canonical_json(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            categories: BTreeMap<String, &'a str>,
            entries: BTreeMap<&'a str, Vec<CategoryId>>,
        }
        let c = Canonical {
            categories: self
                .categories
                .iter()
                .map(|(id, n)| (id.to_string(), n.as_str()))
                .collect(),
            entries: self
                .entries
                .iter()
                .map(|e| {
                    let mut ids = e.categories.clone();
                    ids.sort_unstable();
                    (e.pattern.as_str(), ids)
                })
                .collect(),
        };
        serde_json::to_string_pretty(&c).expect("lexicon serializes")
    }
}

/// Lowercases and strips leading/trailing non-alphanumeric characters.
/// Internal punctuation such as the apostrophe in "don't" is kept.
pub fn normalize_token(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Distinct lexicon-matching tokens of one user, in first-occurrence order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EntitySet {
    pub entities: Vec<String>,
}

impl EntitySet {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }
}

/// Scans posts in order and keeps each token that matches the lexicon the
/// first time it is seen.
pub fn extract_entities<S: AsRef<str>>(lexicon: &Lexicon, posts: &[Vec<S>]) -> EntitySet {
    let mut seen = HashSet::new();
    let mut entities = Vec::new();
    for post in posts {
        for tok in post {
            let tok = tok.as_ref();
            if !seen.contains(tok) && lexicon.matches(tok) {
                seen.insert(tok.to_string());
                entities.push(tok.to_string());
            }
        }
    }
    EntitySet { entities }
}

/// The small original dictionary shipped for tests and the synthetic corpus.
pub const FIXTURE_DIC: &str = include_str!("../fixtures/lexicon.dic");

pub fn fixture_lexicon() -> Lexicon {
    Lexicon::parse_dic(FIXTURE_DIC).expect("fixture lexicon parses")
}
