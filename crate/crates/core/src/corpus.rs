//! Clause-sequenced documents: ingestion, vocabularies, and integer indexing.
//!
//! The input is line-delimited JSON, one clause per line:
//!
//! ```text
//! {"doc_id":"d1","sentence_index":0,"clause_index":0,"event_head_lemma":"kidnap",
//!  "args":[{"head_lemma":"guerrilla","dep_label":"nsubj"}]}
//! ```
//!
//! `arg_type` and `caseframe` are optional on each argument. A missing caseframe is
//! derived as `<event head>><dep label>`; the argument type is always derived from the
//! dependency label (see [`ArgType::from_dep_label`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse syntactic role of an argument relative to its event head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ArgType {
    Subj,
    Obj,
    Prep,
}

impl ArgType {
    pub const ALL: [ArgType; 3] = [ArgType::Subj, ArgType::Obj, ArgType::Prep];

    pub fn index(self) -> usize {
        match self {
            ArgType::Subj => 0,
            ArgType::Obj => 1,
            ArgType::Prep => 2,
        }
    }

    /// Maps a dependency label (collapsed Stanford or Universal Dependencies) to an
    /// argument type.
    ///
    /// | labels                                                        | type |
    /// |---------------------------------------------------------------|------|
    /// | `nsubjpass`, `csubjpass`, `nsubj:pass`, `csubj:pass`          | OBJ  |
    /// | `dobj`, `obj`, `iobj`                                         | OBJ  |
    /// | other labels starting with `nsubj`, `csubj`, `xsubj`, `agent` | SUBJ |
    /// | `prep_*`, `prepc_*`, `pobj`, `obl*`, anything else            | PREP |
    pub fn from_dep_label(label: &str) -> ArgType {
        let label = label.to_ascii_lowercase();
        const PASSIVE: [&str; 4] = ["nsubjpass", "csubjpass", "nsubj:pass", "csubj:pass"];
        if PASSIVE.iter().any(|p| label.starts_with(p)) {
            return ArgType::Obj;
        }
        if matches!(label.as_str(), "dobj" | "obj" | "iobj") {
            return ArgType::Obj;
        }
        if ["nsubj", "csubj", "xsubj", "agent"]
            .iter()
            .any(|p| label.starts_with(p))
        {
            return ArgType::Subj;
        }
        ArgType::Prep
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub arg_type: ArgType,
    pub head_lemma: String,
    pub dep_label: String,
    pub caseframe: String,
}

impl ArgumentRecord {
    pub fn new(event_head: &str, head_lemma: &str, dep_label: &str) -> Self {
        ArgumentRecord {
            arg_type: ArgType::from_dep_label(dep_label),
            head_lemma: head_lemma.to_string(),
            dep_label: dep_label.to_string(),
            caseframe: caseframe(event_head, dep_label),
        }
    }
}

pub fn caseframe(event_head: &str, dep_label: &str) -> String {
    format!("{event_head}>{dep_label}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseRecord {
    pub doc_id: String,
    pub sentence_index: u32,
    pub clause_index: u32,
    pub event_head_lemma: String,
    pub args: Vec<ArgumentRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub clauses: Vec<ClauseRecord>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Groups clause records into documents and validates ordering.
    ///
    /// Documents keep the order in which their doc id first appears; clauses are sorted
    /// by `(sentence_index, clause_index)` and must then carry the clause indices
    /// `0..len` in order.
    pub fn from_records(records: Vec<ClauseRecord>) -> Result<Corpus> {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<ClauseRecord>> = HashMap::new();
        for record in records {
            if !grouped.contains_key(&record.doc_id) {
                order.push(record.doc_id.clone());
            }
            grouped
                .entry(record.doc_id.clone())
                .or_default()
                .push(record);
        }
        let mut documents = Vec::with_capacity(order.len());
        for doc_id in order {
            let mut clauses = grouped.remove(&doc_id).unwrap_or_default();
            let mut seen = HashSet::new();
            for c in &clauses {
                if !seen.insert(c.clause_index) {
                    return Err(Error::Integrity(format!(
                        "duplicate clause index {} in document {doc_id}",
                        c.clause_index
                    )));
                }
            }
            clauses.sort_by_key(|c| (c.sentence_index, c.clause_index));
            for (position, c) in clauses.iter().enumerate() {
                if c.clause_index as usize != position {
                    return Err(Error::Integrity(format!(
                        "document {doc_id}: clause indices are not contiguous in sentence order \
                         (found {} at position {position})",
                        c.clause_index
                    )));
                }
            }
            documents.push(Document { doc_id, clauses });
        }
        Ok(Corpus { documents })
    }

    pub fn num_clauses(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn num_args(&self) -> usize {
        self.documents
            .iter()
            .flat_map(|d| &d.clauses)
            .map(|c| c.args.len())
            .sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for clause in self.documents.iter().flat_map(|d| &d.clauses) {
            out.push_str(&serde_json::to_string(clause).expect("clause records serialize"));
            out.push('\n');
        }
        out
    }
}

// Raw line shape; optional fields let us report precise errors.
#[derive(Deserialize)]
struct RawArg {
    arg_type: Option<ArgType>,
    head_lemma: Option<String>,
    dep_label: Option<String>,
    caseframe: Option<String>,
}

#[derive(Deserialize)]
struct RawClause {
    doc_id: Option<String>,
    sentence_index: Option<u32>,
    clause_index: Option<u32>,
    event_head_lemma: Option<String>,
    #[serde(default)]
    args: Vec<RawArg>,
}

fn parse_line(line: &str, line_no: usize) -> Result<ClauseRecord> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let raw: RawClause =
        serde_json::from_str(line).map_err(|e| err(format!("malformed record: {e}")))?;
    let doc_id = raw.doc_id.ok_or_else(|| err("missing doc_id".into()))?;
    let sentence_index = raw
        .sentence_index
        .ok_or_else(|| err("missing sentence_index".into()))?;
    let clause_index = raw
        .clause_index
        .ok_or_else(|| err("missing clause_index".into()))?;
    let event_head = raw
        .event_head_lemma
        .filter(|s| !s.is_empty())
        .ok_or_else(|| err("missing event_head_lemma".into()))?;
    let mut args = Vec::with_capacity(raw.args.len());
    for (j, a) in raw.args.into_iter().enumerate() {
        let head_lemma = a
            .head_lemma
            .filter(|s| !s.is_empty())
            .ok_or_else(|| err(format!("argument {j}: missing head_lemma")))?;
        let dep_label = a
            .dep_label
            .filter(|s| !s.is_empty())
            .ok_or_else(|| err(format!("argument {j}: missing dep_label")))?;
        let arg_type = ArgType::from_dep_label(&dep_label);
        if let Some(given) = a.arg_type {
            if given != arg_type {
                return Err(err(format!(
                    "argument {j}: arg_type {given:?} disagrees with dep label {dep_label:?} ({arg_type:?})"
                )));
            }
        }
        let caseframe = a
            .caseframe
            .unwrap_or_else(|| caseframe(&event_head, &dep_label));
        args.push(ArgumentRecord {
            arg_type,
            head_lemma,
            dep_label,
            caseframe,
        });
    }
    Ok(ClauseRecord {
        doc_id,
        sentence_index,
        clause_index,
        event_head_lemma: event_head,
        args,
    })
}

/// Parses clause records from a reader. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(&line, i + 1)?);
    }
    Corpus::from_records(records)
}

/// Parses one JSON value per non-blank line.
pub fn parse_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_corpus<P: AsRef<Path>>(path: P) -> Result<Corpus> {
    let bytes = fs::read(path)?;
    parse_corpus(bytes.as_slice())
}

pub const UNK: &str = "<unk>";
pub const UNK_ID: u32 = 0;

/// String/id bijection with frequency counts. Id 0 is always the reserved unknown token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        let index = repr
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens: repr.tokens,
            counts: repr.counts,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from observed frequencies. Tokens are ordered by descending
    /// frequency, then lexically, after the unknown token.
    pub fn from_counts(freqs: &BTreeMap<String, u64>, min_count: u64) -> Vocabulary {
        let mut kept: Vec<(&String, u64)> = freqs
            .iter()
            .filter(|(_, &c)| c >= min_count.max(1))
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let unk_count = freqs
            .iter()
            .filter(|(_, &c)| c < min_count.max(1))
            .map(|(_, &c)| c)
            .sum();
        let mut tokens = vec![UNK.to_string()];
        let mut counts = vec![unk_count];
        for (t, c) in kept {
            tokens.push(t.clone());
            counts.push(c);
        }
        VocabularyRepr { tokens, counts }.into()
    }

    /// A vocabulary over the given tokens, all with count zero.
    pub fn from_tokens<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![UNK.to_string()];
        all.extend(tokens.into_iter().map(Into::into));
        let counts = vec![0; all.len()];
        VocabularyRepr {
            tokens: all,
            counts,
        }
        .into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK_ID`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied().filter(|&i| i != UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub event_heads: Vocabulary,
    pub arg_heads: Vocabulary,
    pub caseframes: Vocabulary,
}

impl Vocabularies {
    pub fn sizes(&self) -> VocabSizes {
        VocabSizes {
            event_heads: self.event_heads.len(),
            arg_heads: self.arg_heads.len(),
            caseframes: self.caseframes.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub event_heads: usize,
    pub arg_heads: usize,
    pub caseframes: usize,
}

pub fn build_vocab(corpus: &Corpus, min_count: u64) -> Vocabularies {
    let mut heads = BTreeMap::new();
    let mut args = BTreeMap::new();
    let mut frames = BTreeMap::new();
    for clause in corpus.documents.iter().flat_map(|d| &d.clauses) {
        *heads.entry(clause.event_head_lemma.clone()).or_insert(0) += 1;
        for a in &clause.args {
            *args.entry(a.head_lemma.clone()).or_insert(0) += 1;
            *frames.entry(a.caseframe.clone()).or_insert(0) += 1;
        }
    }
    Vocabularies {
        event_heads: Vocabulary::from_counts(&heads, min_count),
        arg_heads: Vocabulary::from_counts(&args, min_count),
        caseframes: Vocabulary::from_counts(&frames, min_count),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedArg {
    pub arg_type: ArgType,
    pub head: u32,
    pub caseframe: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedClause {
    pub head: u32,
    pub args: Vec<IndexedArg>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedDocument {
    pub doc_id: String,
    pub clauses: Vec<IndexedClause>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedCorpus {
    pub documents: Vec<IndexedDocument>,
}

pub fn index_document(doc: &Document, vocab: &Vocabularies) -> IndexedDocument {
    IndexedDocument {
        doc_id: doc.doc_id.clone(),
        clauses: doc
            .clauses
            .iter()
            .map(|c| IndexedClause {
                head: vocab.event_heads.id(&c.event_head_lemma),
                args: c
                    .args
                    .iter()
                    .map(|a| IndexedArg {
                        arg_type: a.arg_type,
                        head: vocab.arg_heads.id(&a.head_lemma),
                        caseframe: vocab.caseframes.id(&a.caseframe),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn index_corpus(corpus: &Corpus, vocab: &Vocabularies) -> IndexedCorpus {
    IndexedCorpus {
        documents: corpus
            .documents
            .iter()
            .map(|d| index_document(d, vocab))
            .collect(),
    }
}

/// Event-head and argument lemmas recovered from ids, per document and clause.
pub type Lemmas = Vec<Vec<(String, Vec<String>)>>;

pub fn deindex(corpus: &IndexedCorpus, vocab: &Vocabularies) -> Lemmas {
    corpus
        .documents
        .iter()
        .map(|d| {
            d.clauses
                .iter()
                .map(|c| {
                    (
                        vocab.event_heads.token(c.head).to_string(),
                        c.args
                            .iter()
                            .map(|a| vocab.arg_heads.token(a.head).to_string())
                            .collect(),
                    )
                })
                .collect()
        })
        .collect()
}
