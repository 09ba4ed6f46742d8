//! Entity-extraction scoring by head-word matching with greedy N-to-1 slot mapping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::extract::ExtractedEntity;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldEntity {
    pub doc_id: String,
    pub gold_slot: String,
    pub head_lemma: String,
    #[serde(default)]
    pub optional: bool,
    /// Kept for reference; scoring ignores it.
    #[serde(default)]
    pub template: String,
}

pub fn parse_gold<R: BufRead>(reader: R) -> Result<Vec<GoldEntity>> {
    crate::corpus::parse_jsonl(reader)
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Same document and equal head lemmas after case folding.
pub fn matches(pred: &ExtractedEntity, gold: &GoldEntity) -> bool {
    pred.doc_id == gold.doc_id && fold(&pred.head_lemma) == fold(&gold.head_lemma)
}

/// Induced slot keys chosen for each gold slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMapping {
    pub n: usize,
    pub slots: BTreeMap<String, Vec<String>>,
}

/// Precision, recall and F1 with the counts behind them. Recall is 1 when there are
/// no required gold entities; precision is 0 when nothing was predicted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub found: usize,
    pub required: usize,
}

impl Prf {
    pub fn new(correct: usize, predicted: usize, found: usize, required: usize) -> Prf {
        let precision = if predicted == 0 {
            0.0
        } else {
            correct as f64 / predicted as f64
        };
        let recall = if required == 0 {
            1.0
        } else {
            found as f64 / required as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            correct,
            predicted,
            found,
            required,
        }
    }
}

/// Per induced slot: how many predictions it makes, how many of those match a gold
/// entity of one gold slot, and which required gold entities they find.
struct SlotEvidence {
    predicted: usize,
    correct: usize,
    found: BTreeSet<usize>,
}

/// Gold entities of one gold slot indexed by `(doc_id, folded lemma)`.
struct GoldIndex<'a> {
    by_key: HashMap<(&'a str, String), Vec<usize>>,
    gold: Vec<&'a GoldEntity>,
}

impl<'a> GoldIndex<'a> {
    fn new(gold: Vec<&'a GoldEntity>) -> Self {
        let mut by_key: HashMap<(&str, String), Vec<usize>> = HashMap::new();
        for (i, g) in gold.iter().enumerate() {
            by_key
                .entry((g.doc_id.as_str(), fold(&g.head_lemma)))
                .or_default()
                .push(i);
        }
        GoldIndex { by_key, gold }
    }

    fn required(&self) -> usize {
        self.gold.iter().filter(|g| !g.optional).count()
    }

    fn evidence(&self, preds: &[&ExtractedEntity]) -> SlotEvidence {
        let mut ev = SlotEvidence {
            predicted: preds.len(),
            correct: 0,
            found: BTreeSet::new(),
        };
        for p in preds {
            if let Some(hits) = self.by_key.get(&(p.doc_id.as_str(), fold(&p.head_lemma))) {
                ev.correct += 1;
                ev.found
                    .extend(hits.iter().copied().filter(|&i| !self.gold[i].optional));
            }
        }
        ev
    }
}

fn dedup(preds: &[ExtractedEntity]) -> Vec<&ExtractedEntity> {
    let unique: BTreeSet<&ExtractedEntity> = preds.iter().collect();
    unique.into_iter().collect()
}

fn group_by_slot<'a>(preds: &[&'a ExtractedEntity]) -> BTreeMap<String, Vec<&'a ExtractedEntity>> {
    let mut out: BTreeMap<String, Vec<&ExtractedEntity>> = BTreeMap::new();
    for p in preds {
        out.entry(p.slot_key()).or_default().push(p);
    }
    out
}

fn gold_slots(gold: &[GoldEntity]) -> BTreeMap<&str, Vec<&GoldEntity>> {
    let mut out: BTreeMap<&str, Vec<&GoldEntity>> = BTreeMap::new();
    for g in gold {
        out.entry(g.gold_slot.as_str()).or_default().push(g);
    }
    out
}

fn union_score(chosen: &[&SlotEvidence], required: usize) -> Prf {
    let predicted = chosen.iter().map(|e| e.predicted).sum();
    let correct = chosen.iter().map(|e| e.correct).sum();
    let found: BTreeSet<usize> = chosen
        .iter()
        .flat_map(|e| e.found.iter().copied())
        .collect();
    Prf::new(correct, predicted, found.len(), required)
}

/// For each gold slot, greedily adds the induced slot that most improves the F1 of the
/// union, up to `n` slots, stopping when no addition helps. Ties go to the
/// lexicographically smallest slot key. Induced slots may serve several gold slots.
pub fn fit_mapping(preds: &[ExtractedEntity], gold: &[GoldEntity], n: usize) -> SlotMapping {
    let preds = dedup(preds);
    let by_slot = group_by_slot(&preds);
    let mut mapping = SlotMapping {
        n,
        slots: BTreeMap::new(),
    };
    for (name, entries) in gold_slots(gold) {
        let index = GoldIndex::new(entries);
        let required = index.required();
        let evidence: Vec<(&String, SlotEvidence)> = by_slot
            .iter()
            .map(|(k, p)| (k, index.evidence(p)))
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        let mut best = 0.0;
        while chosen.len() < n {
            let mut pick: Option<(usize, f64)> = None;
            for (i, _) in evidence.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                let trial: Vec<&SlotEvidence> =
                    chosen.iter().chain([&i]).map(|&j| &evidence[j].1).collect();
                let f1 = union_score(&trial, required).f1;
                if pick.is_none_or(|(_, b)| f1 > b) {
                    pick = Some((i, f1));
                }
            }
            match pick {
                Some((i, f1)) if f1 > best => {
                    chosen.push(i);
                    best = f1;
                }
                _ => break,
            }
        }
        mapping.slots.insert(
            name.to_string(),
            chosen.into_iter().map(|i| evidence[i].0.clone()).collect(),
        );
    }
    mapping
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotScore {
    pub slot: String,
    pub mapped: Vec<String>,
    pub score: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub slots: Vec<SlotScore>,
    /// Micro-average over gold slots.
    pub overall: Prf,
}

/// Scores predictions under a fitted mapping. Every mapped prediction counts towards
/// precision (optional gold entities may satisfy it); recall counts required gold
/// entities found at least once. Exact duplicate predictions are scored once.
pub fn score(preds: &[ExtractedEntity], gold: &[GoldEntity], mapping: &SlotMapping) -> ScoreReport {
    let preds = dedup(preds);
    let by_slot = group_by_slot(&preds);
    let mut slots = Vec::new();
    let (mut correct, mut predicted, mut found, mut required) = (0, 0, 0, 0);
    for (name, entries) in gold_slots(gold) {
        let index = GoldIndex::new(entries);
        let mapped = mapping.slots.get(name).cloned().unwrap_or_default();
        let evidence: Vec<SlotEvidence> = mapped
            .iter()
            .filter_map(|k| by_slot.get(k))
            .map(|p| index.evidence(p))
            .collect();
        let s = union_score(&evidence.iter().collect::<Vec<_>>(), index.required());
        correct += s.correct;
        predicted += s.predicted;
        found += s.found;
        required += s.required;
        slots.push(SlotScore {
            slot: name.to_string(),
            mapped,
            score: s,
        });
    }
    ScoreReport {
        slots,
        overall: Prf::new(correct, predicted, found, required),
    }
}

impl ScoreReport {
    /// Fixed-width table with P, R and F1 as percentages.
    pub fn to_text(&self) -> String {
        let width = self
            .slots
            .iter()
            .map(|s| s.slot.len())
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}",
            "Slot", "P", "R", "F1"
        );
        let row = |out: &mut String, name: &str, s: &Prf| {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1}",
                name,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1
            );
        };
        for s in &self.slots {
            row(&mut out, &s.slot, &s.score);
        }
        row(&mut out, "Overall", &self.overall);
        out
    }
}
