//! Per-category exclusion lists built from dated news events, and the
//! temporal splits used for training and evaluation.
//!
//! Window conventions are half-open on the left: a firm is a training
//! target when its first event falls in `(cutoff - delta, cutoff]`, and a
//! positive when it falls in `(cutoff, horizon_end]`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::RecordError;
use crate::tsv;

/// The seventeen negative-news categories.
pub const DEFAULT_CATEGORIES: [&str; 17] = [
    "Product/Service",
    "Regulatory",
    "Financial",
    "Fraud",
    "Workforce",
    "Management",
    "Anti-Competitive",
    "Information",
    "Workplace",
    "Discrimination-Workforce",
    "Environmental",
    "Ownership",
    "Production-Supply",
    "Corruption",
    "Human",
    "Sanctions",
    "Association",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NewsEvent {
    pub date: NaiveDate,
    pub firm: String,
    pub category: String,
}

impl NewsEvent {
    /// `date <TAB> firm_key <TAB> category`
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let f = tsv::fields(line, 3)?;
        let firm = f[1].trim();
        let category = f[2].trim();
        if firm.is_empty() || category.is_empty() {
            return Err("empty firm or category".into());
        }
        Ok(NewsEvent {
            date: tsv::parse_date(f[0])?,
            firm: firm.to_string(),
            category: category.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryList {
    pub category: String,
    /// firm → (first event date, last event date)
    pub entries: BTreeMap<String, (NaiveDate, NaiveDate)>,
}

impl CategoryList {
    pub fn new(category: impl Into<String>) -> Self {
        CategoryList {
            category: category.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn first_date(&self, firm: &str) -> Option<NaiveDate> {
        self.entries.get(firm).map(|&(first, _)| first)
    }

    fn record(&mut self, firm: &str, date: NaiveDate) {
        self.entries
            .entry(firm.to_string())
            .and_modify(|(first, last)| {
                *first = (*first).min(date);
                *last = (*last).max(date);
            })
            .or_insert((date, date));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub cutoff: NaiveDate,
    pub delta_days: i64,
    pub horizon_end: NaiveDate,
}

impl SplitSpec {
    pub fn new(cutoff: NaiveDate, delta_days: i64, horizon_end: NaiveDate) -> Result<Self> {
        let spec = SplitSpec {
            cutoff,
            delta_days,
            horizon_end,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_days <= 0 {
            return Err(Error::Config(format!("delta_days must be > 0, got {}", self.delta_days)));
        }
        if self.cutoff >= self.horizon_end {
            return Err(Error::Config("cutoff must precede horizon_end".into()));
        }
        Ok(())
    }

    pub fn window_start(&self) -> NaiveDate {
        self.cutoff - Duration::days(self.delta_days)
    }
}

/// Groups events into one list per category. Events with a category
/// outside `catalog` are reported and skipped.
pub fn build_lists<'a, I, S>(events: I, catalog: &[S]) -> (BTreeMap<String, CategoryList>, Vec<RecordError>)
where
    I: IntoIterator<Item = &'a NewsEvent>,
    S: AsRef<str>,
{
    let known: BTreeSet<&str> = catalog.iter().map(AsRef::as_ref).collect();
    let mut lists: BTreeMap<String, CategoryList> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, ev) in events.into_iter().enumerate() {
        if !known.contains(ev.category.as_str()) {
            warn!("unknown category {:?} for {}", ev.category, ev.firm);
            errors.push(RecordError {
                source_id: "events".into(),
                line: i + 1,
                message: format!("unknown category {:?}", ev.category),
            });
            continue;
        }
        lists
            .entry(ev.category.clone())
            .or_insert_with(|| CategoryList::new(ev.category.clone()))
            .record(&ev.firm, ev.date);
    }
    (lists, errors)
}

/// Source firms (first event at or before the window start) and target
/// firms (first event inside the window ending at the cutoff).
pub fn split_source_target(list: &CategoryList, spec: &SplitSpec) -> (BTreeSet<String>, BTreeSet<String>) {
    let start = spec.window_start();
    let mut source = BTreeSet::new();
    let mut target = BTreeSet::new();
    for (firm, &(first, _)) in &list.entries {
        if first <= start {
            source.insert(firm.clone());
        } else if first <= spec.cutoff {
            target.insert(firm.clone());
        }
    }
    (source, target)
}

/// Universe firms with no event up to the cutoff, and the subset whose first
/// event falls in `(cutoff, horizon_end]`.
pub fn prediction_targets<S: AsRef<str>>(
    list: &CategoryList,
    universe: &[S],
    spec: &SplitSpec,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut candidates = BTreeSet::new();
    let mut positives = BTreeSet::new();
    for firm in universe.iter().map(AsRef::as_ref) {
        match list.first_date(firm) {
            Some(first) if first <= spec.cutoff => {}
            Some(first) => {
                candidates.insert(firm.to_string());
                if first <= spec.horizon_end {
                    positives.insert(firm.to_string());
                }
            }
            None => {
                candidates.insert(firm.to_string());
            }
        }
    }
    (candidates, positives)
}

/// Uses `delta_days` unless the source set under it is smaller than
/// `min_sources`, in which case the long window is used.
pub fn choose_delta(list: &CategoryList, spec: &SplitSpec, long_delta: i64, min_sources: usize) -> i64 {
    let (source, _) = split_source_target(list, spec);
    if source.len() < min_sources {
        long_delta
    } else {
        spec.delta_days
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
    Candidate,
    Positive,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Target => "target",
            Role::Candidate => "candidate",
            Role::Positive => "positive",
        }
    }
}

/// All roles of one category at one split. Positives are always also
/// candidates; the file stores each firm once with its most specific role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub sources: BTreeSet<String>,
    pub targets: BTreeSet<String>,
    pub candidates: BTreeSet<String>,
    pub positives: BTreeSet<String>,
}

impl Splits {
    pub fn compute<S: AsRef<str>>(list: &CategoryList, universe: Option<&[S]>, spec: &SplitSpec) -> Self {
        let (sources, targets) = split_source_target(list, spec);
        let (candidates, positives) = match universe {
            Some(u) => prediction_targets(list, u, spec),
            None => Default::default(),
        };
        Splits {
            sources,
            targets,
            candidates,
            positives,
        }
    }

    /// Sources and targets: the firms treated as known at prediction time.
    pub fn known(&self) -> BTreeSet<String> {
        self.sources.union(&self.targets).cloned().collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "firm\trole")?;
        let mut rows: Vec<(&str, Role)> = Vec::new();
        rows.extend(self.sources.iter().map(|f| (f.as_str(), Role::Source)));
        rows.extend(self.targets.iter().map(|f| (f.as_str(), Role::Target)));
        for c in &self.candidates {
            let role = if self.positives.contains(c) {
                Role::Positive
            } else {
                Role::Candidate
            };
            rows.push((c.as_str(), role));
        }
        rows.sort();
        for (firm, role) in rows {
            writeln!(w, "{firm}\t{}", role.as_str())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::create(path)?;
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut splits = Splits::default();
        for (n, line) in tsv::read_lines(path)?.into_iter().skip(1) {
            if tsv::is_skippable(&line) {
                continue;
            }
            let f = tsv::fields(&line, 2).map_err(|m| tsv::parse_error(&name, n, m))?;
            let firm = f[0].to_string();
            match f[1].trim() {
                "source" => {
                    splits.sources.insert(firm);
                }
                "target" => {
                    splits.targets.insert(firm);
                }
                "candidate" => {
                    splits.candidates.insert(firm);
                }
                "positive" => {
                    splits.candidates.insert(firm.clone());
                    splits.positives.insert(firm);
                }
                other => return Err(tsv::parse_error(&name, n, format!("unknown role {other:?}"))),
            }
        }
        Ok(splits)
    }
}

/// Reads an event file. Malformed lines are returned as errors alongside
/// the parsed events.
pub fn read_events(path: &Path) -> Result<(Vec<NewsEvent>, Vec<RecordError>)> {
    let name = path.display().to_string();
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in tsv::read_lines(path)? {
        if tsv::is_skippable(&line) {
            continue;
        }
        match NewsEvent::parse(&line) {
            Ok(ev) => events.push(ev),
            Err(message) => errors.push(RecordError {
                source_id: name.clone(),
                line: n,
                message,
            }),
        }
    }
    Ok((events, errors))
}

pub fn write_events<W: Write>(events: &[NewsEvent], mut w: W) -> std::io::Result<()> {
    for ev in events {
        writeln!(w, "{}\t{}\t{}", ev.date.format(tsv::DATE_FORMAT), ev.firm, ev.category)?;
    }
    Ok(())
}
