//! The heterogeneous information network: typed entities and timestamped,
//! typed relations gathered from several edge-list sources.
//!
//! Loading is done in stages that mirror how the raw sources are cleaned:
//! records are ingested as-is, duplicate entities are merged on exact keys
//! plus a name-similarity gate, repeated temporal edges are collapsed, and
//! finally rare or blacklisted relation types are dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Firm,
    Person,
    Stock,
    Location,
    Goods,
    Page,
    Other,
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "firm" => EntityKind::Firm,
            "person" => EntityKind::Person,
            "stock" => EntityKind::Stock,
            "location" => EntityKind::Location,
            "goods" => EntityKind::Goods,
            "page" => EntityKind::Page,
            "other" => EntityKind::Other,
            other => return Err(format!("unknown entity kind {other:?}")),
        })
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Firm => "firm",
            EntityKind::Person => "person",
            EntityKind::Stock => "stock",
            EntityKind::Location => "location",
            EntityKind::Goods => "goods",
            EntityKind::Page => "page",
            EntityKind::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, String>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Entity {
            id: id.into(),
            kind: EntityKind::Other,
            attributes: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.attributes.get("name").map(String::as_str)
    }
}

/// One typed relation. After collapsing, `first_seen`/`last_seen` hold the
/// span of the merged records; `None` marks an undated relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub src: String,
    pub dst: String,
    pub rel_type: String,
    pub first_seen: Option<NaiveDate>,
    pub last_seen: Option<NaiveDate>,
    /// Ownership share in `[0, 1]`, when the source carries one.
    pub weight_attr: Option<f64>,
}

impl Relation {
    pub fn new(src: impl Into<String>, rel_type: impl Into<String>, dst: impl Into<String>) -> Self {
        Relation {
            src: src.into(),
            dst: dst.into(),
            rel_type: rel_type.into(),
            first_seen: None,
            last_seen: None,
            weight_attr: None,
        }
    }

    pub fn dated(mut self, date: NaiveDate) -> Self {
        self.first_seen = Some(date);
        self.last_seen = Some(date);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight_attr = Some(weight);
        self
    }
}

/// A parsed line of an edge-list file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub src: String,
    pub rel_type: String,
    pub dst: String,
    pub date: Option<NaiveDate>,
    pub weight: Option<f64>,
}

impl EdgeRecord {
    /// `src <TAB> rel_type <TAB> dst <TAB> date|- <TAB> weight|-`
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let f = tsv::fields(line, 5)?;
        let (src, rel_type, dst) = (f[0].trim(), f[1].trim(), f[2].trim());
        if src.is_empty() || dst.is_empty() || rel_type.is_empty() {
            return Err("empty key or relation type".into());
        }
        let date = tsv::parse_optional_date(f[3])?;
        let weight = match f[4].trim() {
            "-" => None,
            w => {
                let v: f64 = w.parse().map_err(|_| format!("bad weight {w:?}"))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("weight {v} outside [0, 1]"));
                }
                Some(v)
            }
        };
        Ok(EdgeRecord {
            src: src.to_string(),
            rel_type: rel_type.to_string(),
            dst: dst.to_string(),
            date,
            weight,
        })
    }
}

/// A parsed line of a node attribute file.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub key: String,
    pub attr: String,
    pub value: String,
}

impl NodeRecord {
    /// `node_key <TAB> attr_name <TAB> value`
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let f = tsv::fields(line, 3)?;
        let (key, attr, value) = (f[0].trim(), f[1].trim(), f[2].trim());
        if key.is_empty() || attr.is_empty() {
            return Err("empty key or attribute name".into());
        }
        match attr {
            "latitude" | "longitude" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| format!("bad {attr} {value:?}"))?;
                let bound = if attr == "latitude" { 90.0 } else { 180.0 };
                if !(-bound..=bound).contains(&v) {
                    return Err(format!("{attr} {v} out of range"));
                }
            }
            "kind" => {
                value.parse::<EntityKind>()?;
            }
            _ => {}
        }
        Ok(NodeRecord {
            key: key.to_string(),
            attr: attr.to_string(),
            value: value.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub source_id: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub sources_loaded: usize,
    pub entities: usize,
    pub relations: usize,
    pub merged_entities: usize,
    pub dropped_relations: BTreeMap<String, usize>,
    pub errors: Vec<RecordError>,
}

impl IngestReport {
    fn drop_count(&mut self, reason: &str, n: usize) {
        if n > 0 {
            *self.dropped_relations.entry(reason.to_string()).or_default() += n;
        }
    }
}

/// Which exact-match keys can justify a merge, and the name gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeRules {
    pub name_threshold: f64,
    pub homepage: bool,
    pub coordinates: bool,
    pub ticker: bool,
}

impl Default for MergeRules {
    fn default() -> Self {
        MergeRules {
            name_threshold: 0.9,
            homepage: true,
            coordinates: true,
            ticker: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutcome {
    /// Old id to canonical id, for every entity that was merged away.
    pub resolution: BTreeMap<String, String>,
    /// Pairs that matched on keys and name but disagreed on kind.
    pub rejected: Vec<(String, String)>,
    pub dropped_self_loops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub min_count: usize,
    pub blacklist: BTreeSet<String>,
    pub ownership_threshold: f64,
    pub merge: MergeRules,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_count: 100,
            blacklist: BTreeSet::new(),
            ownership_threshold: 0.05,
            merge: MergeRules::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HinStore {
    entities: BTreeMap<String, Entity>,
    relations: Vec<Relation>,
}

impl HinStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Returns the entity, creating a bare one on first sight.
    pub fn entity_mut(&mut self, id: &str) -> &mut Entity {
        self.entities
            .entry(id.to_string())
            .or_insert_with(|| Entity::new(id))
    }

    pub fn add_entity(&mut self, entity: Entity) {
        self.entities.insert(entity.id.clone(), entity);
    }

    pub fn set_attribute(&mut self, id: &str, attr: &str, value: &str) {
        let e = self.entity_mut(id);
        if attr == "kind" {
            if let Ok(kind) = value.parse() {
                e.kind = kind;
            }
        } else {
            e.attributes.insert(attr.to_string(), value.to_string());
        }
    }

    /// Adds a relation, creating missing endpoints.
    pub fn add_relation(&mut self, relation: Relation) {
        self.entity_mut(&relation.src);
        self.entity_mut(&relation.dst);
        self.relations.push(relation);
    }

    /// The relation-type catalog with global occurrence counts.
    pub fn relation_type_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.relations {
            *counts.entry(r.rel_type.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn relation_types(&self) -> Vec<String> {
        self.relation_type_counts().into_keys().collect()
    }

    /// Loads one edge-list source. Malformed lines are recorded in the
    /// report and skipped.
    pub fn ingest_edges<R: BufRead>(&mut self, source_id: &str, reader: R) -> Result<IngestReport> {
        let (records, errors) = parse_source(source_id, reader, EdgeRecord::parse)?;
        Ok(self.apply_edge_records(source_id, records, errors))
    }

    /// Loads one node attribute source.
    pub fn ingest_nodes<R: BufRead>(&mut self, source_id: &str, reader: R) -> Result<IngestReport> {
        let (records, errors) = parse_source(source_id, reader, NodeRecord::parse)?;
        Ok(self.apply_node_records(records, errors))
    }

    fn apply_edge_records(
        &mut self,
        source_id: &str,
        records: Vec<EdgeRecord>,
        errors: Vec<RecordError>,
    ) -> IngestReport {
        let before = self.entities.len();
        let n = records.len();
        for rec in records {
            let mut rel = Relation::new(rec.src, rec.rel_type, rec.dst);
            rel.first_seen = rec.date;
            rel.last_seen = rec.date;
            rel.weight_attr = rec.weight;
            self.add_relation(rel);
        }
        debug!("{source_id}: {n} relations, {} new entities", self.entities.len() - before);
        let mut report = IngestReport {
            sources_loaded: 1,
            entities: self.entities.len() - before,
            relations: n,
            ..Default::default()
        };
        report.drop_count("malformed", errors.len());
        report.errors = errors;
        report
    }

    fn apply_node_records(&mut self, records: Vec<NodeRecord>, errors: Vec<RecordError>) -> IngestReport {
        let before = self.entities.len();
        for rec in records {
            self.set_attribute(&rec.key, &rec.attr, &rec.value);
        }
        IngestReport {
            sources_loaded: 1,
            entities: self.entities.len() - before,
            errors,
            ..Default::default()
        }
    }

    /// Merges entities that agree on an active exact-match key and whose
    /// names are similar enough. Repeats until no further pair qualifies, so
    /// the result is closed under the rule even after attribute merging.
    pub fn merge_entities(&mut self, rules: &MergeRules) -> MergeOutcome {
        let mut outcome = MergeOutcome::default();
        let mut rejected = BTreeSet::new();
        loop {
            let groups = self.match_groups(rules, &mut rejected);
            if groups.is_empty() {
                break;
            }
            let mut remap: HashMap<String, String> = HashMap::new();
            for group in groups {
                let canonical = group[0].clone();
                let mut merged = self.entities[&canonical].clone();
                let mut attrs: BTreeMap<String, String> = BTreeMap::new();
                for id in &group {
                    let e = self.entities.remove(id).expect("grouped entity exists");
                    for (k, v) in e.attributes {
                        if v.is_empty() {
                            continue;
                        }
                        match attrs.get(&k) {
                            Some(cur) if cur <= &v => {}
                            _ => {
                                attrs.insert(k, v);
                            }
                        }
                    }
                    if id != &canonical {
                        remap.insert(id.clone(), canonical.clone());
                    }
                }
                merged.attributes = attrs;
                self.entities.insert(canonical, merged);
            }
            // Earlier resolutions may now point at an entity that was merged
            // away in this round.
            for target in outcome.resolution.values_mut() {
                if let Some(c) = remap.get(target) {
                    *target = c.clone();
                }
            }
            outcome.resolution.extend(remap.iter().map(|(a, b)| (a.clone(), b.clone())));
            for rel in &mut self.relations {
                if let Some(c) = remap.get(&rel.src) {
                    rel.src = c.clone();
                }
                if let Some(c) = remap.get(&rel.dst) {
                    rel.dst = c.clone();
                }
            }
            let before = self.relations.len();
            self.relations.retain(|r| r.src != r.dst);
            outcome.dropped_self_loops += before - self.relations.len();
        }
        outcome.rejected = rejected.into_iter().collect();
        outcome
    }

    /// Connected groups (size ≥ 2, sorted, canonical id first) of entities
    /// linked by a qualifying match pair.
    fn match_groups(
        &self,
        rules: &MergeRules,
        rejected: &mut BTreeSet<(String, String)>,
    ) -> Vec<Vec<String>> {
        let ids: Vec<&String> = self.entities.keys().collect();
        let mut buckets: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entities.values().enumerate() {
            for (tag, key) in match_keys(e, rules) {
                buckets.entry((tag, key)).or_default().push(i);
            }
        }
        let names: Vec<String> = self
            .entities
            .values()
            .map(|e| normalize_name(e.name().unwrap_or("")))
            .collect();
        let mut uf = UnionFind::new(ids.len());
        let mut any = false;
        for members in buckets.values() {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    if uf.find(a) == uf.find(b) {
                        continue;
                    }
                    if lcs_ratio(&names[a], &names[b]) < rules.name_threshold {
                        continue;
                    }
                    let (ea, eb) = (&self.entities[ids[a]], &self.entities[ids[b]]);
                    if ea.kind != eb.kind {
                        if rejected.insert((ids[a].clone(), ids[b].clone())) {
                            warn!("merge rejected: {} ({}) vs {} ({})", ea.id, ea.kind, eb.id, eb.kind);
                        }
                        continue;
                    }
                    uf.union(a, b);
                    any = true;
                }
            }
        }
        if !any {
            return Vec::new();
        }
        let mut comps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for i in 0..ids.len() {
            comps.entry(uf.find(i)).or_default().push(ids[i].clone());
        }
        comps
            .into_values()
            .filter(|g| g.len() > 1)
            .map(|mut g| {
                g.sort();
                g
            })
            .collect()
    }

    /// Drops relation types occurring fewer than `min_count` times or listed
    /// in `blacklist`. Returns the number of relations removed per reason.
    pub fn filter_relations(
        &mut self,
        min_count: usize,
        blacklist: &BTreeSet<String>,
    ) -> BTreeMap<String, usize> {
        let counts = self.relation_type_counts();
        let mut dropped = BTreeMap::new();
        self.relations.retain(|r| {
            let reason = if blacklist.contains(&r.rel_type) {
                "blacklisted"
            } else if counts[&r.rel_type] < min_count {
                "below_min_count"
            } else {
                return true;
            };
            *dropped.entry(reason.to_string()).or_insert(0) += 1;
            false
        });
        dropped
    }

    /// Drops ownership relations (those carrying a share) below the
    /// threshold, then collapses relations with the same
    /// `(src, dst, rel_type)` into one spanning their earliest and latest
    /// dates. Returns `(dropped_below_threshold, collapsed)`.
    pub fn collapse_temporal_edges(&mut self, ownership_threshold: f64) -> (usize, usize) {
        let before = self.relations.len();
        self.relations
            .retain(|r| r.weight_attr.map_or(true, |w| w >= ownership_threshold));
        let dropped = before - self.relations.len();

        let mut merged: BTreeMap<(String, String, String), Relation> = BTreeMap::new();
        let mut order = Vec::new();
        for rel in self.relations.drain(..) {
            let key = (rel.src.clone(), rel.dst.clone(), rel.rel_type.clone());
            match merged.get_mut(&key) {
                None => {
                    order.push(key.clone());
                    merged.insert(key, rel);
                }
                Some(cur) => {
                    cur.first_seen = min_date(cur.first_seen, rel.first_seen);
                    cur.last_seen = max_date(cur.last_seen, rel.last_seen);
                    cur.weight_attr = match (cur.weight_attr, rel.weight_attr) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        (a, b) => a.or(b),
                    };
                }
            }
        }
        self.relations = order
            .into_iter()
            .map(|k| merged.remove(&k).expect("key recorded"))
            .collect();
        let collapsed = before - dropped - self.relations.len();
        (dropped, collapsed)
    }

    /// Runs the full cleaning sequence: merge, collapse, filter.
    pub fn clean(&mut self, config: &IngestConfig, report: &mut IngestReport) {
        let outcome = self.merge_entities(&config.merge);
        report.merged_entities += outcome.resolution.len();
        report.drop_count("self_loop", outcome.dropped_self_loops);
        let (below, collapsed) = self.collapse_temporal_edges(config.ownership_threshold);
        report.drop_count("ownership_below_threshold", below);
        report.drop_count("collapsed_duplicate", collapsed);
        for (reason, n) in self.filter_relations(config.min_count, &config.blacklist) {
            report.drop_count(&reason, n);
        }
        report.entities = self.entity_count();
        report.relations = self.relation_count();
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::create(path)?;
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = tsv::open(path)?;
        Ok(serde_json::from_reader(r)?)
    }
}

/// Reads edge and node files (in parallel), applies them in argument order,
/// then cleans the store. Entity and relation totals in the report describe
/// the final store.
pub fn ingest_files(
    edge_paths: &[impl AsRef<Path> + Sync],
    node_paths: &[impl AsRef<Path> + Sync],
    config: &IngestConfig,
) -> Result<(HinStore, IngestReport)> {
    let edges: Vec<(String, Vec<EdgeRecord>, Vec<RecordError>)> = edge_paths
        .par_iter()
        .map(|p| read_source(p.as_ref(), EdgeRecord::parse))
        .collect::<Result<_>>()?;
    let nodes: Vec<(String, Vec<NodeRecord>, Vec<RecordError>)> = node_paths
        .par_iter()
        .map(|p| read_source(p.as_ref(), NodeRecord::parse))
        .collect::<Result<_>>()?;

    let mut store = HinStore::new();
    let mut report = IngestReport::default();
    for (id, records, errors) in edges {
        let r = store.apply_edge_records(&id, records, errors);
        report.sources_loaded += 1;
        report.drop_count("malformed", r.errors.len());
        report.errors.extend(r.errors);
    }
    for (_, records, errors) in nodes {
        let r = store.apply_node_records(records, errors);
        report.sources_loaded += 1;
        report.errors.extend(r.errors);
    }
    store.clean(config, &mut report);
    Ok((store, report))
}

fn read_source<T>(
    path: &Path,
    parse: fn(&str) -> std::result::Result<T, String>,
) -> Result<(String, Vec<T>, Vec<RecordError>)> {
    let id = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|cause| Error::Source {
        source_id: id.clone(),
        cause,
    })?;
    let (records, errors) = parse_source(&id, std::io::BufReader::new(file), parse)?;
    Ok((id, records, errors))
}

fn parse_source<R: BufRead, T>(
    source_id: &str,
    reader: R,
    parse: fn(&str) -> std::result::Result<T, String>,
) -> Result<(Vec<T>, Vec<RecordError>)> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|cause| Error::Source {
            source_id: source_id.to_string(),
            cause,
        })?;
        if tsv::is_skippable(&line) {
            continue;
        }
        match parse(&line) {
            Ok(r) => records.push(r),
            Err(message) => {
                warn!("{source_id}:{}: {message}", i + 1);
                errors.push(RecordError {
                    source_id: source_id.to_string(),
                    line: i + 1,
                    message,
                });
            }
        }
    }
    Ok((records, errors))
}

fn min_date(a: Option<NaiveDate>, b: Option<NaiveDate>) -> Option<NaiveDate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

fn max_date(a: Option<NaiveDate>, b: Option<NaiveDate>) -> Option<NaiveDate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    }
}

/// The exact-match keys of an entity under the active rules, tagged by kind
/// of key so a homepage never collides with a ticker.
fn match_keys(e: &Entity, rules: &MergeRules) -> Vec<(u8, String)> {
    let mut keys = Vec::new();
    if rules.homepage {
        if let Some(h) = e.attributes.get("homepage") {
            let h = normalize_homepage(h);
            if !h.is_empty() {
                keys.push((0, h));
            }
        }
    }
    if rules.coordinates {
        let lat = e.attributes.get("latitude").and_then(|v| v.parse::<f64>().ok());
        let lon = e.attributes.get("longitude").and_then(|v| v.parse::<f64>().ok());
        if let (Some(lat), Some(lon)) = (lat, lon) {
            keys.push((1, format!("{lat:.5},{lon:.5}")));
        }
    }
    if rules.ticker {
        if let Some(t) = e.attributes.get("ticker") {
            let t = t.trim().to_ascii_uppercase();
            if !t.is_empty() {
                keys.push((2, t));
            }
        }
    }
    keys
}

fn normalize_homepage(h: &str) -> String {
    let h = h.trim().to_ascii_lowercase();
    let h = h
        .strip_prefix("https://")
        .or_else(|| h.strip_prefix("http://"))
        .unwrap_or(&h);
    let h = h.strip_prefix("www.").unwrap_or(h);
    h.trim_end_matches('/').to_string()
}

/// Case-folds, strips punctuation and collapses whitespace.
pub fn normalize_name(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Longest-common-subsequence length over the longer string's length.
/// Two empty strings are identical (1.0).
pub fn lcs_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// Name similarity used by the merge gate.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    lcs_ratio(&normalize_name(a), &normalize_name(b))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Writes an ingest report as `key <TAB> value` lines.
pub fn write_report<W: Write>(report: &IngestReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "key\tvalue")?;
    writeln!(w, "sources_loaded\t{}", report.sources_loaded)?;
    writeln!(w, "entities\t{}", report.entities)?;
    writeln!(w, "relations\t{}", report.relations)?;
    writeln!(w, "merged_entities\t{}", report.merged_entities)?;
    for (reason, n) in &report.dropped_relations {
        writeln!(w, "dropped.{reason}\t{n}")?;
    }
    for e in &report.errors {
        writeln!(w, "error\t{}:{}: {}", e.source_id, e.line, e.message)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        tsv::parse_date(s).unwrap()
    }

    fn firm(store: &mut HinStore, id: &str, attrs: &[(&str, &str)]) {
        store.set_attribute(id, "kind", "firm");
        for (k, v) in attrs {
            store.set_attribute(id, k, v);
        }
    }

    #[test]
    fn empty_stream_gives_zero_report() {
        let mut store = HinStore::new();
        let report = store.ingest_edges("empty", "".as_bytes()).unwrap();
        assert_eq!(report.entities, 0);
        assert_eq!(report.relations, 0);
        assert!(report.errors.is_empty());
        assert!(report.dropped_relations.is_empty());
    }

    #[test]
    fn shared_endpoint_counts() {
        let mut store = HinStore::new();
        let input = "a\tsupplier\tb\t-\t-\nb\tcustomer\tc\t2015-01-01\t-\n";
        let report = store.ingest_edges("s", input.as_bytes()).unwrap();
        assert_eq!(report.entities, 3);
        assert_eq!(report.relations, 2);
        assert_eq!(store.entity_count(), 3);
    }

    #[test]
    fn malformed_line_recorded_with_line_number() {
        let mut lines: Vec<String> = (0..10)
            .map(|i| format!("n{i}\tsupplier\tn{}\t-\t-", i + 1))
            .collect();
        lines[6] = "n6\tsupplier\tn7\tnot-a-date\t-".to_string();
        let mut store = HinStore::new();
        let report = store.ingest_edges("s", lines.join("\n").as_bytes()).unwrap();
        assert_eq!(report.relations, 9);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 7);
        assert_eq!(store.relation_count(), 9);
    }

    #[test]
    fn bad_weight_and_coordinates_rejected() {
        assert!(EdgeRecord::parse("a\town_stock\tb\t-\t1.5").is_err());
        assert!(EdgeRecord::parse("a\town_stock\tb\t-").is_err());
        assert!(NodeRecord::parse("a\tlatitude\t91").is_err());
        assert!(NodeRecord::parse("a\tlongitude\t-180").is_ok());
        assert!(NodeRecord::parse("a\tkind\tplanet").is_err());
    }

    #[test]
    fn ticker_match_merges_similar_names() {
        let mut s = HinStore::new();
        firm(&mut s, "f1", &[("name", "Acme Corp"), ("ticker", "XYZ")]);
        firm(&mut s, "f2", &[("name", "ACME Corporation"), ("ticker", "xyz")]);
        s.add_relation(Relation::new("f2", "supplier", "g"));
        let rules = MergeRules {
            name_threshold: 0.5,
            ..Default::default()
        };
        let out = s.merge_entities(&rules);
        assert_eq!(out.resolution.get("f2").map(String::as_str), Some("f1"));
        assert_eq!(s.relations()[0].src, "f1");
        // Lexicographically first non-empty value wins.
        assert_eq!(s.entity("f1").unwrap().name(), Some("ACME Corporation"));
    }

    #[test]
    fn identical_names_without_key_do_not_merge() {
        let mut s = HinStore::new();
        firm(&mut s, "f1", &[("name", "Acme")]);
        firm(&mut s, "f2", &[("name", "Acme")]);
        let out = s.merge_entities(&MergeRules::default());
        assert!(out.resolution.is_empty());
        assert_eq!(s.entity_count(), 2);
    }

    #[test]
    fn merge_is_transitive() {
        let mut s = HinStore::new();
        firm(&mut s, "a", &[("name", "Acme"), ("homepage", "https://acme.com/")]);
        firm(&mut s, "b", &[("name", "Acme"), ("homepage", "acme.com"), ("ticker", "AC")]);
        firm(&mut s, "c", &[("name", "Acme"), ("ticker", "AC")]);
        s.add_relation(Relation::new("a", "supplier", "c"));
        s.add_relation(Relation::new("b", "supplier", "x"));
        let out = s.merge_entities(&MergeRules::default());
        assert_eq!(out.resolution.len(), 2);
        assert_eq!(out.resolution["b"], "a");
        assert_eq!(out.resolution["c"], "a");
        assert_eq!(out.dropped_self_loops, 1);
        assert_eq!(s.relation_count(), 1);
        assert_eq!(s.relations()[0].src, "a");
    }

    #[test]
    fn coordinates_match_after_rounding() {
        let mut s = HinStore::new();
        firm(&mut s, "a", &[("name", "Plant"), ("latitude", "35.000001"), ("longitude", "139.5")]);
        firm(&mut s, "b", &[("name", "Plant"), ("latitude", "35.000004"), ("longitude", "139.500000")]);
        firm(&mut s, "c", &[("name", "Plant"), ("latitude", "35.0001"), ("longitude", "139.5")]);
        let out = s.merge_entities(&MergeRules::default());
        assert_eq!(out.resolution.len(), 1);
        assert_eq!(out.resolution["b"], "a");
    }

    #[test]
    fn kind_conflict_rejects_pair() {
        let mut s = HinStore::new();
        firm(&mut s, "a", &[("name", "Acme"), ("ticker", "AC")]);
        s.set_attribute("b", "kind", "person");
        s.set_attribute("b", "name", "Acme");
        s.set_attribute("b", "ticker", "AC");
        let out = s.merge_entities(&MergeRules::default());
        assert!(out.resolution.is_empty());
        assert_eq!(out.rejected, vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn filter_by_count_and_blacklist() {
        let mut s = HinStore::new();
        for i in 0..99 {
            s.add_relation(Relation::new(format!("a{i}"), "rare", "b"));
        }
        for i in 0..100 {
            s.add_relation(Relation::new(format!("a{i}"), "common", "b"));
            s.add_relation(Relation::new(format!("a{i}"), "wikiPageWikiLink", "b"));
        }
        let unchanged = s.clone();
        let mut t = s.clone();
        t.filter_relations(0, &BTreeSet::new());
        assert_eq!(t, unchanged);

        let blacklist: BTreeSet<String> = ["wikiPageWikiLink".to_string()].into();
        let dropped = s.filter_relations(100, &blacklist);
        assert_eq!(dropped["below_min_count"], 99);
        assert_eq!(dropped["blacklisted"], 100);
        assert_eq!(s.relation_types(), vec!["common".to_string()]);
        let once = s.clone();
        s.filter_relations(100, &blacklist);
        assert_eq!(s, once);
    }

    #[test]
    fn collapse_quarterly_ownership() {
        let mut s = HinStore::new();
        for (q, share) in [("2015-03-31", 0.03), ("2015-06-30", 0.06), ("2015-09-30", 0.07), ("2015-12-31", 0.06)] {
            s.add_relation(Relation::new("p", "own_stock", "f").dated(date(q)).with_weight(share));
        }
        let (dropped, collapsed) = s.collapse_temporal_edges(0.05);
        assert_eq!((dropped, collapsed), (1, 2));
        assert_eq!(s.relation_count(), 1);
        let r = &s.relations()[0];
        assert_eq!(r.first_seen, Some(date("2015-06-30")));
        assert_eq!(r.last_seen, Some(date("2015-12-31")));
    }

    #[test]
    fn collapse_keeps_span() {
        let mut s = HinStore::new();
        s.add_relation(Relation::new("a", "send_goods", "b").dated(date("2016-06-01")));
        s.add_relation(Relation::new("a", "send_goods", "b").dated(date("2015-01-01")));
        s.add_relation(Relation::new("a", "send_goods", "b"));
        s.collapse_temporal_edges(0.05);
        assert_eq!(s.relation_count(), 1);
        let r = &s.relations()[0];
        assert_eq!(r.first_seen, Some(date("2015-01-01")));
        assert_eq!(r.last_seen, Some(date("2016-06-01")));

        let mut single = HinStore::new();
        single.add_relation(Relation::new("a", "supplier", "b"));
        let before = single.clone();
        single.collapse_temporal_edges(0.05);
        assert_eq!(single, before);
    }

    #[test]
    fn lcs_ratio_values() {
        assert_eq!(lcs_ratio("", ""), 1.0);
        assert_eq!(lcs_ratio("abc", "abc"), 1.0);
        assert_eq!(lcs_ratio("abc", "xyz"), 0.0);
        assert!((name_similarity("Acme Corp", "ACME Corporation") - 9.0 / 16.0).abs() < 1e-12);
    }
}
