//! Binary edge features for the core network.
//!
//! Three schemes are supported:
//!
//! * `relation`: which relation types directly connect the pair.
//! * `path`: which relation-type sequences (meta-paths, length ≤ 4) connect
//!   the pair in the full network, restricted to the most frequent ones.
//! * `segment`: which relation types occur at which symmetry-reduced
//!   position of a connecting path (segments `1, 2, 3:1, 3:2, 4:1, 4:2`).
//!
//! Paths are undirected and simple. Longer paths are discarded when one of
//! their intermediate nodes already lies on a retained shorter path between
//! the same endpoints, which keeps hub nodes from flooding the features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_graph::CoreGraph;
use crate::error::{Error, Result};
use crate::store::HinStore;
use crate::tsv;

pub const MAX_PATH_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureScheme {
    #[serde(rename = "relation")]
    CoreRelation,
    #[serde(rename = "path")]
    Path,
    #[serde(rename = "segment")]
    PathSegment,
}

impl FeatureScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureScheme::CoreRelation => "relation",
            FeatureScheme::Path => "path",
            FeatureScheme::PathSegment => "segment",
        }
    }
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relation" | "core-relation" => Ok(FeatureScheme::CoreRelation),
            "path" => Ok(FeatureScheme::Path),
            "segment" | "path-segment" => Ok(FeatureScheme::PathSegment),
            other => Err(Error::Config(format!("unknown feature scheme {other:?}"))),
        }
    }
}

/// Position class of an edge within a path, with the two ends of a path
/// identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    One,
    Two,
    ThreeOuter,
    ThreeMiddle,
    FourOuter,
    FourInner,
}

impl Segment {
    pub const ALL: [Segment; 6] = [
        Segment::One,
        Segment::Two,
        Segment::ThreeOuter,
        Segment::ThreeMiddle,
        Segment::FourOuter,
        Segment::FourInner,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Segment::One => "1",
            Segment::Two => "2",
            Segment::ThreeOuter => "3:1",
            Segment::ThreeMiddle => "3:2",
            Segment::FourOuter => "4:1",
            Segment::FourInner => "4:2",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Segment::ALL
            .into_iter()
            .find(|seg| seg.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown segment {s:?}")))
    }
}

/// Segment of the edge at 1-based `position` along a path of `length` edges.
pub fn segment_of(position: usize, length: usize) -> Result<Segment> {
    if length > MAX_PATH_LEN {
        return Err(Error::PathTooLong(length));
    }
    if position == 0 || position > length {
        return Err(Error::Config(format!(
            "position {position} outside a path of length {length}"
        )));
    }
    // Distance from the nearer end: 1 for the outer edges.
    let from_end = position.min(length + 1 - position);
    Ok(match (length, from_end) {
        (1, _) => Segment::One,
        (2, _) => Segment::Two,
        (3, 1) => Segment::ThreeOuter,
        (3, _) => Segment::ThreeMiddle,
        (4, 1) => Segment::FourOuter,
        (_, _) => Segment::FourInner,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_len: usize,
    pub top_k: usize,
    /// Nodes with more incident relations than this are never traversed as
    /// intermediates. `None` disables the cap.
    pub expansion_cap: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_len: MAX_PATH_LEN,
            top_k: 3000,
            expansion_cap: Some(10_000),
        }
    }
}

/// Undirected, relation-collapsed adjacency of a store, for path search.
///
/// Relation types are interned in name order, so comparing id sequences
/// compares name sequences lexicographically.
#[derive(Debug, Clone)]
pub struct PathIndex {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    rel_names: Vec<String>,
    /// Per node: `(neighbor, relation types linking them)`, sorted by neighbor.
    adjacency: Vec<Vec<(usize, Vec<u32>)>>,
    expandable: Vec<bool>,
}

/// A retained path: its node sequence and the relation types on each hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePath {
    pub nodes: Vec<usize>,
    pub hops: Vec<Vec<u32>>,
}

impl NodePath {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn intermediates(&self) -> &[usize] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// Binary path summary of one node pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSummary {
    /// Canonical relation-type signatures of all retained paths.
    pub signatures: BTreeSet<Vec<u32>>,
    /// `(relation type, segment)` cells hit by retained paths.
    pub segments: BTreeSet<(u32, Segment)>,
}

impl PathIndex {
    pub fn new(store: &HinStore, expansion_cap: Option<usize>) -> Self {
        let ids: Vec<String> = store.entities().map(|e| e.id.clone()).collect();
        let index: HashMap<String, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let rel_names = store.relation_types();
        let rel_index: HashMap<&str, u32> = rel_names
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i as u32))
            .collect();

        let mut links: Vec<BTreeMap<usize, BTreeSet<u32>>> = vec![BTreeMap::new(); ids.len()];
        let mut incident = vec![0usize; ids.len()];
        for r in store.relations() {
            let (a, b) = (index[&r.src], index[&r.dst]);
            incident[a] += 1;
            incident[b] += 1;
            if a == b {
                continue;
            }
            let rel = rel_index[r.rel_type.as_str()];
            links[a].entry(b).or_default().insert(rel);
            links[b].entry(a).or_default().insert(rel);
        }
        let adjacency = links
            .into_iter()
            .map(|m| m.into_iter().map(|(n, rels)| (n, rels.into_iter().collect())).collect())
            .collect();
        let expandable = incident
            .iter()
            .map(|&c| expansion_cap.map_or(true, |cap| c <= cap))
            .collect();
        PathIndex {
            ids,
            index,
            rel_names,
            adjacency,
            expandable,
        }
    }

    pub fn node(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn rel_names(&self) -> &[String] {
        &self.rel_names
    }

    pub fn rel_name(&self, r: u32) -> &str {
        &self.rel_names[r as usize]
    }

    fn link(&self, a: usize, b: usize) -> Option<&[u32]> {
        let adj = &self.adjacency[a];
        adj.binary_search_by_key(&b, |(n, _)| *n)
            .ok()
            .map(|k| adj[k].1.as_slice())
    }

    /// Simple undirected paths of length ≤ `max_len` from `i` to `j`, with
    /// dominance pruning applied length by length.
    pub fn paths_between(&self, i: usize, j: usize, max_len: usize) -> Vec<NodePath> {
        let max_len = max_len.min(MAX_PATH_LEN);
        let mut by_len: Vec<Vec<Vec<usize>>> = vec![Vec::new(); max_len + 1];
        if i == j {
            return Vec::new();
        }
        let mut stack = vec![i];
        self.extend_paths(j, max_len, &mut stack, &mut by_len);

        let mut blocked: BTreeSet<usize> = BTreeSet::new();
        let mut retained = Vec::new();
        for paths in by_len.into_iter().skip(1) {
            let kept: Vec<Vec<usize>> = paths
                .into_iter()
                .filter(|p| p[1..p.len() - 1].iter().all(|n| !blocked.contains(n)))
                .collect();
            for p in &kept {
                blocked.extend(p[1..p.len() - 1].iter().copied());
            }
            retained.extend(kept.into_iter().map(|nodes| {
                let hops = nodes
                    .windows(2)
                    .map(|w| self.link(w[0], w[1]).expect("adjacent").to_vec())
                    .collect();
                NodePath { nodes, hops }
            }));
        }
        retained
    }

    fn extend_paths(&self, target: usize, max_len: usize, stack: &mut Vec<usize>, out: &mut [Vec<Vec<usize>>]) {
        let last = *stack.last().expect("non-empty");
        let len = stack.len(); // edges after the next hop
        if self.link(last, target).is_some() {
            let mut p = stack.clone();
            p.push(target);
            out[len].push(p);
        }
        if len == max_len {
            return;
        }
        for (next, _) in &self.adjacency[last] {
            let next = *next;
            if next == target || !self.expandable[next] || stack.contains(&next) {
                continue;
            }
            stack.push(next);
            self.extend_paths(target, max_len, stack, out);
            stack.pop();
        }
    }

    /// Signatures and segment cells for the pair.
    pub fn summarize(&self, i: usize, j: usize, max_len: usize) -> PairSummary {
        let mut summary = PairSummary::default();
        for path in self.paths_between(i, j, max_len) {
            let len = path.len();
            for (pos, hop) in path.hops.iter().enumerate() {
                let seg = segment_of(pos + 1, len).expect("length bounded");
                summary.segments.extend(hop.iter().map(|&r| (r, seg)));
            }
            for_each_signature(&path.hops, |sig| {
                summary.signatures.insert(canonical_signature(sig));
            });
        }
        summary
    }

    /// Relation-type signatures (as names) of the retained paths.
    pub fn signatures_between(&self, a: &str, b: &str, max_len: usize) -> Result<BTreeSet<Vec<String>>> {
        let (i, j) = (self.node(a)?, self.node(b)?);
        Ok(self
            .summarize(i, j, max_len)
            .signatures
            .into_iter()
            .map(|sig| sig.iter().map(|&r| self.rel_name(r).to_string()).collect())
            .collect())
    }
}

/// Calls `f` with every relation-type sequence the hops can spell.
fn for_each_signature(hops: &[Vec<u32>], mut f: impl FnMut(&[u32])) {
    fn rec(hops: &[Vec<u32>], cur: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        if cur.len() == hops.len() {
            f(cur);
            return;
        }
        for &r in &hops[cur.len()] {
            cur.push(r);
            rec(hops, cur, f);
            cur.pop();
        }
    }
    rec(hops, &mut Vec::with_capacity(hops.len()), &mut f);
}

/// The smaller of a signature and its reversal.
pub fn canonical_signature(sig: &[u32]) -> Vec<u32> {
    let rev: Vec<u32> = sig.iter().rev().copied().collect();
    if rev.as_slice() < sig {
        rev
    } else {
        sig.to_vec()
    }
}

/// Path summaries for every core edge, in edge order.
pub fn summarize_core(index: &PathIndex, core: &CoreGraph, max_len: usize) -> Result<Vec<PairSummary>> {
    let pairs: Vec<(usize, usize)> = core
        .edges()
        .iter()
        .map(|&(a, b)| Ok((index.node(core.node_id(a))?, index.node(core.node_id(b))?)))
        .collect::<Result<_>>()?;
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| index.summarize(i, j, max_len))
        .collect())
}

/// The `k` signatures present on the most edges; ties go to the
/// lexicographically smaller signature.
pub fn select_top_paths(summaries: &[PairSummary], k: usize) -> Vec<Vec<u32>> {
    let mut counts: BTreeMap<&Vec<u32>, usize> = BTreeMap::new();
    for s in summaries {
        for sig in &s.signatures {
            *counts.entry(sig).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&Vec<u32>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(sig, _)| sig.clone()).collect()
}

/// Sparse binary matrix: one row per core edge, active columns sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    scheme: FeatureScheme,
    catalog: Vec<String>,
    rows: Vec<Vec<u32>>,
}

impl FeatureMatrix {
    /// Builds a matrix from per-row active columns. Columns are sorted and
    /// deduplicated.
    pub fn new(scheme: FeatureScheme, catalog: Vec<String>, rows: Vec<Vec<u32>>) -> Result<Self> {
        let n_cols = catalog.len();
        let mut clean = Vec::with_capacity(rows.len());
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.last() {
                if c as usize >= n_cols {
                    return Err(Error::DimensionMismatch {
                        expected: n_cols,
                        got: c as usize + 1,
                    });
                }
            }
            clean.push(row);
        }
        Ok(FeatureMatrix {
            scheme,
            catalog,
            rows: clean,
        })
    }

    pub fn from_dense(scheme: FeatureScheme, catalog: Vec<String>, dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, _)| c as u32)
                    .collect()
            })
            .collect();
        Self::new(scheme, catalog, rows)
    }

    pub fn scheme(&self) -> FeatureScheme {
        self.scheme
    }

    pub fn catalog(&self) -> &[String] {
        &self.catalog
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.catalog.len()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].binary_search(&(c as u32)).is_ok()
    }

    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_cols()];
        for &c in &self.rows[r] {
            v[c as usize] = 1.0;
        }
        v
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|r| self.dense_row(r)).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.n_cols()];
        for row in &self.rows {
            for &c in row {
                sums[c as usize] += 1;
            }
        }
        sums
    }

    /// Text format: `#scheme`, `#shape` and one `#col` line per catalog entry,
    /// then `row <TAB> col` pairs.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#scheme\t{}", self.scheme)?;
        writeln!(w, "#shape\t{}\t{}", self.n_rows(), self.n_cols())?;
        for (i, c) in self.catalog.iter().enumerate() {
            writeln!(w, "#col\t{i}\t{c}")?;
        }
        writeln!(w, "row\tcol")?;
        for (r, row) in self.rows.iter().enumerate() {
            for c in row {
                writeln!(w, "{r}\t{c}")?;
            }
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
        let mut scheme = None;
        let mut shape = None;
        let mut catalog = Vec::new();
        let mut rows: Vec<Vec<u32>> = Vec::new();
        for (n, line) in tsv::read_lines(path)? {
            let err = |m: String| tsv::parse_error(&name, n, m);
            if let Some(rest) = line.strip_prefix("#scheme\t") {
                scheme = Some(rest.trim().parse::<FeatureScheme>()?);
            } else if let Some(rest) = line.strip_prefix("#shape\t") {
                let f = tsv::fields(rest, 2).map_err(err)?;
                let r: usize = f[0].parse().map_err(|_| tsv::parse_error(&name, n, "bad shape"))?;
                let c: usize = f[1].parse().map_err(|_| tsv::parse_error(&name, n, "bad shape"))?;
                rows = vec![Vec::new(); r];
                shape = Some((r, c));
            } else if let Some(rest) = line.strip_prefix("#col\t") {
                let (_, desc) = rest
                    .split_once('\t')
                    .ok_or_else(|| tsv::parse_error(&name, n, "bad catalog line"))?;
                catalog.push(desc.to_string());
            } else if line == "row\tcol" || tsv::is_skippable(&line) {
                continue;
            } else {
                let f = tsv::fields(&line, 2).map_err(err)?;
                let r: usize = f[0].parse().map_err(|_| tsv::parse_error(&name, n, "bad row"))?;
                let c: u32 = f[1].parse().map_err(|_| tsv::parse_error(&name, n, "bad col"))?;
                rows.get_mut(r)
                    .ok_or_else(|| tsv::parse_error(&name, n, "row out of range"))?
                    .push(c);
            }
        }
        let scheme = scheme.ok_or_else(|| tsv::parse_error(&name, 1, "missing #scheme"))?;
        let (_, cols) = shape.ok_or_else(|| tsv::parse_error(&name, 1, "missing #shape"))?;
        if cols != catalog.len() {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: catalog.len(),
            });
        }
        FeatureMatrix::new(scheme, catalog, rows)
    }
}

/// Catalog descriptor of a `(relation type, segment)` cell.
pub fn segment_descriptor(rel: &str, seg: Segment) -> String {
    format!("{rel}@{seg}")
}

/// Inverse of [`segment_descriptor`].
pub fn parse_segment_descriptor(desc: &str) -> Result<(String, Segment)> {
    let (rel, seg) = desc
        .rsplit_once('@')
        .ok_or_else(|| Error::Config(format!("not a segment descriptor: {desc:?}")))?;
    Ok((rel.to_string(), seg.parse()?))
}

pub fn path_descriptor(sig: &[u32], index: &PathIndex) -> String {
    sig.iter()
        .map(|&r| index.rel_name(r))
        .collect::<Vec<_>>()
        .join("|")
}

/// One column per relation type appearing on core edges.
pub fn core_relation_features(core: &CoreGraph) -> FeatureMatrix {
    let catalog: Vec<String> = (0..core.edge_count())
        .flat_map(|e| core.edge_relations(e).iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let col: HashMap<&str, u32> = catalog
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let rows = (0..core.edge_count())
        .map(|e| core.edge_relations(e).iter().map(|r| col[r.as_str()]).collect())
        .collect();
    FeatureMatrix::new(FeatureScheme::CoreRelation, catalog, rows).expect("columns in range")
}

/// One column per vocabulary signature.
pub fn path_features(summaries: &[PairSummary], vocab: &[Vec<u32>], index: &PathIndex) -> FeatureMatrix {
    let col: HashMap<&Vec<u32>, u32> = vocab.iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
    let catalog = vocab.iter().map(|s| path_descriptor(s, index)).collect();
    let rows = summaries
        .iter()
        .map(|s| s.signatures.iter().filter_map(|sig| col.get(sig).copied()).collect())
        .collect();
    FeatureMatrix::new(FeatureScheme::Path, catalog, rows).expect("columns in range")
}

/// One column per `(relation type, segment)` cell seen at least once,
/// ordered by segment then relation name.
pub fn path_segment_features(summaries: &[PairSummary], index: &PathIndex) -> FeatureMatrix {
    let cells: BTreeSet<(Segment, u32)> = summaries
        .iter()
        .flat_map(|s| s.segments.iter().map(|&(r, seg)| (seg, r)))
        .collect();
    let col: HashMap<(Segment, u32), u32> = cells.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    let catalog = cells
        .iter()
        .map(|&(seg, r)| segment_descriptor(index.rel_name(r), seg))
        .collect();
    let rows = summaries
        .iter()
        .map(|s| s.segments.iter().map(|&(r, seg)| col[&(seg, r)]).collect())
        .collect();
    FeatureMatrix::new(FeatureScheme::PathSegment, catalog, rows).expect("columns in range")
}

/// Builds the feature matrix of `scheme` for every core edge.
pub fn build_features(
    store: &HinStore,
    core: &CoreGraph,
    scheme: FeatureScheme,
    config: &FeatureConfig,
) -> Result<FeatureMatrix> {
    if config.max_len == 0 || config.max_len > MAX_PATH_LEN {
        return Err(Error::PathTooLong(config.max_len));
    }
    if config.top_k == 0 {
        return Err(Error::Config("top_k must be > 0".into()));
    }
    match scheme {
        FeatureScheme::CoreRelation => Ok(core_relation_features(core)),
        FeatureScheme::Path => {
            let index = PathIndex::new(store, config.expansion_cap);
            let summaries = summarize_core(&index, core, config.max_len)?;
            let vocab = select_top_paths(&summaries, config.top_k);
            Ok(path_features(&summaries, &vocab, &index))
        }
        FeatureScheme::PathSegment => {
            let index = PathIndex::new(store, config.expansion_cap);
            let summaries = summarize_core(&index, core, config.max_len)?;
            Ok(path_segment_features(&summaries, &index))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_graph::build_core;
    use crate::store::Relation;

    fn store(rels: &[(&str, &str, &str)]) -> HinStore {
        let mut s = HinStore::new();
        for (a, r, b) in rels {
            s.add_relation(Relation::new(*a, *r, *b));
        }
        s
    }

    fn sigs(s: &HinStore, a: &str, b: &str) -> BTreeSet<Vec<String>> {
        PathIndex::new(s, None).signatures_between(a, b, 4).unwrap()
    }

    fn sig(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn segment_table() {
        let expect = [
            ((1, 1), "1"),
            ((1, 2), "2"),
            ((2, 2), "2"),
            ((1, 3), "3:1"),
            ((2, 3), "3:2"),
            ((3, 3), "3:1"),
            ((1, 4), "4:1"),
            ((2, 4), "4:2"),
            ((3, 4), "4:2"),
            ((4, 4), "4:1"),
        ];
        for ((pos, len), seg) in expect {
            assert_eq!(segment_of(pos, len).unwrap().as_str(), seg, "({pos},{len})");
        }
        assert!(matches!(segment_of(1, 5), Err(Error::PathTooLong(5))));
        assert!(segment_of(0, 2).is_err());
        assert!(segment_of(3, 2).is_err());
    }

    #[test]
    fn length_three_path_through_c_is_pruned() {
        let s = store(&[
            ("A", "is_in", "c"),
            ("c", "is_in", "B"),
            ("c", "alliance", "d"),
            ("d", "supports", "B"),
        ]);
        let found = sigs(&s, "A", "B");
        assert_eq!(found, BTreeSet::from([sig(&["is_in", "is_in"])]));
    }

    #[test]
    fn direct_pair_has_single_path() {
        let s = store(&[("A", "supplier", "B")]);
        assert_eq!(sigs(&s, "A", "B"), BTreeSet::from([sig(&["supplier"])]));
    }

    #[test]
    fn diamond_keeps_both_length_two_paths() {
        let s = store(&[("A", "r1", "x"), ("x", "r2", "B"), ("A", "r3", "y"), ("y", "r4", "B")]);
        let idx = PathIndex::new(&s, None);
        let paths = idx.paths_between(idx.node("A").unwrap(), idx.node("B").unwrap(), 4);
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.len() == 2));
        assert_eq!(
            idx.signatures_between("A", "B", 4).unwrap(),
            BTreeSet::from([sig(&["r1", "r2"]), sig(&["r3", "r4"])])
        );
    }

    #[test]
    fn unknown_endpoint_is_an_error() {
        let s = store(&[("A", "r", "B")]);
        assert!(PathIndex::new(&s, None).signatures_between("A", "Z", 4).is_err());
    }

    #[test]
    fn signatures_ignore_direction() {
        let s1 = store(&[("A", "makes", "x"), ("x", "made_of", "B")]);
        let s2 = store(&[("B", "made_of", "x"), ("x", "makes", "A")]);
        assert_eq!(sigs(&s1, "A", "B"), sigs(&s2, "B", "A"));
        assert_eq!(sigs(&s1, "A", "B"), sigs(&s1, "B", "A"));
        assert_eq!(sigs(&s1, "A", "B"), BTreeSet::from([sig(&["made_of", "makes"])]));
    }

    #[test]
    fn expansion_cap_blocks_hubs() {
        let mut rels = vec![("A", "in", "hub"), ("hub", "in", "B")];
        let leaves: Vec<String> = (0..5).map(|i| format!("l{i}")).collect();
        for l in &leaves {
            rels.push((l.as_str(), "in", "hub"));
        }
        let s = store(&rels);
        let capped = PathIndex::new(&s, Some(3));
        assert!(capped.signatures_between("A", "B", 4).unwrap().is_empty());
        assert_eq!(sigs(&s, "A", "B").len(), 1);
    }

    #[test]
    fn top_paths_ranking_and_ties() {
        let mk = |sigs: &[&[u32]]| PairSummary {
            signatures: sigs.iter().map(|s| s.to_vec()).collect(),
            segments: BTreeSet::new(),
        };
        let summaries = vec![mk(&[&[0], &[2]]), mk(&[&[0], &[1]]), mk(&[&[0], &[1], &[2]])];
        assert_eq!(select_top_paths(&summaries, 1), vec![vec![0]]);
        // [1] and [2] tie at 2 edges each.
        assert_eq!(select_top_paths(&summaries, 2), vec![vec![0], vec![1]]);
        assert_eq!(select_top_paths(&summaries, 100).len(), 3);
    }

    #[test]
    fn core_relation_rows_and_column_sums() {
        let s = store(&[
            ("A", "supplier", "B"),
            ("A", "strategic_alliance", "B"),
            ("B", "customer", "C"),
            ("A", "supplier", "C"),
        ]);
        let core = build_core(&s, &["A", "B", "C"]).unwrap().graph;
        let m = core_relation_features(&core);
        assert_eq!(m.catalog(), &["customer", "strategic_alliance", "supplier"]);
        assert_eq!(m.row(0), &[1, 2]); // A-B
        assert_eq!(m.row(1), &[2]); // A-C
        assert_eq!(m.row(2), &[0]); // B-C
        assert_eq!(m.column_sums(), vec![1, 1, 2]);
    }

    #[test]
    fn segment_features_for_two_hop_path() {
        let s = store(&[("A", "is_in", "c"), ("c", "is_in", "B"), ("A", "supplier", "B")]);
        let core = build_core(&s, &["A", "B"]).unwrap().graph;
        let m = build_features(&s, &core, FeatureScheme::PathSegment, &FeatureConfig::default()).unwrap();
        assert_eq!(m.catalog(), &["supplier@1", "is_in@2"]);
        assert_eq!(m.row(0), &[0, 1]);

        let only_path = store(&[("A", "is_in", "c"), ("c", "is_in", "B")]);
        let idx = PathIndex::new(&only_path, None);
        let summary = idx.summarize(idx.node("A").unwrap(), idx.node("B").unwrap(), 4);
        assert_eq!(summary.segments.len(), 1);
        assert_eq!(summary.segments.iter().next().unwrap().1, Segment::Two);
    }

    #[test]
    fn segment_summary_is_endpoint_symmetric() {
        let s = store(&[
            ("A", "r1", "x"),
            ("x", "r2", "y"),
            ("y", "r3", "B"),
            ("A", "r4", "z"),
            ("z", "r5", "w"),
            ("w", "r6", "v"),
            ("v", "r7", "B"),
        ]);
        let idx = PathIndex::new(&s, None);
        let (a, b) = (idx.node("A").unwrap(), idx.node("B").unwrap());
        assert_eq!(idx.summarize(a, b, 4), idx.summarize(b, a, 4));
        let cells: Vec<(String, Segment)> = idx
            .summarize(a, b, 4)
            .segments
            .iter()
            .map(|&(r, s)| (idx.rel_name(r).to_string(), s))
            .collect();
        assert!(cells.contains(&("r1".into(), Segment::ThreeOuter)));
        assert!(cells.contains(&("r3".into(), Segment::ThreeOuter)));
        assert!(cells.contains(&("r2".into(), Segment::ThreeMiddle)));
        assert!(cells.contains(&("r4".into(), Segment::FourOuter)));
        assert!(cells.contains(&("r6".into(), Segment::FourInner)));
    }

    #[test]
    fn matrix_file_round_trip() {
        let m = FeatureMatrix::new(
            FeatureScheme::PathSegment,
            vec!["a@1".into(), "b@3:2".into()],
            vec![vec![1, 0], vec![], vec![1]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        m.save(&p).unwrap();
        assert_eq!(FeatureMatrix::load(&p).unwrap(), m);
        assert_eq!(parse_segment_descriptor("b@3:2").unwrap(), ("b".into(), Segment::ThreeMiddle));
    }
}
