//! The undirected core network over the prediction universe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::HinStore;
use crate::tsv;

/// Undirected simple graph with one learnable weight per edge.
///
/// Nodes are sorted by id; edges are `(i, j)` index pairs with `i < j`,
/// sorted lexicographically. This canonical order is the row order of every
/// feature matrix built on the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    edge_relations: Vec<BTreeSet<String>>,
    weights: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreBuild {
    pub graph: CoreGraph,
    /// Universe members with no edge to another member.
    pub isolated: Vec<String>,
}

impl CoreGraph {
    /// Builds the graph from `(a, b, relation types)` triples. Pairs are
    /// unordered; repeated pairs merge their relation sets; self-loops are
    /// ignored.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S, BTreeSet<String>)>,
        S: Into<String>,
    {
        let mut by_pair: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for (a, b, rels) in pairs {
            let (a, b) = (a.into(), b.into());
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            by_pair.entry(key).or_default().extend(rels);
        }
        by_pair.retain(|_, rels| !rels.is_empty());

        let nodes: Vec<String> = by_pair
            .keys()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut edges = Vec::with_capacity(by_pair.len());
        let mut edge_relations = Vec::with_capacity(by_pair.len());
        for ((a, b), rels) in by_pair {
            edges.push((index[&a], index[&b]));
            edge_relations.push(rels);
        }
        // Node order and string order agree, so the BTreeMap order is already
        // the canonical (i, j) order.
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let weights = vec![1.0; edges.len()];
        CoreGraph {
            nodes,
            index,
            edges,
            edge_relations,
            weights,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_relations(&self, edge: usize) -> &BTreeSet<String> {
        &self.edge_relations[edge]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sets edge weights, clamped into `[0, 1]`.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                got: weights.len(),
            });
        }
        self.weights = weights.iter().map(|w| w.clamp(0.0, 1.0)).collect();
        Ok(())
    }

    /// `(neighbor, edge index)` pairs of a node, sorted by neighbor.
    pub fn adjacency(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, id: &str) -> Result<BTreeSet<&str>> {
        let i = self
            .node_index(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        Ok(self.adjacency[i]
            .iter()
            .map(|&(j, _)| self.nodes[j].as_str())
            .collect())
    }

    /// Sorted edge list: `src <TAB> dst <TAB> rel1,rel2 <TAB> weight`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::create(path)?;
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "src\tdst\trelations\tweight")?;
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let rels: Vec<&str> = self.edge_relations[e].iter().map(String::as_str).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                self.nodes[i],
                self.nodes[j],
                rels.join(","),
                self.weights[e]
            )?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut pairs = Vec::new();
        let mut weights = Vec::new();
        for (n, line) in tsv::read_lines(path)?.into_iter().skip(1) {
            if tsv::is_skippable(&line) {
                continue;
            }
            let f = tsv::fields(&line, 4).map_err(|m| tsv::parse_error(&name, n, m))?;
            let rels: BTreeSet<String> = f[2]
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            let w: f64 = f[3]
                .parse()
                .map_err(|_| tsv::parse_error(&name, n, format!("bad weight {:?}", f[3])))?;
            pairs.push((f[0].to_string(), f[1].to_string(), rels));
            weights.push(w);
        }
        let graph = CoreGraph::from_pairs(pairs);
        let mut graph = graph;
        if graph.edge_count() == weights.len() {
            graph.set_weights(&weights)?;
        }
        Ok(graph)
    }
}

/// Connects every pair of universe members that share at least one direct
/// relation in the store (either direction).
pub fn build_core<S: AsRef<str>>(store: &HinStore, universe: &[S]) -> Result<CoreBuild> {
    if universe.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let members: BTreeSet<&str> = universe.iter().map(AsRef::as_ref).collect();
    if let Some(missing) = members.iter().find(|m| !store.contains(m)) {
        return Err(Error::UnknownNode(missing.to_string()));
    }
    let pairs = store.relations().iter().filter_map(|r| {
        (members.contains(r.src.as_str()) && members.contains(r.dst.as_str()) && r.src != r.dst)
            .then(|| (r.src.clone(), r.dst.clone(), BTreeSet::from([r.rel_type.clone()])))
    });
    let graph = CoreGraph::from_pairs(pairs);
    let isolated = members
        .iter()
        .filter(|m| graph.node_index(m).is_none())
        .map(|m| m.to_string())
        .collect();
    Ok(CoreBuild { graph, isolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Relation;

    fn rels(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn both_directions_merge_into_one_edge() {
        let mut s = HinStore::new();
        s.add_relation(Relation::new("a", "supplier", "b"));
        s.add_relation(Relation::new("b", "customer", "a"));
        let built = build_core(&s, &["a", "b"]).unwrap();
        assert_eq!(built.graph.edge_count(), 1);
        assert_eq!(built.graph.edge_relations(0), &rels(&["customer", "supplier"]));
        assert_eq!(built.graph.weights(), &[1.0]);
        assert!(built.isolated.is_empty());
    }

    #[test]
    fn outside_relations_leave_universe_isolated() {
        let mut s = HinStore::new();
        s.add_relation(Relation::new("a", "supplier", "x"));
        s.entity_mut("b");
        s.entity_mut("c");
        let built = build_core(&s, &["a", "b", "c"]).unwrap();
        assert_eq!(built.graph.node_count(), 0);
        assert_eq!(built.isolated, vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_universe_is_an_error() {
        let s = HinStore::new();
        let empty: [&str; 0] = [];
        assert!(matches!(build_core(&s, &empty), Err(Error::EmptyUniverse)));
    }

    #[test]
    fn neighbors_path_and_star() {
        let g = CoreGraph::from_pairs([("a", "b", rels(&["r"])), ("b", "c", rels(&["r"]))]);
        assert_eq!(g.neighbors("b").unwrap(), BTreeSet::from(["a", "c"]));
        assert!(g.neighbors("zz").is_err());

        let star = CoreGraph::from_pairs((1..=4).map(|i| ("s".to_string(), format!("l{i}"), rels(&["r"]))));
        assert_eq!(star.neighbors("s").unwrap().len(), 4);
        let degree_sum: usize = (0..star.node_count()).map(|i| star.degree(i)).sum();
        assert_eq!(degree_sum, 2 * star.edge_count());
    }

    #[test]
    fn order_independent_and_round_trips() {
        let fwd = [("c", "a", rels(&["x"])), ("a", "b", rels(&["y"])), ("b", "c", rels(&["z"]))];
        let mut rev = fwd.clone();
        rev.reverse();
        let g1 = CoreGraph::from_pairs(fwd);
        let g2 = CoreGraph::from_pairs(rev);
        assert_eq!(g1, g2);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("core.tsv");
        g1.save(&p).unwrap();
        assert_eq!(CoreGraph::load(&p).unwrap(), g1);
    }
}
