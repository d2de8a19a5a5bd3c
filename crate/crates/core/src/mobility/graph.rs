use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Location in the city graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Undirected street segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub meters: u32,
    pub minutes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {0}-{1} must have positive length and travel time")]
    NonPositiveEdge(NodeId, NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no path from {0} to {1}")]
    Unreachable(NodeId, NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Meters,
    Minutes,
}

/// Node sequence with its totals. A route from a node to itself has a single
/// node and no edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub meters: u64,
    pub minutes: u64,
    /// Per-edge `(meters, minutes)`, aligned with consecutive node pairs.
    pub legs: Vec<(u32, u32)>,
}

impl Route {
    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    pub fn origin(&self) -> &NodeId {
        &self.nodes[0]
    }

    pub fn destination(&self) -> &NodeId {
        self.nodes.last().expect("route has at least one node")
    }

    pub fn reversed(&self) -> Route {
        Route {
            nodes: self.nodes.iter().rev().cloned().collect(),
            meters: self.meters,
            minutes: self.minutes,
            legs: self.legs.iter().rev().copied().collect(),
        }
    }
}

/// Undirected street graph. May be disconnected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct CityGraph {
    nodes: BTreeSet<NodeId>,
    edges: Vec<Edge>,
    // neighbour -> best (meters, minutes) per metric over parallel edges
    adjacency: BTreeMap<NodeId, BTreeMap<NodeId, [(u32, u32); 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
}

impl TryFrom<GraphRepr> for CityGraph {
    type Error = GraphError;

    fn try_from(repr: GraphRepr) -> Result<Self, GraphError> {
        CityGraph::new(repr.nodes, repr.edges)
    }
}

impl From<CityGraph> for GraphRepr {
    fn from(g: CityGraph) -> Self {
        GraphRepr {
            nodes: g.nodes.into_iter().collect(),
            edges: g.edges,
        }
    }
}

fn metric_index(metric: Metric) -> usize {
    match metric {
        Metric::Meters => 0,
        Metric::Minutes => 1,
    }
}

fn weight(leg: (u32, u32), metric: Metric) -> u64 {
    match metric {
        Metric::Meters => leg.0 as u64,
        Metric::Minutes => leg.1 as u64,
    }
}

impl CityGraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for n in nodes {
            if !set.insert(n.clone()) {
                return Err(GraphError::DuplicateNode(n));
            }
        }
        let mut adjacency: BTreeMap<NodeId, BTreeMap<NodeId, [(u32, u32); 2]>> =
            set.iter().map(|n| (n.clone(), BTreeMap::new())).collect();
        for e in &edges {
            for n in [&e.from, &e.to] {
                if !set.contains(n) {
                    return Err(GraphError::UnknownNode(n.clone()));
                }
            }
            if e.meters == 0 || e.minutes == 0 {
                return Err(GraphError::NonPositiveEdge(e.from.clone(), e.to.clone()));
            }
            let leg = (e.meters, e.minutes);
            for (a, b) in [(&e.from, &e.to), (&e.to, &e.from)] {
                let slot = adjacency.get_mut(a).expect("known node").entry(b.clone()).or_insert([leg, leg]);
                if (leg.0, leg.1) < slot[0] {
                    slot[0] = leg;
                }
                if (leg.1, leg.0) < (slot[1].1, slot[1].0) {
                    slot[1] = leg;
                }
            }
        }
        Ok(CityGraph {
            nodes: set,
            edges,
            adjacency,
        })
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Best `(meters, minutes)` of a direct edge between `a` and `b` under
    /// `metric`, if adjacent.
    pub fn leg(&self, a: &NodeId, b: &NodeId, metric: Metric) -> Option<(u32, u32)> {
        self.adjacency.get(a)?.get(b).map(|l| l[metric_index(metric)])
    }

    pub fn neighbours(&self, node: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.adjacency.get(node).into_iter().flat_map(|m| m.keys())
    }

    /// Minimal route under `metric`. Among equal-cost routes the
    /// lexicographically smallest node sequence wins.
    pub fn shortest_path(&self, from: &NodeId, to: &NodeId, metric: Metric) -> Result<Route, RouteError> {
        for n in [from, to] {
            if !self.contains(n) {
                return Err(RouteError::UnknownNode(n.clone()));
            }
        }
        // Dijkstra keyed on (cost, node sequence). Prefixes of a
        // (cost, lexicographic)-optimal path are themselves optimal, so
        // settling each node once keeps the tie-break exact.
        let mut best: BTreeMap<&NodeId, (u64, Vec<&NodeId>)> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, vec![from])));
        let mut settled: BTreeSet<&NodeId> = BTreeSet::new();
        while let Some(Reverse((cost, path))) = heap.pop() {
            let node = *path.last().expect("non-empty");
            if !settled.insert(node) {
                continue;
            }
            if node == to {
                return Ok(self.materialize(&path, metric));
            }
            for (next, legs) in &self.adjacency[node] {
                if settled.contains(next) {
                    continue;
                }
                let c = cost + weight(legs[metric_index(metric)], metric);
                let mut p = path.clone();
                p.push(next);
                let better = match best.get(next) {
                    None => true,
                    Some((bc, bp)) => (c, &p) < (*bc, bp),
                };
                if better {
                    best.insert(next, (c, p.clone()));
                    heap.push(Reverse((c, p)));
                }
            }
        }
        Err(RouteError::Unreachable(from.clone(), to.clone()))
    }

    fn materialize(&self, path: &[&NodeId], metric: Metric) -> Route {
        let legs: Vec<(u32, u32)> = path
            .windows(2)
            .map(|w| self.leg(w[0], w[1], metric).expect("adjacent"))
            .collect();
        Route {
            nodes: path.iter().map(|n| (*n).clone()).collect(),
            meters: legs.iter().map(|l| l.0 as u64).sum(),
            minutes: legs.iter().map(|l| l.1 as u64).sum(),
            legs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(a: &str, b: &str, m: u32, t: u32) -> Edge {
        Edge { from: a.into(), to: b.into(), meters: m, minutes: t }
    }

    fn grid() -> CityGraph {
        // 2x2 grid a-b / c-d plus a long diagonal shortcut a-d
        CityGraph::new(
            ["a", "b", "c", "d"].map(NodeId::from),
            vec![e("a", "b", 100, 2), e("b", "d", 100, 2), e("a", "c", 100, 1), e("c", "d", 100, 1), e("a", "d", 150, 5)],
        )
        .unwrap()
    }

    #[test]
    fn identity_route_is_empty() {
        let g = grid();
        let r = g.shortest_path(&"a".into(), &"a".into(), Metric::Meters).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.meters, 0);
        assert_eq!(r.nodes, vec![NodeId::from("a")]);
    }

    #[test]
    fn shortcut_wins_on_meters_grid_on_minutes() {
        let g = grid();
        let r = g.shortest_path(&"a".into(), &"d".into(), Metric::Meters).unwrap();
        assert_eq!(r.nodes, vec![NodeId::from("a"), NodeId::from("d")]);
        assert_eq!(r.meters, 150);
        let r = g.shortest_path(&"a".into(), &"d".into(), Metric::Minutes).unwrap();
        assert_eq!(r.nodes, ["a", "c", "d"].map(NodeId::from).to_vec());
        assert_eq!(r.minutes, 2);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let g = CityGraph::new(
            ["a", "b", "c", "d"].map(NodeId::from),
            vec![e("a", "c", 1, 1), e("c", "d", 1, 1), e("a", "b", 1, 1), e("b", "d", 1, 1)],
        )
        .unwrap();
        let r = g.shortest_path(&"a".into(), &"d".into(), Metric::Meters).unwrap();
        assert_eq!(r.nodes, ["a", "b", "d"].map(NodeId::from).to_vec());
    }

    #[test]
    fn disconnected_is_unreachable() {
        let g = CityGraph::new(["a", "b"].map(NodeId::from), vec![]).unwrap();
        assert!(matches!(
            g.shortest_path(&"a".into(), &"b".into(), Metric::Meters),
            Err(RouteError::Unreachable(..))
        ));
        assert!(matches!(
            g.shortest_path(&"a".into(), &"z".into(), Metric::Meters),
            Err(RouteError::UnknownNode(_))
        ));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(CityGraph::new(["a"].map(NodeId::from), vec![e("a", "b", 1, 1)]).is_err());
        assert!(CityGraph::new(["a", "b"].map(NodeId::from), vec![e("a", "b", 0, 1)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = grid();
        let s = serde_json::to_string(&g).unwrap();
        let back: CityGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
