//! Security graph model: danger points, travel times, attack success
//! probabilities, and the O-to-D path machinery every solver builds on.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a danger point as it appears in instance files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense index of a node inside a [`SecurityGraph`]. Indices follow ascending
/// [`NodeId`] order, so comparing index sequences is lexicographic comparison
/// of node sequences.
pub type NodeIdx = usize;

/// Default cap on the number of enumerated O-to-D paths.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

const TIE_EPS: f64 = 1e-12;

/// Time needed to detect a successful attack and relaunch from the origin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RehandlingTime(f64);

impl RehandlingTime {
    pub fn new(t_a: f64) -> Result<Self> {
        if t_a.is_finite() && t_a >= 0.0 {
            Ok(Self(t_a))
        } else {
            Err(Error::InvalidParameter(format!(
                "rehandling time must be a finite nonnegative number, got {t_a}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// One directed edge as written in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// On-disk instance format (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInstance {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub nodes: Vec<NodeId>,
    pub origin: NodeId,
    pub destination: NodeId,
    pub edges: Vec<EdgeSpec>,
    pub attack_prob: BTreeMap<NodeId, f64>,
    #[serde(default)]
    pub rehandling_time: f64,
}

impl GraphInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn rehandling(&self) -> Result<RehandlingTime> {
        RehandlingTime::new(self.rehandling_time)
    }
}

/// A single invariant violation found while validating an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateNode(NodeId),
    UnknownNode(NodeId),
    OriginEqualsDestination,
    SelfLoop(NodeId),
    DuplicateEdge(NodeId, NodeId),
    NonPositiveTime { from: NodeId, to: NodeId, time: f64 },
    ProbabilityOutOfRange(NodeId, f64),
    MissingProbability(NodeId),
    RiskyOrigin(f64),
    RiskyDestination(f64),
    Disconnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "node {n} listed more than once"),
            Violation::UnknownNode(n) => write!(f, "node {n} is referenced but not declared"),
            Violation::OriginEqualsDestination => write!(f, "origin and destination coincide"),
            Violation::SelfLoop(n) => write!(f, "self loop on node {n}"),
            Violation::DuplicateEdge(a, b) => write!(f, "edge ({a},{b}) declared twice"),
            Violation::NonPositiveTime { from, to, time } => {
                write!(f, "travel time on ({from},{to}) must be positive, got {time}")
            }
            Violation::ProbabilityOutOfRange(n, p) => {
                write!(f, "attack probability of node {n} must lie in [0,1], got {p}")
            }
            Violation::MissingProbability(n) => write!(f, "node {n} has no attack probability"),
            Violation::RiskyOrigin(p) => write!(f, "origin must be risk-free (p = {p})"),
            Violation::RiskyDestination(p) => write!(f, "destination must be risk-free (p = {p})"),
            Violation::Disconnected => write!(f, "no directed path from origin to destination"),
        }
    }
}

/// A simple O-to-D path together with its prefix-time function.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    nodes: Vec<NodeIdx>,
    prefix: Vec<f64>,
}

impl Path {
    /// Node sequence, origin first.
    pub fn nodes(&self) -> &[NodeIdx] {
        &self.nodes
    }

    /// Cumulative travel time from the origin to each node of the path.
    pub fn prefix_times(&self) -> &[f64] {
        &self.prefix
    }

    /// Total travel time, f^h(D).
    pub fn length(&self) -> f64 {
        *self.prefix.last().expect("paths are non-empty")
    }

    pub fn contains(&self, n: NodeIdx) -> bool {
        self.nodes.contains(&n)
    }

    /// Travel time from the origin to `n` along this path, if `n` is on it.
    pub fn time_to(&self, n: NodeIdx) -> Option<f64> {
        self.nodes.iter().position(|&m| m == n).map(|i| self.prefix[i])
    }

    /// Nodes strictly between origin and destination.
    pub fn interior(&self) -> &[NodeIdx] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// Validated security graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SecurityGraph {
    ids: Vec<NodeId>,
    origin: NodeIdx,
    destination: NodeIdx,
    /// Outgoing neighbours with travel times, sorted by neighbour index.
    out: Vec<Vec<(NodeIdx, f64)>>,
    attack_prob: Vec<f64>,
    edge_count: usize,
}

impl SecurityGraph {
    /// Validates an instance and builds the graph. All violations are
    /// reported together.
    pub fn from_instance(inst: &GraphInstance) -> Result<Self> {
        let mut violations = Vec::new();

        let mut ids = inst.nodes.clone();
        ids.sort();
        for w in ids.windows(2) {
            if w[0] == w[1] && !violations.contains(&Violation::DuplicateNode(w[0])) {
                violations.push(Violation::DuplicateNode(w[0]));
            }
        }
        ids.dedup();
        let index: BTreeMap<NodeId, NodeIdx> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let lookup = |id: NodeId, violations: &mut Vec<Violation>| -> Option<NodeIdx> {
            let found = index.get(&id).copied();
            if found.is_none() && !violations.contains(&Violation::UnknownNode(id)) {
                violations.push(Violation::UnknownNode(id));
            }
            found
        };

        let origin = lookup(inst.origin, &mut violations);
        let destination = lookup(inst.destination, &mut violations);
        if inst.origin == inst.destination {
            violations.push(Violation::OriginEqualsDestination);
        }

        let mut out: Vec<Vec<(NodeIdx, f64)>> = vec![Vec::new(); ids.len()];
        for e in &inst.edges {
            let (Some(a), Some(b)) = (lookup(e.from, &mut violations), lookup(e.to, &mut violations))
            else {
                continue;
            };
            if a == b {
                violations.push(Violation::SelfLoop(e.from));
                continue;
            }
            if !(e.time.is_finite() && e.time > 0.0) {
                violations.push(Violation::NonPositiveTime { from: e.from, to: e.to, time: e.time });
            }
            if out[a].iter().any(|&(k, _)| k == b) {
                violations.push(Violation::DuplicateEdge(e.from, e.to));
                continue;
            }
            out[a].push((b, e.time));
        }
        for list in &mut out {
            list.sort_by_key(|&(k, _)| k);
        }

        let mut attack_prob = vec![0.0; ids.len()];
        for (&id, &p) in &inst.attack_prob {
            if let Some(i) = lookup(id, &mut violations) {
                if !(0.0..=1.0).contains(&p) {
                    violations.push(Violation::ProbabilityOutOfRange(id, p));
                }
                attack_prob[i] = p;
            }
        }
        for (i, &id) in ids.iter().enumerate() {
            if Some(i) != origin && Some(i) != destination && !inst.attack_prob.contains_key(&id) {
                violations.push(Violation::MissingProbability(id));
            }
        }
        if let Some(o) = origin {
            if attack_prob[o] != 0.0 {
                violations.push(Violation::RiskyOrigin(attack_prob[o]));
            }
        }
        if let Some(d) = destination {
            if attack_prob[d] != 0.0 {
                violations.push(Violation::RiskyDestination(attack_prob[d]));
            }
        }

        if let (Some(o), Some(d)) = (origin, destination) {
            if o != d && !reachable(&out, o, d) {
                violations.push(Violation::Disconnected);
            }
        }

        if !violations.is_empty() {
            return Err(Error::InvalidGraph(violations));
        }
        let edge_count = out.iter().map(Vec::len).sum();
        Ok(Self {
            ids,
            origin: origin.unwrap(),
            destination: destination.unwrap(),
            out,
            attack_prob,
            edge_count,
        })
    }

    /// Phase-connected graph: consecutive phases are joined by complete
    /// bipartite edge sets. The first and last phase must be singletons
    /// (origin and destination). Node ids are assigned 1.. in phase order.
    pub fn phase_connected(
        phase_sizes: &[usize],
        time: impl Fn(NodeId, NodeId) -> f64,
        prob: impl Fn(NodeId) -> f64,
    ) -> Result<Self> {
        if phase_sizes.len() < 2 || phase_sizes[0] != 1 || *phase_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidParameter(
                "phase-connected graphs need singleton first and last phases".into(),
            ));
        }
        let mut phases: Vec<Vec<NodeId>> = Vec::new();
        let mut next = 1u32;
        for &size in phase_sizes {
            phases.push((0..size).map(|k| NodeId(next + k as u32)).collect());
            next += size as u32;
        }
        let nodes: Vec<NodeId> = phases.iter().flatten().copied().collect();
        let origin = phases[0][0];
        let destination = phases.last().unwrap()[0];
        let mut edges = Vec::new();
        for w in phases.windows(2) {
            for &a in &w[0] {
                for &b in &w[1] {
                    edges.push(EdgeSpec { from: a, to: b, time: time(a, b), label: None });
                }
            }
        }
        let attack_prob = nodes
            .iter()
            .map(|&n| (n, if n == origin || n == destination { 0.0 } else { prob(n) }))
            .collect();
        Self::from_instance(&GraphInstance {
            notes: Vec::new(),
            nodes,
            origin,
            destination,
            edges,
            attack_prob,
            rehandling_time: 0.0,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn origin(&self) -> NodeIdx {
        self.origin
    }

    pub fn destination(&self) -> NodeIdx {
        self.destination
    }

    pub fn id(&self, n: NodeIdx) -> NodeId {
        self.ids[n]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: NodeId) -> Option<NodeIdx> {
        self.ids.binary_search(&id).ok()
    }

    pub fn attack_prob(&self, n: NodeIdx) -> f64 {
        self.attack_prob[n]
    }

    /// Outgoing neighbours of `n` with travel times, ascending by node.
    pub fn neighbors(&self, n: NodeIdx) -> &[(NodeIdx, f64)] {
        &self.out[n]
    }

    pub fn travel_time(&self, from: NodeIdx, to: NodeIdx) -> Option<f64> {
        self.out[from].iter().find(|&&(k, _)| k == to).map(|&(_, t)| t)
    }

    /// Interior nodes whose attacks always succeed (p = 1). Legal, but any
    /// path through them has infinite expected delivery time when attacked.
    pub fn certain_interdiction_nodes(&self) -> Vec<NodeId> {
        (0..self.node_count())
            .filter(|&n| self.attack_prob[n] >= 1.0)
            .map(|n| self.ids[n])
            .collect()
    }

    /// Interior nodes with a nonzero attack success probability, i.e. the
    /// nodes where interdiction mass can have any effect.
    pub fn risky_nodes(&self) -> Vec<NodeIdx> {
        (0..self.node_count()).filter(|&n| self.attack_prob[n] > 0.0).collect()
    }

    /// Builds a [`Path`] from a node sequence, checking adjacency and
    /// simplicity.
    pub fn path(&self, nodes: Vec<NodeIdx>) -> Result<Path> {
        if nodes.first() != Some(&self.origin) || nodes.last() != Some(&self.destination) {
            return Err(Error::InvalidPath("path must run from origin to destination".into()));
        }
        let mut seen = vec![false; self.node_count()];
        let mut prefix = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        for (i, &n) in nodes.iter().enumerate() {
            if n >= self.node_count() {
                return Err(Error::InvalidPath(format!("unknown node index {n}")));
            }
            if std::mem::replace(&mut seen[n], true) {
                return Err(Error::InvalidPath(format!("node {} repeats", self.ids[n])));
            }
            if i > 0 {
                let t = self.travel_time(nodes[i - 1], n).ok_or_else(|| {
                    Error::InvalidPath(format!("no edge ({},{})", self.ids[nodes[i - 1]], self.ids[n]))
                })?;
                acc += t;
            }
            prefix.push(acc);
        }
        Ok(Path { nodes, prefix })
    }

    /// Parses a path from node ids. The origin and destination may be
    /// omitted, so `3,5,8` and `1,3,5,8,10` name the same path.
    pub fn path_from_ids(&self, ids: &[NodeId]) -> Result<Path> {
        let mut nodes = Vec::with_capacity(ids.len() + 2);
        for &id in ids {
            nodes.push(
                self.index_of(id)
                    .ok_or_else(|| Error::InvalidPath(format!("unknown node {id}")))?,
            );
        }
        if nodes.first() != Some(&self.origin) {
            nodes.insert(0, self.origin);
        }
        if nodes.last() != Some(&self.destination) {
            nodes.push(self.destination);
        }
        self.path(nodes)
    }

    /// Short label listing the interior nodes, e.g. `(3,5,8)`.
    pub fn path_label(&self, path: &Path) -> String {
        let inner: Vec<String> = path.interior().iter().map(|&n| self.ids[n].to_string()).collect();
        format!("({})", inner.join(","))
    }

    /// Every simple O-to-D path in lexicographic node order.
    pub fn enumerate_paths(&self) -> Result<Vec<Path>> {
        self.enumerate_paths_capped(DEFAULT_PATH_CAP)
    }

    pub fn enumerate_paths_capped(&self, cap: usize) -> Result<Vec<Path>> {
        let mut paths = Vec::new();
        let mut on_path = vec![false; self.node_count()];
        let mut stack = vec![self.origin];
        let mut prefix = vec![0.0];
        on_path[self.origin] = true;
        self.dfs(&mut stack, &mut prefix, &mut on_path, &mut paths, cap)?;
        Ok(paths)
    }

    fn dfs(
        &self,
        stack: &mut Vec<NodeIdx>,
        prefix: &mut Vec<f64>,
        on_path: &mut [bool],
        paths: &mut Vec<Path>,
        cap: usize,
    ) -> Result<()> {
        let u = *stack.last().unwrap();
        if u == self.destination {
            if paths.len() >= cap {
                return Err(Error::PathCapExceeded(cap));
            }
            paths.push(Path { nodes: stack.clone(), prefix: prefix.clone() });
            return Ok(());
        }
        let base = *prefix.last().unwrap();
        for &(v, t) in &self.out[u] {
            if on_path[v] {
                continue;
            }
            on_path[v] = true;
            stack.push(v);
            prefix.push(base + t);
            self.dfs(stack, prefix, on_path, paths, cap)?;
            prefix.pop();
            stack.pop();
            on_path[v] = false;
        }
        Ok(())
    }

    /// Number of deterministic stationary policies: the product of
    /// out-degrees over every node except the destination. Saturates.
    pub fn count_policies(&self) -> u128 {
        (0..self.node_count())
            .filter(|&n| n != self.destination)
            .fold(1u128, |acc, n| acc.saturating_mul(self.out[n].len() as u128))
    }

    /// Shortest travel time from every node to the destination, skipping
    /// `banned` if given. Unreachable nodes get +inf.
    pub fn distances_to_destination(&self, banned: Option<NodeIdx>) -> Vec<f64> {
        let n = self.node_count();
        let mut rev: Vec<Vec<(NodeIdx, f64)>> = vec![Vec::new(); n];
        for (a, list) in self.out.iter().enumerate() {
            for &(b, t) in list {
                rev[b].push((a, t));
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        if Some(self.destination) != banned {
            dist[self.destination] = 0.0;
            heap.push(MinItem(0.0, self.destination));
        }
        while let Some(MinItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, t) in &rev[u] {
                if Some(v) == banned {
                    continue;
                }
                let nd = d + t;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(MinItem(nd, v));
                }
            }
        }
        dist
    }

    /// A shortest O-to-D path; among equally short paths the
    /// lexicographically smallest node sequence wins.
    pub fn shortest_path(&self) -> Path {
        self.shortest_avoiding(None).expect("validated graphs connect origin and destination")
    }

    /// Shortest O-to-D path that does not visit `n`, or `None` when every
    /// path goes through `n`.
    pub fn shortest_path_excluding(&self, n: NodeIdx) -> Option<Path> {
        if n == self.origin || n == self.destination {
            return None;
        }
        self.shortest_avoiding(Some(n))
    }

    fn shortest_avoiding(&self, banned: Option<NodeIdx>) -> Option<Path> {
        let dist = self.distances_to_destination(banned);
        if !dist[self.origin].is_finite() {
            return None;
        }
        // Walk tight edges, taking the smallest neighbour each time.
        let mut nodes = vec![self.origin];
        let mut u = self.origin;
        while u != self.destination {
            let next = self.out[u]
                .iter()
                .filter(|&&(v, _)| Some(v) != banned && dist[v].is_finite())
                .find(|&&(v, t)| {
                    let via = t + dist[v];
                    via - dist[u] <= TIE_EPS * dist[u].abs().max(1.0)
                })
                .map(|&(v, _)| v)?;
            nodes.push(next);
            u = next;
        }
        Some(self.path(nodes).expect("tight edges form a simple path"))
    }
}

fn reachable(out: &[Vec<(NodeIdx, f64)>], from: NodeIdx, to: NodeIdx) -> bool {
    let mut seen = vec![false; out.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        for &(v, _) in &out[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

#[derive(PartialEq)]
struct MinItem(f64, NodeIdx);

impl Eq for MinItem {}

impl Ord for MinItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for MinItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic argmin over `values`, treating entries within a relative
/// `1e-12` of the minimum as tied (first index wins).
pub(crate) fn argmin_with_ties(values: &[f64]) -> Option<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        return None;
    }
    if min == f64::INFINITY {
        return Some(0);
    }
    let tol = TIE_EPS * min.abs().max(1.0);
    values.iter().position(|&v| v <= min + tol)
}
