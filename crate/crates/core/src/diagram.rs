//! Folded diagrams of the Rényi operator-entanglement network `Z_α(m, n)` and
//! the boundary rewrite engine deciding complete reducibility.
//!
//! # Geometry
//!
//! `Z_α(m, n)` is the light-cone-trimmed diamond of `m × n` base cells: cell
//! `(i, j)` (with `0 ≤ i < m`, `0 ≤ j < n`) sits at leg offset
//! `N·(i − j + n − 1)` and cells are applied in order of `i + j`. The output
//! right half of cell `(i−1, j)` feeds the input left half of cell `(i, j)`;
//! the output left half of `(i, j−1)` feeds its input right half. Uncovered
//! legs on the left side of the diamond (input-left of `i = 0`, output-left of
//! `j = n−1`) end in Square permutation states, those on the right side
//! (input-right of `j = 0`, output-right of `i = m−1`) in Circle states.
//! Spatial position `x = m − n` and time `t = m + n` (in composite qudits and
//! brickwork layers).
//!
//! # Rewrites
//!
//! Ports are numbered `0 = in-left`, `1 = in-right`, `2 = out-left`,
//! `3 = out-right`.
//!
//! * **Unitarity** – both outputs (or both inputs) of a node end in equal
//!   labels: the node is removed and the label moves to the opposite pair.
//! * **Dual unitarity** – both left (or both right) ports end in equal
//!   labels: the node is removed and the label moves to the opposite side.
//! * **SWAP passthrough** – a SWAP node is a pair of crossing wires; it is
//!   removed by joining in-left with out-right and in-right with out-left.
//! * **Overlap** – a wire between two terminals is removed; unequal labels
//!   contribute one unit to the overlap count `𝒩`.
//!
//! None of the rules depends on the replica index `α`: when a diagram is fully
//! reduced, `Z_α = d^{−(α−1)·𝒩}` for every `α`.

use std::collections::HashSet;

use num_rational::Rational64;
use num_traits::Signed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::PermutationLabel;
use crate::lattice::BaseGateSpec;

/// Default cap on the number of nodes of a generated diagram.
pub const DEFAULT_MAX_NODES: usize = 10_000;

/// Port slots of a folded gate node.
pub const IN_LEFT: usize = 0;
pub const IN_RIGHT: usize = 1;
pub const OUT_LEFT: usize = 2;
pub const OUT_RIGHT: usize = 3;

/// Location of a gate in the diamond: cell indices and placement index
/// within the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GatePosition {
    pub cell_i: usize,
    pub cell_j: usize,
    pub element: usize,
}

impl GatePosition {
    /// Horizontal offset `i − j` of the cell, in composite qudits, relative
    /// to the central column. The entanglement cut of a square `(n, n)`
    /// diamond runs through column 0.
    pub fn column(&self) -> i64 {
        self.cell_i as i64 - self.cell_j as i64
    }
}

/// Whether a node is a SWAP or an arbitrary dual-unitary gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeTag {
    Swap,
    Generic,
}

/// A folded gate with four ports, each attached to a wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub tag: NodeTag,
    pub position: Option<GatePosition>,
    pub ports: [usize; 4],
}

/// One end of a wire: a node port or a permutation-state terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireEnd {
    Port { node: usize, slot: usize },
    Terminal { label: PermutationLabel },
}

impl WireEnd {
    fn label(&self) -> Option<PermutationLabel> {
        match *self {
            WireEnd::Terminal { label } => Some(label),
            WireEnd::Port { .. } => None,
        }
    }
}

/// A wire of the folded network (one `d`-leg).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub ends: [WireEnd; 2],
}

/// Port graph of folded gates with permutation-state terminals.
///
/// Node and wire identifiers are stable indices; removed entries stay as
/// `None` so that rewrite traces can refer to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedDiagram {
    nodes: Vec<Option<Node>>,
    wires: Vec<Option<Wire>>,
}

/// A single rewrite step, replayable on a fresh copy of the diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rewrite {
    /// Removal of a wire joining two terminals.
    Overlap { wire: usize, unequal: bool },
    /// Unitarity on the outputs (`outputs = true`) or the inputs.
    Unitarity { node: usize, outputs: bool },
    /// Dual unitarity on the left (`left = true`) or right ports.
    DualUnitarity { node: usize, left: bool },
    /// Removal of a SWAP node.
    SwapPassthrough { node: usize },
}

/// Outcome of the rewrite engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionStatus {
    FullyReduced,
    Stuck,
}

/// Result of [`reduce_boundary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    pub status: ReductionStatus,
    /// Number of unequal-label overlaps absorbed, in `d`-leg units.
    pub overlaps: usize,
    /// What is left after the fixpoint (empty when fully reduced).
    pub residual: FoldedDiagram,
    /// Applied rewrites in order.
    pub trace: Vec<Rewrite>,
}

impl ReductionResult {
    pub fn is_fully_reduced(&self) -> bool {
        self.status == ReductionStatus::FullyReduced
    }
}

/// Order in which the engine visits nodes in every sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    /// Creation order, i.e. from the bottom boundary of the diamond upwards.
    Boundary,
    /// A fresh pseudo-random permutation per sweep.
    Randomized(u64),
}

impl FoldedDiagram {
    /// An empty diagram.
    pub fn empty() -> Self {
        FoldedDiagram {
            nodes: Vec::new(),
            wires: Vec::new(),
        }
    }

    /// Builds a small diagram from an explicit wiring. `wiring` lists
    /// `(node_a, slot_a, node_b, slot_b)` connections; every remaining free
    /// port gets the next label from `labels`, in order of node and slot.
    pub fn from_wiring(
        tags: &[NodeTag],
        wiring: &[(usize, usize, usize, usize)],
        labels: &[PermutationLabel],
    ) -> Result<Self> {
        let mut dgm = FoldedDiagram::empty();
        const UNSET: usize = usize::MAX;
        for &tag in tags {
            dgm.nodes.push(Some(Node {
                tag,
                position: None,
                ports: [UNSET; 4],
            }));
        }
        for &(a, sa, b, sb) in wiring {
            if a >= tags.len() || b >= tags.len() || sa > 3 || sb > 3 {
                return Err(Error::InvalidParameter(format!(
                    "bad connection ({a},{sa},{b},{sb})"
                )));
            }
            if dgm.node(a).ports[sa] != UNSET
                || dgm.node(b).ports[sb] != UNSET
                || (a, sa) == (b, sb)
            {
                return Err(Error::InvalidParameter(format!(
                    "port used twice in ({a},{sa},{b},{sb})"
                )));
            }
            let w = dgm.push_wire(
                WireEnd::Port { node: a, slot: sa },
                WireEnd::Port { node: b, slot: sb },
            );
            dgm.node_mut(a).ports[sa] = w;
            dgm.node_mut(b).ports[sb] = w;
        }
        let mut next = labels.iter();
        for id in 0..tags.len() {
            for slot in 0..4 {
                if dgm.node(id).ports[slot] == UNSET {
                    let label = *next.next().ok_or_else(|| {
                        Error::InvalidParameter("not enough labels for the free ports".into())
                    })?;
                    let w = dgm.push_wire(
                        WireEnd::Port { node: id, slot },
                        WireEnd::Terminal { label },
                    );
                    dgm.node_mut(id).ports[slot] = w;
                }
            }
        }
        if next.next().is_some() {
            return Err(Error::InvalidParameter(
                "more labels than free ports".into(),
            ));
        }
        Ok(dgm)
    }

    fn push_wire(&mut self, a: WireEnd, b: WireEnd) -> usize {
        self.wires.push(Some(Wire { ends: [a, b] }));
        self.wires.len() - 1
    }

    fn node(&self, id: usize) -> &Node {
        self.nodes[id].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: usize) -> &mut Node {
        self.nodes[id].as_mut().expect("live node")
    }

    /// Live nodes with their identifiers.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (i, n)))
    }

    /// Live wires with their identifiers.
    pub fn wires(&self) -> impl Iterator<Item = (usize, &Wire)> {
        self.wires
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.as_ref().map(|w| (i, w)))
    }

    /// Node by identifier, if still present.
    pub fn get_node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id).and_then(Option::as_ref)
    }

    /// Wire by identifier, if still present.
    pub fn get_wire(&self, id: usize) -> Option<&Wire> {
        self.wires.get(id).and_then(Option::as_ref)
    }

    pub fn node_count(&self) -> usize {
        self.nodes().count()
    }

    pub fn terminal_count(&self) -> usize {
        self.wires()
            .map(|(_, w)| w.ends.iter().filter(|e| e.label().is_some()).count())
            .sum()
    }

    /// Positions of the remaining generic nodes, sorted.
    pub fn generic_positions(&self) -> Vec<GatePosition> {
        let mut v: Vec<GatePosition> = self
            .nodes()
            .filter(|(_, n)| n.tag == NodeTag::Generic)
            .filter_map(|(_, n)| n.position)
            .collect();
        v.sort();
        v
    }

    /// Same diagram with the given node turned into a SWAP.
    pub fn with_swap_at(&self, node: usize) -> Result<Self> {
        let mut out = self.clone();
        out.nodes
            .get_mut(node)
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::InvalidParameter(format!("no node {node}")))?
            .tag = NodeTag::Swap;
        Ok(out)
    }

    /// The far end of the wire attached to `(node, slot)`.
    pub fn far_end(&self, node: usize, slot: usize) -> WireEnd {
        let w = self.wires[self.node(node).ports[slot]]
            .as_ref()
            .expect("live wire");
        let me = WireEnd::Port { node, slot };
        if w.ends[0] == me {
            w.ends[1]
        } else {
            w.ends[0]
        }
    }

    fn label_at(&self, node: usize, slot: usize) -> Option<PermutationLabel> {
        self.far_end(node, slot).label()
    }

    /// Replaces the node-side end of the wire at `(node, slot)` by a terminal.
    fn terminate(&mut self, node: usize, slot: usize, label: PermutationLabel) {
        let wid = self.node(node).ports[slot];
        let me = WireEnd::Port { node, slot };
        let w = self.wires[wid].as_mut().expect("live wire");
        let k = if w.ends[0] == me { 0 } else { 1 };
        w.ends[k] = WireEnd::Terminal { label };
    }

    /// Removes `(node, s1)` and `(node, s2)` by connecting their far ends.
    fn join(&mut self, node: usize, s1: usize, s2: usize) {
        let e1 = self.far_end(node, s1);
        let e2 = self.far_end(node, s2);
        let (w1, w2) = (self.node(node).ports[s1], self.node(node).ports[s2]);
        self.wires[w1] = None;
        self.wires[w2] = None;
        let w = self.push_wire(e1, e2);
        for e in [e1, e2] {
            if let WireEnd::Port { node: other, slot } = e {
                self.node_mut(other).ports[slot] = w;
            }
        }
    }

    /// Checks the structural invariant: every port of every live node is
    /// attached to a live wire whose end points back at it.
    pub fn validate(&self) -> Result<()> {
        for (id, n) in self.nodes() {
            for slot in 0..4 {
                let w = self.get_wire(n.ports[slot]).ok_or_else(|| {
                    Error::Internal(format!("node {id} slot {slot} has a dead wire"))
                })?;
                if !w.ends.contains(&WireEnd::Port { node: id, slot }) {
                    return Err(Error::Internal(format!(
                        "wire {} does not point back at node {id}",
                        n.ports[slot]
                    )));
                }
            }
        }
        for (wid, w) in self.wires() {
            for e in w.ends {
                if let WireEnd::Port { node, slot } = e {
                    match self.get_node(node) {
                        Some(n) if n.ports[slot] == wid => {}
                        _ => {
                            return Err(Error::Internal(format!(
                                "wire {wid} dangles at node {node}"
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Finds an applicable rewrite at `node` (SWAP passthrough, then
    /// unitarity on outputs, inputs, dual unitarity on left, right ports).
    fn applicable(&self, node: usize) -> Option<Rewrite> {
        let n = self.get_node(node)?;
        if n.tag == NodeTag::Swap {
            return Some(Rewrite::SwapPassthrough { node });
        }
        let l: Vec<Option<PermutationLabel>> = (0..4).map(|s| self.label_at(node, s)).collect();
        let eq = |a: usize, b: usize| l[a].is_some() && l[a] == l[b];
        if eq(OUT_LEFT, OUT_RIGHT) {
            Some(Rewrite::Unitarity {
                node,
                outputs: true,
            })
        } else if eq(IN_LEFT, IN_RIGHT) {
            Some(Rewrite::Unitarity {
                node,
                outputs: false,
            })
        } else if eq(IN_LEFT, OUT_LEFT) {
            Some(Rewrite::DualUnitarity { node, left: true })
        } else if eq(IN_RIGHT, OUT_RIGHT) {
            Some(Rewrite::DualUnitarity { node, left: false })
        } else {
            None
        }
    }

    /// Applies one rewrite after checking that it is legal; returns the
    /// increment of the overlap count.
    pub fn apply(&mut self, rw: Rewrite) -> Result<usize> {
        let illegal = || Error::InvalidParameter(format!("rewrite {rw:?} is not applicable"));
        match rw {
            Rewrite::Overlap { wire, unequal } => {
                let w = self.get_wire(wire).ok_or_else(illegal)?;
                match (w.ends[0].label(), w.ends[1].label()) {
                    (Some(a), Some(b)) if (a != b) == unequal => {
                        self.wires[wire] = None;
                        Ok(usize::from(unequal))
                    }
                    _ => Err(illegal()),
                }
            }
            Rewrite::SwapPassthrough { node } => {
                if self.get_node(node).map(|n| n.tag) != Some(NodeTag::Swap) {
                    return Err(illegal());
                }
                self.join(node, IN_LEFT, OUT_RIGHT);
                self.join(node, IN_RIGHT, OUT_LEFT);
                self.nodes[node] = None;
                Ok(0)
            }
            Rewrite::Unitarity { node, .. } | Rewrite::DualUnitarity { node, .. } => {
                if self.get_node(node).map(|n| n.tag) != Some(NodeTag::Generic) {
                    return Err(illegal());
                }
                let (pair, other) = match rw {
                    Rewrite::Unitarity { outputs: true, .. } => {
                        ([OUT_LEFT, OUT_RIGHT], [IN_LEFT, IN_RIGHT])
                    }
                    Rewrite::Unitarity { outputs: false, .. } => {
                        ([IN_LEFT, IN_RIGHT], [OUT_LEFT, OUT_RIGHT])
                    }
                    Rewrite::DualUnitarity { left: true, .. } => {
                        ([IN_LEFT, OUT_LEFT], [IN_RIGHT, OUT_RIGHT])
                    }
                    _ => ([IN_RIGHT, OUT_RIGHT], [IN_LEFT, OUT_LEFT]),
                };
                let label = match (self.label_at(node, pair[0]), self.label_at(node, pair[1])) {
                    (Some(a), Some(b)) if a == b => a,
                    _ => return Err(illegal()),
                };
                for s in pair {
                    let wid = self.node(node).ports[s];
                    self.wires[wid] = None;
                }
                for s in other {
                    self.terminate(node, s, label);
                }
                self.nodes[node] = None;
                Ok(0)
            }
        }
    }

    /// Serialises to the portable JSON graph format.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PortableDiagram::from(self))?)
    }

    /// Residual structure as an abstract graph: live nodes renumbered
    /// `0..k` in identifier order, port-to-port connections and the labels of
    /// free ports in node/slot order.
    pub fn shape(&self) -> DiagramShape {
        let ids: Vec<usize> = self.nodes().map(|(i, _)| i).collect();
        let index = |id: usize| ids.iter().position(|&x| x == id).expect("live node");
        let mut connections = Vec::new();
        let mut labels = Vec::new();
        for (k, &id) in ids.iter().enumerate() {
            for slot in 0..4 {
                match self.far_end(id, slot) {
                    WireEnd::Terminal { label } => labels.push(label),
                    WireEnd::Port { node, slot: s2 } => {
                        let j = index(node);
                        if (k, slot) < (j, s2) {
                            connections.push((k, slot, j, s2));
                        }
                    }
                }
            }
        }
        let tags = ids.iter().map(|&i| self.node(i).tag).collect();
        DiagramShape {
            tags,
            connections,
            labels,
        }
    }
}

/// Abstract shape of a diagram (see [`FoldedDiagram::shape`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramShape {
    pub tags: Vec<NodeTag>,
    pub connections: Vec<(usize, usize, usize, usize)>,
    pub labels: Vec<PermutationLabel>,
}

impl DiagramShape {
    /// Canonical form under node relabelling.
    ///
    /// Ports are distinguishable, so fixing the image of one node fixes its
    /// whole connected component. Each component is encoded from every
    /// possible root by a port-ordered breadth-first numbering; the smallest
    /// code is the component's canonical code, and components are ordered by
    /// code. Runs in `O(k²)` for `k` nodes.
    pub fn canonical(&self) -> DiagramShape {
        let k = self.tags.len();
        let ends = self.port_ends();
        let mut component = vec![usize::MAX; k];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for root in 0..k {
            if component[root] != usize::MAX {
                continue;
            }
            let members = self.bfs_order(root, &ends);
            for &v in &members {
                component[v] = components.len();
            }
            components.push(members);
        }
        let mut coded: Vec<(Vec<u64>, Vec<usize>)> = components
            .iter()
            .map(|members| {
                members
                    .iter()
                    .map(|&r| {
                        let order = self.bfs_order(r, &ends);
                        (self.encode(&order, &ends), order)
                    })
                    .min()
                    .expect("non-empty component")
            })
            .collect();
        coded.sort();
        let mut p = vec![0; k];
        for (new, old) in coded.into_iter().flat_map(|c| c.1).enumerate() {
            p[old] = new;
        }
        self.relabelled(&p)
    }

    /// What every `(node, slot)` is attached to.
    fn port_ends(&self) -> Vec<[PortEnd; 4]> {
        let mut ends = vec![[PortEnd::Label(PermutationLabel::Circle); 4]; self.tags.len()];
        for &(a, sa, b, sb) in &self.connections {
            ends[a][sa] = PortEnd::Port(b, sb);
            ends[b][sb] = PortEnd::Port(a, sa);
        }
        let used: HashSet<(usize, usize)> = self
            .connections
            .iter()
            .flat_map(|&(a, sa, b, sb)| [(a, sa), (b, sb)])
            .collect();
        let mut labels = self.labels.iter();
        for (i, node_ends) in ends.iter_mut().enumerate() {
            for (slot, end) in node_ends.iter_mut().enumerate() {
                if !used.contains(&(i, slot)) {
                    *end = PortEnd::Label(*labels.next().expect("label per free port"));
                }
            }
        }
        ends
    }

    /// Nodes of `root`'s component in port-ordered breadth-first order.
    fn bfs_order(&self, root: usize, ends: &[[PortEnd; 4]]) -> Vec<usize> {
        let mut seen = vec![false; self.tags.len()];
        let mut order = vec![root];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for end in &ends[v] {
                if let PortEnd::Port(w, _) = *end {
                    if !seen[w] {
                        seen[w] = true;
                        order.push(w);
                    }
                }
            }
        }
        order
    }

    /// Code of a component with its nodes numbered in `order`.
    fn encode(&self, order: &[usize], ends: &[[PortEnd; 4]]) -> Vec<u64> {
        let mut index = vec![usize::MAX; self.tags.len()];
        for (i, &v) in order.iter().enumerate() {
            index[v] = i;
        }
        let mut code = Vec::with_capacity(order.len() * 5);
        for &v in order {
            code.push(u64::from(self.tags[v] == NodeTag::Swap));
            for end in &ends[v] {
                code.push(match *end {
                    PortEnd::Label(PermutationLabel::Circle) => 0,
                    PortEnd::Label(PermutationLabel::Square) => 1,
                    PortEnd::Port(w, s) => 2 + (4 * index[w] + s) as u64,
                });
            }
        }
        code
    }

    /// Node `i` becomes node `p[i]`.
    fn relabelled(&self, p: &[usize]) -> DiagramShape {
        let k = self.tags.len();
        let mut tags = vec![NodeTag::Generic; k];
        for i in 0..k {
            tags[p[i]] = self.tags[i];
        }
        let mut connections: Vec<_> = self
            .connections
            .iter()
            .map(|&(a, sa, b, sb)| {
                let (x, y) = ((p[a], sa), (p[b], sb));
                if x < y {
                    (x.0, x.1, y.0, y.1)
                } else {
                    (y.0, y.1, x.0, x.1)
                }
            })
            .collect();
        connections.sort_unstable();
        // Free ports in the new node/slot order.
        let mut free: Vec<((usize, usize), PermutationLabel)> = Vec::new();
        let mut it = self.labels.iter();
        let used: HashSet<(usize, usize)> = self
            .connections
            .iter()
            .flat_map(|&(a, sa, b, sb)| [(a, sa), (b, sb)])
            .collect();
        for i in 0..k {
            for s in 0..4 {
                if !used.contains(&(i, s)) {
                    free.push(((p[i], s), *it.next().expect("label per free port")));
                }
            }
        }
        free.sort_by_key(|f| f.0);
        DiagramShape {
            tags,
            connections,
            labels: free.into_iter().map(|f| f.1).collect(),
        }
    }

    /// Graph isomorphism preserving port slots and labels.
    pub fn is_isomorphic(&self, other: &DiagramShape) -> bool {
        self.tags.len() == other.tags.len()
            && self.connections.len() == other.connections.len()
            && self.canonical() == other.canonical()
    }
}

#[derive(Debug, Clone, Copy)]
enum PortEnd {
    Label(PermutationLabel),
    Port(usize, usize),
}

/// Portable JSON graph: nodes with tag/position, edges as end pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortableDiagram {
    pub nodes: Vec<PortableNode>,
    pub edges: Vec<[WireEnd; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortableNode {
    pub id: usize,
    pub tag: NodeTag,
    pub position: Option<GatePosition>,
}

impl From<&FoldedDiagram> for PortableDiagram {
    fn from(d: &FoldedDiagram) -> Self {
        PortableDiagram {
            nodes: d
                .nodes()
                .map(|(id, n)| PortableNode {
                    id,
                    tag: n.tag,
                    position: n.position,
                })
                .collect(),
            edges: d.wires().map(|(_, w)| w.ends).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Builds `Z_α(m, n)` with every placement generic.
pub fn build_zalpha(spec: &BaseGateSpec, m: usize, n: usize) -> Result<FoldedDiagram> {
    build_zalpha_with(spec, m, n, DEFAULT_MAX_NODES, |_| NodeTag::Generic)
}

/// Builds `Z_α(m, n)` choosing the tag of every gate with `tag_of`.
pub fn build_zalpha_with(
    spec: &BaseGateSpec,
    m: usize,
    n: usize,
    max_nodes: usize,
    mut tag_of: impl FnMut(GatePosition) -> NodeTag,
) -> Result<FoldedDiagram> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "diamond extent must be positive, got m={m}, n={n}"
        )));
    }
    let bonds: Vec<usize> = spec.bonds()?.into_iter().flatten().collect();
    let total = m.saturating_mul(n).saturating_mul(bonds.len());
    if total > max_nodes {
        return Err(Error::BudgetExceeded(format!(
            "{total} nodes exceed the cap of {max_nodes}"
        )));
    }
    let half = spec.half_width();
    let mut dgm = FoldedDiagram::empty();
    // Dangling wire ids leaving each cell: right half of outputs for (i+1, j)
    // and left half for (i, j+1).
    let mut out_right: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; n]; m];
    let mut out_left: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; n]; m];
    const PENDING: WireEnd = WireEnd::Terminal {
        label: PermutationLabel::Circle,
    };
    for s in 0..m + n - 1 {
        for i in 0..m {
            if s < i || s - i >= n {
                continue;
            }
            let j = s - i;
            let mut cur = vec![0usize; 2 * half];
            for k in 0..half {
                cur[k] = if i == 0 {
                    dgm.push_wire(
                        WireEnd::Terminal {
                            label: PermutationLabel::Square,
                        },
                        PENDING,
                    )
                } else {
                    out_right[i - 1][j].as_ref().expect("earlier cell")[k]
                };
                cur[half + k] = if j == 0 {
                    dgm.push_wire(
                        WireEnd::Terminal {
                            label: PermutationLabel::Circle,
                        },
                        PENDING,
                    )
                } else {
                    out_left[i][j - 1].as_ref().expect("earlier cell")[k]
                };
            }
            for (e, &b) in bonds.iter().enumerate() {
                let id = dgm.nodes.len();
                let tag = tag_of(GatePosition {
                    cell_i: i,
                    cell_j: j,
                    element: e,
                });
                for (slot, leg) in [(IN_LEFT, b), (IN_RIGHT, b + 1)] {
                    // The pending (second) end of the incoming wire becomes this port.
                    dgm.wires[cur[leg]].as_mut().expect("live").ends[1] =
                        WireEnd::Port { node: id, slot };
                }
                let wl = dgm.push_wire(
                    WireEnd::Port {
                        node: id,
                        slot: OUT_LEFT,
                    },
                    PENDING,
                );
                let wr = dgm.push_wire(
                    WireEnd::Port {
                        node: id,
                        slot: OUT_RIGHT,
                    },
                    PENDING,
                );
                dgm.nodes.push(Some(Node {
                    tag,
                    position: Some(GatePosition {
                        cell_i: i,
                        cell_j: j,
                        element: e,
                    }),
                    ports: [cur[b], cur[b + 1], wl, wr],
                }));
                cur[b] = wl;
                cur[b + 1] = wr;
            }
            let (ol, or) = (cur[..half].to_vec(), cur[half..].to_vec());
            if j == n - 1 {
                for &w in &ol {
                    dgm.wires[w].as_mut().expect("live").ends[1] = WireEnd::Terminal {
                        label: PermutationLabel::Square,
                    };
                }
            } else {
                out_left[i][j] = Some(ol);
            }
            if i == m - 1 {
                for &w in &or {
                    dgm.wires[w].as_mut().expect("live").ends[1] = WireEnd::Terminal {
                        label: PermutationLabel::Circle,
                    };
                }
            } else {
                out_right[i][j] = Some(or);
            }
        }
    }
    Ok(dgm)
}

// ---------------------------------------------------------------------------
// Reduction
// ---------------------------------------------------------------------------

/// Runs the rewrite engine to its fixpoint in boundary order.
pub fn reduce_boundary(diagram: &FoldedDiagram) -> ReductionResult {
    reduce_with_order(diagram, ScanOrder::Boundary)
}

/// Runs the rewrite engine with an explicit sweep order.
pub fn reduce_with_order(diagram: &FoldedDiagram, order: ScanOrder) -> ReductionResult {
    let mut dgm = diagram.clone();
    let mut trace = Vec::new();
    let mut overlaps = 0usize;
    let mut rng = match order {
        ScanOrder::Randomized(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        ScanOrder::Boundary => None,
    };
    // Nodes adjacent to a terminal are the only candidates; keep a frontier.
    loop {
        let mut changed = false;
        let closed: Vec<(usize, bool)> = dgm
            .wires()
            .filter_map(|(id, w)| match (w.ends[0].label(), w.ends[1].label()) {
                (Some(a), Some(b)) => Some((id, a != b)),
                _ => None,
            })
            .collect();
        for (wire, unequal) in closed {
            let rw = Rewrite::Overlap { wire, unequal };
            overlaps += dgm.apply(rw).expect("overlap is applicable");
            trace.push(rw);
            changed = true;
        }
        let mut ids: Vec<usize> = dgm.nodes().map(|(i, _)| i).collect();
        if let Some(r) = rng.as_mut() {
            ids.shuffle(r);
        }
        for id in ids {
            if let Some(rw) = dgm.applicable(id) {
                overlaps += dgm.apply(rw).expect("detected rewrite is applicable");
                trace.push(rw);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let status = if dgm.node_count() == 0 {
        ReductionStatus::FullyReduced
    } else {
        ReductionStatus::Stuck
    };
    ReductionResult {
        status,
        overlaps,
        residual: dgm,
        trace,
    }
}

/// Replays a trace on a fresh copy and returns the overlap count.
pub fn replay(diagram: &FoldedDiagram, trace: &[Rewrite]) -> Result<usize> {
    let mut dgm = diagram.clone();
    let mut total = 0;
    for &rw in trace {
        total += dgm.apply(rw)?;
    }
    Ok(total)
}

/// True iff `Z_α(m, n)` of `spec` reduces to permutation overlaps only.
pub fn is_completely_reducible(spec: &BaseGateSpec, m: usize, n: usize) -> Result<bool> {
    Ok(reduce_boundary(&build_zalpha(spec, m, n)?).is_fully_reduced())
}

/// One sample of a ray measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaySample {
    pub m: usize,
    pub n: usize,
    pub overlaps: usize,
}

/// Line tension measured from reductions along a ray.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayTension {
    /// `Δ𝒩 / (N·Δt)` of the last two samples.
    pub value: Rational64,
    /// True when the last two successive differences agree.
    pub stabilized: bool,
    pub samples: Vec<RaySample>,
}

/// Diamond extents `(m, n)` along the ray `x = v·t` with `t = m + n ≤ max_t`.
/// For `|v| = 1` one side is pinned to a single cell.
pub fn ray_extents(v: Rational64, max_t: usize) -> Result<Vec<(usize, usize)>> {
    let one = Rational64::from_integer(1);
    if v.abs() > one {
        return Err(Error::InvalidParameter(format!(
            "velocity {v} lies outside the light cone"
        )));
    }
    let mut out = Vec::new();
    if v.abs() == one {
        for k in 1..max_t {
            out.push(if v.is_positive() { (k, 1) } else { (1, k) });
        }
        return Ok(out);
    }
    let (p, q) = (*v.numer(), *v.denom());
    // m − n ∝ p, m + n ∝ q.
    let (mut a, mut b) = ((q + p) as usize, (q - p) as usize);
    let g = gcd(a, b);
    a /= g;
    b /= g;
    let mut k = 1;
    while (a + b) * k <= max_t {
        out.push((a * k, b * k));
        k += 1;
    }
    Ok(out)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Entanglement line tension at velocity `v` from reductions of diamonds
/// along the ray, using successive differences so that constant offsets
/// cancel. Requires at least three samples with `t ≤ max_t`.
pub fn elt_from_reduction(spec: &BaseGateSpec, v: Rational64, max_t: usize) -> Result<RayTension> {
    let extents = ray_extents(v, max_t)?;
    if extents.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "ray v = {v} needs larger times than t ≤ {max_t}"
        )));
    }
    let mut samples = Vec::with_capacity(extents.len());
    for (m, n) in extents {
        let res = reduce_boundary(&build_zalpha(spec, m, n)?);
        if !res.is_fully_reduced() {
            return Err(Error::NotReducible { m, n });
        }
        samples.push(RaySample {
            m,
            n,
            overlaps: res.overlaps,
        });
    }
    let half = spec.half_width() as i64;
    let diff = |a: &RaySample, b: &RaySample| {
        let dn = b.overlaps as i64 - a.overlaps as i64;
        let dt = (b.m + b.n) as i64 - (a.m + a.n) as i64;
        Rational64::new(dn, half * dt)
    };
    let k = samples.len();
    let last = diff(&samples[k - 2], &samples[k - 1]);
    let prev = diff(&samples[k - 3], &samples[k - 2]);
    Ok(RayTension {
        value: last,
        stabilized: last == prev,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::builtin;

    #[test]
    fn du_diamond_counts() {
        let s = builtin("du", 2).unwrap();
        let dg = build_zalpha(&s, 1, 1).unwrap();
        assert_eq!(dg.node_count(), 1);
        assert_eq!(dg.terminal_count(), 4);
        dg.validate().unwrap();
        let dg = build_zalpha(&s, 2, 3).unwrap();
        assert_eq!(dg.node_count(), 6);
        assert_eq!(dg.terminal_count(), 2 * (2 + 3));
        assert!(build_zalpha(&s, 0, 2).is_err());
    }

    #[test]
    fn du_reduces_with_m_plus_n_overlaps() {
        let s = builtin("du", 2).unwrap();
        for m in 1..=4 {
            for n in 1..=4 {
                let r = reduce_boundary(&build_zalpha(&s, m, n).unwrap());
                assert!(r.is_fully_reduced());
                assert_eq!(r.overlaps, m + n, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn trace_replays() {
        let s = builtin("pyramid4", 2).unwrap();
        let dg = build_zalpha(&s, 2, 3).unwrap();
        let r = reduce_boundary(&dg);
        assert_eq!(replay(&dg, &r.trace).unwrap(), r.overlaps);
    }

    #[test]
    fn twoloc_gets_stuck() {
        let s = builtin("twoloc", 2).unwrap();
        let r = reduce_boundary(&build_zalpha(&s, 3, 3).unwrap());
        assert_eq!(r.status, ReductionStatus::Stuck);
        r.residual.validate().unwrap();
    }

    #[test]
    fn ray_extents_follow_the_velocity() {
        let r = |p, q| Rational64::new(p, q);
        assert_eq!(
            ray_extents(r(0, 1), 6).unwrap(),
            vec![(1, 1), (2, 2), (3, 3)]
        );
        assert_eq!(
            ray_extents(r(1, 3), 9).unwrap(),
            vec![(2, 1), (4, 2), (6, 3)]
        );
        assert_eq!(ray_extents(r(-1, 2), 8).unwrap(), vec![(1, 3), (2, 6)]);
        assert_eq!(
            ray_extents(r(1, 1), 4).unwrap(),
            vec![(1, 1), (2, 1), (3, 1)]
        );
        assert!(ray_extents(r(3, 2), 4).is_err());
    }

    #[test]
    fn wiring_constructor_and_shape() {
        use PermutationLabel::{Circle as C, Square as S};
        let d = FoldedDiagram::from_wiring(&[NodeTag::Generic], &[], &[C, S, S, C]).unwrap();
        assert_eq!(reduce_boundary(&d).status, ReductionStatus::Stuck);
        let sh = d.shape();
        assert_eq!(sh.labels, vec![C, S, S, C]);
        let d2 = FoldedDiagram::from_wiring(
            &[NodeTag::Generic; 2],
            &[(0, 3, 1, 0)],
            &[C, S, S, C, S, C],
        )
        .unwrap();
        let d3 = FoldedDiagram::from_wiring(
            &[NodeTag::Generic; 2],
            &[(1, 3, 0, 0)],
            &[C, S, C, C, S, S],
        )
        .unwrap();
        assert_eq!(d2.shape().connections.len(), 1);
        assert!(d2.shape().is_isomorphic(&d3.shape()));
        assert!(!d2.shape().is_isomorphic(&d.shape()));
        assert!(FoldedDiagram::from_wiring(&[NodeTag::Generic], &[], &[C]).is_err());
    }

    #[test]
    fn json_export_lists_live_entries() {
        let s = builtin("kagome", 2).unwrap();
        let dg = build_zalpha(&s, 1, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&dg.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
    }
}
