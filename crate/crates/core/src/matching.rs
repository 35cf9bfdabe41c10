//! Capacitated bipartite assignment (b-matching) by min-cost max-flow.
//!
//! Agents on the left have integer capacities, targets on the right take at
//! most one agent. The solver maximises the number of matched targets and,
//! among maximum assignments, the total edge weight.

use std::collections::VecDeque;

/// Candidate pairing of `agent` with `target` worth `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub agent: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(agent, target)` pairs sorted by agent then target.
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: f64,
}

impl Assignment {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

struct Arc {
    to: usize,
    cap: i64,
    cost: f64,
}

struct Network {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.adj[from].push(id);
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Shortest path by SPFA on the residual graph; returns the arc used to
    /// reach each node.
    fn shortest_path(&self, source: usize, sink: usize) -> Option<Vec<Option<usize>>> {
        const EPS: f64 = 1e-12;
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![None; n];
        let mut queued = vec![false; n];
        let mut queue = VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > 0 && dist[u] + arc.cost < dist[arc.to] - EPS {
                    dist[arc.to] = dist[u] + arc.cost;
                    via[arc.to] = Some(a);
                    if !queued[arc.to] {
                        queued[arc.to] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        dist[sink].is_finite().then_some(via)
    }
}

/// Maximum-cardinality, then maximum-weight, assignment of targets to agents
/// under per-agent `capacities`.
pub fn max_coverage_assignment(capacities: &[u32], target_count: usize, edges: &[Edge]) -> Assignment {
    let agents = capacities.len();
    let source = 0;
    let sink = agents + target_count + 1;
    let mut net = Network::new(sink + 1);
    let scale = edges
        .iter()
        .map(|e| e.weight.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    for (a, &cap) in capacities.iter().enumerate() {
        net.add(source, 1 + a, i64::from(cap), 0.0);
    }
    let mut pair_arcs = Vec::with_capacity(edges.len());
    for e in edges {
        assert!(e.agent < agents && e.target < target_count, "edge out of range");
        let id = net.add(1 + e.agent, 1 + agents + e.target, 1, -e.weight / scale);
        pair_arcs.push((id, *e));
    }
    for t in 0..target_count {
        net.add(1 + agents + t, sink, 1, 0.0);
    }

    while let Some(via) = net.shortest_path(source, sink) {
        // Every source arc and target arc carries unit-step flow, so push 1.
        let mut v = sink;
        while let Some(a) = via[v] {
            net.arcs[a].cap -= 1;
            net.arcs[a ^ 1].cap += 1;
            v = net.arcs[a ^ 1].to;
        }
    }

    let mut pairs = Vec::new();
    let mut total_weight = 0.0;
    for (id, e) in pair_arcs {
        if net.arcs[id].cap == 0 {
            pairs.push((e.agent, e.target));
            total_weight += e.weight;
        }
    }
    pairs.sort_unstable();
    Assignment { pairs, total_weight }
}
