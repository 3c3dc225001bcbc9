use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{adjust_metrics, best_task_set, select_task_set, AdjustedMetrics};
use super::order::OrderSpace;
use super::{PlanContext, PlanError, PlannerConfig};
use crate::model::{Eid, EmergencyGroup, InfluenceSpec, PolicyStore, TsId};
use crate::num::Exact;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone)]
pub struct GraphNode {
    /// Bit `i` set while group member `i` is pending.
    mask: u64,
    /// Minutes since the planning epoch along the prefix reaching the node.
    pub elapsed: Exact,
    pub pvalue: Option<Exact>,
    pub out: Vec<EdgeId>,
}

impl GraphNode {
    pub fn is_terminal(&self) -> bool {
        self.mask == 0
    }
}

/// A response link: processing `eid` with `tsid`, under influence-adjusted
/// metrics valid at the source node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseLink {
    pub eid: Eid,
    pub tsid: TsId,
    /// False when every task-set needs an unavailable resource; the link
    /// then carries the best task-set regardless and contributes 0.
    pub executable: bool,
    pub p: Exact,
    pub t: Exact,
    pub ed: Exact,
    pub source: NodeId,
    pub target: NodeId,
    /// Some pending emergency's deadline passes before this link completes.
    pub expired: bool,
}

/// Prefix tree of admissible processing orders rooted at the state where
/// every group member is pending.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    pub members: Vec<Eid>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<ResponseLink>,
    pub root: NodeId,
    /// Total admissible orders (`None` when beyond `u128`).
    pub order_count: Option<u128>,
    /// Orders actually in the graph.
    pub path_count: usize,
}

impl TransitionGraph {
    pub fn remaining(&self, node: NodeId) -> Vec<&Eid> {
        let mask = self.nodes[node].mask;
        self.members
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| e)
            .collect()
    }

    pub fn root_pvalue(&self) -> Option<&Exact> {
        self.nodes[self.root].pvalue.as_ref()
    }

    /// Edges of every root-to-terminal path, in depth-first edge order.
    pub fn paths(&self) -> Vec<Vec<EdgeId>> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            let n = &self.nodes[node];
            if n.out.is_empty() {
                out.push(prefix);
                continue;
            }
            for &e in n.out.iter().rev() {
                let mut p = prefix.clone();
                p.push(e);
                stack.push((self.edges[e].target, p));
            }
        }
        out
    }
}

/// Builds the state-transition graph with the group's planning epoch at
/// `gate_release` minutes.
pub fn build_transition_graph(
    group: &EmergencyGroup,
    store: &PolicyStore,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
    gate_release: Exact,
) -> Result<TransitionGraph, PlanError> {
    let ctx = PlanContext {
        gate_release,
        ..PlanContext::default()
    };
    build_transition_graph_with(group, store, infl, cfg, &ctx)
}

pub fn build_transition_graph_with(
    group: &EmergencyGroup,
    store: &PolicyStore,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
    ctx: &PlanContext,
) -> Result<TransitionGraph, PlanError> {
    let members = &group.members;
    if members.is_empty() {
        return Err(PlanError::EmptyGroup);
    }
    if members.len() > 64 {
        return Err(PlanError::GroupTooLarge(members.len()));
    }
    if cfg.k == 0 {
        return Err(PlanError::InvalidConfig("permutation cap K must be >= 1"));
    }
    let index: BTreeMap<&Eid, usize> = members.iter().enumerate().map(|(i, e)| (&e.eid, i)).collect();
    for e in members {
        if e.task_sets.is_empty() {
            return Err(PlanError::NoTaskSets(e.eid.clone()));
        }
    }
    let mut tdt = Vec::new();
    for (a, b) in &store.tdt {
        if let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) {
            if members[ia].prio >= members[ib].prio {
                return Err(PlanError::PriorityInversion(a.clone(), b.clone()));
            }
            tdt.push((ia, ib));
        }
    }

    let space = OrderSpace::new(members, &tdt);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let orders = space.sample(cfg.k, &mut rng);

    let full: u64 = if members.len() == 64 {
        u64::MAX
    } else {
        (1u64 << members.len()) - 1
    };
    let mut graph = TransitionGraph {
        members: members.iter().map(|e| e.eid.clone()).collect(),
        nodes: vec![GraphNode {
            mask: full,
            elapsed: ctx.gate_release.clone(),
            pvalue: None,
            out: Vec::new(),
        }],
        edges: Vec::new(),
        root: 0,
        order_count: space.count(),
        path_count: orders.len(),
    };

    #[derive(Clone)]
    struct Cached {
        tsid: TsId,
        executable: bool,
        m: AdjustedMetrics,
    }
    let mut cache: HashMap<(u64, usize), Cached> = HashMap::new();
    let mut metrics_at = |mask: u64, i: usize| -> Cached {
        cache
            .entry((mask, i))
            .or_insert_with(|| {
                let e = &members[i];
                let (ts, executable) = match select_task_set(e, &ctx.blocked_resources) {
                    Ok(ts) => (ts, true),
                    Err(_) => (best_task_set(e).expect("checked non-empty"), false),
                };
                let others = members
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i && mask & (1 << j) != 0)
                    .map(|(_, o)| &o.eid);
                Cached {
                    tsid: ts.tsid.clone(),
                    executable,
                    m: adjust_metrics(e, ts, others, infl, cfg),
                }
            })
            .clone()
    };
    let zero = Exact::zero();
    let consumed = |i: usize| ctx.consumed.get(&members[i].eid).unwrap_or(&zero);

    for order in orders {
        let mut node = graph.root;
        for i in order {
            let eid = &members[i].eid;
            if let Some(&e) = graph.nodes[node].out.iter().find(|&&e| &graph.edges[e].eid == eid) {
                node = graph.edges[e].target;
                continue;
            }
            let mask = graph.nodes[node].mask;
            let elapsed = graph.nodes[node].elapsed.clone();
            let Cached { tsid, executable, m } = metrics_at(mask, i);
            let finish = &elapsed + &m.t;
            let mut expired = consumed(i) + &finish > m.ed;
            if !expired {
                for j in 0..members.len() {
                    if j != i && mask & (1 << j) != 0 {
                        let ed_j = metrics_at(mask, j).m.ed;
                        if consumed(j) + &finish > ed_j {
                            expired = true;
                            break;
                        }
                    }
                }
            }
            let target = graph.nodes.len();
            graph.nodes.push(GraphNode {
                mask: mask & !(1 << i),
                elapsed: finish,
                pvalue: None,
                out: Vec::new(),
            });
            let edge = graph.edges.len();
            graph.edges.push(ResponseLink {
                eid: eid.clone(),
                tsid,
                executable,
                p: m.p,
                t: m.t,
                ed: m.ed,
                source: node,
                target,
                expired,
            });
            graph.nodes[node].out.push(edge);
            node = target;
        }
    }
    Ok(graph)
}

/// Annotates every node with its P-value: 1 at the normal state, otherwise
/// the best `p' · Pv(child)` over outgoing links, where expired or
/// non-executable links contribute 0. Returns the root's value.
pub fn compute_p_value(g: &mut TransitionGraph) -> Exact {
    // children always have larger ids than their parents
    for id in (0..g.nodes.len()).rev() {
        let pv = if g.nodes[id].is_terminal() {
            Exact::one()
        } else {
            g.nodes[id]
                .out
                .iter()
                .map(|&e| {
                    let link = &g.edges[e];
                    if link.expired || !link.executable {
                        Exact::zero()
                    } else {
                        let child = g.nodes[link.target].pvalue.as_ref().expect("child visited first");
                        &link.p * child
                    }
                })
                .fold(Exact::zero(), Exact::max)
        };
        g.nodes[id].pvalue = Some(pv);
    }
    g.nodes[g.root].pvalue.clone().expect("root annotated")
}
