//! One-agent-at-a-time reformulation.
//!
//! Each original decision at `x` is unfolded into `m` consecutive decisions
//! through the intermediate states `(x, u_1)`, ..., `(x, u_1, ..., u_{m-1})`.
//! Intermediate transitions are deterministic and cost-free; the transition
//! on the final component carries the original law and stage cost (and, for
//! the discounted model, the whole discount factor).

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt::Write;

use crate::dp::solve_policy_system;
use crate::error::{Error, Result};
use crate::model::{
    cartesian_product, DiscountedMdp, FactoredControl, FactoredPolicy, FiniteHorizonModel,
    OrderSchedule, Outcome, StationaryPolicy,
};

/// An original state plus the components already chosen, in decision order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExpandedNode {
    pub state: usize,
    pub prefix: Vec<usize>,
}

fn node_label(node: &ExpandedNode) -> String {
    let mut s = node.state.to_string();
    if !node.prefix.is_empty() {
        s.push('|');
        for (i, l) in node.prefix.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{l}");
        }
    }
    s
}

struct NodeLayer {
    nodes: Vec<ExpandedNode>,
    index: HashMap<ExpandedNode, usize>,
}

impl NodeLayer {
    fn new(nodes: Vec<ExpandedNode>) -> Self {
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { nodes, index }
    }
}

/// Puts components chosen in `order` back into agent positions.
fn assemble(order: &[usize], prefix: &[usize], last: usize) -> FactoredControl {
    let mut components = vec![0; order.len()];
    for (pos, &agent) in order.iter().enumerate() {
        components[agent] = if pos < prefix.len() {
            prefix[pos]
        } else {
            last
        };
    }
    FactoredControl::new(components)
}

/// The reformulated finite-horizon model: `N * m` single-agent stages.
pub struct ExpandedFiniteModel<'a, M: ?Sized> {
    model: &'a M,
    schedule: OrderSchedule,
    agents: usize,
    layers: Vec<NodeLayer>,
}

impl<'a, M: FiniteHorizonModel + ?Sized> ExpandedFiniteModel<'a, M> {
    pub fn new(model: &'a M, schedule: impl Into<OrderSchedule>) -> Result<Self> {
        let schedule = schedule.into();
        let agents = model.agent_count();
        schedule.check(agents, model.horizon())?;
        let mut layers = Vec::with_capacity(model.horizon() * agents);
        for k in 0..model.horizon() {
            let order = schedule.at(k).agents().to_vec();
            for depth in 0..agents {
                let mut nodes = Vec::new();
                for x in 0..model.state_count(k) {
                    let sets: Vec<Cow<'_, [usize]>> = order[..depth]
                        .iter()
                        .map(|&a| model.control_set(k, x, a))
                        .collect();
                    if depth == 0 {
                        nodes.push(ExpandedNode {
                            state: x,
                            prefix: Vec::new(),
                        });
                    } else {
                        for p in cartesian_product(&sets) {
                            nodes.push(ExpandedNode {
                                state: x,
                                prefix: p.components().to_vec(),
                            });
                        }
                    }
                }
                layers.push(NodeLayer::new(nodes));
            }
        }
        Ok(Self {
            model,
            schedule,
            agents,
            layers,
        })
    }

    /// Expanded stage at which original stage `k` begins.
    pub fn stage_of(&self, stage: usize) -> usize {
        stage * self.agents
    }

    pub fn node(&self, stage: usize, index: usize) -> &ExpandedNode {
        &self.layers[stage].nodes[index]
    }

    pub fn node_index(&self, stage: usize, node: &ExpandedNode) -> Option<usize> {
        self.layers.get(stage)?.index.get(node).copied()
    }

    /// The expanded-model policy that applies `policy`'s components one at a
    /// time, ignoring the already-chosen prefix.
    pub fn embed_policy(&self, policy: &FactoredPolicy) -> FactoredPolicy {
        FactoredPolicy::from_fn(self, |e, i| {
            let k = e / self.agents;
            let depth = e % self.agents;
            let node = &self.layers[e].nodes[i];
            let agent = self.schedule.at(k).agents()[depth];
            FactoredControl::new(vec![policy.control(k, node.state).component(agent)])
        })
    }
}

impl<M: FiniteHorizonModel + ?Sized> FiniteHorizonModel for ExpandedFiniteModel<'_, M> {
    fn horizon(&self) -> usize {
        self.layers.len()
    }

    fn agent_count(&self) -> usize {
        1
    }

    fn state_count(&self, stage: usize) -> usize {
        match self.layers.get(stage) {
            Some(layer) => layer.nodes.len(),
            None => self.model.state_count(self.model.horizon()),
        }
    }

    fn control_set(&self, stage: usize, state: usize, _agent: usize) -> Cow<'_, [usize]> {
        let k = stage / self.agents;
        let depth = stage % self.agents;
        let node = &self.layers[stage].nodes[state];
        let agent = self.schedule.at(k).agents()[depth];
        self.model.control_set(k, node.state, agent)
    }

    fn outcomes(&self, stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome> {
        let k = stage / self.agents;
        let depth = stage % self.agents;
        let node = &self.layers[stage].nodes[state];
        let label = control.component(0);
        if depth + 1 < self.agents {
            let mut prefix = node.prefix.clone();
            prefix.push(label);
            let child = ExpandedNode {
                state: node.state,
                prefix,
            };
            let next = self.layers[stage + 1].index[&child];
            vec![Outcome {
                disturbance: 0,
                probability: 1.0,
                next_state: next,
                cost: 0.0,
            }]
        } else {
            let joint = assemble(self.schedule.at(k).agents(), &node.prefix, label);
            self.model.outcomes(k, node.state, &joint)
        }
    }

    fn terminal_cost(&self, state: usize) -> f64 {
        self.model.terminal_cost(state)
    }

    fn initial_state(&self) -> Option<usize> {
        self.model.initial_state()
    }

    fn state_label(&self, stage: usize, state: usize) -> String {
        match self.layers.get(stage) {
            Some(layer) => node_label(&layer.nodes[state]),
            None => self.model.state_label(self.model.horizon(), state),
        }
    }
}

/// The reformulated discounted MDP. Nodes `0..n` are the original states.
pub struct ExpandedMdp<'a> {
    mdp: &'a DiscountedMdp,
    order: Vec<usize>,
    nodes: NodeLayer,
}

/// One transition of the expanded MDP; `discount` is `1` on intermediate
/// transitions and `alpha` on the final one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpandedTransition {
    pub next_node: usize,
    pub probability: f64,
    pub cost: f64,
    pub discount: f64,
}

impl<'a> ExpandedMdp<'a> {
    pub fn new(mdp: &'a DiscountedMdp, order: &crate::model::AgentOrder) -> Result<Self> {
        let m = mdp.agent_count();
        if order.len() != m {
            return Err(Error::InvalidOrder {
                order: order.agents().to_vec(),
                agents: m,
            });
        }
        let order = order.agents().to_vec();
        let mut nodes: Vec<ExpandedNode> = (0..mdp.state_count())
            .map(|x| ExpandedNode {
                state: x,
                prefix: Vec::new(),
            })
            .collect();
        for depth in 1..m {
            for x in 0..mdp.state_count() {
                let sets: Vec<&[usize]> = order[..depth]
                    .iter()
                    .map(|&a| mdp.control_set(x, a))
                    .collect();
                for p in cartesian_product(&sets) {
                    nodes.push(ExpandedNode {
                        state: x,
                        prefix: p.components().to_vec(),
                    });
                }
            }
        }
        Ok(Self {
            mdp,
            order,
            nodes: NodeLayer::new(nodes),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.nodes.len()
    }

    pub fn node(&self, index: usize) -> &ExpandedNode {
        &self.nodes.nodes[index]
    }

    pub fn node_label(&self, index: usize) -> String {
        node_label(&self.nodes.nodes[index])
    }

    pub fn control_set(&self, node: usize) -> &[usize] {
        let n = &self.nodes.nodes[node];
        self.mdp.control_set(n.state, self.order[n.prefix.len()])
    }

    pub fn transitions(&self, node: usize, label: usize) -> Result<Vec<ExpandedTransition>> {
        let n = &self.nodes.nodes[node];
        if !self.control_set(node).contains(&label) {
            return Err(Error::InfeasibleControl {
                stage: 0,
                state: node,
                control: FactoredControl::new(vec![label]),
            });
        }
        if n.prefix.len() + 1 < self.order.len() {
            let mut prefix = n.prefix.clone();
            prefix.push(label);
            let child = ExpandedNode {
                state: n.state,
                prefix,
            };
            Ok(vec![ExpandedTransition {
                next_node: self.nodes.index[&child],
                probability: 1.0,
                cost: 0.0,
                discount: 1.0,
            }])
        } else {
            let joint = assemble(&self.order, &n.prefix, label);
            let alpha = self.mdp.discount();
            Ok(self
                .mdp
                .row_for(n.state, &joint)?
                .iter()
                .map(|t| ExpandedTransition {
                    next_node: t.next_state,
                    probability: t.probability,
                    cost: t.cost,
                    discount: alpha,
                })
                .collect())
        }
    }

    /// Per-node labels of the expanded policy that applies `policy`'s
    /// components one at a time.
    pub fn embed_policy(&self, policy: &StationaryPolicy) -> Vec<usize> {
        self.nodes
            .nodes
            .iter()
            .map(|n| {
                policy
                    .control(n.state)
                    .component(self.order[n.prefix.len()])
            })
            .collect()
    }

    /// Exact cost of a per-node policy on the expanded MDP.
    pub fn evaluate_policy(&self, labels: &[usize]) -> Result<Vec<f64>> {
        if labels.len() != self.node_count() {
            return Err(Error::PolicyShape {
                expected: self.node_count(),
                actual: labels.len(),
            });
        }
        let mut rows = Vec::with_capacity(labels.len());
        let mut rhs = Vec::with_capacity(labels.len());
        for (node, &label) in labels.iter().enumerate() {
            let ts = self.transitions(node, label)?;
            rhs.push(ts.iter().map(|t| t.probability * t.cost).sum());
            rows.push(
                ts.iter()
                    .map(|t| (t.next_node, t.discount * t.probability))
                    .collect(),
            );
        }
        solve_policy_system(&rows, &rhs)
    }
}
