use super::{cartesian_product, joint_index, FactoredControl};
use crate::error::{Error, Result};

/// One nonzero entry `p_xy(u)` together with its cost `g(x, u, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub probability: f64,
    pub cost: f64,
}

/// An n-state, m-agent tabular discounted MDP.
///
/// Transition rows are stored sparsely per state and joint control, with joint
/// controls indexed in [`cartesian_product`] order of the state's control
/// sets.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscountedMdp {
    agent_count: usize,
    discount: f64,
    control_sets: Vec<Vec<Vec<usize>>>,
    rows: Vec<Vec<Vec<Transition>>>,
    state_names: Option<Vec<String>>,
}

impl DiscountedMdp {
    /// Shape-checked constructor. Content invariants (stochastic rows,
    /// discount range) are reported by [`validate_discounted`].
    ///
    /// [`validate_discounted`]: super::validate_discounted
    pub fn new(
        agent_count: usize,
        discount: f64,
        control_sets: Vec<Vec<Vec<usize>>>,
        rows: Vec<Vec<Vec<Transition>>>,
    ) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidParams("agent count must be positive".into()));
        }
        if control_sets.is_empty() {
            return Err(Error::InvalidParams(
                "an MDP needs at least one state".into(),
            ));
        }
        if rows.len() != control_sets.len() {
            return Err(Error::InvalidParams(format!(
                "{} transition blocks for {} states",
                rows.len(),
                control_sets.len()
            )));
        }
        for (x, sets) in control_sets.iter().enumerate() {
            if sets.len() != agent_count {
                return Err(Error::InvalidParams(format!(
                    "state {x}: {} control sets for {agent_count} agents",
                    sets.len()
                )));
            }
            let joint: usize = sets.iter().map(Vec::len).product();
            if rows[x].len() != joint {
                return Err(Error::InvalidParams(format!(
                    "state {x}: {} rows for {joint} joint controls",
                    rows[x].len()
                )));
            }
        }
        Ok(Self {
            agent_count,
            discount,
            control_sets,
            rows,
            state_names: None,
        })
    }

    /// Builds the rows by calling `row(x, u)` for every state and joint control.
    pub fn from_fn(
        discount: f64,
        control_sets: Vec<Vec<Vec<usize>>>,
        mut row: impl FnMut(usize, &FactoredControl) -> Vec<Transition>,
    ) -> Result<Self> {
        let agent_count = control_sets.first().map_or(0, Vec::len);
        let rows = control_sets
            .iter()
            .enumerate()
            .map(|(x, sets)| cartesian_product(sets).iter().map(|u| row(x, u)).collect())
            .collect();
        Self::new(agent_count, discount, control_sets, rows)
    }

    pub fn with_state_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.state_count() {
            return Err(Error::InvalidParams(format!(
                "{} state names for {} states",
                names.len(),
                self.state_count()
            )));
        }
        self.state_names = Some(names);
        Ok(self)
    }

    /// Same model with a different discount factor.
    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn state_count(&self) -> usize {
        self.control_sets.len()
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn control_set(&self, state: usize, agent: usize) -> &[usize] {
        &self.control_sets[state][agent]
    }

    pub fn control_sets(&self, state: usize) -> &[Vec<usize>] {
        &self.control_sets[state]
    }

    pub fn joint_count(&self, state: usize) -> usize {
        self.rows[state].len()
    }

    pub fn joint_controls(&self, state: usize) -> Result<Vec<FactoredControl>> {
        self.check_state(state)?;
        Ok(cartesian_product(&self.control_sets[state]))
    }

    pub fn joint_index(&self, state: usize, control: &FactoredControl) -> Result<usize> {
        self.check_state(state)?;
        joint_index(&self.control_sets[state], control).ok_or_else(|| Error::InfeasibleControl {
            stage: 0,
            state,
            control: control.clone(),
        })
    }

    pub fn row(&self, state: usize, joint: usize) -> &[Transition] {
        &self.rows[state][joint]
    }

    pub fn row_for(&self, state: usize, control: &FactoredControl) -> Result<&[Transition]> {
        let joint = self.joint_index(state, control)?;
        Ok(&self.rows[state][joint])
    }

    pub fn state_names(&self) -> Option<&[String]> {
        self.state_names.as_deref()
    }

    pub fn state_name(&self, state: usize) -> String {
        match &self.state_names {
            Some(names) => names[state].clone(),
            None => state.to_string(),
        }
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.state_count() {
            return Err(Error::UnknownState { stage: 0, state });
        }
        Ok(())
    }
}
