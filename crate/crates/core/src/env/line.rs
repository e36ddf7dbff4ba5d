use std::borrow::Cow;

use super::PursuitModel;
use crate::error::{Error, Result};
use crate::model::{FactoredControl, FiniteHorizonModel, Outcome};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Two spiders and two fixed flies on the integer points `0..=length`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinePursuitParams {
    pub length: usize,
    pub spiders: [usize; 2],
    pub flies: [usize; 2],
    /// Defaults to `2 * length + 2`, enough for the greedy policy to finish.
    pub horizon: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LineState {
    pub spiders: [usize; 2],
    pub alive: [bool; 2],
}

/// Deterministic line pursuit: each spider steps one unit left or right per
/// stage, a fly is captured when a spider ends a stage on it, and every
/// stage with a fly still alive costs 1.
#[derive(Clone, Debug)]
pub struct LinePursuit {
    params: LinePursuitParams,
    horizon: usize,
    initial: usize,
}

impl LinePursuit {
    pub fn new(params: LinePursuitParams) -> Result<Self> {
        if params.length == 0 {
            return Err(Error::InvalidParams("line length must be positive".into()));
        }
        let on_line = |p: usize| p <= params.length;
        if !params
            .spiders
            .iter()
            .chain(&params.flies)
            .all(|&p| on_line(p))
        {
            return Err(Error::InvalidParams(format!(
                "positions {:?} / {:?} must lie within 0..={}",
                params.spiders, params.flies, params.length
            )));
        }
        let horizon = params.horizon.unwrap_or(2 * params.length + 2);
        let mut model = Self {
            params,
            horizon,
            initial: 0,
        };
        let spiders = model.params.spiders;
        model.initial = model.encode(&LineState {
            spiders,
            alive: model.params.flies.map(|f| !spiders.contains(&f)),
        });
        Ok(model)
    }

    pub fn params(&self) -> &LinePursuitParams {
        &self.params
    }

    fn positions(&self) -> usize {
        self.params.length + 1
    }

    pub fn encode(&self, s: &LineState) -> usize {
        let p = self.positions();
        ((s.spiders[0] * p + s.spiders[1]) * 2 + s.alive[0] as usize) * 2 + s.alive[1] as usize
    }

    pub fn decode(&self, index: usize) -> LineState {
        let p = self.positions();
        let alive1 = index % 2 == 1;
        let alive0 = (index / 2) % 2 == 1;
        let spiders = index / 4;
        LineState {
            spiders: [spiders / p, spiders % p],
            alive: [alive0, alive1],
        }
    }

    /// True when no alive fly sits under a spider.
    pub fn is_consistent(&self, s: &LineState) -> bool {
        (0..2).all(|i| !(s.alive[i] && s.spiders.contains(&self.params.flies[i])))
    }

    fn moves(&self, position: usize) -> &'static [usize] {
        if position == 0 {
            &[RIGHT]
        } else if position == self.params.length {
            &[LEFT]
        } else {
            &[LEFT, RIGHT]
        }
    }
}

impl FiniteHorizonModel for LinePursuit {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn agent_count(&self) -> usize {
        2
    }

    fn state_count(&self, _stage: usize) -> usize {
        self.positions() * self.positions() * 4
    }

    fn control_set(&self, _stage: usize, state: usize, agent: usize) -> Cow<'_, [usize]> {
        Cow::Borrowed(self.moves(self.decode(state).spiders[agent]))
    }

    fn outcomes(&self, _stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome> {
        let s = self.decode(state);
        if !s.alive.iter().any(|&a| a) {
            return vec![Outcome {
                disturbance: 0,
                probability: 1.0,
                next_state: state,
                cost: 0.0,
            }];
        }
        let spiders = [0, 1].map(|i| match control.component(i) {
            LEFT => s.spiders[i] - 1,
            _ => s.spiders[i] + 1,
        });
        let alive = [0, 1].map(|i| s.alive[i] && !spiders.contains(&self.params.flies[i]));
        vec![Outcome {
            disturbance: 0,
            probability: 1.0,
            next_state: self.encode(&LineState { spiders, alive }),
            cost: 1.0,
        }]
    }

    fn terminal_cost(&self, _state: usize) -> f64 {
        0.0
    }

    fn initial_state(&self) -> Option<usize> {
        Some(self.initial)
    }

    fn state_label(&self, _stage: usize, state: usize) -> String {
        let s = self.decode(state);
        format!(
            "spiders={},{} alive={}{}",
            s.spiders[0], s.spiders[1], s.alive[0] as u8, s.alive[1] as u8
        )
    }
}

impl PursuitModel for LinePursuit {
    /// One unit towards the nearest alive fly; on a distance tie, towards
    /// the fly on the right.
    fn greedy_control(&self, _stage: usize, state: usize) -> FactoredControl {
        let s = self.decode(state);
        let flies = self.params.flies;
        FactoredControl::new(
            (0..2)
                .map(|i| {
                    let pos = s.spiders[i];
                    let target = (0..2)
                        .filter(|&f| s.alive[f])
                        .map(|f| flies[f])
                        .min_by_key(|&f| (pos.abs_diff(f), std::cmp::Reverse(f)));
                    match target {
                        Some(f) if f > pos => RIGHT,
                        Some(f) if f < pos => LEFT,
                        _ => self.moves(pos)[0],
                    }
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_induction, evaluate_policy_finite};
    use crate::env::greedy_base_policy;
    use crate::model::validate_finite;

    fn model(spiders: [usize; 2], flies: [usize; 2]) -> LinePursuit {
        LinePursuit::new(LinePursuitParams {
            length: 10,
            spiders,
            flies,
            horizon: None,
        })
        .unwrap()
    }

    #[test]
    fn encode_round_trip() {
        let m = model([5, 6], [0, 10]);
        for i in 0..m.state_count(0) {
            assert_eq!(m.encode(&m.decode(i)), i);
        }
    }

    #[test]
    fn model_is_valid() {
        assert!(validate_finite(&model([5, 6], [0, 10])).is_valid());
    }

    #[test]
    fn optimal_capture_time() {
        let m = model([5, 6], [0, 10]);
        let (values, _) = backward_induction(&m).unwrap();
        assert_eq!(values.at(0, m.initial_state().unwrap()), 5.0);
    }

    #[test]
    fn greedy_tie_moves_right() {
        let m = model([5, 6], [0, 10]);
        let x = m.initial_state().unwrap();
        assert_eq!(m.greedy_control(0, x).component(0), RIGHT);
        assert_eq!(m.greedy_control(0, x).component(1), RIGHT);
    }

    #[test]
    fn greedy_moves_both_spiders_the_same_way() {
        let m = model([1, 2], [5, 8]);
        let x = m.initial_state().unwrap();
        assert_eq!(m.greedy_control(0, x).components(), &[RIGHT, RIGHT]);
    }

    #[test]
    fn adjacent_spider_steps_onto_fly() {
        let m = model([4, 9], [3, 10]);
        let x = m.initial_state().unwrap();
        let u = m.greedy_control(0, x);
        assert_eq!(u.components(), &[LEFT, RIGHT]);
        let next = m.decode(m.outcomes(0, x, &u)[0].next_state);
        assert_eq!(next.alive, [false, false]);
    }

    #[test]
    fn colocated_fly_is_captured_at_start() {
        let m = model([0, 6], [0, 10]);
        let s = m.decode(m.initial_state().unwrap());
        assert_eq!(s.alive, [false, true]);
        let (values, _) = backward_induction(&m).unwrap();
        assert_eq!(values.at(0, m.initial_state().unwrap()), 4.0);
    }

    #[test]
    fn greedy_is_no_better_than_optimal() {
        let m = model([5, 6], [0, 10]);
        let x = m.initial_state().unwrap();
        let (optimal, _) = backward_induction(&m).unwrap();
        let greedy = evaluate_policy_finite(&m, &greedy_base_policy(&m)).unwrap();
        assert!(greedy.at(0, x) >= optimal.at(0, x));
        // both spiders chase fly 2 first, then spider 1 walks back to 0
        assert_eq!(greedy.at(0, x), 13.0);
    }

    #[test]
    fn rejects_off_line_positions() {
        assert!(LinePursuit::new(LinePursuitParams {
            length: 10,
            spiders: [11, 0],
            flies: [0, 10],
            horizon: None,
        })
        .is_err());
    }
}
