use std::borrow::Cow;

use super::PursuitModel;
use crate::error::{Error, Result};
use crate::model::{FactoredControl, FiniteHorizonModel, Outcome, PROBABILITY_TOLERANCE};

/// Spider moves, in tie-breaking preference order.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

/// How the fly moves each stage, independently of the spiders.
#[derive(Clone, Debug, PartialEq)]
pub enum FlyMotion {
    Stationary,
    /// Stays with `stay_probability`, otherwise moves to a uniformly chosen
    /// on-grid neighbour.
    RandomWalk {
        stay_probability: f64,
    },
    /// Per-cell distribution over destination cells (`row * width + col`).
    Custom(Vec<Vec<(usize, f64)>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPursuitParams {
    pub width: usize,
    pub height: usize,
    /// `(col, row)` per spider; the spider count is the agent count.
    pub spiders: Vec<(usize, usize)>,
    pub fly: (usize, usize),
    pub fly_motion: FlyMotion,
    pub move_cost: f64,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub spiders: Vec<usize>,
    pub fly: usize,
    pub captured: bool,
}

/// m spiders chasing one fly on a grid. The fly is captured when it shares
/// a cell with a spider at the end of a stage; passing through each other
/// does not count. Each stage before capture costs `move_cost`; the
/// captured state is absorbing and free.
#[derive(Clone, Debug)]
pub struct GridPursuit {
    params: GridPursuitParams,
    cells: usize,
    state_count: usize,
    fly_moves: Vec<Vec<(usize, f64)>>,
    initial: usize,
}

impl GridPursuit {
    pub fn new(params: GridPursuitParams) -> Result<Self> {
        let (w, h) = (params.width, params.height);
        if w == 0 || h == 0 {
            return Err(Error::InvalidParams(
                "grid dimensions must be positive".into(),
            ));
        }
        if params.spiders.is_empty() {
            return Err(Error::InvalidParams(
                "at least one spider is required".into(),
            ));
        }
        let on_grid = |&(c, r): &(usize, usize)| c < w && r < h;
        if !params.spiders.iter().all(on_grid) || !on_grid(&params.fly) {
            return Err(Error::InvalidParams(format!(
                "positions must lie on the {w}x{h} grid"
            )));
        }
        let cells = w * h;
        let state_count = (0..=params.spiders.len())
            .try_fold(2usize, |acc, _| acc.checked_mul(cells))
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::InvalidParams("grid state space too large".into()))?;
        let fly_moves = match &params.fly_motion {
            FlyMotion::Stationary => (0..cells).map(|c| vec![(c, 1.0)]).collect(),
            FlyMotion::RandomWalk { stay_probability } => {
                let p = *stay_probability;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParams(format!("stay probability {p}")));
                }
                (0..cells)
                    .map(|c| {
                        let nbrs: Vec<usize> = [UP, DOWN, LEFT, RIGHT]
                            .iter()
                            .filter_map(|&m| step(w, h, c, m))
                            .collect();
                        let mut row = vec![(c, p)];
                        let each = (1.0 - p) / nbrs.len() as f64;
                        row.extend(nbrs.into_iter().map(|n| (n, each)));
                        row
                    })
                    .collect()
            }
            FlyMotion::Custom(rows) => {
                if rows.len() != cells {
                    return Err(Error::InvalidParams(format!(
                        "fly motion has {} rows for {cells} cells",
                        rows.len()
                    )));
                }
                for (c, row) in rows.iter().enumerate() {
                    let sum: f64 = row.iter().map(|(_, p)| p).sum();
                    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE
                        || row.iter().any(|&(d, p)| d >= cells || p < 0.0)
                    {
                        return Err(Error::InvalidParams(format!(
                            "fly motion row {c} is invalid"
                        )));
                    }
                }
                rows.clone()
            }
        };
        let mut model = Self {
            cells,
            state_count,
            fly_moves,
            initial: 0,
            params,
        };
        let spiders: Vec<usize> = model
            .params
            .spiders
            .iter()
            .map(|&p| model.cell(p))
            .collect();
        let fly = model.cell(model.params.fly);
        let captured = spiders.contains(&fly);
        model.initial = model.encode(&GridState {
            spiders,
            fly,
            captured,
        });
        Ok(model)
    }

    pub fn params(&self) -> &GridPursuitParams {
        &self.params
    }

    pub fn cell(&self, (col, row): (usize, usize)) -> usize {
        row * self.params.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.params.width, cell / self.params.width)
    }

    pub fn encode(&self, s: &GridState) -> usize {
        let mut index = s.captured as usize;
        index = index * self.cells + s.fly;
        for &c in &s.spiders {
            index = index * self.cells + c;
        }
        index
    }

    pub fn decode(&self, mut index: usize) -> GridState {
        let m = self.params.spiders.len();
        let mut spiders = vec![0; m];
        for slot in spiders.iter_mut().rev() {
            *slot = index % self.cells;
            index /= self.cells;
        }
        let fly = index % self.cells;
        let captured = index / self.cells == 1;
        GridState {
            spiders,
            fly,
            captured,
        }
    }

    fn moves(&self, cell: usize) -> Vec<usize> {
        [UP, DOWN, LEFT, RIGHT, STAY]
            .into_iter()
            .filter(|&m| step(self.params.width, self.params.height, cell, m).is_some())
            .collect()
    }

    fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ac, ar) = self.coords(a);
        let (bc, br) = self.coords(b);
        ac.abs_diff(bc) + ar.abs_diff(br)
    }
}

fn step(width: usize, height: usize, cell: usize, mv: usize) -> Option<usize> {
    let (c, r) = (cell % width, cell / width);
    let (c, r) = match mv {
        UP => (c, r.checked_sub(1)?),
        DOWN => (c, r + 1),
        LEFT => (c.checked_sub(1)?, r),
        RIGHT => (c + 1, r),
        STAY => (c, r),
        _ => return None,
    };
    (c < width && r < height).then_some(r * width + c)
}

impl FiniteHorizonModel for GridPursuit {
    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn agent_count(&self) -> usize {
        self.params.spiders.len()
    }

    fn state_count(&self, _stage: usize) -> usize {
        self.state_count
    }

    fn control_set(&self, _stage: usize, state: usize, agent: usize) -> Cow<'_, [usize]> {
        Cow::Owned(self.moves(self.decode(state).spiders[agent]))
    }

    fn outcomes(&self, _stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome> {
        let s = self.decode(state);
        if s.captured {
            return vec![Outcome {
                disturbance: 0,
                probability: 1.0,
                next_state: state,
                cost: 0.0,
            }];
        }
        let (w, h) = (self.params.width, self.params.height);
        let spiders: Vec<usize> = s
            .spiders
            .iter()
            .zip(control.components())
            .map(|(&c, &m)| step(w, h, c, m).expect("move leaves the grid"))
            .collect();
        self.fly_moves[s.fly]
            .iter()
            .enumerate()
            .map(|(w, &(fly, probability))| Outcome {
                disturbance: w,
                probability,
                next_state: self.encode(&GridState {
                    captured: spiders.contains(&fly),
                    spiders: spiders.clone(),
                    fly,
                }),
                cost: self.params.move_cost,
            })
            .collect()
    }

    fn terminal_cost(&self, _state: usize) -> f64 {
        0.0
    }

    fn initial_state(&self) -> Option<usize> {
        Some(self.initial)
    }

    fn state_label(&self, _stage: usize, state: usize) -> String {
        let s = self.decode(state);
        let spiders: Vec<String> = s
            .spiders
            .iter()
            .map(|&c| {
                let (col, row) = self.coords(c);
                format!("({col},{row})")
            })
            .collect();
        let (fc, fr) = self.coords(s.fly);
        format!(
            "spiders={} fly=({fc},{fr}) captured={}",
            spiders.join(""),
            s.captured as u8
        )
    }
}

impl PursuitModel for GridPursuit {
    /// Each spider takes a step that minimizes its Manhattan distance to the
    /// fly, preferring up, down, left, right, stay on ties.
    fn greedy_control(&self, _stage: usize, state: usize) -> FactoredControl {
        let s = self.decode(state);
        let (w, h) = (self.params.width, self.params.height);
        FactoredControl::new(
            s.spiders
                .iter()
                .map(|&c| {
                    if s.captured {
                        return STAY;
                    }
                    self.moves(c)
                        .into_iter()
                        .min_by_key(|&m| self.manhattan(step(w, h, c, m).unwrap(), s.fly))
                        .unwrap_or(STAY)
                })
                .collect(),
        )
    }
}
