use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSet {
    /// Up, down, left, right.
    #[default]
    Four,
    /// Left and right only.
    Two,
}

impl ActionSet {
    pub fn moves(self) -> &'static [Move] {
        match self {
            ActionSet::Four => &[Move::Up, Move::Down, Move::Left, Move::Right],
            ActionSet::Two => &[Move::Left, Move::Right],
        }
    }
}

/// Stochastic drift: after the agent's move, with probability `p_wind` it is
/// pushed one further cell in `direction` (clamped at the walls). Applies in
/// the listed columns, or everywhere when `columns` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wind {
    pub p_wind: f64,
    pub direction: Move,
    #[serde(default)]
    pub columns: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    /// `(x, y)` of the goal cell.
    pub goal: (usize, usize),
    pub start_cells: Vec<(usize, usize)>,
    #[serde(default)]
    pub wind: Option<Wind>,
    #[serde(default)]
    pub actions: ActionSet,
    /// Probability that the executed move is drawn uniformly from the action set.
    #[serde(default)]
    pub slip: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Route the goal into an extra absorbing state instead of making the
    /// goal cell itself absorbing.
    #[serde(default)]
    pub extra_terminal: bool,
}

fn default_gamma() -> f64 {
    0.9
}

impl GridworldSpec {
    /// The 7x7 benchmark: goal in the centre, uniform start over every other cell.
    pub fn seven_by_seven() -> Self {
        let goal = (3, 3);
        Self {
            width: 7,
            height: 7,
            goal,
            start_cells: (0..7)
                .flat_map(|y| (0..7).map(move |x| (x, y)))
                .filter(|&c| c != goal)
                .collect(),
            wind: None,
            actions: ActionSet::Four,
            slip: 0.0,
            gamma: default_gamma(),
            extra_terminal: false,
        }
    }

    pub fn with_wind(mut self, wind: Wind) -> Self {
        self.wind = Some(wind);
        self
    }

    pub fn index(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    /// `height x width` table of per-cell values, row `y`, column `x`.
    pub fn to_grid(&self, per_state: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((self.height, self.width), |(y, x)| per_state[self.index((x, y))])
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Manhattan distance from `cell` to the goal: the shortest path length
    /// under 4-connected moves without wind.
    pub fn shortest_path_len(&self, (x, y): (usize, usize)) -> usize {
        x.abs_diff(self.goal.0) + y.abs_diff(self.goal.1)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("empty grid".into()));
        }
        let inside = |(x, y): (usize, usize)| x < self.width && y < self.height;
        if !inside(self.goal) {
            return Err(Error::InvalidSpec(format!("goal {:?} outside grid", self.goal)));
        }
        if self.start_cells.is_empty() {
            return Err(Error::InvalidSpec("start_cells is empty".into()));
        }
        for &c in &self.start_cells {
            if !inside(c) {
                return Err(Error::InvalidSpec(format!("start cell {c:?} outside grid")));
            }
            if c == self.goal {
                return Err(Error::InvalidSpec("start cells must exclude the goal".into()));
            }
        }
        if let Some(w) = &self.wind {
            if !(0.0..=1.0).contains(&w.p_wind) {
                return Err(Error::InvalidSpec(format!("p_wind {} outside [0,1]", w.p_wind)));
            }
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::InvalidSpec(format!("slip {} outside [0,1]", self.slip)));
        }
        Ok(())
    }

    fn step(&self, (x, y): (usize, usize), m: Move) -> (usize, usize) {
        let (dx, dy) = m.delta();
        let nx = (x as isize + dx).clamp(0, self.width as isize - 1) as usize;
        let ny = (y as isize + dy).clamp(0, self.height as isize - 1) as usize;
        (nx, ny)
    }
}

/// Build the gridworld MDP. The reward of a cell is minus its Euclidean
/// distance to the goal (cell size 1), identical across actions.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let moves = spec.actions.moves();
    let na = moves.len();
    let cells = spec.n_cells();
    let ns = cells + usize::from(spec.extra_terminal);
    let goal = spec.index(spec.goal);
    let absorbing = if spec.extra_terminal { cells } else { goal };

    let mut p = Array3::<f64>::zeros((ns, na, ns));
    for s in 0..cells {
        let here = spec.cell(s);
        for (a, &intended) in moves.iter().enumerate() {
            if s == goal {
                p[[s, a, absorbing]] = 1.0;
                continue;
            }
            // executed move distribution
            let mut outcomes: Vec<(Move, f64)> = vec![(intended, 1.0 - spec.slip)];
            if spec.slip > 0.0 {
                let share = spec.slip / na as f64;
                outcomes.extend(moves.iter().map(|&m| (m, share)));
            }
            let windy = spec.wind.as_ref().filter(|w| {
                w.columns.as_ref().is_none_or(|cols| cols.contains(&here.0))
            });
            for (m, q) in outcomes {
                let landed = spec.step(here, m);
                match windy {
                    Some(w) => {
                        p[[s, a, spec.index(landed)]] += (1.0 - w.p_wind) * q;
                        let pushed = spec.step(landed, w.direction);
                        p[[s, a, spec.index(pushed)]] += w.p_wind * q;
                    }
                    None => p[[s, a, spec.index(landed)]] += q,
                }
            }
        }
    }
    if spec.extra_terminal {
        for a in 0..na {
            p[[cells, a, cells]] = 1.0;
        }
    }

    let mut eta = Array1::zeros(ns);
    let w = 1.0 / spec.start_cells.len() as f64;
    for &c in &spec.start_cells {
        eta[spec.index(c)] += w;
    }

    let mut reward = Array2::zeros((ns, na));
    for s in 0..cells {
        let (x, y) = spec.cell(s);
        let dx = x as f64 - spec.goal.0 as f64;
        let dy = y as f64 - spec.goal.1 as f64;
        let r = -(dx * dx + dy * dy).sqrt();
        reward.row_mut(s).fill(r);
    }

    let mut terminal = vec![false; ns];
    terminal[absorbing] = true;
    TabularMdp::new(p, eta, spec.gamma, Some(reward), Some(terminal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_by_seven_shape_and_reward() {
        let spec = GridworldSpec::seven_by_seven();
        let mdp = build_gridworld(&spec).unwrap();
        assert_eq!(mdp.n_states(), 49);
        assert_eq!(mdp.n_actions(), 4);
        let r = mdp.true_reward().unwrap();
        for s in 0..49 {
            let (x, y) = spec.cell(s);
            let d = ((x as f64 - 3.0).powi(2) + (y as f64 - 3.0).powi(2)).sqrt();
            for a in 0..4 {
                assert_eq!(r[[s, a]], -d);
            }
        }
        assert!(mdp.is_terminal(spec.index(spec.goal)));
        assert!((mdp.initial_dist().sum() - 1.0).abs() < 1e-12);
        assert_eq!(mdp.initial_dist()[spec.index(spec.goal)], 0.0);
    }

    #[test]
    fn three_by_three_centre_goal_distances() {
        let spec = GridworldSpec {
            width: 3,
            height: 3,
            goal: (1, 1),
            start_cells: vec![(0, 0)],
            ..GridworldSpec::seven_by_seven()
        };
        let mdp = build_gridworld(&spec).unwrap();
        let r = mdp.true_reward().unwrap();
        assert_eq!(r[[spec.index((1, 1)), 0]], 0.0);
        assert_eq!(r[[spec.index((0, 0)), 2]], -(2f64.sqrt()));
        assert_eq!(r[[spec.index((2, 1)), 1]], -1.0);
    }

    #[test]
    fn corner_goal_reward_matches_euclidean() {
        let spec = GridworldSpec {
            goal: (0, 0),
            start_cells: vec![(6, 6)],
            ..GridworldSpec::seven_by_seven()
        };
        let mdp = build_gridworld(&spec).unwrap();
        let r = mdp.true_reward().unwrap();
        assert_eq!(r[[spec.index((6, 6)), 0]], -(72f64.sqrt()));
        assert_eq!(r[[spec.index((3, 4)), 3]], -5.0);
    }

    #[test]
    fn degenerate_specs_rejected() {
        let one = GridworldSpec {
            width: 1,
            height: 1,
            goal: (0, 0),
            start_cells: vec![(0, 0)],
            ..GridworldSpec::seven_by_seven()
        };
        assert!(build_gridworld(&one).is_err());
        let outside = GridworldSpec {
            goal: (7, 0),
            ..GridworldSpec::seven_by_seven()
        };
        assert!(build_gridworld(&outside).is_err());
        let empty = GridworldSpec {
            start_cells: vec![],
            ..GridworldSpec::seven_by_seven()
        };
        assert!(build_gridworld(&empty).is_err());
        let bad_wind = GridworldSpec::seven_by_seven().with_wind(Wind {
            p_wind: 1.5,
            direction: Move::Up,
            columns: None,
        });
        assert!(build_gridworld(&bad_wind).is_err());
    }

    #[test]
    fn zero_wind_is_bitwise_no_wind() {
        let base = GridworldSpec::seven_by_seven();
        let calm = base.clone().with_wind(Wind {
            p_wind: 0.0,
            direction: Move::Down,
            columns: None,
        });
        let a = build_gridworld(&base).unwrap();
        let b = build_gridworld(&calm).unwrap();
        assert_eq!(a.transition(), b.transition());
    }

    #[test]
    fn wind_pushes_in_listed_columns_only() {
        let spec = GridworldSpec::seven_by_seven().with_wind(Wind {
            p_wind: 0.2,
            direction: Move::Down,
            columns: Some(vec![0]),
        });
        let mdp = build_gridworld(&spec).unwrap();
        let p = mdp.transition();
        let right = 3;
        // column 0: moving right from (0,0) lands (1,0) or is pushed to (1,1)
        let s = spec.index((0, 0));
        assert!((p[[s, right, spec.index((1, 0))]] - 0.8).abs() < 1e-15);
        assert!((p[[s, right, spec.index((1, 1))]] - 0.2).abs() < 1e-15);
        // column 1 is calm
        let s = spec.index((1, 0));
        assert_eq!(p[[s, right, spec.index((2, 0))]], 1.0);
    }

    #[test]
    fn extra_terminal_adds_absorbing_state() {
        let spec = GridworldSpec {
            extra_terminal: true,
            ..GridworldSpec::seven_by_seven()
        };
        let mdp = build_gridworld(&spec).unwrap();
        assert_eq!(mdp.n_states(), 50);
        assert!(mdp.is_terminal(49));
        assert!(!mdp.is_terminal(spec.index(spec.goal)));
        assert_eq!(mdp.transition()[[spec.index(spec.goal), 0, 49]], 1.0);
        assert_eq!(mdp.true_reward().unwrap()[[49, 0]], 0.0);
    }

    #[test]
    fn two_action_set_and_slip() {
        let spec = GridworldSpec {
            actions: ActionSet::Two,
            slip: 0.5,
            ..GridworldSpec::seven_by_seven()
        };
        let mdp = build_gridworld(&spec).unwrap();
        assert_eq!(mdp.n_actions(), 2);
        let s = spec.index((2, 0));
        // left intended: 0.5 + 0.25 left, 0.25 right
        assert!((mdp.transition()[[s, 0, spec.index((1, 0))]] - 0.75).abs() < 1e-15);
        assert!((mdp.transition()[[s, 0, spec.index((3, 0))]] - 0.25).abs() < 1e-15);
    }
}
