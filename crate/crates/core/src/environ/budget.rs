use crate::error::{Error, Result};
use crate::netmodel::CostModel;

/// Budget bookkeeping at one decision of an episode.
///
/// For the decision that prunes layer `i`, with earlier ratios committed:
/// - `done`: cost of layers `< i`, fully determined by committed ratios;
/// - `rest`: original FLOPs of layers `> i`;
/// - `reserve`: least possible cost of layers `> i` whose cost does not
///   depend on this decision (every later prunable layer at `a_floor`);
/// - `unit_cost`: cost that scales with this decision's ratio: the layer's
///   own `f_i * r_in` plus the floor cost of consumers of its outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetState {
    pub total: f64,
    pub budget: f64,
    pub done: f64,
    pub rest: f64,
    pub reserve: f64,
    pub unit_cost: f64,
}

impl BudgetState {
    pub fn at(cost: &CostModel, alpha: f64, committed: &[f64], a_floor: f64) -> Self {
        let i = committed.len();
        let layers = cost.network().len();
        let f = cost.layer_flops();
        let floor_of = |j: usize| if cost.is_prunable(j) { a_floor } else { 1.0 };
        let done = (0..i).map(|j| cost.layer_cost(j, |k| committed[k])).sum();
        let r_in = cost.input_source(i).map_or(1.0, |p| committed[p]);
        let mut unit_cost = f[i] * r_in;
        let mut reserve = 0.0;
        for j in i + 1..layers {
            match cost.input_source(j) {
                Some(p) if p == i => unit_cost += f[j] * floor_of(j),
                Some(p) if p < i => reserve += f[j] * floor_of(j) * committed[p],
                Some(p) => reserve += f[j] * floor_of(j) * floor_of(p),
                None => reserve += f[j] * floor_of(j),
            }
        }
        let total = cost.total();
        Self {
            total,
            budget: alpha * total,
            done,
            rest: f[i + 1..].iter().sum(),
            reserve,
            unit_cost,
        }
    }

    /// Budget left for the cost that scales with this decision.
    pub fn headroom(&self) -> f64 {
        self.budget - self.done - self.reserve
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    /// The budget left no room above `a_floor`.
    pub tight: bool,
}

/// Limits `a` so the episode can still finish within budget with every
/// later layer at `a_floor`: `a' = clamp(a, a_floor, min(1, m / g))` with
/// headroom `m` and unit cost `g`.
pub fn clamp_action(a: f64, budget: &BudgetState, a_floor: f64) -> Clamped {
    let m = budget.headroom();
    if m <= 0.0 {
        return Clamped {
            value: a_floor,
            tight: true,
        };
    }
    let cap = if budget.unit_cost > 0.0 {
        (m / budget.unit_cost).min(1.0)
    } else {
        1.0
    };
    if cap <= a_floor {
        return Clamped {
            value: a_floor,
            tight: true,
        };
    }
    Clamped {
        value: a.clamp(a_floor, cap),
        tight: false,
    }
}

/// Fails when even all-`a_floor` ratios exceed the budget.
pub fn check_feasible(cost: &CostModel, alpha: f64, a_floor: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    let floor = vec![a_floor; cost.prunable()];
    let least = cost.continuous_flops(&floor);
    if least > alpha * cost.total() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "budget alpha = {alpha} is infeasible: with every ratio at {a_floor} the network still costs {:.4} of its FLOPs",
            least / cost.total()
        )));
    }
    Ok(())
}
