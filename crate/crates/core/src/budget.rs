//! Parameter-budget arithmetic for B-spline KANs and their single-parameter
//! counterparts.
//!
//! A B-spline KAN edge with grid size `G` and spline order `S` costs
//! `G + S + 2` parameters (efficient-kan accounting); a SKAN edge costs one.

use crate::error::{Result, SkanError};

/// Spline order used for the reference comparisons.
pub const DEFAULT_SPLINE_ORDER: usize = 3;
/// Parameter budget of the reference comparisons.
pub const DEFAULT_BUDGET: usize = 80_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplBudgetSpec {
    pub dims: Vec<usize>,
    pub grid_size: usize,
    pub spline_order: usize,
}

impl SplBudgetSpec {
    pub fn new(dims: Vec<usize>, grid_size: usize, spline_order: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(SkanError::Config(
                "a spline KAN needs at least an input and an output layer".into(),
            ));
        }
        if grid_size < 1 {
            return Err(SkanError::Config("grid size must be at least 1".into()));
        }
        Ok(Self {
            dims,
            grid_size,
            spline_order,
        })
    }

    /// Parameters per edge.
    pub fn edge_cost(&self) -> usize {
        edge_cost(self.grid_size, self.spline_order)
    }
}

#[inline]
fn edge_cost(grid_size: usize, spline_order: usize) -> usize {
    grid_size + spline_order + 2
}

/// `Σ_l n_in·n_out·(grid + order + 2)`.
pub fn spl_param_count(spec: &SplBudgetSpec) -> usize {
    spec.dims
        .windows(2)
        .map(|w| w[0] * w[1] * spec.edge_cost())
        .sum()
}

/// Hidden width of a two-layer spline KAN that spends `budget` parameters:
/// `⌈budget / ((n_in + n_out)·(grid + order + 2))⌉`.
pub fn spl_hidden_size(
    budget: usize,
    n_in: usize,
    n_out: usize,
    grid_size: usize,
    spline_order: usize,
) -> Result<usize> {
    let denom = (n_in + n_out) * edge_cost(grid_size, spline_order);
    if denom == 0 {
        return Err(SkanError::Config("n_in + n_out must be positive".into()));
    }
    Ok(budget.div_ceil(denom))
}

/// SKAN analogue of [`spl_hidden_size`]: `⌈budget / (n_in + n_out)⌉`.
pub fn skan_hidden_size(budget: usize, n_in: usize, n_out: usize) -> Result<usize> {
    if n_in + n_out == 0 {
        return Err(SkanError::Config("n_in + n_out must be positive".into()));
    }
    Ok(budget.div_ceil(n_in + n_out))
}

/// One row of the `budget` report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetRow {
    pub grid_size: usize,
    pub hidden: usize,
    /// Actual parameter count of `[n_in, hidden, n_out]` at this grid size.
    pub params: usize,
}

/// Hidden sizes for each grid size in `grids`.
pub fn budget_table(
    budget: usize,
    n_in: usize,
    n_out: usize,
    spline_order: usize,
    grids: impl IntoIterator<Item = usize>,
) -> Result<Vec<BudgetRow>> {
    grids
        .into_iter()
        .map(|g| {
            let hidden = spl_hidden_size(budget, n_in, n_out, g, spline_order)?;
            let params = (n_in + n_out) * hidden * edge_cost(g, spline_order);
            Ok(BudgetRow {
                grid_size: g,
                hidden,
                params,
            })
        })
        .collect()
}
