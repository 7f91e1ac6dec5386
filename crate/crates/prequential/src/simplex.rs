//! Dense simplex solver for two-player zero-sum matrix games.
//!
//! The game `max_x min_y x^T A y` over mixed strategies reduces to a pair of
//! dual linear programs. After shifting `A` entrywise positive, the column
//! player's program `max 1^T w, A w <= 1, w >= 0` starts feasible at the
//! slack basis, and the row player's strategy falls out of the optimal
//! tableau's reduced costs. Intended for the small matrices this crate
//! builds (tens of strategies per side).

/// Primal/dual pair solved from one tableau.
#[derive(Clone, Debug)]
pub struct MatrixGameLp {
    /// Row player's optimal mixture (maximizer).
    pub row_strategy: Vec<f64>,
    /// Column player's optimal mixture (minimizer).
    pub col_strategy: Vec<f64>,
    /// Game value under the original (unshifted) payoffs.
    pub value: f64,
}

/// Solves the matrix game by simplex. `a[i][j]` is the row player's payoff
/// when row `i` meets column `j`. Panics on empty or ragged input.
pub fn solve_matrix_game(a: &[Vec<f64>]) -> MatrixGameLp {
    let rows = a.len();
    assert!(rows > 0, "empty payoff matrix");
    let cols = a[0].len();
    assert!(cols > 0 && a.iter().all(|r| r.len() == cols), "ragged payoff matrix");

    let min_entry = a
        .iter()
        .flat_map(|r| r.iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;

    // Tableau: columns [w_0..w_{cols-1} | s_0..s_{rows-1} | rhs],
    // one row per constraint plus the objective row (maximize sum w).
    let width = cols + rows + 1;
    let mut t = vec![vec![0.0; width]; rows + 1];
    for i in 0..rows {
        for j in 0..cols {
            t[i][j] = a[i][j] + shift;
        }
        t[i][cols + i] = 1.0;
        t[i][width - 1] = 1.0;
    }
    for j in 0..cols {
        t[rows][j] = -1.0;
    }

    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    let tol = 1e-11;
    let max_pivots = 200 * (rows + cols) + 1000;
    let mut pivots = 0usize;

    loop {
        // Entering column: most negative reduced cost (Dantzig); switch to
        // Bland's lowest-index rule if the pivot count suggests cycling.
        let bland = pivots > 50 * (rows + cols);
        let mut enter: Option<usize> = None;
        let mut best = -tol;
        for j in 0..width - 1 {
            let c = t[rows][j];
            if c < -tol {
                if bland {
                    enter = Some(j);
                    break;
                }
                if c < best {
                    best = c;
                    enter = Some(j);
                }
            }
        }
        let Some(enter) = enter else { break };

        // Ratio test, lowest row index on ties.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..rows {
            if t[i][enter] > tol {
                let ratio = t[i][width - 1] / t[i][enter];
                if ratio < best_ratio - 1e-15 {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave.expect("game LP is bounded: shifted payoffs are positive");

        // Pivot.
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..=rows {
            if i != leave {
                let factor = t[i][enter];
                if factor != 0.0 {
                    for j in 0..width {
                        t[i][j] -= factor * t[leave][j];
                    }
                }
            }
        }
        basis[leave] = enter;

        pivots += 1;
        assert!(pivots <= max_pivots, "simplex failed to terminate");
    }

    // Column player's variables from the basis.
    let mut w = vec![0.0; cols];
    for (i, &b) in basis.iter().enumerate() {
        if b < cols {
            w[b] = t[i][width - 1].max(0.0);
        }
    }
    // Row player's variables from the slack columns' reduced costs.
    let mut u = vec![0.0; rows];
    for i in 0..rows {
        u[i] = t[rows][cols + i].max(0.0);
    }

    let w_sum: f64 = w.iter().sum();
    let u_sum: f64 = u.iter().sum();
    assert!(w_sum > 0.0 && u_sum > 0.0, "degenerate game LP solution");

    MatrixGameLp {
        row_strategy: u.iter().map(|v| v / u_sum).collect(),
        col_strategy: w.iter().map(|v| v / w_sum).collect(),
        value: 1.0 / w_sum - shift,
    }
}
