//! Max-min path algebra on nonnegative square matrices.
//!
//! Adjacency matrices follow the child-row convention: entry (i, j) is the
//! weight of the edge j -> i. Entry (q2, q1) of a closure therefore
//! summarizes the directed paths from q1 to q2. On 0/1 matrices the
//! max-min product coincides with the Boolean matrix product, so the same
//! operators answer weighted path-strength and plain reachability queries.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Square matrix with nonnegative entries, the carrier of the max-min
/// algebra. Callers take absolute values before entering the algebra.
pub type NonNegMatrix = Array2<f64>;

/// Largest dimension `path_oracle` accepts; simple-path enumeration grows
/// factorially beyond this.
pub const ORACLE_DIM_LIMIT: usize = 12;

fn square_dim(a: &Array2<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn matching_square_dims(a: &Array2<f64>, b: &Array2<f64>) -> Result<usize> {
    let n = square_dim(a)?;
    if b.dim() != a.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} x {} vs {} x {}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    square_dim(b)?;
    Ok(n)
}

/// Max-min product: `out[i][j] = max_k min(a[i][k], b[k][j])`.
///
/// Composes path strengths: if `a` holds the best k-step strengths and `b`
/// the edge weights, the product holds the best (k+1)-step strengths.
pub fn bool_mult(a: &NonNegMatrix, b: &NonNegMatrix) -> Result<NonNegMatrix> {
    let n = matching_square_dims(a, b)?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            for k in 0..n {
                let v = a[[i, k]].min(b[[k, j]]);
                if v > best {
                    best = v;
                }
            }
            out[[i, j]] = best;
        }
    }
    Ok(out)
}

/// Elementwise max, the additive operator of the algebra.
pub fn bool_add(a: &NonNegMatrix, b: &NonNegMatrix) -> Result<NonNegMatrix> {
    let n = matching_square_dims(a, b)?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = a[[i, j]].max(b[[i, j]]);
        }
    }
    Ok(out)
}

/// Max-min path closure. Entry (q2, q1) is the maximum over directed paths
/// q1 -> q2 of the minimum edge weight along the path, zero when no path
/// exists. Input entries must be nonnegative; take `|.|` first for signed
/// weight matrices.
///
/// Runs the series `w (+) w^(2) (+) ... (+) w^(k)` up to k = dim - 1, the
/// longest possible simple path, stopping early once a term adds nothing.
pub fn bool_star(w: &NonNegMatrix) -> Result<NonNegMatrix> {
    let n = square_dim(w)?;
    bool_star_terms(w, n.saturating_sub(1).max(1))
}

/// Truncated closure keeping paths of at most `terms` steps. Stops early
/// once a term adds nothing; by monotonicity no later term can either.
pub fn bool_star_terms(w: &NonNegMatrix, terms: usize) -> Result<NonNegMatrix> {
    square_dim(w)?;
    debug_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
    let mut acc = w.clone();
    let mut power = w.clone();
    for _ in 2..=terms {
        power = bool_mult(&power, w)?;
        let next = bool_add(&acc, &power)?;
        // max/min only select existing values, so exact comparison is sound.
        if next == acc {
            return Ok(acc);
        }
        acc = next;
    }
    Ok(acc)
}

/// Binary support graph: 1.0 where `|w|` strictly exceeds `c`, else 0.0.
pub fn threshold_binary(w: &Array2<f64>, c: f64) -> Array2<f64> {
    debug_assert!(c >= 0.0);
    w.mapv(|v| if v.abs() > c { 1.0 } else { 0.0 })
}

/// Nodes with a directed path into `j`, read off a closure matrix.
/// Returned indices are ascending and never include `j` itself.
pub fn ancestors(b_star: &NonNegMatrix, j: usize) -> Result<Vec<usize>> {
    let n = square_dim(b_star)?;
    if j >= n {
        return Err(Error::InvalidInput(format!(
            "node index {j} out of range for dimension {n}"
        )));
    }
    Ok((0..n)
        .filter(|&i| i != j && b_star[[j, i]] != 0.0)
        .collect())
}

/// Everything `path_oracle` learns about the paths from q1 to q2.
#[derive(Debug, Clone)]
pub struct PathSummary {
    pub exists: bool,
    /// Max over simple paths of the minimum |edge weight| along the path;
    /// zero when no path exists.
    pub max_min_weight: f64,
    /// Signed product of edge weights along each path, in depth-first
    /// order with neighbors visited in ascending index order.
    pub path_effects: Vec<f64>,
}

/// Exhaustive simple-path enumeration from q1 to q2, the ground truth the
/// algebraic closure is checked against on small graphs.
pub fn path_oracle(w: &Array2<f64>, q1: usize, q2: usize) -> Result<PathSummary> {
    let n = square_dim(w)?;
    if n > ORACLE_DIM_LIMIT {
        return Err(Error::OracleTooLarge {
            dim: n,
            limit: ORACLE_DIM_LIMIT,
        });
    }
    if q1 >= n || q2 >= n {
        return Err(Error::InvalidInput(format!(
            "endpoints ({q1}, {q2}) out of range for dimension {n}"
        )));
    }
    if q1 == q2 {
        return Err(Error::InvalidInput(
            "path enumeration needs distinct endpoints".into(),
        ));
    }

    let mut summary = PathSummary {
        exists: false,
        max_min_weight: 0.0,
        path_effects: Vec::new(),
    };
    let mut visited = vec![false; n];
    visited[q1] = true;
    dfs(w, q1, q2, f64::INFINITY, 1.0, &mut visited, &mut summary);
    Ok(summary)
}

fn dfs(
    w: &Array2<f64>,
    current: usize,
    target: usize,
    min_abs: f64,
    product: f64,
    visited: &mut [bool],
    summary: &mut PathSummary,
) {
    let n = w.nrows();
    for next in 0..n {
        let weight = w[[next, current]];
        if weight == 0.0 || visited[next] {
            continue;
        }
        let min_abs = min_abs.min(weight.abs());
        let product = product * weight;
        if next == target {
            summary.exists = true;
            if min_abs > summary.max_min_weight {
                summary.max_min_weight = min_abs;
            }
            summary.path_effects.push(product);
        } else {
            visited[next] = true;
            dfs(w, next, target, min_abs, product, visited, summary);
            visited[next] = false;
        }
    }
}
