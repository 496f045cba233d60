//! Cross-fitted edge estimation. Each half of a sample split carries a
//! structure fit (screening), a row-wise refit of the retained weights, and,
//! per edge of interest, a decorrelated estimate built on the complementary
//! half: the edge weight is re-estimated against a nuisance regression so
//! that its error is asymptotically normal despite the penalized screening.
//!
//! Cross-fitting discipline: the structure fit, its support, and the row
//! refit touch only `fit_rows`; nuisance regressions, decorrelated
//! estimates, and noise-variance contributions touch only `comp_rows`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::boolmat::{ancestors, bool_star, threshold_binary};
use crate::dagfit::{
    adaptive_lambda_grid, fit_notears, fit_penalized, fit_penalized_relaxed, NotearsSettings,
    PenaltyKind, PenaltySpec, Tuning,
};
use crate::error::{Error, Result};

/// Penalty used for the row refit and the nuisance regressions.
#[derive(Debug, Clone)]
pub struct RefitSettings {
    pub gamma: f64,
    /// `None` tunes each regression on the default BIC grid; a fixed value
    /// skips tuning (zero gives plain least squares on the allowed support).
    pub lambda: Option<f64>,
    /// Denominator guard factor for the decorrelated ratio, per sample.
    pub denom_guard: f64,
}

impl Default for RefitSettings {
    fn default() -> Self {
        RefitSettings {
            gamma: 3.0,
            lambda: None,
            denom_guard: 1e-10,
        }
    }
}

impl RefitSettings {
    /// Penalty for one regression. The tuning grid is anchored to that
    /// regression's own scale, so every fitted response gets a path that
    /// actually spans empty-to-dense.
    fn spec_for(
        &self,
        y: ndarray::ArrayView1<f64>,
        x: ndarray::ArrayView2<f64>,
        allowed: &[usize],
    ) -> PenaltySpec {
        match self.lambda {
            Some(l) => PenaltySpec {
                kind: PenaltyKind::Mcp { gamma: self.gamma },
                tuning: Tuning::Fixed(l),
            },
            None => PenaltySpec {
                kind: PenaltyKind::Mcp { gamma: self.gamma },
                tuning: Tuning::BicGrid(adaptive_lambda_grid(y, x, allowed)),
            },
        }
    }
}

/// Decorrelated statistics for one retained edge, computed on the rows the
/// screening fit never saw.
#[derive(Debug, Clone)]
pub struct EdgeProjection {
    /// Nuisance regression coefficients (full length, sparse support).
    pub beta: Array1<f64>,
    /// Projected parent residual, one entry per complementary row.
    pub residual: Array1<f64>,
    /// Score denominator; near zero means the projection is degenerate.
    pub denom: f64,
    /// The decorrelated edge estimate (zero when degenerate).
    pub estimate: f64,
    pub degenerate: bool,
}

/// Everything derived from one half of a sample split.
#[derive(Debug, Clone)]
pub struct HalfFit {
    /// 1 or 2.
    pub half: u8,
    pub fit_rows: Vec<usize>,
    pub comp_rows: Vec<usize>,
    /// Structure estimate fitted on `fit_rows`.
    pub w_screen: Array2<f64>,
    /// Binary support of `w_screen`.
    pub support: Array2<f64>,
    /// Transitive closure of `support`.
    pub reach: Array2<f64>,
    /// Row-wise penalized refit on `fit_rows`, support within `support`.
    pub w_refit: Array2<f64>,
    /// Decorrelated per-edge statistics, keyed by (child, parent).
    pub projections: BTreeMap<(usize, usize), EdgeProjection>,
}

/// Ancestor candidates for the nuisance regression of node `j`: reachable
/// ancestors plus the exposure always, plus every mediator when `j` is the
/// outcome. The exposure itself has no ancestors; asking for them returns an
/// empty set with a warning flag.
pub fn allowed_ancestors(reach: &Array2<f64>, j: usize) -> Result<(Vec<usize>, bool)> {
    let p = reach.nrows();
    if j >= p {
        return Err(Error::InvalidInput(format!(
            "node {j} out of range for {p} nodes"
        )));
    }
    if j == 0 {
        return Ok((Vec::new(), true));
    }
    let mut set: Vec<bool> = vec![false; p];
    for a in ancestors(reach, j)? {
        set[a] = true;
    }
    set[0] = true;
    if j == p - 1 {
        for m in set.iter_mut().take(p - 1).skip(1) {
            *m = true;
        }
    }
    set[j] = false;
    let out = (0..p).filter(|&i| set[i]).collect();
    Ok((out, false))
}

/// Edges of the retained support lying on at least one directed path from
/// `q1` to `q2`, as (child, parent) pairs in row-major order.
pub fn path_edge_set(
    support: &Array2<f64>,
    reach: &Array2<f64>,
    q1: usize,
    q2: usize,
) -> Result<Vec<(usize, usize)>> {
    let p = support.nrows();
    if support.ncols() != p || reach.nrows() != p || reach.ncols() != p {
        return Err(Error::Shape("support and reach must be square and equal-sized".into()));
    }
    if q1 >= p || q2 >= p {
        return Err(Error::InvalidInput(format!(
            "nodes ({q1},{q2}) out of range for {p} nodes"
        )));
    }
    let mut out = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if support[[i, j]] == 0.0 {
                continue;
            }
            let tail_ok = j == q1 || reach[[j, q1]] != 0.0;
            let head_ok = i == q2 || reach[[q2, i]] != 0.0;
            if tail_ok && head_ok {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

fn select_rows(x: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Row-wise penalized refit of the retained support on the fitting rows.
fn refit_rows(
    x_fit: &Array2<f64>,
    support: &Array2<f64>,
    refit: &RefitSettings,
) -> Result<Array2<f64>> {
    let p = x_fit.ncols();
    let mut w = Array2::zeros((p, p));
    for j in 0..p {
        let allowed: Vec<usize> = (0..p).filter(|&k| support[[j, k]] != 0.0).collect();
        if allowed.is_empty() {
            continue;
        }
        let y = x_fit.column(j);
        let spec = refit.spec_for(y, x_fit.view(), &allowed);
        let beta = fit_penalized(y, x_fit.view(), &allowed, &spec)?;
        w.row_mut(j).assign(&beta);
    }
    Ok(w)
}

fn build_half(
    x: &ArrayView2<f64>,
    half: u8,
    fit_rows: &[usize],
    comp_rows: &[usize],
    w_screen: Array2<f64>,
    refit: &RefitSettings,
) -> Result<HalfFit> {
    let support = threshold_binary(&w_screen, 0.0);
    let reach = bool_star(&support)?;
    let x_fit = select_rows(x, fit_rows);
    let w_refit = refit_rows(&x_fit, &support, refit)?;
    Ok(HalfFit {
        half,
        fit_rows: fit_rows.to_vec(),
        comp_rows: comp_rows.to_vec(),
        w_screen,
        support,
        reach,
        w_refit,
        projections: BTreeMap::new(),
    })
}

/// Screens the graph structure on `fit_rows` and refits retained rows.
/// `x` must be the full centered sample; the two row sets must be disjoint.
pub fn fit_half(
    x: &ArrayView2<f64>,
    half: u8,
    fit_rows: &[usize],
    comp_rows: &[usize],
    notears: &NotearsSettings,
    refit: &RefitSettings,
) -> Result<HalfFit> {
    validate_rows(x, fit_rows, comp_rows)?;
    let x_fit = select_rows(x, fit_rows);
    let w_screen = fit_notears(x_fit.view(), notears)?;
    build_half(x, half, fit_rows, comp_rows, w_screen, refit)
}

/// Like `fit_half` but with the retained structure supplied by the caller
/// (weights or a binary pattern) instead of estimated.
pub fn fit_half_with_support(
    x: &ArrayView2<f64>,
    half: u8,
    fit_rows: &[usize],
    comp_rows: &[usize],
    w_screen: Array2<f64>,
    refit: &RefitSettings,
) -> Result<HalfFit> {
    validate_rows(x, fit_rows, comp_rows)?;
    if w_screen.nrows() != x.ncols() || w_screen.ncols() != x.ncols() {
        return Err(Error::Shape(format!(
            "supplied structure is {}x{}, data has {} columns",
            w_screen.nrows(),
            w_screen.ncols(),
            x.ncols()
        )));
    }
    build_half(x, half, fit_rows, comp_rows, w_screen, refit)
}

fn validate_rows(x: &ArrayView2<f64>, fit_rows: &[usize], comp_rows: &[usize]) -> Result<()> {
    let n = x.nrows();
    let mut seen = vec![false; n];
    for &r in fit_rows.iter().chain(comp_rows) {
        if r >= n {
            return Err(Error::InvalidInput(format!("row {r} out of range for {n} rows")));
        }
        if seen[r] {
            return Err(Error::InvalidInput(format!("row {r} appears in both halves")));
        }
        seen[r] = true;
    }
    if fit_rows.len() < 2 || comp_rows.len() < 2 {
        return Err(Error::InvalidInput("each half needs at least 2 rows".into()));
    }
    Ok(())
}

impl HalfFit {
    pub fn dim(&self) -> usize {
        self.support.nrows()
    }

    /// Edges of the retained support on some directed `q1` to `q2` path.
    pub fn edge_set(&self, q1: usize, q2: usize) -> Result<Vec<(usize, usize)>> {
        path_edge_set(&self.support, &self.reach, q1, q2)
    }

    pub fn projection(&self, j1: usize, j2: usize) -> Option<&EdgeProjection> {
        self.projections.get(&(j1, j2))
    }

    /// Computes decorrelated statistics for the given retained edges on the
    /// complementary rows. Edges already projected are skipped; a degenerate
    /// score denominator flags the edge rather than failing the batch.
    pub fn project_edges(
        &mut self,
        x: &ArrayView2<f64>,
        edges: &[(usize, usize)],
        refit: &RefitSettings,
    ) -> Result<()> {
        let mut todo: Vec<(usize, usize)> = edges.to_vec();
        todo.sort_unstable();
        todo.dedup();
        let x_comp = select_rows(x, &self.comp_rows);
        let nc = x_comp.nrows();
        for (j1, j2) in todo {
            if self.projections.contains_key(&(j1, j2)) {
                continue;
            }
            if self.support[[j1, j2]] == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "edge ({j1},{j2}) is not in the retained support"
                )));
            }
            let (mut allowed, _) = allowed_ancestors(&self.reach, j1)?;
            allowed.retain(|&k| k != j2);
            let y = x_comp.column(j2);
            let beta = if allowed.is_empty() {
                Array1::zeros(x_comp.ncols())
            } else {
                let spec = refit.spec_for(y, x_comp.view(), &allowed);
                fit_penalized_relaxed(y, x_comp.view(), &allowed, &spec)?
            };
            debug_assert_eq!(beta[j2], 0.0);

            let fitted = x_comp.dot(&beta);
            let residual = &y.to_owned() - &fitted;
            let denom = y.dot(&residual);
            if denom.abs() < refit.denom_guard * nc as f64 {
                self.projections.insert(
                    (j1, j2),
                    EdgeProjection {
                        beta,
                        residual,
                        denom,
                        estimate: 0.0,
                        degenerate: true,
                    },
                );
                continue;
            }

            // Child residual against every refit parent except j2 itself.
            let row = self.w_refit.row(j1);
            let mut numer = 0.0;
            for (i, u) in residual.iter().enumerate() {
                let mut pred = 0.0;
                for k in 0..x_comp.ncols() {
                    if k != j2 && row[k] != 0.0 {
                        pred += row[k] * x_comp[[i, k]];
                    }
                }
                numer += u * (x_comp[[i, j1]] - pred);
            }
            self.projections.insert(
                (j1, j2),
                EdgeProjection {
                    beta,
                    residual,
                    denom,
                    estimate: numer / denom,
                    degenerate: false,
                },
            );
        }
        Ok(())
    }

    /// Dense matrix of absolute decorrelated estimates over the projected
    /// edges, zeros elsewhere; degenerate edges stay zero.
    pub fn estimate_magnitudes(&self) -> Array2<f64> {
        let p = self.dim();
        let mut w = Array2::zeros((p, p));
        for (&(j1, j2), proj) in &self.projections {
            if !proj.degenerate {
                w[[j1, j2]] = proj.estimate.abs();
            }
        }
        w
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseVariance {
    pub value: f64,
    /// Set when the pooled residual mass is (numerically) zero.
    pub degenerate: bool,
}

/// Pooled residual mean square across halves: for each fit, rows the fit
/// never saw are residualized against its refit weights; the average runs
/// over every (row, node) pair. Estimates the common noise variance.
pub fn noise_variance(x: &ArrayView2<f64>, fits: &[&HalfFit]) -> Result<NoiseVariance> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("no fitted halves supplied".into()));
    }
    let p = x.ncols();
    let mut total = 0.0;
    let mut rows = 0usize;
    for fit in fits {
        if fit.dim() != p {
            return Err(Error::Shape("fit dimension does not match data".into()));
        }
        let x_comp = select_rows(x, &fit.comp_rows);
        let fitted = x_comp.dot(&fit.w_refit.t());
        let resid = &x_comp - &fitted;
        total += resid.iter().map(|v| v * v).sum::<f64>();
        rows += x_comp.nrows();
    }
    let value = total / (rows as f64 * p as f64);
    Ok(NoiseVariance {
        value,
        degenerate: value <= 1e-300,
    })
}
