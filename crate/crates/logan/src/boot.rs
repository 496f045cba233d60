//! Multiplier bootstrap calibration of path statistics.
//!
//! Conditional on the data, each retained edge's estimation error is
//! approximated by perturbing its decorrelated score with standard normal
//! multipliers. Within a draw, every edge pointing into the same child node
//! shares that node's multiplier vector, reproducing the cross-edge
//! dependence of the real errors. The maximum absolute perturbation over a
//! path edge set then calibrates the max-min path statistic.
//!
//! Every multiplier vector comes from a stream keyed by (seed, split, half,
//! draw, child node), so results are bit-identical regardless of thread
//! count or call order.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::debias::HalfFit;
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_BOOT};

/// One bootstrap edge statistic: the normalized multiplier perturbation of
/// the decorrelated score for an edge with residual `u` and denominator
/// `denom`, at noise scale `sigma`.
pub fn edge_stat(u: &[f64], e: &[f64], denom: f64, sigma: f64) -> f64 {
    debug_assert_eq!(u.len(), e.len());
    let dot: f64 = u.iter().zip(e).map(|(a, b)| a * b).sum();
    (u.len() as f64).sqrt() * sigma * dot / denom
}

/// Conditional standard deviation of the bootstrap edge statistic given the
/// data; also the large-sample standard deviation of the normalized
/// decorrelated estimation error.
pub fn edge_stat_sd(u: &[f64], denom: f64, sigma: f64) -> f64 {
    let ss: f64 = u.iter().map(|v| v * v).sum();
    (u.len() as f64).sqrt() * sigma * ss.sqrt() / denom.abs()
}

/// Bootstrap edge statistics for one half: a draws-by-edges matrix, filled
/// deterministically from the seeding scheme.
#[derive(Debug, Clone)]
pub struct BootstrapPass {
    edges: Vec<(usize, usize)>,
    index: BTreeMap<(usize, usize), usize>,
    stats: Array2<f64>,
    n_complement: usize,
}

/// Runs the multiplier draws for the given projected edges of `fit`.
/// `split` distinguishes sample splits when the procedure is repeated.
/// Edges must be projected and non-degenerate; the caller screens out
/// untestable edges first.
pub fn bootstrap_pass(
    fit: &HalfFit,
    sigma: f64,
    edges: &[(usize, usize)],
    draws: usize,
    seed: u64,
    split: u32,
) -> Result<BootstrapPass> {
    if draws < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 bootstrap draws, got {draws}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise scale must be positive and finite, got {sigma}"
        )));
    }
    let mut sorted: Vec<(usize, usize)> = edges.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    // Group edges by child node; edges under one child share multipliers.
    let mut by_child: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut index = BTreeMap::new();
    for (idx, &(j1, j2)) in sorted.iter().enumerate() {
        let proj = fit.projection(j1, j2).ok_or_else(|| {
            Error::InvalidInput(format!("edge ({j1},{j2}) has not been projected"))
        })?;
        if proj.degenerate {
            return Err(Error::DegenerateProjection {
                j1,
                j2,
                denom: proj.denom,
            });
        }
        by_child.entry(j1).or_default().push(idx);
        index.insert((j1, j2), idx);
    }

    let nc = fit.comp_rows.len();
    let scale = (nc as f64).sqrt() * sigma;
    let half_key = ((split as u64) << 8) | fit.half as u64;
    let mut stats = Array2::zeros((draws, sorted.len()));
    let mut e = vec![0.0f64; nc];
    for b in 0..draws {
        for (&child, idxs) in &by_child {
            let draw_key = ((b as u64) << 32) | child as u64;
            let mut rng = stream(seed, TAG_BOOT, half_key, draw_key);
            for v in e.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for &idx in idxs {
                let proj = fit
                    .projection(sorted[idx].0, sorted[idx].1)
                    .expect("validated above");
                let dot: f64 = proj.residual.iter().zip(&e).map(|(a, b)| a * b).sum();
                stats[[b, idx]] = scale * dot / proj.denom;
            }
        }
    }
    Ok(BootstrapPass {
        edges: sorted,
        index,
        stats,
        n_complement: nc,
    })
}

impl BootstrapPass {
    pub fn draws(&self) -> usize {
        self.stats.nrows()
    }

    pub fn n_complement(&self) -> usize {
        self.n_complement
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Raw statistic column for one edge.
    pub fn edge_column(&self, j1: usize, j2: usize) -> Option<Vec<f64>> {
        self.index
            .get(&(j1, j2))
            .map(|&i| self.stats.column(i).to_vec())
    }

    /// Per-draw maximum absolute statistic over a path edge set. An empty
    /// set yields all zeros, matching a path statistic that is identically
    /// zero.
    pub fn t_samples(&self, path_edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        let mut cols = Vec::with_capacity(path_edges.len());
        for &(j1, j2) in path_edges {
            let idx = self.index.get(&(j1, j2)).ok_or_else(|| {
                Error::InvalidInput(format!("edge ({j1},{j2}) is not in this bootstrap pass"))
            })?;
            cols.push(*idx);
        }
        let mut t = vec![0.0f64; self.draws()];
        for (b, tv) in t.iter_mut().enumerate() {
            for &c in &cols {
                let v = self.stats[[b, c]].abs();
                if v > *tv {
                    *tv = v;
                }
            }
        }
        Ok(t)
    }

    /// Critical value and bootstrap samples for testing one path statistic
    /// at overall level `alpha`: the two sub-tests of a pathway each spend
    /// half the level, so this is the upper alpha/2 empirical quantile of
    /// the max statistics. An empty edge set is untestable in the rejection
    /// direction: the critical value is infinite.
    pub fn critical_value(
        &self,
        path_edges: &[(usize, usize)],
        alpha: f64,
    ) -> Result<(f64, Vec<f64>)> {
        check_alpha(alpha)?;
        if path_edges.is_empty() {
            return Ok((f64::INFINITY, vec![0.0; self.draws()]));
        }
        let t = self.t_samples(path_edges)?;
        Ok((upper_quantile(&t, alpha / 2.0), t))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "level must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Empirical upper `level`-quantile: the ceil((1-level) m)-th ascending
/// order statistic, without interpolation.
pub fn upper_quantile(samples: &[f64], level: f64) -> f64 {
    let m = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite bootstrap statistic"));
    let rank = ((1.0 - level) * m as f64).ceil() as usize;
    sorted[rank.clamp(1, m) - 1]
}

/// Bootstrap p-value: the fraction of max statistics at or above the
/// observed normalized path statistic.
pub fn p_value(t_samples: &[f64], observed: f64) -> f64 {
    let hits = t_samples.iter().filter(|&&t| t >= observed).count();
    hits as f64 / t_samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::{fit_half_with_support, EdgeProjection, RefitSettings};
    use crate::sem::{sample, SemModel};
    use ndarray::{Array1, Array2};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn manual_fit(n: usize, p: usize, projections: Vec<((usize, usize), EdgeProjection)>) -> HalfFit {
        let x = Array2::from_shape_fn((n, p), |(i, j)| ((i * p + j) as f64).sin());
        let mut support = Array2::zeros((p, p));
        for ((j1, j2), _) in &projections {
            support[[*j1, *j2]] = 1.0;
        }
        let fit_rows: Vec<usize> = (0..n / 2).collect();
        let comp_rows: Vec<usize> = (n / 2..n).collect();
        let refit = RefitSettings {
            lambda: Some(0.0),
            ..RefitSettings::default()
        };
        let mut fit = fit_half_with_support(
            &x.view(),
            1,
            &fit_rows,
            &comp_rows,
            support,
            &refit,
        )
        .unwrap();
        fit.projections = projections.into_iter().collect();
        fit
    }

    fn unit_projection(nc: usize, denom: f64) -> EdgeProjection {
        EdgeProjection {
            beta: Array1::zeros(3),
            residual: Array1::ones(nc),
            denom,
            estimate: 0.5,
            degenerate: false,
        }
    }

    #[test]
    fn zero_multipliers_give_zero_stat() {
        let u = [0.4, -1.2, 0.7];
        assert_eq!(edge_stat(&u, &[0.0, 0.0, 0.0], 2.0, 1.0), 0.0);
    }

    #[test]
    fn edge_stat_matches_hand_computation() {
        let u = [1.0, -2.0, 0.5, 0.0];
        let e = [0.3, 0.1, -0.4, 2.0];
        // dot = 0.3 - 0.2 - 0.2 = -0.1; sqrt(4) = 2; sigma = 1.5; denom = 0.8
        let got = edge_stat(&u, &e, 0.8, 1.5);
        assert!((got - 2.0 * 1.5 * (-0.1) / 0.8).abs() < 1e-12);
        let sd = edge_stat_sd(&u, 0.8, 1.5);
        assert!((sd - 2.0 * 1.5 * 5.25f64.sqrt() / 0.8).abs() < 1e-12);
    }

    #[test]
    fn conditional_moments_match_closed_form() {
        let nc = 60;
        let fit = manual_fit(2 * nc, 3, vec![((1, 0), unit_projection(nc, 30.0))]);
        let pass = bootstrap_pass(&fit, 1.0, &[(1, 0)], 10000, 5, 0).unwrap();
        let col = pass.edge_column(1, 0).unwrap();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        let proj = fit.projection(1, 0).unwrap();
        let want_sd = edge_stat_sd(proj.residual.as_slice().unwrap(), proj.denom, 1.0);
        assert!(mean.abs() < 4.0 * want_sd / (col.len() as f64).sqrt(), "{mean}");
        assert!((var.sqrt() - want_sd).abs() / want_sd < 0.05, "{} vs {want_sd}", var.sqrt());
    }

    #[test]
    fn single_edge_critical_value_matches_gaussian_quantile() {
        let nc = 50;
        let fit = manual_fit(2 * nc, 3, vec![((1, 0), unit_projection(nc, 40.0))]);
        let pass = bootstrap_pass(&fit, 1.0, &[(1, 0)], 100000, 9, 0).unwrap();
        let alpha = 0.05;
        let (c_hat, t) = pass.critical_value(&[(1, 0)], alpha).unwrap();
        assert_eq!(t.len(), 100000);
        let proj = fit.projection(1, 0).unwrap();
        let sd = edge_stat_sd(proj.residual.as_slice().unwrap(), proj.denom, 1.0);
        // Upper alpha/2 quantile of |N(0, sd^2)|.
        let gauss = Normal::new(0.0, sd).unwrap();
        let want = gauss.inverse_cdf(1.0 - alpha / 4.0);
        assert!(
            (c_hat - want).abs() / want < 0.03,
            "bootstrap {c_hat} vs gaussian {want}"
        );
    }

    #[test]
    fn quantile_uses_the_ceiling_order_statistic() {
        let t: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        // ceil(0.75 * 10) = 8th of ten ascending values.
        assert_eq!(upper_quantile(&t, 0.25), 0.8);
        assert_eq!(upper_quantile(&t, 0.1), 0.9);
        // Order must not matter.
        let mut rev = t.clone();
        rev.reverse();
        assert_eq!(upper_quantile(&rev, 0.25), 0.8);
    }

    #[test]
    fn empty_edge_set_is_untestable() {
        let nc = 30;
        let fit = manual_fit(2 * nc, 3, vec![((1, 0), unit_projection(nc, 10.0))]);
        let pass = bootstrap_pass(&fit, 1.0, &[(1, 0)], 200, 3, 0).unwrap();
        let (c_hat, t) = pass.critical_value(&[], 0.05).unwrap();
        assert!(c_hat.is_infinite());
        assert!(t.iter().all(|&v| v == 0.0));
        // A zero path statistic against zero samples retains with p = 1.
        assert_eq!(p_value(&t, 0.0), 1.0);
    }

    #[test]
    fn edges_under_one_child_share_multipliers() {
        let nc = 25;
        let mut proj_a = unit_projection(nc, 12.0);
        let mut proj_b = unit_projection(nc, 12.0);
        let wave: Array1<f64> = Array1::from_shape_fn(nc, |i| (i as f64 * 0.7).cos());
        proj_a.residual = wave.clone();
        proj_b.residual = wave;
        let proj_c = unit_projection(nc, 12.0);
        let fit = manual_fit(
            2 * nc,
            4,
            vec![((2, 0), proj_a), ((2, 1), proj_b), ((3, 1), proj_c)],
        );
        let pass =
            bootstrap_pass(&fit, 1.0, &[(2, 0), (2, 1), (3, 1)], 150, 11, 0).unwrap();
        // Identical residuals and denominators under the same child give
        // identical columns; a different child draws different multipliers.
        assert_eq!(pass.edge_column(2, 0), pass.edge_column(2, 1));
        assert_ne!(pass.edge_column(2, 0), pass.edge_column(3, 1));
    }

    #[test]
    fn passes_are_deterministic_and_keyed_by_half_and_split() {
        let nc = 20;
        let make = |half: u8, split: u32| {
            let mut fit = manual_fit(2 * nc, 3, vec![((1, 0), unit_projection(nc, 8.0))]);
            fit.half = half;
            bootstrap_pass(&fit, 1.0, &[(1, 0)], 120, 42, split).unwrap()
        };
        let a = make(1, 0);
        let b = make(1, 0);
        assert_eq!(a.edge_column(1, 0), b.edge_column(1, 0));
        let other_half = make(2, 0);
        assert_ne!(a.edge_column(1, 0), other_half.edge_column(1, 0));
        let other_split = make(1, 1);
        assert_ne!(a.edge_column(1, 0), other_split.edge_column(1, 0));
    }

    #[test]
    fn p_value_is_monotone_and_bounded() {
        let nc = 40;
        let fit = manual_fit(2 * nc, 3, vec![((1, 0), unit_projection(nc, 15.0))]);
        let pass = bootstrap_pass(&fit, 1.0, &[(1, 0)], 500, 21, 0).unwrap();
        let t = pass.t_samples(&[(1, 0)]).unwrap();
        let stats = [0.0, 0.1, 0.5, 1.0, 5.0, f64::INFINITY];
        let ps: Vec<f64> = stats.iter().map(|&s| p_value(&t, s)).collect();
        assert_eq!(ps[0], 1.0);
        for w in ps.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for p in ps {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn degenerate_edges_are_rejected_up_front() {
        let nc = 20;
        let mut proj = unit_projection(nc, 1e-14);
        proj.degenerate = true;
        let fit = manual_fit(2 * nc, 3, vec![((1, 0), proj)]);
        match bootstrap_pass(&fit, 1.0, &[(1, 0)], 150, 2, 0) {
            Err(Error::DegenerateProjection { j1: 1, j2: 0, .. }) => {}
            other => panic!("expected degenerate-projection error, got {other:?}"),
        }
    }

    #[test]
    fn rejection_calibrates_on_a_real_null_edge() {
        // Chain with a genuinely absent edge (2,0) forced into the support:
        // the decorrelated estimate of that edge should rarely exceed the
        // bootstrap critical value.
        let mut w = Array2::zeros((3, 3));
        w[[1, 0]] = 1.0;
        w[[2, 1]] = 1.0;
        let model = SemModel::new(w.clone(), Array1::zeros(3), 1.0).unwrap();
        let mut support = w.clone();
        support[[2, 0]] = 1.0;
        let refit = RefitSettings::default();
        let mut rejections = 0;
        let reps = 40;
        for rep in 0..reps {
            let data = sample(&model, 400, 1000 + rep).unwrap().centered();
            let rows: Vec<usize> = (0..400).collect();
            let (fit_rows, comp_rows) = rows.split_at(200);
            let mut fit = fit_half_with_support(
                &data.values().view(),
                1,
                fit_rows,
                comp_rows,
                support.clone(),
                &refit,
            )
            .unwrap();
            fit.project_edges(&data.values().view(), &[(2, 0)], &refit).unwrap();
            let pass = bootstrap_pass(&fit, 1.0, &[(2, 0)], 400, 7000 + rep, 0).unwrap();
            let (c_hat, _) = pass.critical_value(&[(2, 0)], 0.1).unwrap();
            let stat = (200f64).sqrt() * fit.projection(2, 0).unwrap().estimate.abs();
            if stat > c_hat {
                rejections += 1;
            }
        }
        // Level 0.1 spends 0.05 on this side; forty reps should all but
        // never see more than a handful of false rejections.
        assert!(rejections <= 6, "{rejections} of {reps} rejected");
    }
}
