//! The mediation testing procedure.
//!
//! A pathway through mediator q is present when both the exposure-to-q and
//! q-to-outcome max-min path statistics are nonzero. Each is tested on both
//! halves of a sample split: the graph is screened on one half, edges are
//! re-estimated on the other, and the path statistic is compared against a
//! multiplier bootstrap critical value at half the nominal level. The
//! pathway is rejected when some half rejects both sides.
//!
//! Anything that breaks along the way (screening that fails to converge, a
//! degenerate projection, zero residual variance) downgrades the affected
//! tests to retain-by-default with a diagnostic, never to a false positive.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::boolmat::bool_star;
use crate::boot::{bootstrap_pass, p_value, BootstrapPass};
use crate::dagfit::NotearsSettings;
use crate::dataset::Dataset;
use crate::debias::{fit_half, noise_variance, HalfFit, RefitSettings};
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_SPLIT};

/// Parameters shared by every entry point.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub notears: NotearsSettings,
    pub refit: RefitSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            alpha: 0.05,
            draws: 2000,
            seed: 0,
            notears: NotearsSettings::default(),
            refit: RefitSettings::default(),
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "level must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.draws < 100 {
            return Err(Error::InvalidInput(format!(
                "need at least 100 bootstrap draws, got {}",
                self.draws
            )));
        }
        Ok(())
    }
}

/// Random half split: the first ceil(n/2) positions of a seeded shuffle,
/// and the rest. `split_index` distinguishes repeated splits of one sample.
pub fn split_rows(n: usize, seed: u64, split_index: u32) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 rows to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, TAG_SPLIT, split_index as u64, 0);
    order.shuffle(&mut rng);
    let cut = n.div_ceil(2);
    let mut first = order[..cut].to_vec();
    let mut second = order[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// One side of a pathway test on one half.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubTest {
    pub from: usize,
    pub to: usize,
    /// Normalized path statistic sqrt(nc) times the max-min closure entry.
    pub stat: f64,
    /// Bootstrap critical value; absent when the test is untestable or the
    /// path edge set is empty.
    pub critical: Option<f64>,
    pub p: f64,
    pub reject: bool,
    /// Size of the path edge set.
    pub edges: usize,
    /// Set when the half failed, the noise variance degenerated, or the
    /// path edge set touched a degenerate projection.
    pub untestable: bool,
}

impl SubTest {
    fn retained(from: usize, to: usize) -> SubTest {
        SubTest {
            from,
            to,
            stat: 0.0,
            critical: None,
            p: 1.0,
            reject: false,
            edges: 0,
            untestable: true,
        }
    }
}

/// Both sides of the pathway test for one mediator on one half.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfDecision {
    pub half: u8,
    pub exposure_side: SubTest,
    pub outcome_side: SubTest,
    pub reject: bool,
}

/// Single-split decision for one mediator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediatorTest {
    pub q: usize,
    pub halves: Vec<HalfDecision>,
    pub reject: bool,
}

/// Everything computed from one split of the sample, reusable across
/// mediators and levels: the two half fits, their bootstrap passes over
/// every edge any pathway test can touch, and the noise variance.
pub struct SplitAnalysis {
    pub split_index: u32,
    pub d: usize,
    pub sigma2: f64,
    pub sigma_degenerate: bool,
    pub draws: usize,
    pub halves: [HalfState; 2],
}

pub struct HalfState {
    pub half: u8,
    pub n_complement: usize,
    pub fit: Option<HalfFit>,
    pub pass: Option<BootstrapPass>,
    /// Closure of absolute decorrelated estimates.
    pub star: Option<Array2<f64>>,
    pub untestable_edges: BTreeSet<(usize, usize)>,
    pub failure: Option<String>,
}

/// Screens, refits, projects, and bootstraps both halves of one split.
/// `x` must be centered. Screening failures are recorded, not fatal.
pub fn analyze_split(
    x: &ArrayView2<f64>,
    settings: &RunSettings,
    split_index: u32,
) -> Result<SplitAnalysis> {
    settings.validate()?;
    let n = x.nrows();
    let p = x.ncols();
    if p < 3 {
        return Err(Error::InvalidInput(format!(
            "need exposure, a mediator, and outcome, got {p} columns"
        )));
    }
    let d = p - 2;
    let (first, second) = split_rows(n, settings.seed, split_index)?;

    let mut halves: Vec<HalfState> = Vec::with_capacity(2);
    for (half, fit_rows, comp_rows) in [(1u8, &first, &second), (2u8, &second, &first)] {
        let state = match fit_half(x, half, fit_rows, comp_rows, &settings.notears, &settings.refit)
        {
            Ok(fit) => HalfState {
                half,
                n_complement: comp_rows.len(),
                fit: Some(fit),
                pass: None,
                star: None,
                untestable_edges: BTreeSet::new(),
                failure: None,
            },
            Err(Error::Convergence { h, .. }) => HalfState {
                half,
                n_complement: comp_rows.len(),
                fit: None,
                pass: None,
                star: None,
                untestable_edges: BTreeSet::new(),
                failure: Some(format!("screening did not converge (h = {h:.3e})")),
            },
            Err(e) => return Err(e),
        };
        halves.push(state);
    }

    let fitted: Vec<&HalfFit> = halves.iter().filter_map(|h| h.fit.as_ref()).collect();
    let (sigma2, sigma_degenerate) = if fitted.is_empty() {
        (0.0, true)
    } else {
        let nv = noise_variance(x, &fitted)?;
        (nv.value, nv.degenerate)
    };

    if !sigma_degenerate {
        let sigma = sigma2.sqrt();
        for state in halves.iter_mut() {
            let Some(fit) = state.fit.as_mut() else {
                continue;
            };
            // Union of the path edge sets of every pathway side, so one
            // projection and bootstrap pass serves all mediators.
            let mut union: BTreeSet<(usize, usize)> = BTreeSet::new();
            for q in 1..=d {
                union.extend(fit.edge_set(0, q)?);
                union.extend(fit.edge_set(q, d + 1)?);
            }
            let edges: Vec<(usize, usize)> = union.into_iter().collect();
            fit.project_edges(x, &edges, &settings.refit)?;
            let mut testable = Vec::with_capacity(edges.len());
            for e in edges {
                let proj = fit.projection(e.0, e.1).expect("just projected");
                if proj.degenerate {
                    state.untestable_edges.insert(e);
                } else {
                    testable.push(e);
                }
            }
            state.star = Some(bool_star(&fit.estimate_magnitudes())?);
            state.pass = Some(bootstrap_pass(
                fit,
                sigma,
                &testable,
                settings.draws,
                settings.seed,
                split_index,
            )?);
        }
    }

    Ok(SplitAnalysis {
        split_index,
        d,
        sigma2,
        sigma_degenerate,
        draws: settings.draws,
        halves: halves.try_into().map_err(|_| Error::Numerical("two halves expected".into()))?,
    })
}

impl SplitAnalysis {
    /// Tests the directed pathway `from -> to` on one half at level
    /// `alpha` (the side spends alpha/2).
    pub fn sub_test(&self, half_idx: usize, from: usize, to: usize, alpha: f64) -> SubTest {
        let state = &self.halves[half_idx];
        let (Some(fit), Some(pass), Some(star)) =
            (state.fit.as_ref(), state.pass.as_ref(), state.star.as_ref())
        else {
            return SubTest::retained(from, to);
        };
        let edges = match fit.edge_set(from, to) {
            Ok(e) => e,
            Err(_) => return SubTest::retained(from, to),
        };
        if edges.iter().any(|e| state.untestable_edges.contains(e)) {
            let mut sub = SubTest::retained(from, to);
            sub.edges = edges.len();
            return sub;
        }
        let (c_hat, t) = match pass.critical_value(&edges, alpha) {
            Ok(v) => v,
            Err(_) => return SubTest::retained(from, to),
        };
        let stat = (state.n_complement as f64).sqrt() * star[[to, from]];
        SubTest {
            from,
            to,
            stat,
            critical: c_hat.is_finite().then_some(c_hat),
            p: p_value(&t, stat),
            reject: stat > c_hat,
            edges: edges.len(),
            untestable: false,
        }
    }

    /// Full pathway decision for mediator `q`: reject when some half
    /// rejects both sides.
    pub fn mediator_test(&self, q: usize, alpha: f64) -> Result<MediatorTest> {
        if q < 1 || q > self.d {
            return Err(Error::InvalidInput(format!(
                "mediator index {q} out of range 1..={}",
                self.d
            )));
        }
        let mut halves = Vec::with_capacity(2);
        for (idx, state) in self.halves.iter().enumerate() {
            let exposure_side = self.sub_test(idx, 0, q, alpha);
            let outcome_side = self.sub_test(idx, q, self.d + 1, alpha);
            let reject = exposure_side.reject && outcome_side.reject;
            halves.push(HalfDecision {
                half: state.half,
                exposure_side,
                outcome_side,
                reject,
            });
        }
        let reject = halves.iter().any(|h| h.reject);
        Ok(MediatorTest { q, halves, reject })
    }

    /// Per-mediator p-value rows for one half, the input to the selection
    /// procedures. P-values do not depend on the level.
    pub fn pvalue_rows(&self, half_idx: usize) -> Result<Vec<MediatorPvalues>> {
        // Critical values need a level but p-values ignore it; any valid
        // level works here.
        let mut rows = Vec::with_capacity(self.d);
        for q in 1..=self.d {
            let e = self.sub_test(half_idx, 0, q, 0.5);
            let o = self.sub_test(half_idx, q, self.d + 1, 0.5);
            rows.push(MediatorPvalues {
                q,
                p_exposure: e.p,
                p_outcome: o.p,
                untestable: e.untestable || o.untestable,
            });
        }
        Ok(rows)
    }

    pub fn half_failures(&self) -> [Option<String>; 2] {
        [self.halves[0].failure.clone(), self.halves[1].failure.clone()]
    }
}

/// Report for a single-mediator, single-split test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediationReport {
    pub q: usize,
    pub mediator: String,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub sigma2: f64,
    pub sigma_degenerate: bool,
    pub half_failures: [Option<String>; 2],
    pub test: MediatorTest,
}

/// Tests one mediator's pathway on a single split.
pub fn test_mediator(data: &Dataset, q: usize, settings: &RunSettings) -> Result<MediationReport> {
    let centered = data.centered();
    let x = centered.values();
    let analysis = analyze_split(&x.view(), settings, 0)?;
    let test = analysis.mediator_test(q, settings.alpha)?;
    Ok(MediationReport {
        q,
        mediator: data.mediator_name(q).to_string(),
        n: data.n(),
        d: data.d(),
        alpha: settings.alpha,
        sigma2: analysis.sigma2,
        sigma_degenerate: analysis.sigma_degenerate,
        half_failures: analysis.half_failures(),
        test,
    })
}

/// Empirical `gamma`-quantile: the ceil(gamma N)-th ascending order
/// statistic (at least the first), without interpolation.
pub fn gamma_quantile(values: &[f64], gamma: f64) -> f64 {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite p-value"));
    let rank = (gamma * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Aggregates one sub-hypothesis's p-values across splits and halves:
/// each is inflated by 1/gamma, then the gamma-quantile is taken and
/// capped at one.
pub fn multisplit_combine(p_values: &[f64], gamma: f64) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("no p-values to combine".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantile parameter must lie in (0,1), got {gamma}"
        )));
    }
    let inflated: Vec<f64> = p_values.iter().map(|p| p / gamma).collect();
    Ok(gamma_quantile(&inflated, gamma).min(1.0))
}

/// Report for a multisplit single-mediator test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultisplitReport {
    pub q: usize,
    pub mediator: String,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub splits: usize,
    pub gamma: f64,
    /// Aggregated p-value for the exposure-to-mediator side.
    pub p_exposure: f64,
    /// Aggregated p-value for the mediator-to-outcome side.
    pub p_outcome: f64,
    /// Final p-value: the larger of the two sides.
    pub p: f64,
    pub reject: bool,
    pub per_split: Vec<MediatorTest>,
    pub sigma2_per_split: Vec<f64>,
    pub half_failures: Vec<[Option<String>; 2]>,
}

/// Tests one mediator's pathway over `splits` independent sample splits,
/// aggregating the per-split p-values by quantile.
pub fn test_mediator_multisplit(
    data: &Dataset,
    q: usize,
    splits: usize,
    gamma: f64,
    settings: &RunSettings,
) -> Result<MultisplitReport> {
    if splits == 0 {
        return Err(Error::InvalidInput("need at least one split".into()));
    }
    let centered = data.centered();
    let x = centered.values();
    let mut exposure_ps = Vec::with_capacity(2 * splits);
    let mut outcome_ps = Vec::with_capacity(2 * splits);
    let mut per_split = Vec::with_capacity(splits);
    let mut sigma2_per_split = Vec::with_capacity(splits);
    let mut half_failures = Vec::with_capacity(splits);
    for s in 0..splits {
        let analysis = analyze_split(&x.view(), settings, s as u32)?;
        let test = analysis.mediator_test(q, settings.alpha)?;
        for half in &test.halves {
            exposure_ps.push(half.exposure_side.p);
            outcome_ps.push(half.outcome_side.p);
        }
        sigma2_per_split.push(analysis.sigma2);
        half_failures.push(analysis.half_failures());
        per_split.push(test);
    }
    let p_exposure = multisplit_combine(&exposure_ps, gamma)?;
    let p_outcome = multisplit_combine(&outcome_ps, gamma)?;
    let p = p_exposure.max(p_outcome);
    Ok(MultisplitReport {
        q,
        mediator: data.mediator_name(q).to_string(),
        n: data.n(),
        d: data.d(),
        alpha: settings.alpha,
        splits,
        gamma,
        p_exposure,
        p_outcome,
        p,
        reject: p <= settings.alpha,
        per_split,
        sigma2_per_split,
        half_failures,
    })
}

/// Per-mediator p-values on one half.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediatorPvalues {
    pub q: usize,
    pub p_exposure: f64,
    pub p_outcome: f64,
    pub untestable: bool,
}

impl MediatorPvalues {
    pub fn p_min(&self) -> f64 {
        self.p_exposure.min(self.p_outcome)
    }

    pub fn p_max(&self) -> f64 {
        self.p_exposure.max(self.p_outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    /// Screen on the smaller p-value, then step-up within the survivors.
    Screened,
    /// Step-up over all mediators without screening.
    Plain,
}

/// Screening cut: the largest threshold c in {alpha/d, ..., alpha/2, alpha}
/// whose survivor count keeps c times the count at or below alpha.
pub fn screen_cut(p_min: &[f64], alpha: f64) -> f64 {
    let d = p_min.len();
    let mut best = alpha / d as f64;
    for k in (1..=d).rev() {
        let c = alpha / k as f64;
        let kept = p_min.iter().filter(|&&p| p <= c).count();
        if c * kept as f64 <= alpha {
            best = c;
        }
    }
    best
}

/// Selection outcome for one half.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfSelection {
    pub half: u8,
    /// Screening threshold; absent for the unscreened method.
    pub screen_cut: Option<f64>,
    /// Mediators surviving the screen (all of them for the unscreened
    /// method).
    pub screened: Vec<usize>,
    /// Step-up count within the screened set.
    pub step_up_count: usize,
    pub selected: Vec<usize>,
}

/// Runs screening (optionally) and the step-up selection on one half's
/// p-value rows. The step-up compares the i-th smallest larger p-value
/// against i alpha / (2 |H| sum_{j<=|H|} 1/j) over the screened set H.
pub fn select_half(
    rows: &[MediatorPvalues],
    alpha: f64,
    method: SelectionMethod,
    half: u8,
) -> HalfSelection {
    let (cut, screened): (Option<f64>, Vec<usize>) = match method {
        SelectionMethod::Screened => {
            let p_min: Vec<f64> = rows.iter().map(|r| r.p_min()).collect();
            let c = screen_cut(&p_min, alpha);
            (
                Some(c),
                rows.iter().filter(|r| r.p_min() <= c).map(|r| r.q).collect(),
            )
        }
        SelectionMethod::Plain => (None, rows.iter().map(|r| r.q).collect()),
    };
    if screened.is_empty() {
        return HalfSelection {
            half,
            screen_cut: cut,
            screened,
            step_up_count: 0,
            selected: Vec::new(),
        };
    }
    let h0 = screened.len();
    let harmonic: f64 = (1..=h0).map(|j| 1.0 / j as f64).sum();
    let mut ordered: Vec<(f64, usize)> = rows
        .iter()
        .filter(|r| screened.contains(&r.q))
        .map(|r| (r.p_max(), r.q))
        .collect();
    ordered.sort_by(|a, b| a.partial_cmp(b).expect("non-finite p-value"));
    let mut count = 0;
    for (i, (p, _)) in ordered.iter().enumerate() {
        let threshold = (i + 1) as f64 * alpha / (2.0 * h0 as f64 * harmonic);
        if *p <= threshold {
            count = i + 1;
        }
    }
    let mut selected: Vec<usize> = ordered[..count].iter().map(|&(_, q)| q).collect();
    selected.sort_unstable();
    HalfSelection {
        half,
        screen_cut: cut,
        screened,
        step_up_count: count,
        selected,
    }
}

/// Report for a whole-graph selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdrReport {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub method: SelectionMethod,
    pub sigma2: f64,
    pub sigma_degenerate: bool,
    pub half_failures: [Option<String>; 2],
    pub p_rows: [Vec<MediatorPvalues>; 2],
    pub halves: [HalfSelection; 2],
    /// Union of the per-half selections.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
}

fn fdr_with_method(
    data: &Dataset,
    settings: &RunSettings,
    method: SelectionMethod,
) -> Result<FdrReport> {
    let centered = data.centered();
    let x = centered.values();
    let analysis = analyze_split(&x.view(), settings, 0)?;
    let rows = [analysis.pvalue_rows(0)?, analysis.pvalue_rows(1)?];
    let halves = [
        select_half(&rows[0], settings.alpha, method, 1),
        select_half(&rows[1], settings.alpha, method, 2),
    ];
    let mut selected: Vec<usize> = halves
        .iter()
        .flat_map(|h| h.selected.iter().copied())
        .collect();
    selected.sort_unstable();
    selected.dedup();
    let selected_names = selected
        .iter()
        .map(|&q| data.mediator_name(q).to_string())
        .collect();
    Ok(FdrReport {
        n: data.n(),
        d: data.d(),
        alpha: settings.alpha,
        method,
        sigma2: analysis.sigma2,
        sigma_degenerate: analysis.sigma_degenerate,
        half_failures: analysis.half_failures(),
        p_rows: rows,
        halves,
        selected,
        selected_names,
    })
}

/// Selects mediators with screening plus step-up control on each half,
/// then unions the halves.
pub fn fdr_select(data: &Dataset, settings: &RunSettings) -> Result<FdrReport> {
    fdr_with_method(data, settings, SelectionMethod::Screened)
}

/// The unscreened baseline: step-up over all mediators on each half.
pub fn by_baseline(data: &Dataset, settings: &RunSettings) -> Result<FdrReport> {
    fdr_with_method(data, settings, SelectionMethod::Plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{sample, SemModel};
    use ndarray::{Array1, Array2};

    #[test]
    fn split_sizes_and_determinism() {
        let (a1, b1) = split_rows(9, 3, 0).unwrap();
        assert_eq!(a1.len(), 5);
        assert_eq!(b1.len(), 4);
        let mut all: Vec<usize> = a1.iter().chain(&b1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        let (a2, b2) = split_rows(9, 3, 0).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let (a3, _) = split_rows(9, 3, 1).unwrap();
        assert_ne!(a1, a3);
        let (a4, _) = split_rows(9, 4, 0).unwrap();
        assert_ne!(a1, a4);
        assert!(split_rows(3, 0, 0).is_err());
    }

    #[test]
    fn gamma_quantile_uses_the_ceiling_order_statistic() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        // ceil(0.15 * 10) = 2nd smallest.
        assert_eq!(gamma_quantile(&v, 0.15), 2.0);
        assert_eq!(gamma_quantile(&v, 0.05), 1.0);
        assert_eq!(gamma_quantile(&v, 1.0), 10.0);
    }

    #[test]
    fn multisplit_combine_degenerates_to_scaled_minimum_for_one_split() {
        // One split gives two p-values; the 0.15-quantile of two values is
        // their minimum, inflated by 1/0.15.
        let p = multisplit_combine(&[0.03, 0.8], 0.15).unwrap();
        assert!((p - 0.2).abs() < 1e-12);
        // Large p-values cap at one.
        assert_eq!(multisplit_combine(&[0.5, 0.9], 0.15).unwrap(), 1.0);
    }

    #[test]
    fn screen_cut_matches_the_two_mediator_fixture() {
        // d = 2, alpha = 0.1: candidate cuts {0.05, 0.1}. Both keep one
        // mediator, so the larger cut qualifies.
        let cut = screen_cut(&[0.01, 0.9], 0.1);
        assert!((cut - 0.1).abs() < 1e-12);
        // All survive at every cut: only alpha/d keeps c |H| within alpha.
        let cut = screen_cut(&[0.001, 0.002, 0.003], 0.1);
        assert!((cut - 0.1 / 3.0).abs() < 1e-12);
    }

    fn rows_from(ps: &[(f64, f64)]) -> Vec<MediatorPvalues> {
        ps.iter()
            .enumerate()
            .map(|(i, &(pe, po))| MediatorPvalues {
                q: i + 1,
                p_exposure: pe,
                p_outcome: po,
                untestable: false,
            })
            .collect()
    }

    #[test]
    fn step_up_selects_exactly_the_strong_mediator() {
        // Three mediators all pass a screen at 1/30; the step-up threshold
        // for the smallest larger p-value is 0.1/11, so only the first
        // survives.
        let rows = rows_from(&[(0.001, 0.001), (0.02, 0.5), (0.03, 0.9)]);
        let sel = select_half(&rows, 0.1, SelectionMethod::Screened, 1);
        assert_eq!(sel.screened, vec![1, 2, 3]);
        assert!((sel.screen_cut.unwrap() - 0.1 / 3.0).abs() < 1e-12);
        assert_eq!(sel.selected, vec![1]);
        assert_eq!(sel.step_up_count, 1);
    }

    #[test]
    fn screened_selection_on_the_two_mediator_fixture() {
        let rows = rows_from(&[(0.01, 0.012), (0.9, 0.95)]);
        let sel = select_half(&rows, 0.1, SelectionMethod::Screened, 1);
        // Cut 0.1 keeps only the first mediator; with one survivor the
        // step-up threshold is alpha/2.
        assert_eq!(sel.screened, vec![1]);
        assert_eq!(sel.selected, vec![1]);
    }

    #[test]
    fn plain_selection_uses_every_mediator() {
        let rows = rows_from(&[(0.001, 0.001), (0.02, 0.5), (0.03, 0.9)]);
        let sel = select_half(&rows, 0.1, SelectionMethod::Plain, 2);
        assert!(sel.screen_cut.is_none());
        assert_eq!(sel.screened, vec![1, 2, 3]);
        // Same step-up arithmetic as the screened fixture here.
        assert_eq!(sel.selected, vec![1]);
    }

    #[test]
    fn selection_is_monotone_in_the_p_values() {
        let base = rows_from(&[(0.004, 0.006), (0.02, 0.04), (0.5, 0.9)]);
        let better = rows_from(&[(0.002, 0.003), (0.01, 0.02), (0.5, 0.9)]);
        let sel_base = select_half(&base, 0.1, SelectionMethod::Screened, 1);
        let sel_better = select_half(&better, 0.1, SelectionMethod::Screened, 1);
        for q in &sel_base.selected {
            assert!(sel_better.selected.contains(q));
        }
    }

    fn chain_model(d: usize, weight: f64) -> SemModel {
        let p = d + 2;
        let mut w = Array2::zeros((p, p));
        for j in 1..p {
            w[[j, j - 1]] = weight;
        }
        SemModel::new(w, Array1::zeros(p), 1.0).unwrap()
    }

    #[test]
    fn strong_chain_pathway_is_rejected_and_null_is_retained() {
        let model = chain_model(2, 1.2);
        let data = sample(&model, 400, 31).unwrap();
        let settings = RunSettings {
            alpha: 0.1,
            draws: 500,
            seed: 5,
            ..RunSettings::default()
        };
        let report = test_mediator(&data, 1, &settings).unwrap();
        assert!(report.test.reject, "strong pathway missed: {report:?}");
        assert!(!report.sigma_degenerate);
        assert!((report.sigma2 - 1.0).abs() < 0.3, "{}", report.sigma2);

        // A model with no edges at all: nothing to reject.
        let null_model =
            SemModel::new(Array2::zeros((4, 4)), Array1::zeros(4), 1.0).unwrap();
        let null_data = sample(&null_model, 400, 32).unwrap();
        let null_report = test_mediator(&null_data, 1, &settings).unwrap();
        assert!(!null_report.test.reject);
    }

    #[test]
    fn rejection_needs_both_sides_on_one_half() {
        // Exposure feeds the mediator but the mediator never reaches the
        // outcome; the outcome side must retain, so the pathway retains.
        let mut w = Array2::zeros((4, 4));
        w[[1, 0]] = 1.5;
        w[[3, 2]] = 1.5;
        let model = SemModel::new(w, Array1::zeros(4), 1.0).unwrap();
        let data = sample(&model, 500, 33).unwrap();
        let settings = RunSettings {
            alpha: 0.1,
            draws: 400,
            seed: 6,
            ..RunSettings::default()
        };
        let report = test_mediator(&data, 1, &settings).unwrap();
        assert!(!report.test.reject);
        for half in &report.test.halves {
            if half.exposure_side.reject {
                assert!(!half.outcome_side.reject);
            }
        }
    }

    #[test]
    fn constant_data_retains_with_degenerate_noise() {
        let names = crate::dataset::Dataset::default_names(2);
        let data =
            crate::dataset::Dataset::new(Array2::from_elem((40, 4), 2.5), names).unwrap();
        let settings = RunSettings {
            draws: 200,
            ..RunSettings::default()
        };
        let report = test_mediator(&data, 1, &settings).unwrap();
        assert!(report.sigma_degenerate);
        assert!(!report.test.reject);
        for half in &report.test.halves {
            assert!(half.exposure_side.untestable);
            assert!(half.outcome_side.untestable);
        }
    }

    #[test]
    fn mediator_index_is_validated() {
        let model = chain_model(2, 1.0);
        let data = sample(&model, 60, 8).unwrap();
        let settings = RunSettings {
            draws: 150,
            ..RunSettings::default()
        };
        assert!(test_mediator(&data, 0, &settings).is_err());
        assert!(test_mediator(&data, 3, &settings).is_err());
        assert!(test_mediator(&data, 2, &settings).is_ok());
    }

    #[test]
    fn fdr_methods_share_identical_pvalue_tables() {
        let model = chain_model(3, 1.1);
        let data = sample(&model, 300, 41).unwrap();
        let settings = RunSettings {
            alpha: 0.1,
            draws: 300,
            seed: 11,
            ..RunSettings::default()
        };
        let screened = fdr_select(&data, &settings).unwrap();
        let plain = by_baseline(&data, &settings).unwrap();
        for half in 0..2 {
            for (a, b) in screened.p_rows[half].iter().zip(&plain.p_rows[half]) {
                assert_eq!(a.q, b.q);
                assert_eq!(a.p_exposure, b.p_exposure);
                assert_eq!(a.p_outcome, b.p_outcome);
            }
        }
        assert_eq!(screened.method, SelectionMethod::Screened);
        assert_eq!(plain.method, SelectionMethod::Plain);
        // The chain's mediators all carry the pathway; the screened method
        // should find at least one on this sample size.
        assert!(!screened.selected.is_empty());
        for q in &screened.selected {
            assert!((1..=3).contains(q));
        }
    }

    #[test]
    fn multisplit_matches_single_split_on_its_first_split() {
        let model = chain_model(2, 1.2);
        let data = sample(&model, 300, 51).unwrap();
        let settings = RunSettings {
            alpha: 0.1,
            draws: 300,
            seed: 21,
            ..RunSettings::default()
        };
        let single = test_mediator(&data, 1, &settings).unwrap();
        let multi = test_mediator_multisplit(&data, 1, 3, 0.15, &settings).unwrap();
        assert_eq!(multi.per_split.len(), 3);
        // Split 0 of the multisplit run reproduces the single-split test.
        let first = &multi.per_split[0];
        for (a, b) in first.halves.iter().zip(&single.test.halves) {
            assert_eq!(a.exposure_side.p, b.exposure_side.p);
            assert_eq!(a.outcome_side.p, b.outcome_side.p);
        }
        assert!(multi.p >= 0.0 && multi.p <= 1.0);
        assert_eq!(multi.reject, multi.p <= settings.alpha);
    }
}
