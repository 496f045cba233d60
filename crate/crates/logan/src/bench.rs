//! Monte Carlo evaluation of the testing procedure on a known model.
//!
//! One run fixes a model, resamples data `reps` times, and applies the
//! pathway tests and the selection procedures at every requested level.
//! Each replication derives its randomness from `seed + rep`, and levels
//! share one set of bootstrap draws per replication, so rate curves are
//! monotone in the level by construction and results do not depend on how
//! replications are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dagfit::NotearsSettings;
use crate::debias::RefitSettings;
use crate::error::{Error, Result};
use crate::mediate::{
    analyze_split, multisplit_combine, select_half, RunSettings, SelectionMethod,
};
use crate::sem::{mediation_strength, pathway_truth, sample, SemModel};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub model: SemModel,
    pub n: usize,
    pub reps: usize,
    /// Levels evaluated against shared draws, ascending.
    pub alphas: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    /// Number of sample splits per replication; 1 tests on a single split,
    /// larger values add quantile-aggregated multisplit decisions.
    pub splits: usize,
    pub gamma: f64,
    pub notears: NotearsSettings,
    pub refit: RefitSettings,
}

impl BenchConfig {
    pub fn new(model: SemModel, n: usize) -> BenchConfig {
        BenchConfig {
            model,
            n,
            reps: 100,
            alphas: vec![0.05],
            draws: 2000,
            seed: 0,
            splits: 1,
            gamma: 0.15,
            notears: NotearsSettings::default(),
            refit: RefitSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidInput("need at least one replication".into()));
        }
        if self.splits == 0 {
            return Err(Error::InvalidInput("need at least one split".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidInput("need at least one level".into()));
        }
        for w in self.alphas.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput("levels must be ascending".into()));
            }
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidInput(format!("level {a} outside (0,1)")));
            }
        }
        Ok(())
    }

    fn run_settings(&self, rep: usize) -> RunSettings {
        RunSettings {
            alpha: self.alphas[0],
            draws: self.draws,
            seed: self.seed + rep as u64,
            notears: self.notears.clone(),
            refit: self.refit.clone(),
        }
    }
}

/// Everything recorded from one replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    /// Set when the replication could not run at all; all other fields are
    /// then empty defaults.
    pub error: Option<String>,
    pub sigma2: f64,
    pub sigma_degenerate: bool,
    /// Screening failures over all splits and halves.
    pub failed_halves: usize,
    /// Single-split rejection per level (outer) and mediator (inner).
    pub single_reject: Vec<Vec<bool>>,
    /// Selected mediators per level, screened method.
    pub screened_selected: Vec<Vec<usize>>,
    /// Selected mediators per level, unscreened baseline.
    pub plain_selected: Vec<Vec<usize>>,
    /// Aggregated multisplit p-value per mediator (level-free); present
    /// when the run uses more than one split.
    pub multisplit_p: Option<Vec<f64>>,
}

impl RepOutcome {
    fn failed(rep: usize, error: String) -> RepOutcome {
        RepOutcome {
            rep,
            error: Some(error),
            sigma2: 0.0,
            sigma_degenerate: true,
            failed_halves: 0,
            single_reject: Vec::new(),
            screened_selected: Vec::new(),
            plain_selected: Vec::new(),
            multisplit_p: None,
        }
    }
}

fn run_rep(config: &BenchConfig, rep: usize) -> RepOutcome {
    let inner = || -> Result<RepOutcome> {
        let d = config.model.d();
        let settings = config.run_settings(rep);
        let data = sample(&config.model, config.n, settings.seed)?;
        let centered = data.centered();
        let x = centered.values();

        let mut analyses = Vec::with_capacity(config.splits);
        for s in 0..config.splits {
            analyses.push(analyze_split(&x.view(), &settings, s as u32)?);
        }
        let first = &analyses[0];

        let mut single_reject = Vec::with_capacity(config.alphas.len());
        let mut screened_selected = Vec::with_capacity(config.alphas.len());
        let mut plain_selected = Vec::with_capacity(config.alphas.len());
        let rows = [first.pvalue_rows(0)?, first.pvalue_rows(1)?];
        for &alpha in &config.alphas {
            let mut rejects = Vec::with_capacity(d);
            for q in 1..=d {
                rejects.push(first.mediator_test(q, alpha)?.reject);
            }
            single_reject.push(rejects);
            for (store, method) in [
                (&mut screened_selected, SelectionMethod::Screened),
                (&mut plain_selected, SelectionMethod::Plain),
            ] {
                let a = select_half(&rows[0], alpha, method, 1);
                let b = select_half(&rows[1], alpha, method, 2);
                let mut sel: Vec<usize> =
                    a.selected.iter().chain(b.selected.iter()).copied().collect();
                sel.sort_unstable();
                sel.dedup();
                store.push(sel);
            }
        }

        let multisplit_p = if config.splits > 1 {
            let mut ps = Vec::with_capacity(d);
            for q in 1..=d {
                let mut exposure = Vec::with_capacity(2 * config.splits);
                let mut outcome = Vec::with_capacity(2 * config.splits);
                for analysis in &analyses {
                    let test = analysis.mediator_test(q, config.alphas[0])?;
                    for half in &test.halves {
                        exposure.push(half.exposure_side.p);
                        outcome.push(half.outcome_side.p);
                    }
                }
                let pe = multisplit_combine(&exposure, config.gamma)?;
                let po = multisplit_combine(&outcome, config.gamma)?;
                ps.push(pe.max(po));
            }
            Some(ps)
        } else {
            None
        };

        let failed_halves = analyses
            .iter()
            .flat_map(|a| a.half_failures())
            .filter(Option::is_some)
            .count();
        Ok(RepOutcome {
            rep,
            error: None,
            sigma2: first.sigma2,
            sigma_degenerate: first.sigma_degenerate,
            failed_halves,
            single_reject,
            screened_selected,
            plain_selected,
            multisplit_p,
        })
    };
    match inner() {
        Ok(outcome) => outcome,
        Err(e) => RepOutcome::failed(rep, e.to_string()),
    }
}

/// Rejection rates for one mediator across the level sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediatorRates {
    pub q: usize,
    pub pathway: bool,
    pub strength: f64,
    /// Single-split rejection rate per level.
    pub single: Vec<f64>,
    /// Multisplit rejection rate per level, when multisplit ran.
    pub multisplit: Option<Vec<f64>>,
}

/// Empirical false discovery and true positive rates for one selection
/// method at one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRates {
    pub alpha: f64,
    pub method: SelectionMethod,
    /// Mean false discovery proportion (0 when nothing selected).
    pub fdr: f64,
    /// Mean fraction of true pathways selected.
    pub tpr: f64,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub draws: usize,
    pub splits: usize,
    pub gamma: f64,
    pub seed: u64,
    pub pathway: Vec<bool>,
    pub strength: Vec<f64>,
    pub failed_reps: usize,
    pub per_mediator: Vec<MediatorRates>,
    pub selection: Vec<SelectionRates>,
    pub outcomes: Vec<RepOutcome>,
}

/// Runs the full Monte Carlo study. Replications run in parallel; output
/// is identical for any thread count.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let d = config.model.d();
    let pathway = pathway_truth(&config.model)?;
    let strength = mediation_strength(&config.model)?;

    let outcomes: Vec<RepOutcome> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect();

    let usable: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let failed_reps = outcomes.len() - usable.len();
    let denom = usable.len().max(1) as f64;

    let mut per_mediator = Vec::with_capacity(d);
    for q in 1..=d {
        let single: Vec<f64> = (0..config.alphas.len())
            .map(|ai| {
                usable
                    .iter()
                    .filter(|o| o.single_reject[ai][q - 1])
                    .count() as f64
                    / denom
            })
            .collect();
        let multisplit = (config.splits > 1).then(|| {
            config
                .alphas
                .iter()
                .map(|&alpha| {
                    usable
                        .iter()
                        .filter(|o| {
                            o.multisplit_p
                                .as_ref()
                                .is_some_and(|ps| ps[q - 1] <= alpha)
                        })
                        .count() as f64
                        / denom
                })
                .collect()
        });
        per_mediator.push(MediatorRates {
            q,
            pathway: pathway[q - 1],
            strength: strength[q - 1],
            single,
            multisplit,
        });
    }

    let true_count = pathway.iter().filter(|&&t| t).count();
    let mut selection = Vec::new();
    for (ai, &alpha) in config.alphas.iter().enumerate() {
        for method in [SelectionMethod::Screened, SelectionMethod::Plain] {
            let mut fdp_sum = 0.0;
            let mut tpp_sum = 0.0;
            let mut size_sum = 0.0;
            for o in &usable {
                let sel = match method {
                    SelectionMethod::Screened => &o.screened_selected[ai],
                    SelectionMethod::Plain => &o.plain_selected[ai],
                };
                let false_hits = sel.iter().filter(|&&q| !pathway[q - 1]).count();
                let true_hits = sel.len() - false_hits;
                if !sel.is_empty() {
                    fdp_sum += false_hits as f64 / sel.len() as f64;
                }
                if true_count > 0 {
                    tpp_sum += true_hits as f64 / true_count as f64;
                }
                size_sum += sel.len() as f64;
            }
            selection.push(SelectionRates {
                alpha,
                method,
                fdr: fdp_sum / denom,
                tpr: tpp_sum / denom,
                mean_selected: size_sum / denom,
            });
        }
    }

    Ok(BenchReport {
        n: config.n,
        d,
        reps: config.reps,
        alphas: config.alphas.clone(),
        draws: config.draws,
        splits: config.splits,
        gamma: config.gamma,
        seed: config.seed,
        pathway,
        strength,
        failed_reps,
        per_mediator,
        selection,
        outcomes,
    })
}

/// One row of the tidy per-decision table: every (replication, level,
/// mediator, method) combination with its binary outcome.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionRow {
    pub rep: usize,
    pub alpha: f64,
    pub q: usize,
    pub method: &'static str,
    pub decision: u8,
    pub pathway: u8,
    pub strength: f64,
}

impl BenchReport {
    pub fn decision_rows(&self) -> Vec<DecisionRow> {
        let mut rows = Vec::new();
        for o in &self.outcomes {
            if o.error.is_some() {
                continue;
            }
            for (ai, &alpha) in self.alphas.iter().enumerate() {
                for q in 1..=self.d {
                    let mut push = |method: &'static str, decision: bool| {
                        rows.push(DecisionRow {
                            rep: o.rep,
                            alpha,
                            q,
                            method,
                            decision: decision as u8,
                            pathway: self.pathway[q - 1] as u8,
                            strength: self.strength[q - 1],
                        });
                    };
                    push("single", o.single_reject[ai][q - 1]);
                    push("fdr_screened", o.screened_selected[ai].contains(&q));
                    push("fdr_plain", o.plain_selected[ai].contains(&q));
                    if let Some(ps) = &o.multisplit_p {
                        push("multisplit", ps[q - 1] <= alpha);
                    }
                }
            }
        }
        rows
    }
}
