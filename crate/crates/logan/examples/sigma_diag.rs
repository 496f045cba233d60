use logan::boolmat::{bool_star, threshold_binary};
use logan::boot::edge_stat_sd;
use logan::debias::{fit_half, RefitSettings};
use logan::mediate::split_rows;
use logan::sem::{generate_scenario, sample, ScenarioConfig};
use std::collections::BTreeSet;

fn main() {
    let config = ScenarioConfig { d: 50, p1: 0.05, p2: 0.15 };
    let model = generate_scenario(&config, 4).unwrap();
    let truth_support = threshold_binary(&model.weights, 0.0);
    let truth_reach = bool_star(&truth_support).unwrap();
    let data = sample(&model, 200, 0).unwrap().centered();
    let x = data.values();
    let (rows1, rows2) = split_rows(200, 0, 0).unwrap();
    let kappa: f64 = std::env::var("KAPPA").unwrap_or_else(|_| "0.5".into()).parse().unwrap();
    let mut nt = logan::dagfit::NotearsSettings::default();
    nt.kappa = kappa;
    let refit = RefitSettings::default();
    let mut fit = fit_half(&x.view(), 1, &rows1, &rows2, &nt, &refit).unwrap();
    let d = 50usize;
    let mut union: BTreeSet<(usize, usize)> = BTreeSet::new();
    for q in 1..=d {
        union.extend(fit.edge_set(0, q).unwrap());
        union.extend(fit.edge_set(q, d + 1).unwrap());
    }
    let edges: Vec<(usize, usize)> = union.into_iter().collect();
    fit.project_edges(&x.view(), &edges, &refit).unwrap();
    println!("union edges {}", edges.len());
    let sigma = 1.15f64; // approx sqrt(sigma2_hat)
    let mut sds: Vec<(f64, usize, usize)> = Vec::new();
    for &(i, j) in &edges {
        let proj = fit.projection(i, j).unwrap();
        if proj.degenerate {
            println!("edge ({i},{j}) degenerate");
            continue;
        }
        let sd = edge_stat_sd(proj.residual.as_slice().unwrap(), proj.denom, sigma);
        sds.push((sd, i, j));
    }
    sds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let big = sds.iter().filter(|(s, _, _)| *s > 10.0).count();
    let med = sds[sds.len() / 2].0;
    println!("median sd {med:.2}, edges with sd>10: {big}");
    for &(sd, i, j) in sds.iter().take(15) {
        let kind = if truth_support[[i, j]] != 0.0 {
            "true"
        } else if truth_support[[j, i]] != 0.0 {
            "reversed"
        } else {
            "spurious"
        };
        // does the screen's ancestor set of i contain true descendants of j?
        let mut desc_in_act = 0usize;
        for k in 0..52 {
            if k != i && k != j && fit.reach[[i, k]] != 0.0 && truth_reach[[k, j]] != 0.0 {
                desc_in_act += 1;
            }
        }
        println!("sd {sd:9.1} edge ({i:2},{j:2}) {kind:8} true-descendants-of-parent-in-ACT {desc_in_act}");
    }
}
