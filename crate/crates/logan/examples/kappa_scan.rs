use logan::mediate::{analyze_split, RunSettings};
use logan::sem::{generate_scenario, mediation_strength, sample, ScenarioConfig};

fn main() {
    let config = ScenarioConfig { d: 50, p1: 0.05, p2: 0.15 };
    let model = generate_scenario(&config, 4).unwrap();
    let delta = mediation_strength(&model).unwrap();
    let strong: Vec<usize> = delta.iter().enumerate().filter(|(_, d)| **d >= 1.0).map(|(i, _)| i + 1).collect();
    let nulls: Vec<usize> = delta.iter().enumerate().filter(|(_, d)| **d == 0.0).map(|(i, _)| i + 1).collect();
    let kappa: f64 = std::env::var("KAPPA").unwrap_or_else(|_| "0.5".into()).parse().unwrap();
    let reps: u64 = std::env::var("REPS").unwrap_or_else(|_| "10".into()).parse().unwrap();
    let mut strong_rejects = vec![0u32; strong.len()];
    let mut null_rejects = 0u64;
    let mut sig_in_band = 0u32;
    let mut sig_sum = 0.0;
    for rep in 0..reps {
        let data = sample(&model, 200, rep).unwrap().centered();
        let x = data.values();
        let mut settings = RunSettings::default();
        settings.notears.kappa = kappa;
        settings.seed = rep;
        let a = analyze_split(&x.view(), &settings, 0).unwrap();
        let edges: usize = a.halves.iter().filter_map(|h| h.fit.as_ref()).map(|f| f.support.iter().filter(|v| **v != 0.0).count()).sum::<usize>() / 2;
        for (k, &q) in strong.iter().enumerate() {
            if a.mediator_test(q, 0.05).unwrap().reject {
                strong_rejects[k] += 1;
            }
        }
        for &q in &nulls {
            if a.mediator_test(q, 0.05).unwrap().reject {
                null_rejects += 1;
            }
        }
        if a.sigma2 >= 0.85 && a.sigma2 <= 1.15 {
            sig_in_band += 1;
        }
        sig_sum += a.sigma2;
        println!("kappa {kappa} rep {rep}: sigma2 {:.3}, mean screen edges {edges}", a.sigma2);
    }
    let power: Vec<(usize, f64)> = strong.iter().zip(&strong_rejects).map(|(&q, &r)| (q, r as f64 / reps as f64)).collect();
    println!(
        "kappa {kappa}: power {:?}, null rate {:.4}, sigma mean {:.3} in band {sig_in_band}/{reps}",
        power,
        null_rejects as f64 / (reps as f64 * nulls.len() as f64),
        sig_sum / reps as f64
    );
}
