use logan::mediate::{analyze_split, RunSettings};
use logan::sem::{generate_scenario, mediation_strength, sample, ScenarioConfig};

fn main() {
    let config = ScenarioConfig { d: 50, p1: 0.05, p2: 0.15 };
    let seeds: Vec<u64> = std::env::var("SEEDS")
        .unwrap_or_else(|_| "4".into())
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    let reps: u64 = std::env::var("REPS").unwrap_or_else(|_| "10".into()).parse().unwrap();
    let n: usize = std::env::var("N").unwrap_or_else(|_| "200".into()).parse().unwrap();
    for &model_seed in &seeds {
        let model = generate_scenario(&config, model_seed).unwrap();
        let delta = mediation_strength(&model).unwrap();
        let strong: Vec<usize> = delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d >= 1.0)
            .map(|(i, _)| i + 1)
            .collect();
        let nulls: Vec<usize> = delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0.0)
            .map(|(i, _)| i + 1)
            .collect();
        let mut strong_rejects = vec![0u32; strong.len()];
        let mut null_rejects = 0u64;
        let mut sig_in_band = 0u32;
        for rep in 0..reps {
            let data = sample(&model, n, rep).unwrap().centered();
            let x = data.values();
            let mut settings = RunSettings::default();
            settings.notears.kappa = 0.1;
            settings.seed = rep;
            let a = analyze_split(&x.view(), &settings, 0).unwrap();
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
            println!("model {model_seed} rep {rep}: sigma2 {:.3}", a.sigma2);
        }
        let power: Vec<(usize, f64)> = strong
            .iter()
            .zip(&strong_rejects)
            .map(|(&q, &r)| (q, r as f64 / reps as f64))
            .collect();
        println!(
            "model {model_seed}: strong power {:?}, null rate {:.4}, sigma in band {sig_in_band}/{reps}",
            power,
            null_rejects as f64 / (reps as f64 * nulls.len() as f64)
        );
    }
}
