use std::time::Instant;

use logan::mediate::{analyze_split, RunSettings};
use logan::sem::{generate_scenario, sample, ScenarioConfig};

fn main() {
    let config = ScenarioConfig { d: 50, p1: 0.05, p2: 0.15 };
    let model = generate_scenario(&config, 3).unwrap();
    for kappa in [0.1f64, 0.2] {
        for n in [200usize, 100] {
            let data = sample(&model, n, 0).unwrap().centered();
            let x = data.values();
            let mut settings = RunSettings::default();
            settings.notears.kappa = kappa;
            settings.seed = 0;
            let t0 = Instant::now();
            let a = analyze_split(&x.view(), &settings, 0).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let fails = a.half_failures().iter().filter(|f| f.is_some()).count();
            println!(
                "kappa {kappa} n {n}: {dt:.1}s per split (sigma2 {:.3}, failures {fails})",
                a.sigma2
            );
        }
    }
}
