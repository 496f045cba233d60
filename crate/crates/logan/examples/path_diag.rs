use logan::mediate::{analyze_split, RunSettings};
use logan::sem::{generate_scenario, mediation_strength, sample, ScenarioConfig};

fn main() {
    let config = ScenarioConfig { d: 50, p1: 0.05, p2: 0.15 };
    let model = generate_scenario(&config, 4).unwrap();
    let delta = mediation_strength(&model).unwrap();
    let data = sample(&model, 200, 0).unwrap().centered();
    let x = data.values();
    let mut settings = RunSettings::default();
    settings.notears.kappa = 0.1;
    settings.seed = 0;
    let a = analyze_split(&x.view(), &settings, 0).unwrap();
    println!("sigma2 {:.3}", a.sigma2);
    for q in [41usize, 35, 10] {
        println!("mediator {q} (delta {:.2}):", delta[q - 1]);
        for half in 0..2 {
            let e = a.sub_test(half, 0, q, 0.05);
            let o = a.sub_test(half, q, 51, 0.05);
            println!(
                "  half {half}: exp stat {:.3} crit {:?} p {:.3} edges {} untestable {} | out stat {:.3} crit {:?} p {:.3} edges {} untestable {}",
                e.stat, e.critical, e.p, e.edges, e.untestable,
                o.stat, o.crit_or_nan(), o.p, o.edges, o.untestable
            );
        }
    }
}
trait CritOrNan { fn crit_or_nan(&self) -> Option<f64>; }
impl CritOrNan for logan::mediate::SubTest {
    fn crit_or_nan(&self) -> Option<f64> { self.critical }
}
