use std::sync::Arc;
use std::time::Instant;

use grank::catalog::{synthetic_catalog, FIXTURE_SEED};
use grank::simulator::{run_experiment, ExperimentConfig, Scenario};

fn main() {
    let catalog = Arc::new(synthetic_catalog(FIXTURE_SEED));
    let scenario: Scenario = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "baseline".into())
        .parse()
        .unwrap();
    let f: f64 = std::env::args()
        .nth(2)
        .unwrap_or_else(|| "0".into())
        .parse()
        .unwrap();
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    cfg.isolation_f = f;
    cfg.seed = 42;
    let start = Instant::now();
    let out = run_experiment(cfg, catalog).unwrap();
    let elapsed = start.elapsed();
    println!("scenario={scenario} F={f} elapsed={elapsed:?} entries={}", out.total_entries);
    let s = &out.snapshots;
    let pick = [0usize, 1, 4, 9, 24, 48, 49, 50, 51, 59, 69, 84, 99];
    println!("tick  mean_dist  med_dist  benign_mean  top%med  log_mean  msg_bytes  entry_bytes");
    for &i in pick.iter().filter(|&&i| i < s.len()) {
        let x = &s[i];
        println!(
            "{:5}  {:9.2}  {:8.2}  {:11.2}  {:7.1}  {:8.0}  {:9.0}  {:9.0}",
            x.tick,
            x.mean_distance,
            x.median_distance,
            x.mean_distance_benign_opt,
            x.median_top_song_pct,
            x.mean_clicklog_entries,
            x.mean_gossip_message_bytes,
            x.mean_entry_bytes
        );
    }
    let max_msg = s.iter().map(|x| x.mean_gossip_message_bytes).fold(0.0, f64::max);
    println!("max snapshot mean msg bytes = {max_msg:.0}");
    println!(
        "first mean_dist = {:.2}, last = {:.2}, ratio = {:.4}",
        s[0].mean_distance,
        s.last().unwrap().mean_distance,
        s.last().unwrap().mean_distance / s[0].mean_distance
    );
}
