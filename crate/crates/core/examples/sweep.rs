//! Train one config over several seeds and report mode coverage and held-out
//! reconstruction every `checkpoint_every` steps.
//!
//! cargo run --release --example sweep -- configs/mixture.toml aegan 0..3 [section.key=value ...]

use std::time::Instant;

use aegan::cli::{coverage_report, held_out_reconstruction};
use aegan::config::RunConfig;
use aegan::training::{train_from, Mode, TrainObserver, TrainState};

struct Progress<'a> {
    config: &'a RunConfig,
    baseline: Option<f64>,
    start: Instant,
}

impl TrainObserver for Progress<'_> {
    fn on_checkpoint(&mut self, state: &TrainState) -> aegan::Result<()> {
        let (coverage, _) = coverage_report(state, self.config, self.config.eval.grid_seed)?;
        let ratio = match self.baseline {
            Some(b) => format!("{:.1}x", b / held_out_reconstruction(state, self.config, state.config.seed)?.mean),
            None => "-".into(),
        };
        println!(
            "  {:>6} {:6.1}s hit={} hq={:.3} recon={ratio} counts={:?}",
            state.step,
            self.start.elapsed().as_secs_f64(),
            coverage.modes_hit,
            coverage.high_quality_fraction,
            coverage.assignment_counts
        );
        Ok(())
    }
}

fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [path, mode, seeds, overrides @ ..] = args.as_slice() else {
        eprintln!("usage: sweep <config.toml> <mode> <from..to> [section.key=value ...]");
        std::process::exit(2);
    };
    let mut table: toml::Table = std::fs::read_to_string(path)?.parse()?;
    for kv in overrides {
        let (key, value) = kv.split_once('=').expect("section.key=value");
        let (section, key) = key.split_once('.').expect("section.key");
        let entry = table.entry(section).or_insert_with(|| toml::Value::Table(Default::default()));
        entry.as_table_mut().expect("section table").insert(key.into(), override_value(value));
    }
    let config = RunConfig::parse(&table.to_string())?;
    let mode: Mode = mode.parse()?;
    let (from, to) = seeds.split_once("..").expect("seed range from..to");
    let data = config.data.load()?;
    println!("{} {}", mode.name(), overrides.join(" "));
    for seed in from.parse::<u64>().unwrap()..to.parse::<u64>().unwrap() {
        let training = aegan::training::TrainingConfig { mode, seed, ..config.training() };
        let state = TrainState::new(&training, data.shape(), data.range())?;
        let baseline = match mode.has_encoder() {
            true => Some(held_out_reconstruction(&state, &config, seed)?.mean),
            false => None,
        };
        println!("seed {seed}");
        train_from(state, &data, &mut Progress { config: &config, baseline, start: Instant::now() })?;
    }
    Ok(())
}
