//! Trains on in-memory synthetic data and reports held-out metrics.
//!
//! `cargo run --release --example desk_run -- [key=value ...]`

use std::time::Instant;

use tempseq::experiment::{evaluate_model, synthesize_task_data, train, ExperimentConfig, Split};

fn main() -> tempseq::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = ExperimentConfig::from_toml("", &overrides)?;
    let tasks = cfg.training_tasks();
    let train_data =
        tasks.iter().map(|&t| synthesize_task_data(&cfg, t, Split::Train)).collect::<tempseq::Result<Vec<_>>>()?;
    let test_data =
        tasks.iter().map(|&t| synthesize_task_data(&cfg, t, Split::Test)).collect::<tempseq::Result<Vec<_>>>()?;
    let t0 = Instant::now();
    let every = (cfg.epochs / 10).max(1);
    let result = train(&cfg, &train_data, |log, _| {
        if log.epoch % every == 0 {
            eprintln!("epoch {:>4} steps {:>3} loss {:.4} {:?} {:.1}s", log.epoch, log.iterations, log.loss, log.task_loss, t0.elapsed().as_secs_f64());
        }
        Ok(())
    })?;
    eprintln!("params {}", result.model.parameter_count());
    for data in &test_data {
        let t1 = Instant::now();
        let report = evaluate_model(&cfg, &result.model, data)?;
        print!("{}", report.to_table());
        eprintln!("eval {:.1}s", t1.elapsed().as_secs_f64());
    }
    Ok(())
}
