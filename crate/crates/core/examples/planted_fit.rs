//! Fits the bias and full variants to one planted network and reports
//! convergence statistics.
//!
//! cargo run --release --example planted_fit -- [seed] [strength]

use std::time::Instant;

use mlt::model::{sample_network, MaskPlan, Variant};
use mlt::rng::{stream_rng, Stream};
use mlt::synth::{make_planted, SynthSpec};
use mlt::train::{fit, TrainConfig};

fn main() -> mlt::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let strength: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(25.0);
    let spec = SynthSpec {
        n_nodes: 120,
        n_layers: 3,
        block_count: 4,
        strength,
        seed,
        ..Default::default()
    };
    let planted = make_planted(&spec)?;
    let g = sample_network(&planted.params, &mut stream_rng(seed, Stream::Sample, 0));
    for l in 0..g.n_layers() {
        println!("layer {l}: {} edges", g.n_edges(l));
    }
    let mask = MaskPlan::empty(g.n_layers());
    for variant in [Variant::Bias, Variant::Full] {
        let cfg = TrainConfig {
            seed,
            restarts: 1,
            ..Default::default()
        };
        let t = Instant::now();
        let res = fit(&g, variant, &cfg, &mask)?;
        println!(
            "{variant}: loss {:.6} after {} steps (lr {:.2e}) in {:.2?}",
            res.final_loss,
            res.steps,
            res.final_lr,
            t.elapsed()
        );
        let marks: Vec<String> = [1000, 2000, 3000, 4000, 6000, 8000, 12000, 16000]
            .iter()
            .filter_map(|&k| res.loss_trace.get(k - 1).map(|l| format!("{k}:{l:.5}")))
            .collect();
        println!("  trace {}", marks.join(" "));
    }
    Ok(())
}
