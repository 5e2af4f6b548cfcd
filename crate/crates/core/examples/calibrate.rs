//! Per-seed loop statistics on the synthetic corpus: mined-pair precision per
//! iteration, stopping iteration, and test Recall@5 of the initialization-only
//! model against the loop's best model.
//!
//! `cargo run --release --example calibrate -- [seeds] [config-json]`
//!
//! The optional JSON is a partial run configuration applied over the defaults.

use std::time::Instant;

use corrmine::config::{parse_config, prepare_splits};
use corrmine::driver::{run_infocse, LoopData};
use corrmine::eval::evaluate_split;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let base = parse_config(args.get(2).map(String::as_str).unwrap_or("{}")).expect("config");
    let verbose = std::env::var_os("VERBOSE").is_some();
    let (mut neigh, mut first, mut last, mut up, mut wins, mut max_stop) = (0.0, 0.0, 0.0, 0, 0, 0);
    let (mut r_init, mut r_best) = (0.0, 0.0);
    let start = Instant::now();
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let [train, valid, test] = prepare_splits(&cfg).unwrap();
        let data = LoopData {
            train: &train.corpus,
            valid: &valid.corpus,
            valid_pairs: &valid.pairs,
        };
        let out = run_infocse(&data, &cfg.encoder, &cfg.loop_config(), None).unwrap();
        let r5 = |m| evaluate_split(m, &test.corpus, &test.pairs, &[5]).unwrap().recall(5).unwrap();
        let (ri, rb) = (r5(&out.init_model), r5(&out.model));
        let h = &out.state.history;
        let p = |i: usize| h[i].pair_precision.unwrap();
        neigh += p(0);
        first += p(1.min(h.len() - 1));
        last += p(h.len() - 1);
        up += (p(h.len() - 1) > p(1)) as u32;
        wins += (rb > ri) as u32;
        r_init += ri;
        r_best += rb;
        let stop_t = if out.state.stopped_early() { h.last().unwrap().t } else { 99 };
        max_stop = max_stop.max(stop_t);
        if verbose {
            println!("seed {seed}: best_t={:?} test r5 init={ri:.3} best={rb:.3}", out.state.best_t);
            for e in h {
                println!(
                    "   t={} valid_r5={:.3} pairs={} precision={:.3} stopped={}",
                    e.t, e.recall_at_5, e.pairs, e.pair_precision.unwrap(), e.stopped
                );
            }
        }
    }
    let n = seeds as f64;
    println!(
        "precision neighbor={:.4} iter1={:.4} final={:.4} (final>iter1 in {up}/{seeds}) | test r5 init={:.3} best={:.3} (best>init in {wins}/{seeds}) | max stop t={max_stop} | {:.1}s",
        neigh / n,
        first / n,
        last / n,
        r_init / n,
        r_best / n,
        start.elapsed().as_secs_f64()
    );
}
