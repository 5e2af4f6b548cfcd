//! Per-round validation and test Recall@5 of the plus loop against the
//! one-pass baseline (self-supervised run, then one fine-tune).
//!
//! `cargo run --release --example plus_probe -- [seeds] [config-json]`

use corrmine::config::{parse_config, prepare_splits};
use corrmine::driver::{finetune_config, run_infocse, run_infocse_plus, LoopData};
use corrmine::encoder::load_checkpoint;
use corrmine::eval::evaluate_split;
use corrmine::training::fine_tune;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let base = parse_config(args.get(2).map(String::as_str).unwrap_or("{}")).expect("config");
    let labeled_n = base.labeled_limit.unwrap_or(100);
    let (mut wins, mut ties) = (0, 0);
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let [train, valid, test] = prepare_splits(&cfg).unwrap();
        let data = LoopData {
            train: &train.corpus,
            valid: &valid.corpus,
            valid_pairs: &valid.pairs,
        };
        let labeled = &train.pairs[..labeled_n.min(train.pairs.len())];
        let lc = cfg.loop_config();
        let r5 = |m: &corrmine::encoder::EncoderModel| {
            evaluate_split(m, &test.corpus, &test.pairs, &[5]).unwrap().recall(5).unwrap()
        };
        let ssl = run_infocse(&data, &cfg.encoder, &lc, None).unwrap().model;
        let mut one = ssl.clone();
        fine_tune(&mut one, labeled, data.train, &finetune_config(&lc.train, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let plus = run_infocse_plus(&data, labeled, &cfg.encoder, &lc, Some(dir.path())).unwrap();
        let rounds: Vec<String> = plus
            .state
            .history
            .iter()
            .map(|h| {
                let (m, _) = load_checkpoint(&dir.path().join("ckpt").join(format!("iter_{}.idc1", h.t))).unwrap();
                format!("r{} valid {:.2} test {:.2}", h.t, h.recall_at_5, r5(&m))
            })
            .collect();
        let (a, b) = (r5(&plus.model), r5(&one));
        wins += (a > b) as u32;
        ties += (a == b) as u32;
        println!(
            "seed {seed}: ssl {:.2} one-pass {b:.2} plus {a:.2} (best round {:?}) | {}",
            r5(&ssl),
            plus.state.best_t,
            rounds.join("; ")
        );
    }
    println!("plus > one-pass {wins}, ties {ties} of {seeds}");
}
