//! Test Recall@5 after fine-tuning the converged self-supervised model with a
//! grid of learning rates and epoch counts.
//!
//! `cargo run --release --example ft_probe -- [seeds] [config-json]`

use corrmine::config::{parse_config, prepare_splits};
use corrmine::driver::{finetune_config, run_infocse, LoopData};
use corrmine::eval::evaluate_split;
use corrmine::training::fine_tune;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let base = parse_config(args.get(2).map(String::as_str).unwrap_or("{}")).expect("config");
    let lrs = [3e-4, 1e-3, 3e-3, 1e-2];
    let epochs = [5, 20, 60];
    let mut sums = vec![[0.0f64; 2]; lrs.len() * epochs.len()];
    let (mut ssl_t, mut ssl_v) = (0.0, 0.0);
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let [train, valid, test] = prepare_splits(&cfg).unwrap();
        let data = LoopData {
            train: &train.corpus,
            valid: &valid.corpus,
            valid_pairs: &valid.pairs,
        };
        let labeled = &train.pairs[..100];
        let lc = cfg.loop_config();
        let r5 = |m: &corrmine::encoder::EncoderModel, s: &corrmine::corpus::Split| {
            evaluate_split(m, &s.corpus, &s.pairs, &[5]).unwrap().recall(5).unwrap()
        };
        let ssl = run_infocse(&data, &cfg.encoder, &lc, None).unwrap().model;
        ssl_t += r5(&ssl, &test);
        ssl_v += r5(&ssl, &valid);
        for (i, &lr) in lrs.iter().enumerate() {
            for (j, &ep) in epochs.iter().enumerate() {
                let mut m = ssl.clone();
                let mut tc = finetune_config(&lc.train, 0);
                tc.learning_rate = lr;
                tc.finetune_epochs = ep;
                fine_tune(&mut m, labeled, data.train, &tc).unwrap();
                sums[i * epochs.len() + j][0] += r5(&m, &test);
                sums[i * epochs.len() + j][1] += r5(&m, &valid);
            }
        }
    }
    let n = seeds as f64;
    println!("ssl: test {:.3} valid {:.3}", ssl_t / n, ssl_v / n);
    for (i, lr) in lrs.iter().enumerate() {
        for (j, ep) in epochs.iter().enumerate() {
            let s = sums[i * epochs.len() + j];
            println!("lr {lr:e} epochs {ep}: test {:.3} valid {:.3}", s[0] / n, s[1] / n);
        }
    }
}
