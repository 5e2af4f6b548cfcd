//! Ceiling statistics from an oracle encoder that maps every private token to
//! its topic's one-hot direction and every shared token to zero: the best
//! mined-pair precision the partition rule can reach on a corpus, and the
//! corresponding test Recall@5.
//!
//! `cargo run --release --example oracle -- [seeds] [config-json]`

use corrmine::config::{parse_config, prepare_splits};
use corrmine::encoder::{EncoderConfig, EncoderModel};
use corrmine::eval::{evaluate_split, pair_quality};
use corrmine::idc::annotate_corpus;
use corrmine::training::init_neighbor_positives;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let base = parse_config(args.get(2).map(String::as_str).unwrap_or("{}")).expect("config");
    let (mut neigh, mut idc, mut r5) = (0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let [train, _, test] = prepare_splits(&cfg).unwrap();
        let vocab = train.corpus.vocab();
        let n_topics = cfg.synthetic.n_topics;
        let mut model = EncoderModel::new(EncoderConfig {
            vocab_size: vocab.len(),
            embed_dim: n_topics,
            out_dim: n_topics,
            ..Default::default()
        })
        .unwrap();
        model.token_table.iter_mut().for_each(|x| *x = 0.0);
        model.proj_bias.iter_mut().for_each(|x| *x = 0.0);
        model.projection.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..n_topics {
            model.projection[k * n_topics + k] = 1.0;
        }
        for (id, tok) in vocab.tokens().iter().enumerate() {
            if let Some(rest) = tok.strip_prefix('t') {
                let topic: usize = rest.split('w').next().unwrap().parse().unwrap();
                model.token_table[id * n_topics + topic] = 1.0;
            }
        }
        let pairs = annotate_corpus(&model, &train.corpus, &cfg.idc).unwrap();
        let q = pair_quality(&pairs, &train.corpus).unwrap();
        let n = pair_quality(&init_neighbor_positives(&train.corpus), &train.corpus).unwrap();
        let r = evaluate_split(&model, &test.corpus, &test.pairs, &[5]).unwrap().recall(5).unwrap();
        println!("seed {seed}: neighbor={:.4} oracle idc={:.4} oracle test r5={r:.3}", n.precision, q.precision);
        neigh += n.precision;
        idc += q.precision;
        r5 += r;
    }
    let s = seeds as f64;
    println!("mean neighbor={:.4} oracle idc={:.4} gap={:.4} oracle r5={:.3}", neigh / s, idc / s, (idc - neigh) / s, r5 / s);
}
