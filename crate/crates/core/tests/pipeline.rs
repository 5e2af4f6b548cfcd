mod common;

use std::fs;

use corrmine::config::{parse_config, prepare_splits, RunConfig};
use corrmine::corpus::{Corpus, CorpusRecord, SplitTag, Vocab};
use corrmine::driver::{finetune_config, run_infocse, run_infocse_plus, validation_recall, LoopData};
use corrmine::encoder::{load_checkpoint, save_checkpoint, EncoderConfig, EncoderModel};
use corrmine::eval::pair_quality;
use corrmine::training::{fine_tune, init_neighbor_positives};

fn browsing_session() -> Corpus {
    let titles = [
        "Official LEGO® Shop US",
        "LEGO® DUPLO® World People Set",
        "Spencer Greece Gray Accent Chair",
        "Venus Navy Accent Chair | Bobs.com",
        "Calvin Onyx Black Bob-O-Pedic Queen Sleeper Sofa",
        "Capri Denim Bob-O-Pedic Sleeper Sofa",
        "Youth Vilano Balance Bike",
        "Strider 12 Sport Balance Bike",
    ];
    let record = CorpusRecord {
        doc_id: "user1".into(),
        sentences: titles.iter().map(|s| s.to_string()).collect(),
        topic_labels: Some(vec![0, 0, 1, 1, 2, 2, 3, 3]),
    };
    Corpus::from_records(&[record], Vocab::new(), false, SplitTag::Train).unwrap()
}

#[test]
fn neighbor_heuristic_pairs_unrelated_pages() {
    let c = browsing_session();
    let pairs: Vec<(usize, usize)> = init_neighbor_positives(&c).iter().map(|p| (p.sent_i, p.sent_j)).collect();
    assert_eq!(pairs.len(), 7);
    // toy set next to a chair, sofa next to a bike
    assert!(pairs.contains(&(1, 2)));
    assert!(pairs.contains(&(5, 6)));
    let q = pair_quality(&init_neighbor_positives(&c), &c).unwrap();
    // (0,1) (2,3) (4,5) (6,7) are right; (1,2) (3,4) (5,6) are not
    assert_eq!(q.precision, 4.0 / 7.0);
    assert_eq!(q.recall, 1.0);
}

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synthetic.n_docs = 120;
    cfg.loop_cfg.max_iterations = 4;
    cfg.set_seed(seed);
    cfg
}

#[test]
fn loop_is_deterministic_and_checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(3);
    let [train, valid, _] = prepare_splits(&cfg).unwrap();
    let data = LoopData {
        train: &train.corpus,
        valid: &valid.corpus,
        valid_pairs: &valid.pairs,
    };
    let mut outcomes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run_infocse(&data, &cfg.encoder, &cfg.loop_config(), Some(&out)).unwrap();
        outcomes.push((
            o,
            fs::read(out.join("history.jsonl")).unwrap(),
            fs::read(out.join("ckpt").join("best.idc1")).unwrap(),
        ));
    }
    assert_eq!(outcomes[0].1, outcomes[1].1);
    assert_eq!(outcomes[0].2, outcomes[1].2);

    let best = dir.path().join("a").join("ckpt").join("best.idc1");
    let (model, vocab) = load_checkpoint(&best).unwrap();
    assert!(common::same_persisted_model(&model, &outcomes[0].0.model));
    assert_eq!(&vocab, train.corpus.vocab());
    let again = dir.path().join("again.idc1");
    save_checkpoint(&again, &model, &vocab).unwrap();
    assert_eq!(fs::read(&again).unwrap(), outcomes[0].2);
}

#[test]
fn best_model_is_at_least_the_initialization() {
    let cfg = small_config(1);
    let [train, valid, _] = prepare_splits(&cfg).unwrap();
    let data = LoopData {
        train: &train.corpus,
        valid: &valid.corpus,
        valid_pairs: &valid.pairs,
    };
    let o = run_infocse(&data, &cfg.encoder, &cfg.loop_config(), None).unwrap();
    let h = &o.state.history;
    assert!(o.state.best_metric >= h[0].recall_at_5);
    assert!(h.iter().all(|e| e.recall_at_5 <= o.state.best_metric));
}

fn calibrated(seed: u64) -> RunConfig {
    let mut cfg = parse_config(include_str!("../../../configs/synthetic.json")).unwrap();
    cfg.set_seed(seed);
    cfg
}

#[test]
fn fine_tuning_on_hundred_pairs_raises_validation_recall() {
    for seed in 0..3 {
        let cfg = calibrated(seed);
        let [train, valid, _] = prepare_splits(&cfg).unwrap();
        let data = LoopData {
            train: &train.corpus,
            valid: &valid.corpus,
            valid_pairs: &valid.pairs,
        };
        let mut model = EncoderModel::new(EncoderConfig {
            vocab_size: train.corpus.vocab().len(),
            ..cfg.encoder.clone()
        })
        .unwrap();
        let before = validation_recall(&model, &data).unwrap();
        fine_tune(&mut model, &train.pairs[..100], &train.corpus, &cfg.train).unwrap();
        let after = validation_recall(&model, &data).unwrap();
        assert!(after > before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn single_plus_round_is_one_pass() {
    let mut cfg = small_config(2);
    cfg.loop_cfg.plus_rounds = 1;
    let [train, valid, _] = prepare_splits(&cfg).unwrap();
    let data = LoopData {
        train: &train.corpus,
        valid: &valid.corpus,
        valid_pairs: &valid.pairs,
    };
    let labeled = &train.pairs[..40];
    let lc = cfg.loop_config();
    let mut one_pass = run_infocse(&data, &cfg.encoder, &lc, None).unwrap().model;
    fine_tune(&mut one_pass, labeled, &train.corpus, &finetune_config(&lc.train, 0)).unwrap();
    let plus = run_infocse_plus(&data, labeled, &cfg.encoder, &lc, None).unwrap();
    assert_eq!(plus.state.history.len(), 1);
    assert_eq!(plus.model, one_pass);
}
