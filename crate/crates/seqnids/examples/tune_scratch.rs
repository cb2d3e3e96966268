// Scratch: tune desk-scale training configs for the temporal-advantage and
// embedding-advantage properties.
use std::time::Instant;

use seqnids::data::synth::{context_free_bayes_accuracy, synth_generate, SynthConfig, SynthRule};
use seqnids::data::windows::{make_windows, split_validation};
use seqnids::evaluation::evaluate_windows;
use seqnids::layers::model::{EmbedMode, ModelConfig, ModelKind, Task};
use seqnids::training::{train, LossMode, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("c6");

    match which {
        "c6" => criterion6(),
        "c7" => criterion7(),
        "sweepgap" => sweepgap(),
        _ => eprintln!("unknown scenario"),
    }
}

fn criterion6() {
    let cfg = SynthConfig {
        vocab_size: 6,
        rule: SynthRule::MembershipParity,
        ..SynthConfig::new(20_000, 2, 3, 42)
    };
    let bayes = context_free_bayes_accuracy(&cfg).unwrap();
    println!("context-free bayes accuracy = {bayes:.4}");
    let (schema, records) = synth_generate(&cfg).unwrap();
    let n_train = 16_000;
    let train_recs = records[..n_train].to_vec();
    let test_recs = records[n_train..].to_vec();

    let seq_len = 10;
    let t0 = Instant::now();
    let train_ws_all = make_windows(train_recs, seq_len).unwrap();
    let (train_ws, val_ws) = split_validation(&train_ws_all, 0.1, 42).unwrap();
    let test_ws = make_windows(test_recs.clone(), seq_len).unwrap();

    // LSTM
    let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
        .with_hidden(32)
        .with_fc(32, 10);
    let mut tcfg = TrainConfig::new(Task::Binary, LossMode::M2M, seq_len, 42);
    tcfg.epochs = 20;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 3e-3;
    tcfg.dropout_rate = 0.0;
    tcfg.early_stop_patience = 8;
    tcfg.threads = 2;
    let out = train(&mcfg, &schema, &train_ws, &val_ws, &tcfg).unwrap();
    let lstm_test = evaluate_windows(&out.params, &test_ws).unwrap();
    println!("LSTM: test acc = {:.4} (best val {:?}) in {:.1}s", lstm_test.accuracy, out.best_val_accuracy, t0.elapsed().as_secs_f64());

    // MLP
    let t1 = Instant::now();
    let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Mlp, EmbedMode::Learned)
        .with_hidden(32)
        .with_fc(32, 10);
    let out = train(&mcfg, &schema, &train_ws, &val_ws, &tcfg).unwrap();
    let mlp_test = evaluate_windows(&out.params, &test_ws).unwrap();
    println!("MLP: test acc = {:.4} in {:.1}s (bayes {bayes:.4}, delta {:.4})", mlp_test.accuracy, t1.elapsed().as_secs_f64(), (mlp_test.accuracy - bayes).abs());
}

fn criterion7() {
    let cfg = SynthConfig {
        vocab_size: 24,
        rule: SynthRule::MembershipParity,
        ..SynthConfig::new(12_000, 2, 2, 7)
    };
    let (schema, records) = synth_generate(&cfg).unwrap();
    let n_train = 10_000;
    let train_recs = records[..n_train].to_vec();
    let test_recs = records[n_train..].to_vec();
    let seq_len = 5;
    let train_ws_all = make_windows(train_recs, seq_len).unwrap();
    let (train_ws, val_ws) = split_validation(&train_ws_all, 0.1, 7).unwrap();
    let test_ws = make_windows(test_recs, seq_len).unwrap();

    for embed in [EmbedMode::Learned, EmbedMode::Ordinal] {
        let t0 = Instant::now();
        let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, embed)
            .with_hidden(32)
            .with_fc(32, 10);
        let mut tcfg = TrainConfig::new(Task::Binary, LossMode::M2M, seq_len, 7);
        tcfg.epochs = 15;
        tcfg.batch_size = 64;
        tcfg.learning_rate = 3e-3;
        tcfg.dropout_rate = 0.0;
        tcfg.early_stop_patience = 15;
        tcfg.threads = 2;
        let out = train(&mcfg, &schema, &train_ws, &val_ws, &tcfg).unwrap();
        let test = evaluate_windows(&out.params, &test_ws).unwrap();
        println!("{:?}: test acc = {:.4} in {:.1}s", embed, test.accuracy, t0.elapsed().as_secs_f64());
    }
}

fn sweepgap() {
    use seqnids::evaluation::sweep_sequence_length;
    let cfg = SynthConfig {
        vocab_size: 6,
        rule: SynthRule::MembershipParity,
        ..SynthConfig::new(8_000, 2, 5, 11)
    };
    let (schema, records) = synth_generate(&cfg).unwrap();
    let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
        .with_hidden(32)
        .with_fc(32, 10);
    let mut tcfg = TrainConfig::new(Task::Binary, LossMode::M2M, 1, 11);
    tcfg.epochs = 12;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 3e-3;
    tcfg.dropout_rate = 0.0;
    tcfg.early_stop_patience = 12;
    tcfg.threads = 2;
    let t0 = Instant::now();
    let rows = sweep_sequence_length(&mcfg, &schema, &records, &tcfg, &[1, 6], 0.1).unwrap();
    for r in &rows {
        println!("L={} val_acc={:.4}", r.seq_len, r.val_accuracy);
    }
    println!("gap = {:.4} in {:.1}s", rows[1].val_accuracy - rows[0].val_accuracy, t0.elapsed().as_secs_f64());
}
