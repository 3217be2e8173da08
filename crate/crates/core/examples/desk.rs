//! Trains the desk-scale benchmark and prints the metric log.
//!
//! `cargo run --release --example desk -- [seed] [visual-prompt] [zeroshot]`

use std::time::Instant;

use promptvid::config::ExperimentConfig;
use promptvid::data::{generate_synthetic, Split, SyntheticSpec};
use promptvid::inference::zero_shot;
use promptvid::text::default_templates;
use promptvid::train::fit;
use promptvid::vision::VisualPromptKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = ExperimentConfig::desk();
    cfg.optimizer.seed = seed;
    if let Some(p) = args.get(2) {
        cfg.model.visual_prompt = VisualPromptKind::parse(p).expect("visual prompt");
    }
    let dir = std::env::temp_dir().join(format!("promptvid-desk-{seed}"));
    let manifest = generate_synthetic(&SyntheticSpec::new(8, 8, 64, 20, std::env::var("VAL").map_or(5, |v| v.parse().unwrap()), 7 + seed), &dir).expect("dataset");
    let start = Instant::now();
    if args.get(3).map(String::as_str) == Some("zeroshot") {
        let held_out = ["move up", "grow down"];
        let keep: Vec<usize> = (0..manifest.vocab.len())
            .filter(|&i| !held_out.contains(&manifest.vocab.get(i).unwrap()))
            .collect();
        let seen = manifest.restrict_classes(&keep).expect("subset");
        let out = fit(&seen, &cfg, None).expect("training");
        let unseen: Vec<usize> = held_out.iter().map(|l| manifest.vocab.index_of(l).unwrap()).collect();
        let novel = manifest.restrict_classes(&unseen).expect("subset");
        let clips = novel.load_split(Split::Val).expect("clips");
        let report = zero_shot(
            &out.model,
            &clips,
            &novel.vocab,
            &novel.vocab,
            &default_templates(),
            &promptvid::config::ViewSet::single(),
            cfg.input,
        )
        .expect("zero-shot");
        println!("seen-class top1 {:?}", out.metrics.last("val", "top1"));
        println!("zero-shot accuracy {:?} interval {:?}", report.accuracy, report.interval);
    } else {
        let out = fit(&manifest, &cfg, None).expect("training");
        print!("{}", out.metrics.to_text());
    }
    println!("elapsed {:?}", start.elapsed());
}
