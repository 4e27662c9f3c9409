//! Trains the base model on a generated pair and prints Hits@k/MRR.
//!
//! `cargo run --release --example synthetic_alignment -- [semi]`

use triplealign::eval::{self, DEFAULT_KS};
use triplealign::kg::{self, expand_relations, load_kg, Side};
use triplealign::model::init_parameters;
use triplealign::synth::{self, SynthConfig};
use triplealign::{GraphContext, TrainConfig, Trainer, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let semi = std::env::args().any(|a| a == "semi");
    let dir = std::env::temp_dir().join("triplealign-synthetic");
    let synth_cfg = SynthConfig {
        dim: 64,
        ..SynthConfig::default()
    };
    synth::generate(&synth_cfg)?.write(&dir)?;

    let cfg = TrainConfig {
        variant: if semi { Variant::Semi } else { Variant::Base },
        entity_dim: 64,
        relation_dim: 32,
        onto_dim: 32,
        epochs: 100,
        expansion_warmup: 20,
        ..TrainConfig::default()
    };
    let k1 = load_kg(&dir, Side::Source)?;
    let k2 = load_kg(&dir, Side::Target)?;
    let seeds = kg::load_seeds(&dir.join(kg::LINKS_FILE), &k1, &k2, cfg.train_ratio, cfg.rng_seed)?;
    let vectors = dir.join(synth::VECTORS_FILE);
    let e1 = kg::init_embeddings(&k1, Some(&vectors), cfg.entity_dim, cfg.rng_seed)?;
    let e2 = kg::init_embeddings(&k2, Some(&vectors), cfg.entity_dim, cfg.rng_seed)?;
    let params = init_parameters(&cfg.model(), &e1, &e2, cfg.rng_seed)?;
    let (c1, c2) = (
        GraphContext::new(expand_relations(k1)),
        GraphContext::new(expand_relations(k2)),
    );

    let trainer = Trainer::new(&c1, &c2, cfg)?;
    let outcome = trainer.train_with(params, &seeds, |v| {
        if v.record.epoch % 20 == 0 {
            eprintln!(
                "epoch {:>3}  loss {:.4}  pairs {}",
                v.record.epoch, v.record.loss, v.record.train_pairs
            );
        }
    })?;
    let s = &outcome.state;
    for r in eval::evaluate(&s.source_embeddings, &s.target_embeddings, &s.test_pairs, &DEFAULT_KS)? {
        println!(
            "{:<17} Hits@1 {:6.2}  Hits@10 {:6.2}  MRR {:.4}",
            r.direction.to_string(),
            r.hits[&1],
            r.hits[&10],
            r.mrr
        );
    }
    Ok(())
}
