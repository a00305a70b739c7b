//! Cross-validated MAP of each method on a synthetic corpus.
//!
//! Usage: `cargo run --release -p avembed-core --example method_ordering -- [config.json]`
//! where the optional JSON holds `{"synth": {...}, "methods": {...}, "seeds": [...]}` overrides.

use std::time::Instant;

use avembed_core::attention::{AttentionParams, QueryMode};
use avembed_core::data::{synth_dataset, Activation, SynthConfig, SynthGenerator};
use avembed_core::deep::TrainConfig;
use avembed_core::eval::{cross_validate, Corpus, CvOptions};
use avembed_core::pipeline::{audio_features, cluster_rows, visual_features, Method, MethodConfig};

fn main() -> avembed_core::Result<()> {
    let overrides: serde_json::Value = match std::env::args().nth(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).expect("config file"))?,
        None => serde_json::json!({}),
    };
    let mut synth = SynthConfig {
        n_videos: 1000,
        latent_dim: 16,
        nuisance_dim: 24,
        nuisance_std: 1.0,
        view_noise_std: 0.5,
        noise_std: 0.5,
        visual_dim: 256,
        visual_activation: Activation::Relu,
        ..SynthConfig::default()
    };
    if let Some(s) = overrides.get("synth") {
        let mut base = serde_json::to_value(&synth)?;
        merge(&mut base, s);
        synth = serde_json::from_value(base)?;
    }
    let base_method = MethodConfig {
        r: 10,
        train: TrainConfig {
            epochs: 10,
            audio_layers: vec![64, 32],
            visual_layers: vec![64, 32],
            ..TrainConfig::default()
        },
        ..MethodConfig::default()
    };
    let mut base_value = serde_json::to_value(&base_method)?;
    if let Some(m) = overrides.get("method") {
        merge(&mut base_value, m);
    }
    let methods: Vec<Method> = match overrides.get("methods") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => vec![Method::Cca, Method::Ccca, Method::Dcca, Method::Sdcca],
    };
    let seeds: Vec<u64> = match overrides.get("seeds") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => (0..5).collect(),
    };
    let mut totals = vec![0.0; methods.len()];
    for &seed in &seeds {
        let cfg = SynthConfig { seed, ..synth.clone() };
        let t = Instant::now();
        let (ds, truth) = synth_dataset(&cfg)?;
        let gen = SynthGenerator::new(cfg.clone())?;
        let att = AttentionParams::random(cfg.audio_dim, 16, 16, seed);
        let audio = audio_features(&ds, QueryMode::Mean, &att)?;
        let visual = visual_features(&ds)?;
        let clusters = cluster_rows(&audio, &gen.exemplars(3), 100, 0.0)?;
        let agree = clusters.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let ids = ds.manifest().ids().iter().map(|s| s.to_string()).collect();
        let corpus = Corpus::new(ids, audio, visual, clusters.labels.clone())?;
        print!("seed {seed}: data {:.1}s, k-means agreement {agree}/{}", t.elapsed().as_secs_f64(), truth.len());
        for (mi, &method) in methods.iter().enumerate() {
            let mut value = base_value.clone();
            value["method"] = serde_json::to_value(method)?;
            let mc: MethodConfig = serde_json::from_value(value)?;
            let t = Instant::now();
            let report = cross_validate(&corpus, &mc, &CvOptions { seed, ..CvOptions::default() })?;
            totals[mi] += report.map;
            print!(", {method} {:.4} ({:.1}s)", report.map, t.elapsed().as_secs_f64());
        }
        println!();
    }
    for (m, t) in methods.iter().zip(&totals) {
        println!("{m}: mean MAP {:.4}", t / seeds.len() as f64);
    }
    Ok(())
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}
