//! Subcommand implementations.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use avembed_core::attention::{query_representation, score_sequence, select_top_k, AttentionParams, QueryMode};
use avembed_core::cca::Side;
use avembed_core::data::{filter_manifest, synth_dataset, Dataset, LengthSpan, SynthGenerator};
use avembed_core::eval::{cross_validate, pr_curve_export, Corpus, CvOptions, Embedder};
use avembed_core::pipeline::{
    audio_features, cluster_rows, seed_rows, select_chunks, train_method, visual_features, MethodConfig, TrainedModel,
};
use avembed_core::retrieval::{build_index, EmbeddingIndex};
use avembed_core::seed::derive_seed;
use avembed_core::supervision::{read_assignments, write_assignments, Assignment, SeedsFile};
use avembed_core::Error;
use nalgebra::{DMatrix, DVector};

use crate::config::RunConfig;
use crate::{
    AttentionArgs, ChunkSelectArgs, Cli, ClusterArgs, Command, DataArgs, EvalArgs, IndexArgs, IngestArgs, MethodArgs,
    ModeArgs, QueryArgs, SynthArgs, TrainArgs, CliError,
};

type Result<T> = std::result::Result<T, CliError>;

const ATTENTION_TAG: u64 = 0x4154;
const SEEDS_FILE: &str = "seeds.json";
const TRUTH_FILE: &str = "labels.jsonl";

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Ingest(a) => ingest(cfg, a),
        Command::ChunkSelect(a) => chunk_select(cfg, a),
        Command::Cluster(a) => cluster(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Index(a) => index(cfg, a),
        Command::Query(a) => query(cfg, a),
        Command::Eval(a) => eval(cfg, a),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if a.data.is_some() {
        cfg.paths.data = a.data.clone();
    }
}

fn apply_mode(cfg: &mut RunConfig, a: &ModeArgs) {
    if a.c.is_some() || a.k.is_some() {
        cfg.c = a.c;
        cfg.k = a.k;
    }
}

fn apply_attention(cfg: &mut RunConfig, a: &AttentionArgs) {
    if a.attention.is_some() {
        cfg.paths.attention = a.attention.clone();
    }
    set(&mut cfg.attention_hidden, a.attention_hidden);
    set(&mut cfg.attention_dim, a.attention_dim);
}

fn apply_method(cfg: &mut RunConfig, a: &MethodArgs) {
    let m = &mut cfg.model;
    set(&mut m.method, a.method);
    set(&mut m.r, a.r);
    set(&mut m.f, a.f);
    if a.target_pairs.is_some() {
        m.target_pairs = a.target_pairs;
    }
    if let Some(v) = a.ridge {
        m.ridge = avembed_core::cca::Ridge::Relative(v);
    }
    set(&mut m.kernel.kappa, a.kappa);
    if let Some(beta) = a.beta {
        m.kernel.kernel = avembed_core::cca::Kernel::Gaussian { beta };
    }
    set(&mut m.kernel.max_samples, a.kcca_max_samples);
    let t = &mut m.train;
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.epochs, a.epochs);
    set(&mut t.learning_rate, a.learning_rate);
    set(&mut t.dropout, a.dropout);
    set(&mut t.audio_layers, a.audio_layers.clone());
    set(&mut t.visual_layers, a.visual_layers.clone());
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.require(&cfg.paths.data, "data")?;
    Ok(Dataset::load(dir)?)
}

fn ids(ds: &Dataset) -> Vec<String> {
    ds.manifest().ids().iter().map(|s| s.to_string()).collect()
}

fn attention(cfg: &RunConfig, ds: &Dataset) -> Result<AttentionParams> {
    let dim = ds.videos().first().map_or(0, |v| v.audio.dim());
    let params = match &cfg.paths.attention {
        Some(p) => AttentionParams::load(p)?,
        None => AttentionParams::random(
            dim,
            cfg.attention_hidden,
            cfg.attention_dim,
            derive_seed(cfg.seed, &[ATTENTION_TAG]),
        ),
    };
    if params.input_dim() != dim {
        return Err(Error::Validation(format!(
            "attention weights take {}-wide chunks but audio features are {dim} wide",
            params.input_dim()
        ))
        .into());
    }
    Ok(params)
}

fn labels(ds: &Dataset, path: &Path) -> Result<Vec<usize>> {
    let table: HashMap<String, usize> = read_assignments(path)?
        .into_iter()
        .map(|a| (a.video_id, a.label))
        .collect();
    ds.manifest()
        .ids()
        .iter()
        .map(|id| {
            table
                .get(*id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{} has no label for {id}", path.display())).into())
        })
        .collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.row_iter().map(|r| r.transpose()).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn synth(mut cfg: RunConfig, a: SynthArgs) -> Result<()> {
    if a.out.is_some() {
        cfg.paths.out = a.out.clone();
    }
    let s = &mut cfg.synth;
    set(&mut s.n_videos, a.videos);
    set(&mut s.n_clusters, a.clusters);
    set(&mut s.latent_dim, a.latent_dim);
    set(&mut s.nuisance_dim, a.nuisance_dim);
    set(&mut s.nuisance_std, a.nuisance_std);
    set(&mut s.view_noise_std, a.view_noise);
    set(&mut s.noise_std, a.noise);
    if a.frame_noise.is_some() {
        s.frame_noise_std = a.frame_noise;
    }
    set(&mut s.audio_dim, a.audio_dim);
    set(&mut s.visual_dim, a.visual_dim);
    set(&mut s.visual_activation, a.activation);
    set(&mut cfg.exemplars, a.exemplars);
    cfg.synth.seed = cfg.seed;
    let out = cfg.require(&cfg.paths.out, "out")?;
    if cfg.exemplars == 0 {
        return Err(CliError::Usage("--exemplars must be at least 1".into()));
    }

    let (ds, truth) = synth_dataset(&cfg.synth)?;
    ds.write(&out)?;
    let generator = SynthGenerator::new(cfg.synth.clone())?;
    let names = ids(&ds);
    let groups = generator
        .exemplars(cfg.exemplars)
        .into_iter()
        .map(|g| g.into_iter().map(|i| names[i].clone()).collect())
        .collect();
    SeedsFile::from_groups(groups).write(out.join(SEEDS_FILE))?;
    let assignments: Vec<Assignment> = names
        .iter()
        .zip(&truth)
        .map(|(id, &label)| Assignment {
            video_id: id.clone(),
            label,
        })
        .collect();
    write_assignments(out.join(TRUTH_FILE), &assignments)?;
    let echo = serde_json::json!({"seed": cfg.seed, "synth": cfg.synth, "exemplars": cfg.exemplars});
    write_text(&out.join("synth.json"), &(serde_json::to_string_pretty(&echo).map_err(Error::from)? + "\n"))?;

    let lengths: Vec<u32> = ds.manifest().entries().iter().map(|e| e.length_sec).collect();
    println!(
        "wrote {} videos in {} clusters to {} (lengths {}..={} s, audio {}-d, visual {}-d)",
        ds.len(),
        cfg.synth.n_clusters,
        out.display(),
        lengths.iter().min().unwrap_or(&0),
        lengths.iter().max().unwrap_or(&0),
        cfg.synth.audio_dim,
        cfg.synth.visual_dim
    );
    Ok(())
}

fn ingest(mut cfg: RunConfig, a: IngestArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    if a.out.is_some() {
        cfg.paths.out = a.out.clone();
    }
    let out = cfg.require(&cfg.paths.out, "out")?;
    let ds = load_dataset(&cfg)?;
    let span = LengthSpan::new(a.span.0, a.span.1).map_err(|e| CliError::Usage(e.to_string()))?;
    let kept = filter_manifest(ds.manifest(), span);
    let filtered = ds.restrict(&kept)?;
    let mismatched = filtered.frame_mismatches();
    filtered.write(&out)?;
    let src = cfg.require(&cfg.paths.data, "data")?;
    for extra in [SEEDS_FILE, TRUTH_FILE] {
        let p = src.join(extra);
        if p.exists() {
            fs::copy(&p, out.join(extra)).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        }
    }
    println!(
        "kept {} of {} videos within [{}, {}] s; {} with differing audio/visual frame counts",
        filtered.len(),
        ds.len(),
        span.min_sec,
        span.max_sec,
        mismatched.len()
    );
    Ok(())
}

fn chunk_select(mut cfg: RunConfig, a: ChunkSelectArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    apply_mode(&mut cfg, &a.mode);
    apply_attention(&mut cfg, &a.attention);
    if a.out.is_some() {
        cfg.paths.out = a.out.clone();
    }
    let out = cfg.require(&cfg.paths.out, "out")?;
    let QueryMode::TopK { c, k } = cfg.query_mode()? else {
        return Err(CliError::Usage("chunk-select needs --c and --k".into()));
    };
    let ds = load_dataset(&cfg)?;
    let params = attention(&cfg, &ds)?;
    let mut text = String::new();
    for v in ds.videos() {
        let theta = score_sequence(&v.audio, &params)?;
        let sel = select_top_k(&theta, c, k)?;
        let ranges: Vec<(usize, usize)> = sel.selected_indices.iter().map(|&i| sel.macro_range(i)).collect();
        let row = serde_json::json!({
            "video_id": v.entry.video_id,
            "c": c,
            "k": k,
            "selected": sel.selected_indices,
            "base_chunk_ranges": ranges,
            "scores": sel.scores.as_slice(),
        });
        text.push_str(&row.to_string());
        text.push('\n');
    }
    write_text(&out, &text)?;
    if let Some(p) = &a.save_attention {
        params.save(p)?;
    }
    println!("selected {k} of {c} macro-chunks for {} audios", ds.len());
    Ok(())
}

fn cluster(mut cfg: RunConfig, a: ClusterArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    if a.seeds.is_some() {
        cfg.paths.seeds = a.seeds.clone();
    }
    if a.out.is_some() {
        cfg.paths.assignments = a.out.clone();
    }
    set(&mut cfg.kmeans_max_iter, a.max_iter);
    set(&mut cfg.kmeans_tol, a.tol);
    let out = cfg.require(&cfg.paths.assignments, "out")?;
    let ds = load_dataset(&cfg)?;
    let seeds_path = match &cfg.paths.seeds {
        Some(p) => p.clone(),
        None => cfg.require(&cfg.paths.data, "data")?.join(SEEDS_FILE),
    };
    let seeds = SeedsFile::read(&seeds_path)?;
    let names = ids(&ds);
    let seed_sets = seed_rows(&names, &seeds)?;
    let features = audio_features(&ds, QueryMode::Mean, &AttentionParams::random(1, 1, 1, 0))?;
    let model = cluster_rows(&features, &seed_sets, cfg.kmeans_max_iter, cfg.kmeans_tol)?;
    let rows: Vec<Assignment> = names
        .iter()
        .zip(&model.labels)
        .map(|(id, &label)| Assignment {
            video_id: id.clone(),
            label,
        })
        .collect();
    write_assignments(&out, &rows)?;
    println!(
        "clustered {} audios into {} groups in {} iterations (inertia {:.6}); sizes {:?}",
        ds.len(),
        model.k,
        model.iterations_run,
        model.inertia,
        model.cluster_sizes()
    );
    Ok(())
}

fn corpus(cfg: &RunConfig, ds: &Dataset, mode: QueryMode, labels: Vec<usize>) -> Result<Corpus> {
    let params = attention(cfg, ds)?;
    Ok(Corpus::new(ids(ds), audio_features(ds, mode, &params)?, visual_features(ds)?, labels)?)
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    apply_method(&mut cfg, &a.method);
    apply_mode(&mut cfg, &a.mode);
    apply_attention(&mut cfg, &a.attention);
    if a.assignments.is_some() {
        cfg.paths.assignments = a.assignments.clone();
    }
    if a.out.is_some() {
        cfg.paths.model = a.out.clone();
    }
    let out = cfg.require(&cfg.paths.model, "out")?;
    let mode = cfg.query_mode()?;
    cfg.model.validate()?;
    let ds = load_dataset(&cfg)?;
    let labels = match &cfg.paths.assignments {
        Some(p) => labels(&ds, p)?,
        None if cfg.model.method.is_supervised() => {
            return Err(CliError::Usage(format!("{} needs --assignments", cfg.model.method)))
        }
        None => vec![0; ds.len()],
    };
    let corpus = corpus(&cfg, &ds, mode, labels)?;
    let model = train_method(&cfg.model, &corpus, cfg.seed)?;
    model.save(&out, &cfg.echo())?;
    let corr = model.correlations();
    println!(
        "trained {} on {} videos ({} query); top correlation {:.4}, sum {:.4}; wrote {}",
        cfg.model.method,
        corpus.len(),
        mode.label(),
        corr.get(0).copied().unwrap_or(0.0),
        corr.sum(),
        out.display()
    );
    Ok(())
}

/// The model plus the run configuration it was trained with.
fn load_model(path: &Path) -> Result<(TrainedModel, RunConfig)> {
    let (model, echo) = TrainedModel::load(path)?;
    let run: RunConfig = serde_json::from_value(echo)
        .map_err(|e| Error::Format(format!("{} carries no usable run settings: {e}", path.display())))?;
    Ok((model, run))
}

fn index(mut cfg: RunConfig, a: IndexArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    if a.model.is_some() {
        cfg.paths.model = a.model.clone();
    }
    if a.out.is_some() {
        cfg.paths.index = a.out.clone();
    }
    let model_path = cfg.require(&cfg.paths.model, "model")?;
    let out = cfg.require(&cfg.paths.index, "out")?;
    let (model, run) = load_model(&model_path)?;
    let assignments = a
        .assignments
        .clone()
        .or(cfg.paths.assignments.clone())
        .or(run.paths.assignments.clone())
        .ok_or_else(|| CliError::Usage("missing --assignments".into()))?;
    let ds = load_dataset(&cfg)?;
    let embedded = model.embed(&visual_features(&ds)?, Side::Visual)?;
    let idx = build_index(&rows(&embedded), &labels(&ds, &assignments)?, &ids(&ds))?;
    idx.save(&out)?;
    println!("indexed {} videos with {}-d embeddings to {}", idx.len(), idx.r(), out.display());
    Ok(())
}

fn query(mut cfg: RunConfig, a: QueryArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    if a.model.is_some() {
        cfg.paths.model = a.model.clone();
    }
    if a.index.is_some() {
        cfg.paths.index = a.index.clone();
    }
    let (model, run) = load_model(&cfg.require(&cfg.paths.model, "model")?)?;
    let idx = EmbeddingIndex::load(cfg.require(&cfg.paths.index, "index")?)?;
    let ds = load_dataset(&cfg)?;
    let video = ds
        .videos()
        .iter()
        .find(|v| v.entry.video_id == a.video)
        .ok_or_else(|| Error::Validation(format!("video {} is not in the dataset", a.video)))?;
    let mode = run.query_mode()?;
    let selection = match mode {
        QueryMode::Mean => None,
        QueryMode::TopK { .. } => {
            let one = ds.restrict(&avembed_core::data::Manifest::from_entries(vec![video.entry.clone()])?)?;
            select_chunks(&one, mode, &attention(&run, &one)?)?.pop().flatten()
        }
    };
    let q = query_representation(&video.audio, selection.as_ref())?;
    let e = model.embed(&DMatrix::from_row_slice(1, q.len(), q.as_slice()), Side::Audio)?;
    let ranked = idx.rank(&a.video, e.row(0).transpose().as_slice(), a.top)?;
    let items: Vec<serde_json::Value> = ranked
        .items
        .iter()
        .map(|(id, s)| serde_json::json!({"video_id": id, "similarity": s, "label": idx.label_of(id)}))
        .collect();
    let out = serde_json::json!({"query_id": ranked.query_id, "mode": mode.label(), "items": items});
    println!("{}", serde_json::to_string_pretty(&out).map_err(Error::from)?);
    Ok(())
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    apply_data(&mut cfg, &a.data);
    apply_method(&mut cfg, &a.method);
    apply_attention(&mut cfg, &a.attention);
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if a.assignments.is_some() {
        cfg.paths.assignments = a.assignments.clone();
    }
    if a.out.is_some() {
        cfg.paths.out = a.out.clone();
    }
    set(&mut cfg.folds, a.folds);
    set(&mut cfg.stride, a.stride);
    if a.ap_depth.is_some() {
        cfg.ap_depth = a.ap_depth;
    }
    let out = cfg.require(&cfg.paths.out, "out")?;
    let assignments = cfg.require(&cfg.paths.assignments, "assignments")?;
    let modes = cfg.eval_modes();
    for m in &modes {
        m.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let methods = cfg.eval_methods();
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let ds = load_dataset(&cfg)?;
    let labels = labels(&ds, &assignments)?;
    let opts = CvOptions {
        folds: cfg.folds,
        seed: cfg.seed,
        stride: cfg.stride,
        ap_depth: cfg.ap_depth,
    };

    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; modes.len()]; methods.len()];
    let mut first_error: Option<CliError> = None;
    for (j, &mode) in modes.iter().enumerate() {
        let corpus = match corpus(&cfg, &ds, mode, labels.clone()) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("query mode {}: {e}", mode.label());
                first_error.get_or_insert(e);
                continue;
            }
        };
        for (i, &method) in methods.iter().enumerate() {
            let mc = MethodConfig {
                method,
                ..cfg.model.clone()
            };
            match cross_validate(&corpus, &mc, &opts) {
                Ok(mut report) => {
                    let stem = format!("{method}_{}", mode.slug());
                    pr_curve_export(&report.pr_points, out.join(format!("pr_{stem}.csv")))?;
                    report.config["run"] = cfg.echo();
                    report.config["query_mode"] = serde_json::to_value(mode).map_err(Error::from)?;
                    write_text(&out.join(format!("report_{stem}.json")), &report.to_json()?)?;
                    cells[i][j] = Some(report.map);
                    println!("{method:>6} {:>5}: MAP {:.4}", mode.label(), report.map);
                }
                Err(e) => {
                    eprintln!("{method} {}: {e}", mode.label());
                    first_error.get_or_insert(e.into());
                }
            }
        }
    }

    let mut csv = String::from("method");
    for m in &modes {
        csv.push(',');
        csv.push_str(&m.label());
    }
    csv.push('\n');
    for (method, row) in methods.iter().zip(&cells) {
        csv.push_str(method.name());
        for cell in row {
            csv.push(',');
            match cell {
                Some(v) => csv.push_str(&v.to_string()),
                None => csv.push_str("NA"),
            }
        }
        csv.push('\n');
    }
    write_text(&out.join("map_matrix.csv"), &csv)?;
    write_text(
        &out.join("run.json"),
        &(serde_json::to_string_pretty(&cfg.echo()).map_err(Error::from)? + "\n"),
    )?;
    print!("{csv}");
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
