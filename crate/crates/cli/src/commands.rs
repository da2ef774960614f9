//! Subcommand implementations over the core library.

use std::fs;
use std::path::{Path, PathBuf};

use converank_core::annotate::{
    annotate_dataset, load_annotations, save_annotations, AnnotateOptions, AnnotationRecord,
    EmotionLabels, LexiconEmotion, OverlapEntailment,
};
use converank_core::concepts::{
    load_concepts, save_concepts, ConceptStore, CooccurrenceStats, Miner, Stopwords,
};
use converank_core::config::RunConfig;
use converank_core::corpus::{self, Dialogue, Vocab};
use converank_core::evaluation::{self, sweep_csv};
use converank_core::manifest::{verify_file, Manifest};
use converank_core::neural::{load_checkpoint, seeded_rng};
use converank_core::training::{self, BundleConfig, DataBundle, Variant};
use converank_core::{PipelineError, Result};

pub struct Context {
    pub cfg: RunConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Context {
    fn dialogues_path(&self, split: &str) -> PathBuf {
        self.data_dir.join(format!("dialogues_{split}.jsonl"))
    }

    fn annotations_path(&self, split: &str) -> PathBuf {
        self.data_dir.join(format!("annotations_{split}.jsonl"))
    }

    fn concepts_path(&self, split: &str) -> PathBuf {
        self.data_dir.join(format!("concepts_{split}.jsonl"))
    }

    fn stats_path(&self, split: &str) -> PathBuf {
        self.data_dir.join(format!("stats_{split}.bin"))
    }

    fn require(&self, path: &Path, producer: &str) -> Result<()> {
        if !path.exists() {
            return Err(PipelineError::MissingArtifact {
                artifact: path.display().to_string(),
                producer: producer.to_string(),
            });
        }
        verify_file(path)
    }

    fn load_dialogues(&self, split: &str) -> Result<Vec<Dialogue>> {
        let path = self.dialogues_path(split);
        self.require(&path, &format!("ingest --split {split}"))?;
        corpus::load_jsonl(&path).and_then(|ds| {
            let expected = self.cfg.expected_candidates()?;
            for d in &ds {
                d.validate(expected)?;
            }
            Ok(ds)
        })
    }

    fn load_annotations(&self, split: &str) -> Result<Vec<AnnotationRecord>> {
        let path = self.annotations_path(split);
        self.require(&path, &format!("annotate --split {split}"))?;
        load_annotations(&path)
    }

    fn load_concepts(&self, split: &str) -> Result<ConceptStore> {
        let path = self.concepts_path(split);
        self.require(&path, &format!("mine --split {split}"))?;
        Ok(ConceptStore::from_mined(load_concepts(&path)?))
    }

    fn labels(&self) -> Result<EmotionLabels> {
        match self.cfg.get("annotate.labels")? {
            "default" => Ok(EmotionLabels::default_set()),
            path => EmotionLabels::load(path),
        }
    }

    fn stopwords(&self) -> Result<Stopwords> {
        match self.cfg.get("concepts.stopwords")? {
            "default" => Ok(Stopwords::default_set()),
            path => Stopwords::load(path),
        }
    }

    fn ensure_dirs(&self) -> Result<()> {
        for dir in [&self.data_dir, &self.out_dir] {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        Ok(())
    }
}

pub fn ingest(ctx: &Context, raw: &Path, split: &str) -> Result<()> {
    ctx.ensure_dirs()?;
    let expected = ctx.cfg.expected_candidates()?;
    let opts = corpus::ParseOptions {
        expected_candidates: expected,
        persona_kind: None,
    };
    let dialogues = corpus::parse_raw_with(raw, &opts)?;
    let out = ctx.dialogues_path(split);
    corpus::save_jsonl(&dialogues, &out)?;
    let turns = corpus::total_turns(&dialogues);
    log::info!("ingested {} dialogues, {turns} turns -> {}", dialogues.len(), out.display());

    let mut manifest = Manifest::new(
        format!("ingest-{split}"),
        ctx.cfg.fingerprint(),
        ctx.cfg.seed()?,
    );
    manifest.add_input(raw)?;
    manifest.add_output(&out)?;
    manifest.save(&ctx.data_dir)?;
    Ok(())
}

pub fn annotate(
    ctx: &Context,
    split: &str,
    labels_flag: Option<&Path>,
    lexicon_flag: Option<&Path>,
    replay: Option<&Path>,
) -> Result<()> {
    ctx.ensure_dirs()?;
    let dialogues = ctx.load_dialogues(split)?;
    let labels = match labels_flag {
        Some(path) => EmotionLabels::load(path)?,
        None => ctx.labels()?,
    };

    let records = match replay {
        Some(path) => {
            let records = load_annotations(path)?;
            let by_id: std::collections::HashMap<&str, &AnnotationRecord> =
                records.iter().map(|r| (r.dialogue_id.as_str(), r)).collect();
            for d in &dialogues {
                let record = by_id.get(d.id.as_str()).ok_or_else(|| {
                    PipelineError::Integrity(format!("replay file has no record for dialogue {}", d.id))
                })?;
                record.validate_against(d)?;
            }
            records
        }
        None => {
            let emotion = match lexicon_flag {
                Some(path) => LexiconEmotion::from_file(labels.clone(), path)?,
                None => match ctx.cfg.get("annotate.lexicon")? {
                    "default" => LexiconEmotion::with_default_lexicon(labels.clone()),
                    path => LexiconEmotion::from_file(labels.clone(), path)?,
                },
            };
            let entailment = OverlapEntailment::new(ctx.stopwords()?);
            let opts = AnnotateOptions {
                threshold: ctx.cfg.get_f64("annotate.threshold")?,
                ensemble_weight: ctx.cfg.get_f64("annotate.ensemble_weight")?,
            };
            let outcome = annotate_dataset(&dialogues, &emotion, &entailment, &labels, &opts)?;
            if outcome.warnings > 0 {
                log::warn!("{} annotation items fell back to neutral", outcome.warnings);
            }
            outcome.records
        }
    };

    let out = ctx.annotations_path(split);
    save_annotations(&records, &out)?;
    log::info!("annotated {} dialogues -> {}", records.len(), out.display());

    let mut manifest = Manifest::new(
        format!("annotate-{split}"),
        ctx.cfg.fingerprint(),
        ctx.cfg.seed()?,
    );
    manifest.add_input(ctx.dialogues_path(split))?;
    if let Some(path) = replay {
        manifest.add_input(path)?;
    }
    manifest.add_output(&out)?;
    manifest.save(&ctx.data_dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn mine(
    ctx: &Context,
    split: &str,
    stats_split: &str,
    lambda: Option<f64>,
    top_n: Option<usize>,
    num_turns: Option<usize>,
    stopwords_flag: Option<&Path>,
) -> Result<()> {
    ctx.ensure_dirs()?;
    let mut mine_cfg = ctx.cfg.mine()?;
    if let Some(l) = lambda {
        mine_cfg.lambda = l;
    }
    if let Some(n) = top_n {
        mine_cfg.top_n = n;
    }
    if let Some(n) = num_turns {
        mine_cfg.num_turns = n;
    }
    let stopwords = match stopwords_flag {
        Some(path) => Stopwords::load(path)?,
        None => ctx.stopwords()?,
    };

    let dialogues = ctx.load_dialogues(split)?;
    let stats_dialogues;
    let stats_source = if stats_split == split {
        &dialogues
    } else {
        stats_dialogues = ctx.load_dialogues(stats_split)?;
        &stats_dialogues
    };
    let stats = CooccurrenceStats::build(stats_source, &stopwords);
    let miner = Miner::new(&stats, &stopwords, mine_cfg);
    let mined = miner.mine_corpus(&dialogues);

    let concepts_out = ctx.concepts_path(split);
    save_concepts(&mined, &concepts_out)?;
    let stats_out = ctx.stats_path(stats_split);
    stats.save(&stats_out)?;
    log::info!(
        "mined {} turns (lambda {}, top-n {}, window {}) -> {}",
        mined.len(),
        mine_cfg.lambda,
        mine_cfg.top_n,
        mine_cfg.num_turns,
        concepts_out.display()
    );

    let mut manifest = Manifest::new(
        format!("mine-{split}"),
        ctx.cfg.fingerprint(),
        ctx.cfg.seed()?,
    );
    manifest.add_input(ctx.dialogues_path(split))?;
    if stats_split != split {
        manifest.add_input(ctx.dialogues_path(stats_split))?;
    }
    manifest.add_output(&concepts_out)?;
    manifest.add_output(&stats_out)?;
    manifest.save(&ctx.data_dir)?;
    Ok(())
}

fn bundle_config(cfg: &RunConfig, variant: Variant, vocab_size: usize) -> Result<BundleConfig> {
    if variant.needs_concepts() && !cfg.get_bool("concept.enabled")? {
        return Err(PipelineError::Config(format!(
            "variant {variant} needs the concept-flow network but concept.enabled=false"
        )));
    }
    Ok(BundleConfig {
        variant,
        encoder: cfg.encoder(vocab_size)?,
        concept: cfg.concept_flow(vocab_size)?,
    })
}

struct SplitData {
    dialogues: Vec<Dialogue>,
    annotations: Option<Vec<AnnotationRecord>>,
    concepts: Option<ConceptStore>,
}

impl SplitData {
    fn load(ctx: &Context, split: &str, variant: Variant) -> Result<SplitData> {
        let dialogues = ctx.load_dialogues(split)?;
        let annotations = variant
            .needs_annotations()
            .then(|| ctx.load_annotations(split))
            .transpose()?;
        let concepts = variant
            .needs_concepts()
            .then(|| ctx.load_concepts(split))
            .transpose()?;
        Ok(SplitData {
            dialogues,
            annotations,
            concepts,
        })
    }

    fn bundle(&self) -> DataBundle<'_> {
        DataBundle {
            dialogues: &self.dialogues,
            annotations: self.annotations.as_deref(),
            concepts: self.concepts.as_ref(),
        }
    }
}

pub fn train(
    ctx: &Context,
    variant_flag: Option<&str>,
    split: &str,
    valid_split: Option<&str>,
) -> Result<()> {
    ctx.ensure_dirs()?;
    let mut cfg = ctx.cfg.clone();
    if let Some(v) = variant_flag {
        cfg.set("train.variant", v)?;
    }
    let train_cfg = cfg.train()?;
    let variant = train_cfg.variant;

    let data = SplitData::load(ctx, split, variant)?;
    let valid = valid_split
        .map(|s| SplitData::load(ctx, s, variant))
        .transpose()?;

    let labels = ctx.labels()?;
    let vocab = Vocab::build(
        &data.dialogues,
        cfg.get_usize("vocab.min_count")?,
        labels.labels(),
    );
    let bundle_cfg = bundle_config(&cfg, variant, vocab.len())?;

    let run_dir = ctx.out_dir.clone();
    fs::create_dir_all(&run_dir).map_err(|e| PipelineError::io(&run_dir, e))?;
    vocab.save(run_dir.join("vocab.json"))?;
    fs::write(run_dir.join("config.txt"), cfg.render())
        .map_err(|e| PipelineError::io(run_dir.join("config.txt"), e))?;

    let report = training::train(
        bundle_cfg,
        &vocab,
        &data.bundle(),
        valid.as_ref().map(|v| v.bundle()).as_ref(),
        &train_cfg,
        &run_dir,
    )?;
    log::info!(
        "trained {variant}: best hits@1 {:.4} at epoch {}",
        report.best_hits1,
        report.best_epoch
    );

    let mut manifest = Manifest::new(
        format!("train-{}", variant.as_str().replace('+', "_")),
        cfg.fingerprint(),
        train_cfg.seed,
    );
    manifest.add_input(ctx.dialogues_path(split))?;
    if variant.needs_annotations() {
        manifest.add_input(ctx.annotations_path(split))?;
    }
    if variant.needs_concepts() {
        manifest.add_input(ctx.concepts_path(split))?;
    }
    manifest.add_output(report.latest_checkpoint.as_path())?;
    manifest.add_output(report.best_checkpoint.as_path())?;
    manifest.add_output(run_dir.join("vocab.json"))?;
    manifest.add_output(run_dir.join("metrics.csv"))?;
    manifest.save(&run_dir)?;
    Ok(())
}

/// Rebuild a trained bundle from a checkpoint and the run config stored
/// next to it.
fn restore_bundle(
    checkpoint: &Path,
    variant_flag: Option<&str>,
) -> Result<(converank_core::training::ModelBundle, Vocab, RunConfig)> {
    let run_dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    if !checkpoint.exists() {
        return Err(PipelineError::MissingArtifact {
            artifact: checkpoint.display().to_string(),
            producer: "train".into(),
        });
    }
    let run_cfg = RunConfig::load(run_dir.join("config.txt"))?;
    let vocab = Vocab::load(run_dir.join("vocab.json"))?;
    let variant = match variant_flag {
        Some(v) => Variant::from_name(v)?,
        None => Variant::from_name(run_cfg.get("train.variant")?)?,
    };
    let cfg = bundle_config(&run_cfg, variant, vocab.len())?;
    let mut rng = seeded_rng(run_cfg.seed()?);
    let mut bundle = converank_core::training::ModelBundle::new(&mut rng, cfg)?;
    load_checkpoint(&mut bundle, checkpoint)?;
    Ok((bundle, vocab, run_cfg))
}

pub fn eval(ctx: &Context, checkpoint: &Path, split: &str, variant_flag: Option<&str>) -> Result<()> {
    ctx.ensure_dirs()?;
    let (bundle, vocab, run_cfg) = restore_bundle(checkpoint, variant_flag)?;
    let variant = bundle.cfg.variant;
    let data = SplitData::load(ctx, split, variant)?;
    let report = evaluation::evaluate(
        &bundle,
        &vocab,
        &data.bundle(),
        split,
        &run_cfg.fingerprint(),
        run_cfg.seed()?,
    )?;
    println!(
        "split {split} variant {variant}: hits@1 {:.4} mrr {:.4} ({} turns)",
        report.hits1,
        report.mrr,
        report.per_turn_ranks.len()
    );

    let stem = format!("report_{split}_{}", variant.as_str().replace('+', "_"));
    let json_path = ctx.out_dir.join(format!("{stem}.json"));
    let csv_path = ctx.out_dir.join(format!("{stem}.csv"));
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| PipelineError::Integrity(format!("serialize report: {e}")))?,
    )
    .map_err(|e| PipelineError::io(&json_path, e))?;
    fs::write(
        &csv_path,
        format!(
            "split,variant,hits1,mrr,seed\n{split},{},{},{},{}\n",
            variant, report.hits1, report.mrr, report.seed
        ),
    )
    .map_err(|e| PipelineError::io(&csv_path, e))?;

    let mut manifest = Manifest::new(
        format!("eval-{split}"),
        run_cfg.fingerprint(),
        run_cfg.seed()?,
    );
    manifest.add_input(checkpoint)?;
    manifest.add_input(ctx.dialogues_path(split))?;
    manifest.add_output(&json_path)?;
    manifest.add_output(&csv_path)?;
    manifest.save(&ctx.out_dir)?;
    Ok(())
}

pub fn sweep(
    ctx: &Context,
    checkpoint: &Path,
    split: &str,
    min_turns: usize,
    max_turns: usize,
) -> Result<()> {
    ctx.ensure_dirs()?;
    if min_turns == 0 || min_turns > max_turns {
        return Err(PipelineError::Config(format!(
            "invalid sweep range {min_turns}..{max_turns}"
        )));
    }
    let (bundle, vocab, run_cfg) = restore_bundle(checkpoint, None)?;
    let data = SplitData::load(ctx, split, bundle.cfg.variant)?;
    let stopwords = ctx.stopwords()?;

    // Prefer the cached training statistics; fall back to this split.
    let stats_path = ctx.stats_path("train");
    let stats = if stats_path.exists() {
        verify_file(&stats_path)?;
        CooccurrenceStats::load(&stats_path)?
    } else {
        log::info!("no cached stats, building from split {split}");
        CooccurrenceStats::build(&data.dialogues, &stopwords)
    };

    let rows = evaluation::sweep_turns(
        &bundle,
        &vocab,
        &data.bundle(),
        &stats,
        &stopwords,
        run_cfg.mine()?,
        min_turns..=max_turns,
        &run_cfg.fingerprint(),
        run_cfg.seed()?,
    )?;
    for row in &rows {
        println!("num_turns {}: hits@1 {:.4} mrr {:.4}", row.num_turns, row.hits1, row.mrr);
    }

    let csv_path = ctx.out_dir.join("sweep.csv");
    fs::write(&csv_path, sweep_csv(&rows)).map_err(|e| PipelineError::io(&csv_path, e))?;
    let json_path = ctx.out_dir.join("sweep.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&rows)
            .map_err(|e| PipelineError::Integrity(format!("serialize sweep: {e}")))?,
    )
    .map_err(|e| PipelineError::io(&json_path, e))?;

    let mut manifest = Manifest::new(
        format!("sweep-{split}"),
        run_cfg.fingerprint(),
        run_cfg.seed()?,
    );
    manifest.add_input(checkpoint)?;
    manifest.add_input(ctx.dialogues_path(split))?;
    manifest.add_output(&csv_path)?;
    manifest.add_output(&json_path)?;
    manifest.save(&ctx.out_dir)?;
    Ok(())
}

pub fn report(
    ctx: &Context,
    split: &str,
    eval_split: Option<&str>,
    variants_flag: Option<&str>,
) -> Result<()> {
    ctx.ensure_dirs()?;
    let variants: Vec<Variant> = match variants_flag {
        None => Variant::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|v| Variant::from_name(v.trim()))
            .collect::<Result<_>>()?,
    };
    // The grid shares data and artifacts across all variants, so load for
    // the most demanding one.
    let data = SplitData::load(ctx, split, Variant::All)?;
    let eval_name = eval_split.unwrap_or(split);
    let eval_data;
    let eval_bundle = if eval_name == split {
        data.bundle()
    } else {
        eval_data = SplitData::load(ctx, eval_name, Variant::All)?;
        eval_data.bundle()
    };

    let labels = ctx.labels()?;
    let vocab = Vocab::build(
        &data.dialogues,
        ctx.cfg.get_usize("vocab.min_count")?,
        labels.labels(),
    );
    let bundle_cfg = bundle_config(&ctx.cfg, Variant::All, vocab.len())?;
    let train_cfg = ctx.cfg.train()?;

    let ablation = evaluation::run_ablation(
        &variants,
        bundle_cfg,
        &vocab,
        &data.bundle(),
        &eval_bundle,
        &train_cfg,
        &ctx.cfg.fingerprint(),
        &ctx.out_dir,
    )?;
    println!("variant,hits1,mrr");
    for row in &ablation.rows {
        println!("{},{:.4},{:.4}", row.variant, row.hits1, row.mrr);
    }

    let json_path = ctx.out_dir.join("ablation.json");
    let csv_path = ctx.out_dir.join("ablation.csv");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&ablation)
            .map_err(|e| PipelineError::Integrity(format!("serialize ablation: {e}")))?,
    )
    .map_err(|e| PipelineError::io(&json_path, e))?;
    fs::write(&csv_path, ablation.to_csv()).map_err(|e| PipelineError::io(&csv_path, e))?;

    let mut manifest = Manifest::new(
        format!("report-{split}"),
        ctx.cfg.fingerprint(),
        ctx.cfg.seed()?,
    );
    manifest.add_input(ctx.dialogues_path(split))?;
    manifest.add_output(&json_path)?;
    manifest.add_output(&csv_path)?;
    manifest.save(&ctx.out_dir)?;
    Ok(())
}
