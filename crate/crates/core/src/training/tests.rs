use std::collections::{HashMap, HashSet};

use super::*;
use crate::annotate::{
    annotate_dataset, AnnotateOptions, EmotionLabels, LexiconEmotion, OverlapEntailment,
};
use crate::concepts::{ConceptStore, CooccurrenceStats, MineConfig, Miner, Stopwords};
use crate::conceptflow::ConceptFlowConfig;
use crate::corpus::{Dialogue, Vocab};
use crate::encoders::EncoderConfig;
use crate::fixtures;
use crate::neural::gradcheck::{check_gradients, GradCheckConfig};
use crate::neural::{load_checkpoint, seeded_rng, sigmoid_bce, Mode, ParamCollection, Precision};

fn desk_encoder(vocab: &Vocab) -> EncoderConfig {
    EncoderConfig {
        depth: 1,
        dim: 8,
        heads: 2,
        k_layers: 1,
        max_len: 64,
        vocab_size: vocab.len(),
    }
}

fn desk_concept(vocab: &Vocab) -> ConceptFlowConfig {
    ConceptFlowConfig {
        dim: 4,
        gru_layers: 2,
        dropout: 0.7,
        heads: 2,
        ffn_hidden: 8,
        vocab_size: vocab.len(),
    }
}

struct Fixture {
    dialogues: Vec<Dialogue>,
    vocab: Vocab,
    annotations: Vec<crate::annotate::AnnotationRecord>,
    concepts: ConceptStore,
}

impl Fixture {
    fn build(dialogues: Vec<Dialogue>) -> Fixture {
        let labels = EmotionLabels::default_set();
        let vocab = Vocab::build(&dialogues, 1, labels.labels());
        let outcome = annotate_dataset(
            &dialogues,
            &LexiconEmotion::with_default_lexicon(labels.clone()),
            &OverlapEntailment::default(),
            &labels,
            &AnnotateOptions::default(),
        )
        .unwrap();
        let stopwords = Stopwords::default_set();
        let stats = CooccurrenceStats::build(&dialogues, &stopwords);
        let miner = Miner::new(&stats, &stopwords, MineConfig::default());
        let concepts = ConceptStore::from_mined(miner.mine_corpus(&dialogues));
        Fixture {
            dialogues,
            vocab,
            annotations: outcome.records,
            concepts,
        }
    }

    fn data(&self) -> DataBundle<'_> {
        DataBundle {
            dialogues: &self.dialogues,
            annotations: Some(&self.annotations),
            concepts: Some(&self.concepts),
        }
    }
}

// ---------------------------------------------------------------------------
// Epoch planning
// ---------------------------------------------------------------------------

#[test]
fn full_cycle_uses_every_negative_exactly_once() {
    let dialogues = fixtures::tiny_corpus(3); // 4 candidates -> 3 negatives
    let cycle = 3;
    let mut seen: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for epoch in 0..cycle {
        let plan = plan_epoch(&dialogues, epoch, 7, cycle, false).unwrap();
        for item in &plan.items {
            assert_ne!(item.negative, item.positive);
            seen.entry((item.dialogue_idx, item.turn_idx))
                .or_default()
                .push(item.negative);
        }
    }
    for ((d, t), negatives) in seen {
        let unique: HashSet<usize> = negatives.iter().copied().collect();
        assert_eq!(unique.len(), cycle, "dialogue {d} turn {t}: {negatives:?}");
        let expected: HashSet<usize> = dialogues[d].turns[t].negatives().collect();
        assert_eq!(unique, expected);
    }
}

#[test]
fn planning_is_deterministic() {
    let dialogues = fixtures::tiny_corpus(4);
    let a = plan_epoch(&dialogues, 0, 11, 3, false).unwrap();
    let b = plan_epoch(&dialogues, 0, 11, 3, false).unwrap();
    assert_eq!(a.items, b.items);
    let c = plan_epoch(&dialogues, 0, 12, 3, false).unwrap();
    assert_ne!(
        a.items, c.items,
        "different seeds should permute at least one context"
    );
}

#[test]
fn too_few_negatives_requires_reuse_flag() {
    let dialogues = fixtures::tiny_corpus(1);
    let err = plan_epoch(&dialogues, 0, 0, 19, false).unwrap_err();
    assert!(err.to_string().contains("allow_negative_reuse"));
    // With the flag, rotation wraps modulo the negative count.
    let first = plan_epoch(&dialogues, 0, 0, 19, true).unwrap();
    let wrapped = plan_epoch(&dialogues, 3, 0, 19, true).unwrap();
    assert_eq!(first.items[0].negative, wrapped.items[0].negative);
}

#[test]
fn single_negative_is_used_every_epoch() {
    let mut dialogues = fixtures::tiny_corpus(1);
    for t in &mut dialogues[0].turns {
        let gold = t.candidates[t.gold_index].clone();
        t.candidates = vec![gold, "only distractor".into()];
        t.gold_index = 0;
    }
    for epoch in 0..5 {
        let plan = plan_epoch(&dialogues, epoch, 3, 19, true).unwrap();
        assert!(plan.items.iter().all(|i| i.negative == 1));
    }
}

#[test]
fn batches_stay_balanced() {
    let dialogues = fixtures::tiny_corpus(5);
    let plan = plan_epoch(&dialogues, 0, 0, 3, false).unwrap();
    for chunk in plan.items.chunks(3) {
        let (mut pos, mut neg) = (0, 0);
        for item in chunk {
            pos += 1;
            neg += 1;
            assert_ne!(item.positive, item.negative);
        }
        assert_eq!(pos, neg);
    }
}

// ---------------------------------------------------------------------------
// Variant forwarding
// ---------------------------------------------------------------------------

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(Variant::from_name(v.as_str()).unwrap(), v);
    }
    assert_eq!(Variant::from_name("ema_ena_p").unwrap(), Variant::EmaEnaP);
    assert!(Variant::from_name("emotional").is_err());
}

#[test]
fn baseline_ignores_annotations() {
    let fx = Fixture::build(fixtures::tiny_corpus(2));
    let cfg = BundleConfig {
        variant: Variant::Baseline,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(5);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let data = fx.data();
    let index = data.annotation_index().unwrap();
    let with = data
        .forward_inputs(&index, &fx.vocab, 0, 0, 0, false)
        .unwrap();
    let without = ForwardInputs {
        annotations: None,
        ..with
    };
    let mut r = seeded_rng(0);
    let a = bundle.score(&with, Mode::Eval, &mut r).unwrap();
    let b = bundle.score(&without, Mode::Eval, &mut r).unwrap();
    assert_eq!(a, b);
}

#[test]
fn entailment_variant_reacts_to_label_flips() {
    let fx = Fixture::build(fixtures::tiny_corpus(2));
    let cfg = BundleConfig {
        variant: Variant::EnaP,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(6);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let data = fx.data();
    let index = data.annotation_index().unwrap();
    let inputs = data
        .forward_inputs(&index, &fx.vocab, 0, 0, 0, false)
        .unwrap();
    let mut r = seeded_rng(0);
    let before = bundle.score(&inputs, Mode::Eval, &mut r).unwrap();

    let mut flipped = fx.annotations[0].clone();
    let key = (0usize, 0usize, 0usize);
    let old = flipped.persona_entailment[&key];
    let new = match old {
        crate::annotate::EntailLabel::Entailment => crate::annotate::EntailLabel::Contradiction,
        _ => crate::annotate::EntailLabel::Entailment,
    };
    flipped.persona_entailment.insert(key, new);
    let inputs_flipped = ForwardInputs {
        annotations: Some(&flipped),
        ..inputs
    };
    let after = bundle.score(&inputs_flipped, Mode::Eval, &mut r).unwrap();
    assert_ne!(before, after, "flipping a persona label must change the sequence");

    // Perturbing a different dialogue's record never matters.
    let inputs_other = data
        .forward_inputs(&index, &fx.vocab, 1, 0, 0, false)
        .unwrap();
    let unrelated_before = bundle.score(&inputs_other, Mode::Eval, &mut r).unwrap();
    let unrelated_after = bundle.score(&inputs_other, Mode::Eval, &mut r).unwrap();
    assert_eq!(unrelated_before, unrelated_after);
}

#[test]
fn all_variant_needs_artifacts_and_scores_in_unit_interval() {
    let fx = Fixture::build(fixtures::tiny_corpus(2));
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(7);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let data = fx.data();
    let index = data.annotation_index().unwrap();
    let inputs = data
        .forward_inputs(&index, &fx.vocab, 0, 0, 1, true)
        .unwrap();
    let mut r = seeded_rng(0);
    let p = bundle.score(&inputs, Mode::Eval, &mut r).unwrap();
    assert!(p > 0.0 && p < 1.0);

    // Missing concepts is a configuration error naming the stage.
    let missing = ForwardInputs {
        concepts: None,
        ..inputs
    };
    let err = bundle.score(&missing, Mode::Eval, &mut r).unwrap_err();
    assert!(err.to_string().contains("mine"));

    // Missing annotations likewise.
    let missing = ForwardInputs {
        annotations: None,
        ..inputs
    };
    let err = bundle.score(&missing, Mode::Eval, &mut r).unwrap_err();
    assert!(err.to_string().contains("annotate"));
}

struct BundleProbe {
    bundle: ModelBundle,
    fx: Fixture,
    cand: usize,
    y: f64,
}

impl ParamCollection for BundleProbe {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut crate::neural::Parameter)) {
        self.bundle.visit_params(f);
    }
}

#[test]
fn full_bundle_gradients_match_finite_differences() {
    let fx = Fixture::build(fixtures::tiny_corpus(1));
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(8);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let mut probe = BundleProbe {
        bundle,
        fx,
        cand: 1,
        y: 1.0,
    };
    let gc = GradCheckConfig {
        max_coords_per_param: 3,
        ..GradCheckConfig::default()
    };
    let report = check_gradients(
        &mut probe,
        |p| {
            let data = p.fx.data();
            let index = data.annotation_index().unwrap();
            let inputs = data
                .forward_inputs(&index, &p.fx.vocab, 0, 0, p.cand, true)
                .unwrap();
            let mut r = seeded_rng(0);
            let (logit, cache) = p.bundle.forward(&inputs, Mode::Eval, &mut r).unwrap();
            let (loss, d_logit) = sigmoid_bce(logit, p.y);
            p.bundle.backward(&cache, d_logit);
            loss
        },
        &gc,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

fn tiny_train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        lr: 5e-3,
        weight_decay: 0.0,
        seed,
        variant: Variant::All,
        allow_negative_reuse: true,
        precision: Precision::F64,
        loss: LossKind::Bce,
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let fx = Fixture::build(fixtures::tiny_corpus(2));
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(9);
    let mut bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let mut before = Vec::new();
    bundle.visit_params(&mut |p| before.push(p.value.clone()));
    let dir = tempfile::tempdir().unwrap();
    let mut tcfg = tiny_train_config(2, 1);
    tcfg.lr = 0.0;
    train_existing(&mut bundle, &fx.vocab, &fx.data(), None, &tcfg, dir.path()).unwrap();
    let mut i = 0;
    bundle.visit_params(&mut |p| {
        assert_eq!(p.value, before[i], "parameter {} moved", p.name);
        i += 1;
    });
}

#[test]
fn fixed_seed_reproduces_bit_identical_checkpoints() {
    let fx = Fixture::build(fixtures::tiny_corpus(3));
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let dir = tempfile::tempdir().unwrap();
    let tcfg = tiny_train_config(2, 42);
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    train(cfg, &fx.vocab, &fx.data(), None, &tcfg, &d1).unwrap();
    train(cfg, &fx.vocab, &fx.data(), None, &tcfg, &d2).unwrap();
    let a = std::fs::read(d1.join("latest.ckpt")).unwrap();
    let b = std::fs::read(d2.join("latest.ckpt")).unwrap();
    assert_eq!(a, b);
    // Metrics logs agree too.
    let strip_wall = |s: String| {
        s.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
    };
    let ma = strip_wall(std::fs::read_to_string(d1.join("metrics.csv")).unwrap());
    let mb = strip_wall(std::fs::read_to_string(d2.join("metrics.csv")).unwrap());
    assert_eq!(ma, mb);
}

#[test]
fn checkpoint_round_trip_preserves_forward_bits() {
    let fx = Fixture::build(fixtures::tiny_corpus(2));
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let dir = tempfile::tempdir().unwrap();
    let tcfg = tiny_train_config(2, 3);
    let mut rng = seeded_rng(tcfg.seed);
    let mut bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    train_existing(&mut bundle, &fx.vocab, &fx.data(), None, &tcfg, dir.path()).unwrap();

    let data = fx.data();
    let index = data.annotation_index().unwrap();
    let inputs = data
        .forward_inputs(&index, &fx.vocab, 0, 1, 2, true)
        .unwrap();
    let mut r = seeded_rng(0);
    let (logit_before, _) = bundle.forward(&inputs, Mode::Eval, &mut r).unwrap();

    let mut rng2 = seeded_rng(999);
    let mut restored = ModelBundle::new(&mut rng2, cfg).unwrap();
    load_checkpoint(&mut restored, dir.path().join("latest.ckpt")).unwrap();
    let (logit_after, _) = restored.forward(&inputs, Mode::Eval, &mut r).unwrap();
    assert_eq!(logit_before.to_bits(), logit_after.to_bits());
}

#[test]
fn loss_is_finite_and_logged_per_epoch() {
    let fx = Fixture::build(fixtures::tiny_corpus(3));
    let cfg = BundleConfig {
        variant: Variant::Baseline,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let dir = tempfile::tempdir().unwrap();
    let mut tcfg = tiny_train_config(3, 5);
    tcfg.variant = Variant::Baseline;
    let report = train(cfg, &fx.vocab, &fx.data(), None, &tcfg, dir.path()).unwrap();
    assert_eq!(report.metrics.len(), 3);
    assert!(report.metrics.iter().all(|m| m.loss.is_finite()));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,train_hits1,lr,wall_s"));
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("best.ckpt").exists());
}

#[test]
fn odd_batch_size_is_rejected() {
    let mut cfg = tiny_train_config(1, 0);
    cfg.batch_size = 5;
    assert!(cfg.validate().is_err());
}

#[test]
fn pairwise_softmax_objective_trains() {
    let fx = Fixture::build(fixtures::tiny_corpus(3));
    let cfg = BundleConfig {
        variant: Variant::Baseline,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let dir = tempfile::tempdir().unwrap();
    let mut tcfg = tiny_train_config(6, 11);
    tcfg.variant = Variant::Baseline;
    tcfg.loss = LossKind::PairwiseSoftmax;
    let report = train(cfg, &fx.vocab, &fx.data(), None, &tcfg, dir.path()).unwrap();
    let first = report.metrics.first().unwrap().loss;
    let last = report.metrics.last().unwrap().loss;
    assert!(last < first, "softmax loss did not decrease: {first} -> {last}");
    // ln 2 is the untrained pairwise loss; it must start in that vicinity.
    assert!((first - std::f64::consts::LN_2).abs() < 0.3);
}

struct PairwiseProbe {
    bundle: ModelBundle,
    fx: Fixture,
}

impl ParamCollection for PairwiseProbe {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut crate::neural::Parameter)) {
        self.bundle.visit_params(f);
    }
}

#[test]
fn pairwise_softmax_gradients_match_finite_differences() {
    let fx = Fixture::build(fixtures::tiny_corpus(1));
    let cfg = BundleConfig {
        variant: Variant::Baseline,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(13);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let mut probe = PairwiseProbe { bundle, fx };
    let gc = GradCheckConfig {
        max_coords_per_param: 3,
        ..GradCheckConfig::default()
    };
    let report = check_gradients(
        &mut probe,
        |p| {
            let data = p.fx.data();
            let index = data.annotation_index().unwrap();
            let turn = &p.fx.dialogues[0].turns[0];
            let (pos, neg) = (turn.gold_index, (turn.gold_index + 1) % turn.candidates.len());
            let mut r = seeded_rng(0);
            let fwd = |bundle: &ModelBundle, cand: usize, r: &mut _| {
                let inputs = data
                    .forward_inputs(&index, &p.fx.vocab, 0, 0, cand, false)
                    .unwrap();
                bundle.forward(&inputs, Mode::Eval, r).unwrap()
            };
            let (lp, cache_p) = fwd(&p.bundle, pos, &mut r);
            let (ln_, cache_n) = fwd(&p.bundle, neg, &mut r);
            let m = lp.max(ln_);
            let log_z = m + ((lp - m).exp() + (ln_ - m).exp()).ln();
            let loss = log_z - lp;
            let p_pos = (lp - log_z).exp();
            let p_neg = (ln_ - log_z).exp();
            p.bundle.backward(&cache_p, p_pos - 1.0);
            p.bundle.backward(&cache_n, p_neg);
            loss
        },
        &gc,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn concept_candidate_count_mismatch_is_rejected() {
    let mut fx = Fixture::build(fixtures::tiny_corpus(1));
    // Mined concepts no longer line up with the candidate set.
    fx.dialogues[0].turns[0]
        .candidates
        .push("an extra unmined candidate".into());
    let cfg = BundleConfig {
        variant: Variant::All,
        encoder: desk_encoder(&fx.vocab),
        concept: desk_concept(&fx.vocab),
    };
    let mut rng = seeded_rng(10);
    let bundle = ModelBundle::new(&mut rng, cfg).unwrap();
    let data = fx.data();
    let index = data.annotation_index().unwrap();
    let inputs = data
        .forward_inputs(&index, &fx.vocab, 0, 0, 0, true)
        .unwrap();
    let mut r = seeded_rng(0);
    let err = bundle.score(&inputs, Mode::Eval, &mut r).unwrap_err();
    assert!(err.to_string().contains("response lists"), "{err}");
}
