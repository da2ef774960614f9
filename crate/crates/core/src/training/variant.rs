//! Model-variant assembly: which arrangement feeds the fusion encoder and
//! whether the concept-flow feature joins the score head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationRecord;
use crate::concepts::ConceptSet;
use crate::conceptflow::{ConceptFlow, ConceptFlowConfig, ConceptInteractCache, FlowCache};
use crate::corpus::{Dialogue, Vocab};
use crate::encoders::arrange::{SequenceBuilder, TagOptions};
use crate::encoders::interact::{InteractCache, InteractionLayer, ScoreCache, ScoreHead};
use crate::encoders::{EncodeCache, EncoderConfig, EncoderModel};
use crate::error::{PipelineError, Result};
use crate::neural::{sigmoid, Mode, ParamCollection, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Baseline,
    Ema,
    EnaP,
    EmaEnaP,
    All,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Ema,
        Variant::EnaP,
        Variant::EmaEnaP,
        Variant::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Ema => "ema",
            Variant::EnaP => "ena_p",
            Variant::EmaEnaP => "ema+ena_p",
            Variant::All => "all",
        }
    }

    pub fn from_name(name: &str) -> Result<Variant> {
        match name {
            "baseline" => Ok(Variant::Baseline),
            "ema" => Ok(Variant::Ema),
            "ena_p" => Ok(Variant::EnaP),
            "ema+ena_p" | "ema_ena_p" => Ok(Variant::EmaEnaP),
            "all" => Ok(Variant::All),
            other => Err(PipelineError::Config(format!(
                "unknown variant {other:?} (expected baseline, ema, ena_p, ema+ena_p, or all)"
            ))),
        }
    }

    pub fn tags(self) -> TagOptions {
        match self {
            Variant::Baseline => TagOptions::default(),
            Variant::Ema => TagOptions {
                emotion: true,
                entailment: false,
            },
            Variant::EnaP => TagOptions {
                emotion: false,
                entailment: true,
            },
            Variant::EmaEnaP | Variant::All => TagOptions {
                emotion: true,
                entailment: true,
            },
        }
    }

    pub fn needs_annotations(self) -> bool {
        let tags = self.tags();
        tags.emotion || tags.entailment
    }

    pub fn needs_concepts(self) -> bool {
        self == Variant::All
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BundleConfig {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub concept: ConceptFlowConfig,
}

/// Everything a forward pass needs besides the model.
#[derive(Clone, Copy)]
pub struct ForwardInputs<'a> {
    pub dialogue: &'a Dialogue,
    pub turn_idx: usize,
    pub cand_idx: usize,
    pub annotations: Option<&'a AnnotationRecord>,
    pub concepts: Option<&'a ConceptSet>,
    pub vocab: &'a Vocab,
}

/// The dual-encoder model: a bot-context encoder, a fusion encoder whose
/// arrangement depends on the variant, the cross-attention interaction, the
/// optional concept-flow network, and the scoring head.
pub struct ModelBundle {
    pub cfg: BundleConfig,
    pub bot_encoder: EncoderModel,
    pub fusion_encoder: EncoderModel,
    pub interaction: InteractionLayer,
    pub concept_flow: Option<ConceptFlow>,
    pub score_head: ScoreHead,
}

pub struct BundleCache {
    bot: EncodeCache,
    fusion: EncodeCache,
    interact: InteractCache,
    concept: Option<ConceptCaches>,
    score: ScoreCache,
}

struct ConceptCaches {
    context_flow: FlowCache,
    response_flow: FlowCache,
    interact: ConceptInteractCache,
}

impl ModelBundle {
    pub fn new(rng: &mut ChaCha8Rng, cfg: BundleConfig) -> Result<ModelBundle> {
        let bot_encoder = EncoderModel::new(rng, "bot", cfg.encoder)?;
        let fusion_encoder = EncoderModel::new(rng, "fusion", cfg.encoder)?;
        let interaction = InteractionLayer::new(
            rng,
            "interact",
            cfg.encoder.dim,
            cfg.encoder.heads,
            4 * cfg.encoder.dim,
        )?;
        let concept_flow = if cfg.variant.needs_concepts() {
            Some(ConceptFlow::new(rng, "concept", cfg.concept)?)
        } else {
            None
        };
        let head_dim = cfg.encoder.dim
            + concept_flow.as_ref().map(|c| c.feature_dim()).unwrap_or(0);
        let score_head = ScoreHead::new(rng, "head", head_dim);
        Ok(ModelBundle {
            cfg,
            bot_encoder,
            fusion_encoder,
            interaction,
            concept_flow,
            score_head,
        })
    }

    /// Score one candidate; returns the logit (apply [`sigmoid`] for the
    /// matching probability) plus the caches for [`Self::backward`].
    pub fn forward(
        &self,
        inputs: &ForwardInputs<'_>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, BundleCache)> {
        let variant = self.cfg.variant;
        let turn = &inputs.dialogue.turns[inputs.turn_idx];
        let candidate = &turn.candidates[inputs.cand_idx];
        if variant.needs_annotations() && inputs.annotations.is_none() {
            return Err(PipelineError::Config(format!(
                "variant {variant} requires annotations; run the annotate stage first"
            )));
        }

        let builder = SequenceBuilder::new(inputs.vocab, self.cfg.encoder.max_len);
        let bot_seq = builder.bot_context(inputs.dialogue, inputs.turn_idx, candidate);
        let fusion_seq = builder.fused(
            inputs.dialogue,
            inputs.turn_idx,
            inputs.cand_idx,
            candidate,
            variant.tags(),
            inputs.annotations,
        )?;

        let k = self.cfg.encoder.k_layers;
        let (bot_stack, bot_cache) = self.bot_encoder.encode(&bot_seq, k)?;
        let (fusion_stack, fusion_cache) = self.fusion_encoder.encode(&fusion_seq, k)?;
        let (h_d, interact_cache) = self.interaction.forward(&bot_stack, &fusion_stack)?;

        let (h_concept, concept_caches) = match &self.concept_flow {
            None => (None, None),
            Some(flow) => {
                let set = inputs.concepts.ok_or_else(|| {
                    PipelineError::Config(format!(
                        "variant {variant} requires mined concepts; run the mine stage first"
                    ))
                })?;
                if set.response_concepts.len() != turn.candidates.len() {
                    return Err(PipelineError::Integrity(format!(
                        "concept set has {} response lists for {} candidates",
                        set.response_concepts.len(),
                        turn.candidates.len()
                    )));
                }
                let (ctx_states, _, context_flow) =
                    flow.flow_encode(&set.context_concepts, inputs.vocab)?;
                let (resp_states, _, response_flow) =
                    flow.flow_encode(&set.response_concepts[inputs.cand_idx], inputs.vocab)?;
                let (h_c, interact) =
                    flow.concept_interact(&ctx_states, &resp_states, mode, rng)?;
                (
                    Some(h_c),
                    Some(ConceptCaches {
                        context_flow,
                        response_flow,
                        interact,
                    }),
                )
            }
        };

        let (logit, score) = self.score_head.forward(&h_d, h_concept.as_ref())?;
        Ok((
            logit,
            BundleCache {
                bot: bot_cache,
                fusion: fusion_cache,
                interact: interact_cache,
                concept: concept_caches,
                score,
            },
        ))
    }

    /// Convenience: probability that the candidate matches.
    pub fn score(
        &self,
        inputs: &ForwardInputs<'_>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        Ok(sigmoid(self.forward(inputs, mode, rng)?.0))
    }

    /// Accumulate gradients for one scored candidate.
    pub fn backward(&mut self, cache: &BundleCache, d_logit: f64) {
        let (d_hd, d_hc) = self.score_head.backward(&cache.score, d_logit);
        let (d_bot_stack, d_fusion_stack) = self.interaction.backward(&cache.interact, &d_hd);
        self.bot_encoder.backward(&cache.bot, &d_bot_stack);
        self.fusion_encoder.backward(&cache.fusion, &d_fusion_stack);
        if let (Some(flow), Some(caches), Some(d_hc)) =
            (&mut self.concept_flow, &cache.concept, d_hc)
        {
            let (d_ctx_states, d_resp_states) =
                flow.concept_interact_backward(&caches.interact, &d_hc);
            flow.flow_backward(&caches.context_flow, &d_ctx_states, None);
            flow.flow_backward(&caches.response_flow, &d_resp_states, None);
        }
    }
}

impl ParamCollection for ModelBundle {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.bot_encoder.visit_params(f);
        self.fusion_encoder.visit_params(f);
        self.interaction.visit_params(f);
        if let Some(flow) = &mut self.concept_flow {
            flow.visit_params(f);
        }
        self.score_head.visit_params(f);
    }
}

/// Free-function form of candidate scoring under a variant.
pub fn forward_variant(
    bundle: &ModelBundle,
    inputs: &ForwardInputs<'_>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    bundle.score(inputs, mode, rng)
}

/// Re-exported for callers that only need the feature vector width.
pub fn head_input_dim(cfg: &BundleConfig) -> usize {
    cfg.encoder.dim
        + if cfg.variant.needs_concepts() {
            2 * cfg.concept.dim
        } else {
            0
        }
}
