//! End-to-end counterfactual query: selection, decoding and completion for
//! every time step of an action sequence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::{complete_baseline, complete_external, CompletedObservation, CompletionError, PluginSpec};
use crate::corpus::EvidenceCorpus;
use crate::decoder::{decode, DecoderConfig, PartialObservation};
use crate::geometry::ActionSequence;
use crate::retrieval::{select_evidence, EvidenceSelection, RetrievalConfig, RetrievalError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("query horizon {query} does not match corpus horizon {corpus}")]
    HorizonMismatch { query: u32, corpus: u32 },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub decoder: DecoderConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completer {
    Baseline,
    External(PluginSpec),
}

#[derive(Debug, Clone)]
pub struct QueryOutput {
    pub selections: Vec<EvidenceSelection>,
    pub partials: Vec<PartialObservation>,
    pub completed: Vec<CompletedObservation>,
}

/// Selection and decoding for every time step, independently per step.
pub fn decode_sequence(
    corpus: &EvidenceCorpus,
    actions: &ActionSequence,
    cfg: &PipelineConfig,
) -> Result<(Vec<EvidenceSelection>, Vec<PartialObservation>), PipelineError> {
    if actions.horizon() != corpus.horizon() {
        return Err(PipelineError::HorizonMismatch {
            query: actions.horizon(),
            corpus: corpus.horizon(),
        });
    }
    cfg.retrieval.validate()?;
    let per_step: Vec<(EvidenceSelection, PartialObservation)> = actions
        .as_slice()
        .par_iter()
        .map(|a| {
            let sel = select_evidence(corpus, a, &cfg.retrieval)?;
            let partial = decode(a, &sel, corpus, &cfg.decoder);
            Ok((sel, partial))
        })
        .collect::<Result<_, RetrievalError>>()?;
    Ok(per_step.into_iter().unzip())
}

pub fn run_query(
    corpus: &EvidenceCorpus,
    actions: &ActionSequence,
    cfg: &PipelineConfig,
    completer: &Completer,
) -> Result<QueryOutput, PipelineError> {
    let (selections, partials) = decode_sequence(corpus, actions, cfg)?;
    let completed = match completer {
        Completer::Baseline => complete_baseline(&partials)?,
        Completer::External(spec) => complete_external(&partials, spec)?,
    };
    Ok(QueryOutput {
        selections,
        partials,
        completed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraAction, CameraIntrinsics, Pose};
    use crate::image::{DepthMap, Frame, Mask, RgbImage};

    #[test]
    fn identity_query_reproduces_evidence() {
        let k = CameraIntrinsics::centered(12.0, 16, 12, 0.1, 50.0).unwrap();
        let seq = ActionSequence::constant(&CameraAction::new(k, Pose::identity(), 1), 3).unwrap();
        let frames = (0..3u8)
            .map(|s| {
                Frame::new(
                    RgbImage::from_raw(16, 12, (0..576).map(|i| (i as u8).wrapping_mul(s + 3)).collect())
                        .unwrap(),
                    Some(DepthMap::from_vec(16, 12, vec![4.0; 192]).unwrap()),
                    Some(Mask::new(16, 12)),
                )
                .unwrap()
            })
            .collect::<Vec<_>>();
        let corpus = EvidenceCorpus::new(3).add_iteration(&seq, frames.clone()).unwrap();
        let out = run_query(&corpus, &seq, &PipelineConfig::default(), &Completer::Baseline).unwrap();
        for (f, c) in frames.iter().zip(&out.completed) {
            assert_eq!(f.rgb, c.rgb);
        }
    }

    #[test]
    fn horizon_mismatch_is_reported() {
        let k = CameraIntrinsics::centered(12.0, 16, 12, 0.1, 50.0).unwrap();
        let seq = ActionSequence::constant(&CameraAction::new(k, Pose::identity(), 1), 2).unwrap();
        let err = decode_sequence(&EvidenceCorpus::new(3), &seq, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, PipelineError::HorizonMismatch { query: 2, corpus: 3 }));
    }
}
