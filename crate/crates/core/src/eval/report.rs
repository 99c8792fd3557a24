use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{column_stats, is_constant};
use super::{linear_probe, pca_project, silhouette, AccuracyResult, EvalError, ProbeResult, SilhouetteReport};
use crate::autodiff::Tensor;
use crate::bandit::{AgentFamily, Session, ARMS};
use crate::model::{EmbeddingTriple, Model, Scale};
use crate::sessions::{encode_observations, permute_session, Permutation};
use crate::training::Example;

/// Dimensions kept before computing silhouettes.
pub const SILHOUETTE_PCA_DIMS: usize = 5;

/// Embedding subspaces in report order, with the scales each one spans.
pub const SUBSPACES: [(&str, &[Scale]); 5] = [
    ("Full Space", &[Scale::Recent, Scale::Short, Scale::Long]),
    ("Long-term + Short-term embeddings", &[Scale::Short, Scale::Long]),
    ("Long-term embedding", &[Scale::Long]),
    ("Short-term embedding", &[Scale::Short]),
    ("Recent past embedding", &[Scale::Recent]),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRow {
    pub name: String,
    pub probe: ProbeResult,
    pub silhouette: SilhouetteReport,
}

fn subspace_vector(e: &EmbeddingTriple, scales: &[Scale]) -> Vec<f64> {
    scales.iter().flat_map(|&s| e.get(s).iter().copied()).collect()
}

/// Embeddings at every step that has a next choice, with that choice as
/// label, pooled over sessions in order.
pub fn step_embeddings(model: &Model, sessions: &[Example]) -> Result<(Vec<EmbeddingTriple>, Vec<usize>), EvalError> {
    let per = sessions
        .par_iter()
        .map(|ex| {
            let mut all = model.embed_all(&ex.obs)?;
            all.truncate(ex.choices.len().saturating_sub(1));
            let labels: Vec<usize> = ex.choices.iter().skip(1).copied().collect();
            Ok((all, labels))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    for (e, l) in per {
        embeddings.extend(e);
        labels.extend(l);
    }
    Ok((embeddings, labels))
}

/// Stacks the `scales` part of each embedding into an `N × d` matrix.
pub fn stack(embeddings: &[EmbeddingTriple], scales: &[Scale]) -> Result<Tensor, EvalError> {
    let rows: Vec<Vec<f64>> = embeddings.iter().map(|e| subspace_vector(e, scales)).collect();
    let d = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || d == 0 {
        return Err(EvalError::Usage("no embeddings for this subspace".into()));
    }
    Ok(Tensor::matrix(rows.len(), d, rows.concat())?)
}

/// Probe accuracy and silhouette of next-choice labels for each subspace
/// the model has. Silhouettes are computed on the standardised
/// five-component PCA projection.
pub fn subspace_report(model: &Model, sessions: &[Example], seed: u64) -> Result<Vec<SubspaceRow>, EvalError> {
    let (embeddings, labels) = step_embeddings(model, sessions)?;
    let mut rows = Vec::new();
    for (i, (name, scales)) in SUBSPACES.into_iter().enumerate() {
        // the full space is whatever the model concatenates
        let scales = if i == 0 { model.config.scales() } else { scales };
        if !scales.iter().all(|&s| model.config.has(s)) {
            continue;
        }
        let x = stack(&embeddings, scales)?;
        let mut probe = linear_probe(&x, &labels, seed)?;
        probe.subspace = name.into();
        let (mean, std) = column_stats(&x);
        let collapsed = mean.iter().zip(&std).all(|(&m, &s)| is_constant(m, s));
        let score = if collapsed {
            tracing::warn!(subspace = name, "embeddings are constant; silhouette is 0");
            0.0
        } else {
            let projected = pca_project(&x, SILHOUETTE_PCA_DIMS.min(x.dims2().1))?;
            silhouette(&projected.coords, &labels)?
        };
        let mut clusters = labels.clone();
        clusters.sort_unstable();
        clusters.dedup();
        rows.push(SubspaceRow {
            name: name.into(),
            probe,
            silhouette: SilhouetteReport {
                subspace: name.into(),
                score,
                points: labels.len(),
                clusters: clusters.len(),
                collapsed,
            },
        });
    }
    Ok(rows)
}

/// How one embedding summarises a whole session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionSummary {
    /// Embedding at the last step.
    #[default]
    Final,
    /// Mean embedding over all steps.
    Mean,
}

/// One embedding per session.
pub fn session_embeddings(model: &Model, sessions: &[Session], summary: SessionSummary) -> Result<Vec<EmbeddingTriple>, EvalError> {
    sessions
        .par_iter()
        .map(|s| {
            let obs = encode_observations(s)?;
            match summary {
                SessionSummary::Final => Ok(model.embed(&obs, obs.len().checked_sub(1).ok_or_else(empty)?)?),
                SessionSummary::Mean => {
                    let all = model.embed_all(&obs)?;
                    let mean = |f: fn(&EmbeddingTriple) -> &Vec<f64>| {
                        let d = f(&all[0]).len();
                        (0..d).map(|i| all.iter().map(|e| f(e)[i]).sum::<f64>() / all.len() as f64).collect()
                    };
                    Ok(EmbeddingTriple {
                        z_rp: mean(|e| &e.z_rp),
                        z_s: mean(|e| &e.z_s),
                        z_l: mean(|e| &e.z_l),
                    })
                }
            }
        })
        .collect()
}

fn empty() -> EvalError {
    EvalError::Usage("empty session".into())
}

/// Linear probe of agent family on one long-term embedding per session.
pub fn style_probe(model: &Model, sessions: &[Session], summary: SessionSummary, seed: u64) -> Result<ProbeResult, EvalError> {
    if !model.config.has(Scale::Long) {
        return Err(EvalError::Usage("model has no long-term encoder".into()));
    }
    let labels = sessions
        .iter()
        .map(|s| s.provenance.family().map(AgentFamily::index))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| EvalError::Usage("style probe needs agent-family provenance".into()))?;
    let embeddings = session_embeddings(model, sessions, summary)?;
    let x = stack(&embeddings, &[Scale::Long])?;
    let mut probe = linear_probe(&x, &labels, seed)?;
    probe.subspace = "Long-term embedding".into();
    Ok(probe)
}

/// Mean total-variation distance between relabelled predictions and
/// predictions on the relabelled session, over every step, session and
/// non-identity relabelling.
pub fn equivariance_gap(model: &Model, sessions: &[Session]) -> Result<f64, EvalError> {
    let per = sessions
        .par_iter()
        .map(|s| {
            let base = model.predict_all(&encode_observations(s)?)?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for perm in &Permutation::all()[1..] {
                let moved = model.predict_all(&encode_observations(&permute_session(s, perm))?)?;
                for (p, q) in base.iter().zip(&moved) {
                    let p = perm.permute_values(*p);
                    sum += 0.5 * (0..ARMS).map(|a| (p[a] - q[a]).abs()).sum::<f64>();
                    count += 1;
                }
            }
            Ok((sum, count))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let (sum, count) = per.iter().fold((0.0, 0), |(s, c), (ds, dc)| (s + ds, c + dc));
    if count == 0 {
        return Err(empty());
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub summary: SessionSummary,
    pub trained: ProbeResult,
    pub control: ProbeResult,
    pub chance: f64,
}

/// Everything `evaluate` reports for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub test_sessions: usize,
    pub chance: f64,
    pub accuracy: AccuracyResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subspaces: Vec<SubspaceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivariance_tv: Option<f64>,
}
