use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    candidates, curate, stage3_specs, stage_seed, PipelineConfig, STAGE_HARNESS,
    STAGE_SELECT_SAMPLES,
};
use crate::activation_selection::select_representatives;
use crate::data_model::read_activations;
use crate::data_model::CompressionScheme;
use crate::error::{ColaError, Result};
use crate::harness::{evaluate_calibration, read_layer_bank};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub cola_errors: Vec<f64>,
    pub random_errors: Vec<f64>,
    pub cola_mean: f64,
    pub random_mean: f64,
    /// `cola_mean <= random_mean`.
    pub cola_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    pub layer: String,
    pub cola_mean: f64,
    pub random_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scheme: CompressionScheme,
    pub k: usize,
    pub candidates: usize,
    pub trials: Vec<TrialOutcome>,
    pub layers: Vec<LayerComparison>,
    pub cola_mean: f64,
    pub random_mean: f64,
    pub wins: usize,
    pub win_rate: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// COLA selection against uniformly random size-`k` selections.
///
/// Trial `t` derives its seed from the master seed and `t`; the COLA side
/// re-seeds projection and k-means from it, the random side draws `k`
/// distinct candidates from it. Both are scored on the eval activations.
pub fn compare_selections(cfg: &PipelineConfig, trials: usize) -> Result<ComparisonReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(ColaError::Argument("trials must be positive".into()));
    }
    let (Some(scheme), Some(layers_path), Some(eval_path)) = (&cfg.scheme, &cfg.layers, &cfg.eval)
    else {
        return Err(ColaError::Argument(
            "compare needs `scheme`, `layers` and `eval`".into(),
        ));
    };
    let processed = if cfg.pool.is_empty() {
        None
    } else {
        Some(curate(cfg)?.processed)
    };
    let (acts, _) =
        candidates(cfg, processed.as_ref()).map_err(|e| e.in_stage(STAGE_SELECT_SAMPLES))?;
    let k = cfg.kmeans.k;
    if k > acts.rows() {
        return Err(
            ColaError::Argument(format!("k = {k} exceeds {} candidates", acts.rows()))
                .in_stage(STAGE_SELECT_SAMPLES),
        );
    }
    let (layers, eval) = (|| {
        Ok((
            read_layer_bank(cfg.resolve(layers_path))?,
            read_activations(cfg.resolve(eval_path))?,
        ))
    })()
    .map_err(|e: ColaError| e.in_stage(STAGE_HARNESS))?;

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = stage_seed(cfg.seed, &format!("compare:trial:{trial}"));
            let (proj, kcfg) = stage3_specs(cfg, acts.dim(), seed)?;
            let cola_ids = select_representatives(&acts, &proj, &kcfg)?.selected_ids;

            let mut rng = seeded_rng(derive_seed(seed, "random"));
            let random_ids: Vec<String> = index::sample(&mut rng, acts.rows(), k)
                .into_iter()
                .map(|i| acts.sample_ids()[i].clone())
                .collect();

            let score = |ids: &[String]| -> Result<Vec<f64>> {
                Ok(evaluate_calibration(&layers, &acts, ids, scheme, &eval)?
                    .into_iter()
                    .map(|l| l.error)
                    .collect())
            };
            let cola_errors = score(&cola_ids)?;
            let random_errors = score(&random_ids)?;
            let (cola_mean, random_mean) = (mean(&cola_errors), mean(&random_errors));
            Ok(TrialOutcome {
                trial,
                seed,
                cola_errors,
                random_errors,
                cola_mean,
                random_mean,
                cola_wins: cola_mean <= random_mean,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: ColaError| e.in_stage(STAGE_HARNESS))?;

    let layers_summary = layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerComparison {
            layer: l.name.clone(),
            cola_mean: outcomes.iter().map(|o| o.cola_errors[i]).sum::<f64>() / trials as f64,
            random_mean: outcomes.iter().map(|o| o.random_errors[i]).sum::<f64>() / trials as f64,
        })
        .collect();
    let wins = outcomes.iter().filter(|o| o.cola_wins).count();
    Ok(ComparisonReport {
        scheme: scheme.clone(),
        k,
        candidates: acts.rows(),
        cola_mean: outcomes.iter().map(|o| o.cola_mean).sum::<f64>() / trials as f64,
        random_mean: outcomes.iter().map(|o| o.random_mean).sum::<f64>() / trials as f64,
        wins,
        win_rate: wins as f64 / trials as f64,
        trials: outcomes,
        layers: layers_summary,
    })
}

impl ComparisonReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        super::write_json(path, self)
    }
}
