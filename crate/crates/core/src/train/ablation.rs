use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::trainer::{evaluate, train, TrainConfig};
use crate::data::patches::{PatchSet, Split};
use crate::error::{Error, Result};
use crate::model::{Ablation, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub case: usize,
    pub ablation: Ablation,
    pub parameters: usize,
    pub metrics: MetricsReport,
}

/// Trains and evaluates one model per ablation case (1–6) on the same data
/// split, model seed and training seed.
pub fn ablate(
    base: &ModelConfig,
    cases: &[usize],
    set: &PatchSet,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(cases.len());
    for &case in cases {
        let ablation =
            Ablation::case(case).ok_or_else(|| Error::Config(format!("no ablation case {case}; use 1–6")))?;
        let config = ModelConfig { ablation, ..base.clone() };
        let mut model = Model::<f32>::new(config, model_seed)?;
        train(&mut model, set, train_cfg)?;
        let (_, metrics) = evaluate(&model, set, Split::Test)?;
        rows.push(AblationRow { case, ablation, parameters: model.store().trainable_count(), metrics });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("case,tbfe,hpa,cff,parameters,oa,aa,kappa\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:?},{},{},{},{:.6},{:.6},{:.6}\n",
            r.case,
            r.ablation.tbfe,
            r.ablation.hpa,
            r.ablation.cff,
            r.parameters,
            r.metrics.oa,
            r.metrics.aa,
            r.metrics.kappa
        ));
    }
    s.replace("On,", "on,").replace("Naive,", "naive,")
}
