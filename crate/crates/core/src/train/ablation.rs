use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate, Result, TrainConfig, Trainer};
use crate::data::{kfold_split, Sample};
use crate::model::{table2_configs, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub base_channels: usize,
    pub train: TrainConfig,
    /// With 2 or more, the first of `folds` cross-validation partitions is
    /// used (test on its test ids); with 1 every sample is used for both
    /// training and evaluation.
    pub folds: usize,
    /// Configurations trained concurrently.
    pub jobs: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { base_channels: 8, train: TrainConfig::desk(), folds: 1, jobs: 1 }
    }
}

/// One row: post-processed test metrics of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub dice: f64,
    pub recall: f64,
    pub precision: f64,
    pub hd95_mm: Option<f64>,
    /// Dice before post-processing.
    pub raw_dice: f64,
    pub final_loss: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub epochs: usize,
    pub seed: u64,
    pub base_channels: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# ablation: {} epochs, seed {}, base channels {}, {} train / {} test samples\n",
            self.epochs,
            self.seed,
            self.base_channels,
            self.train_ids.len(),
            self.test_ids.len()
        );
        out += "| Network | Dice | Recall | Precision | HD95 (mm) |\n|---|---|---|---|---|\n";
        for r in &self.rows {
            match &r.error {
                Some(e) => out += &format!("| {} | failed: {e} | | | |\n", r.name),
                None => {
                    let hd = r.hd95_mm.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
                    out += &format!("| {} | {:.4} | {:.4} | {:.4} | {hd} |\n", r.name, r.dice, r.recall, r.precision);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

fn run_one(name: &str, model: &ModelConfig, cfg: &AblationConfig, train: &[Sample], val: &[Sample], test: &[Sample]) -> Result<AblationRow> {
    let mut t = Trainer::new(model, cfg.train.clone())?;
    t.run(train, val, &mut |_| {})?;
    let ev = evaluate(&t.net, test, &cfg.train.eval_config())?;
    Ok(AblationRow {
        name: name.to_string(),
        dice: ev.post.dice,
        recall: ev.post.recall,
        precision: ev.post.precision,
        hd95_mm: ev.post.hd95_mm,
        raw_dice: ev.raw.dice,
        final_loss: t.history.last().map_or(f64::NAN, |h| h.total),
        error: None,
    })
}

/// Trains and evaluates every ablation configuration with one shared seed.
/// A failing configuration is reported in its row; the others still run.
pub fn run_ablation(samples: &[Sample], cfg: &AblationConfig) -> Result<AblationTable> {
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let pick = |want: &[String]| -> Vec<Sample> { samples.iter().filter(|s| want.contains(&s.id)).cloned().collect() };
    let (train, val, test) = if cfg.folds >= 2 {
        let fold = kfold_split(&ids, cfg.folds, cfg.train.seed)?.swap_remove(0);
        (pick(&fold.train), pick(&fold.val), pick(&fold.test))
    } else {
        (samples.to_vec(), Vec::new(), samples.to_vec())
    };
    let configs: Vec<(String, ModelConfig)> = table2_configs()
        .into_iter()
        .map(|(n, c)| (n, c.with_base_channels(cfg.base_channels)))
        .collect();

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<AblationRow>>> = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.clamp(1, configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((name, model)) = configs.get(i) else { break };
                let row = run_one(name, model, cfg, &train, &val, &test).unwrap_or_else(|e| AblationRow {
                    name: name.clone(),
                    dice: f64::NAN,
                    recall: f64::NAN,
                    precision: f64::NAN,
                    hd95_mm: None,
                    raw_dice: f64::NAN,
                    final_loss: f64::NAN,
                    error: Some(e.to_string()),
                });
                rows.lock().expect("no poisoned workers")[i] = Some(row);
            });
        }
    });
    let rows = rows.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every row ran")).collect();
    Ok(AblationTable {
        rows,
        epochs: cfg.train.epochs,
        seed: cfg.train.seed,
        base_channels: cfg.base_channels,
        train_ids: train.iter().map(|s| s.id.clone()).collect(),
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
    })
}
