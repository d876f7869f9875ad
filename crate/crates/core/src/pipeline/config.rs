use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster_eval::KMeansConfig;
use crate::encoder::{AdamConfig, EncoderConfig, SelfMode};
use crate::error::{Error, Result};
use crate::losses::PairMode;
use crate::pseudo::Quotas;

/// Metric-learning term used during pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    #[default]
    Pairwise,
    Triplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clustering {
    #[default]
    Kmeans,
    Dbscan,
}

/// Every knob of a run, read from a flat TOML table. Missing keys take
/// their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub initial_days: u32,
    pub block_days: u32,
    pub d_hidden: usize,
    pub heads: usize,
    pub negative_slope: f64,
    pub self_mode: SelfMode,
    pub link_mentions: bool,
    pub lr: f64,
    pub pretrain_epochs: usize,
    pub patience: usize,
    /// Pseudo-label regenerations per block; 0 leaves the encoder untouched.
    pub finetune_rounds: usize,
    pub finetune_epochs_per_round: usize,
    /// Nodes per pre-training batch.
    pub batch_size: usize,
    /// Matched pair terms per fine-tuning batch.
    pub finetune_batch_size: usize,
    pub margin: f64,
    pub ortho_weight: f64,
    pub loss: LossVariant,
    pub pair_mode: PairMode,
    pub cap_per_class: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub quota_high_pos: usize,
    pub quota_high_neg: usize,
    pub quota_low_pos: usize,
    pub quota_low_neg: usize,
    /// Divides the RSD logits; 1 is the plain softmax. Unit-length
    /// logits lie in [-1, 1], so at 1 every distribution is close to
    /// uniform and no pair falls below the 0.5 consistency threshold.
    pub rsd_temperature: f64,
    /// Weight fine-tuning terms by pseudo-label quality; `false` is the
    /// plain hinge ablation.
    pub quality_weighted: bool,
    pub chain_params: bool,
    /// Rebuild the reference matrix on block 0 with the incoming parameters
    /// of every block (only differs from the frozen one when chaining).
    pub recompute_reference: bool,
    /// Evaluate each block with its fine-tuned encoder rather than the
    /// incoming one.
    pub evaluate_after_finetune: bool,
    pub clustering: Clustering,
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Attach wall-clock durations to reports (breaks byte-identical reruns).
    pub record_wall_time: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            initial_days: 7,
            block_days: 1,
            d_hidden: 32,
            heads: 4,
            negative_slope: 0.2,
            self_mode: SelfMode::Attend,
            link_mentions: true,
            lr: 1e-3,
            pretrain_epochs: 15,
            patience: 5,
            finetune_rounds: 3,
            finetune_epochs_per_round: 1,
            batch_size: 2000,
            finetune_batch_size: 2000,
            margin: 10.0,
            ortho_weight: 1.0,
            loss: LossVariant::Pairwise,
            pair_mode: PairMode::Matched,
            cap_per_class: crate::losses::DEFAULT_CAP_PER_CLASS,
            train_frac: 0.7,
            val_frac: 0.1,
            quota_high_pos: 20,
            quota_high_neg: 20,
            quota_low_pos: 10,
            quota_low_neg: 10,
            rsd_temperature: 0.1,
            quality_weighted: true,
            chain_params: false,
            recompute_reference: false,
            evaluate_after_finetune: true,
            clustering: Clustering::Kmeans,
            kmeans_n_init: 10,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-4,
            dbscan_eps: 5.0,
            dbscan_min_pts: 5,
            record_wall_time: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("initial_days", self.initial_days as usize),
            ("block_days", self.block_days as usize),
            ("d_hidden", self.d_hidden),
            ("heads", self.heads),
            ("pretrain_epochs", self.pretrain_epochs),
            ("patience", self.patience),
            ("finetune_epochs_per_round", self.finetune_epochs_per_round),
            ("batch_size", self.batch_size),
            ("finetune_batch_size", self.finetune_batch_size),
            ("cap_per_class", self.cap_per_class),
            ("kmeans_n_init", self.kmeans_n_init),
            ("kmeans_max_iter", self.kmeans_max_iter),
            ("dbscan_min_pts", self.dbscan_min_pts),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let positive = [
            ("lr", self.lr),
            ("rsd_temperature", self.rsd_temperature),
            ("dbscan_eps", self.dbscan_eps),
            ("kmeans_tol", self.kmeans_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.margin >= 0.0) || !(self.ortho_weight >= 0.0) {
            return Err(Error::Config(
                "margin and ortho_weight must be non-negative".into(),
            ));
        }
        if !(self.train_frac > 0.0 && self.val_frac > 0.0 && self.train_frac + self.val_frac < 1.0)
        {
            return Err(Error::Config(format!(
                "train_frac {} and val_frac {} must be positive and leave a test share",
                self.train_frac, self.val_frac
            )));
        }
        Ok(())
    }

    pub fn encoder(&self, d_in: usize) -> EncoderConfig {
        EncoderConfig {
            d_in,
            d_hidden: self.d_hidden,
            heads: self.heads,
            negative_slope: self.negative_slope,
            self_mode: self.self_mode,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn quotas(&self) -> Quotas {
        Quotas {
            high: (self.quota_high_pos, self.quota_high_neg),
            low: (self.quota_low_pos, self.quota_low_neg),
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            n_init: self.kmeans_n_init,
        }
    }
}

/// Independent child seed for a named stage of a run.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base;
    for &p in path {
        // splitmix64 step keyed by the path element
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15 ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}
