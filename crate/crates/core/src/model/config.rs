use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Architecture switches and loss weights.
///
/// Serialized as a flat TOML table, one key per field; missing keys take the
/// defaults below (the full network at 16 base channels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    /// Number of encoder levels.
    pub depth: usize,
    pub use_frm: bool,
    pub use_safa: bool,
    /// One parallel feature group per rate.
    pub safa_dilations: Vec<usize>,
    pub use_safa_self_attention: bool,
    pub use_hfim: bool,
    pub frm_reduction: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Weight of the cross-entropy term; the Dice term gets `1 - loss_lambda`.
    pub loss_lambda: f64,
    pub loss_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 16,
            depth: 5,
            use_frm: true,
            use_safa: true,
            safa_dilations: vec![1, 2, 3, 4],
            use_safa_self_attention: true,
            use_hfim: true,
            frm_reduction: 8,
            in_channels: 1,
            out_channels: 1,
            loss_lambda: 0.6,
            loss_epsilon: 1.0,
        }
    }
}

impl ModelConfig {
    /// Every module switched off.
    pub fn baseline() -> Self {
        ModelConfig {
            use_frm: false,
            use_safa: false,
            use_safa_self_attention: false,
            use_hfim: false,
            ..Self::default()
        }
    }

    pub fn with_base_channels(mut self, base_channels: usize) -> Self {
        self.base_channels = base_channels;
        self
    }

    /// Channel count of encoder level `level` (0-based).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial extents must be multiples of this.
    pub fn extent_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.base_channels == 0 || self.base_channels % 4 != 0 {
            return bad(format!("base_channels {} must be a positive multiple of 4", self.base_channels));
        }
        if !(2..=8).contains(&self.depth) {
            return bad(format!("depth {} must be between 2 and 8", self.depth));
        }
        if self.in_channels != 1 || self.out_channels != 1 {
            return bad("in_channels and out_channels must both be 1".into());
        }
        if self.use_frm && (self.frm_reduction == 0 || self.base_channels / self.frm_reduction == 0) {
            return bad(format!(
                "frm_reduction {} must be positive and at most base_channels {}",
                self.frm_reduction, self.base_channels
            ));
        }
        if self.use_safa {
            let groups = self.safa_dilations.len();
            if groups == 0 || self.safa_dilations.contains(&0) {
                return bad("safa_dilations must be a non-empty list of positive rates".into());
            }
            let c = self.channels(self.depth - 1);
            if c % groups != 0 {
                return bad(format!("bottleneck channels {c} do not split into {groups} groups"));
            }
        } else if self.use_safa_self_attention {
            return bad("use_safa_self_attention requires use_safa".into());
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return bad(format!("loss_lambda {} outside [0, 1]", self.loss_lambda));
        }
        if !(self.loss_epsilon > 0.0 && self.loss_epsilon.is_finite()) {
            return bad(format!("loss_epsilon {} must be positive", self.loss_epsilon));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ModelConfig = toml::from_str(text).map_err(|e| ModelError::ConfigSyntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Looks up a row of [`table2_configs`] by a loose key: `baseline`,
    /// `net1` .. `net9`, `agfa` (case and spaces ignored).
    pub fn named(key: &str) -> Option<Self> {
        let norm = |s: &str| s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        let key = norm(key);
        let key = if key == "agfa" { "agfanet".to_string() } else { key };
        table2_configs().into_iter().find(|(name, _)| norm(name) == key).map(|(_, c)| c)
    }
}

/// The eleven rows of the ablation grid, in table order.
///
/// Nets 2-5 run the scale-adaptive block with a single dilation rate (1..4)
/// and self-attention; Net 6 adds only hierarchical fusion.
pub fn table2_configs() -> Vec<(String, ModelConfig)> {
    let base = ModelConfig::baseline();
    let safa = |rates: Vec<usize>| ModelConfig {
        use_safa: true,
        safa_dilations: rates,
        use_safa_self_attention: true,
        ..base.clone()
    };
    let mut rows = vec![
        ("Baseline".to_string(), base.clone()),
        ("Net 1".to_string(), ModelConfig { use_frm: true, ..base.clone() }),
    ];
    for d in 1..=4 {
        rows.push((format!("Net {}", d + 1), safa(vec![d])));
    }
    rows.push(("Net 6".to_string(), ModelConfig { use_hfim: true, ..base.clone() }));
    rows.push(("Net 7".to_string(), ModelConfig { use_frm: true, ..safa(vec![3]) }));
    rows.push(("Net 8".to_string(), ModelConfig { use_frm: true, use_hfim: true, ..base.clone() }));
    rows.push(("Net 9".to_string(), ModelConfig { use_hfim: true, ..safa(vec![3]) }));
    rows.push(("AGFA-Net".to_string(), ModelConfig::default()));
    rows
}
