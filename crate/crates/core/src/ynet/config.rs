use serde::{Deserialize, Serialize};

use super::YNetError;

/// Hyperparameters that fully determine the Y-Net parameter shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YNetConfig {
    pub input_size: usize,
    /// Scale applied to every channel count.
    pub width_multiplier: f64,
    pub regular_base_channels: usize,
    pub dilated_channels: usize,
    pub dilation_schedule: Vec<usize>,
    pub pyramid_bin_sizes: Vec<usize>,
    pub l2_strength: f64,
    pub seed: u64,
}

impl Default for YNetConfig {
    fn default() -> Self {
        Self {
            input_size: 400,
            width_multiplier: 1.0,
            regular_base_channels: 64,
            dilated_channels: 32,
            dilation_schedule: vec![1, 2, 4, 8, 16],
            pyramid_bin_sizes: vec![1, 2, 5, 25],
            l2_strength: 1e-6,
            seed: 0,
        }
    }
}

impl YNetConfig {
    /// Desk-scale variant: 112 px input, channels divided by eight.
    pub fn toy() -> Self {
        Self {
            input_size: 112,
            width_multiplier: 0.125,
            ..Self::default()
        }
    }

    pub fn with_input(mut self, input_size: usize) -> Self {
        self.input_size = input_size;
        self
    }

    pub fn with_multiplier(mut self, m: f64) -> Self {
        self.width_multiplier = m;
        self
    }

    pub fn validate(&self) -> Result<(), YNetError> {
        let bad = |m: String| Err(YNetError::Config(m));
        if self.input_size == 0 || self.input_size % 16 != 0 {
            return bad(format!(
                "input_size {} is not divisible by 16",
                self.input_size
            ));
        }
        if self.input_size / 16 < 5 {
            return bad(format!(
                "input_size {} gives a bottleneck below 5x5",
                self.input_size
            ));
        }
        if !(self.width_multiplier.is_finite() && self.width_multiplier > 0.0) {
            return bad(format!(
                "width_multiplier {} must be positive",
                self.width_multiplier
            ));
        }
        if self.regular_base_channels == 0 || self.dilated_channels == 0 {
            return bad("channel counts must be >= 1".into());
        }
        if self.dilation_schedule.len() < 4 {
            return bad(format!(
                "dilation_schedule needs at least 4 entries (four stride-2 reductions), got {:?}",
                self.dilation_schedule
            ));
        }
        if self.dilation_schedule.iter().any(|&d| d == 0 || d > 16) {
            return bad(format!(
                "dilations must lie in 1..=16, got {:?}",
                self.dilation_schedule
            ));
        }
        if self.dilation_schedule.windows(2).any(|w| w[1] < w[0]) {
            return bad(format!(
                "dilation_schedule must be non-decreasing, got {:?}",
                self.dilation_schedule
            ));
        }
        if self.pyramid_bin_sizes.iter().any(|&b| b == 0) {
            return bad("pyramid bin sizes must be >= 1".into());
        }
        if !(self.l2_strength >= 0.0) {
            return bad("l2_strength must be >= 0".into());
        }
        Ok(())
    }

    pub fn scaled(&self, channels: usize) -> usize {
        ((channels as f64 * self.width_multiplier).round() as usize).max(1)
    }

    pub fn bottleneck(&self) -> usize {
        self.input_size / 16
    }

    /// Channel counts of the four regular-convolution stages.
    pub fn regular_ladder(&self) -> [usize; 4] {
        let base = self.scaled(self.regular_base_channels);
        [base, base * 2, base * 4, base * 8]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders() {
        assert_eq!(YNetConfig::default().regular_ladder(), [64, 128, 256, 512]);
        assert_eq!(
            YNetConfig::default()
                .with_multiplier(0.125)
                .regular_ladder(),
            [8, 16, 32, 64]
        );
        assert_eq!(YNetConfig::toy().bottleneck(), 7);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(YNetConfig::default().with_input(100).validate().is_err());
        assert!(YNetConfig::default().with_input(64).validate().is_err());
        let mut c = YNetConfig::default();
        c.dilation_schedule = vec![1, 4, 2, 8, 16];
        assert!(c.validate().is_err());
        c.dilation_schedule = vec![1, 2, 4, 8, 32];
        assert!(c.validate().is_err());
        assert!(YNetConfig::default().validate().is_ok());
        assert!(YNetConfig::toy().validate().is_ok());
    }
}
