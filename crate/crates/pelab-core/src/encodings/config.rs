//! Encoder configuration and the per-pair frequency schedule.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which positional encoder a config describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hope,
    Rope,
    Alibi,
    Sinusoidal,
    Nope,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Hope => "hope",
            Self::Rope => "rope",
            Self::Alibi => "alibi",
            Self::Sinusoidal => "sinusoidal",
            Self::Nope => "nope",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hope" => Ok(Self::Hope),
            "rope" => Ok(Self::Rope),
            "alibi" => Ok(Self::Alibi),
            "sinusoidal" => Ok(Self::Sinusoidal),
            "nope" => Ok(Self::Nope),
            other => Err(EncodingError::UnknownVariant { name: other.to_string() }),
        }
    }
}

/// How hyperbolic scores are evaluated: per-vector transforms then dot
/// products, or the pairwise overflow-safe form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorePath {
    #[default]
    Factored,
    Fused,
}

/// Configuration shared by all encoder variants.
///
/// JSON field names are exactly the struct field names; unknown fields are
/// rejected. Serde defaults follow the hyperbolic-encoder defaults
/// (`freq_scale` 0.01, `theta_prime` 0.011); the per-variant constructors
/// are the recommended way to build configs in code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    /// Head dimension; even, at least 2.
    pub head_dim: usize,
    /// Base of the geometric frequency schedule.
    #[serde(default = "default_base_wavelength")]
    pub base_wavelength: f64,
    /// Scale multiplying every schedule frequency.
    #[serde(default = "default_freq_scale")]
    pub freq_scale: f64,
    /// Global damping exponent per token step (hyperbolic variant).
    #[serde(default = "default_theta_prime")]
    pub theta_prime: f64,
    pub variant: Variant,
    #[serde(default = "default_max_position")]
    pub max_position: usize,
    #[serde(default)]
    pub score_path: ScorePath,
}

fn default_base_wavelength() -> f64 {
    10_000.0
}

fn default_freq_scale() -> f64 {
    0.1
}

fn default_theta_prime() -> f64 {
    // 1.1 x the default max frequency.
    0.11
}

fn default_max_position() -> usize {
    4096
}

impl EncodingConfig {
    /// Hyperbolic encoder defaults: damped boosts with `freq_scale` 0.1 and
    /// `theta_prime` at 1.1x the fastest frequency. The scale keeps the
    /// decay envelope non-negligible at desk training lengths
    /// (e^{-64*0.01} ≈ 0.53) while giving adjacent positions enough angular
    /// separation for position-selective heads to form; smaller scales
    /// measurably stall copy-task training.
    pub fn hope(head_dim: usize) -> Self {
        Self {
            head_dim,
            base_wavelength: default_base_wavelength(),
            freq_scale: 0.1,
            theta_prime: 0.11,
            variant: Variant::Hope,
            max_position: default_max_position(),
            score_path: ScorePath::Factored,
        }
    }

    /// Standard rotary defaults: fastest pair at 1 radian per token.
    pub fn rope(head_dim: usize) -> Self {
        Self {
            head_dim,
            base_wavelength: default_base_wavelength(),
            freq_scale: 1.0,
            theta_prime: 0.0,
            variant: Variant::Rope,
            max_position: default_max_position(),
            score_path: ScorePath::Factored,
        }
    }

    pub fn alibi(head_dim: usize) -> Self {
        Self { variant: Variant::Alibi, ..Self::rope(head_dim) }
    }

    pub fn sinusoidal(head_dim: usize) -> Self {
        Self { variant: Variant::Sinusoidal, ..Self::rope(head_dim) }
    }

    pub fn nope(head_dim: usize) -> Self {
        Self { variant: Variant::Nope, ..Self::rope(head_dim) }
    }

    /// Check every construction invariant; all encoder entry points call
    /// this before doing any math.
    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.head_dim < 2 || self.head_dim % 2 != 0 {
            return Err(EncodingError::BadHeadDim { head_dim: self.head_dim });
        }
        if !(self.base_wavelength > 0.0) || !self.base_wavelength.is_finite() {
            return Err(EncodingError::NonPositiveField {
                field: "base_wavelength",
                value: self.base_wavelength,
            });
        }
        if !(self.freq_scale > 0.0) || !self.freq_scale.is_finite() {
            return Err(EncodingError::NonPositiveField {
                field: "freq_scale",
                value: self.freq_scale,
            });
        }
        if self.head_dim >= 4 && self.base_wavelength <= 1.0 {
            return Err(EncodingError::ScheduleNotDecreasing {
                base_wavelength: self.base_wavelength,
            });
        }
        if self.max_position == 0 {
            return Err(EncodingError::NonPositiveField { field: "max_position", value: 0.0 });
        }
        if self.variant == Variant::Hope {
            let max_theta = self.freq_scale; // schedule is descending from freq_scale
            if !self.theta_prime.is_finite() || self.theta_prime < max_theta {
                return Err(EncodingError::ThetaPrimeTooSmall {
                    theta_prime: self.theta_prime,
                    max_theta,
                });
            }
        }
        Ok(())
    }

    /// Damping margin θ′ − max θ_i; positive for decaying configs.
    pub fn damping_margin(&self) -> f64 {
        self.theta_prime - self.freq_scale
    }
}

/// Per-pair frequencies θ_i = freq_scale · base^(−2i/d) for i = 0..d/2−1,
/// strictly descending, first entry equal to `freq_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySchedule {
    thetas: Vec<f64>,
}

impl FrequencySchedule {
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn max_theta(&self) -> f64 {
        self.thetas[0]
    }
}

/// Build the frequency schedule of a validated config.
pub fn frequency_schedule(config: &EncodingConfig) -> Result<FrequencySchedule, EncodingError> {
    config.validate()?;
    let half = config.head_dim / 2;
    let thetas = (0..half)
        .map(|i| {
            config.freq_scale
                * config
                    .base_wavelength
                    .powf(-2.0 * i as f64 / config.head_dim as f64)
        })
        .collect();
    Ok(FrequencySchedule { thetas })
}

/// Errors from config validation and encoder operations.
#[derive(Clone, Debug, PartialEq)]
pub enum EncodingError {
    BadHeadDim { head_dim: usize },
    NonPositiveField { field: &'static str, value: f64 },
    ScheduleNotDecreasing { base_wavelength: f64 },
    /// The damping exponent must not fall below the fastest frequency.
    ThetaPrimeTooSmall { theta_prime: f64, max_theta: f64 },
    UnknownVariant { name: String },
    /// Position too large for the factored transform path.
    FactoredOverflow { position: usize, limit: f64 },
    /// ALiBi bias is defined for causal pairs only.
    NonCausalBias { query_pos: usize, key_pos: usize },
    /// Key construction failed to verify within its candidate budget.
    DiscriminationBudgetExhausted { target: i64, budget: usize },
    /// Target relative position outside the search window.
    TargetOutsideWindow { target: i64, lo: i64, hi: i64 },
    /// Operation needs a different variant.
    WrongVariant { expected: Variant, got: Variant },
}

impl fmt::Display for EncodingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadHeadDim { head_dim } => {
                write!(f, "head_dim must be even and >= 2, got {head_dim}")
            }
            Self::NonPositiveField { field, value } => {
                write!(f, "{field} must be positive and finite, got {value}")
            }
            Self::ScheduleNotDecreasing { base_wavelength } => write!(
                f,
                "frequency schedule must be strictly decreasing: base_wavelength {base_wavelength} <= 1"
            ),
            Self::ThetaPrimeTooSmall { theta_prime, max_theta } => write!(
                f,
                "theta_prime ({theta_prime}) must not be below max theta_i ({max_theta}); \
                 decay requires theta_prime > max theta_i"
            ),
            Self::UnknownVariant { name } => write!(
                f,
                "unknown variant `{name}` (expected hope|rope|alibi|sinusoidal|nope)"
            ),
            Self::FactoredOverflow { position, limit } => write!(
                f,
                "position {position} overflows the factored transform (cap {limit}); \
                 use the fused score path"
            ),
            Self::NonCausalBias { query_pos, key_pos } => write!(
                f,
                "alibi bias needs query_pos >= key_pos, got ({query_pos}, {key_pos})"
            ),
            Self::DiscriminationBudgetExhausted { target, budget } => write!(
                f,
                "no key verified argmax at {target} within a budget of {budget} candidates"
            ),
            Self::TargetOutsideWindow { target, lo, hi } => {
                write!(f, "target {target} outside search window [{lo}, {hi}]")
            }
            Self::WrongVariant { expected, got } => {
                write!(f, "operation requires variant {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for EncodingError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_d4_matches_closed_form() {
        let cfg = EncodingConfig { freq_scale: 1.0, theta_prime: 1.0, ..EncodingConfig::hope(4) };
        let s = frequency_schedule(&cfg).unwrap();
        assert_eq!(s.thetas().len(), 2);
        assert!((s.thetas()[0] - 1.0).abs() <= 1e-15);
        // 10000^(-1/2) = 0.01
        assert!((s.thetas()[1] - 0.01).abs() <= 1e-15);
    }

    #[test]
    fn schedule_d2_is_single_frequency() {
        let cfg = EncodingConfig { freq_scale: 1.0, theta_prime: 1.0, ..EncodingConfig::hope(2) };
        assert_eq!(frequency_schedule(&cfg).unwrap().thetas(), &[1.0]);
    }

    #[test]
    fn schedule_scales_linearly_in_freq_scale() {
        let unit = EncodingConfig { freq_scale: 1.0, theta_prime: 1.0, ..EncodingConfig::hope(8) };
        let scaled = EncodingConfig::hope(8); // freq_scale 0.1
        let a = frequency_schedule(&unit).unwrap();
        let b = frequency_schedule(&scaled).unwrap();
        for (x, y) in a.thetas().iter().zip(b.thetas()) {
            assert!((0.1 * x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn schedule_is_strictly_decreasing() {
        let s = frequency_schedule(&EncodingConfig::hope(64)).unwrap();
        for w in s.thetas().windows(2) {
            assert!(w[0] > w[1]);
        }
        assert_eq!(s.max_theta(), 0.1);
    }

    #[test]
    fn validation_rejects_odd_head_dim() {
        let cfg = EncodingConfig { head_dim: 3, ..EncodingConfig::hope(4) };
        assert!(matches!(cfg.validate(), Err(EncodingError::BadHeadDim { .. })));
    }

    #[test]
    fn validation_rejects_theta_prime_below_max_theta() {
        let cfg = EncodingConfig { theta_prime: 0.09, ..EncodingConfig::hope(4) };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, EncodingError::ThetaPrimeTooSmall { .. }));
        assert!(err.to_string().contains("theta_prime"));
    }

    #[test]
    fn validation_allows_theta_prime_equal_to_max_theta() {
        // Boundary configs are constructible; the decay bound just no longer
        // applies (strict inequality needed), which the property suite
        // reports as not applicable.
        let cfg = EncodingConfig { theta_prime: 0.1, ..EncodingConfig::hope(4) };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn json_round_trip_and_unknown_field_rejection() {
        let cfg = EncodingConfig::hope(16);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: EncodingConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);

        let with_unknown = json.trim_end_matches('}').to_string() + ",\"mystery\":1}";
        assert!(serde_json::from_str::<EncodingConfig>(&with_unknown).is_err());
    }

    #[test]
    fn sparse_json_uses_documented_defaults() {
        let cfg: EncodingConfig =
            serde_json::from_str(r#"{"head_dim": 8, "variant": "hope"}"#).unwrap();
        assert_eq!(cfg.base_wavelength, 10_000.0);
        assert_eq!(cfg.freq_scale, 0.1);
        assert_eq!(cfg.theta_prime, 0.11);
        assert_eq!(cfg.score_path, ScorePath::Factored);
        assert!(cfg.validate().is_ok());
    }
}
