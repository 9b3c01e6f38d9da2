//! Attention-weight analysis: pre-softmax decay curves for fixed or
//! Gaussian-sampled vectors, an oscillation metric, and CSV export.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encodings::{Encoder, EncodingConfig, EncodingError, PositionalEncoder, Variant};
use crate::numerics::RngState;

#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisError {
    /// Curves need max_dist >= 1.
    BadMaxDist { max_dist: usize },
    /// The oscillation index needs at least three points.
    TooFewPoints { len: usize },
    Encoding(EncodingError),
    Io { path: PathBuf, message: String },
    Parse { path: PathBuf, line: usize, message: String },
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMaxDist { max_dist } => write!(f, "max_dist must be >= 1, got {max_dist}"),
            Self::TooFewPoints { len } => {
                write!(f, "oscillation index needs >= 3 points, got {len}")
            }
            Self::Encoding(e) => write!(f, "encoding: {e}"),
            Self::Io { path, message } => write!(f, "i/o on {}: {message}", path.display()),
            Self::Parse { path, line, message } => {
                write!(f, "parse error at {}:{line}: {message}", path.display())
            }
        }
    }
}

impl std::error::Error for AnalysisError {}

impl From<EncodingError> for AnalysisError {
    fn from(e: EncodingError) -> Self {
        Self::Encoding(e)
    }
}

/// How the curve's q/k vectors were chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum SamplingMode {
    Fixed,
    Gaussian { n_samples: usize, seed: u64 },
}

impl SamplingMode {
    fn label(&self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Gaussian { .. } => "gaussian",
        }
    }
}

/// Distances paired with pre-softmax attention scores, plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayCurve {
    distances: Vec<usize>,
    scores: Vec<f64>,
    pub variant: Variant,
    pub config: EncodingConfig,
    pub mode: SamplingMode,
}

impl DecayCurve {
    pub fn distances(&self) -> &[usize] {
        &self.distances
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn max_dist(&self) -> usize {
        *self.distances.last().expect("curves are never empty")
    }

    /// Sub-curve of the points at or beyond `min_distance`.
    pub fn from_distance(&self, min_distance: usize) -> DecayCurve {
        let start = self.distances.partition_point(|&d| d < min_distance);
        DecayCurve {
            distances: self.distances[start..].to_vec(),
            scores: self.scores[start..].to_vec(),
            variant: self.variant,
            config: self.config.clone(),
            mode: self.mode.clone(),
        }
    }

    /// Default export name: `{variant}_{mode}_{max_dist}.csv`.
    pub fn default_file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.variant, self.mode.label(), self.max_dist())
    }
}

/// Score of one (q, k) pair at every distance 0..=max_dist: query at
/// position δ, key at position 0, scaled by 1/√d plus the encoder bias.
pub fn decay_curve_fixed(
    q: &[f64],
    k: &[f64],
    encoder: &Encoder,
    max_dist: usize,
) -> Result<DecayCurve, AnalysisError> {
    if max_dist < 1 {
        return Err(AnalysisError::BadMaxDist { max_dist });
    }
    let scale = 1.0 / (encoder.config().head_dim as f64).sqrt();
    let mut distances = Vec::with_capacity(max_dist + 1);
    let mut scores = Vec::with_capacity(max_dist + 1);
    for delta in 0..=max_dist {
        distances.push(delta);
        scores.push(encoder.relative_score(q, k, delta, 0) * scale + encoder.score_bias(delta, 0)?);
    }
    Ok(DecayCurve {
        distances,
        scores,
        variant: encoder.variant(),
        config: encoder.config().clone(),
        mode: SamplingMode::Fixed,
    })
}

/// Mean decay curve over `n_samples` independent standard-normal (q, k)
/// pairs. Sample `i` draws from the substream `(seed, i)`, so the curve is
/// deterministic regardless of evaluation order; accumulation order is
/// fixed to sample index order.
pub fn decay_curve_gaussian(
    encoder: &Encoder,
    n_samples: usize,
    seed: u64,
    max_dist: usize,
) -> Result<DecayCurve, AnalysisError> {
    if max_dist < 1 {
        return Err(AnalysisError::BadMaxDist { max_dist });
    }
    assert!(n_samples >= 1, "n_samples must be >= 1");
    let d = encoder.config().head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut sums = vec![0.0f64; max_dist + 1];
    for i in 0..n_samples {
        let mut rng = RngState::substream(seed, i as u64);
        let q: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        for (delta, sum) in sums.iter_mut().enumerate() {
            *sum += encoder.relative_score(&q, &k, delta, 0) * scale
                + encoder.score_bias(delta, 0)?;
        }
    }
    let n = n_samples as f64;
    Ok(DecayCurve {
        distances: (0..=max_dist).collect(),
        scores: sums.into_iter().map(|s| s / n).collect(),
        variant: encoder.variant(),
        config: encoder.config().clone(),
        mode: SamplingMode::Gaussian { n_samples, seed },
    })
}

/// Fraction of adjacent triples where |score| flips direction: sign changes
/// of the first difference of |score|. 0 for monotone curves, →1 for
/// alternating ones.
pub fn oscillation_index(curve: &DecayCurve) -> Result<f64, AnalysisError> {
    let n = curve.scores.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints { len: n });
    }
    let diffs: Vec<f64> = curve
        .scores
        .windows(2)
        .map(|w| w[1].abs() - w[0].abs())
        .collect();
    let flips = diffs
        .windows(2)
        .filter(|w| (w[0] > 0.0 && w[1] < 0.0) || (w[0] < 0.0 && w[1] > 0.0))
        .count();
    Ok(flips as f64 / (n - 2) as f64)
}

/// Write a curve as CSV: `#`-prefixed provenance comments, a
/// `distance,score` header, then one row per point with scores at 17
/// significant digits (bit-exact round trips).
pub fn export_csv(curve: &DecayCurve, destination: &Path) -> Result<(), AnalysisError> {
    let io_err = |e: std::io::Error| AnalysisError::Io {
        path: destination.to_path_buf(),
        message: e.to_string(),
    };
    let mut out = String::new();
    out.push_str(&format!("# variant: {}\n", curve.variant));
    match &curve.mode {
        SamplingMode::Fixed => out.push_str("# mode: fixed\n"),
        SamplingMode::Gaussian { n_samples, seed } => {
            out.push_str(&format!("# mode: gaussian n_samples={n_samples} seed={seed}\n"));
        }
    }
    let config_json = serde_json::to_string(&curve.config).expect("config serializes");
    out.push_str(&format!("# config: {config_json}\n"));
    out.push_str("distance,score\n");
    for (d, s) in curve.distances.iter().zip(&curve.scores) {
        out.push_str(&format!("{d},{s:.16e}\n"));
    }
    let mut f = std::fs::File::create(destination).map_err(io_err)?;
    f.write_all(out.as_bytes()).map_err(io_err)
}

/// Read back the data rows of an exported curve.
pub fn read_csv(path: &Path) -> Result<(Vec<usize>, Vec<f64>), AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut distances = Vec::new();
    let mut scores = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line == "distance,score" || line.is_empty() {
            continue;
        }
        let parse_err = |message: String| AnalysisError::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            message,
        };
        let (d, s) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `distance,score`".into()))?;
        distances.push(d.parse::<usize>().map_err(|e| parse_err(e.to_string()))?);
        scores.push(s.parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
    }
    Ok((distances, scores))
}
