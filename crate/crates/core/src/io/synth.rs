//! Synthetic instance generator.
//!
//! Mimics a top-k retrieval stage over a few priced data sources: each
//! non-empty prompt gets between `min_candidates` and `top_k` chunks, each
//! drawn from a source picked by weight, with relevance from a truncated
//! normal. Candidates are listed in descending relevance, as a retriever
//! would return them. `L`/`U` are the tightest bounds over the generated
//! ratios, rounded outward to 3 decimals.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::instance::BudgetField;
use crate::model::{tight_ratio_bounds, Candidate, Instance, PromptArrival};

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub source_id: String,
    pub price_per_chunk: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Normal(mean, sd) truncated to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelevanceDist {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for RelevanceDist {
    fn default() -> Self {
        Self {
            mean: 0.6,
            sd: 0.2,
            min: 0.01,
            max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_prompts: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Defaults to `top_k`.
    #[serde(default)]
    pub min_candidates: Option<usize>,
    /// Share of prompts with no retrievable chunk at all.
    #[serde(default)]
    pub empty_fraction: f64,
    /// Distinct chunk ids per source.
    #[serde(default = "default_chunks_per_source")]
    pub chunks_per_source: usize,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub relevance: RelevanceDist,
    #[serde(default)]
    pub budget: BudgetField,
    #[serde(default)]
    pub seed: u64,
}

fn default_top_k() -> usize {
    20
}

fn default_chunks_per_source() -> usize {
    1000
}

impl SyntheticSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let read_err = |message: String| SynthError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))
    }

    fn check(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Invalid(m.to_string()));
        let min_c = self.min_candidates.unwrap_or(self.top_k);
        if self.top_k == 0 {
            return fail("top_k must be >= 1");
        }
        if min_c > self.top_k {
            return fail("min_candidates must not exceed top_k");
        }
        if self.sources.is_empty() {
            return fail("at least one source is required");
        }
        if self.sources.iter().any(|s| !(s.price_per_chunk > 0.0 && s.weight >= 0.0)) {
            return fail("source prices must be > 0 and weights >= 0");
        }
        if self.chunks_per_source * self.sources.len() < self.top_k {
            return fail("not enough distinct chunks to fill top_k");
        }
        if !(0.0..=1.0).contains(&self.empty_fraction) {
            return fail("empty_fraction must be in [0, 1]");
        }
        let r = &self.relevance;
        if !(r.min > 0.0 && r.min <= r.max && r.max <= 1.0 && r.sd > 0.0 && r.mean.is_finite()) {
            return fail("relevance distribution needs 0 < min <= max <= 1 and sd > 0");
        }
        self.budget.resolve().map_err(SynthError::Invalid)?;
        Ok(())
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// `(floor(lo), ceil(hi))` at 3 decimals, guaranteed to enclose `[lo, hi]`.
fn round_bounds_outward(lo: f64, hi: f64) -> (f64, f64) {
    let mut l = (lo * 1000.0).floor() / 1000.0;
    while l > lo {
        l -= 0.001;
    }
    let mut u = (hi * 1000.0).ceil() / 1000.0;
    while u < hi {
        u += 0.001;
    }
    (l, u)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Instance, SynthError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = &spec.relevance;
    let normal = Normal::new(r.mean, r.sd).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let pick_source = WeightedIndex::new(spec.sources.iter().map(|s| s.weight))
        .map_err(|e| SynthError::Invalid(format!("source weights: {e}")))?;
    let min_c = spec.min_candidates.unwrap_or(spec.top_k);

    let empty_count = (spec.num_prompts as f64 * spec.empty_fraction).round() as usize;
    let mut order: Vec<usize> = (0..spec.num_prompts).collect();
    order.shuffle(&mut rng);
    let empty: HashSet<usize> = order[..empty_count].iter().copied().collect();

    let width = spec.num_prompts.saturating_sub(1).to_string().len();
    let mut prompts = Vec::with_capacity(spec.num_prompts);
    for i in 0..spec.num_prompts {
        let prompt_id = format!("q{i:0width$}");
        if empty.contains(&i) {
            prompts.push(PromptArrival::new(prompt_id, Vec::new()));
            continue;
        }
        let n = rng.random_range(min_c..=spec.top_k);
        let mut seen = HashSet::new();
        let mut candidates = Vec::with_capacity(n);
        while candidates.len() < n {
            let source = &spec.sources[pick_source.sample(&mut rng)];
            let chunk_id = format!("{}-{}", source.source_id, rng.random_range(0..spec.chunks_per_source));
            if !seen.insert(chunk_id.clone()) {
                continue;
            }
            let relevance = sample_truncated(&normal, r, &mut rng)?;
            candidates.push(Candidate::new(chunk_id, &source.source_id, relevance, source.price_per_chunk));
        }
        candidates.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
        prompts.push(PromptArrival::new(prompt_id, candidates));
    }

    let budget = spec.budget.resolve().map_err(SynthError::Invalid)?;
    let (lo, hi) = match tight_ratio_bounds(&prompts) {
        Some((lo, hi)) => round_bounds_outward(lo, hi),
        None => {
            // No candidates at all: any positive bounds are consistent.
            let lo = r.min / spec.sources.iter().map(|s| s.price_per_chunk).fold(0.0, f64::max);
            let hi = r.max / spec.sources.iter().map(|s| s.price_per_chunk).fold(f64::INFINITY, f64::min);
            round_bounds_outward(lo, hi)
        }
    };
    if lo <= 0.0 {
        return Err(SynthError::Invalid(format!(
            "smallest relevance/price ratio rounds to {lo}; raise relevance.min or lower prices"
        )));
    }
    Ok(Instance::new(prompts, budget, lo, hi))
}

fn sample_truncated<R: Rng + ?Sized>(normal: &Normal<f64>, dist: &RelevanceDist, rng: &mut R) -> Result<f64, SynthError> {
    for _ in 0..MAX_REJECTIONS {
        let x = round_to(normal.sample(rng), 4);
        if x >= dist.min && x <= dist.max {
            return Ok(x);
        }
    }
    Err(SynthError::Invalid(format!(
        "relevance distribution puts almost no mass in [{}, {}]",
        dist.min, dist.max
    )))
}
