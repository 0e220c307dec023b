//! Fault-injection campaigns over a BER grid.
//!
//! For each grid point a campaign runs `n_initial` independent trials, then
//! keeps adding trials until the sample count reaches the size needed for
//! the configured confidence-interval half-width (or `n_max`). Each trial
//! samples a fresh fault plan from a seed derived from
//! `(base_seed, ber_index, trial_index)`, applies it to a private copy of
//! the weights, optionally scrubs, evaluates, and then restores the copy.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{encode_params, read_masked_into, scrub_in_place};
use crate::error::{Error, Result};
use crate::faultinject::{
    apply_faults_in_place, layout_of, plan_faults, BerDenominator, BitErrorRate, FaultSpec, InjectionMode,
    DEFAULT_EXCLUDED_BITS,
};
use crate::rng::{derive_seed, GENERATOR};
use crate::stats;
use crate::tensor::TensorF32;
use crate::vit::{Batch, ViTModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protection {
    Off,
    Parity,
}

/// When protected weights are checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrubPolicy {
    /// One scrub pass after injection; faulty words are zeroed in storage.
    #[default]
    Once,
    /// Every parameter read goes through the parity check; storage keeps the faults.
    OnRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    /// Fraction of inputs whose prediction matches the dataset label.
    Labeled,
    /// Fraction of inputs whose prediction matches the fault-free model's.
    Agreement,
}

/// Log-spaced grid with `per_decade` points per decade from `10^lo_exp` up
/// to and including `10^hi_exp`.
pub fn log_grid(lo_exp: i32, hi_exp: i32, per_decade: u32) -> Vec<f64> {
    let mut out = Vec::new();
    for e in lo_exp..=hi_exp {
        for k in 0..per_decade {
            if e == hi_exp && k > 0 {
                break;
            }
            let m = 10f64.powf(f64::from(k) / f64::from(per_decade));
            // round-trip through text so decade points are exactly `1eN`
            let v: f64 = format!("{:.12e}", m * 10f64.powi(e)).parse().expect("float literal");
            out.push(v);
        }
    }
    out
}

fn default_grid() -> Vec<f64> {
    log_grid(-9, -1, 3)
}
fn default_confidence() -> f64 {
    0.95
}
fn default_half_width() -> f64 {
    0.01
}
fn default_n_initial() -> usize {
    30
}
fn default_n_max() -> usize {
    1000
}
fn default_metric() -> AccuracyMetric {
    AccuracyMetric::Agreement
}
fn default_excluded() -> Vec<u32> {
    DEFAULT_EXCLUDED_BITS.to_vec()
}
fn default_protection() -> Protection {
    Protection::Off
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_grid")]
    pub ber_grid: Vec<f64>,
    #[serde(default = "default_protection")]
    pub protection: Protection,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Target CI half-width, in accuracy units.
    #[serde(default = "default_half_width")]
    pub ci_half_width_target: f64,
    #[serde(default = "default_n_initial")]
    pub n_initial: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_metric")]
    pub accuracy_metric: AccuracyMetric,
    #[serde(default = "default_excluded")]
    pub excluded_bits: Vec<u32>,
    #[serde(default)]
    pub injection_mode: InjectionMode,
    #[serde(default)]
    pub ber_denominator: BerDenominator,
    #[serde(default)]
    pub scrub: ScrubPolicy,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            ber_grid: default_grid(),
            protection: default_protection(),
            confidence: default_confidence(),
            ci_half_width_target: default_half_width(),
            n_initial: default_n_initial(),
            n_max: default_n_max(),
            base_seed: 0,
            accuracy_metric: default_metric(),
            excluded_bits: default_excluded(),
            injection_mode: InjectionMode::RandomBit,
            ber_denominator: BerDenominator::Bits,
            scrub: ScrubPolicy::Once,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Campaign(m));
        for &b in &self.ber_grid {
            BitErrorRate::new(b).map_err(|_| Error::Campaign(format!("ber_grid: {b} outside (0, 1]")))?;
        }
        if self.ber_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ber_grid: must be strictly ascending".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence: {} outside (0, 1)", self.confidence));
        }
        if !(self.ci_half_width_target > 0.0) {
            return bad("ci_half_width_target: must be positive".into());
        }
        if self.n_initial < 2 {
            return bad("n_initial: need at least 2 trials".into());
        }
        if self.n_max < self.n_initial {
            return bad("n_max: must be >= n_initial".into());
        }
        if let Some(b) = self.excluded_bits.iter().find(|&&b| b > 31) {
            return bad(format!("excluded_bits: {b} out of range"));
        }
        if let InjectionMode::FixedBit(b) = self.injection_mode {
            if b > 31 {
                return bad(format!("injection_mode: bit {b} out of range"));
            }
        }
        Ok(())
    }

    pub fn fault_spec(&self, ber: BitErrorRate) -> FaultSpec {
        FaultSpec {
            ber,
            excluded_bits: self.excluded_bits.clone(),
            mode: self.injection_mode,
            denominator: self.ber_denominator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub accuracy: f64,
    pub detections: usize,
    pub planned_flips: usize,
    /// Words hit by an odd number of flips.
    pub odd_flip_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub ber: f64,
    pub faults_per_trial: usize,
    pub samples: Vec<f64>,
    pub detections: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub hit_n_max: bool,
    pub detections_mean: f64,
}

impl BerRecord {
    fn from_outcomes(ber: f64, faults: usize, outcomes: &[TrialOutcome], confidence: f64, n_max: usize) -> Self {
        let samples: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
        let detections: Vec<usize> = outcomes.iter().map(|o| o.detections).collect();
        let mean = stats::mean(&samples);
        let hw = stats::ci_half_width(&samples, confidence);
        let n = samples.len();
        Self {
            ber,
            faults_per_trial: faults,
            mean,
            std: stats::sample_std(&samples),
            ci_low: mean - hw,
            ci_high: mean + hw,
            n_used: n,
            hit_n_max: n >= n_max,
            detections_mean: detections.iter().sum::<usize>() as f64 / n.max(1) as f64,
            samples,
            detections,
        }
    }

    pub fn ci_half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub tool_version: String,
    pub rng: String,
    pub config: CampaignConfig,
    pub num_params: usize,
    pub baseline: f64,
    pub records: Vec<BerRecord>,
}

impl CampaignResult {
    pub fn record_at(&self, ber: f64) -> Option<&BerRecord> {
        self.records.iter().find(|r| (r.ber - ber).abs() <= 1e-12 * ber)
    }
}

/// Prepared weights, reference predictions and evaluation data for one
/// protection setting.
pub struct Campaign<'a> {
    model: &'a ViTModel,
    batch: &'a Batch,
    config: CampaignConfig,
    /// Weights as deployed: raw, or parity-encoded.
    source: ViTModel,
    reference: Vec<u32>,
    layout: Vec<usize>,
    baseline: f64,
    progress: bool,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Campaign<'a> {
    pub fn new(model: &'a ViTModel, batch: &'a Batch, config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        let reference = match config.accuracy_metric {
            AccuracyMetric::Agreement => model.predict(batch)?,
            AccuracyMetric::Labeled => batch
                .labels
                .clone()
                .ok_or_else(|| Error::Campaign("accuracy_metric: `labeled` needs a dataset with labels".into()))?,
        };
        Self::with_reference(model, batch, config, reference)
    }

    /// Uses precomputed reference predictions (for example a golden cache).
    pub fn with_reference(
        model: &'a ViTModel,
        batch: &'a Batch,
        config: CampaignConfig,
        reference: Vec<u32>,
    ) -> Result<Self> {
        config.validate()?;
        if reference.len() != batch.len() {
            return Err(Error::Campaign(format!(
                "{} reference predictions for {} inputs",
                reference.len(),
                batch.len()
            )));
        }
        let source = match config.protection {
            Protection::Off => model.clone(),
            Protection::Parity => {
                let mut m = model.clone();
                let enc = encode_params(model.params()).into_tensors();
                m.set_params(enc)?;
                m
            }
        };
        let layout = layout_of(source.params());
        let preds = source.predict(batch)?;
        let baseline = accuracy(&preds, &reference);
        Ok(Self {
            model,
            batch,
            config,
            source,
            reference,
            layout,
            baseline,
            progress: false,
            pool: None,
        })
    }

    /// Print `BER=.. n=.. mean=.. ci=±..` lines on stderr.
    pub fn with_progress(mut self, on: bool) -> Self {
        self.progress = on;
        self
    }

    /// Limit trial parallelism to `workers` threads. Results do not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Campaign(format!("workers: {e}")))?;
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    /// Fault-free accuracy of the deployed (possibly encoded) weights.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn deployed_params(&self) -> &[TensorF32] {
        self.source.params()
    }

    pub fn trial_seed(&self, ber_index: usize, trial: usize) -> u64 {
        derive_seed(&[self.config.base_seed, ber_index as u64, trial as u64])
    }

    /// One trial on a private copy of the deployed weights.
    pub fn run_trial(&self, ber: BitErrorRate, seed: u64) -> Result<TrialOutcome> {
        let mut scratch = self.source.clone();
        self.run_trial_on(&mut scratch, ber, seed)
    }

    /// One trial on `scratch`, which must hold the deployed weights on entry
    /// and holds them again, bit for bit, on return.
    pub fn run_trial_on(&self, scratch: &mut ViTModel, ber: BitErrorRate, seed: u64) -> Result<TrialOutcome> {
        let plan = plan_faults(&self.layout, &self.config.fault_spec(ber), seed)?;
        apply_faults_in_place(scratch.params_mut(), &plan)?;
        let (detections, preds) = match (self.config.protection, self.config.scrub) {
            (Protection::Off, _) => (0, scratch.predict(self.batch)),
            (Protection::Parity, ScrubPolicy::Once) => {
                let d = scrub_in_place(scratch.params_mut()).detected;
                (d, scratch.predict(self.batch))
            }
            (Protection::Parity, ScrubPolicy::OnRead) => {
                let mut view = scratch.clone();
                let d = read_masked_into(scratch.params(), view.params_mut());
                (d, view.predict(self.batch))
            }
        };

        // restore every touched word from the clean copy (scrub only touches planned words)
        let src = self.source.params();
        let dst = scratch.params_mut();
        for f in &plan.flips {
            dst[f.tensor].data[f.element] = src[f.tensor].data[f.element];
        }

        Ok(TrialOutcome {
            accuracy: accuracy(&preds?, &self.reference),
            detections,
            planned_flips: plan.len(),
            odd_flip_words: plan.odd_flip_words(),
        })
    }

    fn run_trials(&self, ber: BitErrorRate, ber_index: usize, range: std::ops::Range<usize>) -> Result<Vec<TrialOutcome>> {
        let work = || {
            range
                .clone()
                .into_par_iter()
                .map_init(
                    || self.source.clone(),
                    |scratch, t| self.run_trial_on(scratch, ber, self.trial_seed(ber_index, t)),
                )
                .collect::<Result<Vec<_>>>()
        };
        match &self.pool {
            Some(p) => p.install(work),
            None => work(),
        }
    }

    /// Adaptive trial loop for one grid point.
    pub fn run_level(&self, ber_index: usize) -> Result<BerRecord> {
        let ber_value = *self
            .config
            .ber_grid
            .get(ber_index)
            .ok_or_else(|| Error::Campaign(format!("ber index {ber_index} outside grid")))?;
        let ber = BitErrorRate::new(ber_value)?;
        let faults = self.config.fault_spec(ber).fault_count(self.layout.iter().sum::<usize>() as u64) as usize;
        let cfg = &self.config;

        let mut outcomes = self.run_trials(ber, ber_index, 0..cfg.n_initial)?;
        loop {
            let samples: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
            let needed = stats::required_iterations(&samples, cfg.confidence, cfg.ci_half_width_target).min(cfg.n_max);
            if outcomes.len() >= needed {
                break;
            }
            let more = self.run_trials(ber, ber_index, outcomes.len()..needed)?;
            outcomes.extend(more);
        }
        let rec = BerRecord::from_outcomes(ber_value, faults, &outcomes, cfg.confidence, cfg.n_max);
        if self.progress {
            eprintln!(
                "BER={:e} n={} mean={:.4} ci=±{:.4}",
                rec.ber,
                rec.n_used,
                rec.mean,
                rec.ci_half_width()
            );
        }
        Ok(rec)
    }

    pub fn run(&self) -> Result<CampaignResult> {
        let records = (0..self.config.ber_grid.len())
            .map(|i| self.run_level(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.result_with(records))
    }

    fn result_with(&self, records: Vec<BerRecord>) -> CampaignResult {
        CampaignResult {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: GENERATOR.to_string(),
            config: self.config.clone(),
            num_params: self.model.num_params(),
            baseline: self.baseline,
            records,
        }
    }
}

/// Fraction of positions where `preds` equals `reference`.
pub fn accuracy(preds: &[u32], reference: &[u32]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(reference).filter(|(a, b)| a == b).count();
    hits as f64 / preds.len() as f64
}

pub fn run_trial(model: &ViTModel, batch: &Batch, config: &CampaignConfig, ber: BitErrorRate, seed: u64) -> Result<TrialOutcome> {
    Campaign::new(model, batch, config.clone())?.run_trial(ber, seed)
}

pub fn run_campaign(model: &ViTModel, batch: &Batch, config: &CampaignConfig) -> Result<CampaignResult> {
    Campaign::new(model, batch, config.clone())?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bit")]
pub enum BerzadTarget {
    /// Faults only at this bit position.
    Bit(u32),
    /// Random bit positions under the configured exclusions.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "ber")]
pub enum Berzad {
    /// Even the smallest grid BER shows a significant drop.
    BelowGridMinimum,
    /// Largest passing grid BER; the next grid point fails.
    Ber(f64),
    /// Every grid BER passes; the true value is at least this.
    AtLeastGridMaximum(f64),
}

impl Berzad {
    /// Numeric value for ordering: 0 below the grid.
    pub fn value(&self) -> f64 {
        match *self {
            Berzad::BelowGridMinimum => 0.0,
            Berzad::Ber(b) | Berzad::AtLeastGridMaximum(b) => b,
        }
    }
}

impl std::fmt::Display for Berzad {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Berzad::BelowGridMinimum => write!(f, "below grid minimum"),
            Berzad::Ber(b) => write!(f, "{b:e}"),
            Berzad::AtLeastGridMaximum(b) => write!(f, ">= {b:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerzadEntry {
    pub target: BerzadTarget,
    pub berzad: Berzad,
    /// Grid points evaluated, ascending, ending at the first failure.
    pub sweep: Vec<BerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerzadEstimate {
    pub tool_version: String,
    pub rng: String,
    pub config: CampaignConfig,
    pub baseline: f64,
    pub entries: Vec<BerzadEntry>,
}

impl BerzadEstimate {
    pub fn get(&self, target: BerzadTarget) -> Option<&BerzadEntry> {
        self.entries.iter().find(|e| e.target == target)
    }
}

/// A grid point passes when the baseline is not significantly above the
/// trial mean, i.e. the CI upper bound reaches the baseline.
pub fn level_passes(rec: &BerRecord, baseline: f64) -> bool {
    rec.ci_high >= baseline
}

/// BERZAD per target: largest grid BER whose accuracy drop is not
/// significant at the configured confidence. Sweeps stop at the first failure.
pub fn compute_berzad(
    model: &ViTModel,
    batch: &Batch,
    config: &CampaignConfig,
    targets: &[BerzadTarget],
) -> Result<BerzadEstimate> {
    compute_berzad_with(model, batch, config, targets, |c| Ok(c))
}

/// As [`compute_berzad`], with a hook to adjust each per-target campaign
/// (progress output, worker count).
pub fn compute_berzad_with<'a>(
    model: &'a ViTModel,
    batch: &'a Batch,
    config: &CampaignConfig,
    targets: &[BerzadTarget],
    mut tweak: impl FnMut(Campaign<'a>) -> Result<Campaign<'a>>,
) -> Result<BerzadEstimate> {
    let mut entries = Vec::with_capacity(targets.len());
    let mut baseline = f64::NAN;
    for &target in targets {
        let mut cfg = config.clone();
        if let BerzadTarget::Bit(b) = target {
            cfg.injection_mode = InjectionMode::FixedBit(b);
        } else {
            cfg.injection_mode = InjectionMode::RandomBit;
        }
        let campaign = tweak(Campaign::new(model, batch, cfg)?)?;
        baseline = campaign.baseline();
        let mut sweep = Vec::new();
        let mut last_pass = None;
        for i in 0..config.ber_grid.len() {
            let rec = campaign.run_level(i)?;
            let pass = level_passes(&rec, baseline);
            let ber = rec.ber;
            sweep.push(rec);
            if !pass {
                break;
            }
            last_pass = Some(ber);
        }
        let berzad = match last_pass {
            None => Berzad::BelowGridMinimum,
            Some(b) if sweep.len() == config.ber_grid.len() && level_passes(sweep.last().expect("non-empty"), baseline) => {
                Berzad::AtLeastGridMaximum(b)
            }
            Some(b) => Berzad::Ber(b),
        };
        entries.push(BerzadEntry { target, berzad, sweep });
    }
    Ok(BerzadEstimate {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng: GENERATOR.to_string(),
        config: config.clone(),
        baseline,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Csv,
    HistogramCsv,
    Json,
}

pub const HISTOGRAM_BINS: usize = 100;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.01;

/// Bin counts over `[0, 1]` with width 0.01; 1.0 falls in the last bin.
pub fn histogram(samples: &[f64]) -> Vec<usize> {
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &s in samples {
        // small slack so that exact multiples of 0.01 land in their own bin
        let b = ((s / HISTOGRAM_BIN_WIDTH) + 1e-9).floor();
        let b = if b.is_nan() || b < 0.0 { 0 } else { (b as usize).min(HISTOGRAM_BINS - 1) };
        counts[b] += 1;
    }
    counts
}

/// Fraction of histogram mass in bins starting at or above `threshold`.
pub fn histogram_mass_at_or_above(counts: &[usize], threshold: f64) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let first = (threshold / HISTOGRAM_BIN_WIDTH + 1e-9).floor() as usize;
    counts[first.min(counts.len())..].iter().sum::<usize>() as f64 / total as f64
}

/// Fraction of histogram mass in bins ending at or below `threshold`.
pub fn histogram_mass_below(counts: &[usize], threshold: f64) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let end = (threshold / HISTOGRAM_BIN_WIDTH + 1e-9).floor() as usize;
    counts[..end.min(counts.len())].iter().sum::<usize>() as f64 / total as f64
}

pub fn write_csv<W: Write>(mut w: W, result: &CampaignResult) -> std::io::Result<()> {
    writeln!(w, "ber,mean,std,ci_low,ci_high,n,detections")?;
    for r in &result.records {
        writeln!(
            w,
            "{:e},{},{},{},{},{},{}",
            r.ber, r.mean, r.std, r.ci_low, r.ci_high, r.n_used, r.detections_mean
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(mut w: W, result: &CampaignResult) -> std::io::Result<()> {
    writeln!(w, "ber,bin_low,bin_high,count")?;
    for r in &result.records {
        for (i, c) in histogram(&r.samples).into_iter().enumerate() {
            writeln!(
                w,
                "{:e},{:.2},{:.2},{}",
                r.ber,
                i as f64 * HISTOGRAM_BIN_WIDTH,
                (i + 1) as f64 * HISTOGRAM_BIN_WIDTH,
                c
            )?;
        }
    }
    Ok(())
}

pub fn export_report(result: &CampaignResult, path: impl AsRef<Path>, kind: ReportKind) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut buf = Vec::new();
    match kind {
        ReportKind::Csv => write_csv(&mut buf, result).map_err(io)?,
        ReportKind::HistogramCsv => write_histogram_csv(&mut buf, result).map_err(io)?,
        ReportKind::Json => {
            serde_json::to_writer_pretty(&mut buf, result)?;
            buf.push(b'\n');
        }
    }
    std::fs::write(path, buf).map_err(io)
}

pub fn import_json(path: impl AsRef<Path>) -> Result<CampaignResult> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 1e-9);
        assert_eq!(g[3], 1e-8);
        assert_eq!(*g.last().unwrap(), 1e-1);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((g[1] - 2.154_434_690_03e-9).abs() < 1e-19);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut c = CampaignConfig::default();
        c.ber_grid = vec![1e-3, 1e-4];
        assert!(matches!(c.validate(), Err(Error::Campaign(m)) if m.starts_with("ber_grid")));
        let mut c = CampaignConfig::default();
        c.confidence = 1.0;
        assert!(matches!(c.validate(), Err(Error::Campaign(m)) if m.starts_with("confidence")));
        let mut c = CampaignConfig::default();
        c.n_max = 5;
        assert!(matches!(c.validate(), Err(Error::Campaign(m)) if m.starts_with("n_max")));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<CampaignConfig>(r#"{"ber_grid":[1e-3],"bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let c: CampaignConfig = serde_json::from_str(r#"{"injection_mode":{"kind":"fixed_bit","bit":23}}"#).unwrap();
        assert_eq!(c.injection_mode, InjectionMode::FixedBit(23));
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.07, 0.29, 0.5, 63.0 / 64.0, 1.0]);
        assert_eq!(h.iter().sum::<usize>(), 6);
        assert_eq!(h[0], 1);
        assert_eq!(h[7], 1);
        assert_eq!(h[29], 1);
        assert_eq!(h[50], 1);
        assert_eq!(h[98], 1);
        assert_eq!(h[99], 1);
        assert!((histogram_mass_at_or_above(&h, 0.9) - 2.0 / 6.0).abs() < 1e-12);
        assert!((histogram_mass_below(&h, 0.5) - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_result_gives_header_only_csv() {
        let r = CampaignResult {
            tool_version: "x".into(),
            rng: "y".into(),
            config: CampaignConfig::default(),
            num_params: 0,
            baseline: 1.0,
            records: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ber,mean,std,ci_low,ci_high,n,detections\n");
    }

    #[test]
    fn ci_calibration() {
        // Bernoulli(0.8) samples of size 50, 1000 resamples: 95% CI should
        // cover the true mean about 95% of the time.
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(77);
        let mut covered = 0;
        for _ in 0..1000 {
            let xs: Vec<f64> = (0..50).map(|_| if rng.random::<f64>() < 0.8 { 1.0 } else { 0.0 }).collect();
            let m = stats::mean(&xs);
            let hw = stats::ci_half_width(&xs, 0.95);
            if (m - hw..=m + hw).contains(&0.8) {
                covered += 1;
            }
        }
        let rate = covered as f64 / 1000.0;
        assert!((rate - 0.95).abs() <= 0.05, "coverage {rate}");
    }
}
