//! `vitguard` command line.
//!
//! Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 verification failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bitcodec::{count_mismatches, distribution_report, encode_params_with_stats, scrub, ProtectedParams};
use crate::campaign::{
    compute_berzad_with, export_report, BerzadEstimate, BerzadTarget, Campaign, CampaignConfig, CampaignResult,
    Protection, ReportKind,
};
use crate::error::Error;
use crate::faultinject::{
    apply_faults, layout_of, plan_faults, write_plans_jsonl, BerDenominator, BitErrorRate, FaultSpec, InjectionMode,
};
use crate::modelio::{
    compute_golden, load_checkpoint, load_checkpoint_with_meta, load_dataset, save_checkpoint_with, save_dataset,
    GoldenCache,
};
use crate::overhead::{overhead_table, published_cases, CostModel, OverheadCase};
use crate::toy::{teacher_dataset, toy_model};
use crate::vit::{ViTConfig, ViTModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vitguard", version, about = "Parity protection and fault injection for ViT weights")]
pub struct Cli {
    /// Worker threads for campaign trials (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parity-encode every weight of a checkpoint.
    Protect { input: PathBuf, output: PathBuf },
    /// Count parity mismatches; exits 3 if any.
    Verify { checkpoint: PathBuf },
    /// Zero-mask mismatching words and write a scrub report.
    Scrub {
        input: PathBuf,
        output: PathBuf,
        /// Report path (default: <output>.scrub.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply one seeded fault plan to a checkpoint.
    Inject {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        ber: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flip only this bit position.
        #[arg(long)]
        bit: Option<u32>,
        /// Excluded bit positions in random mode.
        #[arg(long, value_delimiter = ',', default_value = "30")]
        exclude: Vec<u32>,
        #[arg(long, value_enum, default_value_t = DenominatorArg::Bits)]
        denominator: DenominatorArg,
        /// Fault plan output (JSON lines; default: <output>.plan.jsonl).
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// BER sweep described by a JSON run spec.
    Campaign { spec: PathBuf },
    /// Per-target BERZAD described by a JSON run spec.
    Berzad { spec: PathBuf },
    /// Parity vs ABFT overhead table (published inputs unless a spec is given).
    Overhead { spec: Option<PathBuf> },
    /// Weight value distribution of a checkpoint.
    Distribution {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Write a seeded random toy checkpoint, synthetic dataset and golden cache.
    GenToy {
        #[arg(long, default_value = "toy-tiny")]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        images: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum DenominatorArg {
    Bits,
    Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecCommand {
    Campaign,
    Berzad,
    Overhead,
}

/// JSON run file for `campaign`, `berzad` and `overhead`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: SpecCommand,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Golden cache; recomputed when absent or stale.
    #[serde(default)]
    pub golden: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub campaign: CampaignConfig,
    /// Campaign: protection settings to run in turn (default: `campaign.protection`).
    #[serde(default)]
    pub protections: Option<Vec<Protection>>,
    /// BERZAD: bit positions; absent means random-bit ("all").
    #[serde(default)]
    pub targets: Option<Vec<u32>>,
    #[serde(default)]
    pub cost_model: Option<CostModel>,
    #[serde(default)]
    pub cases: Option<Vec<OverheadCase>>,
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&s).map_err(|e| Error::Campaign(format!("{}: {e}", path.display())))?;
        spec.campaign.validate()?;
        Ok(spec)
    }

    fn require<'a>(&self, field: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf, Error> {
        field.as_ref().ok_or_else(|| Error::Campaign(format!("{key}: required for this command")))
    }
}

/// Provenance wrapper for JSON reports.
#[derive(Debug, Serialize)]
struct Report<'a, T: Serialize> {
    tool_version: &'static str,
    spec: &'a RunSpec,
    result: &'a T,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::Io { .. }) => EXIT_IO,
            CliError::Lib(_) => EXIT_VALIDATION,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn carry_meta(meta: &Value, extra: &[(&str, Value)]) -> Map<String, Value> {
    let mut m = Map::new();
    if let Some(obj) = meta.as_object() {
        for (k, v) in obj {
            if k != "kind" && k != "config" {
                m.insert(k.clone(), v.clone());
            }
        }
    }
    for (k, v) in extra {
        m.insert((*k).to_string(), v.clone());
    }
    m
}

pub fn cmd_protect(input: &Path, output: &Path) -> CliResult<crate::bitcodec::EncodeStats> {
    let (model, meta) = load_checkpoint_with_meta(input)?;
    let (enc, stats) = encode_params_with_stats(model.params());
    let protected = ViTModel::new(model.config().clone(), enc.into_tensors())?;
    save_checkpoint_with(&protected, output, &carry_meta(&meta, &[("protection", json!("even_parity_lsb"))]))?;
    println!(
        "protected {} words: flipped_lsbs={} max_ulp_change={} max_abs_change={:e}",
        stats.total_words, stats.lsb_flipped, stats.max_ulp_change, stats.max_abs_change
    );
    Ok(stats)
}

pub fn cmd_verify(checkpoint: &Path) -> CliResult<usize> {
    let model = load_checkpoint(checkpoint)?;
    let mismatches = count_mismatches(model.params());
    println!("mismatches={mismatches} total_words={}", model.num_params());
    if mismatches > 0 {
        return Err(CliError::Verify(format!("{mismatches} parity mismatches")));
    }
    Ok(0)
}

pub fn cmd_scrub(input: &Path, output: &Path, report: Option<&Path>) -> CliResult<crate::bitcodec::ScrubReport> {
    let (model, meta) = load_checkpoint_with_meta(input)?;
    let (clean, rep) = scrub(&ProtectedParams::from_stored(model.params().to_vec()));
    let scrubbed = ViTModel::new(model.config().clone(), clean)?;
    save_checkpoint_with(&scrubbed, output, &carry_meta(&meta, &[]))?;
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(output, ".scrub.json"));
    let names: Vec<&str> = model.params().iter().map(|t| t.name.as_str()).collect();
    write_json(
        &report_path,
        &json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "input": input,
            "detected": rep.detected,
            "total_words": rep.total_words,
            "detected_indices": rep.detected_indices.iter()
                .map(|ix| json!({"tensor": ix.tensor, "name": names[ix.tensor], "element": ix.element}))
                .collect::<Vec<_>>(),
        }),
    )?;
    println!("detected={} total_words={}", rep.detected, rep.total_words);
    Ok(rep)
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_inject(
    input: &Path,
    output: &Path,
    ber: f64,
    seed: u64,
    bit: Option<u32>,
    exclude: &[u32],
    denominator: BerDenominator,
    plan_path: Option<&Path>,
) -> CliResult<usize> {
    let (model, meta) = load_checkpoint_with_meta(input)?;
    let ber = BitErrorRate::new(ber)?;
    let spec = FaultSpec {
        ber,
        excluded_bits: exclude.to_vec(),
        mode: bit.map_or(InjectionMode::RandomBit, InjectionMode::FixedBit),
        denominator,
    };
    let plan = plan_faults(&layout_of(model.params()), &spec, seed)?;
    let faulted = ViTModel::new(model.config().clone(), apply_faults(model.params(), &plan)?)?;
    save_checkpoint_with(&faulted, output, &carry_meta(&meta, &[]))?;
    let plan_path = plan_path.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(output, ".plan.jsonl"));
    let f = std::fs::File::create(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
    write_plans_jsonl(std::io::BufWriter::new(f), std::slice::from_ref(&plan))?;
    println!("flips={} seed={seed}", plan.len());
    Ok(plan.len())
}

fn load_inputs(spec: &RunSpec) -> CliResult<(ViTModel, crate::vit::Batch, Option<GoldenCache>)> {
    let model = load_checkpoint(spec.require(&spec.checkpoint, "checkpoint")?)?;
    let batch = load_dataset(spec.require(&spec.dataset, "dataset")?)?;
    let golden = match &spec.golden {
        Some(p) if p.exists() => {
            let g = GoldenCache::load(p)?;
            if g.is_valid_for(&model)? && g.predictions.len() == batch.len() {
                Some(g)
            } else {
                log::warn!("golden cache {} is stale; recomputing", p.display());
                let g = compute_golden(&model, &batch)?;
                g.save(p)?;
                Some(g)
            }
        }
        Some(p) => {
            let g = compute_golden(&model, &batch)?;
            g.save(p)?;
            Some(g)
        }
        None => None,
    };
    Ok((model, batch, golden))
}

fn make_campaign<'a>(
    model: &'a ViTModel,
    batch: &'a crate::vit::Batch,
    golden: Option<&GoldenCache>,
    config: CampaignConfig,
    workers: Option<usize>,
) -> CliResult<Campaign<'a>> {
    let c = match (config.accuracy_metric, golden) {
        (crate::campaign::AccuracyMetric::Agreement, Some(g)) => {
            Campaign::with_reference(model, batch, config, g.predictions.clone())?
        }
        _ => Campaign::new(model, batch, config)?,
    };
    let c = c.with_progress(true);
    Ok(match workers {
        Some(w) => c.with_workers(w)?,
        None => c,
    })
}

fn protection_name(p: Protection) -> &'static str {
    match p {
        Protection::Off => "off",
        Protection::Parity => "parity",
    }
}

pub fn cmd_campaign(spec_path: &Path, workers: Option<usize>) -> CliResult<Vec<CampaignResult>> {
    let spec = RunSpec::load(spec_path)?;
    if spec.command != SpecCommand::Campaign {
        return Err(Error::Campaign("command: expected `campaign`".into()).into());
    }
    let out = spec.require(&spec.output_dir, "output_dir")?.clone();
    let (model, batch, golden) = load_inputs(&spec)?;
    create_dir(&out)?;
    let protections = spec.protections.clone().unwrap_or_else(|| vec![spec.campaign.protection]);
    let mut results = Vec::new();
    for p in protections {
        let mut cfg = spec.campaign.clone();
        cfg.protection = p;
        let campaign = make_campaign(&model, &batch, golden.as_ref(), cfg, workers)?;
        let result = campaign.run()?;
        let stem = format!("campaign_{}", protection_name(p));
        export_report(&result, out.join(format!("{stem}.csv")), ReportKind::Csv)?;
        export_report(&result, out.join(format!("{stem}_hist.csv")), ReportKind::HistogramCsv)?;
        write_json(
            &out.join(format!("{stem}.json")),
            &Report {
                tool_version: env!("CARGO_PKG_VERSION"),
                spec: &spec,
                result: &result,
            },
        )?;
        results.push(result);
    }
    Ok(results)
}

pub fn cmd_berzad(spec_path: &Path, workers: Option<usize>) -> CliResult<BerzadEstimate> {
    let spec = RunSpec::load(spec_path)?;
    if spec.command != SpecCommand::Berzad {
        return Err(Error::Campaign("command: expected `berzad`".into()).into());
    }
    let out = spec.require(&spec.output_dir, "output_dir")?.clone();
    let (model, batch, golden) = load_inputs(&spec)?;
    create_dir(&out)?;
    let targets: Vec<BerzadTarget> = match &spec.targets {
        Some(bits) => bits.iter().map(|&b| BerzadTarget::Bit(b)).collect(),
        None => vec![BerzadTarget::All],
    };
    // a valid golden cache holds exactly the predictions Campaign::new recomputes
    drop(golden);
    let est = compute_berzad_with(&model, &batch, &spec.campaign, &targets, |c| {
        let c = c.with_progress(true);
        Ok(match workers {
            Some(w) => c.with_workers(w)?,
            None => c,
        })
    })?;

    let mut csv = String::from("target,berzad,baseline\n");
    for e in &est.entries {
        let t = match e.target {
            BerzadTarget::Bit(b) => format!("bit{b}"),
            BerzadTarget::All => "all".into(),
        };
        csv.push_str(&format!("{t},{},{}\n", e.berzad, est.baseline));
    }
    let csv_path = out.join("berzad.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    write_json(
        &out.join("berzad.json"),
        &Report {
            tool_version: env!("CARGO_PKG_VERSION"),
            spec: &spec,
            result: &est,
        },
    )?;
    for e in &est.entries {
        println!("{:?}: {}", e.target, e.berzad);
    }
    Ok(est)
}

pub fn cmd_overhead(spec_path: Option<&Path>) -> CliResult<Value> {
    let spec = match spec_path {
        Some(p) => {
            let s = RunSpec::load(p)?;
            if s.command != SpecCommand::Overhead {
                return Err(Error::Campaign("command: expected `overhead`".into()).into());
            }
            s
        }
        None => RunSpec {
            command: SpecCommand::Overhead,
            checkpoint: None,
            dataset: None,
            golden: None,
            output_dir: None,
            campaign: CampaignConfig::default(),
            protections: None,
            targets: None,
            cost_model: None,
            cases: None,
        },
    };
    let model = spec.cost_model.unwrap_or_default();
    let cases = spec.cases.clone().unwrap_or_else(published_cases);
    let rows = overhead_table(&cases, &model)?;
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "cost_model": model,
        "rows": rows,
    });
    match &spec.output_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join("overhead.json"), &doc)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?),
    }
    Ok(doc)
}

pub fn cmd_distribution(checkpoint: &Path, bins: usize) -> CliResult {
    let model = load_checkpoint(checkpoint)?;
    let r = distribution_report(model.params(), bins);
    println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
    Ok(())
}

pub fn cmd_gen_toy(config: &str, seed: u64, images: usize, out_dir: &Path) -> CliResult {
    let cfg = ViTConfig::preset(config)
        .ok_or_else(|| Error::Config(format!("config: unknown preset `{config}` (toy-tiny, toy-small, toy-base)")))?;
    if images == 0 {
        return Err(Error::Dataset("images: need at least one".into()).into());
    }
    create_dir(out_dir)?;
    let model = toy_model(cfg, seed)?;
    let batch = teacher_dataset(&model, images, seed)?;
    save_checkpoint_with(&model, out_dir.join("model.vtft"), &carry_meta(&Value::Null, &[("seed", json!(seed)), ("preset", json!(config))]))?;
    save_dataset(&batch, Some(model.config().num_classes), out_dir.join("dataset.vtft"))?;
    compute_golden(&model, &batch)?.save(out_dir.join("golden.vtft"))?;
    println!(
        "wrote {} ({} params) and {} images to {}",
        config,
        model.num_params(),
        images,
        out_dir.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Protect { input, output } => cmd_protect(&input, &output).map(drop),
        Command::Verify { checkpoint } => cmd_verify(&checkpoint).map(drop),
        Command::Scrub { input, output, report } => cmd_scrub(&input, &output, report.as_deref()).map(drop),
        Command::Inject {
            input,
            output,
            ber,
            seed,
            bit,
            exclude,
            denominator,
            plan,
        } => {
            let d = match denominator {
                DenominatorArg::Bits => BerDenominator::Bits,
                DenominatorArg::Params => BerDenominator::Params,
            };
            cmd_inject(&input, &output, ber, seed, bit, &exclude, d, plan.as_deref()).map(drop)
        }
        Command::Campaign { spec } => cmd_campaign(&spec, cli.workers).map(drop),
        Command::Berzad { spec } => cmd_berzad(&spec, cli.workers).map(drop),
        Command::Overhead { spec } => cmd_overhead(spec.as_deref()).map(drop),
        Command::Distribution { checkpoint, bins } => cmd_distribution(&checkpoint, bins),
        Command::GenToy {
            config,
            seed,
            images,
            out_dir,
        } => cmd_gen_toy(&config, seed, images, &out_dir),
    }
}
