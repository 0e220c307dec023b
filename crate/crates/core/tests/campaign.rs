use tempfile::TempDir;

use vitguard::bitcodec::count_mismatches;
use vitguard::campaign::{
    export_report, histogram, import_json, run_campaign, AccuracyMetric, Campaign, CampaignConfig, Protection,
    ReportKind, ScrubPolicy, HISTOGRAM_BINS,
};
use vitguard::faultinject::{BitErrorRate, InjectionMode};
use vitguard::toy::{synthetic_images, teacher_dataset, toy_model};
use vitguard::vit::{Batch, ViTConfig, ViTModel};

fn fixture() -> (ViTModel, Batch) {
    let model = toy_model(ViTConfig::toy_tiny(), 0).unwrap();
    let batch = teacher_dataset(&model, 8, 0).unwrap();
    (model, batch)
}

fn cfg(protection: Protection, grid: Vec<f64>, n: usize) -> CampaignConfig {
    CampaignConfig {
        ber_grid: grid,
        protection,
        n_initial: n,
        n_max: n,
        base_seed: 17,
        ..CampaignConfig::default()
    }
}

fn same_bits(a: &ViTModel, b: &ViTModel) -> bool {
    a.params().iter().zip(b.params()).all(|(x, y)| x.bits().eq(y.bits()))
}

#[test]
fn same_seed_same_result_for_any_worker_count() {
    let (model, batch) = fixture();
    let c = cfg(Protection::Parity, vec![1e-5, 1e-4], 6);
    let a = run_campaign(&model, &batch, &c).unwrap();
    let b = run_campaign(&model, &batch, &c).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for w in [1, 3] {
        let r = Campaign::new(&model, &batch, c.clone()).unwrap().with_workers(w).unwrap().run().unwrap();
        assert_eq!(r, a, "workers={w}");
    }
    let other = run_campaign(&model, &batch, &CampaignConfig { base_seed: 18, ..c }).unwrap();
    assert_ne!(other.records[1].samples, a.records[1].samples);
}

#[test]
fn zero_fault_level_reproduces_baseline() {
    let (model, batch) = fixture();
    for p in [Protection::Off, Protection::Parity] {
        // 32 * N * 1e-9 rounds to zero flips
        let r = run_campaign(&model, &batch, &cfg(p, vec![1e-9], 4)).unwrap();
        let rec = &r.records[0];
        assert_eq!(rec.faults_per_trial, 0);
        assert!(rec.samples.iter().all(|&s| s == r.baseline));
        assert!(rec.detections.iter().all(|&d| d == 0));
        assert_eq!(r.baseline, 1.0);
    }
}

#[test]
fn detections_equal_odd_flip_words() {
    let (model, batch) = fixture();
    let c = Campaign::new(&model, &batch, cfg(Protection::Parity, vec![1e-3], 2)).unwrap();
    let ber = BitErrorRate::new(1e-3).unwrap();
    let mut saw_collision = false;
    for seed in 0..6 {
        let o = c.run_trial(ber, seed).unwrap();
        assert_eq!(o.detections, o.odd_flip_words, "seed {seed}");
        saw_collision |= o.odd_flip_words < o.planned_flips;
    }
    assert!(saw_collision, "dense plans should put several flips in one word");

    let off = Campaign::new(&model, &batch, cfg(Protection::Off, vec![1e-3], 2)).unwrap();
    let o = off.run_trial(ber, 0).unwrap();
    assert_eq!(o.detections, 0);
    assert_eq!(o.planned_flips, c.run_trial(ber, 0).unwrap().planned_flips);
}

#[test]
fn fixed_bit_flips_are_all_detected() {
    let (model, batch) = fixture();
    let mut config = cfg(Protection::Parity, vec![1e-4], 2);
    config.injection_mode = InjectionMode::FixedBit(30);
    let c = Campaign::new(&model, &batch, config).unwrap();
    let o = c.run_trial(BitErrorRate::new(1e-4).unwrap(), 3).unwrap();
    assert!(o.planned_flips > 0);
    assert_eq!(o.detections, o.planned_flips);
}

#[test]
fn trials_leave_deployed_weights_untouched() {
    let (model, batch) = fixture();
    for p in [Protection::Off, Protection::Parity] {
        let c = Campaign::new(&model, &batch, cfg(p, vec![1e-3], 2)).unwrap();
        let deployed = ViTModel::new(model.config().clone(), c.deployed_params().to_vec()).unwrap();
        let mut scratch = deployed.clone();
        let ber = BitErrorRate::new(1e-3).unwrap();
        let first = c.run_trial_on(&mut scratch, ber, 9).unwrap();
        assert!(same_bits(&scratch, &deployed));
        for s in 10..14 {
            c.run_trial_on(&mut scratch, ber, s).unwrap();
        }
        assert!(same_bits(&scratch, &deployed));
        assert_eq!(c.run_trial_on(&mut scratch, ber, 9).unwrap(), first);
        if p == Protection::Parity {
            assert_eq!(count_mismatches(scratch.params()), 0);
        }
    }
    assert!(same_bits(&model, &toy_model(ViTConfig::toy_tiny(), 0).unwrap()));
}

#[test]
fn labeled_metric_needs_labels() {
    let model = toy_model(ViTConfig::toy_tiny(), 0).unwrap();
    let batch = Batch::new(synthetic_images(model.config(), 2, 0).unwrap(), None).unwrap();
    let mut c = cfg(Protection::Off, vec![1e-6], 2);
    c.accuracy_metric = AccuracyMetric::Labeled;
    assert!(Campaign::new(&model, &batch, c).is_err());
}

#[test]
fn report_formats() {
    let (model, batch) = fixture();
    let r = run_campaign(&model, &batch, &cfg(Protection::Off, vec![1e-6, 1e-5, 1e-4], 3)).unwrap();
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("r.csv");
    let hist = tmp.path().join("h.csv");
    let json = tmp.path().join("r.json");
    export_report(&r, &csv, ReportKind::Csv).unwrap();
    export_report(&r, &hist, ReportKind::HistogramCsv).unwrap();
    export_report(&r, &json, ReportKind::Json).unwrap();

    let csv = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("1e-6,"));
    assert_eq!(rows[3].split(',').nth(5), Some("3"));

    let hist = std::fs::read_to_string(hist).unwrap();
    let lines: Vec<&str> = hist.lines().collect();
    assert_eq!(lines[0], "ber,bin_low,bin_high,count");
    assert_eq!(lines.len(), 1 + 3 * HISTOGRAM_BINS);
    assert_eq!(lines[1], "1e-6,0.00,0.01,0");
    let total: usize = lines[1..=HISTOGRAM_BINS]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 3);

    assert_eq!(import_json(&json).unwrap(), r);

    let h = histogram(&[0.0, 0.005, 0.01, 0.5, 0.99, 1.0]);
    assert_eq!((h[0], h[1], h[50], h[99]), (2, 1, 1, 2));
}

#[test]
fn masking_on_read_matches_scrub_once() {
    let (model, batch) = fixture();
    let once = Campaign::new(&model, &batch, cfg(Protection::Parity, vec![1e-4], 2)).unwrap();
    let mut c = cfg(Protection::Parity, vec![1e-4], 2);
    c.scrub = ScrubPolicy::OnRead;
    let on_read = Campaign::new(&model, &batch, c).unwrap();
    let ber = BitErrorRate::new(1e-4).unwrap();
    for seed in 0..4 {
        assert_eq!(once.run_trial(ber, seed).unwrap(), on_read.run_trial(ber, seed).unwrap());
    }

    let deployed = ViTModel::new(model.config().clone(), on_read.deployed_params().to_vec()).unwrap();
    let mut scratch = deployed.clone();
    on_read.run_trial_on(&mut scratch, ber, 1).unwrap();
    assert!(same_bits(&scratch, &deployed));
}

#[test]
fn protection_never_significantly_worse() {
    let (model, batch) = fixture();
    let grid = vec![1e-6, 1e-5, 1e-4];
    let off = run_campaign(&model, &batch, &cfg(Protection::Off, grid.clone(), 12)).unwrap();
    let on = run_campaign(&model, &batch, &cfg(Protection::Parity, grid, 12)).unwrap();
    for (u, p) in off.records.iter().zip(&on.records) {
        assert!(p.ci_high >= u.ci_low, "ber {}: {} vs {}", u.ber, p.mean, u.mean);
        if u.mean < off.baseline - 0.05 {
            assert!(p.mean > u.mean, "ber {}: {} vs {}", u.ber, p.mean, u.mean);
        }
    }
}
