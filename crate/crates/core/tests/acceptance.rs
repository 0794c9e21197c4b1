//! Acceptance criteria, one check each, with runtime limits.
//!
//! Runs as a plain binary: every criterion prints a PASS or FAIL line and the
//! process exits nonzero if any failed.

mod common;

use std::cell::Cell;
use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pump_anomaly::data::{generate_synthetic, split_adaptation, PumpDataset, SyntheticSpec};
use pump_anomaly::detectors::{training_examples, PolicyKind};
use pump_anomaly::evaluation::{accuracy, cross_validate, fpr, tpdr, Algorithm, CrossValConfig, CrossValReport, Variant};
use pump_anomaly::nn::{conv1d_forward, count_macs, train_with_report, training_accuracy, ConvParams, ModelConfig, Real, Tensor, TrainHyper};
use pump_anomaly::rng::Rng;

use common::gradcheck;

type Check = std::result::Result<String, String>;

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

/// f64 that counts its multiplications.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
struct Counted(f64);

impl Add for Counted {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Counted(self.0 + o.0)
    }
}
impl Sub for Counted {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Counted(self.0 - o.0)
    }
}
impl Mul for Counted {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        MULTIPLIES.with(|m| m.set(m.get() + 1));
        Counted(self.0 * o.0)
    }
}
impl Div for Counted {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Counted(self.0 / o.0)
    }
}
impl Neg for Counted {
    type Output = Self;
    fn neg(self) -> Self {
        Counted(-self.0)
    }
}
impl AddAssign for Counted {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl SubAssign for Counted {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl MulAssign for Counted {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}
impl Real for Counted {
    fn zero() -> Self {
        Counted(0.0)
    }
    fn one() -> Self {
        Counted(1.0)
    }
    fn from_f64(v: f64) -> Self {
        Counted(v)
    }
    fn to_f64(self) -> f64 {
        self.0
    }
    fn sqrt(self) -> Self {
        Counted(self.0.sqrt())
    }
    fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

fn counted_conv_multiplies(cin: usize, cout: usize, kernel: usize, length: usize) -> u64 {
    let params = ConvParams::new(
        cin,
        cout,
        kernel,
        vec![Counted(0.5); cin * cout * kernel],
        vec![Counted(0.1); cout],
    )
    .unwrap();
    let input = Tensor::from_vec(cin, length, vec![Counted(1.0); cin * length]).unwrap();
    MULTIPLIES.with(|m| m.set(0));
    conv1d_forward(&input, &params).unwrap();
    MULTIPLIES.with(|m| m.get())
}

fn criterion_1() -> Check {
    let rows = [
        ((4, 11, 5), "6.2e5", "7.5e5"),
        ((6, 23, 5), "2.2e6", "2.5e6"),
        ((10, 23, 10), "1.5e7", "1.6e7"),
        ((10, 19, 20), "5.0e7", "5.1e7"),
        ((30, 23, 30), "4.7e8", "4.7e8"),
    ];
    let mut cache: HashMap<(usize, usize, usize), u64> = HashMap::new();
    for ((d, k, c), cnn_ref, ecnn_ref) in rows {
        for (config, reference) in [(ModelConfig::cnn(d, k, c), cnn_ref), (ModelConfig::ecnn(d, k, c), ecnn_ref)] {
            let macs = count_macs(&config);
            let rounded = format!("{:.1e}", macs as f64);
            if rounded != reference {
                return Err(format!("{} {d}/{k}/{c}: {macs} rounds to {rounded}, expected {reference}", config.label()));
            }
            let counted: u64 = config
                .layer_channels()
                .into_iter()
                .map(|(i, o)| {
                    *cache
                        .entry((i, o, k))
                        .or_insert_with(|| counted_conv_multiplies(i, o, k, config.length))
                })
                .sum();
            if counted != macs {
                return Err(format!("{} {d}/{k}/{c}: instrumented {counted} != count_macs {macs}", config.label()));
            }
        }
    }
    Ok("all ten MAC entries match to two significant figures and the instrumented count".into())
}

fn criterion_2() -> Check {
    let worst = gradcheck::run_suite(gradcheck::CONFIGS)?;
    Ok(format!(
        "{} random configurations, worst relative error {worst:.2e} (limit {:e})",
        gradcheck::CONFIGS,
        gradcheck::TOLERANCE
    ))
}

fn default_dataset() -> PumpDataset {
    generate_synthetic(&SyntheticSpec::default()).unwrap()
}

fn criterion_3() -> Check {
    let ds = default_dataset();
    let examples = training_examples(&ds.view(), true, Rng::stream(0, 1).next_u64()).map_err(|e| e.to_string())?;
    let hyper = TrainHyper::default();
    let (model, report) =
        train_with_report(&examples, ModelConfig::ecnn(4, 11, 5), &hyper).map_err(|e| e.to_string())?;
    let acc = training_accuracy(&model, &examples).map_err(|e| e.to_string())?;
    let line = format!(
        "training accuracy {:.4} after {} epochs (final loss {:.4})",
        acc,
        hyper.epochs,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    if acc >= 0.95 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn compared_variants() -> Vec<Variant> {
    let mut out = Vec::new();
    for a in [Algorithm::Threshold, Algorithm::Ecnn] {
        for p in [PolicyKind::Optimal, PolicyKind::Fixed, PolicyKind::Fpr] {
            out.push(Variant::new(a, p).unwrap());
        }
    }
    out.push(Variant::new(Algorithm::Combined, PolicyKind::Fpr).unwrap());
    out
}

fn criterion_4(report: &CrossValReport) -> Check {
    let acc = |a, p| 100.0 * report.result(Variant::new(a, p).unwrap()).unwrap().aggregate.accuracy;
    let (eo, ef, ex) = (
        acc(Algorithm::Ecnn, PolicyKind::Optimal),
        acc(Algorithm::Ecnn, PolicyKind::Fpr),
        acc(Algorithm::Ecnn, PolicyKind::Fixed),
    );
    let (to, tf, tx) = (
        acc(Algorithm::Threshold, PolicyKind::Optimal),
        acc(Algorithm::Threshold, PolicyKind::Fpr),
        acc(Algorithm::Threshold, PolicyKind::Fixed),
    );
    let combined = acc(Algorithm::Combined, PolicyKind::Fpr);
    let line = format!(
        "ECNN opt/fpr/fixed {eo:.2}/{ef:.2}/{ex:.2}, threshold {to:.2}/{tf:.2}/{tx:.2}, combined {combined:.2}"
    );
    let checks = [
        ("ECNN optimal >= ECNN fpr", eo >= ef),
        ("ECNN fpr >= ECNN fixed - 2", ef >= ex - 2.0),
        ("threshold optimal >= threshold fpr", to >= tf),
        ("threshold fpr >= threshold fixed - 2", tf >= tx - 2.0),
        ("combined >= max(ECNN fpr, threshold fpr) - 2", combined >= ef.max(tf) - 2.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        Ok(line)
    } else {
        Err(format!("{line}; violated: {}", failed.join(", ")))
    }
}

fn criterion_5(ds: &PumpDataset, report: &CrossValReport, cfg: &CrossValConfig) -> Check {
    let mut checked = 0usize;
    let mut fallbacks = 0usize;
    for fold in &report.folds {
        let split = split_adaptation(ds.pump(&fold.pump_id).unwrap(), cfg.adapt_fraction).map_err(|e| e.to_string())?;
        let model = fold.ecnn.as_ref().ok_or("fold kept no ECNN model")?;
        for sel in &fold.selections {
            if !sel.succeeded {
                fallbacks += 1;
                continue;
            }
            let flagged = split
                .adapt_normals
                .iter()
                .map(|s| sel.profile.predict(model, s))
                .collect::<pump_anomaly::Result<Vec<u8>>>()
                .map_err(|e| e.to_string())?;
            let measured = flagged.iter().filter(|&&l| l == 1).count() as f64 / flagged.len() as f64;
            if measured >= cfg.target_fpr {
                return Err(format!(
                    "{} on {}: adaptation FPR {measured} is not below {}",
                    sel.variant.label(),
                    fold.pump_id,
                    cfg.target_fpr
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} successful selections re-measured, 0 violations ({fallbacks} fallbacks excluded)"))
}

fn criterion_6(ds: &PumpDataset, report: &CrossValReport) -> Check {
    let mut violations = 0usize;
    for fold in &report.folds {
        violations += fold.train_samples.iter().filter(|(p, _)| *p == fold.pump_id).count();
        let expected = ds.len() - ds.pump(&fold.pump_id).map_or(0, <[_]>::len);
        if fold.train_samples.len() != expected {
            return Err(format!("fold {}: {} training samples, expected {expected}", fold.pump_id, fold.train_samples.len()));
        }
    }
    if violations == 0 {
        Ok(format!("{} folds, 0 violations", report.folds.len()))
    } else {
        Err(format!("{violations} held-out samples found in training views"))
    }
}

fn cli(dir: &Path, args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pump-anomaly"))
        .current_dir(dir)
        .env_remove("PUMP_ANOMALY_SEED")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_7() -> Check {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let commands: [&[&str]; 4] = [
        &["generate", "--pumps", "4", "--samples", "30", "--seed", "7", "--out", "data.ndjson"],
        &["train", "--dataset", "data.ndjson", "--algo", "ecnn", "--epochs", "2", "--seed", "7", "--out", "model.json"],
        &["crossval", "--dataset", "data.ndjson", "--algo", "threshold,ecnn,combined", "--policy", "optimal,fixed,fpr", "--depth", "2", "--kernel", "5", "--channels", "3", "--epochs", "2", "--seed", "7", "--out", "cv.csv"],
        &["dse", "--dataset", "data.ndjson", "--depths", "2,3", "--kernels", "3,5", "--channels", "2", "--epochs", "2", "--seed", "7", "--out", "dse.csv", "--pareto-out", "pareto.csv"],
    ];
    for dir in &dirs {
        for args in commands {
            cli(dir.path(), args)?;
        }
    }
    for artifact in ["data.ndjson", "model.json", "cv.csv", "dse.csv", "pareto.csv"] {
        let a = std::fs::read(dirs[0].path().join(artifact)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(artifact)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{artifact} differs between runs"));
        }
    }
    Ok("generate, train, crossval and dse artifacts are byte-identical across runs".into())
}

fn criterion_8() -> Check {
    let labels = [0u8, 0, 0, 0, 1];
    let preds = [1u8, 0, 0, 0, 1];
    let a = accuracy(&preds, &labels).map_err(|e| e.to_string())?;
    let f = fpr(&preds, &labels).map_err(|e| e.to_string())?;
    let t = tpdr(&[
        (vec![0u8, 1, 1], vec![0u8, 1, 0]),
        (vec![1, 0, 0], vec![0, 1, 1]),
        (vec![1, 1, 0], vec![1, 0, 0]),
    ])
    .map_err(|e| e.to_string())?;
    if a == 0.8 && f == 0.25 && (t - 2.0 / 3.0).abs() < 1e-15 {
        Ok(format!("accuracy {a}, FPR {f}, TPDR {t:.4}"))
    } else {
        Err(format!("accuracy {a}, FPR {f}, TPDR {t}"))
    }
}

struct Outcome {
    failed: usize,
    ran: usize,
    selected: Vec<u32>,
}

impl Outcome {
    fn force(&mut self, id: u32, run: impl FnOnce(&mut Self)) {
        if !self.selected.is_empty() && !self.selected.contains(&id) {
            self.selected.push(id);
        }
        run(self);
    }

    fn wants(&self, id: u32) -> bool {
        self.selected.is_empty() || self.selected.contains(&id)
    }

    fn record(&mut self, id: u32, limit: Duration, run: impl FnOnce() -> Check) {
        if !self.wants(id) {
            return;
        }
        self.ran += 1;
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; runtime {elapsed:.1?} exceeds {limit:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            self.failed += 1;
        }
        println!("criterion {id} {status} ({elapsed:.1?}, limit {limit:?}): {detail}");
    }
}

fn main() {
    let selected = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut outcome = Outcome { failed: 0, ran: 0, selected };
    outcome.record(1, Duration::from_secs(1), criterion_1);
    outcome.record(2, Duration::from_secs(60), criterion_2);
    outcome.record(3, Duration::from_secs(600), criterion_3);

    if [4, 5, 6].iter().any(|id| outcome.wants(*id)) {
        let ds = default_dataset();
        let cfg = CrossValConfig::default();
        let mut report = None;
        outcome.force(4, |o| {
            o.record(4, Duration::from_secs(1800), || {
                let r = cross_validate(&ds, &compared_variants(), &cfg)
                    .map_err(|e| format!("cross-validation failed: {e}"))?;
                let line = criterion_4(&r);
                report = Some(r);
                line
            })
        });
        match &report {
            Some(r) => {
                outcome.record(5, Duration::from_secs(60), || criterion_5(&ds, r, &cfg));
                outcome.record(6, Duration::from_secs(60), || criterion_6(&ds, r));
            }
            None => {
                for id in [5, 6] {
                    outcome.record(id, Duration::from_secs(60), || Err("no cross-validation report".into()));
                }
            }
        }
    }
    outcome.record(7, Duration::from_secs(600), criterion_7);
    outcome.record(8, Duration::from_secs(1), criterion_8);

    println!("acceptance: {} of {} criteria failed", outcome.failed, outcome.ran);
    if outcome.failed > 0 {
        std::process::exit(1);
    }
}
