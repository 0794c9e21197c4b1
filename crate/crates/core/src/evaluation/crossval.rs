//! Leave-one-pump-out cross-validation.
//!
//! Fold `i` holds out the `i`-th pump (after dropping pumps that lack a label
//! class), trains the networks on the remaining pumps, adapts every requested
//! variant to the held-out pump from its first normal samples and evaluates
//! on the rest. All randomness of fold `i` comes from stream `(seed, i)`, so
//! folds give the same records whether they run in parallel or not.

use log::{info, warn};
use rayon::prelude::*;

use crate::data::{
    compute_normal_mean, split_adaptation, split_leave_one_pump_out, DatasetView, NormalMean,
    PumpDataset, VibrationSample,
};
use crate::detectors::{
    build_combined, build_ecnn_profile, build_threshold_profile, cnn_predict, default_factor_grid,
    ecnn_labels, select_param_fixed, select_param_optimal, select_threshold_fixed,
    select_threshold_optimal, threshold_epsilon, threshold_predict, training_examples,
    DetectorKind, PolicyKind, PumpProfile, SelectionPolicy, DEFAULT_TARGET_FPR,
};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, detected, fpr, tpdr, Algorithm, EvalRecord, AGGREGATE_SCOPE};
use crate::nn::{count_macs, train, Model, ModelConfig, TrainHyper};
use crate::rng::Rng;

/// One detector together with the way its pump-specific parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub policy: PolicyKind,
}

impl Variant {
    /// The combined detector is defined for the FPR policy only.
    pub fn new(algorithm: Algorithm, policy: PolicyKind) -> Result<Self> {
        if algorithm == Algorithm::Combined && policy != PolicyKind::Fpr {
            return Err(Error::usage("the combined detector supports only the fpr policy"));
        }
        Ok(Self { algorithm, policy })
    }

    /// Policy reported in records; the default CNN has no parameter.
    pub fn reported_policy(&self) -> Option<PolicyKind> {
        (self.algorithm != Algorithm::Cnn).then_some(self.policy)
    }

    pub fn label(&self) -> String {
        match self.reported_policy() {
            Some(p) => format!("{}-{}", self.algorithm.as_str(), p.as_str()),
            None => self.algorithm.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValConfig {
    /// Network dimensions; the input width follows from each algorithm.
    pub model: ModelConfig,
    /// Training recipe; its seed drives every fold.
    pub hyper: TrainHyper,
    pub adapt_fraction: f64,
    pub target_fpr: f64,
    /// Descending factor candidates for every ECNN policy.
    pub factor_grid: Vec<f64>,
    /// Samples per training pump used when tuning the fixed ECNN factor;
    /// 0 uses all of them.
    pub fixed_samples_per_pump: usize,
    /// Evaluate only the first `n` pumps as held-out pumps.
    pub max_folds: Option<usize>,
    pub jobs: usize,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::ecnn(4, 11, 5),
            hyper: TrainHyper::default(),
            adapt_fraction: 0.5,
            target_fpr: DEFAULT_TARGET_FPR,
            factor_grid: default_factor_grid(),
            fixed_samples_per_pump: 40,
            max_folds: None,
            jobs: 1,
        }
    }
}

impl CrossValConfig {
    fn policy(&self, kind: PolicyKind) -> SelectionPolicy {
        SelectionPolicy {
            kind,
            target_fpr: self.target_fpr,
            grid: self.factor_grid.clone(),
            fixed_value: None,
        }
    }

    fn network(&self, enhanced: bool) -> ModelConfig {
        ModelConfig {
            enhanced,
            ..self.model
        }
    }
}

/// Parameter chosen for one variant on one held-out pump.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionAudit {
    pub variant: Variant,
    pub profile: PumpProfile,
    /// False when no grid factor reached the target and the smallest one
    /// was used instead.
    pub succeeded: bool,
}

/// What one fold trained on and selected, for after-the-fact checks.
#[derive(Debug, Clone)]
pub struct FoldAudit {
    pub pump_id: String,
    /// `(pump_id, index within pump)` of every training sample.
    pub train_samples: Vec<(String, usize)>,
    pub adapt_count: usize,
    pub eval_count: usize,
    pub fixed_threshold: Option<f64>,
    pub fixed_factor: Option<f64>,
    pub selections: Vec<SelectionAudit>,
    pub cnn: Option<Model<f32>>,
    pub ecnn: Option<Model<f32>>,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    pub pumps: Vec<EvalRecord>,
    /// Unweighted mean over pumps.
    pub aggregate: EvalRecord,
    /// Correct predictions over all evaluated samples.
    pub weighted_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValReport {
    pub results: Vec<VariantResult>,
    pub folds: Vec<FoldAudit>,
    /// Held-out pumps that could not be adapted, with the reason.
    pub skipped: Vec<(String, String)>,
    /// Pumps dropped up front for lacking a normal or abnormal sample.
    pub excluded: Vec<String>,
}

impl CrossValReport {
    pub fn result(&self, variant: Variant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }

    /// Per-pump records followed by the aggregate, variant by variant.
    pub fn records(&self) -> Vec<EvalRecord> {
        self.results
            .iter()
            .flat_map(|r| r.pumps.iter().chain(std::iter::once(&r.aggregate)))
            .cloned()
            .collect()
    }
}

struct PumpOutcome {
    predictions: Vec<u8>,
    selection: Option<SelectionAudit>,
}

struct FoldResult {
    audit: FoldAudit,
    labels: Vec<u8>,
    outcomes: Vec<PumpOutcome>,
}

enum Fold {
    Done(Box<FoldResult>),
    Skipped(String, String),
}

/// A training pump prepared the way a held-out pump is evaluated.
struct ReferencePump<'a> {
    mean: NormalMean,
    samples: Vec<&'a VibrationSample>,
    labels: Vec<u8>,
}

fn reference_pumps<'a>(train: &DatasetView<'a>, adapt_fraction: f64) -> Vec<ReferencePump<'a>> {
    train
        .by_pump()
        .into_iter()
        .filter_map(|(_, samples)| {
            let split = split_adaptation(samples, adapt_fraction).ok()?;
            let mean = compute_normal_mean(split.adapt_normals.iter().copied()).ok()?;
            let labels = split.eval_set.iter().map(|s| s.label).collect();
            Some(ReferencePump {
                mean,
                samples: split.eval_set,
                labels,
            })
        })
        .collect()
}

/// Every `ceil(n / cap)`-th sample, so both label runs stay represented.
fn strided<'a>(pump: &ReferencePump<'a>, cap: usize) -> ReferencePump<'a> {
    let n = pump.samples.len();
    let step = if cap == 0 || n <= cap { 1 } else { n.div_ceil(cap) };
    let samples: Vec<_> = pump.samples.iter().copied().step_by(step).collect();
    ReferencePump {
        mean: pump.mean,
        labels: samples.iter().map(|s| s.label).collect(),
        samples,
    }
}

fn fixed_threshold(refs: &[ReferencePump<'_>]) -> Result<f64> {
    let per_pump: Vec<(Vec<f64>, Vec<u8>)> = refs
        .iter()
        .map(|p| {
            let eps = p.samples.iter().map(|s| threshold_epsilon(s, &p.mean)).collect();
            (eps, p.labels.clone())
        })
        .collect();
    select_threshold_fixed(&per_pump)
}

fn fixed_factor(model: &Model<f32>, refs: &[ReferencePump<'_>], grid: &[f64], cap: usize) -> Result<f64> {
    let subsets: Vec<ReferencePump<'_>> = refs.iter().map(|p| strided(p, cap)).collect();
    let labels: Vec<Vec<u8>> = subsets.iter().map(|p| p.labels.clone()).collect();
    select_param_fixed(grid, &labels, |i, f| {
        ecnn_labels(model, &subsets[i].samples, &subsets[i].mean, f)
    })
    .map(|(f, _)| f)
}

fn run_fold(
    dataset: &PumpDataset,
    fold: usize,
    pump_id: &str,
    variants: &[Variant],
    cfg: &CrossValConfig,
) -> Result<Fold> {
    let (train_view, test_view) = split_leave_one_pump_out(dataset, pump_id)?;
    let split = match split_adaptation(test_view.samples(), cfg.adapt_fraction) {
        Ok(s) => s,
        Err(Error::Usage(reason)) => return Ok(Fold::Skipped(pump_id.to_string(), reason)),
        Err(e) => return Err(e),
    };
    let adapt = &split.adapt_normals;
    let eval = &split.eval_set;
    let labels: Vec<u8> = eval.iter().map(|s| s.label).collect();

    let mut fold_rng = Rng::stream(cfg.hyper.seed, fold as u64);
    let cnn_seed = fold_rng.next_u64();
    let ecnn_seed = fold_rng.next_u64();
    let factor_seed = fold_rng.next_u64();

    let train_network = |enhanced: bool, seed: u64| -> Result<Model<f32>> {
        let examples = training_examples(&train_view, enhanced, factor_seed)?;
        let hyper = TrainHyper { seed, ..cfg.hyper };
        info!(
            "fold {fold} ({pump_id}): training {} on {} samples",
            cfg.network(enhanced).label(),
            examples.len()
        );
        train(&examples, cfg.network(enhanced), &hyper)
    };
    let cnn = if variants.iter().any(|v| v.algorithm == Algorithm::Cnn) {
        Some(train_network(false, cnn_seed)?)
    } else {
        None
    };
    let ecnn = if variants.iter().any(|v| v.algorithm.uses_ecnn()) {
        Some(train_network(true, ecnn_seed)?)
    } else {
        None
    };

    let needs_fixed = |a: Algorithm| variants.contains(&Variant { algorithm: a, policy: PolicyKind::Fixed });
    let refs = if needs_fixed(Algorithm::Threshold) || needs_fixed(Algorithm::Ecnn) {
        reference_pumps(&train_view, cfg.adapt_fraction)
    } else {
        Vec::new()
    };
    let fixed_threshold = if needs_fixed(Algorithm::Threshold) {
        Some(fixed_threshold(&refs)?)
    } else {
        None
    };
    let fixed_factor = match (&ecnn, needs_fixed(Algorithm::Ecnn)) {
        (Some(model), true) => Some(fixed_factor(model, &refs, &cfg.factor_grid, cfg.fixed_samples_per_pump)?),
        _ => None,
    };

    let mean = compute_normal_mean(adapt.iter().copied())?;
    let eps: Vec<f64> = eval.iter().map(|s| threshold_epsilon(s, &mean)).collect();
    let threshold_labels = |t: f64| -> Vec<u8> { eps.iter().map(|&e| threshold_predict(e, t)).collect() };

    let mut outcomes = Vec::with_capacity(variants.len());
    for &variant in variants {
        let policy = cfg.policy(variant.policy);
        let ecnn_model = || ecnn.as_ref().expect("ecnn trained for ecnn variants");
        let outcome = match (variant.algorithm, variant.policy) {
            (Algorithm::Cnn, _) => {
                let model = cnn.as_ref().expect("cnn trained for cnn variants");
                let predictions = eval
                    .iter()
                    .map(|s| cnn_predict(model, s).map(|(_, l)| l))
                    .collect::<Result<_>>()?;
                PumpOutcome { predictions, selection: None }
            }
            (Algorithm::Threshold, PolicyKind::Optimal) => PumpOutcome {
                predictions: threshold_labels(select_threshold_optimal(&eps, &labels)?),
                selection: None,
            },
            (Algorithm::Threshold, PolicyKind::Fixed) => PumpOutcome {
                predictions: threshold_labels(fixed_threshold.expect("computed above")),
                selection: None,
            },
            (Algorithm::Threshold, PolicyKind::Fpr) => {
                let profile = build_threshold_profile(pump_id, adapt, &policy)?;
                let predictions = eval
                    .iter()
                    .map(|s| profile.predict_threshold(s))
                    .collect::<Result<_>>()?;
                PumpOutcome {
                    predictions,
                    selection: Some(SelectionAudit { variant, profile, succeeded: true }),
                }
            }
            (Algorithm::Ecnn, PolicyKind::Optimal) => {
                let model = ecnn_model();
                let (f, _) = select_param_optimal(&cfg.factor_grid, &labels, |f| {
                    ecnn_labels(model, eval, &mean, f)
                })?;
                PumpOutcome {
                    predictions: ecnn_labels(model, eval, &mean, f)?,
                    selection: None,
                }
            }
            (Algorithm::Ecnn, PolicyKind::Fixed) => PumpOutcome {
                predictions: ecnn_labels(ecnn_model(), eval, &mean, fixed_factor.expect("computed above"))?,
                selection: None,
            },
            (Algorithm::Ecnn, PolicyKind::Fpr) => {
                let model = ecnn_model();
                let (profile, succeeded) = match build_ecnn_profile(model, pump_id, adapt, &policy)? {
                    Some(p) => (p, true),
                    None => {
                        let smallest = *cfg.factor_grid.last().expect("validated grid");
                        warn!("fold {fold} ({pump_id}): no factor reaches the target FPR; using {smallest}");
                        let mut p = PumpProfile::new(pump_id, mean, policy.clone());
                        p.factor = Some(smallest);
                        p.chosen_detector = Some(DetectorKind::Ecnn);
                        (p, false)
                    }
                };
                let predictions = eval
                    .iter()
                    .map(|s| profile.predict_ecnn(model, s))
                    .collect::<Result<_>>()?;
                PumpOutcome {
                    predictions,
                    selection: Some(SelectionAudit { variant, profile, succeeded }),
                }
            }
            (Algorithm::Combined, _) => {
                let model = ecnn_model();
                let profile = build_combined(model, pump_id, adapt, &policy)?;
                let predictions = eval
                    .iter()
                    .map(|s| profile.predict(model, s))
                    .collect::<Result<_>>()?;
                PumpOutcome {
                    predictions,
                    selection: Some(SelectionAudit { variant, profile, succeeded: true }),
                }
            }
        };
        outcomes.push(outcome);
    }

    let audit = FoldAudit {
        pump_id: pump_id.to_string(),
        train_samples: train_view
            .ids()
            .map(|id| (id.pump_id.to_string(), id.index))
            .collect(),
        adapt_count: adapt.len(),
        eval_count: eval.len(),
        fixed_threshold,
        fixed_factor,
        selections: outcomes.iter().filter_map(|o| o.selection.clone()).collect(),
        cnn,
        ecnn,
    };
    Ok(Fold::Done(Box::new(FoldResult { audit, labels, outcomes })))
}

fn validate(variants: &[Variant], cfg: &CrossValConfig) -> Result<()> {
    if variants.is_empty() {
        return Err(Error::usage("no detector variants requested"));
    }
    for v in variants {
        Variant::new(v.algorithm, v.policy)?;
    }
    if !(cfg.adapt_fraction > 0.0 && cfg.adapt_fraction <= 1.0) {
        return Err(Error::usage(format!(
            "adapt fraction must lie in (0, 1], got {}",
            cfg.adapt_fraction
        )));
    }
    if cfg.jobs == 0 {
        return Err(Error::usage("jobs must be at least 1"));
    }
    cfg.policy(PolicyKind::Fpr).validate()?;
    cfg.hyper.validate()?;
    if variants.iter().any(|v| v.algorithm != Algorithm::Threshold) {
        cfg.network(false).validate()?;
    }
    Ok(())
}

fn aggregate(variant: Variant, mac_count: u64, config: Option<ModelConfig>, folds: &[&FoldResult], index: usize) -> Result<VariantResult> {
    let mut pumps = Vec::with_capacity(folds.len());
    let mut per_pump = Vec::with_capacity(folds.len());
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in folds {
        let preds = &fold.outcomes[index].predictions;
        let labels = &fold.labels;
        let acc = accuracy(preds, labels)?;
        correct += preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        total += labels.len();
        pumps.push(EvalRecord {
            scope: fold.audit.pump_id.clone(),
            algorithm: variant.algorithm,
            policy: variant.reported_policy(),
            config,
            mac_count,
            accuracy: acc,
            fpr: fpr(preds, labels).ok(),
            tpdr: detected(preds, labels).map(|d| if d { 1.0 } else { 0.0 }),
            sample_count: labels.len(),
        });
        per_pump.push((preds.as_slice(), labels.as_slice()));
    }
    if pumps.is_empty() {
        return Err(Error::usage("cross-validation evaluated no pumps"));
    }
    let n = pumps.len() as f64;
    let fprs: Vec<f64> = pumps.iter().filter_map(|r| r.fpr).collect();
    let aggregate = EvalRecord {
        scope: AGGREGATE_SCOPE.to_string(),
        algorithm: variant.algorithm,
        policy: variant.reported_policy(),
        config,
        mac_count,
        accuracy: pumps.iter().map(|r| r.accuracy).sum::<f64>() / n,
        fpr: (!fprs.is_empty()).then(|| fprs.iter().sum::<f64>() / fprs.len() as f64),
        tpdr: tpdr(&per_pump).ok(),
        sample_count: total,
    };
    Ok(VariantResult {
        variant,
        pumps,
        aggregate,
        weighted_accuracy: correct as f64 / total as f64,
    })
}

/// Runs every variant under leave-one-pump-out cross-validation.
///
/// Networks are trained once per fold and shared by all variants. A fold
/// whose pump has fewer than two normal samples is skipped and listed in the
/// report; any other failure aborts with the fold's pump id.
pub fn cross_validate(dataset: &PumpDataset, variants: &[Variant], cfg: &CrossValConfig) -> Result<CrossValReport> {
    validate(variants, cfg)?;
    let (filtered, excluded) = dataset.retain_both_labels();
    for id in &excluded {
        warn!("pump {id} lacks a normal or abnormal sample; excluded");
    }
    let mut pump_ids: Vec<&str> = filtered.pump_ids().collect();
    if let Some(n) = cfg.max_folds {
        pump_ids.truncate(n);
    }
    if pump_ids.is_empty() {
        return Err(Error::usage("no pump has both normal and abnormal samples"));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::usage(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let outcomes: Vec<Result<Fold>> = pool.install(|| {
        pump_ids
            .par_iter()
            .enumerate()
            .map(|(fold, id)| {
                run_fold(&filtered, fold, id, variants, cfg)
                    .map_err(|e| e.context(&format!("fold {fold} (pump {id})")))
            })
            .collect()
    });

    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Fold::Done(result) => done.push(result),
            Fold::Skipped(id, reason) => {
                warn!("pump {id} skipped: {reason}");
                skipped.push((id, reason));
            }
        }
    }
    let folds: Vec<&FoldResult> = done.iter().map(|b| b.as_ref()).collect();
    let results = variants
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let (config, macs) = match variant.algorithm {
                Algorithm::Threshold => (None, 0),
                a => {
                    let c = cfg.network(a.uses_ecnn());
                    (Some(c), count_macs(&c))
                }
            };
            aggregate(variant, macs, config, &folds, i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossValReport {
        results,
        folds: done.into_iter().map(|f| f.audit).collect(),
        skipped,
        excluded,
    })
}
