use super::stats::RATE_METRICS;
use super::trials::pipeline_trial;
use super::*;
use crate::interact::TapVariant;
use crate::localize::{render_svg, LocalizationResult};
use crate::rng::derive_seed;
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

const TRIAL_STREAM: u64 = 0x7472;

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub tables: Vec<SummaryTable>,
    pub records: Vec<TrialRecord>,
    /// `(file name, document)` pairs.
    pub svgs: Vec<(String, String)>,
    pub violations: Vec<String>,
    pub elapsed_s: f64,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&SummaryTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn comparison(&self) -> Option<Comparison> {
        (self.tables.len() > 1).then(|| compare_methods(&self.tables).ok()).flatten()
    }
}

/// Trial seeds depend only on the base seed and the trial index, so every
/// condition of an ablation sees the same scenes.
fn trial_seed(cfg: &ExperimentConfig, i: usize) -> u64 {
    derive_seed(cfg.seed, &[TRIAL_STREAM, i as u64])
}

fn par_trials<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize, u64) -> Result<T, HarnessError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    (0..cfg.n_trials).into_par_iter().map(|i| f(i, trial_seed(cfg, i))).collect()
}

fn svg_of(name: String, r: &LocalizationResult, side: f64) -> (String, String) {
    (name, render_svg(&r.grid, &r.estimate, &r.truth, side))
}

/// Runs the configured protocol. Invariant violations are reported in the
/// output rather than as errors so the caller can still write the files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let t = Instant::now();
    let pool = cfg.shape_pool()?;
    let params = cfg.scene_params();
    let mut tables = Vec::new();
    let mut records = Vec::new();
    let mut svgs = Vec::new();

    let identify_block = |model: &EncoderModel, p: &SceneParams, variant: TapVariant, cond: &str| {
        par_trials(cfg, |i, s| identify_trial(cfg, &pool, p, model, variant, cond, i, s))
    };

    match cfg.experiment {
        ExperimentKind::Localize => {
            let cond = format!("k={}", cfg.k);
            let out = par_trials(cfg, |i, s| localize_trial(cfg, &pool, &params, &cond, i, s))?;
            for (i, (_, _, r)) in out.iter().take(cfg.svg_samples).enumerate() {
                svgs.push(svg_of(format!("localize_trial{i}.svg"), r, params.bin_side));
            }
            let (cl, pf): (Vec<_>, Vec<_>) = out.into_iter().map(|(a, b, _)| (a, b)).unzip();
            tables.push(summarize(format!("cluster {cond}"), &cl));
            tables.push(summarize(format!("pf {cond}"), &pf));
            records.extend(cl);
            records.extend(pf);
        }
        ExperimentKind::Identify => {
            let model = cfg.load_model("identify")?;
            let cond = format!("panel={}", cfg.panel);
            let rs = identify_block(&model, &params, TapVariant::Full, &cond)?;
            tables.push(summarize(format!("identify {cond}"), &rs));
            records.extend(rs);
        }
        ExperimentKind::Pipeline => {
            let model = cfg.load_model("pipeline")?;
            let cond = format!("k={}", cfg.k);
            let out = par_trials(cfg, |i, s| pipeline_trial(cfg, &pool, &params, &model, &cond, i, s))?;
            for (i, (_, r)) in out.iter().take(cfg.svg_samples).enumerate() {
                svgs.push(svg_of(format!("pipeline_trial{i}.svg"), r, params.bin_side));
            }
            let rs: Vec<TrialRecord> = out.into_iter().map(|(r, _)| r).collect();
            tables.push(summarize(format!("pipeline {cond}"), &rs));
            records.extend(rs);
        }
        ExperimentKind::AblateFriction => {
            let model = cfg.load_model("friction")?;
            for &mu in &cfg.frictions {
                let p = SceneParams { friction: mu, ..params };
                let cond = format!("mu={mu}");
                let loc = par_trials(cfg, |i, s| localize_trial(cfg, &pool, &p, &cond, i, s).map(|(a, _, _)| a))?;
                let ids = identify_block(&model, &p, TapVariant::Full, &cond)?;
                let mut all = loc;
                all.extend(ids);
                tables.push(summarize(cond, &all));
                records.extend(all);
            }
        }
        ExperimentKind::AblateStatic => {
            let model = cfg.load_model("static")?;
            for (name, st) in [("moving", false), ("static", true)] {
                let p = SceneParams { static_mode: st, ..params };
                let rs = identify_block(&model, &p, TapVariant::Full, name)?;
                tables.push(summarize(name, &rs));
                records.extend(rs);
            }
        }
        ExperimentKind::AblateInteraction => {
            for v in TapVariant::ALL {
                let model = cfg.load_model(v.name())?;
                let rs = identify_block(&model, &params, v, v.name())?;
                tables.push(summarize(v.name(), &rs));
                records.extend(rs);
            }
        }
        ExperimentKind::AblateArch => {
            for (label, path) in &cfg.models {
                let model = EncoderModel::load(path)?;
                let mut rs = identify_block(&model, &params, TapVariant::Full, label)?;
                for r in &mut rs {
                    r.method.clone_from(label);
                }
                tables.push(summarize(label.clone(), &rs));
                records.extend(rs);
            }
        }
    }
    let violations = check_invariants(&records, &tables);
    Ok(ExperimentOutput {
        config: cfg.clone(),
        tables,
        records,
        svgs,
        violations,
        elapsed_s: t.elapsed().as_secs_f64(),
    })
}

/// Harness invariants: rates in [0, 1], finite standard errors, stage-gated
/// pipeline success, and pipeline success bounded by every stage rate (+3 s.e.)
/// once a table holds at least 200 trials.
pub fn check_invariants(records: &[TrialRecord], tables: &[SummaryTable]) -> Vec<String> {
    let mut v = Vec::new();
    for r in records {
        if r.success == Some(true)
            && !(r.loc_success == Some(true) && r.id_correct == Some(true) && r.grasp_success == Some(true))
        {
            v.push(format!("{} trial {}: success without every stage succeeding", r.condition, r.trial));
        }
    }
    for t in tables {
        for (k, s) in &t.metrics {
            if RATE_METRICS.contains(&k.as_str()) && !(0.0..=1.0).contains(&s.mean) {
                v.push(format!("{}: {k} = {} outside [0, 1]", t.name, s.mean));
            }
            if s.n >= 2 && !s.se.is_some_and(f64::is_finite) {
                v.push(format!("{}: {k} has no finite standard error", t.name));
            }
        }
        if let Some(p) = t.metrics.get("pipeline_success").filter(|p| p.n >= 200) {
            for stage in ["loc_success", "id_accuracy", "grasp_success"] {
                if let Some(s) = t.metrics.get(stage) {
                    if p.mean > s.mean + 3.0 * s.se.unwrap_or(0.0) {
                        v.push(format!("{}: pipeline success {:.3} above {stage} {:.3}", t.name, p.mean, s.mean));
                    }
                }
            }
        }
    }
    v
}

pub fn records_csv(records: &[TrialRecord]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes `trials.csv`, `summary.json`, `summary.txt`, the comparison files
/// when there is more than one table, and every SVG.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trials.csv"), records_csv(&out.records)?)?;
    let cmp = out.comparison();
    let summary = serde_json::json!({
        "experiment": out.config.experiment,
        "config": out.config,
        "tables": out.tables,
        "comparison": cmp,
        "violations": out.violations,
        "elapsed_s": out.elapsed_s,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let mut text: String = out.tables.iter().map(SummaryTable::to_text).collect::<Vec<_>>().join("\n");
    if let Some(c) = &cmp {
        text.push('\n');
        text.push_str(&c.to_text());
        std::fs::write(dir.join("comparison.csv"), c.to_csv()?)?;
    }
    std::fs::write(dir.join("summary.txt"), text)?;
    for (name, svg) in &out.svgs {
        std::fs::write(dir.join(name), svg)?;
    }
    for (name, svg) in summary_charts(&out.tables) {
        std::fs::write(dir.join(name), svg)?;
    }
    Ok(())
}

/// One bar chart per rate metric, with a bar per table reporting it.
pub fn summary_charts(tables: &[SummaryTable]) -> Vec<(String, String)> {
    RATE_METRICS
        .iter()
        .filter_map(|m| {
            let bars: Vec<Bar> = tables
                .iter()
                .filter_map(|t| {
                    t.metrics.get(*m).map(|s| Bar {
                        label: t.name.clone(),
                        value: s.mean,
                        err: s.se,
                    })
                })
                .collect();
            (!bars.is_empty()).then(|| (format!("{m}.svg"), bar_chart(m, &bars, Some(1.0))))
        })
        .collect()
}
