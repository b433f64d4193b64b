//! k-fold protocol: pretext training per fold, probe retraining per
//! snapshot, log and manifest output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::generate_dataset;
use super::spec::ProtocolRunSpec;
use super::train::{derive_seed, train_pretext, train_target_on_snapshot, JobTag};
use super::LabError;
use crate::analyze::{analyze, AnalyzeConfig};
use crate::curves::ConvergencePolicy;
use crate::io::report::{ToolInfo, SCHEMA_VERSION};
use crate::io::{write_log, LogRecord};
use crate::metrics::MismatchValue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSeeds {
    pub fold: u32,
    pub pretext: u64,
    pub target: u64,
}

/// Provenance of a lab run: seeds, the full spec and the emitted files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub seed: u64,
    pub dataset_seed: u64,
    pub split_seed: u64,
    pub fold_seeds: Vec<FoldSeeds>,
    pub logs: Vec<String>,
    pub spec: ProtocolRunSpec,
}

#[derive(Debug, Clone)]
pub struct LabOutput {
    /// Records per fold, in fold order.
    pub folds: Vec<Vec<LogRecord>>,
    pub manifest: Manifest,
    /// Absolute or caller-relative paths of the written logs.
    pub log_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
}

impl LabOutput {
    pub fn records(&self) -> Vec<LogRecord> {
        self.folds.concat()
    }
}

/// Analysis settings declared in a run spec.
pub fn analysis_config(spec: &ProtocolRunSpec) -> Result<AnalyzeConfig, crate::curves::CurveError> {
    Ok(AnalyzeConfig {
        policy: ConvergencePolicy::new(spec.analysis.min_delta, spec.analysis.patience)?,
        complement_base: spec.analysis.complement_base,
        target_metric: Some(spec.analysis.target_metric.clone()),
        pretext_metric: spec.analysis.pretext_metric.clone(),
        run_id: Some(spec.name.clone()),
        ..AnalyzeConfig::default()
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, LabError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every fold and returns the records without touching the disk.
///
/// Output is identical for every `workers` value: each job draws from its
/// own derived seed and results are merged in (fold, snapshot) order.
pub fn simulate(spec: &ProtocolRunSpec, workers: usize) -> Result<(Vec<Vec<LogRecord>>, Manifest), LabError> {
    spec.validate()?;
    let dataset_seed = derive_seed(spec.seed, &[0]);
    let split_seed = derive_seed(spec.seed, &[1]);
    let data = generate_dataset(dataset_seed, spec.dataset.samples, spec.dataset.noise)?;
    let k = spec.folds;
    let fold_seeds: Vec<FoldSeeds> = (0..k as u32)
        .map(|fold| FoldSeeds {
            fold,
            pretext: derive_seed(spec.seed, &[10, fold as u64]),
            target: derive_seed(spec.seed, &[20, fold as u64]),
        })
        .collect();
    let splits: Vec<_> = (0..k).map(|f| data.fold_split(k, f, split_seed)).collect();
    let tag = |fold: u32, seed: u64| JobTag {
        run_id: &spec.name,
        fold,
        seed,
    };

    let folds = pool(workers)?.install(|| -> Result<Vec<Vec<LogRecord>>, LabError> {
        let pretexts = fold_seeds
            .par_iter()
            .map(|s| train_pretext(&spec.pretext, &data, &splits[s.fold as usize], tag(s.fold, s.pretext)))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs: Vec<(usize, usize)> = pretexts
            .iter()
            .enumerate()
            .flat_map(|(f, p)| (0..p.snapshots.len()).map(move |i| (f, i)))
            .collect();
        let targets = jobs
            .par_iter()
            .map(|&(f, i)| {
                let (step, encoder) = &pretexts[f].snapshots[i];
                let s = &fold_seeds[f];
                train_target_on_snapshot(encoder, *step, &spec.target, &data, &splits[f], tag(s.fold, s.target))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut folds: Vec<Vec<LogRecord>> = pretexts.into_iter().map(|p| p.records).collect();
        for (&(f, _), records) in jobs.iter().zip(targets) {
            folds[f].extend(records);
        }
        Ok(folds)
    })?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::default(),
        seed: spec.seed,
        dataset_seed,
        split_seed,
        fold_seeds,
        logs: (0..k).map(log_name).collect(),
        spec: spec.clone(),
    };
    Ok((folds, manifest))
}

fn log_name(fold: usize) -> String {
    format!("logs/fold-{fold}.jsonl")
}

/// Runs the protocol and writes `logs/fold-{k}.jsonl` and `manifest.json`
/// under `out_dir`.
pub fn run_protocol(spec: &ProtocolRunSpec, out_dir: &Path, workers: usize) -> Result<LabOutput, LabError> {
    let (folds, manifest) = simulate(spec, workers)?;
    let logs_dir = out_dir.join("logs");
    fs::create_dir_all(&logs_dir).map_err(|e| LabError::io(&logs_dir, e))?;
    let mut log_paths = Vec::with_capacity(folds.len());
    for (name, records) in manifest.logs.iter().zip(&folds) {
        let path = out_dir.join(name);
        fs::write(&path, write_log(records)).map_err(|e| LabError::io(&path, e))?;
        log_paths.push(path);
    }
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifests always serialize") + "\n";
    fs::write(&manifest_path, text).map_err(|e| LabError::io(&manifest_path, e))?;
    Ok(LabOutput {
        folds,
        manifest,
        log_paths,
        manifest_path,
    })
}

/// One line of the representation-size comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub representation_size: usize,
    pub mofm: MismatchValue,
    pub mofm_plus: MismatchValue,
    pub mofm_minus: MismatchValue,
    pub mofm_max: MismatchValue,
    pub cofm: MismatchValue,
}

pub const SWEEP_TABLE: &str = "sweep.tsv";

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("representation_size\tmofm\tmofm_plus\tmofm_minus\tmofm_max\tcofm\n");
    for r in rows {
        let cells = [r.mofm, r.mofm_plus, r.mofm_minus, r.mofm_max, r.cofm].map(|v| match v {
            MismatchValue::Finite(x) => crate::fmt::cell(x),
            MismatchValue::Infinite => "inf".to_owned(),
        });
        out.push_str(&format!("{}\t{}\n", r.representation_size, cells.join("\t")));
    }
    out
}

/// Runs the protocol once per `[sweep] representation_sizes` entry, each
/// under `out_dir/size-{n}` with its own `report.json`, then writes
/// `sweep.tsv` comparing MOFM across sizes.
pub fn run_sweep(spec: &ProtocolRunSpec, out_dir: &Path, workers: usize) -> Result<Vec<SweepRow>, LabError> {
    let sizes = spec
        .sweep
        .as_ref()
        .ok_or_else(|| LabError::Config("spec has no [sweep] section".into()))?
        .representation_sizes
        .clone();
    let config = analysis_config(spec).map_err(|e| LabError::Config(e.to_string()))?;
    let mut rows = Vec::with_capacity(sizes.len());
    for size in sizes {
        let mut one = spec.clone();
        one.sweep = None;
        one.pretext.representation_size = size;
        let dir = out_dir.join(format!("size-{size}"));
        let output = run_protocol(&one, &dir, workers)?;
        let inputs = output.manifest.logs.clone();
        let analysis = analyze(&output.records(), &config, inputs)
            .map_err(|e| LabError::Config(format!("representation size {size}: {e}")))?;
        let report_path = dir.join("report.json");
        fs::write(&report_path, analysis.report.to_json()).map_err(|e| LabError::io(&report_path, e))?;
        let s = &analysis.report.scalars;
        let range = analysis.report.ranges.as_ref().map(|r| r.mofm);
        rows.push(SweepRow {
            representation_size: size,
            mofm: s.mofm,
            mofm_plus: range.map_or(MismatchValue::ZERO, |r| r.plus),
            mofm_minus: range.map_or(MismatchValue::ZERO, |r| r.minus),
            mofm_max: s.mofm_max,
            cofm: s.cofm,
        });
    }
    let path = out_dir.join(SWEEP_TABLE);
    fs::write(&path, sweep_table(&rows)).map_err(|e| LabError::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        name = "small"
        seed = 3
        folds = 2
        [dataset]
        samples = 144
        [pretext]
        task = "autoencode"
        representation_size = 4
        hidden_size = 16
        epochs = 4
        snapshot_steps = [0, 2, 4]
        [target]
        factor = "shape"
        epochs = 20
    "#;

    fn small() -> ProtocolRunSpec {
        ProtocolRunSpec::from_toml(SMALL).unwrap()
    }

    #[test]
    fn counts_curves_and_target_runs() {
        let (folds, manifest) = simulate(&small(), 2).unwrap();
        assert_eq!(folds.len(), 2);
        for records in &folds {
            let pretext = records
                .iter()
                .filter(|r| r.series == crate::io::SeriesKind::PretextEval)
                .count();
            assert_eq!(pretext, 5);
            let snapshots: std::collections::BTreeSet<_> = records.iter().filter_map(|r| r.snapshot_step).collect();
            assert_eq!(snapshots.into_iter().collect::<Vec<_>>(), vec![0, 2, 4]);
        }
        assert_eq!(manifest.logs, vec!["logs/fold-0.jsonl", "logs/fold-1.jsonl"]);
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let (a, _) = simulate(&small(), 1).unwrap();
        let (b, _) = simulate(&small(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn writes_logs_that_analyze() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let out = run_protocol(&spec, dir.path(), 2).unwrap();
        assert!(out.manifest_path.exists());
        let text = fs::read(&out.log_paths[1]).unwrap();
        let parsed = crate::io::parse_log(&text).unwrap();
        assert_eq!(parsed, out.folds[1]);
        let analysis = analyze(&out.records(), &analysis_config(&spec).unwrap(), vec![]).unwrap();
        assert_eq!(analysis.report.folds.len(), 2);
    }

    #[test]
    fn sweep_table_lists_every_size() {
        let mut spec = small();
        spec.sweep = Some(super::super::spec::SweepSpec {
            representation_sizes: vec![2, 4],
        });
        let dir = tempfile::tempdir().unwrap();
        let rows = run_sweep(&spec, dir.path(), 2).unwrap();
        assert_eq!(rows.len(), 2);
        let table = fs::read_to_string(dir.path().join(SWEEP_TABLE)).unwrap();
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().nth(2).unwrap().starts_with("4\t"));
        assert!(dir.path().join("size-2/report.json").exists());
    }
}
