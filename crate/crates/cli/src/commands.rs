use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trade_reid::evaluator::{write_curve_csv, CurveSummary, EvalCurve, RunSummary};
use trade_reid::synthworld::{generate, WorldConfig};
use trade_reid::{run, Dataset, GalleryMode, PipelineConfig, RunResult};

use crate::args::{Command, CompareArgs};
use crate::UsageError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const WORLD_FILE: &str = "world.json";

/// A fully resolved command, as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Gen {
        world: WorldConfig,
    },
    Run {
        data: PathBuf,
        config: PipelineConfig,
    },
    Eval {
        run_dir: PathBuf,
        data: PathBuf,
    },
    SweepN {
        data: PathBuf,
        config: PipelineConfig,
        ns: Vec<usize>,
    },
    Compare {
        data: PathBuf,
        config: PipelineConfig,
        modes: Vec<GalleryMode>,
    },
    CompareRuns {
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub invocation: Invocation,
    /// SHA-256 of each file read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 over the dataset files, when a dataset was read.
    pub dataset_fingerprint: Option<String>,
    /// SHA-256 of each file written, by name.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| trade_reid::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(trade_reid::Error::from)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(UsageError(format!(
                "manifest format {} is not supported (expected {FORMAT_VERSION})",
                m.format_version
            ))
            .into());
        }
        Ok(m)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    Ok(fs::read(path).map_err(|e| trade_reid::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?)
}

/// Hash of every dataset file, keyed by path, plus a fingerprint over
/// their names and contents.
pub fn fingerprint_dataset(dir: &Path) -> anyhow::Result<(BTreeMap<String, String>, String)> {
    let mut inputs = BTreeMap::new();
    let mut all = Sha256::new();
    for path in Dataset::files(dir) {
        let digest = sha256_hex(&read_file(&path)?);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        all.update(name.as_bytes());
        all.update(b"\0");
        all.update(digest.as_bytes());
        all.update(b"\n");
        inputs.insert(path.display().to_string(), digest);
    }
    if inputs.is_empty() {
        return Err(UsageError(format!("{} holds no dataset files", dir.display())).into());
    }
    Ok((inputs, hex::encode(all.finalize())))
}

/// Output directory whose files are written atomically and hashed.
struct Outputs {
    dir: PathBuf,
    written: Mutex<BTreeMap<String, String>>,
}

impl Outputs {
    fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).map_err(|e| trade_reid::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Mutex::new(BTreeMap::new()),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written
            .lock()
            .expect("output registry poisoned")
            .insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish(
        self,
        invocation: Invocation,
        inputs: BTreeMap<String, String>,
        fingerprint: Option<String>,
    ) -> anyhow::Result<Manifest> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            inputs,
            dataset_fingerprint: fingerprint,
            outputs: self.written.into_inner().expect("output registry poisoned"),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST_FILE), &bytes)?;
        Ok(manifest)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn json_pretty<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn curve_bytes(curve: &EvalCurve) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    write_curve_csv(&mut out, curve)?;
    Ok(out)
}

/// Turns parsed arguments into a resolved invocation.
pub fn resolve(command: &Command) -> anyhow::Result<(Invocation, PathBuf)> {
    Ok(match command {
        Command::Gen(a) => (
            Invocation::Gen {
                world: a.world_config()?,
            },
            a.out_dir.clone(),
        ),
        Command::Run(a) => (
            Invocation::Run {
                data: a.data.clone(),
                config: a.pipeline.config(a.mode)?,
            },
            a.out_dir.clone(),
        ),
        Command::Eval(a) => {
            let data = match &a.data {
                Some(d) => d.clone(),
                None => match Manifest::load(&a.run_dir.join(MANIFEST_FILE))?.invocation {
                    Invocation::Run { data, .. } => data,
                    _ => {
                        return Err(UsageError(format!(
                            "{} is not a run directory",
                            a.run_dir.display()
                        ))
                        .into())
                    }
                },
            };
            (
                Invocation::Eval {
                    run_dir: a.run_dir.clone(),
                    data,
                },
                a.out_dir.clone(),
            )
        }
        Command::SweepN(a) => {
            if a.ns.is_empty() || a.ns.contains(&0) {
                return Err(UsageError("--ns needs positive tracklet lengths".into()).into());
            }
            (
                Invocation::SweepN {
                    data: a.data.clone(),
                    config: a.pipeline.config(a.mode)?,
                    ns: a.ns.clone(),
                },
                a.out_dir.clone(),
            )
        }
        Command::Compare(a) => (resolve_compare(a)?, a.out_dir.clone()),
        Command::Rerun(_) => unreachable!("rerun is resolved from its manifest"),
    })
}

fn resolve_compare(a: &CompareArgs) -> anyhow::Result<Invocation> {
    match &a.data {
        Some(data) => {
            if a.modes.is_empty() {
                return Err(UsageError("--modes is required with --data".into()).into());
            }
            Ok(Invocation::Compare {
                data: data.clone(),
                config: a.pipeline.config(GalleryMode::Trade)?,
                modes: a.modes.clone(),
            })
        }
        None => Ok(Invocation::CompareRuns {
            runs: a.runs.clone(),
        }),
    }
}

/// Executes an invocation, writing every output and the manifest into
/// `out_dir`. Returns the text report.
pub fn execute(invocation: &Invocation, out_dir: &Path) -> anyhow::Result<(Manifest, String)> {
    let out = Outputs::create(out_dir)?;
    match invocation {
        Invocation::Gen { world } => {
            let w = generate(world)?;
            for (name, bytes) in w.to_files()? {
                out.write(name, &bytes)?;
            }
            out.write(WORLD_FILE, &json_pretty(world)?)?;
            let report = format!(
                "generated {} videos, {} detections, {} annotations, {} queries\n",
                world.video_ids().len(),
                w.detections.len(),
                w.ground_truth.len(),
                w.queries.len()
            );
            Ok((
                out.finish(invocation.clone(), BTreeMap::new(), None)?,
                report,
            ))
        }
        Invocation::Run { data, config } => {
            let (inputs, fp) = fingerprint_dataset(data)?;
            let ds = Dataset::load_dir(data)?;
            let result = run(config, &ds)?;
            let (curve, summary) = result.evaluate(&ds.ground_truth, &ds.queries)?;
            out.write(RUN_FILE, &serde_json::to_vec(&result)?)?;
            out.write(SUMMARY_FILE, &json_pretty(&summary)?)?;
            out.write(CURVE_FILE, &curve_bytes(&curve)?)?;
            let report = summary_table(&[(row_label(config), summary)]);
            Ok((out.finish(invocation.clone(), inputs, Some(fp))?, report))
        }
        Invocation::Eval { run_dir, data } => {
            let (mut inputs, fp) = fingerprint_dataset(data)?;
            if let Ok(m) = Manifest::load(&run_dir.join(MANIFEST_FILE)) {
                if m.dataset_fingerprint.as_deref().is_some_and(|f| f != fp) {
                    return Err(UsageError(format!(
                        "{} was run on a different dataset than {}",
                        run_dir.display(),
                        data.display()
                    ))
                    .into());
                }
            }
            let run_path = run_dir.join(RUN_FILE);
            let bytes = read_file(&run_path)?;
            inputs.insert(run_path.display().to_string(), sha256_hex(&bytes));
            let result: RunResult = serde_json::from_slice(&bytes)
                .map_err(trade_reid::Error::from)
                .with_context(|| format!("reading {}", run_path.display()))?;
            let ds = Dataset::load_dir(data)?;
            let (curve, summary) = result.evaluate(&ds.ground_truth, &ds.queries)?;
            out.write(SUMMARY_FILE, &json_pretty(&summary)?)?;
            out.write(CURVE_FILE, &curve_bytes(&curve)?)?;
            let report = summary_table(&[(row_label(&result.config), summary)]);
            Ok((out.finish(invocation.clone(), inputs, Some(fp))?, report))
        }
        Invocation::SweepN { data, config, ns } => {
            let (inputs, fp) = fingerprint_dataset(data)?;
            let ds = Dataset::load_dir(data)?;
            let rows = ns
                .par_iter()
                .map(|&n| {
                    let cfg = PipelineConfig {
                        max_len: n,
                        ..config.clone()
                    };
                    let row = (|| {
                        let result = run(&cfg, &ds)?;
                        let (curve, summary) = result.evaluate(&ds.ground_truth, &ds.queries)?;
                        out.write(&format!("curve_n{n}.csv"), &curve_bytes(&curve)?)?;
                        out.write(&format!("summary_n{n}.json"), &json_pretty(&summary)?)?;
                        anyhow::Ok(summary)
                    })();
                    row.with_context(|| format!("sweep failed at N={n}"))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let mut csv = String::from("N,FR,TVR,F1*,mAP,similarity_ops,gallery_images\n");
            for (n, s) in ns.iter().zip(&rows) {
                let p = s.pooled;
                writeln!(
                    csv,
                    "{n},{},{},{},{},{},{}",
                    num(p.map(|p| p.fr_at_star)),
                    num(p.map(|p| p.tvr_at_star)),
                    num(p.map(|p| p.f1_star)),
                    num(p.map(|p| p.map)),
                    s.similarity_ops,
                    s.gallery_sizes.iter().sum::<usize>()
                )?;
            }
            out.write(SWEEP_FILE, csv.as_bytes())?;
            let labelled: Vec<_> = ns.iter().map(|n| format!("N={n}")).zip(rows).collect();
            Ok((
                out.finish(invocation.clone(), inputs, Some(fp))?,
                summary_table(&labelled),
            ))
        }
        Invocation::Compare {
            data,
            config,
            modes,
        } => {
            let (inputs, fp) = fingerprint_dataset(data)?;
            let ds = Dataset::load_dir(data)?;
            let rows = modes
                .par_iter()
                .map(|&mode| {
                    let cfg = PipelineConfig {
                        mode,
                        ..config.clone()
                    };
                    let row = (|| {
                        let result = run(&cfg, &ds)?;
                        let (curve, summary) = result.evaluate(&ds.ground_truth, &ds.queries)?;
                        out.write(&format!("curve_{mode}.csv"), &curve_bytes(&curve)?)?;
                        out.write(&format!("summary_{mode}.json"), &json_pretty(&summary)?)?;
                        anyhow::Ok((row_label(&cfg), summary))
                    })();
                    row.with_context(|| format!("compare failed for mode {mode}"))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            out.write(COMPARE_FILE, compare_csv(&rows)?.as_bytes())?;
            Ok((
                out.finish(invocation.clone(), inputs, Some(fp))?,
                summary_table(&rows),
            ))
        }
        Invocation::CompareRuns { runs } => {
            if runs.is_empty() {
                return Err(UsageError("--runs needs at least one run directory".into()).into());
            }
            let mut manifests = Vec::new();
            for dir in runs {
                let m = Manifest::load(&dir.join(MANIFEST_FILE))?;
                let Invocation::Run { data, .. } = &m.invocation else {
                    return Err(
                        UsageError(format!("{} is not a run directory", dir.display())).into(),
                    );
                };
                let data = data.clone();
                manifests.push((dir, m, data));
            }
            let first_fp = manifests[0].1.dataset_fingerprint.clone();
            if let Some((dir, _, _)) = manifests
                .iter()
                .find(|(_, m, _)| m.dataset_fingerprint != first_fp)
            {
                return Err(UsageError(format!(
                    "{} was run on a different world than {}",
                    dir.display(),
                    runs[0].display()
                ))
                .into());
            }
            let data = &manifests[0].2;
            let (mut inputs, fp) = fingerprint_dataset(data)?;
            if Some(&fp) != first_fp.as_ref() {
                return Err(UsageError(format!(
                    "{} changed since the runs were made",
                    data.display()
                ))
                .into());
            }
            let ds = Dataset::load_dir(data)?;
            let mut rows = Vec::new();
            for (dir, _, _) in &manifests {
                let path = dir.join(RUN_FILE);
                let bytes = read_file(&path)?;
                inputs.insert(path.display().to_string(), sha256_hex(&bytes));
                let result: RunResult = serde_json::from_slice(&bytes)
                    .map_err(trade_reid::Error::from)
                    .with_context(|| format!("reading {}", path.display()))?;
                let (_, summary) = result.evaluate(&ds.ground_truth, &ds.queries)?;
                rows.push((row_label(&result.config), summary));
            }
            out.write(COMPARE_FILE, compare_csv(&rows)?.as_bytes())?;
            Ok((
                out.finish(invocation.clone(), inputs, Some(fp))?,
                summary_table(&rows),
            ))
        }
    }
}

/// Re-executes the manifest's command into `out_dir` and checks that every
/// recorded output was reproduced.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> anyhow::Result<(Manifest, String)> {
    let recorded = Manifest::load(manifest_path)?;
    let data = match &recorded.invocation {
        Invocation::Run { data, .. }
        | Invocation::Eval { data, .. }
        | Invocation::SweepN { data, .. }
        | Invocation::Compare { data, .. } => Some(data),
        Invocation::Gen { .. } | Invocation::CompareRuns { .. } => None,
    };
    if let (Some(data), Some(expected)) = (data, &recorded.dataset_fingerprint) {
        let (_, fp) = fingerprint_dataset(data)?;
        if &fp != expected {
            return Err(UsageError(format!(
                "{} changed since the manifest was written",
                data.display()
            ))
            .into());
        }
    }
    let (fresh, report) = execute(&recorded.invocation, out_dir)?;
    let differing: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(name, hash)| fresh.outputs.get(*name) != Some(*hash))
        .map(|(name, _)| name)
        .collect();
    if !differing.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        bail!("rerun did not reproduce: {:?}", differing);
    }
    Ok((fresh, report))
}

fn row_label(config: &PipelineConfig) -> String {
    match config.mode {
        GalleryMode::Baseline => "Baseline".into(),
        GalleryMode::Skip => format!("Skip (N={})", config.max_len),
        GalleryMode::Trade => format!("TrADe (N={})", config.max_len),
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), |v| v.to_string())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn pooled<T>(s: &RunSummary, f: impl Fn(&CurveSummary) -> T) -> Option<T> {
    s.pooled.as_ref().map(f)
}

fn compare_csv(rows: &[(String, RunSummary)]) -> anyhow::Result<String> {
    let mut csv =
        String::from("approach,FR,TVR,F1*,mAP,beta*,mAP_per_query,gallery_images,similarity_ops\n");
    for (label, s) in rows {
        writeln!(
            csv,
            "{label},{},{},{},{},{},{},{},{}",
            num(pooled(s, |p| p.fr_at_star)),
            num(pooled(s, |p| p.tvr_at_star)),
            num(pooled(s, |p| p.f1_star)),
            num(pooled(s, |p| p.map)),
            num(pooled(s, |p| p.beta_star)),
            num(s.per_query.map),
            s.gallery_sizes.iter().sum::<usize>(),
            s.similarity_ops
        )?;
    }
    Ok(csv)
}

fn summary_table(rows: &[(String, RunSummary)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(8);
    let mut t = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>9}  {:>14}\n",
        "approach", "FR", "TVR", "F1*", "mAP", "gallery", "similarity_ops"
    );
    for (label, s) in rows {
        let _ = writeln!(
            t,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>9}  {:>14}",
            label,
            cell(pooled(s, |p| p.fr_at_star)),
            cell(pooled(s, |p| p.tvr_at_star)),
            cell(pooled(s, |p| p.f1_star)),
            cell(pooled(s, |p| p.map)),
            s.gallery_sizes.iter().sum::<usize>(),
            s.similarity_ops
        );
    }
    t
}
