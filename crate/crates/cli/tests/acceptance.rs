//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use trade_reid::evaluator::{evaluate_curve, f1_star, map_area, BetaGrid, EvalCurve};
use trade_reid::selector::ScorerKind;
use trade_reid::synthworld::fixtures::metric_fixture;
use trade_reid::synthworld::oracle::oracle_metrics;
use trade_reid::synthworld::{generate, WorldConfig};
use trade_reid::{run, Dataset, Detection, GalleryMode, PipelineConfig, RunResult};
use trade_reid_cli::commands::{execute, rerun, Invocation, MANIFEST_FILE};

/// Every curve produced by the suite, for the monotonicity criterion.
static CURVES: Mutex<Vec<(String, EvalCurve)>> = Mutex::new(Vec::new());

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn run_and_record(label: &str, cfg: &PipelineConfig, ds: &Dataset) -> Result<RunResult, String> {
    let r = run(cfg, ds).map_err(|e| format!("{label}: {e}"))?;
    let curve = r
        .curve(&ds.ground_truth, &ds.queries)
        .map_err(|e| format!("{label}: {e}"))?;
    CURVES.lock().unwrap().push((label.to_string(), curve));
    Ok(r)
}

fn pooled_map(r: &RunResult, ds: &Dataset) -> Result<f64, String> {
    let (_, s) = r
        .evaluate(&ds.ground_truth, &ds.queries)
        .map_err(|e| e.to_string())?;
    s.pooled
        .map(|p| p.map)
        .ok_or_else(|| "no defined curve point".into())
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn gallery_detections(r: &RunResult) -> Vec<Detection> {
    r.chunks
        .iter()
        .flat_map(|c| c.gallery.iter().map(|g| g.detection.clone()))
        .collect()
}

fn baseline_equivalence() -> Outcome {
    let start = Instant::now();
    for seed in 0..50 {
        let world = WorldConfig {
            seed,
            n_cameras: 1,
            n_videos_per_camera: 1,
            frames_per_video: 1500,
            entry_rate: 0.02,
            n_queries: 3,
            ..WorldConfig::default()
        };
        let ds = generate(&world)
            .and_then(|w| w.dataset())
            .map_err(|e| e.to_string())?;
        let trade = run_and_record(
            &format!("seed {seed} trade N=1"),
            &PipelineConfig {
                mode: GalleryMode::Trade,
                max_len: 1,
                ..Default::default()
            },
            &ds,
        )?;
        let base = run_and_record(
            &format!("seed {seed} baseline"),
            &PipelineConfig {
                mode: GalleryMode::Baseline,
                ..Default::default()
            },
            &ds,
        )?;
        let (a, b) = (gallery_detections(&trade), gallery_detections(&base));
        let bits = |d: &Detection| {
            (
                d.crop_ref.clone(),
                d.frame,
                d.bbox.x.to_bits(),
                d.bbox.y.to_bits(),
                d.bbox.w.to_bits(),
                d.bbox.h.to_bits(),
                d.confidence.to_bits(),
            )
        };
        if a.len() != b.len() || a.iter().map(bits).ne(b.iter().map(bits)) {
            return Err(format!(
                "seed {seed}: galleries differ ({} vs {})",
                a.len(),
                b.len()
            ));
        }
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("50 worlds identical, {:.1?}", start.elapsed()))
}

fn compression() -> Outcome {
    let start = Instant::now();
    let mut checked = Vec::new();
    for seed in 0..40 {
        let ds = generate(&WorldConfig::short_clip(seed))
            .and_then(|w| w.dataset())
            .map_err(|e| e.to_string())?;
        let base = run(
            &PipelineConfig {
                mode: GalleryMode::Baseline,
                ..Default::default()
            },
            &ds,
        )
        .map_err(|e| e.to_string())?;
        let n = base.gallery_total();
        if (n as f64 - 1945.0).abs() > 0.1 * 1945.0 {
            continue;
        }
        let trade = run_and_record(&format!("seed {seed}"), &PipelineConfig::default(), &ds)?;
        checked.push((seed, n, trade.gallery_total()));
    }
    if checked.is_empty() {
        return Err("no short-clip world within 10% of 1945 baseline detections".into());
    }
    if let Some(bad) = checked.iter().find(|c| !(80..=120).contains(&c.2)) {
        return Err(format!(
            "seed {}: {} baseline -> {} TrADe images",
            bad.0, bad.1, bad.2
        ));
    }
    within(Duration::from_secs(60), start)?;
    let desc: Vec<String> = checked
        .iter()
        .map(|c| format!("{}->{}", c.1, c.2))
        .collect();
    Ok(format!("{} worlds: {}", checked.len(), desc.join(", ")))
}

fn counting_law() -> Outcome {
    let mut cases = 0;
    for p in [1usize, 2, 3] {
        for f in [20u32, 99, 400, 1000] {
            let ds = generate(&WorldConfig::persistent(p, f, p as u64 * 1000 + f as u64))
                .and_then(|w| w.dataset())
                .map_err(|e| e.to_string())?;
            for n in [1usize, 5, 10, 20, 40, 80] {
                let cfg = PipelineConfig {
                    max_len: n,
                    tau: 1000,
                    ..Default::default()
                };
                let r = run(&cfg, &ds).map_err(|e| e.to_string())?;
                let count: usize = r.chunks.iter().map(|c| c.tracklets).sum();
                let expected = p * (f as usize).div_ceil(n);
                if count != expected {
                    return Err(format!(
                        "P={p} F={f} N={n}: {count} tracklets, expected {expected}"
                    ));
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (P, F, N) cases exact"))
}

fn metric_oracle() -> Outcome {
    const TOL: f64 = 1e-12;
    let grid = BetaGrid::default();
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= TOL,
        _ => false,
    };
    for seed in 0..100 {
        let fx = metric_fixture(seed).map_err(|e| e.to_string())?;
        if fx.chunks.len() > 5 || fx.queries.len() > 4 {
            return Err(format!("fixture {seed} too large"));
        }
        let curve = evaluate_curve(&fx.views(), &fx.ground_truth, &fx.queries, grid, fx.eta)
            .map_err(|e| e.to_string())?;
        let o = oracle_metrics(
            &fx.oracle_pairs(),
            &fx.records,
            &fx.queries,
            grid.steps,
            fx.eta,
        );
        if curve.points.len() != 51 || o.points.len() != 51 {
            return Err("grid is not 51 points".into());
        }
        for (p, q) in curve.points.iter().zip(&o.points) {
            if !close(p.fr, q.fr) || !close(p.tvr, q.tvr) {
                return Err(format!("fixture {seed}, beta {}: FR/TVR differ", p.beta));
            }
        }
        let star = f1_star(&curve).ok();
        if !close(star.map(|s| s.0), o.f1_star) || star.map(|s| s.1) != o.beta_star {
            return Err(format!("fixture {seed}: F1*/beta* differ"));
        }
        if !close(map_area(&curve), o.map) {
            return Err(format!("fixture {seed}: mAP differs"));
        }
    }
    Ok("100 fixtures agree within 1e-12".into())
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut p = 0.0;
    for k in wins..=n {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        p += c;
    }
    p / 2f64.powi(n as i32)
}

fn ordering() -> Outcome {
    let start = Instant::now();
    let maps = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let ds = generate(&WorldConfig {
                seed,
                ..WorldConfig::default()
            })
            .and_then(|w| w.dataset())
            .map_err(|e| e.to_string())?;
            let mut m = [0.0; 3];
            for (i, mode) in GalleryMode::ALL.into_iter().enumerate() {
                let cfg = PipelineConfig {
                    mode,
                    scorer: ScorerKind::Table,
                    ..Default::default()
                };
                let r = run_and_record(&format!("seed {seed} {mode}"), &cfg, &ds)?;
                m[i] = pooled_map(&r, &ds)?;
            }
            Ok(m)
        })
        .collect::<Result<Vec<[f64; 3]>, String>>()?;
    let ordered = maps.iter().filter(|[b, s, t]| t >= s && s >= b).count();
    let wins = maps.iter().filter(|m| m[2] > m[0]).count();
    let losses = maps.iter().filter(|m| m[2] < m[0]).count();
    let p = sign_test_p(wins, losses);
    let mean = |i: usize| maps.iter().map(|m| m[i]).sum::<f64>() / maps.len() as f64;
    let detail = format!(
        "ordered in {ordered}/20, mean mAP baseline {:.3} skip {:.3} trade {:.3}, sign test {wins}:{losses} p={p:.2e}, {:.1?}",
        mean(0),
        mean(1),
        mean(2),
        start.elapsed()
    );
    if ordered < 16 || mean(2) <= mean(0) || p >= 0.05 {
        return Err(detail);
    }
    within(Duration::from_secs(600), start)?;
    Ok(detail)
}

fn work_scaling(root: &Path) -> Outcome {
    let data = root.join("scaling-world");
    generate(&WorldConfig::persistent(3, 2000, 6))
        .and_then(|w| w.write_to(&data))
        .map_err(|e| e.to_string())?;
    let ns = vec![1usize, 5, 10, 20, 40, 80];
    let inv = Invocation::SweepN {
        data: data.clone(),
        config: PipelineConfig::default(),
        ns: ns.clone(),
    };
    let out = root.join("scaling-sweep");
    execute(&inv, &out).map_err(|e| format!("{e:#}"))?;
    let ds = Dataset::load_dir(&data).map_err(|e| e.to_string())?;
    let mut ops = Vec::new();
    for n in &ns {
        let text = fs::read_to_string(out.join(format!("summary_n{n}.json")))
            .map_err(|e| e.to_string())?;
        let s: trade_reid::RunSummary = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        ops.push(s.similarity_ops);
        let r = run_and_record(
            &format!("N={n}"),
            &PipelineConfig {
                max_len: *n,
                ..Default::default()
            },
            &ds,
        )?;
        if r.accounting.similarity_ops != s.similarity_ops {
            return Err(format!("N={n}: sweep and direct run disagree"));
        }
    }
    let (o1, o20, o80) = (ops[0] as f64, ops[3] as f64, ops[5] as f64);
    let detail = format!("ops {ops:?}, ops(20)/ops(1) = {:.4}", o20 / o1);
    let monotone = ops.windows(2).all(|w| w[1] <= w[0]);
    if !monotone || o20 / o1 > 0.1 || (o20 - o80) >= (o1 - o20) {
        return Err(detail);
    }
    Ok(detail)
}

fn fr_degradation() -> Outcome {
    let start = Instant::now();
    let frs = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let ds = generate(&WorldConfig::crowded_crossings(seed))
                .and_then(|w| w.dataset())
                .map_err(|e| e.to_string())?;
            let mut fr = [0.0; 2];
            for (i, n) in [20usize, 80].into_iter().enumerate() {
                let cfg = PipelineConfig {
                    max_len: n,
                    scorer: ScorerKind::Table,
                    ..Default::default()
                };
                let r = run_and_record(&format!("seed {seed} N={n}"), &cfg, &ds)?;
                let (_, s) = r
                    .evaluate(&ds.ground_truth, &ds.queries)
                    .map_err(|e| e.to_string())?;
                fr[i] = s
                    .pooled
                    .map(|p| p.fr_at_star)
                    .ok_or("no defined curve point")?;
            }
            Ok(fr)
        })
        .collect::<Result<Vec<[f64; 2]>, String>>()?;
    let drops = frs.iter().filter(|[a, b]| b < a).count();
    let detail = format!(
        "FR(N=80) < FR(N=20) in {drops}/20 seeds, {:.1?}",
        start.elapsed()
    );
    if drops < 14 {
        return Err(detail);
    }
    Ok(detail)
}

fn monotonicity() -> Outcome {
    let curves = CURVES.lock().unwrap();
    if curves.is_empty() {
        return Err("no runs recorded".into());
    }
    for (label, curve) in curves.iter() {
        for w in curve.points.windows(2) {
            if w[1].alerts > w[0].alerts {
                return Err(format!("{label}: alerts rise at beta {}", w[1].beta));
            }
            if let (Some(a), Some(b)) = (w[0].fr, w[1].fr) {
                if b > a {
                    return Err(format!("{label}: FR rises at beta {}", w[1].beta));
                }
            }
            if w[0].fr.is_some() != w[1].fr.is_some() {
                return Err(format!("{label}: FR definedness changes with beta"));
            }
        }
    }
    Ok(format!("{} curves checked", curves.len()))
}

fn files_of(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        out.push((name, fs::read(entry.path()).map_err(|e| e.to_string())?));
    }
    out.sort();
    Ok(out)
}

fn determinism(root: &Path) -> Outcome {
    let world = WorldConfig {
        seed: 9,
        n_cameras: 1,
        n_videos_per_camera: 2,
        frames_per_video: 1200,
        entry_rate: 0.02,
        n_queries: 5,
        ..WorldConfig::default()
    };
    let data = root.join("determinism-world");
    let run_dir = root.join("determinism-run");
    let trade = PipelineConfig {
        scorer: ScorerKind::Table,
        ..Default::default()
    };
    let invocations: Vec<(Invocation, PathBuf)> = vec![
        (Invocation::Gen { world }, data.clone()),
        (
            Invocation::Run {
                data: data.clone(),
                config: trade.clone(),
            },
            run_dir.clone(),
        ),
        (
            Invocation::Eval {
                run_dir: run_dir.clone(),
                data: data.clone(),
            },
            root.join("determinism-eval"),
        ),
        (
            Invocation::SweepN {
                data: data.clone(),
                config: trade.clone(),
                ns: vec![1, 5, 10, 20, 40, 80],
            },
            root.join("determinism-sweep"),
        ),
        (
            Invocation::Compare {
                data: data.clone(),
                config: trade,
                modes: GalleryMode::ALL.to_vec(),
            },
            root.join("determinism-compare"),
        ),
        (
            Invocation::CompareRuns {
                runs: vec![run_dir.clone()],
            },
            root.join("determinism-compare-runs"),
        ),
    ];
    let mut files = 0;
    for (inv, dir) in &invocations {
        execute(inv, dir).map_err(|e| format!("{e:#}"))?;
        let again = dir.with_extension("rerun");
        rerun(&dir.join(MANIFEST_FILE), &again).map_err(|e| format!("{e:#}"))?;
        let (a, b) = (files_of(dir)?, files_of(&again)?);
        if a != b {
            return Err(format!("{} differs after rerun", dir.display()));
        }
        files += a.len();
    }
    Ok(format!(
        "{} commands, {files} files byte-identical",
        invocations.len()
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("baseline equivalence", Box::new(baseline_equivalence)),
        ("gallery compression", Box::new(compression)),
        ("counting law", Box::new(counting_law)),
        ("metric-oracle equivalence", Box::new(metric_oracle)),
        ("mode ordering", Box::new(ordering)),
        ("work scaling", Box::new(|| work_scaling(root))),
        ("FR degradation at large N", Box::new(fr_degradation)),
        ("monotonicity", Box::new(monotonicity)),
        ("determinism", Box::new(|| determinism(root))),
    ];
    let mut failed = 0;
    let total = criteria.len();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("[{}/{total}] {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[{}/{total}] {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{total} criteria passed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
