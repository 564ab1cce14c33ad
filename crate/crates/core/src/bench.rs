//! Experiment harness: paired strategy comparison, the observation-noise
//! sweep, representative-agent selection, learning-curve smoothing and the
//! CSV/SVG artifacts.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use adaptune_rl::Agent;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::env::{run_episode, train, AgentSet, EpisodeOptions, Framework, Strategy, TrainOutcome};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Trailing moving average; the first `window − 1` entries average the
/// available prefix.
pub fn smooth_curve(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Usage("cannot smooth an empty series".into()));
    }
    if window == 0 {
        return Err(Error::Usage("smoothing window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Index of the mean closest to the grand mean, lowest index on ties.
pub fn select_representative(means: &[f64]) -> Result<usize> {
    if means.is_empty() {
        return Err(Error::Usage("no agents to choose a representative from".into()));
    }
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let mut best = 0;
    for (i, m) in means.iter().enumerate().skip(1) {
        if (m - grand).abs() < (means[best] - grand).abs() {
            best = i;
        }
    }
    Ok(best)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seeds of run `run` under base seed `base`. The demand stream depends on
/// `(base, run)` only, so every strategy faces the same demand realization;
/// the observation-noise stream also depends on the strategy.
pub fn run_options(base: u64, strategy: Strategy, run: u64, sigma: f64) -> EpisodeOptions {
    EpisodeOptions {
        demand_seed: derive_seed(base, "demand", run),
        noise_seed: derive_seed(base, &format!("noise/{strategy}"), run),
        sigma,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: String,
    pub sigma: f64,
    pub seed: u64,
    pub run: u64,
    pub total_tts: f64,
}

/// One evaluation job: a strategy, its agents (empty for the
/// controller-only strategies) and the noise level.
#[derive(Clone, Copy)]
pub struct Entry<'a> {
    pub strategy: Strategy,
    pub agents: &'a [Agent],
    pub sigma: f64,
}

/// Total TTS of `runs` runs under every base seed for every entry, in
/// (entry, seed, run) order regardless of scheduling.
pub fn evaluate(cfg: &ScenarioConfig, entries: &[Entry<'_>], seeds: &[u64], runs: usize) -> Result<Vec<RunRecord>> {
    let jobs: Vec<(usize, u64, u64)> = (0..entries.len())
        .flat_map(|e| {
            seeds
                .iter()
                .flat_map(move |&s| (0..runs as u64).map(move |r| (e, s, r)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(e, seed, run)| {
            let entry = entries[e];
            let agents = if entry.agents.is_empty() {
                AgentSet::None
            } else {
                AgentSet::Frozen(entry.agents)
            };
            let opts = run_options(seed, entry.strategy, run, entry.sigma);
            let result = run_episode(cfg, entry.strategy, agents, opts)?;
            Ok(RunRecord {
                strategy: entry.strategy.name().to_string(),
                sigma: entry.sigma,
                seed,
                run,
                total_tts: result.total_tts,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub mean_tts: f64,
    pub std_tts: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub sigma: f64,
    pub strategy: String,
    pub mean_tts: f64,
    pub std_tts: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<StrategyRow>,
    pub records: Vec<RunRecord>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

fn summarize<'a>(label: &str, records: impl Iterator<Item = &'a RunRecord>) -> StrategyRow {
    let tts: Vec<f64> = records.map(|r| r.total_tts).collect();
    let (mean_tts, std_tts) = mean_std(&tts);
    StrategyRow {
        strategy: label.to_string(),
        mean_tts,
        std_tts,
        runs: tts.len(),
    }
}

/// Mean ± std of total TTS per strategy over `runs` runs of every seed.
pub fn benchmark(cfg: &ScenarioConfig, entries: &[Entry<'_>], seeds: &[u64], runs: usize) -> Result<BenchmarkReport> {
    let records = evaluate(cfg, entries, seeds, runs)?;
    let per_entry = seeds.len() * runs;
    let rows = entries
        .iter()
        .enumerate()
        .map(|(i, e)| summarize(e.strategy.name(), records[i * per_entry..(i + 1) * per_entry].iter()))
        .collect();
    Ok(BenchmarkReport {
        rows,
        records,
        seeds: seeds.to_vec(),
        config_hash: cfg.hash(),
    })
}

/// Independent training runs, one per seed, executed in parallel and
/// returned in seed order.
pub fn train_seeds(
    cfg: &ScenarioConfig,
    framework: Framework,
    episodes: usize,
    seeds: &[u64],
) -> Result<Vec<TrainOutcome>> {
    seeds
        .par_iter()
        .map(|&seed| train(cfg, framework, episodes, seed))
        .collect()
}

/// Trained agent sets of one framework (one set per training seed).
pub struct TrainedFramework {
    pub framework: Framework,
    pub agent_sets: Vec<Vec<Agent>>,
}

/// For every noise level and framework, `runs_per_agent` runs of every
/// trained agent set. Run `r` of agent set `a` uses run index
/// `a·runs_per_agent + r` under `seed`.
pub fn robustness(
    cfg: &ScenarioConfig,
    frameworks: &[TrainedFramework],
    sigmas: &[f64],
    seed: u64,
    runs_per_agent: usize,
) -> Result<(Vec<RobustnessRow>, Vec<RunRecord>)> {
    let mut jobs = Vec::new();
    for (si, &sigma) in sigmas.iter().enumerate() {
        for (fi, fw) in frameworks.iter().enumerate() {
            for a in 0..fw.agent_sets.len() {
                for r in 0..runs_per_agent {
                    jobs.push((si, fi, a, (a * runs_per_agent + r) as u64, sigma));
                }
            }
        }
    }
    let records: Vec<(usize, usize, RunRecord)> = jobs
        .par_iter()
        .map(|&(si, fi, a, run, sigma)| {
            let fw = &frameworks[fi];
            let strategy = fw.framework.strategy();
            let opts = run_options(seed, strategy, run, sigma);
            let result = run_episode(cfg, strategy, AgentSet::Frozen(&fw.agent_sets[a]), opts)?;
            Ok((
                si,
                fi,
                RunRecord {
                    strategy: strategy.name().to_string(),
                    sigma,
                    seed,
                    run,
                    total_tts: result.total_tts,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (si, &sigma) in sigmas.iter().enumerate() {
        for (fi, fw) in frameworks.iter().enumerate() {
            let row = summarize(
                fw.framework.name(),
                records
                    .iter()
                    .filter(|(s, f, _)| *s == si && *f == fi)
                    .map(|(_, _, r)| r),
            );
            rows.push(RobustnessRow {
                sigma,
                strategy: row.strategy,
                mean_tts: row.mean_tts,
                std_tts: row.std_tts,
                runs: row.runs,
            });
        }
    }
    Ok((rows, records.into_iter().map(|(_, _, r)| r).collect()))
}

/// Mean total TTS of each agent set over `runs` runs and the index of the
/// representative set.
pub fn choose_representative(
    cfg: &ScenarioConfig,
    framework: Framework,
    agent_sets: &[Vec<Agent>],
    seed: u64,
    runs: usize,
) -> Result<(usize, Vec<f64>)> {
    let entries: Vec<Entry<'_>> = agent_sets
        .iter()
        .map(|a| Entry {
            strategy: framework.strategy(),
            agents: a,
            sigma: 0.0,
        })
        .collect();
    let selection_seed = derive_seed(seed, "selection", 0);
    let records = evaluate(cfg, &entries, &[selection_seed], runs)?;
    let means: Vec<f64> = records
        .chunks(runs.max(1))
        .map(|c| mean_std(&c.iter().map(|r| r.total_tts).collect::<Vec<_>>()).0)
        .collect();
    Ok((select_representative(&means)?, means))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Metadata line written above every CSV table. It is the only place a
/// timestamp appears.
pub fn metadata_line(fields: &[(&str, String)]) -> String {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut line = format!("# generated_unix={stamp}");
    for (k, v) in fields {
        let _ = write!(line, " {k}={v}");
    }
    line
}

/// Writes `rows` under a header and a leading `#` metadata line.
pub fn write_csv<T: Serialize>(path: &Path, metadata: &str, header: &[&str], rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(file, "{metadata}").map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a table written by [`write_csv`], skipping `#` lines.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

pub const REPORT_HEADER: [&str; 4] = ["strategy", "mean_tts", "std_tts", "runs"];
pub const ROBUSTNESS_HEADER: [&str; 5] = ["sigma", "strategy", "mean_tts", "std_tts", "runs"];
pub const RUNS_HEADER: [&str; 5] = ["strategy", "sigma", "seed", "run", "total_tts"];
pub const CURVE_HEADER: [&str; 3] = ["episode", "reward", "smoothed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub reward: f64,
    pub smoothed: f64,
}

pub fn curve_rows(curve: &[f64], window: usize) -> Result<Vec<CurveRow>> {
    if curve.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = smooth_curve(curve, window)?;
    Ok(curve
        .iter()
        .zip(smoothed)
        .enumerate()
        .map(|(episode, (&reward, smoothed))| CurveRow {
            episode,
            reward,
            smoothed,
        })
        .collect())
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot of the raw and smoothed series of a learning curve.
pub fn curve_svg(title: &str, rows: &[CurveRow]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 400.0;
    const M: f64 = 56.0;
    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
        W / 2.0,
        svg_escape(title)
    );
    let (lo, hi) = rows
        .iter()
        .flat_map(|r| [r.reward, r.smoothed])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let last = rows.len().saturating_sub(1).max(1) as f64;
    let px = |i: usize| M + (W - 2.0 * M) * i as f64 / last;
    let py = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);
    let _ = writeln!(
        svg,
        "<path d=\"M{M} {M} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
        H - M,
        W - M
    );
    for (v, y) in [(hi, py(hi)), (lo, py(lo))] {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{v:.3}</text>",
            M - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">episode (0 to {})</text>",
        W / 2.0,
        H - 16.0,
        rows.len().saturating_sub(1)
    );
    for (pick, colour, width) in [(0usize, "#9db8d9", 1.0), (1usize, "#1f4e8c", 2.0)] {
        if rows.is_empty() {
            break;
        }
        let mut points = String::new();
        for (i, r) in rows.iter().enumerate() {
            let v = if pick == 0 { r.reward } else { r.smoothed };
            let _ = write!(points, "{:.2},{:.2} ", px(i), py(v));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"{width}\"/>",
            points.trim_end()
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"44\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f4e8c\">smoothed</text>",
        W - M
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"58\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#9db8d9\">raw</text>",
        W - M
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}
