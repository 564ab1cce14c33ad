use std::fs;
use std::path::{Path, PathBuf};

use adaptune_core::bench::{
    self, curve_rows, curve_svg, metadata_line, read_csv, write_csv, write_text, CurveRow, Entry, TrainedFramework,
    CURVE_HEADER, REPORT_HEADER, ROBUSTNESS_HEADER, RUNS_HEADER,
};
use adaptune_core::env::{run_episode, weather_schedule, AgentSet, Framework, Strategy};
use adaptune_core::seed::derive_seed;
use adaptune_core::{Error, Result, ScenarioConfig};
use adaptune_rl::{load_agent, save_agent, Agent};
use serde::Serialize;

use crate::{Common, Format};

struct Context {
    cfg: ScenarioConfig,
    out: PathBuf,
    seeds: Vec<u64>,
}

impl Context {
    fn new(c: &Common) -> Result<Self> {
        let cfg = match &c.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        let out = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        let seeds = if c.seeds.is_empty() {
            cfg.bench.seeds.clone()
        } else {
            c.seeds.clone()
        };
        if seeds.is_empty() {
            return Err(Error::Usage("at least one seed is required".into()));
        }
        Ok(Self { cfg, out, seeds })
    }

    fn metadata(&self, command: &str) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        metadata_line(&[
            ("command", command.to_string()),
            ("config_sha256", self.cfg.hash()),
            ("seeds", seeds.join(",")),
        ])
    }

    fn out_dir(&self, sub: &Path) -> Result<PathBuf> {
        let dir = self.out.join(sub);
        fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(dir)
    }
}

fn wants(c: &Common, f: Format) -> bool {
    c.format.contains(&f)
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(Error::Usage(format!("--{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

fn seed_dir_index(name: &str) -> Option<u64> {
    name.strip_prefix("seed_")?.parse().ok()
}

/// Seed directories under `<root>/<framework>`, sorted by seed.
fn seed_dirs(root: &Path, fw: Framework) -> Result<Vec<(u64, PathBuf)>> {
    let base = root.join(fw.name());
    let entries = fs::read_dir(&base).map_err(|source| Error::Io {
        path: base.clone(),
        source,
    })?;
    let mut dirs: Vec<(u64, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| seed_dir_index(&e.file_name().to_string_lossy()).map(|s| (s, e.path())))
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Every trained agent set of `fw` under `root`, in seed order.
fn load_framework(root: &Path, fw: Framework) -> Result<Vec<(u64, Vec<Agent>)>> {
    let dirs = seed_dirs(root, fw)?;
    if dirs.is_empty() {
        return Err(Error::Io {
            path: root.join(fw.name()),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no seed_<n> directories with trained agents",
            ),
        });
    }
    dirs.into_iter()
        .map(|(seed, dir)| {
            let agents = (0..fw.num_agents())
                .map(|i| {
                    load_agent(
                        &dir.join(format!("agent_{i}.agent")),
                        derive_seed(seed, "loaded", i as u64),
                    )
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((seed, agents))
        })
        .collect()
}

fn agents_root(c: &Common) -> Result<&Path> {
    c.agents
        .as_deref()
        .ok_or_else(|| Error::Usage("this command needs --agents DIR with trained agents".into()))
}

/// Representative agent set of `fw`, chosen among all trained sets.
fn representative(ctx: &Context, root: &Path, fw: Framework) -> Result<(u64, Vec<Agent>)> {
    let mut sets = load_framework(root, fw)?;
    let agent_sets: Vec<Vec<Agent>> = sets.iter().map(|(_, a)| a.clone()).collect();
    let runs = ctx.cfg.bench.selection_runs.max(1);
    let (idx, _) = bench::choose_representative(&ctx.cfg, fw, &agent_sets, ctx.seeds[0], runs)?;
    Ok(sets.swap_remove(idx))
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    weather: u8,
    tts: f64,
    u_dta: f64,
    u_rm1: f64,
    u_rm2: f64,
}

pub fn simulate(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let strategies = if c.strategy.is_empty() {
        vec![Strategy::Fixed]
    } else {
        c.strategy.clone()
    };
    let sigma = c.sigma.first().copied().unwrap_or(0.0);
    let dir = ctx.out_dir(Path::new(""))?;
    let timing = ctx.cfg.steps();
    for strategy in strategies {
        let agents = match strategy.framework() {
            Some(fw) => representative(&ctx, agents_root(c)?, fw)?.1,
            None => Vec::new(),
        };
        for &seed in &ctx.seeds {
            let set = if agents.is_empty() {
                AgentSet::None
            } else {
                AgentSet::Frozen(&agents)
            };
            let opts = bench::run_options(seed, strategy, 0, sigma);
            let r = run_episode(&ctx.cfg, strategy, set, opts)?;
            if wants(c, Format::Csv) {
                let rows: Vec<TraceRow> = (0..r.tts.len())
                    .map(|k| TraceRow {
                        step: k,
                        weather: weather_schedule(k, &timing) as u8,
                        tts: r.tts[k],
                        u_dta: r.u_dta[k],
                        u_rm1: r.u_rm1[k],
                        u_rm2: r.u_rm2[k],
                    })
                    .collect();
                write_csv(
                    &dir.join(format!("simulate_{strategy}_seed_{seed}.csv")),
                    &ctx.metadata("simulate"),
                    &["step", "weather", "tts", "u_dta", "u_rm1", "u_rm2"],
                    &rows,
                )?;
            }
            println!("{strategy} seed {seed}: total TTS {:.3} veh·h", r.total_tts);
        }
    }
    Ok(())
}

pub fn train(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let episodes = c.episodes.unwrap_or(ctx.cfg.bench.episodes);
    let fw = c.framework;
    let outcomes = bench::train_seeds(&ctx.cfg, fw, episodes, &ctx.seeds)?;
    let window = ctx.cfg.bench.smoothing_window;
    for (seed, outcome) in ctx.seeds.iter().zip(outcomes) {
        let dir = ctx.out_dir(&Path::new(fw.name()).join(format!("seed_{seed}")))?;
        for (i, agent) in outcome.agents.iter().enumerate() {
            save_agent(agent, &dir, &format!("agent_{i}"))?;
        }
        let rows = curve_rows(&outcome.curve, window)?;
        write_csv(&dir.join("curve.csv"), &ctx.metadata("train"), &CURVE_HEADER, &rows)?;
        if wants(c, Format::Svg) {
            write_text(&dir.join("curve.svg"), &curve_svg(&format!("{fw} seed {seed}"), &rows))?;
        }
        match rows.last() {
            Some(last) => println!(
                "{fw} seed {seed}: {episodes} episodes, final smoothed reward {:.6}",
                last.smoothed
            ),
            None => println!("{fw} seed {seed}: untrained agents saved"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationRow {
    seed: u64,
    mean_tts: f64,
    runs: usize,
    representative: bool,
}

pub fn evaluate(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let fw = c.framework;
    let sets = load_framework(agents_root(c)?, fw)?;
    let runs = positive("runs", c.runs.unwrap_or(ctx.cfg.bench.selection_runs))?;
    let agent_sets: Vec<Vec<Agent>> = sets.iter().map(|(_, a)| a.clone()).collect();
    let (best, means) = bench::choose_representative(&ctx.cfg, fw, &agent_sets, ctx.seeds[0], runs)?;
    let rows: Vec<EvaluationRow> = sets
        .iter()
        .zip(&means)
        .enumerate()
        .map(|(i, ((seed, _), &mean_tts))| EvaluationRow {
            seed: *seed,
            mean_tts,
            runs,
            representative: i == best,
        })
        .collect();
    let dir = ctx.out_dir(Path::new(""))?;
    if wants(c, Format::Csv) {
        write_csv(
            &dir.join(format!("evaluate_{fw}.csv")),
            &ctx.metadata("evaluate"),
            &["seed", "mean_tts", "runs", "representative"],
            &rows,
        )?;
    }
    for r in &rows {
        let mark = if r.representative { "  (representative)" } else { "" };
        println!(
            "{fw} seed {}: mean TTS {:.3} over {} runs{mark}",
            r.seed, r.mean_tts, r.runs
        );
    }
    Ok(())
}

pub fn benchmark(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let runs = positive("runs", c.runs.unwrap_or(ctx.cfg.bench.runs))?;
    let strategies = if !c.strategy.is_empty() {
        c.strategy.clone()
    } else {
        let mut s = vec![Strategy::NoControl, Strategy::Fixed];
        if let Some(root) = &c.agents {
            for fw in [Framework::Multi, Framework::Single] {
                if root.join(fw.name()).is_dir() {
                    s.push(fw.strategy());
                }
            }
        }
        s
    };
    let mut agent_store: Vec<Vec<Agent>> = Vec::new();
    for s in &strategies {
        agent_store.push(match s.framework() {
            Some(fw) => representative(&ctx, agents_root(c)?, fw)?.1,
            None => Vec::new(),
        });
    }
    let entries: Vec<Entry<'_>> = strategies
        .iter()
        .zip(&agent_store)
        .map(|(&strategy, agents)| Entry {
            strategy,
            agents,
            sigma: 0.0,
        })
        .collect();
    let report = bench::benchmark(&ctx.cfg, &entries, &ctx.seeds, runs)?;
    let dir = ctx.out_dir(Path::new(""))?;
    if wants(c, Format::Csv) {
        let meta = ctx.metadata("benchmark");
        write_csv(&dir.join("report.csv"), &meta, &REPORT_HEADER, &report.rows)?;
        write_csv(&dir.join("runs.csv"), &meta, &RUNS_HEADER, &report.records)?;
    }
    println!("{:<12} {:>14} {:>12} {:>6}", "strategy", "mean TTS", "std", "runs");
    for r in &report.rows {
        println!(
            "{:<12} {:>14.3} {:>12.3} {:>6}",
            r.strategy, r.mean_tts, r.std_tts, r.runs
        );
    }
    Ok(())
}

pub fn robustness(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let root = agents_root(c)?;
    let runs = positive("runs", c.runs.unwrap_or(ctx.cfg.bench.robustness_runs))?;
    let sigmas = if c.sigma.is_empty() {
        ctx.cfg.bench.sigmas.clone()
    } else {
        c.sigma.clone()
    };
    if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Usage("--sigma values must be non-negative".into()));
    }
    let frameworks: Vec<Framework> = if c.strategy.is_empty() {
        vec![Framework::Multi, Framework::Single]
    } else {
        c.strategy.iter().filter_map(|s| s.framework()).collect()
    };
    let trained = frameworks
        .into_iter()
        .map(|fw| {
            Ok(TrainedFramework {
                framework: fw,
                agent_sets: load_framework(root, fw)?.into_iter().map(|(_, a)| a).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, records) = bench::robustness(&ctx.cfg, &trained, &sigmas, ctx.seeds[0], runs)?;
    let dir = ctx.out_dir(Path::new(""))?;
    if wants(c, Format::Csv) {
        let meta = ctx.metadata("robustness");
        write_csv(&dir.join("robustness.csv"), &meta, &ROBUSTNESS_HEADER, &rows)?;
        write_csv(&dir.join("robustness_runs.csv"), &meta, &RUNS_HEADER, &records)?;
    }
    println!(
        "{:>7} {:<8} {:>14} {:>12} {:>6}",
        "sigma", "strategy", "mean TTS", "std", "runs"
    );
    for r in &rows {
        println!(
            "{:>7} {:<8} {:>14.3} {:>12.3} {:>6}",
            r.sigma, r.strategy, r.mean_tts, r.std_tts, r.runs
        );
    }
    Ok(())
}

pub fn report(c: &Common) -> Result<()> {
    let ctx = Context::new(c)?;
    let root = c.agents.clone().unwrap_or_else(|| ctx.out.clone());
    let window = ctx.cfg.bench.smoothing_window;
    let frameworks: Vec<Framework> = if c.strategy.is_empty() {
        vec![Framework::Multi, Framework::Single]
    } else {
        c.strategy.iter().filter_map(|s| s.framework()).collect()
    };
    let dir = ctx.out_dir(Path::new(""))?;
    let mut found = 0;
    for fw in frameworks {
        if !root.join(fw.name()).is_dir() {
            continue;
        }
        for (seed, seed_dir) in seed_dirs(&root, fw)? {
            let path = seed_dir.join("curve.csv");
            if !path.is_file() {
                continue;
            }
            let raw: Vec<CurveRow> = read_csv(&path)?;
            let rewards: Vec<f64> = raw.iter().map(|r| r.reward).collect();
            let rows = curve_rows(&rewards, window)?;
            let stem = format!("curve_{fw}_seed_{seed}");
            if wants(c, Format::Svg) {
                write_text(
                    &dir.join(format!("{stem}.svg")),
                    &curve_svg(&format!("{fw} seed {seed}"), &rows),
                )?;
            }
            if wants(c, Format::Csv) {
                write_csv(
                    &dir.join(format!("{stem}.csv")),
                    &ctx.metadata("report"),
                    &CURVE_HEADER,
                    &rows,
                )?;
            }
            found += 1;
            match rows.last() {
                Some(last) => println!(
                    "{fw} seed {seed}: {} episodes, final smoothed reward {:.6}",
                    rows.len(),
                    last.smoothed
                ),
                None => println!("{fw} seed {seed}: empty curve"),
            }
        }
    }
    if found == 0 {
        return Err(Error::Io {
            path: root,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no learning curves found"),
        });
    }
    Ok(())
}
