//! Plain-text agent persistence.
//!
//! A network file is a sequence of blocks, one per layer:
//!
//! ```text
//! layer <in> <out> <activation>
//! <out lines of <in> weights, row-major>
//! <one line of <out> biases>
//! ```
//!
//! Values are written with 17 significant digits so a save/load round trip
//! is exact. The agent manifest is a `key value...` file naming the four
//! network files (relative to the manifest) together with the action bounds,
//! hyperparameters and the current exploration σ.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{actor_shape, critic_shape, ActionBounds, Agent, AgentConfig};
use crate::error::{Result, RlError};
use crate::mlp::{Activation, Dense, Mlp};

const NETWORKS: [&str; 4] = ["actor", "critic", "actor_target", "critic_target"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RlError + '_ {
    move |source| RlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn network_to_string(net: &Mlp) -> String {
    let mut out = String::new();
    for layer in net.layers() {
        writeln!(out, "layer {} {} {}", layer.inputs, layer.outputs, layer.activation).unwrap();
        for row in layer.weights.chunks_exact(layer.inputs) {
            let line: Vec<String> = row.iter().map(|&w| fmt_f64(w)).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        let line: Vec<String> = layer.bias.iter().map(|&b| fmt_f64(b)).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

pub fn parse_network(text: &str, path: &Path) -> Result<Mlp> {
    let parse_err = |line: usize, msg: String| RlError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let last_line = text.lines().count().max(1);

    let parse_values = |lineno: usize, line: &str, n: usize| -> Result<Vec<f64>> {
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("invalid number '{tok}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != n {
            return Err(parse_err(
                lineno,
                format!("expected {n} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(lineno, "non-finite parameter".into()));
        }
        Ok(values)
    };

    let mut layers = Vec::new();
    while let Some((lineno, header)) = lines.next() {
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 4 || tokens[0] != "layer" {
            return Err(parse_err(
                lineno,
                format!("expected 'layer <in> <out> <activation>', found '{header}'"),
            ));
        }
        let dim = |tok: &str| {
            tok.parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| parse_err(lineno, format!("invalid layer dimension '{tok}'")))
        };
        let inputs = dim(tokens[1])?;
        let outputs = dim(tokens[2])?;
        let activation: Activation = tokens[3].parse().map_err(|m| parse_err(lineno, m))?;

        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..outputs {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(last_line, "file ends inside a weight block".into()))?;
            weights.extend(parse_values(n, line, inputs)?);
        }
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(last_line, "file ends before the bias line".into()))?;
        let bias = parse_values(n, line, outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        });
    }
    if layers.is_empty() {
        return Err(parse_err(last_line, "no layers".into()));
    }
    Mlp::new(layers)
}

pub fn save_network(net: &Mlp, path: &Path) -> Result<()> {
    fs::write(path, network_to_string(net)).map_err(io_err(path))
}

pub fn load_network(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_network(&text, path)
}

/// Writes `<stem>.agent` and its four network files into `dir`; returns the
/// manifest path.
pub fn save_agent(agent: &Agent, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg = agent.config();
    let mut m = String::new();
    writeln!(m, "agent 1").unwrap();
    writeln!(m, "obs_dim {}", cfg.obs_dim).unwrap();
    writeln!(m, "action_dim {}", cfg.action_dim()).unwrap();
    let hidden: Vec<String> = cfg.hidden.iter().map(|h| h.to_string()).collect();
    writeln!(m, "hidden {}", hidden.join(" ")).unwrap();
    for (j, (lo, hi)) in cfg.bounds.lo().iter().zip(cfg.bounds.hi()).enumerate() {
        writeln!(m, "bound {j} {} {}", fmt_f64(*lo), fmt_f64(*hi)).unwrap();
    }
    for (key, v) in [
        ("gamma", cfg.gamma),
        ("actor_lr", cfg.actor_lr),
        ("critic_lr", cfg.critic_lr),
        ("target_rate", cfg.target_rate),
        ("noise_std", agent.noise_std()),
        ("noise_decay", cfg.noise_decay),
        ("noise_floor", cfg.noise_floor),
        ("actor_output_scale", cfg.actor_output_scale),
    ] {
        writeln!(m, "{key} {}", fmt_f64(v)).unwrap();
    }
    writeln!(m, "batch_size {}", cfg.batch_size).unwrap();
    writeln!(m, "buffer_capacity {}", cfg.buffer_capacity).unwrap();

    let nets = [
        agent.actor(),
        agent.critic(),
        agent.actor_target(),
        agent.critic_target(),
    ];
    for (name, net) in NETWORKS.iter().zip(nets) {
        let file = format!("{stem}.{name}.net");
        save_network(net, &dir.join(&file))?;
        writeln!(m, "network {name} {file}").unwrap();
    }
    let manifest = dir.join(format!("{stem}.agent"));
    fs::write(&manifest, m).map_err(io_err(&manifest))?;
    Ok(manifest)
}

/// Loads an agent from its manifest. The replay buffer and optimizer moments
/// start empty; `seed` initializes the agent's private random stream.
pub fn load_agent(manifest: &Path, seed: u64) -> Result<Agent> {
    let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
    let parse_err = |line: usize, msg: String| RlError::Parse {
        path: manifest.to_path_buf(),
        line,
        msg,
    };

    let mut obs_dim = None;
    let mut action_dim = None;
    let mut hidden = None;
    let mut bounds: Vec<Option<(f64, f64)>> = Vec::new();
    let mut scalars = std::collections::BTreeMap::new();
    let mut counts = std::collections::BTreeMap::new();
    let mut networks = std::collections::BTreeMap::new();
    let mut seen_header = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let num = |tok: &str| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("invalid number '{tok}'")))
        };
        let count = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("invalid count '{tok}'")))
        };
        let arity = |n: usize| {
            if tokens.len() == n {
                Ok(())
            } else {
                Err(parse_err(lineno, format!("'{}' takes {} fields", tokens[0], n - 1)))
            }
        };
        match tokens[0] {
            "agent" => {
                arity(2)?;
                if tokens[1] != "1" {
                    return Err(parse_err(lineno, format!("unsupported format version {}", tokens[1])));
                }
                seen_header = true;
            }
            "obs_dim" => {
                arity(2)?;
                obs_dim = Some(count(tokens[1])?);
            }
            "action_dim" => {
                arity(2)?;
                action_dim = Some(count(tokens[1])?);
            }
            "hidden" => {
                hidden = Some(tokens[1..].iter().map(|t| count(t)).collect::<Result<Vec<_>>>()?);
            }
            "bound" => {
                arity(4)?;
                let j = count(tokens[1])?;
                if bounds.len() <= j {
                    bounds.resize(j + 1, None);
                }
                bounds[j] = Some((num(tokens[2])?, num(tokens[3])?));
            }
            "gamma" | "actor_lr" | "critic_lr" | "target_rate" | "noise_std" | "noise_decay" | "noise_floor"
            | "actor_output_scale" => {
                arity(2)?;
                scalars.insert(tokens[0], num(tokens[1])?);
            }
            "batch_size" | "buffer_capacity" => {
                arity(2)?;
                counts.insert(tokens[0], count(tokens[1])?);
            }
            "network" => {
                arity(3)?;
                if !NETWORKS.contains(&tokens[1]) {
                    return Err(parse_err(lineno, format!("unknown network '{}'", tokens[1])));
                }
                networks.insert(tokens[1], (lineno, tokens[2].to_string()));
            }
            other => return Err(parse_err(lineno, format!("unknown key '{other}'"))),
        }
    }

    let end = text.lines().count().max(1);
    if !seen_header {
        return Err(parse_err(1, "missing 'agent 1' header".into()));
    }
    let missing = |what: &str| parse_err(end, format!("missing '{what}'"));
    let obs_dim = obs_dim.ok_or_else(|| missing("obs_dim"))?;
    let action_dim = action_dim.ok_or_else(|| missing("action_dim"))?;
    if bounds.len() != action_dim || bounds.iter().any(Option::is_none) {
        return Err(parse_err(end, format!("expected {action_dim} bound lines")));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = bounds.into_iter().map(Option::unwrap).unzip();
    let mut config = AgentConfig::new(obs_dim, ActionBounds::new(lo, hi)?);
    config.hidden = hidden.ok_or_else(|| missing("hidden"))?;
    let scalar = |k: &str| scalars.get(k).copied().ok_or_else(|| missing(k));
    config.gamma = scalar("gamma")?;
    config.actor_lr = scalar("actor_lr")?;
    config.critic_lr = scalar("critic_lr")?;
    config.target_rate = scalar("target_rate")?;
    config.noise_decay = scalar("noise_decay")?;
    config.noise_floor = scalar("noise_floor")?;
    config.actor_output_scale = scalar("actor_output_scale")?;
    let noise_std = scalar("noise_std")?;
    config.batch_size = counts.get("batch_size").copied().ok_or_else(|| missing("batch_size"))?;
    config.buffer_capacity = counts
        .get("buffer_capacity")
        .copied()
        .ok_or_else(|| missing("buffer_capacity"))?;

    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let (actor_dims, actor_acts) = actor_shape(&config);
    let (critic_dims, critic_acts) = critic_shape(&config);
    let mut loaded = Vec::with_capacity(4);
    for name in NETWORKS {
        let (lineno, file) = networks.get(name).ok_or_else(|| missing(name))?;
        let net = load_network(&base.join(file))?;
        let (dims, acts) = if name.starts_with("actor") {
            (&actor_dims, &actor_acts)
        } else {
            (&critic_dims, &critic_acts)
        };
        let mut got_dims = vec![net.input_dim()];
        got_dims.extend(net.layers().iter().map(|l| l.outputs));
        let got_acts: Vec<Activation> = net.layers().iter().map(|l| l.activation).collect();
        if &got_dims != dims || &got_acts != acts {
            return Err(RlError::Shape(format!(
                "{name} network in {file} (manifest line {lineno}) has layers {got_dims:?}, manifest declares {dims:?}"
            )));
        }
        loaded.push(net);
    }
    let critic_target = loaded.pop().unwrap();
    let actor_target = loaded.pop().unwrap();
    let critic = loaded.pop().unwrap();
    let actor = loaded.pop().unwrap();
    Ok(Agent::from_parts(
        config,
        actor,
        critic,
        actor_target,
        critic_target,
        Some(noise_std),
        ChaCha8Rng::seed_from_u64(seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_network_names_last_line() {
        let text = "layer 2 2 relu\n1.0 2.0\n";
        let err = parse_network(text, Path::new("x.net")).unwrap_err();
        match err {
            RlError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_token_names_its_line() {
        let text = "layer 2 1 linear\n1.0 abc\n0.5\n";
        let err = parse_network(text, Path::new("x.net")).unwrap_err();
        match err {
            RlError::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn network_text_round_trips_exactly() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::random(&[3, 5, 2], &[Activation::Relu, Activation::Tanh], &mut rng);
        let back = parse_network(&network_to_string(&net), Path::new("mem")).unwrap();
        assert_eq!(net, back);
    }
}
