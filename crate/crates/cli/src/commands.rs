// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use netfuzz_core::dataset::{generate_dataset, generate_exhaustive, read_dataset, split, write_dataset, Strategy};
use netfuzz_core::fuzzer::{fuzz_loop, Budget, FuzzReport, Observation};
use netfuzz_core::graph::{build_graph, centrality_report, normalized_adjacency};
use netfuzz_core::grnn::{
    continue_training, evaluate, infer, load_model, load_train_state, save_model, save_train_state, train, GrnnModel,
    ModelSidecar,
};
use netfuzz_core::logic::{simulate_sequence_with, SimMode};
use netfuzz_core::netlist::{inject_fault, parse_bench, FaultKind, FaultSpec, GateKind, Netlist};
use netfuzz_core::oracle::{exhaustively_observable, BugReport, GoldenModel, MatchMode, Observability};
use netfuzz_core::seed::Seed;
use serde_json::{json, Value};

use crate::artifact::{parse_provenance_comment, provenance_comment, read_bytes, read_text, write_atomic, write_json};
use crate::config::RunConfig;
use crate::error::{failed, CliError, CliResult};
use crate::{Cli, Command, Format, Mode, SeedArgs};

const DEFAULT_OUT: &str = "netfuzz-out";
const OUT_ENV: &str = "NETFUZZ_OUT";
/// Largest input count for which the exhaustive observability check runs.
const EXHAUSTIVE_INPUT_LIMIT: usize = 16;

struct Ctx {
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn digest(&self) -> String {
        self.config.digest()
    }

    fn seed(&self) -> u64 {
        self.config.prng_seed
    }

    /// Attaches digest and PRNG seed to a JSON object.
    fn stamp(&self, mut v: Value) -> Value {
        v["config_digest"] = json!(self.digest());
        v["prng_seed"] = json!(self.seed());
        v
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.prng {
        config.prng_seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.paths.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    log::debug!("{} worker(s) requested; every stage runs on the calling thread", cli.jobs);
    let mut ctx = Ctx { config, out };

    match cli.command {
        Command::Parse { netlist } => cmd_parse(&ctx, netlist),
        Command::Graph { netlist } => cmd_graph(&ctx, netlist),
        Command::Simulate { netlist, seed, mode, format } => cmd_simulate(&ctx, netlist, &seed, mode, format),
        Command::Dataset { netlist, n_seeds, timesteps, exhaustive } => {
            if let Some(n) = n_seeds {
                ctx.config.dataset.n_seeds = n;
            }
            if let Some(t) = timesteps {
                ctx.config.dataset.timesteps = t;
            }
            if exhaustive {
                ctx.config.dataset_strategy = Strategy::Exhaustive;
            }
            ctx.config.validate()?;
            cmd_dataset(&ctx, netlist)
        }
        Command::Train { netlist, dataset, checkpoint, epochs, hidden, gcn_dims, learning_rate, resume } => {
            let m = &mut ctx.config.model;
            if let Some(e) = epochs {
                m.max_epochs = e;
            }
            if let Some(h) = hidden {
                m.hidden = h;
            }
            if let Some(d) = gcn_dims {
                m.gcn_dims = d;
            }
            if let Some(lr) = learning_rate {
                m.learning_rate = lr;
            }
            ctx.config.validate()?;
            cmd_train(&ctx, netlist, dataset, checkpoint, resume)
        }
        Command::Infer { netlist, checkpoint, seed, format } => cmd_infer(&ctx, netlist, checkpoint, &seed, format),
        Command::Fuzz {
            netlist,
            dut,
            budget,
            seconds,
            timesteps,
            checkpoint,
            random,
            transients,
            strict,
            all_nets,
        } => {
            let c = &mut ctx.config;
            if let Some(n) = budget {
                c.budget = Budget::Seeds(n);
            }
            if let Some(s) = seconds {
                if !(s.is_finite() && s > 0.0) {
                    return Err(CliError::ConfigInvalid("--seconds must be a positive number".into()));
                }
                c.budget = Budget::WallClock(Duration::from_secs_f64(s));
            }
            if let Some(t) = timesteps {
                c.fuzz.timesteps = t;
            }
            if random {
                c.fuzz.coverage_guided = false;
            }
            if transients {
                c.fuzz.check_transients = true;
            }
            if strict {
                c.fuzz.match_mode = MatchMode::Strict;
            }
            if all_nets {
                c.fuzz.observe = Observation::AllNets;
            }
            c.validate()?;
            cmd_fuzz(&ctx, netlist, dut, checkpoint)
        }
        Command::Inject { netlist, net, fault, output } => cmd_inject(&ctx, netlist, &net, &fault, output),
        Command::Report { artifacts } => cmd_report(&ctx, cli.config.is_some(), &artifacts),
        Command::Config => {
            let v = json!({ "config": ctx.config, "config_digest": ctx.digest() });
            print_json(&v)
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(failed(e)),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> CliResult<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v).map_err(failed)?))
}

fn resolve(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::ConfigInvalid(format!("no {what} given on the command line or in the config")))
}

fn load_netlist(path: &Path) -> CliResult<Netlist> {
    let text = read_text(path)?;
    parse_bench(&text).with_context(|| format!("parsing {}", path.display())).map_err(failed)
}

fn netlist_arg(ctx: &Ctx, flag: Option<PathBuf>) -> CliResult<Netlist> {
    load_netlist(&resolve(flag, &ctx.config.paths.netlist, "netlist")?)
}

/// Stimulus from `--seed` or `--seed-file`. A seed file may carry a
/// `timesteps=` entry in its comment line.
fn read_seed(args: &SeedArgs, width: usize, default_t: usize) -> CliResult<Seed> {
    let (hex, file_t) = match (&args.seed, &args.seed_file) {
        (Some(h), _) => (h.clone(), None),
        (None, Some(p)) => {
            let text = read_text(p)?;
            let t = text
                .lines()
                .filter(|l| l.starts_with('#'))
                .flat_map(|l| l.split_whitespace())
                .find_map(|part| part.strip_prefix("timesteps=").and_then(|v| v.parse::<usize>().ok()));
            let hex = text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty() && !l.starts_with('#'))
                .ok_or_else(|| CliError::ConfigInvalid(format!("{} holds no seed", p.display())))?;
            (hex.to_string(), t)
        }
        (None, None) => return Err(CliError::ConfigInvalid("give --seed or --seed-file".into())),
    };
    let t = args.timesteps.or(file_t).unwrap_or(default_t);
    Seed::from_hex(&hex, width, t).map_err(|e| CliError::ConfigInvalid(format!("seed `{hex}`: {e}")))
}

fn cmd_parse(ctx: &Ctx, netlist: Option<PathBuf>) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let mut v = serde_json::to_value(n.stats()).map_err(failed)?;
    v["netlist_digest"] = json!(n.digest());
    print_json(&ctx.stamp(v))
}

fn cmd_graph(ctx: &Ctx, netlist: Option<PathBuf>) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let g = build_graph(&n);
    let names: Vec<&str> = n.nets().iter().map(|net| net.name.as_str()).collect();
    let v = json!({
        "nodes": g.node_count(),
        "names": names,
        "edges": g.edges(),
        "centrality": centrality_report(&g),
        "netlist_digest": n.digest(),
    });
    print_json(&ctx.stamp(v))
}

fn cmd_simulate(ctx: &Ctx, netlist: Option<PathBuf>, seed: &SeedArgs, mode: Mode, format: Format) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let seed = read_seed(seed, n.input_ids().len(), ctx.config.fuzz.timesteps)?;
    let mode = match mode {
        Mode::Zero => SimMode::ZeroDelay,
        Mode::Unit => SimMode::UnitDelay,
    };
    let wf = simulate_sequence_with(&n, &seed, mode).map_err(failed)?;
    match format {
        Format::Csv => emit(&format!("{}{}", provenance_comment(&ctx.digest(), ctx.seed()), wf.to_csv(&n))),
        Format::Json => {
            let mut v = wf.to_json(&n);
            v["seed_hex"] = json!(seed.to_hex());
            v["timesteps"] = json!(seed.timesteps());
            print_json(&ctx.stamp(v))
        }
    }
}

fn cmd_dataset(ctx: &Ctx, netlist: Option<PathBuf>) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let c = &ctx.config;
    let (samples, mut manifest) = match c.dataset_strategy {
        Strategy::CoverageGuided => generate_dataset(&n, &c.dataset, c.prng_seed),
        Strategy::Exhaustive => generate_exhaustive(&n, c.dataset.timesteps, c.dataset.split).map(|(s, mut m)| {
            m.rng_seed = c.prng_seed;
            (s, m)
        }),
    }
    .map_err(failed)?;
    manifest.config_digest = Some(ctx.digest());
    let path = c.paths.dataset.clone().unwrap_or_else(|| ctx.out.join("dataset.nfd"));
    write_atomic(&path, write_dataset(&manifest, &samples).as_bytes())?;
    let mut v = serde_json::to_value(&manifest).map_err(failed)?;
    v["path"] = json!(path.display().to_string());
    v["prng_seed"] = json!(ctx.seed());
    print_json(&v)
}

struct Checkpoint {
    model: GrnnModel,
    sidecar: ModelSidecar,
}

fn checkpoint_dir(ctx: &Ctx, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| ctx.config.paths.checkpoint.clone()).unwrap_or_else(|| ctx.out.join("checkpoint"))
}

fn load_checkpoint(dir: &Path, netlist: &Netlist) -> CliResult<Checkpoint> {
    let sidecar_path = dir.join("model.json");
    let sidecar: ModelSidecar = serde_json::from_str(&read_text(&sidecar_path)?)
        .with_context(|| format!("reading {}", sidecar_path.display()))
        .map_err(failed)?;
    let bytes = read_bytes(&dir.join("model.bin"))?;
    let model = load_model(&bytes, &sidecar).with_context(|| format!("loading {}", dir.display())).map_err(failed)?;
    match &sidecar.netlist_digest {
        Some(d) if *d != netlist.digest() => {
            return Err(CliError::DigestMismatch(format!(
                "checkpoint {} was trained on a different netlist",
                dir.display()
            )))
        }
        None => log::warn!("checkpoint {} does not record its netlist", dir.display()),
        _ => {}
    }
    Ok(Checkpoint { model, sidecar })
}

fn cmd_train(
    ctx: &Ctx,
    netlist: Option<PathBuf>,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    resume: bool,
) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let data_path = dataset.or_else(|| ctx.config.paths.dataset.clone()).unwrap_or_else(|| ctx.out.join("dataset.nfd"));
    let (manifest, samples) = read_dataset(&read_text(&data_path)?)
        .with_context(|| format!("reading {}", data_path.display()))
        .map_err(failed)?;
    if manifest.netlist_digest != n.digest() {
        return Err(CliError::DigestMismatch(format!(
            "{} was generated from a different netlist",
            data_path.display()
        )));
    }
    let (train_set, val_set, test_set) = split(&samples, manifest.split_ratios, manifest.rng_seed).map_err(failed)?;
    let graph = build_graph(&n);
    let adj = normalized_adjacency(&graph);
    let ckpt = checkpoint_dir(ctx, checkpoint);

    let outcome = if resume {
        let Checkpoint { mut model, .. } = load_checkpoint(&ckpt, &n)?;
        let state = load_train_state(&model, &read_bytes(&ckpt.join("train_state.bin"))?).map_err(failed)?;
        model.config.max_epochs = ctx.config.model.max_epochs;
        continue_training(&adj, model, state, &train_set, &val_set)
    } else {
        train(&adj, &train_set, &val_set, &ctx.config.model, ctx.seed())
    }
    .map_err(failed)?;

    let held_out = if test_set.is_empty() { &val_set } else { &test_set };
    let metrics = evaluate(&outcome.model, &adj, held_out).map_err(failed)?;

    let (bytes, mut sidecar) = save_model(&outcome.model);
    sidecar.netlist_digest = Some(n.digest());
    sidecar.config_digest = Some(ctx.digest());
    sidecar.prng_seed = Some(ctx.seed());
    write_atomic(&ckpt.join("model.bin"), &bytes)?;
    write_json(&ckpt.join("model.json"), &sidecar)?;
    write_atomic(&ckpt.join("train_state.bin"), &save_train_state(&outcome.model, &outcome.state))?;
    let csv = format!("{}{}", provenance_comment(&ctx.digest(), ctx.seed()), outcome.metrics_csv());
    write_atomic(&ctx.out.join("metrics.csv"), csv.as_bytes())?;

    let summary = ctx.stamp(json!({
        "epochs": outcome.state.epoch,
        "stopped_early": outcome.stopped_early,
        "best_val_loss": outcome.state.best_val_loss,
        "evaluated_on": if test_set.is_empty() { "validation" } else { "test" },
        "metrics": metrics,
        "split_counts": [train_set.len(), val_set.len(), test_set.len()],
        "dataset_config_digest": manifest.config_digest,
        "checkpoint": ckpt.display().to_string(),
    }));
    write_json(&ctx.out.join("train_summary.json"), &summary)?;
    print_json(&summary)
}

fn cmd_infer(
    ctx: &Ctx,
    netlist: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    seed: &SeedArgs,
    format: Format,
) -> CliResult<()> {
    let n = netlist_arg(ctx, netlist)?;
    let ckpt = load_checkpoint(&checkpoint_dir(ctx, checkpoint), &n)?;
    let seed = read_seed(seed, n.input_ids().len(), ctx.config.fuzz.timesteps)?;
    let graph = build_graph(&n);
    let adj = normalized_adjacency(&graph);
    let pred = infer(&ckpt.model, &graph, &adj, &seed).map_err(failed)?;
    let digest = ckpt.sidecar.config_digest.clone().unwrap_or_default();
    let prng = ckpt.sidecar.prng_seed.unwrap_or_default();
    match format {
        Format::Csv => emit(&format!("{}{}", provenance_comment(&digest, prng), pred.waveform.to_csv(&n))),
        Format::Json => {
            let mut v = pred.waveform.to_json(&n);
            v["confidence"] = json!(pred.confidence);
            v["seed_hex"] = json!(seed.to_hex());
            v["config_digest"] = json!(digest);
            v["prng_seed"] = json!(prng);
            print_json(&v)
        }
    }
}

/// Replaces `dir` with a directory holding one hex file per seed.
fn write_corpus(ctx: &Ctx, dir: &Path, report: &FuzzReport, width: usize) -> CliResult<()> {
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    let staging =
        tempfile::Builder::new().prefix(".corpus").tempdir_in(&ctx.out).context("creating staging directory")?;
    for entry in &report.corpus {
        let body = format!(
            "# config_digest={} prng_seed={} timesteps={} width={width}\n{}\n",
            report.config_digest, report.prng_seed, entry.timesteps, entry.seed_hex
        );
        fs::write(staging.path().join(format!("{:08}.hex", entry.id)), body).context("writing corpus seed")?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir).with_context(|| format!("removing old {}", dir.display()))?;
    }
    fs::rename(staging.keep(), dir).with_context(|| format!("moving corpus into {}", dir.display()))?;
    Ok(())
}

fn cmd_fuzz(ctx: &Ctx, netlist: Option<PathBuf>, dut: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let golden_net = netlist_arg(ctx, netlist)?;
    let dut_path = dut.or_else(|| ctx.config.paths.dut.clone());
    let dut_net = match &dut_path {
        Some(p) => load_netlist(p)?,
        None => golden_net.clone(),
    };
    let ckpt = match checkpoint {
        Some(dir) => Some(load_checkpoint(&dir, &dut_net)?),
        None => None,
    };
    let fc = &ctx.config.fuzz;
    let golden = GoldenModel::new(golden_net, fc.observe);
    let mut report = fuzz_loop(&dut_net, &golden, ckpt.as_ref().map(|c| &c.model), ctx.config.budget, fc, ctx.seed())
        .map_err(failed)?;
    report.config_digest = ctx.digest();

    let observability = if dut_path.is_some() {
        match exhaustively_observable(&golden, &dut_net, fc.match_mode, EXHAUSTIVE_INPUT_LIMIT).map_err(failed)? {
            Some(true) => Observability::ObservableVerified,
            Some(false) => Observability::UnobservableVerified,
            None => Observability::Unchecked,
        }
    } else {
        Observability::Unchecked
    };
    let bugs = BugReport::from_fuzz(&report, observability, None);

    write_json(&ctx.out.join("fuzz_report.json"), &report)?;
    write_json(&ctx.out.join("bug_report.json"), &bugs)?;
    let csv = format!("{}{}", provenance_comment(&report.config_digest, report.prng_seed), report.coverage_csv());
    write_atomic(&ctx.out.join("coverage.csv"), csv.as_bytes())?;
    write_corpus(ctx, &ctx.out.join("corpus"), &report, dut_net.input_ids().len())?;

    print_json(&ctx.stamp(json!({
        "executed": report.executed,
        "final_coverage": report.final_coverage(),
        "corpus_size": report.corpus_size,
        "discrepancies": report.discrepancy_count,
        "groups": bugs.groups.len(),
        "observability": observability,
        "report": ctx.out.join("fuzz_report.json").display().to_string(),
    })))
}

fn parse_fault(spec: &str) -> CliResult<FaultKind> {
    let bad = || CliError::ConfigInvalid(format!("unknown fault `{spec}`; use sa0, sa1, gate:<KIND> or invert:<PIN>"));
    match spec.split_once(':') {
        None if spec.eq_ignore_ascii_case("sa0") => Ok(FaultKind::StuckAt0),
        None if spec.eq_ignore_ascii_case("sa1") => Ok(FaultKind::StuckAt1),
        Some(("gate", kind)) => GateKind::from_name(&kind.to_ascii_uppercase())
            .map(|replacement| FaultKind::GateSubstitution { replacement })
            .ok_or_else(bad),
        Some(("invert", pin)) => pin.parse().map(|pin| FaultKind::InputInversion { pin }).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn cmd_inject(ctx: &Ctx, netlist: Option<PathBuf>, net: &str, fault: &str, output: Option<PathBuf>) -> CliResult<()> {
    let path = resolve(netlist, &ctx.config.paths.netlist, "netlist")?;
    let n = load_netlist(&path)?;
    let kind = parse_fault(fault)?;
    let spec = FaultSpec::on(&n, net, kind).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let faulted = inject_fault(&n, spec).map_err(failed)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("netlist");
    let out_path = output.unwrap_or_else(|| ctx.out.join(format!("{stem}_faulted.bench")));
    let mut fault_json = serde_json::to_value(kind).map_err(failed)?;
    fault_json["net"] = json!(net);
    let text =
        format!("{}# fault: {fault_json}\n{}", provenance_comment(&ctx.digest(), ctx.seed()), faulted.to_bench());
    write_atomic(&out_path, text.as_bytes())?;
    print_json(&ctx.stamp(json!({
        "output": out_path.display().to_string(),
        "fault": fault_json,
        "netlist_digest": faulted.digest(),
    })))
}

/// Digest and PRNG seed recorded in an artifact of any kind.
fn artifact_provenance(path: &Path) -> CliResult<(Option<String>, Option<u64>, Option<Value>)> {
    let text = read_text(path)?;
    if let Some((d, s)) = parse_provenance_comment(&text) {
        return Ok((Some(d), Some(s), None));
    }
    let first = text.lines().next().unwrap_or("");
    let value: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => serde_json::from_str(first)
            .map_err(|_| CliError::ConfigInvalid(format!("{} is not a recognised artifact", path.display())))?,
    };
    let digest = value.get("config_digest").and_then(Value::as_str).map(str::to_string);
    let seed = value.get("prng_seed").and_then(Value::as_u64).or_else(|| value.get("rng_seed").and_then(Value::as_u64));
    Ok((digest, seed, Some(value)))
}

fn cmd_report(ctx: &Ctx, have_config: bool, artifacts: &[PathBuf]) -> CliResult<()> {
    let mut reference: Option<(String, &Path)> = have_config.then(|| (ctx.digest(), Path::new("--config")));
    let mut fuzz: Option<FuzzReport> = None;
    let mut bugs: Option<BugReport> = None;
    for path in artifacts {
        let (digest, _seed, value) = artifact_provenance(path)?;
        let digest =
            digest.ok_or_else(|| CliError::DigestMismatch(format!("{} records no config digest", path.display())))?;
        match &reference {
            Some((d, origin)) if *d != digest => {
                return Err(CliError::DigestMismatch(format!(
                    "{} has {digest} but {} has {d}",
                    path.display(),
                    origin.display()
                )))
            }
            Some(_) => {}
            None => reference = Some((digest, path.as_path())),
        }
        if let Some(v) = value {
            if v.get("coverage_series").is_some() {
                fuzz = Some(serde_json::from_value(v).with_context(|| format!("reading {}", path.display()))?);
            } else if v.get("groups").is_some() && v.get("totals").is_some() {
                bugs = Some(serde_json::from_value(v).with_context(|| format!("reading {}", path.display()))?);
            }
        }
    }
    let bugs = bugs.or_else(|| fuzz.as_ref().map(|f| BugReport::from_fuzz(f, Observability::Unchecked, None)));
    if let Some(f) = &fuzz {
        emit(&format!(
            "executed {} seeds, final coverage {:.2}%, corpus {} seeds, score {:.4}\n",
            f.executed,
            f.final_coverage(),
            f.corpus_size,
            f.final_score
        ))?;
        let csv = format!("{}{}", provenance_comment(&f.config_digest, f.prng_seed), f.coverage_csv());
        let path = ctx.out.join("coverage_series.csv");
        write_atomic(&path, csv.as_bytes())?;
        emit(&format!("coverage series written to {}\n", path.display()))?;
    }
    match bugs {
        Some(b) => emit(&b.summary()),
        None => {
            let (d, _) = reference.expect("at least one artifact");
            emit(&format!("{} artifact(s) agree on config digest {d}\n", artifacts.len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_specs_parse() {
        assert_eq!(parse_fault("sa0").unwrap(), FaultKind::StuckAt0);
        assert_eq!(parse_fault("SA1").unwrap(), FaultKind::StuckAt1);
        assert_eq!(parse_fault("gate:nor").unwrap(), FaultKind::GateSubstitution { replacement: GateKind::Nor });
        assert_eq!(parse_fault("invert:1").unwrap(), FaultKind::InputInversion { pin: 1 });
        assert!(matches!(parse_fault("gate:FOO"), Err(CliError::ConfigInvalid(_))));
        assert!(matches!(parse_fault("flip"), Err(CliError::ConfigInvalid(_))));
    }
}
