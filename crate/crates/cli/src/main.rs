use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mpabr_core::codec::{cell_from_hex, decode_cell, dump_cell, encode_cell, CellHeader, WireFields};
use mpabr_core::engine::{simulate, SimOptions};
use mpabr_core::fairness::Definition;
use mpabr_core::model::Direction;
use mpabr_core::report::{compare, fairness_table, run_summary};
use mpabr_core::scenario::{parse_rate, parse_time, Scenario};

#[derive(Parser)]
#[command(name = "mpabr", version, about = "Multipoint ABR flow-control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement window, e.g. `2..3.5` or `2s..3500ms`.
    #[arg(long)]
    window: Option<String>,
    /// Quantize every stamped ER through the 16-bit rate format.
    #[arg(long)]
    quantize: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write trace, metrics and summary.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the four max-min allocations of a scenario.
    Fairness {
        scenario: PathBuf,
        /// Also write `fairness.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and compare steady-state throughputs against an oracle allocation.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// source, vc-source, flow or vc-flow.
        #[arg(long, default_value = "source")]
        definition: String,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Decode a 53-byte RM cell given as hex, or encode one with --encode.
    Cell {
        hex: Option<String>,
        #[arg(long)]
        encode: bool,
        #[arg(long, default_value = "forward")]
        dir: String,
        #[arg(long, default_value = "0")]
        er: String,
        #[arg(long, default_value = "0")]
        ccr: String,
        #[arg(long, default_value = "0")]
        mcr: String,
        #[arg(long)]
        ci: bool,
        #[arg(long)]
        ni: bool,
        #[arg(long)]
        bn: bool,
        #[arg(long, default_value_t = 0)]
        seq: u32,
        #[arg(long, default_value_t = 32)]
        vci: u16,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

/// Failure carrying its exit status; 1 for a failed check, 2 for bad input.
struct Fail(u8, anyhow::Error);

impl From<anyhow::Error> for Fail {
    fn from(e: anyhow::Error) -> Self {
        Fail(2, e)
    }
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // A run summary embeds its scenario and can be replayed as is.
    if text.lines().any(|l| l.starts_with("scenario:")) {
        return Scenario::from_summary(&text).map_err(|e| anyhow!("{e}"));
    }
    Scenario::parse(&text).map_err(|e| anyhow!("{e}"))
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("window must look like START..END, got '{s}'"))?;
    let a = parse_time(a).map_err(|e| anyhow!(e))?;
    let b = parse_time(b).map_err(|e| anyhow!(e))?;
    Ok((a, b))
}

fn apply(sc: &mut Scenario, flags: &RunFlags) -> Result<()> {
    if let Some(s) = flags.seed {
        sc.run.seed = s;
    }
    if let Some(w) = &flags.window {
        let (a, b) = parse_window(w)?;
        if !(0.0 <= a && a < b && b <= sc.run.duration) {
            bail!("window {a} .. {b} lies outside the run [0, {}]", sc.run.duration);
        }
        sc.run.window = Some((a, b));
    }
    if flags.quantize {
        sc.run.quantize = true;
    }
    Ok(())
}

fn cmd_run(path: &Path, flags: &RunFlags, out: &Path) -> Result<()> {
    let mut sc = load(path)?;
    apply(&mut sc, flags)?;
    let c = sc.compile().map_err(|e| anyhow!("{e}"))?;
    let r = simulate(&c, SimOptions { keep_trace: true });
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let summary = run_summary(&sc, &c, &r);
    fs::write(out.join("trace.bin"), r.trace.as_deref().unwrap_or(&[]))?;
    fs::write(out.join("metrics.csv"), r.metrics.series.to_csv())?;
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_compare(path: &Path, flags: &RunFlags, definition: &str, epsilon: Option<f64>) -> Result<bool, Fail> {
    let def = Definition::parse(definition)
        .ok_or_else(|| anyhow!("unknown definition '{definition}' (source, vc-source, flow, vc-flow)"))?;
    let mut sc = load(path)?;
    apply(&mut sc, flags)?;
    if let Some(e) = epsilon {
        sc.run.epsilon = e;
    }
    let c = sc.compile().map_err(|e| anyhow!("{e}"))?;
    let r = simulate(&c, SimOptions::default());
    let report = compare(&c, &r, def, c.run.epsilon, c.run.window()).map_err(|e| anyhow!("{e}"))?;
    print!("{report}");
    Ok(report.pass)
}

fn rate_arg(s: &str) -> Result<f64> {
    parse_rate(s).map_err(|e| anyhow!(e))
}

#[allow(clippy::too_many_arguments)]
fn cmd_cell(
    hex: Option<&str>,
    encode: bool,
    dir: &str,
    er: &str,
    ccr: &str,
    mcr: &str,
    (ci, ni, bn): (bool, bool, bool),
    seq: u32,
    vci: u16,
) -> Result<(), Fail> {
    if encode {
        let dir = match dir {
            "forward" | "f" => Direction::Forward,
            "backward" | "b" => Direction::Backward,
            d => return Err(anyhow!("dir must be forward or backward, got '{d}'").into()),
        };
        let fields = WireFields {
            dir,
            bn,
            ci,
            ni,
            ra: false,
            er: rate_arg(er)?,
            ccr: rate_arg(ccr)?,
            mcr: rate_arg(mcr)?,
            queue_len: 0,
            seq,
        };
        let cell = encode_cell(&fields, CellHeader::for_vci(vci));
        println!("{}", mpabr_core::codec::cell_to_hex(&cell));
        return Ok(());
    }
    let hex = hex.ok_or_else(|| anyhow!("give a cell as hex, or use --encode"))?;
    let bytes = cell_from_hex(hex).map_err(|e| anyhow!("{e}"))?;
    match decode_cell(&bytes) {
        Ok((h, f)) => {
            print!("{}", dump_cell(&h, &f));
            Ok(())
        }
        Err(e) => Err(Fail(1, anyhow!("{e}"))),
    }
}

fn cmd_fairness(path: &Path, out: Option<&Path>) -> Result<()> {
    let c = load(path)?.compile().map_err(|e| anyhow!("{e}"))?;
    let t = fairness_table(&c).map_err(|e| anyhow!("{e}"))?;
    print!("{t}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("fairness.csv"), t.to_csv())?;
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let sc = load(path)?;
    let c = sc.compile().map_err(|e| anyhow!("{e}"))?;
    let m = &c.model;
    println!("status: ok");
    println!("nodes: {}", m.node_count());
    println!("links: {}", m.links().len());
    println!("vcs: {}", m.vcs().len());
    println!("sources: {}", m.sources().len());
    for vc in m.vcs() {
        for (node, roles) in m.topology(vc.id).all_roles() {
            println!("roles.{}.{}: {roles}", vc.name, m.node_name(*node));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res: Result<(), Fail> = match &cli.cmd {
        Cmd::Run { scenario, flags, out } => cmd_run(scenario, flags, out).map_err(Fail::from),
        Cmd::Fairness { scenario, out } => cmd_fairness(scenario, out.as_deref()).map_err(Fail::from),
        Cmd::Compare {
            scenario,
            flags,
            definition,
            epsilon,
        } => cmd_compare(scenario, flags, definition, *epsilon).and_then(|pass| {
            if pass {
                Ok(())
            } else {
                Err(Fail(1, anyhow!("comparison failed")))
            }
        }),
        Cmd::Cell {
            hex,
            encode,
            dir,
            er,
            ccr,
            mcr,
            ci,
            ni,
            bn,
            seq,
            vci,
        } => cmd_cell(hex.as_deref(), *encode, dir, er, ccr, mcr, (*ci, *ni, *bn), *seq, *vci),
        Cmd::Validate { scenario } => cmd_validate(scenario).map_err(Fail::from),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, e)) => {
            for line in format!("{e:#}").lines() {
                eprintln!("error: {line}");
            }
            ExitCode::from(code)
        }
    }
}
