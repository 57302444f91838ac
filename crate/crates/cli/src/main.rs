use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pzid::freqresp::{parse_csv, parse_touchstone};
use pzid::netsim::{analytic_poles, frequency_response, parse_netlist};
use pzid::ratfit::{fit, FitConfig, ModelDocument, RationalModel};
use pzid::render::{render_pole_map, PoleMapData, PoleMapStyle};
use pzid::staban::{auto_identify, RhoMatrix, StabConfig};
use pzid::sweeps::{
    monte_carlo_cloud, proviso_scan, stabilization_threshold, trace_pole_locus, Perturbation, Spread, SpiralPath,
    SweepConfig,
};
use pzid::{Error, FrequencyGrid, FrequencyResponseSet, Netlist, ProbeSpec};

const SYNOPSIS: &str = "\
usage: pzid <command> [options]

  synth     --netlist F --probe P --fstart HZ --fstop HZ --points N --out F
  fit       --in F --order N --method vf|poly --iters N --out F
  stability --in F --orders LO:HI --rho-floor X --cancel-tol X --report F [--svg F] [--fail-on-unstable]
  rho       --model F --out F
  locus     --netlist F --probe P --param NAME --values LO:HI:N[:log] --out F [--svg F]
  threshold --netlist F --probe P --param NAME --lo X --hi X --tol X
  mc        --netlist F --probe P --sigma X --trials N --seed N --out F [--svg F]
  spiral    --turns N --points N --rmax X --out F
  proviso   --netlist F --port NAME --probe P --turns N --points N --report F

  P is inode:<n> | vbranch:<e> | modal:<n1>@<deg1>,<n2>@<deg2>
  maps show the upper half plane unless --full-plane is given
";

/// Version of the JSON envelope every report is wrapped in.
const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "pzid", version, about = "Pole-zero identification and stability analysis")]
struct Cli {
    /// Plot conjugate poles and zeros as well.
    #[arg(long, global = true)]
    full_plane: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a netlist's probe response into a CSV.
    Synth {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long)]
        probe: String,
        #[arg(long)]
        fstart: f64,
        #[arg(long)]
        fstop: f64,
        #[arg(long)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Spacing::Lin)]
        spacing: Spacing,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a rational model to a response file.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Method::Vf)]
        method: Method,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Order scan, rho analysis and stability verdict for a response file.
    Stability {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "0:20")]
        orders: String,
        #[arg(long)]
        rho_floor: Option<f64>,
        #[arg(long)]
        cancel_tol: Option<f64>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        fail_on_unstable: bool,
    },
    /// Residue factor of every port for every pole pair of a fitted model.
    Rho {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pole loci over an element sweep.
    Locus {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[command(flatten)]
        sweep: SweepOpts,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Element value at which the probed poles cross the imaginary axis.
    Threshold {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[command(flatten)]
        sweep: SweepOpts,
    },
    /// Monte Carlo pole cloud under element tolerances.
    Mc {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = SpreadArg::Uniform)]
        spread: SpreadArg,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sweep: SweepOpts,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Reflection-coefficient spiral from the matched load to the short.
    Spiral {
        #[arg(long)]
        turns: u32,
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 0.999)]
        rmax: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability of an internal probe under open, short and spiral loads on a port.
    Proviso {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        port: String,
        #[arg(long)]
        turns: u32,
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 0.999)]
        rmax: f64,
        #[arg(long)]
        orders: Option<String>,
        #[command(flatten)]
        sweep: SweepOpts,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    netlist: PathBuf,
    #[arg(long)]
    probe: String,
}

/// Grid and fit order for commands that simulate a netlist. Missing values
/// are derived from the nominal netlist's natural frequencies.
#[derive(Args)]
struct SweepOpts {
    #[arg(long)]
    fstart: Option<f64>,
    #[arg(long)]
    fstop: Option<f64>,
    #[arg(long = "grid-points", default_value_t = 300)]
    grid_points: usize,
    #[arg(long, value_enum, default_value_t = Spacing::Log)]
    spacing: Spacing,
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spacing {
    Lin,
    Log,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Vf,
    Poly,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpreadArg {
    Uniform,
    Gaussian,
}

/// A failed run: exit code and message.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::Invalid(_)
            | Error::Unknown { .. }
            | Error::UnsupportedParameter(_)
            | Error::Io(_) => 2,
            _ => 3,
        };
        Failure { code, msg: e.to_string() }
    }
}

type Run = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}\n{SYNOPSIS}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            if f.code == 2 {
                eprint!("\n{SYNOPSIS}");
            }
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn load_netlist(path: &Path) -> Result<Netlist, Failure> {
    Ok(parse_netlist(&read(path)?)?)
}

fn parse_probe(s: &str) -> Result<ProbeSpec, Failure> {
    Ok(s.parse::<ProbeSpec>()?)
}

/// Touchstone when the extension looks like `.sNp`, canonical CSV otherwise.
fn load_response(path: &Path) -> Result<FrequencyResponseSet, Failure> {
    let text = read(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let touchstone = ext.len() >= 3 && ext.starts_with('s') && ext.ends_with('p') && ext[1..ext.len() - 1].chars().all(|c| c.is_ascii_digit());
    Ok(if touchstone { parse_touchstone(&text)? } else { parse_csv(&text)? })
}

fn make_grid(fstart: f64, fstop: f64, points: usize, spacing: Spacing) -> Result<FrequencyGrid, Failure> {
    Ok(match spacing {
        Spacing::Lin => FrequencyGrid::linear(fstart, fstop, points)?,
        Spacing::Log => FrequencyGrid::logarithmic(fstart, fstop, points)?,
    })
}

fn parse_range(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::usage(format!("expected LO:HI, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_values(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::usage(format!("expected LO:HI:N[:log], got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if !(parts.len() == 3 || (parts.len() == 4 && parts[3] == "log")) {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    let log = parts.len() == 4;
    if n < 2 || !(hi > lo) || (log && !(lo > 0.0)) {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if i == n - 1 {
                hi
            } else if log {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect())
}

/// Grid and fit template for a netlist, with the resolved values for logging.
fn resolve_sweep(net: &Netlist, o: &SweepOpts) -> Result<(SweepConfig, Value), Failure> {
    let need_poles = o.fstart.is_none() || o.fstop.is_none() || o.order.is_none();
    let poles = if need_poles { analytic_poles(net)?.poles } else { Vec::new() };
    let mags: Vec<f64> = poles.iter().map(|p| p.norm()).filter(|m| *m > 0.0).collect();
    let band = || -> Result<(f64, f64), Failure> {
        if mags.is_empty() {
            return Err(Failure::usage("netlist has no finite natural frequencies; give --fstart and --fstop"));
        }
        let tau = std::f64::consts::TAU;
        let lo = mags.iter().copied().fold(f64::INFINITY, f64::min) / tau;
        let hi = mags.iter().copied().fold(0.0, f64::max) / tau;
        Ok((lo / 10.0, hi * 10.0))
    };
    let fstart = match o.fstart {
        Some(f) => f,
        None => band()?.0,
    };
    let fstop = match o.fstop {
        Some(f) => f,
        None => band()?.1,
    };
    let order = match o.order {
        Some(n) => n,
        None if poles.is_empty() => return Err(Failure::usage("netlist has no natural frequencies; give --order")),
        None => poles.len(),
    };
    let grid = make_grid(fstart, fstop, o.grid_points, o.spacing)?;
    let fit = FitConfig::vf(order);
    let logged = json!({
        "fstart_hz": fstart,
        "fstop_hz": fstop,
        "points": o.grid_points,
        "spacing": spacing_name(o.spacing),
        "fit": fit,
    });
    Ok((SweepConfig::new(grid, fit), logged))
}

fn spacing_name(s: Spacing) -> &'static str {
    match s {
        Spacing::Lin => "lin",
        Spacing::Log => "log",
    }
}

fn envelope(command: &str, config: Value, result: Value) -> Result<String, Failure> {
    let v = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Failure { code: 3, msg: e.to_string() })?;
    s.push('\n');
    Ok(s)
}

fn to_value<T: serde::Serialize>(t: &T) -> Result<Value, Failure> {
    serde_json::to_value(t).map_err(|e| Failure { code: 3, msg: e.to_string() })
}

/// `# key=value` header lines for CSV outputs.
fn csv_header(command: &str, config: &Value) -> String {
    let mut out = format!("# pzid {command}\n");
    if let Value::Object(m) = config {
        for (k, v) in m {
            out.push_str(&format!("# {k}={v}\n"));
        }
    }
    out
}

fn style(full_plane: bool) -> PoleMapStyle {
    PoleMapStyle { full_plane, ..Default::default() }
}

fn run(cli: Cli) -> Run {
    let full_plane = cli.full_plane;
    match cli.cmd {
        Command::Synth { netlist, probe, fstart, fstop, points, spacing, out } => {
            let net = load_netlist(&netlist)?;
            let p = parse_probe(&probe)?;
            let grid = make_grid(fstart, fstop, points, spacing)?;
            let resp = frequency_response(&net, &p, &grid)?;
            let cfg = json!({
                "netlist": netlist.display().to_string(),
                "probe": p.to_string(),
                "fstart_hz": fstart,
                "fstop_hz": fstop,
                "points": points,
                "spacing": spacing_name(spacing),
            });
            write(&out, &(csv_header("synth", &cfg) + &resp.to_csv()))?;
            Ok(0)
        }
        Command::Fit { input, order, method, iters, out } => {
            let resp = load_response(&input)?;
            let mut fc = match method {
                Method::Vf => FitConfig::vf(order),
                Method::Poly => FitConfig::poly(order),
            };
            if let Some(n) = iters {
                fc = fc.with_iters(n);
            }
            let (model, report) = fit(&resp, &fc)?;
            let doc = ModelDocument::new(order, model, Some(report));
            let cfg = json!({ "input": input.display().to_string(), "fit": fc });
            write(&out, &envelope("fit", cfg, to_value(&doc)?)?)?;
            Ok(0)
        }
        Command::Stability { input, orders, rho_floor, cancel_tol, report, svg, fail_on_unstable } => {
            let resp = load_response(&input)?;
            let (lo, hi) = parse_range(&orders)?;
            let mut cfg = StabConfig::default().with_orders(lo..=hi);
            if let Some(x) = rho_floor {
                cfg.rho_floor = x;
            }
            if let Some(x) = cancel_tol {
                cfg.cancel_tol = x;
            }
            let verdict = auto_identify(&resp, &cfg)?;
            let logged = json!({
                "input": input.display().to_string(),
                "stability": cfg,
                "fail_on_unstable": fail_on_unstable,
                "full_plane": full_plane,
            });
            write(&report, &envelope("stability", logged, to_value(&verdict)?)?)?;
            if let Some(path) = svg {
                write(&path, &render_pole_map(&PoleMapData::from_verdict(&verdict), &style(full_plane)))?;
            }
            Ok(if fail_on_unstable && !verdict.stable { 1 } else { 0 })
        }
        Command::Rho { model, out } => {
            let text = read(&model)?;
            // Accept the fit envelope or a bare model document.
            let inner = match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(mut m)) if m.contains_key("result") => m.remove("result").unwrap_or(Value::Null).to_string(),
                Ok(_) => text,
                Err(e) => return Err(Failure::usage(format!("{}: {e}", model.display()))),
            };
            let doc = ModelDocument::from_json(&inner)?;
            let pf = match doc.model {
                RationalModel::Vf(m) => m,
                RationalModel::Poly(_) => return Err(Failure::usage("rho needs a partial-fraction (vf) model")),
            };
            let rho = RhoMatrix::compute(&pf);
            let cfg = json!({ "model": model.display().to_string() });
            write(&out, &envelope("rho", cfg, to_value(&rho)?)?)?;
            Ok(0)
        }
        Command::Locus { target, param, values, sweep, out, svg } => {
            let net = load_netlist(&target.netlist)?;
            let p = parse_probe(&target.probe)?;
            let vals = parse_values(&values)?;
            let (scfg, logged) = resolve_sweep(&net, &sweep)?;
            let traj = trace_pole_locus(&net, &p, &param, &vals, &scfg)?;
            let cfg = json!({
                "netlist": target.netlist.display().to_string(),
                "probe": p.to_string(),
                "param": param,
                "values": values,
                "sweep": logged,
            });
            let mut text = csv_header("locus", &cfg);
            for c in &traj.crossing_events {
                text.push_str(&format!(
                    "# crossing track={} param={:?} pole={:?}{:+?}j into_lhp={}\n",
                    c.track, c.param, c.pole.re, c.pole.im, c.into_lhp
                ));
            }
            for (k, why) in &traj.failures {
                text.push_str(&format!("# failed step={k} {why}\n"));
            }
            text.push_str(&traj.to_csv());
            write(&out, &text)?;
            if let Some(path) = svg {
                write(&path, &render_pole_map(&PoleMapData::from_trajectory(&traj), &style(full_plane)))?;
            }
            Ok(0)
        }
        Command::Threshold { target, param, lo, hi, tol, sweep } => {
            let net = load_netlist(&target.netlist)?;
            let p = parse_probe(&target.probe)?;
            let (scfg, logged) = resolve_sweep(&net, &sweep)?;
            let th = stabilization_threshold(&net, &p, &param, lo, hi, tol, &scfg)?;
            let cfg = json!({
                "netlist": target.netlist.display().to_string(),
                "probe": p.to_string(),
                "param": param,
                "lo": lo,
                "hi": hi,
                "tol": tol,
                "sweep": logged,
            });
            print!("{}", envelope("threshold", cfg, to_value(&th)?)?);
            Ok(0)
        }
        Command::Mc { target, sigma, spread, trials, seed, sweep, out, svg } => {
            let net = load_netlist(&target.netlist)?;
            let p = parse_probe(&target.probe)?;
            let (scfg, logged) = resolve_sweep(&net, &sweep)?;
            let mut pert = Perturbation::uniform(sigma);
            pert.spread = match spread {
                SpreadArg::Uniform => Spread::Uniform,
                SpreadArg::Gaussian => Spread::Gaussian,
            };
            let cloud = monte_carlo_cloud(&net, &p, &pert, trials, seed, &scfg)?;
            let cfg = json!({
                "netlist": target.netlist.display().to_string(),
                "probe": p.to_string(),
                "perturbation": pert,
                "trials": trials,
                "seed": seed,
                "sweep": logged,
            });
            let mut text = csv_header("mc", &cfg);
            if let Some(m) = &cloud.margin_stats {
                text.push_str(&format!(
                    "# margin max_re={:?} min_damping={:?} fraction_unstable={:?}\n",
                    m.max_re, m.min_damping, m.fraction_unstable
                ));
            }
            for (k, why) in &cloud.skipped {
                text.push_str(&format!("# skipped trial={k} {why}\n"));
            }
            text.push_str(&cloud.to_csv());
            write(&out, &text)?;
            if let Some(path) = svg {
                write(&path, &render_pole_map(&PoleMapData::from_cloud(&cloud), &style(full_plane)))?;
            }
            Ok(0)
        }
        Command::Spiral { turns, points, rmax, out } => {
            let path = SpiralPath::new(turns, points, rmax)?;
            let cfg = json!({ "turns": turns, "points": points, "rmax": rmax });
            write(&out, &(csv_header("spiral", &cfg) + &path.to_csv()))?;
            Ok(0)
        }
        Command::Proviso { target, port, turns, points, rmax, orders, sweep, report } => {
            let net = load_netlist(&target.netlist)?;
            let p = parse_probe(&target.probe)?;
            let (scfg, logged) = resolve_sweep(&net, &sweep)?;
            let (lo, hi) = match &orders {
                Some(s) => parse_range(s)?,
                None => (0, scfg.fit.order + 2),
            };
            let stab = StabConfig::default().with_orders(lo..=hi);
            let spiral = SpiralPath::new(turns, points, rmax)?;
            let rep = proviso_scan(&net, &port, &p, &spiral, &scfg.grid, &stab)?;
            let cfg = json!({
                "netlist": target.netlist.display().to_string(),
                "probe": p.to_string(),
                "port": port,
                "turns": turns,
                "points": points,
                "rmax": rmax,
                "sweep": logged,
                "stability": stab,
            });
            write(&report, &envelope("proviso", cfg, to_value(&rep)?)?)?;
            Ok(0)
        }
    }
}
