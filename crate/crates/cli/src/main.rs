use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use mceb::calibrator::{mceb_analyze, mceb_linear, results_csv, PreparedData};
use mceb::config::{RunConfig, TargetKind};
use mceb::fourier::theta_from_parts;
use mceb::functional::{calibrated_delta_functional, EbTarget};
use mceb::modulus::{hardest_prior_table, ModulusProblem};
use mceb::pilot::PilotMarginal;
use mceb::simulation::{coverage_csv, run_coverage, CoverageSpec, Scenario, TargetGrid};
use mceb::tuning::{evaluate_delta, trace_csv};
use mceb::Error;

#[derive(Parser)]
#[command(name = "mceb", version, about = "Bias-aware confidence intervals for empirical Bayes targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intervals for the configured target from a CSV of z-scores.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// CSV with a `z` column; defaults to the config's `input`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Defaults to the config's `output`, else stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Coverage study on a known prior.
    Simulate {
        #[arg(long, default_value = "bimodal")]
        scenario: String,
        #[arg(long, default_value_t = 2000)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// `posterior_mean` or `lfsr`.
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated evaluation points.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        /// Optional run configuration for the class, bins and pipeline settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Modulus trace over a delta grid, with the hardest priors at each delta.
    ModulusDiag {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        /// `lo:hi:n` for n log-spaced values, or a comma-separated list.
        #[arg(long)]
        deltas: String,
        /// Data for the pilot; without it the config needs `oracle_prior`, `c_m` and `--m`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sample size behind the oracle pilot.
        #[arg(long)]
        m: Option<usize>,
        /// Use the full class instead of the localized one.
        #[arg(long)]
        unlocalized: bool,
        #[arg(long)]
        output: PathBuf,
        /// Hardest-prior CSV; defaults to `<output stem>_hardest.csv`.
        #[arg(long)]
        hardest: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Analyze { config, input, output } => analyze(&config, input, output),
        Command::Simulate { scenario, m, reps, alpha, seed, target, x, config, output } => {
            simulate(SimulateArgs { scenario, m, reps, alpha, seed, target, x, config, output })
        }
        Command::ModulusDiag { config, target, x, deltas, input, m, unlocalized, output, hardest } => {
            modulus_diag(DiagArgs { config, target, x, deltas, input, m, unlocalized, output, hardest })
        }
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::EmptyLocalizedClass { .. }) = e.downcast_ref::<Error>() {
                eprintln!("hint: set a larger `c_m` in the config");
            }
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    RunConfig::from_json(&text).with_context(|| format!("config {}", path.display()))
}

/// Reads the `z` column of a CSV; `#` lines are comments.
fn read_z_scores(path: &Path) -> Result<Vec<f64>> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {name}"))?;
    let headers = reader.headers().with_context(|| format!("{name}: reading header"))?.clone();
    let column = headers.iter().position(|h| h == "z").ok_or_else(|| {
        let line = headers.position().map_or(1, |p| p.line());
        anyhow!("{name}: line {line}: expected a header with a `z` column, found `{}`", headers.iter().collect::<Vec<_>>().join(","))
    })?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("{name}: malformed CSV"))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(column).unwrap_or("");
        let z: f64 = field.parse().map_err(|_| anyhow!("{name}: line {line}: `{field}` is not a number"))?;
        if !z.is_finite() {
            bail!("{name}: line {line}: `{field}` is not finite");
        }
        out.push(z);
    }
    Ok(out)
}

fn header(command: &str, seed: u64, entries: &[(&str, String)]) -> String {
    let mut out = format!("# mceb {command}\n# seed: {seed}\n");
    for (key, value) in entries {
        let _ = writeln!(out, "# {key}: {value}");
    }
    out
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(config: &Path, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let input = input
        .or_else(|| cfg.input.as_ref().map(PathBuf::from))
        .ok_or_else(|| anyhow!("no input: pass --input or set `input` in the config"))?;
    let output = output.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let samples = read_z_scores(&input)?;
    let disc = cfg.discretization()?;
    let opts = cfg.pipeline_options()?;
    let results = match cfg.target.target.eb_kind() {
        Some(kind) => mceb_analyze(&samples, &disc, &cfg.target.x, kind, &opts)?,
        None => cfg
            .target
            .x
            .iter()
            .map(|&x| {
                let f = cfg.target.target.linear(x).expect("linear target");
                mceb_linear(&samples, &disc, &f, &opts)
            })
            .collect::<mceb::Result<Vec<_>>>()?,
    };
    let text = header("analyze", cfg.seed, &[("config", cfg.to_json()), ("input", input.display().to_string())])
        + &results_csv(&results);
    emit(output.as_deref(), &text)
}

struct SimulateArgs {
    scenario: String,
    m: usize,
    reps: usize,
    alpha: Option<f64>,
    seed: Option<u64>,
    target: Option<String>,
    x: Option<Vec<f64>>,
    config: Option<PathBuf>,
    output: Option<PathBuf>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scenario = Scenario::parse(&args.scenario)?;
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::from_json(r#"{"target":{"target":"posterior_mean","x":[-2,-1,0,1,2]}}"#)?,
    };
    if let Some(t) = &args.target {
        cfg.target.target = TargetKind::parse(t)?;
        if args.x.is_none() && args.config.is_none() && cfg.target.target == TargetKind::Lfsr {
            cfg.target.x = vec![-1.5, 0.0, 1.5];
        }
    }
    if let Some(x) = args.x {
        cfg.target.x = x;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let kind = cfg
        .target
        .target
        .eb_kind()
        .ok_or_else(|| anyhow!("simulate supports the lfsr and posterior_mean targets"))?;
    let spec = CoverageSpec {
        scenario,
        m: args.m,
        reps: args.reps,
        targets: vec![TargetGrid { kind, xs: cfg.target.x.clone() }],
    };
    let rows = run_coverage(&spec, &cfg.discretization()?, &cfg.pipeline_options()?)?;
    let text = header(
        "simulate",
        cfg.seed,
        &[("config", cfg.to_json()), ("study", serde_json::to_string(&spec)?)],
    ) + &coverage_csv(&rows);
    emit(args.output.as_deref(), &text)
}

struct DiagArgs {
    config: PathBuf,
    target: Option<String>,
    x: Option<f64>,
    deltas: String,
    input: Option<PathBuf>,
    m: Option<usize>,
    unlocalized: bool,
    output: PathBuf,
    hardest: Option<PathBuf>,
}

fn parse_deltas(spec: &str) -> Result<Vec<f64>> {
    let bad = || anyhow!("--deltas expects `lo:hi:n` or a comma-separated list, got `{spec}`");
    let deltas: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 || !(lo > 0.0 && hi >= lo) {
            bail!("--deltas needs 0 < lo <= hi and n >= 1");
        }
        if n == 1 {
            vec![lo]
        } else {
            let step = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo * (step * i as f64).exp() }).collect()
        }
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        bail!("deltas must be positive");
    }
    Ok(deltas)
}

fn hardest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}_hardest.csv"))
}

fn modulus_diag(args: DiagArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(t) = &args.target {
        cfg.target.target = TargetKind::parse(t)?;
    }
    if let Some(x) = args.x {
        cfg.target.x = vec![x];
    }
    cfg.validate()?;
    let x = cfg.target.x[0];
    let deltas = parse_deltas(&args.deltas)?;
    let disc = cfg.discretization()?;
    let opts = cfg.pipeline_options()?;
    let input = args.input.clone().or_else(|| cfg.input.as_ref().map(PathBuf::from));

    let (pilot, m, functional) = match (input, cfg.oracle()?) {
        (Some(path), _) => {
            let prep = PreparedData::new(&read_z_scores(&path)?, &disc, &opts)?;
            let functional = match cfg.target.target.eb_kind() {
                Some(kind) => {
                    let target = EbTarget { kind, x };
                    let p = prep.pilot_theta(target)?;
                    calibrated_delta_functional(target, p.theta_bar, p.f_bar)?
                }
                None => cfg.target.target.linear(x).expect("linear target"),
            };
            let m = prep.fold2.len();
            (prep.pilot, m, functional)
        }
        (None, Some(g)) => {
            let c_m = cfg.c_m.ok_or_else(|| anyhow!("an oracle pilot needs `c_m` in the config"))?;
            let m = args.m.ok_or_else(|| anyhow!("an oracle pilot needs --m"))?;
            let pilot = PilotMarginal::oracle(&g, disc.bins(), c_m, m)?;
            let functional = match cfg.target.target.eb_kind() {
                Some(kind) => {
                    let target = EbTarget { kind, x };
                    let a = g.functional_value(&target.numerator())?;
                    let f = g.functional_value(&target.denominator())?;
                    let p = theta_from_parts(a, f, kind, c_m)?;
                    calibrated_delta_functional(target, p.theta_bar, p.f_bar)?
                }
                None => cfg.target.target.linear(x).expect("linear target"),
            };
            (pilot, m, functional)
        }
        (None, None) => bail!("modulus-diag needs data (--input or config `input`) or an `oracle_prior`"),
    };
    let label = functional.label();
    let problem = ModulusProblem::new(&disc, &pilot, functional, !args.unlocalized)?;

    let grid: Vec<f64> = (0..=240).map(|i| -6.0 + 0.05 * i as f64).collect();
    let mut trace = Vec::with_capacity(deltas.len());
    let mut hardest = String::from("delta,x,g1,gm1,f_g1,f_gm1\n");
    for &delta in &deltas {
        trace.push(evaluate_delta(&problem, delta, m, opts.alpha, opts.criterion)?);
        let sol = problem.solve(delta)?;
        for r in hardest_prior_table(&sol, &grid)? {
            let _ = writeln!(hardest, "{delta},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4]);
        }
    }
    trace.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let meta = header(
        "modulus-diag",
        cfg.seed,
        &[
            ("config", cfg.to_json()),
            ("functional", label),
            ("localized", (!args.unlocalized).to_string()),
            ("m", m.to_string()),
            ("delta_max", problem.delta_max()?.to_string()),
        ],
    );
    emit(Some(&args.output), &(meta.clone() + &trace_csv(&trace)))?;
    let hardest_out = args.hardest.unwrap_or_else(|| hardest_path(&args.output));
    emit(Some(&hardest_out), &(meta + &hardest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_grids() {
        let d = parse_deltas("0.001:0.1:3").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!((d[0], d[2]), (0.001, 0.1));
        assert!((d[1] - 0.01).abs() < 1e-15);
        assert_eq!(parse_deltas("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        for bad in ["0:1:3", "1:0.5:3", "0.1:1", "a,b", "-1", "0.1:1:0"] {
            assert!(parse_deltas(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hardest_path_sits_next_to_output() {
        assert_eq!(hardest_path(Path::new("/tmp/out/trace.csv")), PathBuf::from("/tmp/out/trace_hardest.csv"));
    }
}
