//! Command-line front end: simulate panels, fit and compare models on
//! dataset bundles, and export endemic trajectories. Every run records a
//! reproducibility manifest; `rerun` replays one into a fresh directory.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use epigrav_core::compare::{ablation, endemic_trajectory, lag_scan, mid_month_trajectory, season_compare};
use epigrav_core::fit::{fit, FitOptions};
use epigrav_core::io::{self, report, RunManifest};
use epigrav_core::model::{GravityVariant, ModelSpec};
use epigrav_core::weights::DecayKind;
use epigrav_core::panel::Resolution;
use epigrav_core::sim::{simulate, SimConfig};

#[derive(Parser)]
#[command(
    name = "epigrav",
    version,
    about = "Fit, simulate and compare spatio-temporal count models for disease surveillance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a count panel and write it as a fittable bundle.
    Simulate(SimulateArgs),
    /// Fit one model spec to a bundle.
    Fit(FitLikeArgs),
    /// Refit an autoregressive spec at every lag depth up to --max-lag.
    LagScan(LagScanArgs),
    /// Contrast calendar-month endemic effects with a free trajectory.
    SeasonCompare(FitLikeArgs),
    /// Fit every effects and endemic combination with and without the
    /// air-traffic term.
    Ablation(FitLikeArgs),
    /// Fit a model and export its endemic trajectory as CSV.
    EndemicExport(FitLikeArgs),
    /// Replay a recorded run into a fresh output directory.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Bundle directory with a manifest.toml.
    #[arg(long)]
    bundle: PathBuf,
    /// Model spec TOML.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Points in each profile grid.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Override the autoregressive burn-in.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Worker threads for profile grids; EPIGRAV_THREADS is the fallback.
    #[arg(long)]
    threads: Option<usize>,
    /// Gravity endemic layout override.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Gravity distance-decay kernel override.
    #[arg(long, value_enum)]
    decay: Option<DecayArg>,
    /// Let every airport reach every district, not only its own region.
    #[arg(long)]
    cross_region: bool,
}

#[derive(Args)]
struct FitLikeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the spec's maximum lag depth.
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Args)]
struct LagScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Deepest lag to scan.
    #[arg(long)]
    max_lag: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config TOML.
    #[arg(long)]
    config: PathBuf,
    /// Bundle supplying spatial structure and covariates when the spec
    /// needs them; its counts are ignored.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RerunArgs {
    /// A run-manifest.json written by an earlier command.
    #[arg(long)]
    manifest: PathBuf,
    /// Fresh output directory for the replayed run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// One free endemic trajectory per region.
    PerRegion,
    /// A single endemic trajectory shared by all regions.
    Composite,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayArg {
    Power,
    Exp,
    ExpSqrt,
    ExpNormal,
}

impl DecayArg {
    fn kind(self) -> DecayKind {
        match self {
            DecayArg::Power => DecayKind::Power,
            DecayArg::Exp => DecayKind::Exponential,
            DecayArg::ExpSqrt => DecayKind::ExpSqrt,
            DecayArg::ExpNormal => DecayKind::ExpNormal,
        }
    }
}

/// Errors split by exit status: 2 for bad invocations, 1 for everything else.
enum CliError {
    Usage(String),
    Run(String),
}

impl From<epigrav_core::Error> for CliError {
    fn from(e: epigrav_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::LagScan(args) => cmd_lag_scan(args),
        Command::SeasonCompare(args) => cmd_season_compare(args),
        Command::Ablation(args) => cmd_ablation(args),
        Command::EndemicExport(args) => cmd_endemic_export(args),
        Command::Rerun(args) => cmd_rerun(args),
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("EPIGRAV_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| usage(format!("EPIGRAV_THREADS must be a number, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// The staged output set: nothing touches the output directory until the
/// whole run has succeeded, so failures never leave partial artifacts.
struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    fn new() -> Self {
        Staged { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn write(mut self, out: &Path, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.outputs = self.files.iter().map(|(n, _)| n.clone()).collect();
        self.files
            .push(("run-manifest.json".to_string(), manifest.to_json().into_bytes()));
        std::fs::create_dir_all(out)?;
        for (name, bytes) in &self.files {
            io::write_atomic(&out.join(name), bytes)?;
        }
        Ok(())
    }
}

fn manifest_for(
    command: &str,
    argv: Vec<String>,
    seed: Option<u64>,
    input_hashes: BTreeMap<String, String>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        argv,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_hashes,
        outputs: Vec::new(),
    }
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

/// Canonical argv for the manifest, without --out so a replay can point
/// anywhere. Only flags that were given are recorded.
fn common_argv(command: &str, args: &CommonArgs, max_lag: Option<usize>) -> Vec<String> {
    let mut v = vec![
        command.to_string(),
        "--bundle".into(),
        path_arg(&args.bundle),
        "--config".into(),
        path_arg(&args.config),
    ];
    if let Some(d) = max_lag {
        v.extend(["--max-lag".into(), d.to_string()]);
    }
    if let Some(g) = args.grid_points {
        v.extend(["--grid-points".into(), g.to_string()]);
    }
    if let Some(b) = args.burn_in {
        v.extend(["--burn-in".into(), b.to_string()]);
    }
    if let Some(t) = args.threads {
        v.extend(["--threads".into(), t.to_string()]);
    }
    if let Some(variant) = args.variant {
        v.extend([
            "--variant".into(),
            match variant {
                VariantArg::PerRegion => "per-region".into(),
                VariantArg::Composite => "composite".into(),
            },
        ]);
    }
    if let Some(decay) = args.decay {
        v.extend([
            "--decay".into(),
            match decay {
                DecayArg::Power => "power".into(),
                DecayArg::Exp => "exp".into(),
                DecayArg::ExpSqrt => "exp-sqrt".into(),
                DecayArg::ExpNormal => "exp-normal".into(),
            },
        ]);
    }
    if args.cross_region {
        v.push("--cross-region".into());
    }
    v
}

fn fit_options(args: &CommonArgs) -> FitOptions {
    let mut opts = FitOptions::default();
    if let Some(g) = args.grid_points {
        opts.grid_points = g;
    }
    opts.burn_in = args.burn_in;
    opts
}

/// Load the spec and apply command-line overrides, rejecting flags that do
/// not apply to the spec's family.
fn load_spec(args: &CommonArgs, max_lag: Option<usize>) -> Result<ModelSpec, CliError> {
    let spec = io::config::read_model_spec(&args.config)?;
    match spec {
        ModelSpec::Ee(mut s) => {
            if args.variant.is_some() || args.decay.is_some() || args.cross_region {
                return Err(usage(
                    "--variant, --decay and --cross-region apply only to gravity specs",
                ));
            }
            if let Some(d) = max_lag {
                s.lags.max_lag = d;
            }
            Ok(ModelSpec::Ee(s))
        }
        ModelSpec::Gravity(mut s) => {
            if max_lag.is_some() {
                return Err(usage("--max-lag applies only to autoregressive specs"));
            }
            if let Some(v) = args.variant {
                s.variant = match v {
                    VariantArg::PerRegion => GravityVariant::PerRegionEndemic,
                    VariantArg::Composite => GravityVariant::CompositeSharedEndemic,
                };
            }
            if args.decay.is_some() || args.cross_region {
                let term = s.gravity.as_mut().ok_or_else(|| {
                    usage("the spec has no air-traffic term to apply --decay or --cross-region to")
                })?;
                if let Some(d) = args.decay {
                    term.kernel = d.kind();
                }
                if args.cross_region {
                    term.cross_region = true;
                }
            }
            Ok(ModelSpec::Gravity(s))
        }
    }
}

struct Loaded {
    ingested: io::Ingested,
    spec: ModelSpec,
    opts: FitOptions,
    input_hashes: BTreeMap<String, String>,
}

fn load(args: &CommonArgs, max_lag: Option<usize>) -> Result<Loaded, CliError> {
    init_threads(args.threads)?;
    let spec = load_spec(args, max_lag)?;
    let ingested = io::ingest(&args.bundle)?;
    if matches!(spec, ModelSpec::Gravity(_))
        && ingested.panel.axis().resolution() != Resolution::Monthly
    {
        return Err(usage(
            "gravity models need a monthly bundle; this one is daily",
        ));
    }
    let mut input_hashes = io::file_hashes(&args.bundle)?;
    input_hashes.insert(path_arg(&args.config), io::sha256_file(&args.config)?);
    eprintln!("{}", ingested.report);
    Ok(Loaded {
        ingested,
        spec,
        opts: fit_options(args),
        input_hashes,
    })
}

fn cmd_fit(args: FitLikeArgs) -> Result<(), CliError> {
    let loaded = load(&args.common, args.max_lag)?;
    let result = fit(
        &loaded.ingested.panel,
        loaded.ingested.structure.as_ref(),
        loaded.ingested.cube.as_ref(),
        &loaded.spec,
        &loaded.opts,
    )?;
    let table = report::fit_table(&result);
    print!("{table}");
    let mut staged = Staged::new();
    staged.add("fit.json", to_json(&result));
    staged.add("fit.txt", table.into_bytes());
    staged.write(
        &args.common.out,
        manifest_for(
            "fit",
            common_argv("fit", &args.common, args.max_lag),
            None,
            loaded.input_hashes,
        ),
    )
}

fn cmd_lag_scan(args: LagScanArgs) -> Result<(), CliError> {
    let loaded = load(&args.common, Some(args.max_lag))?;
    let spec = match &loaded.spec {
        ModelSpec::Ee(s) => s,
        ModelSpec::Gravity(_) => {
            return Err(usage("lag-scan applies only to autoregressive specs"))
        }
    };
    let rows = lag_scan(
        &loaded.ingested.panel,
        loaded.ingested.structure.as_ref(),
        spec,
        args.max_lag,
        &loaded.opts,
    )?;
    let table = report::lag_scan_table(&rows);
    print!("{table}");
    let mut staged = Staged::new();
    staged.add("lag-scan.json", to_json(&rows));
    staged.add("lag-scan.txt", table.into_bytes());
    staged.write(
        &args.common.out,
        manifest_for(
            "lag-scan",
            common_argv("lag-scan", &args.common, Some(args.max_lag)),
            None,
            loaded.input_hashes,
        ),
    )
}

fn gravity_spec(spec: &ModelSpec) -> Result<&epigrav_core::model::GravitySpec, CliError> {
    match spec {
        ModelSpec::Gravity(s) => Ok(s),
        ModelSpec::Ee(_) => Err(usage("this command needs a gravity spec")),
    }
}

fn cmd_season_compare(args: FitLikeArgs) -> Result<(), CliError> {
    let loaded = load(&args.common, args.max_lag)?;
    let comparison = season_compare(
        &loaded.ingested.panel,
        loaded.ingested.structure.as_ref(),
        loaded.ingested.cube.as_ref(),
        gravity_spec(&loaded.spec)?,
        &loaded.opts,
    )?;
    let table = report::season_table(&comparison);
    print!("{table}");
    let mut staged = Staged::new();
    staged.add("season-compare.json", to_json(&comparison));
    staged.add("season-compare.txt", table.into_bytes());
    staged.write(
        &args.common.out,
        manifest_for(
            "season-compare",
            common_argv("season-compare", &args.common, args.max_lag),
            None,
            loaded.input_hashes,
        ),
    )
}

fn cmd_ablation(args: FitLikeArgs) -> Result<(), CliError> {
    let loaded = load(&args.common, args.max_lag)?;
    let rows = ablation(
        &loaded.ingested.panel,
        loaded.ingested.structure.as_ref(),
        loaded.ingested.cube.as_ref(),
        gravity_spec(&loaded.spec)?,
        &loaded.opts,
    )?;
    let table = report::ablation_table(&rows);
    print!("{table}");
    let mut staged = Staged::new();
    staged.add("ablation.json", to_json(&rows));
    staged.add("ablation.txt", table.into_bytes());
    staged.write(
        &args.common.out,
        manifest_for(
            "ablation",
            common_argv("ablation", &args.common, args.max_lag),
            None,
            loaded.input_hashes,
        ),
    )
}

fn cmd_endemic_export(args: FitLikeArgs) -> Result<(), CliError> {
    let loaded = load(&args.common, args.max_lag)?;
    let result = fit(
        &loaded.ingested.panel,
        loaded.ingested.structure.as_ref(),
        loaded.ingested.cube.as_ref(),
        &loaded.spec,
        &loaded.opts,
    )?;
    let trajectory = endemic_trajectory(&result, &loaded.ingested.panel)?;
    if let Some(w) = &trajectory.warning {
        eprintln!("warning: {w}");
    }
    let mut staged = Staged::new();
    staged.add(
        "trajectory.csv",
        report::trajectory_csv(&trajectory).into_bytes(),
    );
    if loaded.ingested.panel.axis().resolution() == Resolution::Daily {
        match collapse_mid_month(&trajectory, &loaded.ingested.panel) {
            Ok(csv) => staged.add("trajectory-mid-month.csv", csv.into_bytes()),
            Err(e) => eprintln!("skipping mid-month collapse: {e}"),
        }
    }
    staged.add("fit.json", to_json(&result));
    staged.write(
        &args.common.out,
        manifest_for(
            "endemic-export",
            common_argv("endemic-export", &args.common, args.max_lag),
            None,
            loaded.input_hashes,
        ),
    )
}

fn collapse_mid_month(
    trajectory: &epigrav_core::compare::Trajectory,
    panel: &epigrav_core::panel::CountPanel,
) -> Result<String, epigrav_core::Error> {
    let mut out = epigrav_core::compare::Trajectory {
        series: Vec::new(),
        warning: None,
    };
    for series in &trajectory.series {
        let (_, collapsed) = mid_month_trajectory(series, panel.axis())?;
        out.series.push(collapsed);
    }
    Ok(report::trajectory_csv(&out))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut config: SimConfig = io::config::read_sim_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut input_hashes = BTreeMap::new();
    input_hashes.insert(path_arg(&args.config), io::sha256_file(&args.config)?);
    let side = match &args.bundle {
        Some(dir) => {
            let ingested = io::ingest(dir)?;
            input_hashes.extend(io::file_hashes(dir)?);
            Some(ingested)
        }
        None => None,
    };
    let structure = side.as_ref().and_then(|s| s.structure.as_ref());
    let cube = side.as_ref().and_then(|s| s.cube.as_ref());
    let output = simulate(&config, structure, cube)?;

    std::fs::create_dir_all(&args.out)?;
    let bundle_manifest = io::export(&args.out, &output.panel, structure, cube)?;
    let mut argv = vec![
        "simulate".to_string(),
        "--config".into(),
        path_arg(&args.config),
    ];
    if let Some(b) = &args.bundle {
        argv.extend(["--bundle".into(), path_arg(b)]);
    }
    argv.extend(["--seed".into(), config.seed.to_string()]);
    let mut manifest = manifest_for("simulate", argv, Some(config.seed), input_hashes);
    manifest.outputs = bundle_manifest
        .hashes
        .keys()
        .cloned()
        .chain([io::bundle::MANIFEST_FILE.to_string(), "provenance.json".into()])
        .collect();
    io::write_atomic(
        &args.out.join("provenance.json"),
        to_json(&output.provenance).as_slice(),
    )?;
    io::write_atomic(
        &args.out.join("run-manifest.json"),
        manifest.to_json().as_bytes(),
    )?;
    eprintln!(
        "simulated {} units x {} steps, config hash {}",
        output.panel.n_units(),
        output.panel.n_times(),
        &output.provenance.config_hash[..12]
    );
    Ok(())
}

fn cmd_rerun(args: RerunArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.manifest)?;
    let manifest = RunManifest::from_json(&text)?;
    for (path, want) in &manifest.input_hashes {
        let got = io::sha256_file(Path::new(path)).map_err(|e| {
            CliError::Run(format!("recorded input {path} is unreadable: {e}"))
        })?;
        if !got.eq_ignore_ascii_case(want) {
            return Err(CliError::Run(format!(
                "recorded input {path} has changed since the run; refusing to replay"
            )));
        }
    }
    let mut argv = vec!["epigrav".to_string()];
    argv.extend(manifest.argv.iter().cloned());
    argv.extend(["--out".into(), path_arg(&args.out)]);
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CliError::Run(format!("recorded argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Run("a rerun manifest cannot record a rerun".into()));
    }
    dispatch(cli.command)
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    bytes
}
