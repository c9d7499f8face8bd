//! Command-line front end; `wbary` forwards its arguments to [`run`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::barycenter::{
    optimal_energy_closed_form, stream_barycenter, weak_barycenter, weak_barycenter_energy, BarycenterConfig,
    BarycenterProblem, BarycenterResult, MapProvider, StepSchedule, StreamConfig,
};
use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};
use crate::io::{glob_paths, measure_stream, read_measure, write_measure, write_plan, write_trace};
use crate::measures::DiscreteMeasure;
use crate::ot::w2_squared_capped;
use crate::owt::{solve_owt, OwtMethod, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "wbary", version, about = "Optimal weak transport and weak barycenters of point clouds")]
struct Cli {
    /// Worker threads for the per-input solves of one step (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weak transport cost and barycentric map between two measure files.
    Owt {
        source: PathBuf,
        target: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory receiving plan.csv and map.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-point iteration for the barycenter of a finite family.
    Barycenter {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        finite: FiniteArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Streaming barycenter over files or generated measures, in order.
    Stream {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        streaming: StreamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the measures of a generator spec to files.
    Generate {
        #[command(flatten)]
        generator: GeneratorArgs,
        /// File format of the written measures.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the weak transport, exact OT and Sinkhorn providers on the same
    /// inputs and reports energies and distances between the results.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Entropic regularization of the Sinkhorn provider.
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = Mode::Finite)]
        mode: Mode,
        #[command(flatten)]
        finite: FiniteArgs,
        #[command(flatten)]
        streaming: StreamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Finite,
    Stream,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    /// Interior point method.
    Ipm,
    /// Accelerated projected gradient.
    Fista,
    /// Plain projected gradient.
    Plain,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProviderKind {
    Owt,
    Ot,
    Sinkhorn,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Solver::Ipm)]
    solver: Solver,
    /// Objective tolerance of the weak transport solver.
    #[arg(long)]
    obj_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut cfg = match self.solver {
            Solver::Ipm => SolverConfig::interior_point(),
            Solver::Fista => SolverConfig::proximal(),
            Solver::Plain => SolverConfig {
                method: OwtMethod::ProximalGradient,
                accelerated: false,
                ..SolverConfig::default()
            },
        };
        if let Some(t) = self.obj_tol {
            cfg.obj_tol = t;
        }
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
        }
        cfg.seed = self.seed;
        cfg
    }
}

#[derive(Args, Debug)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Owt)]
    provider: ProviderKind,
    /// Entropic regularization for `--provider sinkhorn`.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Largest exact OT instance accepted from the command line.
const CLI_MAX_OT_ENTRIES: usize = 4_000_000;

impl ProviderArgs {
    fn provider(&self) -> MapProvider {
        match self.provider {
            ProviderKind::Owt => MapProvider::Owt(self.solver.config()),
            ProviderKind::Ot => MapProvider::ExactOt {
                max_entries: CLI_MAX_OT_ENTRIES,
            },
            ProviderKind::Sinkhorn => MapProvider::sinkhorn(self.epsilon),
        }
    }
}

#[derive(Args, Debug)]
struct FiniteArgs {
    /// Comma-separated input weights; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Stop once the energy changes by less than this.
    #[arg(long, default_value_t = 1e-5)]
    stop_tol: f64,
    /// Maximum number of fixed-point steps.
    #[arg(long = "max-steps", default_value_t = 100)]
    max_steps: usize,
    /// Stop on the displacement of the iterate instead of the energy change.
    #[arg(long)]
    displacement_stop: bool,
}

impl FiniteArgs {
    fn config(&self) -> BarycenterConfig {
        BarycenterConfig {
            stop_tol: self.stop_tol,
            max_steps: self.max_steps,
            displacement_stop: self.displacement_stop,
            init: None,
        }
    }
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// `harmonic:c` or `power:c,p`.
    #[arg(long, default_value = "harmonic:1")]
    schedule: StepSchedule,
    /// Number of streaming updates; defaults to one per measure after the first.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "source")]
struct GeneratorSource {
    /// Preset family: gaussian, spiral, ellipse or pair-of-ellipses.
    #[arg(long)]
    family: Option<String>,
    /// JSON generator spec.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GeneratorArgs {
    #[command(flatten)]
    source: GeneratorSource,
    /// Number of measures (overrides the spec).
    #[arg(long)]
    count: Option<usize>,
    /// Samples per measure, `n` or `lo,hi` (overrides the spec).
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    samples: Option<Vec<usize>>,
    /// Generator seed; overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl GeneratorArgs {
    fn spec(&self, default_seed: u64) -> Result<GeneratorSpec> {
        let seed = self.seed.unwrap_or(default_seed);
        let mut spec = match (&self.source.family, &self.source.spec) {
            (Some(name), _) => GeneratorSpec::preset(name, seed)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut s: GeneratorSpec = serde_json::from_str(&text)?;
                if let Some(seed) = self.seed {
                    s.seed = seed;
                }
                s
            }
            (None, None) => unreachable!("clap requires one generator source"),
        };
        if let Some(k) = self.count {
            spec.num_measures = k;
        }
        if let Some(s) = &self.samples {
            spec.samples = [s[0], *s.last().expect("at least one value")];
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "input")]
struct InputChoice {
    /// Measure files, in order.
    #[arg(num_args = 1..)]
    files: Vec<PathBuf>,
    /// Glob pattern of measure files, taken in sorted order.
    #[arg(long)]
    glob: Option<String>,
    /// Preset generator family.
    #[arg(long)]
    family: Option<String>,
    /// JSON generator spec.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[command(flatten)]
    choice: InputChoice,
    /// Number of generated measures.
    #[arg(long)]
    count: Option<usize>,
    /// Samples per generated measure, `n` or `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    samples: Option<Vec<usize>>,
}

enum Source {
    Files(Vec<PathBuf>),
    Generator(GeneratorSpec),
}

impl Source {
    fn len(&self) -> usize {
        match self {
            Source::Files(p) => p.len(),
            Source::Generator(s) => s.num_measures,
        }
    }

    fn stream(&self) -> Box<dyn Iterator<Item = Result<DiscreteMeasure>> + '_> {
        match self {
            Source::Files(p) => Box::new(measure_stream(p.clone())),
            Source::Generator(s) => Box::new(s.stream()),
        }
    }

    fn load_all(&self) -> Result<Vec<DiscreteMeasure>> {
        self.stream().collect()
    }
}

impl InputArgs {
    fn source(&self, seed: u64) -> Result<Source> {
        let c = &self.choice;
        if !c.files.is_empty() {
            return Ok(Source::Files(c.files.clone()));
        }
        if let Some(pattern) = &c.glob {
            let paths = glob_paths(pattern)?;
            if paths.is_empty() {
                return Err(Error::InvalidConfig(format!("no files match {pattern:?}")));
            }
            return Ok(Source::Files(paths));
        }
        let generator = GeneratorArgs {
            source: GeneratorSource {
                family: c.family.clone(),
                spec: c.spec.clone(),
            },
            count: self.count,
            samples: self.samples.clone(),
            seed: Some(seed),
        };
        Ok(Source::Generator(generator.spec(seed)?))
    }
}

/// Runs the command line given by `argv` (program name first) and returns
/// the process exit code: 0 on success, 2 when a solver or the barycenter
/// iteration did not converge, 1 on any other error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(Error::InvalidConfig(format!("cannot start {n} workers: {e}"))),
        },
        None => execute(cli.command),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("warning: iteration stopped before meeting its tolerance");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotConverged { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Returns whether everything converged.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Owt {
            source,
            target,
            solver,
            out,
        } => {
            let mu = read_measure(&source)?;
            let nu = read_measure(&target)?;
            let sol = solve_owt(&mu, &nu, &solver.config())?;
            println!("V = {:?}", sol.value);
            println!("feasibility gap = {:e}", sol.plan.feasibility_gap());
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write_plan(dir.join("plan.csv"), &sol.plan)?;
                write_measure(dir.join("map.csv"), &sol.map.push_forward())?;
            }
            Ok(sol.trace.converged)
        }
        Command::Barycenter {
            input,
            provider,
            finite,
            out,
        } => {
            let inputs = input.source(provider.solver.seed)?.load_all()?;
            let prob = BarycenterProblem::new(inputs, finite.lambda.clone())?;
            let p = provider.provider();
            let res = weak_barycenter(&prob, &p, &finite.config())?;
            println!("provider = {}", res.provider);
            println!("iterations = {}", res.iterations);
            println!("energy = {:?}", res.final_energy());
            println!("closed-form optimum = {:?}", optimal_energy_closed_form(&prob));
            if let Some(dir) = out {
                write_result(&dir, "", "fixed-point", &res)?;
            }
            Ok(res.converged)
        }
        Command::Stream {
            input,
            provider,
            streaming,
            out,
        } => {
            let source = input.source(provider.solver.seed)?;
            let cfg = stream_config(&streaming, &source);
            let res = stream_barycenter(source.stream(), &provider.provider(), &cfg)?;
            println!("provider = {}", res.provider);
            println!("steps = {}", res.iterations);
            if let Some(e) = res.population_energy_estimate {
                println!("population energy estimate = {e:?}");
            }
            if let Some(dir) = out {
                write_result(&dir, "", "streaming", &res)?;
            }
            Ok(true)
        }
        Command::Generate { generator, format, out } => {
            let spec = generator.spec(0)?;
            ensure_dir(&out)?;
            let ext = match format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            let width = spec.num_measures.saturating_sub(1).to_string().len().max(3);
            for (k, m) in spec.stream().enumerate() {
                write_measure(out.join(format!("measure_{k:0width$}.{ext}")), &m?)?;
            }
            let spec_path = out.join("spec.json");
            fs::write(&spec_path, serde_json::to_string_pretty(&spec)?).map_err(|e| Error::io(&spec_path, e))?;
            println!("wrote {} measures to {}", spec.num_measures, out.display());
            Ok(true)
        }
        Command::Compare {
            input,
            solver,
            epsilon,
            mode,
            finite,
            streaming,
            out,
        } => compare(input, solver, epsilon, mode, finite, streaming, out),
    }
}

fn stream_config(args: &StreamArgs, source: &Source) -> StreamConfig {
    StreamConfig {
        schedule: args.schedule,
        steps: args.steps.unwrap_or(source.len().saturating_sub(1)),
    }
}

fn write_result(dir: &Path, prefix: &str, algorithm: &str, res: &BarycenterResult) -> Result<()> {
    ensure_dir(dir)?;
    write_measure(dir.join(format!("{prefix}barycenter.csv")), &res.barycenter)?;
    write_trace(dir.join(format!("{prefix}trace.json")), algorithm, res)
}

#[derive(Serialize)]
struct ProviderReport {
    provider: &'static str,
    label: &'static str,
    /// Weak barycenter energy of the returned measure.
    weak_energy: f64,
    iterations: usize,
    converged: bool,
    total_variance: f64,
    support_diameter: f64,
}

#[derive(Serialize)]
struct CompareReport {
    mode: &'static str,
    inputs: usize,
    closed_form_optimum: f64,
    providers: Vec<ProviderReport>,
    /// `[a, b, W2^2(a, b)]` for each pair of providers.
    pairwise_w2_squared: Vec<(String, String, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn compare(
    input: InputArgs,
    solver: SolverArgs,
    epsilon: f64,
    mode: Mode,
    finite: FiniteArgs,
    streaming: StreamArgs,
    out: Option<PathBuf>,
) -> Result<bool> {
    let source = input.source(solver.seed)?;
    let inputs = source.load_all()?;
    let prob = BarycenterProblem::new(inputs.clone(), finite.lambda.clone())?;
    let cfg = solver.config();
    let providers = [
        MapProvider::Owt(cfg.clone()),
        MapProvider::ExactOt {
            max_entries: CLI_MAX_OT_ENTRIES,
        },
        MapProvider::sinkhorn(epsilon),
    ];
    let mut results = Vec::new();
    for p in &providers {
        let res = match mode {
            Mode::Finite => weak_barycenter(&prob, p, &finite.config())?,
            Mode::Stream => {
                let cfg = stream_config(&streaming, &source);
                stream_barycenter(inputs.iter().cloned().map(Ok), p, &cfg)?
            }
        };
        results.push(res);
    }
    let mut reports = Vec::new();
    for (p, res) in providers.iter().zip(&results) {
        reports.push(ProviderReport {
            provider: p.name(),
            label: res.provider,
            weak_energy: weak_barycenter_energy(&res.barycenter, &prob, &cfg)?,
            iterations: res.iterations,
            converged: res.converged,
            total_variance: res.barycenter.total_variance(),
            support_diameter: res.barycenter.support_diameter(),
        });
    }
    let mut pairs = Vec::new();
    for i in 0..results.len() {
        for j in (i + 1)..results.len() {
            let w = w2_squared_capped(&results[i].barycenter, &results[j].barycenter, CLI_MAX_OT_ENTRIES)?;
            pairs.push((providers[i].name().to_string(), providers[j].name().to_string(), w));
        }
    }
    let report = CompareReport {
        mode: match mode {
            Mode::Finite => "fixed-point",
            Mode::Stream => "streaming",
        },
        inputs: prob.inputs().len(),
        closed_form_optimum: optimal_energy_closed_form(&prob),
        providers: reports,
        pairwise_w2_squared: pairs,
    };
    print!("{}", render_report(&report));
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        for (p, res) in providers.iter().zip(&results) {
            write_result(&dir, &format!("{}_", p.name()), report.mode, res)?;
        }
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(results.iter().all(|r| r.converged))
}

fn render_report(r: &CompareReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} inputs, {} iteration", r.inputs, r.mode);
    let _ = writeln!(s, "closed-form optimum: {:.6e}", r.closed_form_optimum);
    let _ = writeln!(
        s,
        "{:<10} {:<24} {:>14} {:>14} {:>10} {:>6}",
        "provider", "label", "weak energy", "total var", "iters", "conv"
    );
    for p in &r.providers {
        let _ = writeln!(
            s,
            "{:<10} {:<24} {:>14.6e} {:>14.6e} {:>10} {:>6}",
            p.provider, p.label, p.weak_energy, p.total_variance, p.iterations, p.converged
        );
    }
    for (a, b, w) in &r.pairwise_w2_squared {
        let _ = writeln!(s, "W2^2({a}, {b}) = {w:.6e}");
    }
    s
}
