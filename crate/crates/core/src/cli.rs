//! Command-line front end. Exit status: 0 on success, 1 on usage or
//! configuration errors, 2 on numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::filters::{particle_filter, EstimatorKind, FilterRun, Observer, ParticleConfig};
use crate::harness::{
    build_gain, contraction_threshold, empirical_squeezing, run_mse_experiment, squeezing_scan, write_report,
    write_report_csv, ExperimentConfig, ObservationConfig, ProbeBalls, PRESETS,
};
use crate::linear::{detectability_shift_equivalence, find_gain_seeded, hautus_detectable, UNIT_TOL};
use crate::observation::{fourier_cutoff, generate_truth_and_observations, ObservationSequence};
use crate::rng::{purpose, substream};

pub const THREADS_ENV: &str = "CHAOSDA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "chaosda",
    version,
    about = "Filtering experiments for partially observed dissipative chaotic systems",
    arg_required_else_help = true,
    after_help = "Configs are TOML files with [model], [observation], [filter], [experiment], [squeeze] and \
                  [linear] sections, or one of the built-in presets: l63_table1, l96_table2, l63_sandwich, \
                  l63_squeeze, ns_demo, ns_squeeze, detect_diag, detect_rotation."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file path or preset name.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Observer,
    Truncated,
    Particle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a truth trajectory and observations (j,index,value).
    Simulate {
        /// Noise strength (default: first of experiment.epsilons).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also write the truth (j, v_0 … v_{d−1}) to this file.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run one filter on a stored observation CSV.
    Filter {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Truncated)]
        estimator: EstimatorArg,
        /// Truth CSV from `simulate --truth`, to fill the sq_error column.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Monte Carlo MSE table over the configured noise levels.
    MseTable,
    /// Detectability verdict for the [linear] section.
    Detect,
    /// Empirical squeezing ratios and histogram (bin_lower,count).
    SqueezeProbe,
    /// Truncated observer on 2D Navier–Stokes (default config: ns_demo).
    NsDemo,
}

/// Parses `argv` and runs the command, returning the exit status.
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
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let threads = cli.global.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn load_config(global: &GlobalArgs, default: Option<&str>) -> Result<ExperimentConfig> {
    let name = global.config.as_deref().or(default).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("--config is required (a path or one of: {})", names.join(", ")))
    })?;
    let cfg = ExperimentConfig::load(name)?;
    Ok(match global.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn seed_of(cfg: &ExperimentConfig, global: &GlobalArgs) -> u64 {
    global.seed.or(cfg.experiment.as_ref().map(|e| e.seed)).unwrap_or(0)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { epsilon, truth } => simulate(g, *epsilon, truth.as_deref()),
        Command::Filter { observations, epsilon, estimator, truth } => {
            filter(g, observations, *epsilon, *estimator, truth.as_deref())
        }
        Command::MseTable => mse_table(g, None),
        Command::Detect => detect(g),
        Command::SqueezeProbe => squeeze_probe(g),
        Command::NsDemo => mse_table(g, Some("ns_demo")),
    }
}

fn simulate(g: &GlobalArgs, epsilon: Option<f64>, truth_path: Option<&Path>) -> Result<()> {
    let cfg = load_config(g, None)?;
    let setup = cfg.setup()?;
    let exp = cfg.experiment()?;
    let epsilon = epsilon.unwrap_or(exp.epsilons[0]);
    let (truth, obs) = generate_truth_and_observations(
        &setup.model,
        &setup.op,
        &setup.noise,
        &setup.init,
        epsilon,
        exp.steps()?,
        exp.h,
        &mut substream(exp.seed, &[0], purpose::SIGNAL),
        &mut substream(exp.seed, &[0, 0], purpose::NOISE),
    )?;
    let mut out = output(g.out.as_deref())?;
    obs.write_csv(&setup.op, &mut out)?;
    out.flush()?;
    if let Some(path) = truth_path {
        write_truth(&truth, File::create(path)?)?;
    }
    Ok(())
}

fn write_truth<W: Write>(truth: &[State], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = truth.first().map_or(0, |v| v.len());
    let mut header = vec!["j".to_string()];
    header.extend((0..d).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for (j, v) in truth.iter().enumerate() {
        let mut row = vec![j.to_string()];
        row.extend(v.iter().map(|x| format!("{x:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_truth(path: &Path, dim: usize) -> Result<Vec<State>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!("truth row {}: expected {} columns", line + 2, dim + 1)));
        }
        let values: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(|x| x.trim().parse::<f64>()).collect();
        out.push(State::from_vec(values.map_err(|_| Error::Parse(format!("truth row {}: bad number", line + 2)))?));
    }
    Ok(out)
}

fn filter(
    g: &GlobalArgs,
    observations: &Path,
    epsilon: Option<f64>,
    estimator: EstimatorArg,
    truth_path: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(g, None)?;
    let setup = cfg.setup()?;
    let exp = cfg.experiment()?;
    let epsilon = epsilon.unwrap_or(exp.epsilons[0]);
    let seq = ObservationSequence::read_csv(&setup.op, epsilon, File::open(observations)?)?;
    let gain = build_gain(&cfg, &setup, epsilon)?;
    let start = State::zeros(setup.model.dim());
    let mut run = match estimator {
        EstimatorArg::Observer => FilterRun::from_estimates(
            EstimatorKind::Observer,
            Observer::new(&setup.model, &setup.op, &gain, exp.h)?.run(&start, &seq.observations)?,
        ),
        EstimatorArg::Truncated => FilterRun::from_estimates(
            EstimatorKind::TruncatedObserver,
            Observer::new(&setup.model, &setup.op, &gain, exp.h)?
                .truncated(&setup.vnorm, setup.radius)?
                .run(&start, &seq.observations)?,
        ),
        EstimatorArg::Particle => particle_filter(
            &setup.model,
            &setup.op,
            &setup.noise,
            epsilon,
            exp.h,
            &ParticleConfig::new(cfg.filter.particles).with_jitter(cfg.filter.jitter),
            &setup.init,
            &seq.observations,
            &mut substream(exp.seed, &[0, 0, 0], purpose::PARTICLES),
        )?,
    };
    if let Some(path) = truth_path {
        let truth = read_truth(path, setup.model.dim())?;
        run.score_with(&truth, |x| setup.model.norm_squared(x))?;
    }
    let mut out = output(g.out.as_deref())?;
    run.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn mse_table(g: &GlobalArgs, default: Option<&str>) -> Result<()> {
    let cfg = load_config(g, default)?;
    if default.is_some() && cfg.model_config()?.build()?.spectral().is_none() {
        return Err(Error::Config("ns-demo needs a navier-stokes model".into()));
    }
    let report = run_mse_experiment(&cfg)?;
    let out_path = g.out.clone().or_else(|| cfg.experiment.as_ref().and_then(|e| e.output.clone()).map(PathBuf::from));
    match out_path {
        Some(path) => write_report(&report, &path)?,
        None => {
            let mut out = output(None)?;
            write_report_csv(&report, &mut out)?;
            out.flush()?;
        }
    }
    for (filter, fit) in &report.slopes {
        eprintln!("{filter}: slope {} ± {}", fit.slope, fit.half_width);
    }
    Ok(())
}

fn detect(g: &GlobalArgs) -> Result<()> {
    let cfg = load_config(g, None)?;
    let lin = cfg.linear()?;
    let (l, p) = lin.matrices()?;
    let seed = g.seed.unwrap_or(0);
    let verdict = hautus_detectable(&l, &p, UNIT_TOL)?;
    let shift = detectability_shift_equivalence(&l, &p)?;
    let search = find_gain_seeded(&l, &p, lin.budget, seed)?;
    let alpha = search.alpha;
    let mut out = output(g.out.as_deref())?;
    let rounded = (search.rho * 1e10).round() / 1e10;
    if verdict.detectable {
        writeln!(out, "detectable, ρ(L−DP)={rounded}")?;
    } else {
        writeln!(out, "not detectable, ρ(L−DP)={rounded}")?;
    }
    writeln!(out, "detectable,{}", verdict.detectable)?;
    match verdict.witness {
        Some(w) => writeln!(out, "witness,{}{:+}i", w.re, w.im)?,
        None => writeln!(out, "witness,none")?,
    }
    writeln!(out, "shift_equivalence,{shift}")?;
    writeln!(out, "gain_found,{}", search.success())?;
    writeln!(out, "spectral_radius,{}", search.rho)?;
    for i in 0..search.gain.nrows() {
        let row: Vec<String> = search.gain.row(i).iter().map(|x| format!("{x}")).collect();
        writeln!(out, "gain_row_{i},{}", row.join(" "))?;
    }
    match alpha {
        Some(a) => writeln!(out, "contraction_alpha,{a}")?,
        None => writeln!(out, "contraction_alpha,none")?,
    }
    out.flush()?;
    Ok(())
}

fn squeeze_probe(g: &GlobalArgs) -> Result<()> {
    let cfg = load_config(g, None)?;
    let setup = cfg.setup()?;
    let seed = seed_of(&cfg, g);
    let sq = cfg.squeeze.clone().ok_or_else(|| Error::Config("missing [squeeze] section".into()))?;
    let h = match sq.h {
        Some(h) => h,
        None => cfg.experiment()?.h,
    };
    let balls = ProbeBalls { absorbing: setup.model.absorbing_radius(), truncation: setup.radius };
    let mut rng = substream(seed, &[], purpose::SQUEEZE);
    let mut out = output(g.out.as_deref())?;
    let scan = matches!(cfg.observation_config()?, ObservationConfig::FourierCutoff { .. }) && !sq.lambdas.is_empty();
    let probe = if scan {
        let ns = setup.model.spectral().expect("fourier cutoff implies a spectral model");
        let ops = sq.lambdas.iter().map(|&l| fourier_cutoff(ns, l)).collect::<Result<Vec<_>>>()?;
        let probes = squeezing_scan(&setup.model, &ops, &setup.vnorm, h, balls, sq.samples, sq.bins, &mut rng)?;
        for (lambda, p) in sq.lambdas.iter().zip(&probes) {
            eprintln!("lambda {lambda}: alpha_hat {}", p.alpha_hat);
        }
        match contraction_threshold(&probes) {
            Some(i) => {
                eprintln!("contracting for lambda >= {}", sq.lambdas[i]);
                probes[i].clone()
            }
            None => {
                eprintln!("no contracting cutoff in the scanned range");
                probes.last().expect("non-empty scan").clone()
            }
        }
    } else {
        let gain = build_gain(&cfg, &setup, 0.0)?;
        empirical_squeezing(&setup.model, &setup.op, &gain, &setup.vnorm, h, balls, sq.samples, sq.bins, &mut rng)?
    };
    eprintln!("alpha_hat {}", probe.alpha_hat);
    probe.histogram.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
