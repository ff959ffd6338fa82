use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eri_core::compiler::EriClass;

#[derive(Debug, Parser)]
#[command(name = "elastic-eri", version, about = "Two-electron integrals, Fock builds and RHF with an auto-tuned workload")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, env = "ELASTIC_ERI_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// Bitwise-reproducible reduction order.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write the JSON report here (`-` for standard output).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile execution plans for one class or every class up to a momentum.
    Compile(CompileArgs),
    /// Restricted Hartree-Fock on a molecule.
    Scf(ScfArgs),
    /// Tune per-class granularity on a sample of real blocks.
    Tune(TuneArgs),
    /// Run a validation suite; exits 1 if it fails.
    Validate(ValidateArgs),
    /// Time Fock builds with and without tuning.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct MoleculeArgs {
    /// XYZ file in Angstrom.
    #[arg(long)]
    pub xyz: PathBuf,

    /// Built-in basis name or basis file.
    #[arg(long, default_value = "sto-3g")]
    pub basis: String,
}

#[derive(Debug, Args)]
pub struct BlockArgs {
    /// Shell pairs per tile.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub tile_size: u64,

    /// Primitive-pair screening threshold, or `off`.
    #[arg(long, default_value = "off", value_parser = parse_threshold)]
    pub screen_threshold: Threshold,

    /// Cost weight on angular momentum in the path search.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub Option<f64>);

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(Threshold(None));
    }
    let v: f64 = s.parse().map_err(|_| format!("expected a number or `off`, got `{s}`"))?;
    if v > 0.0 && v.is_finite() {
        Ok(Threshold(Some(v)))
    } else {
        Err(format!("threshold must be positive, got {v}"))
    }
}

fn parse_class(s: &str) -> Result<EriClass, String> {
    s.parse().map_err(|e: eri_core::Error| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping(pub Option<f64>);

fn parse_damping(s: &str) -> Result<Damping, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(Damping(None));
    }
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(Damping(Some(v))),
        _ => Err(format!("damping must be in [0, 1) or `off`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Class as `La,Lb,Lc,Ld`; all classes up to `--l-max` when omitted.
    #[arg(long, value_parser = parse_class)]
    pub class: Option<EriClass>,

    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(0..=4))]
    pub l_max: u32,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,

    /// Print scalar source text for each plan.
    #[arg(long)]
    pub emit_source: bool,

    /// Write plan statistics as JSON.
    #[arg(long)]
    pub stats_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScfArgs {
    #[command(flatten)]
    pub molecule: MoleculeArgs,

    #[command(flatten)]
    pub blocks: BlockArgs,

    /// Convergence threshold on the largest density change.
    #[arg(long, default_value = "1e-6", value_parser = parse_positive)]
    pub conv: f64,

    #[arg(long, default_value_t = 99, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iter: u64,

    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub diis: Switch,

    /// Density damping factor, or `off`.
    #[arg(long, default_value = "0.3", value_parser = parse_damping)]
    pub damping: Damping,

    /// Tune granularity on the first iteration.
    #[arg(long)]
    pub tune: bool,

    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub sample_blocks: u64,

    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub molecule: MoleculeArgs,

    #[command(flatten)]
    pub blocks: BlockArgs,

    /// Blocks sampled per class.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub sample_blocks: u64,

    /// Timed runs per measurement, after one warm-up.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Energies,
    Oracle,
    Symmetry,
    Allocator,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(value_enum)]
    pub suite: Suite,

    /// Reference systems for `energies`; all of them when omitted.
    #[arg(long)]
    pub system: Vec<String>,

    /// Own geometry for `energies`, compared against `--expected`.
    #[arg(long, requires = "expected")]
    pub xyz: Option<PathBuf>,

    #[arg(long, requires = "xyz", allow_hyphen_values = true)]
    pub expected: Option<f64>,

    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(0..=3))]
    pub l_max: u32,

    /// Random primitive geometries per class for `oracle`.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub geometries: u64,

    /// Random shell quadruples for `symmetry`.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub quadruples: u64,

    /// Blocks sampled per class for the hardware part of `allocator`.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub sample_blocks: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub molecule: MoleculeArgs,

    #[command(flatten)]
    pub blocks: BlockArgs,

    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub sample_blocks: u64,

    /// Timed runs per measurement; the median is reported.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,

    /// Also time full builds at these thread counts, e.g. `1,8`.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub scaling: Vec<u64>,
}
