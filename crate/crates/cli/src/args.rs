use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "detmeasure", version, about = "Determinantal point process experiments")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,

    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Worker threads for Monte Carlo; 0 lets rayon decide.
    #[arg(long, env = "DETMEASURE_THREADS", default_value_t = 0, global = true)]
    pub threads: usize,

    /// Run the invariant suite of the subcommand's module instead.
    #[arg(long, global = true)]
    pub selftest: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a kernel on a product grid of points.
    KernelEval(KernelEvalArgs),
    /// Residual of the rank-one recurrence between Bessel kernels.
    KernelRecurrence(KernelRecurrenceArgs),
    /// Fredholm determinant det(I + λK) with a resolution check.
    Det(DetArgs),
    /// Partitioned regularized determinant against the plain one.
    DetXi(DetXiArgs),
    /// Probability that a window holds no particles.
    Gap(GapArgs),
    /// The transforms B(g, K) and B̃(g, K) and their identities.
    Transform(TransformArgs),
    /// Exact samples of a Christoffel-Darboux projection process.
    Sample(SampleArgs),
    /// Monte Carlo check of the determinant identities.
    McCheck(McCheckArgs),
    /// Relative masses of an infinite orthogonal polynomial ensemble.
    MassRatio(MassRatioArgs),
    /// Windowed projections of an infinite orthogonal polynomial ensemble.
    OpEnsemble(OpEnsembleArgs),
    /// Scaling limit of the radial kernel to the Bessel kernel.
    ScalingLimit(ScalingLimitArgs),
    /// Distance between windowed projections and the unperturbed one.
    PerturbationConvergence(PerturbationConvergenceArgs),
    /// Convergence of the windowed Bessel perturbation.
    QrConvergence(QrConvergenceArgs),
    /// Normalizing constants of the radial pushforward.
    PickrellConst(PickrellConstArgs),
    /// Monte Carlo radial samples and asymptotic diagnostics.
    RadialMc(RadialMcArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelEval(_) => "kernel-eval",
            Command::KernelRecurrence(_) => "kernel-recurrence",
            Command::Det(_) => "det",
            Command::DetXi(_) => "det-xi",
            Command::Gap(_) => "gap",
            Command::Transform(_) => "transform",
            Command::Sample(_) => "sample",
            Command::McCheck(_) => "mc-check",
            Command::MassRatio(_) => "mass-ratio",
            Command::OpEnsemble(_) => "op-ensemble",
            Command::ScalingLimit(_) => "scaling-limit",
            Command::PerturbationConvergence(_) => "perturbation-convergence",
            Command::QrConvergence(_) => "qr-convergence",
            Command::PickrellConst(_) => "pickrell-const",
            Command::RadialMc(_) => "radial-mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    BesselJ,
    ModifiedBesselK,
    PickrellRadial,
    CdJacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradingArg {
    Uniform,
    TowardLo,
    TowardHi,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelFamily::BesselJ)]
    pub kernel: KernelFamily,
    /// Kernel exponent s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub s: f64,
    /// Rank or matrix size, for the radial and Christoffel-Darboux kernels.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RuleArgs {
    /// Integration interval as lo,hi.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [1e-4, 4.0])]
    pub interval: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub panels: usize,
    #[arg(long, default_value_t = 16)]
    pub nodes_per_panel: usize,
    #[arg(long, value_enum, default_value_t = GradingArg::Uniform)]
    pub grading: GradingArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelEvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    /// Restriction interval of the Christoffel-Darboux kernel as lo,hi.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    pub sub: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelRecurrenceArgs {
    /// Exponents s.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.0, 0.5, 1.0, 2.5])]
    pub s: Vec<f64>,
    /// `default` (20 log-spaced points in (0.01, 100)) or lo,hi,k.
    #[arg(long, default_value = "default")]
    pub grid: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: RuleArgs,
    /// Coupling λ in det(I + λK).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetXiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub det: DetArgs,
    /// Breaks of the partition ξ.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub breaks: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: RuleArgs,
    /// Window as lo,hi.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub window: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CdArgs {
    /// Rank N of the Christoffel-Darboux projection.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Weight exponent s of (1-u)^s.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub s: f64,
    /// Restriction interval as lo,hi inside [-1, 1].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    pub sub: Vec<f64>,
    #[arg(long, default_value_t = 12)]
    pub panels: usize,
    #[arg(long, default_value_t = 16)]
    pub nodes_per_panel: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransformArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cd: CdArgs,
    /// g(u) = a + b u², given as a,b.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.5, 0.5])]
    pub g: Vec<f64>,
    /// f(u) = a + b u², given as a,b, for the determinant chain.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [1.5, -0.5])]
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cd: CdArgs,
    #[arg(long, default_value_t = 10)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cd: CdArgs,
    #[arg(long, default_value_t = 20_000)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// g(u) = a + b u², given as a,b.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.5, 0.5])]
    pub g: Vec<f64>,
    /// Gap window as lo,hi.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.5, 1.0])]
    pub window: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleRuleArgs {
    #[arg(long, default_value_t = 10)]
    pub panels: usize,
    #[arg(long, default_value_t = 24)]
    pub nodes_per_panel: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MassRatioArgs {
    /// Ensemble parameters as s=<exponent>,N=<particles>.
    #[arg(long, default_value = "s=-1.5,N=5", allow_hyphen_values = true)]
    pub ensemble: String,
    /// Increasing cut points b₁ < b₂ < …; E₀ = [-1, b₁].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.0, 0.3, 0.6])]
    pub chain: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: EnsembleRuleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OpEnsembleArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
    pub s: f64,
    /// Upper end of E₀ = [-1, b₁].
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b1: f64,
    /// Upper ends of the windows (b₁, b].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.3, 0.6, 0.9])]
    pub windows: Vec<f64>,
    /// Draws for the empirical particle counts; 0 skips sampling.
    #[arg(long, default_value_t = 0)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: EnsembleRuleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingLimitArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub s: f64,
    /// Matrix sizes n.
    #[arg(long, value_delimiter = ',', default_values_t = [25, 100, 400])]
    pub n: Vec<usize>,
    /// Points per axis of the grid on [0.5, 4]².
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbationConvergenceArgs {
    #[arg(long, default_value_t = 12)]
    pub n: usize,
    #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, default_value_t = 1.0 / 3.0, allow_negative_numbers = true)]
    pub b1: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.6, 0.9, 0.99])]
    pub windows: Vec<f64>,
    /// Probe set as lo,hi inside E₀.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [-1.0 / 3.0, 1.0 / 3.0])]
    pub probe: Vec<f64>,
    /// Also run the windows without the perturbation.
    #[arg(long)]
    pub control: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: EnsembleRuleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QrConvergenceArgs {
    #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 40.0, 160.0])]
    pub radii: Vec<f64>,
    /// Probe set as lo,hi.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0])]
    pub probe: Vec<f64>,
    /// Drop the perturbation and window the unperturbed subspace.
    #[arg(long)]
    pub unperturbed: bool,
    #[arg(long, default_value_t = 1e-5)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 10)]
    pub panels_per_decade: usize,
    /// Largest Bessel phase per panel.
    #[arg(long, default_value_t = 30.0)]
    pub max_phase: f64,
    #[arg(long, default_value_t = 16)]
    pub nodes_per_panel: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PickrellConstArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8, 16, 32, 50])]
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RadialMcArgs {
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of largest scaled points to summarize.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
}
