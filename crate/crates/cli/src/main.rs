use std::fmt::Debug;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use incomplete_ustat::acceptance;
use incomplete_ustat::bounds::{explicit_complete_bound, explicit_conditional_bound, thm_bound, BoundRegime, BoundReport};
use incomplete_ustat::estimators::{incomplete_u, EstimateBundle};
use incomplete_ustat::montecarlo::{
    rate_experiment, resolve_profile, run_experiment, BudgetRule, ExperimentSpec, Regime, SimulationResult,
};
use incomplete_ustat::rng::{domain, stream};
use incomplete_ustat::stein::{
    bennett_mc_check, censor_contraction_check, lemma_a2_suite_with, normal_difference_check, BennettFamily, SlackRecord,
    BENNETT_BOUND,
};
use incomplete_ustat::{sample_design, BernoulliDesign, Dataset, Kernel, SourceLaw};

#[derive(Parser, Debug)]
#[command(
    name = "ustat",
    version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("USTAT_BUILD_DIGEST"), ")"),
    about = "Incomplete U-statistics under a computational budget: estimates, bounds, simulations and checks"
)]
struct Cli {
    /// Base seed for data, designs and Monte Carlo streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 lets rayon decide).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Complete and incomplete estimators on one dataset and one design.
    Estimate(EstimateArgs),
    /// Every term of a bound, plus the total.
    Bounds(BoundsArgs),
    /// Kolmogorov distance of a standardized statistic to N(0, 1).
    Simulate(SimulateArgs),
    /// Kolmogorov distances over a grid of n and their log-log slope.
    Rate(RateArgs),
    /// Built-in verification suites.
    #[command(subcommand)]
    Check(CheckCommand),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// CSV file with one observation per row.
    #[arg(long, conflicts_with_all = ["law", "n"], required_unless_present = "law")]
    data: Option<PathBuf>,
    #[arg(long, requires = "n")]
    law: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Computational budget N.
    #[arg(long = "N")]
    budget: u64,
    /// Centering constant subtracted from the kernel.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// thm31, thm32, thm33, complete or conditional.
    #[arg(long)]
    regime: String,
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    law: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long = "N")]
    budget: Option<u64>,
    /// Use the fourth-moment variant of the lower-tail term.
    #[arg(long)]
    fourth_moment: bool,
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// regime1, regime2, regime3, complete or conditional:<data seed>.
    #[arg(long)]
    regime: String,
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    law: String,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Budget rule: an integer, n^2, sqrt_n or cn:<c>.
    #[arg(long = "N")]
    budget: String,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args, Debug)]
struct RateArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Subcommand, Debug)]
enum CheckCommand {
    /// Stein-solution lemmas, the Bennett bound and censoring properties.
    Appendix {
        /// Random (z, w) pairs on top of the grid.
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
    },
    /// The acceptance criteria (all, or the listed ones).
    Acceptance {
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Check,
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn usage(flag: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{flag}: {e}"))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_law(name: &str) -> Result<SourceLaw, Failure> {
    SourceLaw::from_name(name).map_err(|e| usage("--law", e))
}

fn parse_kernel(name: &str, m: usize) -> Result<Kernel, Failure> {
    Kernel::from_name(name, m).map_err(|e| usage("--kernel", e))
}

fn check_degree(n: usize, m: usize) -> Result<(), Failure> {
    if m < 2 || 2 * m >= n {
        return Err(usage("--m", format!("need 2 <= m < n/2, got n = {n}, m = {m}")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| usage("--threads", e))?;
    }
    let mut out: Box<dyn Write> = match &cli.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| usage("--output", e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "# ustat {} seed={} threads={} {:?}", env!("CARGO_PKG_VERSION"), cli.seed, cli.threads, cli.command)?;
    let res = match &cli.command {
        Command::Estimate(a) => estimate(a, cli.seed, &mut out),
        Command::Bounds(a) => bounds(a, cli.seed, &mut out),
        Command::Simulate(a) => simulate(a, cli, &mut out),
        Command::Rate(a) => rate(a, cli, &mut out),
        Command::Check(CheckCommand::Appendix { pairs }) => appendix(*pairs, cli.seed, &mut out),
        Command::Check(CheckCommand::Acceptance { criterion }) => run_acceptance(criterion, &mut out),
    };
    out.flush()?;
    res
}

fn estimate_row(b: &EstimateBundle) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        num(b.u_complete),
        num(b.u_incomplete),
        num(b.u_incomplete_det),
        num(b.b_n),
        num(b.u_h2),
        num(b.u_abs_h3),
        b.n_hat,
        num(b.p)
    )
}

fn estimate(a: &EstimateArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let kernel = parse_kernel(&a.kernel, a.m)?;
    let data = match (&a.data, &a.law) {
        (Some(path), _) => Dataset::from_csv(path, kernel.obs_dim()).map_err(|e| usage("--data", e))?,
        (None, Some(law)) => {
            let n = a.n.ok_or_else(|| usage("--n", "required with --law"))?;
            Dataset::generate(&parse_law(law)?, n, kernel.obs_dim(), seed)
        }
        (None, None) => return Err(usage("--data", "either --data or --law is required")),
    };
    check_degree(data.n(), a.m)?;
    let design = BernoulliDesign::new(data.n(), a.m, a.budget, seed).map_err(|e| usage("--N", e))?;
    let sd = sample_design(&design, &mut stream(seed, domain::DESIGN, 0));
    let b = incomplete_u(&data, &kernel, &sd, a.mu).map_err(|e| usage("--kernel", e))?;
    if b.approximate {
        writeln!(out, "# u_h2 and u_abs_h3 estimated on an auxiliary subsample")?;
    }
    writeln!(out, "{}", EstimateBundle::CSV_HEADER)?;
    writeln!(out, "{}", estimate_row(&b))?;
    Ok(())
}

fn write_report(r: &BoundReport, out: &mut dyn Write) -> Result<(), Failure> {
    writeln!(
        out,
        "# regime={} constant_known={} surrogate={} inputs={}",
        r.regime,
        r.constant_known,
        r.surrogate,
        r.inputs.digest()
    )?;
    writeln!(out, "term,value")?;
    for (label, v) in &r.terms {
        writeln!(out, "{label},{}", num(*v))?;
    }
    writeln!(out, "total,{}", num(r.total))?;
    Ok(())
}

fn bounds(a: &BoundsArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let regime = BoundRegime::from_name(&a.regime).map_err(|e| usage("--regime", e))?;
    check_degree(a.n, a.m)?;
    let kernel = parse_kernel(&a.kernel, a.m)?;
    let law = parse_law(&a.law)?;
    let need_budget = || a.budget.ok_or_else(|| usage("--N", format!("required for --regime {}", a.regime)));
    let report = match regime {
        BoundRegime::CompleteExplicit => {
            let profile = resolve_profile(&kernel, &law, seed).map_err(|e| usage("--kernel", e))?;
            explicit_complete_bound(&profile, a.n, a.m).map_err(|e| usage("--kernel", e))?
        }
        BoundRegime::ConditionalExplicit => {
            let budget = need_budget()?;
            let profile = resolve_profile(&kernel, &law, seed).map_err(|e| usage("--kernel", e))?;
            let design = BernoulliDesign::new(a.n, a.m, budget, seed).map_err(|e| usage("--N", e))?;
            let data = Dataset::generate(&law, a.n, kernel.obs_dim(), seed);
            let sd = sample_design(&design, &mut stream(seed, domain::DESIGN, 0));
            let bundle = incomplete_u(&data, &kernel, &sd, profile.mean_h).map_err(|e| usage("--kernel", e))?;
            let mut r = explicit_conditional_bound(&bundle, budget, design.p).map_err(|e| usage("--N", e))?;
            r.inputs.n = a.n;
            r.inputs.m = a.m;
            r
        }
        _ => {
            let budget = need_budget()?;
            BernoulliDesign::new(a.n, a.m, budget, seed).map_err(|e| usage("--N", e))?;
            let profile = resolve_profile(&kernel, &law, seed).map_err(|e| usage("--kernel", e))?;
            thm_bound(regime, &profile, a.n, a.m, budget, a.fourth_moment).map_err(|e| usage("--regime", e))?
        }
    };
    write_report(&report, out)
}

fn spec_from(e: &ExperimentArgs, n: usize, cli: &Cli) -> Result<ExperimentSpec, Failure> {
    let regime: Regime = e.regime.parse().map_err(|err| usage("--regime", err))?;
    let budget: BudgetRule = e.budget.parse().map_err(|err| usage("--N", err))?;
    parse_law(&e.law)?;
    parse_kernel(&e.kernel, e.m)?;
    if e.reps == 0 {
        return Err(usage("--reps", "must be positive"));
    }
    Ok(ExperimentSpec {
        law: e.law.clone(),
        kernel: e.kernel.clone(),
        regime,
        n,
        m: e.m,
        budget,
        reps: e.reps,
        seed: cli.seed,
        workers: cli.threads,
    })
}

fn write_result(r: &SimulationResult, out: &mut dyn Write) -> Result<(), Failure> {
    writeln!(out, "{}", r.csv_row())?;
    Ok(())
}

fn simulate(a: &SimulateArgs, cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let spec = spec_from(&a.exp, a.n, cli)?;
    let r = run_experiment(&spec).map_err(|e| usage("--N", e))?;
    writeln!(out, "# digest={}", r.digest)?;
    writeln!(out, "{}", SimulationResult::CSV_HEADER)?;
    write_result(&r, out)
}

fn rate(a: &RateArgs, cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let first = *a.grid.first().ok_or_else(|| usage("--grid", "empty grid"))?;
    let spec = spec_from(&a.exp, first, cli)?;
    let (results, fit) = rate_experiment(&spec, &a.grid).map_err(|e| usage("--grid", e))?;
    writeln!(out, "{}", SimulationResult::CSV_HEADER)?;
    for r in &results {
        write_result(r, out)?;
    }
    writeln!(out, "# rate_fit slope={} intercept={} r2={}", num(fit.slope), num(fit.intercept), num(fit.r2))?;
    Ok(())
}

fn slack_row(r: &SlackRecord, out: &mut dyn Write) -> io::Result<bool> {
    let ok = r.passed();
    writeln!(
        out,
        "{},{},{},{},{},{}",
        r.name,
        r.checked,
        num(r.worst_slack),
        num(r.worst_at.0),
        num(r.worst_at.1),
        if ok { "pass" } else { "FAIL" }
    )?;
    Ok(ok)
}

fn appendix(pairs: usize, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let suite = lemma_a2_suite_with(pairs, seed);
    let mut ok = true;
    writeln!(out, "check,points,worst_slack,at_1,at_2,status")?;
    for r in &suite.records {
        ok &= slack_row(r, out)?;
    }
    let (contraction, upper) = censor_contraction_check(1_000_000, seed);
    ok &= slack_row(&contraction, out)?;
    ok &= slack_row(&upper, out)?;
    ok &= slack_row(&normal_difference_check(), out)?;
    writeln!(out, "bennett_family,estimate,se,bound,status")?;
    for (name, family, n_vars) in [
        ("scaled_rademacher_100", BennettFamily::ScaledRademacher, 100),
        ("rademacher_1", BennettFamily::ScaledRademacher, 1),
        ("scaled_centered_exponential_100", BennettFamily::ScaledCenteredExponential, 100),
        ("zero", BennettFamily::Zero, 10),
    ] {
        let b = bennett_mc_check(family, n_vars, 1_000_000, seed);
        let pass = b.estimate + 5.0 * b.se <= BENNETT_BOUND;
        ok &= pass;
        writeln!(
            out,
            "{name},{},{},{},{}",
            num(b.estimate),
            num(b.se),
            num(BENNETT_BOUND),
            if pass { "pass" } else { "FAIL" }
        )?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run_acceptance(ids: &[usize], out: &mut dyn Write) -> Result<(), Failure> {
    let ids: Vec<usize> = if ids.is_empty() { (1..=acceptance::CRITERIA).collect() } else { ids.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > acceptance::CRITERIA) {
        return Err(usage("--criterion", format!("no criterion {bad}; valid ids are 1 to {}", acceptance::CRITERIA)));
    }
    let mut ok = true;
    for id in ids {
        let o = acceptance::run(id);
        ok &= o.passed;
        writeln!(out, "{}", o.line())?;
        out.flush()?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
