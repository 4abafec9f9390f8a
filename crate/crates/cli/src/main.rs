use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use piforge::engine::{self, ActionSelector, StateSelector, Trajectory, Variant};
use piforge::families::{FamilyDescriptor, FamilyKind, FamilyLayout};
use piforge::mdp::{policy_count, Mdp, Policy};
use piforge::suite;
use piforge::verify::{self, Budgets, ClaimReport};

#[derive(Parser)]
#[command(name = "piforge", version, about = "Exact policy iteration experiments on adversarial MDP families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a family instance as MDP JSON plus a layout sidecar.
    Generate(GenerateArgs),
    /// Run one PI variant and log the trajectory as JSON lines.
    Run(RunArgs),
    /// Check claims; exits nonzero if any fails.
    Verify(VerifyArgs),
    /// Run a variant over a grid of instances and emit CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Family descriptor such as F:3,3, G:4,5 or H:3,2.
    #[arg(long)]
    family: FamilyDescriptor,
    /// MDP JSON path; the layout goes next to it as <stem>.layout.json.
    /// Without it the MDP is printed and no sidecar is written.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StateName {
    Howard,
    Simple,
    Random,
    Peculiar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ActionName {
    Index,
    Random,
    Maxq,
    Cyclic,
}

impl From<ActionName> for ActionSelector {
    fn from(a: ActionName) -> Self {
        match a {
            ActionName::Index => ActionSelector::IndexMin,
            ActionName::Random => ActionSelector::RandomUniform,
            ActionName::Maxq => ActionSelector::MaxQ,
            ActionName::Cyclic => ActionSelector::PeculiarCyclic,
        }
    }
}

#[derive(Args, Clone)]
struct VariantArgs {
    /// State selection; defaults to the family's own variant, else howard.
    #[arg(long, value_enum)]
    state_select: Option<StateName>,
    /// Action selection; defaults to the family's own variant, else index.
    #[arg(long, value_enum)]
    action_select: Option<ActionName>,
    /// Simple-PI order from lowest to highest index, comma separated.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "mdp", conflicts_with = "mdp")]
    family: Option<FamilyDescriptor>,
    /// MDP JSON file; a <stem>.layout.json sidecar is used when present.
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// "zeros" or a policy string such as 001·002.
    #[arg(long, default_value = "zeros")]
    init: String,
    #[command(flatten)]
    variant: VariantArgs,
    /// Required for randomised strategies.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    /// Trajectory log path; stdout when absent (summary then goes to stderr).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Claim to check; repeatable. See the README for the list.
    #[arg(long, required_unless_present = "all")]
    claim: Vec<String>,
    /// Run every acceptance criterion and every other checker.
    #[arg(long)]
    all: bool,
    /// Cap on enumerated policy counts k^n.
    #[arg(long, env = "PIFORGE_BUDGET")]
    budget: Option<u128>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Upper end of a size range (h-growth).
    #[arg(long)]
    to: Option<usize>,
    /// Acceptance criterion number for the `criterion` claim.
    #[arg(long)]
    criterion: Option<u8>,
    #[arg(long)]
    family: Option<FamilyDescriptor>,
    #[command(flatten)]
    variant: VariantArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = suite::G_RANDOM_TRIALS)]
    trials: u64,
    /// Emit JSON lines instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// F, G or H.
    #[arg(long)]
    family: FamilyKind,
    /// Size range: 3, 1..4 (inclusive) or 1,2,5.
    #[arg(long)]
    sizes: String,
    #[arg(long)]
    ks: String,
    #[command(flatten)]
    variant: VariantArgs,
    /// Base seed; each cell runs with a seed derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    /// Cells with k^n above this are marked, not run.
    #[arg(long, env = "PIFORGE_BUDGET")]
    budget: Option<u128>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
        Command::Sweep(a) => sweep(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn sidecar_path(mdp_path: &Path) -> PathBuf {
    let stem = mdp_path.file_stem().map_or_else(|| "mdp".into(), |s| s.to_string_lossy().into_owned());
    mdp_path.with_file_name(format!("{stem}.layout.json"))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (mdp, layout) = a.family.build()?;
    let Some(out) = a.out else {
        println!("{}", mdp.to_json());
        return Ok(());
    };
    std::fs::write(&out, mdp.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    let side = sidecar_path(&out);
    let mut doc = serde_json::to_value(&layout)?;
    doc["family"] = a.family.to_string().into();
    doc["split_at"] = serde_json::to_value(layout.split_at())?;
    doc["simple_order"] = serde_json::to_value(layout.simple_order())?;
    std::fs::write(&side, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", side.display()))?;
    println!(
        "{}: {} non-terminal, {} terminal, {} actions -> {}, {}",
        a.family,
        mdp.n_nonterminal(),
        mdp.n_terminal(),
        mdp.n_actions(),
        out.display(),
        side.display()
    );
    Ok(())
}

fn load(family: Option<FamilyDescriptor>, path: Option<&Path>) -> Result<(Mdp, Option<FamilyLayout>)> {
    if let Some(d) = family {
        let (mdp, layout) = d.build()?;
        return Ok((mdp, Some(layout)));
    }
    let path = path.context("either --family or --mdp is required")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mdp = Mdp::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    let side = sidecar_path(path);
    let layout = match std::fs::read_to_string(&side) {
        Ok(t) => Some(serde_json::from_str(&t).with_context(|| format!("parsing {}", side.display()))?),
        Err(_) => None,
    };
    Ok((mdp, layout))
}

fn variant(args: &VariantArgs, layout: Option<&FamilyLayout>, n: usize) -> Result<Variant> {
    if let (None, None, Some(l)) = (args.state_select, args.action_select, layout) {
        let mut v = verify::designated_variant(l);
        if let (StateSelector::Simple { order }, Some(o)) = (&mut v.state, &args.order) {
            order.clone_from(o);
        }
        return Ok(v);
    }
    let state = match args.state_select.unwrap_or(StateName::Howard) {
        StateName::Howard => StateSelector::Howard,
        StateName::Random => StateSelector::RandomSubset,
        StateName::Simple => StateSelector::Simple {
            order: match (&args.order, layout) {
                (Some(o), _) => o.clone(),
                (None, Some(l)) => l.simple_order(),
                (None, None) => (0..n).collect(),
            },
        },
        StateName::Peculiar => match layout {
            Some(l) if l.kind == FamilyKind::F => StateSelector::Peculiar { m: l.size, k: l.k },
            _ => bail!("peculiar state selection needs an F family layout"),
        },
    };
    let action = args.action_select.unwrap_or(ActionName::Index).into();
    Ok(Variant::new(state, action))
}

fn initial(init: &str, mdp: &Mdp, layout: Option<&FamilyLayout>) -> Result<Policy> {
    if init == "zeros" {
        return Ok(layout.map_or_else(|| Policy::zeros(mdp.n_nonterminal()), FamilyLayout::zeros));
    }
    Ok(Policy::parse(init)?)
}

fn summary(traj: &Trajectory, split_at: Option<usize>) -> String {
    let n = traj.len();
    let noun = if n == 1 { "policy" } else { "policies" };
    let last = traj.steps.last().expect("trajectory holds π₀");
    format!(
        "{n} {noun}, final {}\nvalues: {}",
        piforge::codec::render(&last.policy, split_at),
        last.values.to_strings().join(" ")
    )
}

fn run(a: RunArgs) -> Result<()> {
    let (mdp, layout) = load(a.family, a.mdp.as_deref())?;
    let v = variant(&a.variant, layout.as_ref(), mdp.n_nonterminal())?;
    if v.is_random() && a.seed.is_none() {
        bail!("--seed is required for randomised strategies ({v})");
    }
    let start = initial(&a.init, &mdp, layout.as_ref())?;
    let traj = engine::run(&mdp, &start, &v, a.seed.unwrap_or(0), a.max_iters)?;
    let split_at = layout.as_ref().and_then(FamilyLayout::split_at);
    match a.out {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            traj.write_jsonl(&mut w, split_at)?;
            w.flush()?;
            println!("{}", summary(&traj, split_at));
        }
        None => {
            let stdout = io::stdout();
            traj.write_jsonl(stdout.lock(), split_at)?;
            eprintln!("{}", summary(&traj, split_at));
        }
    }
    Ok(())
}

fn need(v: Option<usize>, flag: &str, claim: &str) -> Result<usize> {
    v.with_context(|| format!("claim {claim} needs --{flag}"))
}

fn claim(name: &str, a: &VerifyArgs, budgets: &Budgets) -> Result<Vec<ClaimReport>> {
    let action = || a.variant.action_select.map_or(ActionSelector::IndexMin, Into::into);
    let one = |r: piforge::Result<ClaimReport>| Ok(vec![r?]);
    match name {
        "f-count" => one(verify::check_f(need(a.m, "m", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "f-table" => one(verify::check_f_table()),
        "f-balanced-values" => one(verify::check_balanced_values(need(a.m, "m", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "prop1" => one(verify::check_prop1(need(a.m, "m", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "lemma1" => one(verify::check_lemma1_segments(need(a.m, "m", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "g-index" => one(verify::check_g_index(need(a.n, "n", name)?, need(a.k, "k", name)?)),
        "g-random" => one(verify::check_g_random(need(a.n, "n", name)?, need(a.k, "k", name)?, a.trials, a.seed)),
        "g-harmonic" => Ok(vec![verify::check_g_harmonic(a.k.unwrap_or(64))]),
        "lemma2" => one(verify::check_lemma2(need(a.n, "n", name)?, need(a.k, "k", name)?)),
        "h-embedding" => one(verify::check_h_embedding(need(a.n, "n", name)?, need(a.k, "k", name)?, action(), a.seed)),
        "h-switch-count" => one(verify::check_h_switch_count(need(a.n, "n", name)?, need(a.k, "k", name)?, action(), a.seed)),
        "h-growth" => one(verify::check_h_growth(a.n.unwrap_or(6), a.to.unwrap_or(11))),
        "h-counts" => one(verify::check_h_counts()),
        "h-chance-states" => one(verify::check_h_chance_states(need(a.n, "n", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "h-improving-actions" => one(verify::check_h_improving_actions(need(a.n, "n", name)?, need(a.k, "k", name)?, budgets.oracle)),
        "discount-transfer" => {
            let d = a.family.context("claim discount-transfer needs --family")?;
            one(verify::check_discount_transfer(d, a.seed, budgets.delta))
        }
        "trajectory" => {
            let d = a.family.context("claim trajectory needs --family")?;
            let (mdp, layout) = d.build()?;
            let v = variant(&a.variant, Some(&layout), mdp.n_nonterminal())?;
            let traj = engine::run(&mdp, &layout.zeros(), &v, a.seed, 1_000_000)?;
            Ok(vec![verify::certify_trajectory(&mdp, &traj, budgets.oracle)])
        }
        "criterion" => Ok(suite::criterion(a.criterion.context("claim criterion needs --criterion")?, budgets)?),
        other => bail!("unknown claim {other:?}"),
    }
}

fn emit(reports: &[ClaimReport], json: bool) {
    if json {
        for r in reports {
            println!("{}", r.to_json());
        }
    } else {
        print!("{}", verify::render_table(reports));
    }
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let budgets = a.budget.map_or_else(Budgets::default, Budgets::uniform);
    let mut all_passed = true;
    if a.all {
        for (id, title) in suite::CRITERIA {
            let reports = suite::criterion(id, &budgets)?;
            let bad: Vec<ClaimReport> = reports.iter().filter(|r| !r.passed).cloned().collect();
            all_passed &= bad.is_empty();
            if a.json {
                emit(&reports, true);
            } else {
                let verdict = if bad.is_empty() { "PASS" } else { "FAIL" };
                println!("criterion {id:>2} {verdict}  {title} ({}/{} claims)", reports.len() - bad.len(), reports.len());
                if !bad.is_empty() {
                    emit(&bad, false);
                }
            }
        }
        let extras = suite::extras(&budgets)?;
        all_passed &= extras.iter().all(|r| r.passed);
        if !a.json {
            println!("other checks");
        }
        emit(&extras, a.json);
    }
    let mut reports = Vec::new();
    for name in &a.claim {
        reports.extend(claim(name, &a, &budgets)?);
    }
    if !reports.is_empty() {
        all_passed &= reports.iter().all(|r| r.passed);
        emit(&reports, a.json);
    }
    Ok(all_passed)
}

/// `3`, `1..4` (inclusive), `1..=4` or `1,2,5`.
fn parse_range(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.trim_start_matches('=');
        let (lo, hi): (usize, usize) = (lo.trim().parse()?, hi.trim().parse()?);
        return Ok((lo..=hi).collect());
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|p| Ok(p.trim().parse()?)).collect()
}

struct Row {
    family: FamilyKind,
    size: usize,
    k: usize,
    variant: String,
    seed: u64,
    iterations: Option<usize>,
    converged: String,
    runtime_ms: f64,
}

fn sweep_cell(a: &SweepArgs, budget: u128, index: usize, size: usize, k: usize) -> Row {
    let seed = verify::derive_seed(a.seed, index as u64);
    let mut row = Row {
        family: a.family,
        size,
        k,
        variant: String::new(),
        seed,
        iterations: None,
        converged: String::new(),
        runtime_ms: 0.0,
    };
    let built = FamilyDescriptor::new(a.family, size, k).build();
    let (mdp, layout) = match built {
        Ok(b) => b,
        Err(e) => {
            row.converged = format!("error: {e}");
            return row;
        }
    };
    let v = match variant(&a.variant, Some(&layout), mdp.n_nonterminal()) {
        Ok(v) => v,
        Err(e) => {
            row.converged = format!("error: {e}");
            return row;
        }
    };
    row.variant = v.to_string();
    if policy_count(mdp.n_nonterminal(), mdp.n_actions(), budget).is_err() {
        row.converged = "budget-exceeded".into();
        return row;
    }
    let start = Instant::now();
    let outcome = engine::run(&mdp, &layout.zeros(), &v, seed, a.max_iters);
    row.runtime_ms = start.elapsed().as_secs_f64() * 1000.0;
    match outcome {
        Ok(traj) => {
            row.iterations = Some(traj.len());
            row.converged = "true".into();
        }
        Err(piforge::Error::MaxIterations(_)) => row.converged = "false".into(),
        Err(e) => row.converged = format!("error: {e}"),
    }
    row
}

fn sweep(a: SweepArgs) -> Result<()> {
    let budget = a.budget.unwrap_or(piforge::mdp::DEFAULT_ORACLE_BUDGET);
    let sizes = parse_range(&a.sizes).context("--sizes")?;
    let ks = parse_range(&a.ks).context("--ks")?;
    let cells: Vec<(usize, usize)> = sizes.iter().flat_map(|&s| ks.iter().map(move |&k| (s, k))).collect();
    let rows: Vec<Row> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(s, k))| sweep_cell(&a, budget, i, s, k))
        .collect();
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["family", "size", "k", "variant", "seed", "iterations", "converged", "runtime_ms"])?;
    for r in rows {
        w.write_record([
            r.family.to_string(),
            r.size.to_string(),
            r.k.to_string(),
            r.variant,
            r.seed.to_string(),
            r.iterations.map_or_else(String::new, |i| i.to_string()),
            r.converged,
            format!("{:.3}", r.runtime_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use piforge::rational;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_range("1,3,5").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_range("7").unwrap(), vec![7]);
        assert!(parse_range("3..1").unwrap().is_empty());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn sidecar_next_to_file() {
        assert_eq!(sidecar_path(Path::new("/tmp/f33.json")), PathBuf::from("/tmp/f33.layout.json"));
    }

    #[test]
    fn rational_text_is_exact() {
        assert_eq!(rational::format(&rational::ratio(-10, 3)), "-10/3");
    }
}
