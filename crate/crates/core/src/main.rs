use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use budget_fsl::dataset::{generate_synthetic, load_pool, save_csv, save_dir};
use budget_fsl::gradcheck::{gradcheck, GRADCHECK_TOLERANCE};
use budget_fsl::harness::{compare_policies, run_benchmark, write_anytime, write_summary};
use budget_fsl::trainer::{AdamConfig, IterationLog};
use budget_fsl::{
    LossMode, Params, PolicyConfig, PolicyKind, Pool, Setting, Spec, Split, SyntheticSpec, TaskProtocol, TrainConfig,
    Trainer,
};

#[derive(Parser)]
#[command(name = "budget-fsl", version, about = "Budget-aware few-shot data selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster feature pool.
    Gen(GenArgs),
    /// Meta-train the graph selection policy.
    Train(TrainArgs),
    /// Benchmark one policy on a meta-test pool.
    Eval(EvalArgs),
    /// Benchmark several policies on paired episodes.
    Compare(CompareArgs),
    /// Finite-difference check of the policy gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    per_class: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    spread: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory, or a `.csv` file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "meta-train")]
    split: Split,
    /// First class id; use distinct offsets for disjoint pools.
    #[arg(long, default_value_t = 0)]
    class_offset: u32,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    ways: usize,
    #[arg(long)]
    shots: usize,
    #[arg(long)]
    setting: Setting,
    #[arg(long, default_value_t = 10)]
    unlabeled_per_class: usize,
    #[arg(long, default_value_t = 10)]
    eval_per_class: usize,
}

impl TaskArgs {
    fn protocol(&self) -> TaskProtocol {
        TaskProtocol::new(self.ways, self.shots, self.setting).per_class(self.unlabeled_per_class, self.eval_per_class)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 5e-5)]
    wd: f64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value = "margin")]
    loss: LossMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint every N iterations (0 = only at exit).
    #[arg(long, default_value_t = 0)]
    save_every: usize,
    /// Training log CSV; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    policy: String,
    #[command(flatten)]
    bench: BenchArgs,
    #[arg(long)]
    report: PathBuf,
    /// Also write per-step accuracies to `<report>.anytime.csv`.
    #[arg(long)]
    anytime: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    #[command(flatten)]
    bench: BenchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    count: u64,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec::new(a.classes, a.per_class, a.dim, a.spread, a.seed)
        .class_offset(a.class_offset)
        .split(a.split);
    let pool: Pool = generate_synthetic(&spec)?;
    if a.out.extension().is_some_and(|e| e == "csv") {
        save_csv(&pool, &a.out)?;
    } else {
        save_dir(&pool, &a.out)?;
    }
    eprintln!("wrote {} instances of {} classes to {}", pool.len(), pool.classes().len(), a.out.display());
    Ok(())
}

fn write_log(path: &Path, log: &[IterationLog]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iter,mean_loss,mean_eval_acc")?;
    for l in log {
        writeln!(w, "{},{},{}", l.iter, l.mean_loss, l.mean_eval_acc)?;
    }
    w.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let pool: Pool = load_pool(&a.data)?;
    let protocol = a.task.protocol();
    let policy = PolicyConfig { layers: a.layers, hidden: a.hidden, ..PolicyConfig::new(a.task.ways, a.task.setting, pool.dim()) };
    let config = TrainConfig {
        iterations: a.iters,
        batch_tasks: a.batch,
        optimizer: AdamConfig { learning_rate: a.lr, weight_decay: a.wd, ..AdamConfig::default() },
        loss_mode: a.loss,
        seed: a.seed,
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let mut trainer = Trainer::new(&pool, protocol, &policy, config)?;
    let mut log = Vec::with_capacity(a.iters);
    while !trainer.is_done() {
        let entry = trainer.step()?;
        if entry.iter % 50 == 0 || entry.iter + 1 == a.iters {
            eprintln!("iter {:>5}  loss {:.5}  eval acc {:.4}", entry.iter, entry.mean_loss, entry.mean_eval_acc);
        }
        log.push(entry);
        if a.save_every > 0 && trainer.iteration() % a.save_every == 0 && !trainer.is_done() {
            trainer.params().save(&a.out)?;
            write_log(&log_path, &log)?;
        }
    }
    trainer.params().save(&a.out)?;
    write_log(&log_path, &log)?;
    eprintln!("saved {}", a.out.display());
    Ok(())
}

fn load_checkpoint(path: Option<&Path>, needed: bool) -> anyhow::Result<Option<Arc<Params>>> {
    match path {
        Some(p) => Ok(Some(Arc::new(Params::load(p)?))),
        None if needed => bail!("policy `flgcn` needs --checkpoint"),
        None => Ok(None),
    }
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let b = &a.bench;
    let pool: Pool = load_pool(&b.data)?;
    let kind: PolicyKind = a.policy.parse()?;
    let params = load_checkpoint(b.checkpoint.as_deref(), kind == PolicyKind::FlGcn)?;
    let spec = Spec::parse(&a.policy, params)?;
    let report = run_benchmark(&pool, &spec, &b.task.protocol(), b.episodes, b.seed, a.anytime)?;
    let mut w = create(&a.report)?;
    write_summary(&mut w, &[(report.policy.clone(), Some(report.clone()))])?;
    w.flush()?;
    if a.anytime {
        let path = a.report.with_extension("anytime.csv");
        let mut w = create(&path)?;
        write_anytime(&mut w, &[&report])?;
        w.flush()?;
    }
    println!(
        "{}: acc {:.4} ± {:.4}, classes {:.3} ± {:.3} over {} episodes",
        report.policy, report.mean_acc, report.ci95, report.mean_classes, report.classes_ci95, report.episodes
    );
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let b = &a.bench;
    let pool: Pool = load_pool(&b.data)?;
    let kinds = a.policies.iter().map(|p| p.parse::<PolicyKind>()).collect::<Result<Vec<_>, _>>()?;
    let params = load_checkpoint(b.checkpoint.as_deref(), kinds.contains(&PolicyKind::FlGcn))?;
    let specs = a.policies.iter().map(|p| Spec::parse(p, params.clone())).collect::<Result<Vec<_>, _>>()?;
    let table = compare_policies(&pool, &specs, &b.task.protocol(), b.episodes, b.seed, false)?;
    let mut w = create(&a.out)?;
    write_summary(&mut w, &table.rows)?;
    w.flush()?;
    for (name, r) in &table.rows {
        match r {
            Some(r) => println!("{name:>10}  acc {:.4} ± {:.4}  classes {:.3}", r.mean_acc, r.ci95, r.mean_classes),
            None => println!("{name:>10}  -"),
        }
    }
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> anyhow::Result<bool> {
    let mut ok = true;
    for seed in a.seed..a.seed + a.count.max(1) {
        let report = gradcheck(seed)?;
        for c in &report.cases {
            println!(
                "seed {seed} {:<10} max rel error {:.3e} ({} entries, worst {}[{}])",
                c.label, c.max_rel_error, c.entries, c.worst_block, c.worst_index
            );
        }
        ok &= report.passed();
    }
    println!("{} (tolerance {GRADCHECK_TOLERANCE:e})", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
