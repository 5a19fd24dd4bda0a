use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use devft::analysis::verify_lemma1;
use devft::grouping::grouping_strategy;
use devft::harness::{run_experiment, sweep, sweep_csv, ExperimentConfig, Method, TeacherTask};
use devft::numerics::{symmetric_eigh, Matrix, SymmetricMatrix};
use devft::seeds::{derive_seed, rng_for, stream};
use devft::{Error, Result};

#[derive(Parser)]
#[command(name = "devft", version, about = "Staged federated LoRA tuning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write summary.json, rounds.csv, plot.csv, checkpoint.json.
    Run(Common),
    /// Run one experiment per value of a single axis and write a collated sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// initial_capacity, growth_rate, grouping, fusion or beta
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check the fusion-shift bound on the configured base model for every stage.
    VerifyLemma(Common),
    /// Quick internal consistency checks.
    SelfTest,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// devft or end2end
    #[arg(long)]
    method: Option<String>,
    /// spectral, random or even
    #[arg(long)]
    grouping: Option<String>,
    /// dblf, sum or r_one
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// Stage count for the halving capacity rule; replaces any capacity list.
    #[arg(long)]
    stages: Option<usize>,
    /// Train participants in parallel.
    #[arg(long)]
    parallel: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.method {
            cfg.algorithm.method = m.parse::<Method>()?;
        }
        if let Some(g) = &self.grouping {
            cfg.algorithm.grouping = g.parse()?;
        }
        if let Some(f) = &self.fusion {
            cfg.algorithm.fusion = f.parse()?;
        }
        if let Some(b) = self.beta {
            cfg.algorithm.beta = b;
        }
        if let Some(s) = self.stages {
            let sc = &mut cfg.schedule;
            sc.stages = Some(s);
            sc.capacities = None;
            sc.initial_capacity = None;
            sc.growth_rate = None;
            if let Some(r) = sc.rounds.take() {
                sc.total_rounds = Some(r.iter().sum());
            }
        }
        cfg.parallel |= self.parallel;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(common: &Common) -> Result<()> {
    let out = run_experiment(&common.config()?)?;
    out.write(&common.out)?;
    let s = &out.summary;
    println!(
        "{} seed={} capacities={:?} rounds={} bytes={} compute={} loss {:.6} -> {:.6}",
        s.method,
        s.seed,
        s.capacities,
        s.total_rounds,
        s.total_bytes,
        s.total_compute_units,
        s.initial_loss,
        s.final_loss
    );
    Ok(())
}

fn run_sweep(common: &Common, axis: &str, values: &[String]) -> Result<()> {
    let cfg = common.config()?;
    let results = sweep(&cfg, axis.parse()?, values)?;
    std::fs::create_dir_all(&common.out)?;
    for (row, out) in &results {
        out.write(&common.out.join(format!("{}={}", row.axis, row.value)))?;
    }
    let rows: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
    let table = sweep_csv(&rows)?;
    std::fs::write(common.out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn verify_lemma(common: &Common) -> Result<bool> {
    let cfg = common.config()?;
    let d = &cfg.data;
    let task = TeacherTask::new(&cfg.model, d.teacher_shift, d.components, d.noise, cfg.seed)?;
    let schedule = cfg.stage_schedule()?;
    let mut reports = Vec::new();
    for (s, &cap) in schedule.capacities.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[stream::GROUPING, s as u64]);
        let partition = grouping_strategy(&task.base, cap, schedule.grouping, seed)?;
        let report = verify_lemma1(&task.base, &partition, schedule.beta)?;
        println!(
            "capacity {cap:>3}: shift {:.6e} <= bound {:.6e}  violations {}",
            report.total_shift,
            report.total_bound,
            report.violations.len()
        );
        reports.push(report);
    }
    std::fs::create_dir_all(&common.out)?;
    std::fs::write(common.out.join("lemma.json"), serde_json::to_string_pretty(&reports)?)?;
    Ok(reports.iter().all(|r| r.holds()))
}

fn check(name: &str, ok: bool) -> bool {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn self_test() -> Result<bool> {
    let mut cfg = ExperimentConfig::default();
    cfg.model.layers = 8;
    cfg.model.width = 8;
    cfg.data.clients = 10;
    cfg.data.samples_per_client = 32;
    cfg.schedule.rounds_per_stage = Some(2);
    cfg.schedule.local_steps = 2;
    cfg.schedule.stages = Some(4);
    let staged = run_experiment(&cfg)?;
    cfg.algorithm.method = Method::End2end;
    let baseline = run_experiment(&cfg)?;
    let ratio = staged.summary.total_bytes as f64 / baseline.summary.total_bytes as f64;
    let mut ok = check("four-stage byte ratio 0.46875", ratio == 0.46875);

    cfg.algorithm.method = Method::Devft;
    cfg.parallel = true;
    let parallel = run_experiment(&cfg)?;
    ok &= check(
        "parallel run matches sequential",
        parallel.rounds_csv()? == staged.rounds_csv()? && parallel.summary.final_loss == staged.summary.final_loss,
    );

    let mut rng = rng_for(1, &[]);
    let m = Matrix::from_fn(12, 12, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
    let mut sym = SymmetricMatrix::zeros(12);
    for i in 0..12 {
        for j in i..12 {
            sym.set(i, j, m[(i, j)] + m[(j, i)]);
        }
    }
    let eig = symmetric_eigh(&sym)?;
    let worst = (0..12)
        .map(|t| {
            let v = eig.vector(t);
            let mv = sym.as_matrix().matvec(&v);
            mv.iter()
                .zip(&v)
                .map(|(a, b)| (a - eig.eigenvalues[t] * b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    ok &= check("eigenpair residual <= 1e-8", worst <= 1e-8);
    Ok(ok)
}

fn exit_for(r: Result<bool>) -> ExitCode {
    match r {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    exit_for(match &cli.command {
        Command::Run(c) => run(c).map(|_| true),
        Command::Sweep { common, axis, values } => run_sweep(common, axis, values).map(|_| true),
        Command::VerifyLemma(c) => verify_lemma(c),
        Command::SelfTest => self_test(),
    })
}
