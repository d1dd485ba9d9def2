use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otto_align::align::{describe_ottawa, ottawa_align, Strategy, ThresholdMode};
use otto_align::embedding_io::read_records;
use otto_align::evaluation::ScoreKind;
use otto_align::geometry::NullDistance;
use otto_align::pipeline::{self, ConfigFile, PipelineError, RunConfig, RunSummary, JOBS_ENV};

#[derive(Parser)]
#[command(name = "otto-align", version, about = "Optimal-transport word alignment with null alignment and hallucination/omission scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align every record and write one Pharaoh line per record.
    Align(RunArgs),
    /// Score hallucination and omission for every record as JSON lines.
    Detect(RunArgs),
    /// Corpus AER of Pharaoh predictions against gold alignments.
    EvalAer {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// ROC AUC of detection scores against severity labels.
    EvalAuc {
        #[arg(long)]
        scores: PathBuf,
        /// JSONL with pair_id and hallucination/omission labels, or a record file with a labels object.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "hallucination")]
        kind: ScoreKind,
        #[arg(long)]
        json: bool,
    },
    /// Print cost matrix, null geometry, plans and alignment for records.
    Inspect {
        #[command(flatten)]
        run: RunArgs,
        /// Only show this pair.
        #[arg(long)]
        pair_id: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Input record file; stdin when omitted or `-`.
    input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    pot_mass: Option<f64>,
    #[arg(long)]
    pot_tau: Option<f64>,
    #[arg(long)]
    pot_tau_mode: Option<ThresholdMode>,
    #[arg(long)]
    null_distance: Option<NullDistance>,
    #[arg(long)]
    paper_literal_eq78: bool,
    #[arg(long)]
    normalize_before_pool: bool,
    #[arg(long)]
    emit_null: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig, PipelineError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            strategy: self.strategy,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            tol: self.tol,
            stabilized: None,
            pot_mass: self.pot_mass,
            pot_tau: self.pot_tau,
            pot_tau_mode: self.pot_tau_mode,
            null_distance: self.null_distance,
            paper_literal_eq78: self.paper_literal_eq78.then_some(true),
            normalize_before_pool: self.normalize_before_pool.then_some(true),
            emit_null: self.emit_null.then_some(true),
            strict: self.strict.then_some(true),
            jobs: self.jobs,
        };
        let env_jobs = match std::env::var(JOBS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| PipelineError::Config(format!("{JOBS_ENV}={v} is not a count")))?),
            Err(_) => None,
        };
        file.merged_with(flags).into_run_config(env_jobs)
    }

    fn input(&self) -> io::Result<Box<dyn BufRead>> {
        match &self.input {
            Some(p) if p != Path::new("-") => Ok(Box::new(BufReader::new(File::open(p)?))),
            _ => Ok(Box::new(BufReader::new(io::stdin()))),
        }
    }

    fn output(&self) -> io::Result<Box<dyn Write>> {
        match &self.output {
            Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
            None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        }
    }
}

fn open(path: &Path) -> io::Result<BufReader<File>> {
    File::open(path).map(BufReader::new)
}

fn report_run(summary: &RunSummary) -> ExitCode {
    if summary.warned > 0 {
        eprintln!("{} record(s) finished with solver warnings", summary.warned);
    }
    if summary.success() {
        return ExitCode::SUCCESS;
    }
    for f in &summary.failures {
        eprintln!("error: {}: {}", f.id, f.message);
    }
    let tail = if summary.aborted { ", stopped (--strict)" } else { "" };
    eprintln!("{} record(s) failed, {} written{tail}", summary.failures.len(), summary.written);
    ExitCode::from(2)
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Align(args) => {
            let cfg = args.run_config()?;
            let summary = pipeline::run_align(args.input()?, args.output()?, &cfg)?;
            Ok(report_run(&summary))
        }
        Command::Detect(args) => {
            let cfg = args.run_config()?;
            let summary = pipeline::run_detect(args.input()?, args.output()?, &cfg)?;
            Ok(report_run(&summary))
        }
        Command::EvalAer { pred, gold, json } => {
            let report = pipeline::eval_aer(open(&pred)?, open(&gold)?)?;
            if json {
                println!("{}", serde_json::to_string(&report).expect("serializable"));
            } else {
                let c = report.counts;
                println!("sentences  {}", report.sentences);
                println!("aer        {:.6}", report.aer);
                println!("|A∩S|      {}", c.a_and_s);
                println!("|A∩P|      {}", c.a_and_p);
                println!("|A|        {}", c.predicted);
                println!("|S|        {}", c.sure);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalAuc { scores, labels, kind, json } => {
            let report = pipeline::eval_auc(open(&scores)?, open(&labels)?, kind)?;
            if json {
                println!("{}", serde_json::to_string(&report).expect("serializable"));
            } else {
                let splits: Vec<String> = report.multiclass.splits_used.iter().map(u8::to_string).collect();
                println!("kind             {kind:?}");
                println!("pairs            {}", report.pairs);
                println!("binary auc       {:.6}", report.binary_auc);
                println!("multiclass auc   {:.6} (approximation, splits {})", report.multiclass.auc, splits.join(","));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { run, pair_id } => {
            let cfg = run.run_config()?;
            let mut out = run.output()?;
            let mut failed = false;
            for item in read_records(run.input()?, cfg.read) {
                let record = match item {
                    Ok(r) => r,
                    Err(e) => {
                        eprintln!("error: {e}");
                        failed = true;
                        continue;
                    }
                };
                if pair_id.as_deref().is_some_and(|id| id != record.pair_id) {
                    continue;
                }
                match ottawa_align(&record, &cfg.aligner) {
                    Ok(o) => writeln!(out, "{}", describe_ottawa(&record, &o))?,
                    Err(e) => {
                        eprintln!("error: {}: {e}", record.pair_id);
                        failed = true;
                    }
                }
            }
            out.flush()?;
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
