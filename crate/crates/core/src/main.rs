use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cotrain::bench::{bench_keyed, bench_sequential, write_csv, BenchPoint};
use cotrain::config::{dump, parse_config, ConfigErrors};
use cotrain::evaluator::{feasible_set, CompositeVariant, PipelinePoint};
use cotrain::report::{check_report, read_score, write_reports};
use cotrain::storage::{FileRecordSpec, MdsfHeader, SampleStore, MDSF_HEADER_LEN};
use cotrain::supervisor::{run_pipeline, CostKind, RunStatus};
use cotrain::synth::{write_random_records, GaussianStream, Shift};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_NO_TRIGGERS: u8 = 3;

#[derive(Parser)]
#[command(name = "cotrain", version, about = "Continuous-training pipelines in experiment mode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register sample files into a store directory.
    Register(RegisterArgs),
    /// Validate a pipeline configuration and print its normalized form.
    Validate {
        config: PathBuf,
    },
    /// Run a pipeline and write its reports.
    Run(RunArgs),
    /// Measure training throughput of the data loader.
    Bench(BenchArgs),
    /// Report file utilities.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Build the cost/score feasible set of several runs.
    Compare(CompareArgs),
    /// Generate a synthetic dataset and register it.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Check report files (or every report in a directory) against their schema.
    Check { paths: Vec<PathBuf> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mdsf,
    Csv,
    Single,
}

#[derive(Args)]
struct RegisterArgs {
    /// Store directory; created when missing.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_enum, default_value = "mdsf")]
    format: Format,
    /// Label column of CSV files.
    #[arg(long, default_value_t = 0)]
    label_column: usize,
    #[arg(long)]
    has_header: bool,
    /// Label of single-sample files.
    #[arg(long, default_value_t = 0)]
    label: i64,
    #[arg(long, default_value_t = 0)]
    base_timestamp: i64,
    /// File with one timestamp offset per sample, one per line.
    #[arg(long)]
    timestamps: Option<PathBuf>,
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Store directory.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Store directory of fixed-size record files.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    workers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    prefetch: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    parallel: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    storage_threads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100000")]
    partition_size: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Also measure the sequential-file baseline for every worker count.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cost {
    NumTriggers,
    SamplesTrained,
    WallClock,
}

#[derive(Args)]
struct CompareArgs {
    /// Run output directories (each holding a score.json).
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "accuracy")]
    metric: String,
    #[arg(long, value_enum, default_value = "currently-active")]
    variant: Variant,
    #[arg(long, value_enum, default_value = "num-triggers")]
    cost: Cost,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    CurrentlyActive,
    CurrentlyTrained,
}

#[derive(Args)]
struct SynthArgs {
    /// Output store directory; the data file is written inside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Mean shifts as `<sample index>:<offset>`.
    #[arg(long, value_delimiter = ',')]
    shift: Vec<String>,
    #[arg(long, default_value_t = 1)]
    timestamp_step: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random fixed-size records of this many bytes instead of a Gaussian
    /// stream (throughput datasets).
    #[arg(long)]
    random_records: Option<u32>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Self { code: EXIT_VALIDATION, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

fn config_failure(path: &Path, errors: ConfigErrors) -> Failure {
    let list = serde_json::json!({ "file": path, "errors": errors.0 });
    Failure::validation(serde_json::to_string_pretty(&list).expect("error list serializes"))
}

fn load_config(path: &Path) -> Result<cotrain::config::PipelineConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| config_failure(path, e))
}

fn load_store(path: &Path) -> Result<SampleStore, Failure> {
    if !SampleStore::is_store_dir(path) {
        return Err(Failure::validation(format!("{} is not a registered store (run `cotrain register`)", path.display())));
    }
    SampleStore::load(path).map_err(Failure::runtime)
}

fn mdsf_record_bytes(path: &Path) -> Result<u32, Failure> {
    let mut header = [0u8; MDSF_HEADER_LEN as usize];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut header))
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    MdsfHeader::parse(&header)
        .map(|h| h.record_bytes)
        .map_err(|(offset, reason)| Failure::validation(format!("{}: byte {offset}: {reason}", path.display())))
}

fn register(args: RegisterArgs) -> Result<(), Failure> {
    let mut store = if SampleStore::is_store_dir(&args.store) {
        SampleStore::load(&args.store).map_err(Failure::runtime)?
    } else {
        SampleStore::new()
    };
    let offsets = match &args.timestamps {
        None => None,
        Some(p) => Some(
            fs::read_to_string(p)
                .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().parse::<i64>().map_err(|_| Failure::validation(format!("bad timestamp {l:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    if offsets.is_some() && args.files.len() != 1 {
        return Err(Failure::validation("--timestamps needs exactly one file"));
    }
    for file in &args.files {
        let spec = match args.format {
            Format::Mdsf => FileRecordSpec::BinaryFixedRecord { record_bytes: mdsf_record_bytes(file)? },
            Format::Csv => FileRecordSpec::Csv { label_column: args.label_column, has_header: args.has_header },
            Format::Single => FileRecordSpec::SingleSample { label: args.label },
        };
        let keys = store
            .register_file(file, spec, args.base_timestamp, offsets.as_deref())
            .map_err(Failure::validation)?;
        println!("{}: keys {}..{}", file.display(), keys.start, keys.end);
    }
    store.save(&args.store).map_err(Failure::runtime)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config)?;
    let store = Arc::new(load_store(&args.dataset)?);
    let work = args.out.join("work");
    if work.exists() {
        fs::remove_dir_all(&work).map_err(|e| Failure::runtime(format!("{}: {e}", work.display())))?;
    }
    let outcome = run_pipeline(&cfg, store, &work).map_err(Failure::runtime)?;
    let files = write_reports(&outcome, &args.out).map_err(Failure::runtime)?;
    for f in &files {
        println!("{}", f.display());
    }
    if outcome.run.status == RunStatus::NoTriggers {
        eprintln!("no_triggers: the policy never fired; no models were trained");
        return Err(Failure { code: EXIT_NO_TRIGGERS, message: "no_triggers".into() });
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let store = Arc::new(load_store(&args.dataset)?);
    let scratch = tempdir_in(&args.out)?;
    let mut rows = Vec::new();
    for &storage_threads in &args.storage_threads {
        for &partition_size in &args.partition_size {
            for &workers in &args.workers {
                for &prefetch in &args.prefetch {
                    for &parallel in &args.parallel {
                        let point = BenchPoint {
                            workers,
                            prefetch_partitions: prefetch,
                            parallel_requests: parallel,
                            storage_threads,
                            partition_size,
                        };
                        let dir = scratch.join(format!("p{}", rows.len()));
                        let row = bench_keyed(&store, point, args.batch_size, args.repetitions, &dir)
                            .map_err(Failure::runtime)?;
                        eprintln!("{workers}/{prefetch}/{parallel} threads={storage_threads} partition={partition_size}: {:.0} samples/s", row.samples_per_s);
                        rows.push(row);
                    }
                }
            }
        }
    }
    if args.sequential {
        for &workers in &args.workers {
            let row = bench_sequential(&store, workers, args.batch_size, args.repetitions).map_err(Failure::runtime)?;
            eprintln!("sequential {workers}: {:.0} samples/s", row.samples_per_s);
            rows.push(row);
        }
    }
    let _ = fs::remove_dir_all(&scratch);
    write_csv(&rows, &args.out).map_err(Failure::runtime)
}

/// Scratch directory next to `out` for trigger-set files.
fn tempdir_in(out: &Path) -> Result<PathBuf, Failure> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let dir = parent.join(format!(".cotrain-bench-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn report_check(paths: Vec<PathBuf>) -> Result<(), Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&p)
                .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json" || x == "csv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p);
        }
    }
    let mut failed = 0;
    for f in &files {
        match check_report(f) {
            Ok(kind) => println!("ok {} ({kind:?})", f.display()),
            Err(e) => {
                failed += 1;
                println!("invalid {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::validation(format!("{failed} of {} report files are invalid", files.len())));
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let variant = match args.variant {
        Variant::CurrentlyActive => CompositeVariant::CurrentlyActive,
        Variant::CurrentlyTrained => CompositeVariant::CurrentlyTrained,
    };
    let cost = match args.cost {
        Cost::NumTriggers => CostKind::NumTriggers,
        Cost::SamplesTrained => CostKind::SamplesTrained,
        Cost::WallClock => CostKind::WallClockSeconds,
    };
    let mut points = Vec::new();
    for dir in &args.runs {
        let path = if dir.is_dir() { dir.join("score.json") } else { dir.clone() };
        let s = read_score(&path).map_err(Failure::validation)?;
        let (Some(score), Some(intervals), Some(fp)) = (s.score(&args.metric, variant), s.intervals, s.eval_fingerprint)
        else {
            eprintln!("skipping {}: no {} score ({:?})", path.display(), args.metric, s.status);
            continue;
        };
        points.push(PipelinePoint {
            pipeline: s.pipeline,
            score,
            cost: s.costs.get(cost),
            intervals,
            eval_fingerprint: fp,
        });
    }
    let front = feasible_set(&points).map_err(Failure::validation)?;
    let mut csv = String::from("pipeline,cost,score,pareto\n");
    for p in front {
        csv.push_str(&format!("{},{},{},{}\n", p.pipeline, p.cost, p.score, p.pareto));
    }
    match args.out {
        Some(out) => fs::write(&out, csv).map_err(|e| Failure::runtime(format!("{}: {e}", out.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn parse_shift(s: &str) -> Result<Shift, Failure> {
    let (at, offset) = s.split_once(':').ok_or_else(|| Failure::validation(format!("shift {s:?} is not <index>:<offset>")))?;
    Ok(Shift {
        at: at.parse().map_err(|_| Failure::validation(format!("bad shift index {at:?}")))?,
        offset: offset.parse().map_err(|_| Failure::validation(format!("bad shift offset {offset:?}")))?,
    })
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    fs::create_dir_all(&args.out).map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    let path = args.out.join("data.mdsf");
    let store = if let Some(record_bytes) = args.random_records {
        if record_bytes <= 8 {
            return Err(Failure::validation("records need more than 8 bytes"));
        }
        write_random_records(&path, args.samples, record_bytes, args.seed).map_err(Failure::runtime)?;
        let mut store = SampleStore::new();
        store.register_file(&path, FileRecordSpec::BinaryFixedRecord { record_bytes }, 0, None).map_err(Failure::runtime)?;
        store
    } else {
        let spec = GaussianStream {
            samples: args.samples,
            dim: args.dim,
            classes: args.classes,
            separation: args.separation,
            noise: args.noise,
            shifts: args.shift.iter().map(|s| parse_shift(s)).collect::<Result<_, _>>()?,
            timestamp_step: args.timestamp_step,
            seed: args.seed,
        };
        spec.materialize(&path).map_err(Failure::runtime)?
    };
    store.save(&args.out).map_err(Failure::runtime)?;
    println!("{} samples in {}", store.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Register(a) => register(a),
        Command::Validate { config } => load_config(&config).map(|c| print!("{}", dump(&c))),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Report { command: ReportCommand::Check { paths } } => report_check(paths),
        Command::Compare(a) => compare(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if f.code != EXIT_NO_TRIGGERS {
                eprintln!("{}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
