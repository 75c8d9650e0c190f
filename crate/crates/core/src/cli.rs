//! Command-line front end. Metrics go to stdout as `name=value` lines; prose
//! goes to stderr.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or format
//! error, 1 anything else (for example a diverged training run).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, Config};
use crate::error::{Error, Result};
use crate::inference::EvalMode;
use crate::model::{load_params, save_params};
use crate::subjective_logic::{conflict, Opinion};
use crate::synthzsl::{generate, load, read_text_matrix, save, Split, ZslDataset};
use crate::trainer::{
    ablation_csv, evaluate, run_ablation, train_with, write_epochs_csv, AblationTarget, Evaluation,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "crest", version, about = "Evidential cross-modal zero-shot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset directory; writes params.bin and epochs.csv.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved parameters.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: EvalMode,
    },
    /// Fuse two evidence vectors and print the opinions.
    FuseDemo {
        /// Comma-separated evidence values, or a one-row text matrix file.
        #[arg(long = "evidence-a", allow_hyphen_values = true)]
        evidence_a: String,
        #[arg(long = "evidence-b", allow_hyphen_values = true)]
        evidence_b: String,
    },
    /// Train the full model and one ablated variant with the same seed.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        drop: AblationTarget,
        /// Also write the comparison CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps a library error onto the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } | Error::Shape { .. } | Error::Domain(_) => EXIT_DATA,
        Error::Numeric(_) => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn config_or_default(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), load_config)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

fn print_metrics(out: &mut dyn Write, e: &Evaluation, mode: EvalMode) -> Result<()> {
    let text: String = e
        .metrics(mode)
        .into_iter()
        .map(|(name, v)| format!("{name}={v:.4}\n"))
        .collect();
    write_out(out, &text)
}

fn summary(ds: &ZslDataset) -> String {
    let count = |s: Split| ds.split(s).count();
    format!(
        "classes={} seen={} unseen={} attributes={} train_seen={} test_seen={} test_unseen={} instances={}\n",
        ds.semantics.class_count(),
        ds.semantics.seen().len(),
        ds.semantics.unseen().len(),
        ds.semantics.attribute_count(),
        count(Split::TrainSeen),
        count(Split::TestSeen),
        count(Split::TestUnseen),
        ds.instances.len()
    )
}

fn parse_evidence(arg: &str) -> Result<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        let m = read_text_matrix(path)?;
        if m.rows() != 1 && m.cols() != 1 {
            return Err(Error::config("evidence", 0, format!("{arg}: expected a single row, got {:?}", m.shape())));
        }
        return Ok(m.into_data());
    }
    arg.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config("evidence", 0, format!("`{arg}` is neither a file nor comma-separated numbers")))
        })
        .collect()
}

fn opinion_row(name: &str, o: &Opinion, c: f64) -> String {
    let mut cells = vec![name.to_string(), o.uncertainty().to_string(), c.to_string()];
    cells.extend(o.belief().iter().map(f64::to_string));
    cells.extend(o.project().iter().map(f64::to_string));
    cells.join(",") + "\n"
}

fn fuse_demo(a: &str, b: &str) -> Result<String> {
    let (ea, eb) = (parse_evidence(a)?, parse_evidence(b)?);
    if ea.len() != eb.len() || ea.is_empty() {
        return Err(Error::config(
            "evidence",
            0,
            format!("evidence vectors must be nonempty and equally long, got {} and {}", ea.len(), eb.len()),
        ));
    }
    if ea.iter().chain(&eb).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::config("evidence", 0, "evidence must be finite and nonnegative"));
    }
    let k = ea.len();
    let base = vec![1.0 / k as f64; k];
    let oa = Opinion::from_evidence(&ea, &base)?;
    let ob = Opinion::from_evidence(&eb, &base)?;
    let fused = oa.fuse(&ob)?;
    let c = conflict(&oa, &ob)?;
    let mut header = vec!["opinion".to_string(), "u".to_string(), "c".to_string()];
    header.extend((0..k).map(|i| format!("b{i}")));
    header.extend((0..k).map(|i| format!("p{i}")));
    let mut text = header.join(",") + "\n";
    text.push_str(&opinion_row("A", &oa, c));
    text.push_str(&opinion_row("B", &ob, c));
    text.push_str(&opinion_row("fused", &fused, c));
    Ok(text)
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenData { config, out: dir } => {
            let cfg = config_or_default(config.as_deref())?;
            let ds = generate(&cfg.synth)?;
            save(&ds, &dir)?;
            write_out(out, &summary(&ds))?;
        }
        Command::Train { config, data, out: dir } => {
            let cfg = config_or_default(config.as_deref())?;
            let ds = load(&data)?;
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let outcome = train_with(&ds, &cfg.train, |r| {
                let _ = writeln!(
                    err,
                    "epoch {} loss {:.4} u_fused {:.4} conflict {:.4} S {:.4} U {:.4} H {:.4} ACC {:.4} ({:.1}s)",
                    r.epoch, r.loss_total, r.uncertainty_fused, r.conflict, r.seen, r.unseen, r.harmonic, r.czsl, r.seconds
                );
            })?;
            save_params(&dir.join("params.bin"), &outcome.model, &cfg.train)?;
            write_epochs_csv(&dir.join("epochs.csv"), &outcome.reports)?;
            if let Some(last) = outcome.reports.last() {
                let text = format!(
                    "S={:.4}\nU={:.4}\nH={:.4}\nACC={:.4}\n",
                    last.seen, last.unseen, last.harmonic, last.czsl
                );
                write_out(out, &text)?;
            }
        }
        Command::Eval { params, data, mode } => {
            let (model, cfg) = load_params(&params)?;
            let ds = load(&data)?;
            let e = evaluate(&model, &ds, &cfg)?;
            print_metrics(out, &e, mode)?;
        }
        Command::FuseDemo { evidence_a, evidence_b } => {
            write_out(out, &fuse_demo(&evidence_a, &evidence_b)?)?;
        }
        Command::Ablate { config, data, drop, out: csv_path } => {
            let cfg = config_or_default(config.as_deref())?;
            let ds = load(&data)?;
            let _ = writeln!(err, "training full model and variant without {drop}");
            let rows = run_ablation(&ds, &cfg.train, drop)?;
            let csv = ablation_csv(&rows);
            if let Some(p) = csv_path {
                fs::write(&p, &csv).map_err(io_err(&p))?;
            }
            write_out(out, &csv)?;
        }
    }
    Ok(EXIT_OK)
}
