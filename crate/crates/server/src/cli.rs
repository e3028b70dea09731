//! `colotag` command-line interface.
//!
//! Exit codes: 0 success, 1 validation errors, 2 I/O or unreadable
//! project, 3 usage.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use colotag_core::compare::{align_anomalies, compare_cases, summarize_case, AnomalyMatch, AnomalyRef, CompareError};
use colotag_core::ops::compute_phase_times;
use colotag_core::report::{generate_report, render_report, PatientContext, RenderFormat, ReportError};
use colotag_core::store::{load_project, load_project_unchecked, save_project, ProjectFile, StoreError};
use colotag_core::transcript::import_transcript;
use colotag_core::validate::has_errors;
use colotag_core::{validate_timeline, Fps, Timeline, TimelineError, VideoMeta};

use crate::state::valid_procedure_id;
use crate::{serve, ServeConfig, ServeError};

#[derive(Debug, Parser)]
#[command(name = "colotag", version, about = "Colonoscopy procedure timelines: validate, import, report, compare, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Structured,
    Document,
}

impl From<FormatArg> for RenderFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Structured => RenderFormat::Structured,
            FormatArg::Document => RenderFormat::Document,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty project file for a procedure video.
    Init {
        project: PathBuf,
        /// Procedure id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        /// Number of frames in the video.
        #[arg(long)]
        frames: u64,
        /// Frame rate, an integer or a ratio such as 30000/1001.
        #[arg(long)]
        fps: Fps,
        /// Path or URI of the video file.
        #[arg(long)]
        video: Option<String>,
        /// Overwrite an existing project file.
        #[arg(long)]
        force: bool,
    },
    /// Print diagnostics; exits 1 when any is an error.
    Validate { project: PathBuf },
    /// Apply a `<seconds>\t<utterance>` transcript and save the project.
    ImportTranscript { project: PathBuf, file: PathBuf },
    /// Render the latest report, or a fresh draft when none is stored.
    Report {
        project: PathBuf,
        #[arg(long, value_enum, default_value = "structured")]
        format: FormatArg,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render a newly generated draft even if a report is stored.
        #[arg(long)]
        fresh: bool,
    },
    /// Write the comparison table as CSV. With two projects, also print the
    /// anomaly alignment.
    Compare {
        #[arg(required = true, num_args = 1..)]
        projects: Vec<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = colotag_core::compare::DEFAULT_MATCH_THRESHOLD_CM)]
        threshold_cm: i64,
    },
    /// Print insertion, cecum and withdrawal times as JSON.
    PhaseTimes { project: PathBuf },
    /// Run the HTTP API over a directory of project files.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Usage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) | CliError::Usage(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidTimeline(diags) => CliError::Validation(diagnostic_lines(&diags)),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TimelineError> for CliError {
    fn from(e: TimelineError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidTimeline(diags) => CliError::Validation(diagnostic_lines(&diags)),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<CompareError> for CliError {
    fn from(e: CompareError) -> Self {
        match e {
            CompareError::InvalidTimeline { procedure_id, diagnostics } => {
                CliError::Validation(format!("{procedure_id}:\n{}", diagnostic_lines(&diagnostics)))
            }
            CompareError::BadThreshold(_) => CliError::Usage(e.to_string()),
            CompareError::EmptyInput => CliError::Usage(e.to_string()),
        }
    }
}

fn diagnostic_lines(diags: &[colotag_core::Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Init { project, id, frames, fps, video, force } => init(&project, id, frames, fps, video, force, out),
        Command::Validate { project } => validate(&project, out),
        Command::ImportTranscript { project, file } => import(&project, &file, out),
        Command::Report { project, format, out: path, fresh } => report(&project, format.into(), path, fresh, out),
        Command::Compare { projects, out: path, threshold_cm } => compare(&projects, path, threshold_cm, out),
        Command::PhaseTimes { project } => phase_times(&project, out),
        Command::Serve { port, data_dir, host } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime
                .block_on(serve(ServeConfig { addr: SocketAddr::new(host, port), data_dir }))
                .map_err(|e| match e {
                    ServeError::BindFailure { .. } | ServeError::Io(_) | ServeError::DataDir(_) => CliError::Io(e.to_string()),
                })
        }
    }
}

fn init(
    path: &Path,
    id: Option<String>,
    frames: u64,
    fps: Fps,
    video: Option<String>,
    force: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let id = match id {
        Some(id) => id,
        None => path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| CliError::Usage(format!("cannot derive a procedure id from {}", path.display())))?,
    };
    if !valid_procedure_id(&id) {
        return Err(CliError::Usage(format!("invalid procedure id {id:?}")));
    }
    if path.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    let mut meta = VideoMeta::new(format!("{id}-video"), frames, fps).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(uri) = video {
        meta = meta.with_source_uri(uri);
    }
    let saved = save_project(path, &ProjectFile::new(Timeline::new(id, meta)))?;
    writeln!(out, "created {} (revision {})", path.display(), saved.revision)?;
    Ok(())
}

fn validate(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let project = load_project_unchecked(path)?;
    let diags = validate_timeline(&project.timeline);
    for d in &diags {
        writeln!(out, "{d}")?;
    }
    if has_errors(&diags) {
        let errors = diags.iter().filter(|d| d.is_error()).count();
        return Err(CliError::Validation(format!("{}: {errors} error(s)", path.display())));
    }
    writeln!(out, "{}: ok, {} warning(s)", path.display(), diags.len())?;
    Ok(())
}

fn import(path: &Path, file: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let project = load_project(path)?;
    let raw = std::fs::read_to_string(file)?;
    let import = import_transcript(&project.timeline, &raw)?;
    for m in &import.malformed {
        eprintln!("{}:{}: {}", file.display(), m.line_number, m.reason);
    }
    for d in &import.diagnostics {
        writeln!(out, "{d}")?;
    }
    let saved = save_project(
        path,
        &ProjectFile {
            timeline: import.timeline,
            ..project
        },
    )?;
    writeln!(
        out,
        "imported {} event(s), skipped {} malformed line(s); revision {}",
        import.events,
        import.malformed.len(),
        saved.revision
    )?;
    Ok(())
}

fn write_output(path: Option<PathBuf>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => out.write_all(bytes).map_err(CliError::from),
    }
}

fn report(path: &Path, format: RenderFormat, target: Option<PathBuf>, fresh: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let project = load_project(path)?;
    let report = match project.latest_report() {
        Some(r) if !fresh => r.clone(),
        _ => generate_report(&project.timeline, &PatientContext::new())?,
    };
    write_output(target, &render_report(&report, format), out)
}

fn describe(side: &Option<AnomalyRef>) -> String {
    match side {
        Some(a) => {
            let distance = a.distance_cm.map_or_else(|| "?".to_string(), |d| format!("{d} cm"));
            format!("{} {} ({distance})", a.procedure_id, a.annotation_id)
        }
        None => "-".to_string(),
    }
}

fn alignment_line(m: &AnomalyMatch) -> String {
    let any = m.left.as_ref().or(m.right.as_ref()).expect("one side present");
    let segment = any.segment.map_or("unlocated", |s| s.display_name());
    let delta = m.delta_distance_cm.map_or_else(String::new, |d| format!(" delta {d:+} cm"));
    format!(
        "{:?}\t{} in {segment}\t{} <-> {}{delta}",
        m.status,
        any.label.display_name(),
        describe(&m.left),
        describe(&m.right)
    )
}

fn compare(paths: &[PathBuf], target: Option<PathBuf>, threshold: i64, out: &mut dyn Write) -> Result<(), CliError> {
    let mut summaries = Vec::with_capacity(paths.len());
    for p in paths {
        summaries.push(summarize_case(&load_project(p)?.timeline)?);
    }
    let table = compare_cases(&summaries)?;
    let alignment = match summaries.as_slice() {
        [l, r] => Some(align_anomalies(l, r, threshold)?),
        _ => None,
    };
    let to_stdout = target.is_none();
    write_output(target, table.to_csv().as_bytes(), out)?;
    if let Some(matches) = alignment {
        if to_stdout {
            writeln!(out)?;
        }
        for m in &matches {
            writeln!(out, "{}", alignment_line(m))?;
        }
    }
    Ok(())
}

fn phase_times(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let project = load_project(path)?;
    let times = compute_phase_times(&project.timeline);
    let value = serde_json::json!({
        "procedure_id": project.timeline.procedure_id,
        "insertion_s": times.insertion_s,
        "cecum_dwell_s": times.cecum_dwell_s,
        "withdrawal_s": times.withdrawal_s,
        "complete": times.complete,
        "phase_ratio_warning": times.is_slow_insertion(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&value).expect("json value"))?;
    Ok(())
}
