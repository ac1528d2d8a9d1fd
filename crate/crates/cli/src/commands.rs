use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sisd::data::{generate_synthetic, flip_noise, write_csv, SchemaConfig};
use sisd::search::SearchParams;
use sisd::session::{Candidate, MineRequest, PatternDetail, TimingRecord};
use sisd::spreadopt::DirectionOptions;
use sisd::{DlParams, Pattern, Session};

use crate::source::{DataSource, Synthetic};

#[derive(Debug, Parser)]
#[command(name = "sisd", version, about = "Interactive discovery of surprising subgroups in real-valued data")]
pub struct Cli {
    /// Directory searched for relative data paths.
    #[arg(long, global = true, env = "SISD_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine and auto-accept the top pattern for a number of iterations.
    Mine(MineArgs),
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
    /// Write the synthetic benchmark dataset as CSV.
    Synth(SynthArgs),
    /// Time model updates over a run of auto-accepted patterns.
    Bench(BenchArgs),
    /// Expected-versus-observed summary of patterns in a saved session.
    Detail(DetailArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Location,
    Both,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated target columns.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// JSON schema config (targets, descriptors, auxiliary, kinds).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Use the synthetic dataset generated with this seed instead of a CSV.
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<u64>,
    /// Flip each synthetic descriptor cell with this probability.
    #[arg(long, default_value_t = 0.0, requires = "synthetic")]
    pub noise: f64,
}

impl DataArgs {
    fn source(&self, data_dir: Option<&Path>) -> anyhow::Result<DataSource> {
        let schema = match &self.schema {
            Some(p) => {
                let p = crate::source::resolve(p, data_dir);
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                Some(SchemaConfig::from_json(&text)?)
            }
            None => None,
        };
        let synthetic = match (&self.data, self.synthetic) {
            (None, None) => Some(0),
            (_, s) => s,
        };
        Ok(DataSource {
            data: self.data.clone(),
            targets: self.targets.clone(),
            schema,
            synthetic: synthetic.map(|seed| Synthetic { seed, noise: self.noise, noise_seed: None }),
        })
    }
}

#[derive(Debug, Args)]
pub struct MiningArgs {
    #[arg(long, default_value_t = 40)]
    pub beam_width: usize,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    /// Percentile split points per numeric descriptor.
    #[arg(long, default_value_t = 4)]
    pub split_points: usize,
    #[arg(long, default_value_t = 150)]
    pub top_log: usize,
    #[arg(long, default_value_t = 2)]
    pub min_coverage: usize,
    /// Seconds allowed per search.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Seed for the spread-direction restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Restrict spread directions to two target attributes.
    #[arg(long)]
    pub sparse: bool,
}

impl MiningArgs {
    pub fn request(&self) -> MineRequest {
        MineRequest {
            search: SearchParams {
                beam_width: self.beam_width,
                max_depth: self.max_depth,
                num_split_points: self.split_points,
                top_log: self.top_log,
                time_limit: self.time_limit,
                min_coverage: self.min_coverage,
            },
            direction: DirectionOptions { restarts: self.restarts, seed: self.seed, ..DirectionOptions::default() },
            sparse: self.sparse,
            ..MineRequest::default()
        }
    }

    pub fn dl(&self) -> anyhow::Result<DlParams> {
        let dl = DlParams { gamma: self.gamma, eta: self.eta };
        dl.validate()?;
        Ok(dl)
    }
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mining: MiningArgs,
    #[arg(long, default_value_t = 3)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Location)]
    pub kind: KindArg,
    /// Emit the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Save the final session here.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flip each binary descriptor cell with this probability.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mining: MiningArgs,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Location)]
    pub kind: KindArg,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetailArgs {
    /// Session file written by `mine --save`.
    #[arg(long)]
    pub session: PathBuf,
    /// Pattern id; every assimilated pattern when absent.
    #[arg(long)]
    pub pattern: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub location: Candidate,
    pub spread: Option<Candidate>,
}

#[derive(Debug, Serialize)]
pub struct MineReport {
    pub n: usize,
    pub targets: Vec<String>,
    pub iterations: Vec<IterationReport>,
    pub timings: Vec<TimingRecord>,
}

fn open_session(data: &DataArgs, mining: &MiningArgs, data_dir: Option<&Path>) -> anyhow::Result<Session> {
    let ds = data.source(data_dir)?.load(data_dir)?;
    Ok(Session::new(ds, mining.dl()?)?)
}

/// Runs `iterations` auto-accept steps, stopping early when nothing is left
/// to mine.
pub fn mine_report(session: &mut Session, request: &MineRequest, iterations: usize, kind: KindArg) -> anyhow::Result<MineReport> {
    let mut out = Vec::new();
    for _ in 0..iterations {
        let mut accepted = session.auto_step(request, kind == KindArg::Both)?.into_iter();
        let Some(location) = accepted.next() else { break };
        out.push(IterationReport { iteration: session.iteration(), location, spread: accepted.next() });
    }
    Ok(MineReport {
        n: session.dataset().n(),
        targets: session.dataset().target_names(),
        iterations: out,
        timings: session.timings().to_vec(),
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn write_candidate(out: &mut impl Write, c: &Candidate) -> std::io::Result<()> {
    let s = &c.score;
    match &c.pattern {
        Pattern::Location(p) => writeln!(
            out,
            "  location  {}  coverage {}  mean {}  IC {:.3}  DL {:.2}  SI {:.3}  [{}]",
            c.description,
            c.coverage,
            fmt_vec(p.mean.as_slice()),
            s.ic,
            s.dl,
            s.si,
            c.id
        ),
        Pattern::Spread(p) => writeln!(
            out,
            "  spread    {}  w {}  variance {:.4}  IC {:.3}  DL {:.2}  SI {:.3}  [{}]",
            c.description,
            fmt_vec(p.direction.as_slice()),
            p.variance,
            s.ic,
            s.dl,
            s.si,
            c.id
        ),
    }
}

pub fn write_report(out: &mut impl Write, report: &MineReport) -> std::io::Result<()> {
    writeln!(out, "{} rows, targets {}", report.n, report.targets.join(", "))?;
    for it in &report.iterations {
        writeln!(out, "iteration {}", it.iteration)?;
        write_candidate(out, &it.location)?;
        if let Some(s) = &it.spread {
            write_candidate(out, s)?;
        }
    }
    Ok(())
}

pub fn run_mine(args: &MineArgs, data_dir: Option<&Path>, out: &mut impl Write) -> anyhow::Result<()> {
    if args.iterations == 0 {
        bail!("--iterations must be positive");
    }
    let mut session = open_session(&args.data, &args.mining, data_dir)?;
    let report = mine_report(&mut session, &args.mining.request(), args.iterations, args.kind)?;
    if args.json {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        writeln!(out)?;
    } else {
        write_report(out, &report)?;
    }
    if let Some(path) = &args.save {
        session.save(path).with_context(|| format!("saving {}", path.display()))?;
    }
    Ok(())
}

pub fn run_synth(args: &SynthArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let mut ds = generate_synthetic(args.seed);
    if args.noise > 0.0 {
        ds = flip_noise(&ds, args.noise, args.seed)?;
    }
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&ds, std::io::BufWriter::new(file))?;
        }
        None => write_csv(&ds, out)?,
    }
    Ok(())
}

pub fn write_timings(out: impl Write, timings: &[TimingRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "iteration", "kind", "seconds", "rounds", "converged", "blocks"])?;
    for t in timings {
        let kind = match t.kind {
            sisd::PatternKind::Location => "location",
            sisd::PatternKind::Spread => "spread",
        };
        w.write_record([
            t.step.to_string(),
            t.iteration.to_string(),
            kind.to_string(),
            format!("{:.6}", t.seconds),
            t.rounds.to_string(),
            t.converged.to_string(),
            t.blocks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_bench(args: &BenchArgs, data_dir: Option<&Path>, out: &mut impl Write) -> anyhow::Result<()> {
    let mut session = open_session(&args.data, &args.mining, data_dir)?;
    mine_report(&mut session, &args.mining.request(), args.iterations, args.kind)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_timings(file, session.timings())
        }
        None => write_timings(out, session.timings()),
    }
}

pub fn run_detail(args: &DetailArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let session = Session::load(&args.session).with_context(|| format!("loading {}", args.session.display()))?;
    let details: Vec<PatternDetail> = match &args.pattern {
        Some(id) => vec![session.pattern_detail(id)?],
        None => session.assimilated().iter().map(|id| session.pattern_detail(id)).collect::<Result<_, _>>()?,
    };
    serde_json::to_writer_pretty(&mut *out, &details)?;
    writeln!(out)?;
    Ok(())
}

pub fn run_serve(args: &ServeArgs, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr).await.with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let app = crate::api::router(crate::api::AppState::new(data_dir));
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let dir = cli.data_dir.as_deref();
    match &cli.command {
        Command::Mine(a) => run_mine(a, dir, &mut out),
        Command::Serve(a) => run_serve(a, cli.data_dir.clone()),
        Command::Synth(a) => run_synth(a, &mut out),
        Command::Bench(a) => run_bench(a, dir, &mut out),
        Command::Detail(a) => run_detail(a, &mut out),
    }
}
