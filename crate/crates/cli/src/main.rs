//! `citehist`: parse a Web of Science export into a project file, then run
//! disambiguation, spectroscopy and citation-graph analyses on it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use citehist_core::citegraph::{
    bibliographic_coupling, louvain, shortest_paths_by_id, CouplingMode, CouplingOptions, DEFAULT_SHORTEST_CAP,
};
use citehist_core::corpus::Score;
use citehist_core::disambig::{export_review_file, import_review_file};
use citehist_core::io::{self, tables, ProjectFile, ProjectLock};
use citehist_core::pipeline::Analysis;
use citehist_core::rpys::multi_rpys;
use citehist_core::wos::parse_export;

const PROJECT_ENV: &str = "CITEHIST_HOME";
const DEFAULT_PROJECT: &str = "citehist-project.json";

#[derive(Debug, Parser)]
#[command(name = "citehist", version, about = "Citation-history analysis of Web of Science exports")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Project file [default: $CITEHIST_HOME/citehist-project.json, else ./citehist-project.json]
    #[arg(long, global = true)]
    project: Option<PathBuf>,
    /// Seed for community detection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Similarity threshold for variant clustering, in (0, 1].
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Referenced-year range, `START:END`.
    #[arg(long, global = true)]
    range: Option<String>,
    /// Citing-year segmentation: `per-year`, `bins:N` or `cuts:Y1,Y2`.
    #[arg(long, global = true)]
    segments: Option<String>,
    /// Write the table or network here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Pajek,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an export into the project (keeps an existing ledger).
    Parse { export: PathBuf },
    /// Yearly profile and summary indicators.
    Stats,
    /// Cited-reference variant clustering and review.
    #[command(subcommand)]
    Disambig(DisambigCmd),
    /// Reference publication year spectrum with 5-year median deviation.
    Rpys {
        /// Print the most-referenced table with at least this many citations instead.
        #[arg(long)]
        top: Option<u64>,
        /// Collapse only reviewed clusters in the `--top` table.
        #[arg(long)]
        reviewed_only: bool,
    },
    /// Rank-transformed spectra per citing-year segment.
    MultiRpys,
    /// Citation network, main path, communities and shortest paths.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Bibliographic coupling.
    Coupling {
        #[arg(value_enum)]
        mode: CouplingArg,
        /// Leave this author out of author coupling.
        #[arg(long)]
        exclude_author: Option<String>,
        /// Write Louvain communities of the cosine-weighted network instead of the links.
        #[arg(long)]
        communities: bool,
    },
    /// Network files for external tools.
    #[command(subcommand)]
    Export(ExportCmd),
    /// Start the local HTTP service.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of a built web UI to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum DisambigCmd {
    /// Cluster cited-reference variants automatically.
    Auto,
    /// Write the review file for manual checking.
    ReviewExport,
    /// Turn the actions of an edited review file into ledger decisions.
    ReviewImport {
        file: PathBuf,
        #[arg(long, default_value = "cli")]
        actor: String,
    },
}

#[derive(Debug, Subcommand)]
enum GraphCmd {
    /// In-set citation network.
    Build {
        /// Print the top layer (the N highest-scoring records) instead.
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum, default_value = "lcs")]
        score: ScoreArg,
    },
    /// SPC main path.
    Mainpath,
    /// Louvain communities.
    Communities,
    /// All shortest paths between two records (undirected).
    Shortest {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreArg {
    Lcs,
    Gcs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CouplingArg {
    Docs,
    Authors,
}

#[derive(Debug, Subcommand)]
enum ExportCmd {
    /// Pajek `.net` of the citation or coupling network.
    Pajek {
        #[arg(long, value_enum, default_value = "citation")]
        view: PajekView,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PajekView {
    Citation,
    Coupling,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<citehist_core::Error> for Failure {
    fn from(e: citehist_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", usage_help());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

/// Help text of the deepest subcommand named on the command line.
fn usage_help() -> String {
    let mut cmd = Cli::command();
    for arg in std::env::args().skip(1).filter(|a| !a.starts_with('-')) {
        if let Some(sub) = cmd.find_subcommand(&arg) {
            cmd = sub.clone();
        }
    }
    cmd.render_help().to_string()
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn project_path(g: &Global) -> PathBuf {
    if let Some(p) = &g.project {
        return p.clone();
    }
    match std::env::var_os(PROJECT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(DEFAULT_PROJECT),
        _ => PathBuf::from(DEFAULT_PROJECT),
    }
}

fn load(g: &Global) -> Result<ProjectFile, Failure> {
    let path = project_path(g);
    if !path.exists() {
        return Err(Failure::Data(format!(
            "no corpus loaded in {}; run `citehist parse <export>` first",
            path.display()
        )));
    }
    let mut p = io::load_project_file(&path)?;
    apply_overrides(g, &mut p)?;
    Ok(p)
}

fn apply_overrides(g: &Global, p: &mut ProjectFile) -> CliResult {
    if let Some(s) = g.seed {
        p.settings.seed = s;
    }
    if let Some(t) = g.threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Failure::Usage(format!("--threshold must be in (0, 1], got {t}")));
        }
        p.settings.threshold = t;
    }
    if let Some(r) = &g.range {
        r.parse::<citehist_core::rpys::YearRange>().map_err(|e| Failure::Usage(e.to_string()))?;
        p.settings.rpy_range = Some(r.clone());
    }
    if let Some(s) = &g.segments {
        s.parse::<citehist_core::rpys::Segmentation>().map_err(|e| Failure::Usage(e.to_string()))?;
        p.settings.segmentation = s.clone();
    }
    Ok(())
}

fn lock(path: &Path) -> Result<ProjectLock, Failure> {
    ProjectLock::acquire(path, "cli").map_err(|e| Failure::Data(e.to_string()))
}

fn emit(g: &Global, text: &str) -> CliResult {
    match &g.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Parse { export } => parse(g, export),
        Command::Stats => stats(g),
        Command::Disambig(cmd) => disambig(g, cmd),
        Command::Rpys { top, reviewed_only } => rpys(g, *top, *reviewed_only),
        Command::MultiRpys => {
            let a = Analysis::from_project(&load(g)?)?;
            let h = multi_rpys(&a.corpus, &a.segmentation()?, a.rpy_range()?)?;
            for d in &h.diagnostics {
                eprintln!("warning: {d}");
            }
            emit(g, &tables::heatmap_csv(&h)?)
        }
        Command::Graph(cmd) => graph(g, cmd),
        Command::Coupling { mode, exclude_author, communities } => {
            let a = Analysis::from_project(&load(g)?)?;
            let mode = match mode {
                CouplingArg::Docs => CouplingMode::Document,
                CouplingArg::Authors => CouplingMode::Coauthor,
            };
            let opts = CouplingOptions { exclude_author: exclude_author.clone() };
            let c = bibliographic_coupling(mode, &a.corpus, &a.identity(), &opts);
            if *communities {
                let view = c.to_graph();
                let part = louvain(&view, a.settings.seed, a.settings.resolution);
                eprintln!("{} communities, Q = {}", part.communities, io::fmt_float(part.q));
                return emit(g, &tables::partition_csv(&view, &part)?);
            }
            match g.format {
                Some(Format::Pajek) => {
                    let arcs: Vec<(usize, usize, f64)> = c.edges.iter().map(|e| (e.a, e.b, e.cosine)).collect();
                    emit(g, &io::write_pajek_arcs(&c.entities, &arcs))
                }
                _ => emit(g, &tables::coupling_csv(&c)?),
            }
        }
        Command::Export(ExportCmd::Pajek { view }) => {
            let a = Analysis::from_project(&load(g)?)?;
            let text = match view {
                PajekView::Citation => {
                    let graph = a.graph();
                    let labels: Vec<String> = a.corpus.records().iter().map(|r| r.label()).collect();
                    io::write_pajek(&graph, &labels)
                }
                PajekView::Coupling => {
                    let c = bibliographic_coupling(
                        CouplingMode::Document,
                        &a.corpus,
                        &a.identity(),
                        &CouplingOptions::default(),
                    );
                    let arcs: Vec<(usize, usize, f64)> = c.edges.iter().map(|e| (e.a, e.b, e.cosine)).collect();
                    io::write_pajek_arcs(&c.entities, &arcs)
                }
            };
            emit(g, &text)
        }
        Command::Serve { port, host, static_dir } => serve(g, host, *port, static_dir.clone()),
    }
}

fn parse(g: &Global, export: &Path) -> CliResult {
    let bytes = fs::read(export).map_err(|e| Failure::Data(format!("{}: {e}", export.display())))?;
    let parsed = parse_export(&bytes)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let path = project_path(g);
    let _lock = lock(&path)?;
    let refs = parsed.cited_ref_count();
    let (records, warnings) = (parsed.records.len(), parsed.warnings.len());
    let source = export.display().to_string();
    let mut project = if path.exists() {
        let mut p = io::load_project_file(&path)?;
        if let Some(note) = p.reparse(&bytes, parsed.records, parsed.warnings) {
            eprintln!("warning: {note}; ledger kept and replayed");
        }
        p.source = source;
        p
    } else {
        ProjectFile::new(source, &bytes, parsed.records, parsed.warnings)
    };
    apply_overrides(g, &mut project)?;
    io::save_project_file(&project, &path)?;
    println!(
        "{}, {}, {}",
        plural(records, "record"),
        plural(refs, "cited reference"),
        plural(warnings, "warning")
    );
    Ok(())
}

fn stats(g: &Global) -> CliResult {
    let a = Analysis::from_project(&load(g)?)?;
    let p = a.corpus.yearly_profile(&a.edges.edges);
    let s = &p.summary;
    let mut text = String::new();
    let opt = |x: Option<f64>| x.map(io::fmt_float).unwrap_or_else(|| "n/a".into());
    writeln!(text, "records: {}", s.records).unwrap();
    writeln!(text, "undated records: {}", s.undated_records).unwrap();
    writeln!(text, "cited references: {}", s.total_refs).unwrap();
    writeln!(text, "references per publication: {}", opt(s.refs_per_publication)).unwrap();
    writeln!(text, "times cited (sum): {}", s.times_cited_sum).unwrap();
    writeln!(text, "times cited (mean): {}", opt(s.times_cited_mean)).unwrap();
    writeln!(text, "h-index: {}", s.h_index).unwrap();
    writeln!(text, "local citations: {}", s.local_citations).unwrap();
    match &g.out {
        Some(path) => {
            fs::write(path, tables::profile_csv(&p)?)?;
            print!("{text}");
        }
        None if g.format == Some(Format::Csv) => print!("{}", tables::profile_csv(&p)?),
        None => print!("{text}"),
    }
    Ok(())
}

fn disambig(g: &Global, cmd: &DisambigCmd) -> CliResult {
    let path = project_path(g);
    match cmd {
        DisambigCmd::Auto => {
            let project = load(g)?;
            let a = Analysis::from_project(&project)?;
            for d in &a.replay {
                eprintln!("warning: ledger decision {}: {}", d.decision + 1, d.message);
            }
            let distinct: usize = a.clusters.clusters.iter().map(|c| c.members.len()).sum();
            let variant = a.clusters.clusters.iter().filter(|c| c.members.len() > 1).count();
            // a threshold given here becomes the project default
            if g.threshold.is_some() {
                let _lock = lock(&path)?;
                let mut stored = io::load_project_file(&path)?;
                stored.settings.threshold = project.settings.threshold;
                io::save_project_file(&stored, &path)?;
            }
            if let Some(out) = &g.out {
                fs::write(out, tables::clusters_csv(&a.clusters.clusters)?)?;
            }
            println!(
                "{distinct} distinct references, {} clusters ({variant} with variants), {} review candidates",
                a.clusters.clusters.len(),
                a.clusters.candidates.len()
            );
            Ok(())
        }
        DisambigCmd::ReviewExport => {
            let a = Analysis::from_project(&load(g)?)?;
            emit(g, &export_review_file(&a.clusters))
        }
        DisambigCmd::ReviewImport { file, actor } => {
            let doc = fs::read_to_string(file).map_err(|e| Failure::Data(format!("{}: {e}", file.display())))?;
            let ledger = import_review_file(&doc, actor)?;
            load(g)?;
            let _lock = lock(&path)?;
            let mut project = io::load_project_file(&path)?;
            let n = ledger.len();
            for d in ledger.decisions {
                project.ledger.push(d);
            }
            let a = Analysis::from_project(&project)?;
            for d in &a.replay {
                eprintln!("warning: ledger decision {}: {}", d.decision + 1, d.message);
            }
            io::save_project_file(&project, &path)?;
            println!("{n} decisions imported, ledger now holds {}", project.ledger.len());
            Ok(())
        }
    }
}

fn rpys(g: &Global, top: Option<u64>, reviewed_only: bool) -> CliResult {
    let a = Analysis::from_project(&load(g)?)?;
    if let Some(min) = top {
        return emit(g, &tables::top_referenced_csv(&a.top_referenced(min, reviewed_only))?);
    }
    let (spec, dev) = a.spectrum(a.rpy_range()?)?;
    if spec.undated > 0 || spec.out_of_range > 0 {
        eprintln!("note: {} undated and {} out-of-range references not counted", spec.undated, spec.out_of_range);
    }
    emit(g, &tables::spectrum_csv(&spec, &dev)?)
}

fn graph(g: &Global, cmd: &GraphCmd) -> CliResult {
    let a = Analysis::from_project(&load(g)?)?;
    match cmd {
        GraphCmd::Build { top, score } => {
            for d in &a.edges.diagnostics {
                eprintln!("note: {d}");
            }
            if let Some(n) = top {
                if *n == 0 {
                    return Err(Failure::Usage("--top must be at least 1".into()));
                }
                let score = match score {
                    ScoreArg::Lcs => Score::Lcs,
                    ScoreArg::Gcs => Score::Gcs,
                };
                return emit(g, &tables::top_layer_csv(&a.corpus.top_layer(&a.edges.edges, *n, score)?)?);
            }
            let graph = a.graph();
            if g.format == Some(Format::Pajek) {
                let labels: Vec<String> = a.corpus.records().iter().map(|r| r.label()).collect();
                return emit(g, &io::write_pajek(&graph, &labels));
            }
            if g.out.is_some() || g.format == Some(Format::Csv) {
                emit(g, &tables::edges_csv(&a.edges.edges)?)?;
            }
            let isolated = graph.undirected_neighbors().iter().filter(|n| n.is_empty()).count();
            let msg = format!("{} nodes, {} arcs, {} isolated", graph.node_count(), graph.arcs.len(), isolated);
            if g.out.is_none() && g.format == Some(Format::Csv) {
                eprintln!("{msg}");
            } else {
                println!("{msg}");
            }
            Ok(())
        }
        GraphCmd::Mainpath => {
            let mp = a.main_paths()?;
            for r in &mp.removed {
                eprintln!("note: removed arc {} -> {} ({:?})", r.citing, r.cited, r.reason);
            }
            match &g.out {
                Some(_) => emit(g, &tables::main_path_csv(&mp.dag, &mp.paths)?),
                None if g.format == Some(Format::Csv) => emit(g, &tables::main_path_csv(&mp.dag, &mp.paths)?),
                None => {
                    if mp.paths.is_empty() {
                        println!("no main path (the network has no arcs)");
                    }
                    for (i, p) in mp.paths.iter().enumerate() {
                        println!("path {}: {} (weight {})", i + 1, p.ids.join(" -> "), p.total_weight);
                    }
                    Ok(())
                }
            }
        }
        GraphCmd::Communities => {
            let graph = a.graph();
            let part = a.communities();
            eprintln!("{} communities, Q = {}", part.communities, io::fmt_float(part.q));
            emit(g, &tables::partition_csv(&graph, &part)?)
        }
        GraphCmd::Shortest { from, to } => {
            let paths = shortest_paths_by_id(&a.graph(), from, to, DEFAULT_SHORTEST_CAP)?;
            let mut text = String::new();
            if paths.is_empty() {
                writeln!(text, "no path between {from} and {to}").unwrap();
            }
            for p in &paths {
                writeln!(text, "{}", p.join(" - ")).unwrap();
            }
            emit(g, &text)
        }
    }
}

fn serve(g: &Global, host: &str, port: u16, static_dir: Option<PathBuf>) -> CliResult {
    let path = project_path(g);
    if !path.exists() {
        return Err(Failure::Data(format!("no corpus loaded in {}", path.display())));
    }
    let state = Arc::new(citehist_api::AppState::open(&path)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        citehist_api::serve(listener, state, static_dir).await
    })?;
    Ok(())
}
