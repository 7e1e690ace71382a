//! `ebrt`: command-line client for the treatment-room simulator.
//!
//! Without `--server` each command starts a private in-process service on
//! a loopback port and talks to it over HTTP, so local and remote runs take
//! the same code path.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use base64::Engine as _;
use clap::{Args, Parser, Subcommand};
use ebrt_client::{Client, SurfaceOptions};
use ebrt_core::ct::phantom::smooth_sphere_stack;
use ebrt_core::ct::{write_slice_stack, SliceStackMeta};
use ebrt_core::geometry::io::MeshFormat;
use ebrt_core::linac::Detail;
use ebrt_core::measure::{Scenario, ScenarioReport};
use ebrt_service::{AppState, RunningService, ServiceConfig, DEFAULT_MAX_UPLOAD_BYTES, DEFAULT_PORT};
use futures::stream::{self, StreamExt};

#[derive(Debug, Parser)]
#[command(name = "ebrt", version, about = "Treatment-room simulator client")]
struct Cli {
    /// Service root URL; omit to run against an embedded service.
    #[arg(long, global = true, env = "EBRT_SERVER")]
    server: Option<String>,
    /// Extra machine/phantom files for the embedded service.
    #[arg(long, global = true, env = "EBRT_MACHINES")]
    machines: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Machine catalog.
    Machines {
        #[command(subcommand)]
        command: MachinesCommand,
    },
    /// CT slice stacks.
    Ct {
        #[command(subcommand)]
        command: CtCommand,
    },
    /// Scenario replay and regression.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Run the HTTP service in the foreground.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum MachinesCommand {
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum CtCommand {
    /// Extract (and optionally decimate) the skin surface of a slice stack.
    Reconstruct {
        stack: PathBuf,
        #[arg(long, default_value_t = ebrt_core::ct::DEFAULT_SKIN_ISO, allow_hyphen_values = true)]
        iso: f64,
        /// Target triangle count.
        #[arg(long)]
        decimate: Option<usize>,
        /// Output mesh; `.obj` writes OBJ, anything else binary STL.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic water-sphere slice stack.
    Phantom {
        dir: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        radius: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 2.0)]
        pixel: f64,
        #[arg(long, default_value_t = 2.5)]
        spacing: f64,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    /// Replay one scenario file.
    Run {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Replay every `*.toml` scenario in a directory; exits 1 on any deviation.
    Suite {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Replay a scenario and store its results as the expected block.
    Record {
        file: PathBuf,
        /// Defaults to overwriting the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "EBRT_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "EBRT_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "EBRT_SCENARIOS", default_value = "scenarios")]
    scenarios: PathBuf,
    #[arg(long, env = "EBRT_MAX_UPLOAD_MB", default_value_t = DEFAULT_MAX_UPLOAD_BYTES / (1024 * 1024))]
    max_upload_mb: usize,
}

/// A client plus the embedded service backing it, if any.
struct Backend {
    client: Client,
    local: Option<RunningService>,
}

impl Backend {
    async fn connect(cli: &Cli, scenario_dir: Option<&Path>) -> Result<Self> {
        if let Some(url) = &cli.server {
            let client = Client::new(url.clone());
            client.health().await.with_context(|| format!("service at {url} is not reachable"))?;
            return Ok(Self { client, local: None });
        }
        let config = ServiceConfig {
            machines_dir: cli.machines.clone(),
            scenario_dir: scenario_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
            ..Default::default()
        };
        let state = tokio::task::spawn_blocking(move || AppState::new(config)).await??;
        let local = ebrt_service::spawn(state, SocketAddr::from(([127, 0, 0, 1], 0))).await?;
        Ok(Self {
            client: Client::new(local.url()),
            local: Some(local),
        })
    }

    fn is_local(&self) -> bool {
        self.local.is_some()
    }

    async fn close(self) -> Result<()> {
        if let Some(s) = self.local {
            s.stop().await?;
        }
        Ok(())
    }
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn file_name(file: &Path) -> Result<String> {
    file.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .with_context(|| format!("{} has no file name", file.display()))
}

/// Replays `file`: by name against the embedded service (whose scenario
/// directory is the file's directory), by content against a remote one.
async fn replay(b: &Backend, file: &Path) -> Result<ScenarioReport> {
    let report = if b.is_local() {
        b.client.run_scenario_file(&file_name(file)?).await
    } else {
        let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        b.client.run_scenario_text(&text).await
    };
    report.with_context(|| format!("running {}", file.display()))
}

fn print_report(r: &ScenarioReport) {
    let s = &r.state;
    println!("scenario {} on {}", r.name, r.machine);
    println!(
        "  gantry {}° collimator {}° couch rot {}° lat {} long {} vert {} mm field {}×{} mm",
        s.gantry_deg,
        s.collimator_deg,
        s.couch_rotation_deg,
        s.couch_lateral_mm,
        s.couch_longitudinal_mm,
        s.couch_vertical_mm,
        s.field_size_mm[0],
        s.field_size_mm[1]
    );
    if !r.attachments.is_empty() {
        println!("  attachments: {}", r.attachments.join(", "));
    }
    for p in &r.pairs {
        let what = if p.colliding { "COLLISION" } else { "clear" };
        println!("  {:<24} {:<10} {:>10.3} mm", format!("{}/{}", p.source, p.target), what, p.distance_mm);
    }
    let beam = if r.beam_couch.colliding {
        format!("beam meets {}", r.beam_couch.highlighted[1..].join(", "))
    } else {
        format!("beam clear by {:.3} mm", r.beam_couch.distance_mm)
    };
    println!("  {beam}");
    for p in &r.probes {
        println!("  probe {:<20} {:>10.3} mm ({:.2} cm)", p.id, p.distance_mm, p.distance_cm);
    }
    if r.checked {
        if r.passed() {
            println!("  matches expected results (max deviation {:e} mm)", r.max_deviation_mm);
        } else {
            for d in &r.deviations {
                println!("  DEVIATION {}: {}", d.item, d.detail);
            }
        }
    }
}

async fn machines_list(cli: &Cli, json: bool) -> Result<ExitCode> {
    let b = Backend::connect(cli, None).await?;
    let m = b.client.machines().await?;
    if json {
        println!("{}", serde_json::to_string_pretty(&m)?);
    } else {
        for x in &m.machines {
            let att: Vec<&str> = x.attachments.iter().map(|a| a.id.as_str()).collect();
            println!("{}\t{}\t{} triangles\tattachments: {}", x.id, x.name, x.triangle_count, att.join(", "));
        }
        for p in &m.phantoms {
            println!("{}\t{}\t{} triangles\tphantom", p.id, p.name, p.triangle_count);
        }
    }
    b.close().await?;
    Ok(ExitCode::SUCCESS)
}

async fn ct_reconstruct(
    cli: &Cli,
    stack: &Path,
    iso: f64,
    decimate: Option<usize>,
    output: &Path,
    json: bool,
) -> Result<ExitCode> {
    let format = MeshFormat::from_path(output).unwrap_or(MeshFormat::Stl);
    let b = Backend::connect(cli, None).await?;
    let opts = SurfaceOptions {
        iso: Some(iso),
        decimate,
    };
    let r = b.client.reconstruct_stack(stack, &opts, format).await?;
    b.close().await?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(&r.mesh_base64)?;
    std::fs::write(output, bytes).with_context(|| format!("writing {}", output.display()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&r.summary)?);
    } else {
        let s = &r.summary;
        println!("iso {} status {:?}", r.iso, r.status);
        println!("triangles {} vertices {} (decimation ratio {:.4})", s.triangle_count, s.vertex_count, r.decimation_ratio);
        println!("volume {:.3} mm³ area {:.3} mm²", s.volume_mm3, s.area_mm2);
        println!("watertight {} euler {}", s.watertight, s.euler_characteristic);
        println!("wrote {}", output.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn ct_phantom(dir: &Path, radius: f64, size: usize, pixel: f64, spacing: f64) -> Result<ExitCode> {
    let meta = SliceStackMeta {
        rows: size,
        cols: size,
        pixel_size_mm: pixel,
        slice_spacing_mm: spacing,
        slices: size,
        slope: 1.0,
        intercept: -1024.0,
        origin_mm: [
            -(size as f64 - 1.0) / 2.0 * pixel,
            -(size as f64 - 1.0) / 2.0 * pixel,
            -(size as f64 - 1.0) / 2.0 * spacing,
        ],
    };
    write_slice_stack(dir, &meta, &smooth_sphere_stack(&meta, radius, 1024, 24))?;
    println!("wrote {size}×{size}×{size} sphere stack (radius {radius} mm) to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

async fn scenario_run(cli: &Cli, file: &Path, json: bool) -> Result<ExitCode> {
    let b = Backend::connect(cli, Some(&parent_dir(file))).await?;
    let r = replay(&b, file).await;
    b.close().await?;
    let r = r?;
    if json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        print_report(&r);
    }
    Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

async fn scenario_suite(cli: &Cli, dir: &Path, json: bool) -> Result<ExitCode> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    let b = Backend::connect(cli, Some(dir)).await?;
    let results: Vec<(PathBuf, Result<ScenarioReport>)> = stream::iter(files)
        .map(|f| {
            let b = &b;
            async move {
                let r = replay(b, &f).await;
                (f, r)
            }
        })
        .buffered(4)
        .collect()
        .await;
    b.close().await?;

    let mut failed = 0;
    let mut unchecked = 0;
    let mut reports = Vec::new();
    for (f, r) in results {
        let name = f.file_name().unwrap_or_default().to_string_lossy().to_string();
        match r {
            Ok(r) => {
                let status = if !r.checked {
                    unchecked += 1;
                    "NO-EXPECTED"
                } else if r.passed() {
                    "PASS"
                } else {
                    "FAIL"
                };
                if status != "PASS" {
                    failed += 1;
                }
                if !json {
                    let hits: Vec<String> =
                        r.pairs.iter().filter(|p| p.colliding).map(|p| format!("{}/{}", p.source, p.target)).collect();
                    let collided = if hits.is_empty() { "no collision".to_string() } else { hits.join(" ") };
                    println!("{status:<11} {name:<44} max dev {:.1e} mm  {collided}", r.max_deviation_mm);
                    for d in &r.deviations {
                        println!("            {}: {}", d.item, d.detail);
                    }
                }
                reports.push(serde_json::json!({ "file": name, "status": status, "report": r }));
            }
            Err(e) => {
                failed += 1;
                if !json {
                    println!("ERROR       {name:<44} {e:#}");
                }
                reports.push(serde_json::json!({ "file": name, "status": "ERROR", "error": format!("{e:#}") }));
            }
        }
    }
    let total = reports.len();
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        println!("{} of {total} scenarios passed ({unchecked} without expected results)", total - failed);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

async fn scenario_record(cli: &Cli, file: &Path, output: Option<&Path>) -> Result<ExitCode> {
    let mut scenario = Scenario::load(file)?;
    scenario.expected = None;
    let b = Backend::connect(cli, Some(&parent_dir(file))).await?;
    let r = b.client.run_scenario_text(&scenario.to_toml()?).await;
    b.close().await?;
    let r = r.with_context(|| format!("running {}", file.display()))?;
    scenario.freeze(&r);
    let out = output.unwrap_or(file);
    std::fs::write(out, scenario.to_toml()?).with_context(|| format!("writing {}", out.display()))?;
    let hits = r.pairs.iter().filter(|p| p.colliding).count();
    println!("recorded {} ({} pairs, {hits} colliding) to {}", r.name, r.pairs.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

async fn serve(cli: &Cli, args: &ServeArgs) -> Result<ExitCode> {
    let config = ServiceConfig {
        machines_dir: cli.machines.clone(),
        scenario_dir: args.scenarios.clone(),
        max_upload_bytes: args.max_upload_mb * 1024 * 1024,
        detail: Detail::default(),
    };
    let state = tokio::task::spawn_blocking(move || AppState::new(config)).await??;
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(
        "serving {} machines on http://{}",
        state.catalog().machines.len(),
        listener.local_addr()?
    );
    ebrt_service::serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(ExitCode::SUCCESS)
}

async fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Machines {
            command: MachinesCommand::List { json },
        } => machines_list(&cli, *json).await,
        Command::Ct { command } => match command {
            CtCommand::Reconstruct {
                stack,
                iso,
                decimate,
                output,
                json,
            } => ct_reconstruct(&cli, stack, *iso, *decimate, output, *json).await,
            CtCommand::Phantom {
                dir,
                radius,
                size,
                pixel,
                spacing,
            } => ct_phantom(dir, *radius, *size, *pixel, *spacing),
        },
        Command::Scenario { command } => match command {
            ScenarioCommand::Run { file, json } => scenario_run(&cli, file, *json).await,
            ScenarioCommand::Suite { dir, json } => scenario_suite(&cli, dir, *json).await,
            ScenarioCommand::Record { file, output } => scenario_record(&cli, file, output.as_deref()).await,
        },
        Command::Serve(args) => serve(&cli, args).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
