//! `stw`: batch front end over the stepwork engine.
//!
//! Exit codes: 0 success, 2 validation, 3 generation, 4 toolchain, build or
//! filesystem, 5 program runtime failure, 64 usage.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{ArgGroup, Parser, Subcommand};

use commands::{Context, ServeArgs};
use report::{CliError, Output, Report, EXIT_OK, EXIT_USAGE};
use stepwork_service::{ServiceConfig, DEFAULT_HOST, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "stw", version, about = "Build programs from component interactions")]
struct Cli {
    /// Directory of `*.pack.json` files to load instead of the bundled pack.
    #[arg(long, global = true, value_name = "DIR")]
    packs: Option<PathBuf>,
    /// Toolchains file to use instead of the bundled one.
    #[arg(long, global = true, value_name = "FILE")]
    toolchains: Option<PathBuf>,
    /// Print a machine-readable report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled pack, toolchains and a sample session into DIR.
    Init {
        #[arg(default_value = ".")]
        dir: PathBuf,
    },
    /// Component pack utilities.
    Pack {
        #[command(subcommand)]
        command: PackCommand,
    },
    /// Replay a session script into a project file.
    Replay {
        session: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Targets for the project; defaults to the script's, then to all.
        #[arg(long = "target", value_name = "TARGET")]
        targets: Vec<String>,
    },
    /// Generate source files and a manifest.
    #[command(group(ArgGroup::new("which").required(true).args(["target", "all_targets"])))]
    Gen {
        project: PathBuf,
        #[arg(long)]
        target: Option<String>,
        /// One subdirectory per project target.
        #[arg(long)]
        all_targets: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build previously generated sources in place.
    #[command(group(ArgGroup::new("which").required(true).args(["target", "all_targets"])))]
    Build {
        dir: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        all_targets: bool,
    },
    /// Generate, build and run a project's entry goal.
    Run {
        project: PathBuf,
        #[arg(long)]
        target: String,
        /// File fed to the program's standard input.
        #[arg(long, value_name = "FILE")]
        stdin: Option<PathBuf>,
        /// Seconds before the program is killed.
        #[arg(long, value_name = "SECS")]
        timeout: Option<f64>,
    },
    /// Per-goal and total user-step counts.
    Steps { project: PathBuf },
    /// Print a goal's steps tree.
    Tree {
        project: PathBuf,
        /// Goal name or id.
        #[arg(long)]
        goal: String,
        /// Append step ids.
        #[arg(long)]
        ids: bool,
    },
    /// Serve the HTTP API (and the workbench assets, if given).
    Serve {
        #[arg(long, env = "STW_HOST", default_value = DEFAULT_HOST)]
        host: String,
        #[arg(long, env = "STW_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
        /// Allowed CORS origin; repeat for several. Any origin when absent.
        #[arg(long = "cors-origin", value_name = "ORIGIN")]
        cors_origins: Vec<String>,
        /// Upper bound in seconds for one program run.
        #[arg(long, value_name = "SECS")]
        run_timeout: Option<f64>,
    },
}

#[derive(Subcommand)]
enum PackCommand {
    /// Check a pack and list every finding.
    Validate { file: PathBuf },
}

fn seconds(s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s).map_err(|e| CliError::usage("InvalidArgument", format!("bad duration {s}: {e}")))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Init { .. } => "init",
        Command::Pack { .. } => "pack validate",
        Command::Replay { .. } => "replay",
        Command::Gen { .. } => "gen",
        Command::Build { .. } => "build",
        Command::Run { .. } => "run",
        Command::Steps { .. } => "steps",
        Command::Tree { .. } => "tree",
        Command::Serve { .. } => "serve",
    }
}

fn dispatch(ctx: &mut Context, command: Command, json: bool) -> Result<Output, CliError> {
    match command {
        Command::Init { dir } => commands::init(&dir),
        Command::Pack {
            command: PackCommand::Validate { file },
        } => commands::pack_validate(&file),
        Command::Replay {
            session,
            output,
            targets,
        } => commands::replay(ctx, &session, &output, &targets),
        Command::Gen {
            project,
            target,
            output,
            ..
        } => commands::gen(ctx, &project, target.as_deref(), &output),
        Command::Build { dir, target, .. } => commands::build(ctx, &dir, target.as_deref()),
        Command::Run {
            project,
            target,
            stdin,
            timeout,
        } => {
            let timeout = timeout.map(seconds).transpose()?;
            commands::run(ctx, &project, &target, stdin.as_deref(), timeout)
        }
        Command::Steps { project } => commands::steps(ctx, &project),
        Command::Tree { project, goal, ids } => commands::tree(ctx, &project, &goal, ids),
        Command::Serve {
            host,
            port,
            static_dir,
            cors_origins,
            run_timeout,
        } => {
            let args = ServeArgs {
                config: ServiceConfig {
                    host,
                    port,
                    static_dir,
                    cors_origins,
                },
                run_timeout: run_timeout.map(seconds).transpose()?,
            };
            commands::serve_blocking(ctx, args, |url| {
                if json {
                    println!("{}", serde_json::json!({ "command": "serve", "url": url }));
                } else {
                    println!("listening on {url}");
                }
                let _ = std::io::stdout().flush();
            })?;
            Ok(Output::default())
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code as u8);
        }
    };
    let name = command_name(&cli.command);
    let json = cli.json;
    let mut ctx = Context::new(cli.packs, cli.toolchains);
    let (output, error) = match dispatch(&mut ctx, cli.command, json) {
        Ok(mut out) => {
            let failure = out.failure.take();
            (out, failure)
        }
        Err(e) => (Output::default(), Some(e)),
    };
    let exit_code = error.as_ref().map_or(EXIT_OK, |e| e.exit_code);

    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    if json {
        let report = Report {
            command: name.to_string(),
            args,
            outcome: if error.is_none() { "ok" } else { "failed" },
            exit_code,
            items: output.items,
            summary: output.summary,
            error: error.clone(),
        };
        let _ = serde_json::to_writer_pretty(&mut stdout, &report);
        let _ = writeln!(stdout);
    } else {
        let _ = stdout.write_all(&output.stdout);
        let _ = stderr.write_all(&output.stderr);
    }
    if let Some(e) = &error {
        let _ = writeln!(stderr, "error[{}]: {}", e.code, e.message);
    }
    let _ = stdout.flush();
    ExitCode::from(exit_code as u8)
}
