use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser};
use helikon_cli::scene::{parse_real_list, parse_resolution};
use helikon_cli::{load_scene, run, Command, Flags};

#[derive(Debug, Parser)]
#[command(
    name = "helikon",
    version,
    about = "Minimal-surface laboratory driven by scene files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scene file
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Directory for report and OBJ files
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Check tolerance [default: scene tol, else 1e-10]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated lambda values for `sweep`
    #[arg(long, global = true, value_parser = lambda_list)]
    lambda: Option<Vec<f64>>,
    /// Mesh vertex counts, e.g. 80x80
    #[arg(long, global = true, value_parser = resolution)]
    resolution: Option<(usize, usize)>,
    /// Print the JSON report on stdout
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    json: bool,
    /// Also write the mesh as Wavefront OBJ (mesh and probe)
    #[arg(long, global = true)]
    obj: bool,
}

fn lambda_list(s: &str) -> Result<Vec<f64>, String> {
    let v = parse_real_list(s, 0).map_err(|e| e.to_string())?;
    match v.iter().find(|x| !(**x > 0.0)) {
        Some(bad) => Err(format!("lambda values must be positive, found {bad}")),
        None => Ok(v),
    }
}

fn resolution(s: &str) -> Result<(usize, usize), String> {
    parse_resolution(s, 0).map_err(|e| e.to_string())
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HELIKON_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("HELIKON_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("HELIKON_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn write(dir: &Path, file: String, bytes: &[u8]) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(file);
    std::fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn main_inner(cli: Cli) -> Result<i32, String> {
    init_threads()?;
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(format!("--tol must be positive, got {t}"));
        }
    }
    let path = cli.scene.ok_or("--scene <path> is required")?;
    let scene = load_scene(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let flags = Flags {
        tol: cli.tol,
        lambdas: cli.lambda,
        resolution: cli.resolution,
        obj: cli.obj,
    };
    let outcome =
        run(cli.command, &scene, &flags).map_err(|e| format!("{}: {e}", cli.command.name()))?;
    let bytes = outcome.report.to_bytes();
    if cli.json {
        print!("{}", String::from_utf8_lossy(&bytes));
    }
    let out = cli.out.or_else(|| scene.output_dir.clone());
    let stem = format!("{}.{}", scene.name, cli.command.name());
    if let Some(dir) = &out {
        write(dir, format!("{stem}.json"), &bytes)?;
    }
    if let Some(obj) = &outcome.obj {
        write(
            out.as_deref().unwrap_or(Path::new(".")),
            format!("{stem}.obj"),
            obj,
        )?;
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for failed verdicts.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
