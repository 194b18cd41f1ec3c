use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use igasa_bench::config::PipelineConfig;
use igasa_bench::fmt::sig9;
use igasa_bench::io::{load_cloud_auto, load_transform, save_cloud, save_transform, CloudFormat};
use igasa_bench::pipeline::{register_pair, Status};
use igasa_bench::scene::{generate_scene, SceneConfig};
use igasa_bench::suite::{run_to_dir, Suite};
use igasa_bench::config::overlay;
use igasa_core::eval::{rre, rte};
use igasa_core::Transform;

/// Deterministic rigid point-cloud registration.
#[derive(Parser)]
#[command(name = "igasa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud.
    Register {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tar: PathBuf,
        /// Pipeline TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth pose (4 lines of 4 numbers); adds metrics to the report.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Directory for report.json and aligned.ply; the report goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark suite.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Add a wall-clock column to rows.csv (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Generate a synthetic scene: src.ply, tar.ply and gt.txt.
    Gen {
        /// Scene TOML with the keys of a suite [[scene]] table.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated pose with a ground-truth pose.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Register { src, tar, config, gt, out } => {
            let cfg = match &config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            let src_cloud = load_cloud_auto(&src)?;
            let tar_cloud = load_cloud_auto(&tar)?;
            let gt = gt.as_deref().map(load_transform).transpose()?;
            let report = register_pair(&src_cloud, &tar_cloud, &cfg, gt.as_ref());
            match out {
                Some(dir) => {
                    igasa_bench::io::ensure_dir(&dir)?;
                    std::fs::write(dir.join("report.json"), report.to_json())
                        .with_context(|| format!("writing {}", dir.join("report.json").display()))?;
                    if let Some(pose) = &report.transform {
                        let t = Transform::new(
                            nalgebra::Matrix3::from_fn(|i, j| pose.rotation[i][j]),
                            nalgebra::Vector3::from(pose.translation),
                        )?;
                        save_cloud(&t.apply(&src_cloud), &dir.join("aligned.ply"), CloudFormat::PlyAscii)?;
                        save_transform(&t, &dir.join("transform.txt"))?;
                    }
                }
                None => print!("{}", report.to_json()),
            }
            if report.status == Status::Failed {
                bail!("registration failed: {}", report.failure.unwrap_or_default());
            }
        }
        Command::Bench { suite, out, timing } => {
            let suite = Suite::load(&suite)?;
            print!("{}", run_to_dir(&suite, &out, timing)?);
        }
        Command::Gen { scene, seed, out } => {
            let base = match &scene {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", p.display()))?;
                    overlay(&SceneConfig::default(), &table)?
                }
                None => SceneConfig::default(),
            };
            let cfg = SceneConfig { seed, ..base };
            cfg.validate()?;
            let s = generate_scene(&cfg)?;
            igasa_bench::io::ensure_dir(&out)?;
            save_cloud(&s.src, &out.join("src.ply"), CloudFormat::PlyAscii)?;
            save_cloud(&s.tar, &out.join("tar.ply"), CloudFormat::PlyAscii)?;
            save_transform(&s.gt, &out.join("gt.txt"))?;
        }
        Command::Eval { est, gt } => {
            let est = load_transform(&est)?;
            let gt = load_transform(&gt)?;
            println!("rre_deg {}", sig9(rre(est.rotation(), gt.rotation())?));
            println!("rte {}", sig9(rte(est.translation(), gt.translation())));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("IGASA_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: IGASA_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
