use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use flameforge::backend::{MockBackend, MockConfig, MockServer};
use flameforge::maskgen::{build_palette, PaletteOptions};
use flameforge::pipeline::{merge_reports, run_generate, run_metrics};
use flameforge::{ExperimentConfig, PipelineError};

#[derive(Parser)]
#[command(name = "flameforge", version, about = "Mask-guided wildfire image synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fire-pixel palettes.
    Palette {
        #[command(subcommand)]
        command: PaletteCommand,
    },
    /// Generate datasets for one or more arms.
    Generate(RunArgs),
    /// Score generated arms against a real image set.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        real_dir: Option<PathBuf>,
    },
    /// Merge per-arm reports into one CSV.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the mock backend over the wire protocol.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8700")]
        addr: String,
        #[arg(long, default_value_t = 0)]
        mock_seed: u64,
        #[arg(long)]
        inception_dim: Option<usize>,
        #[arg(long)]
        delay_ms: Option<u64>,
    },
}

#[derive(Subcommand)]
enum PaletteCommand {
    /// Sample fire pixels from YOLO-labelled images into a JSON palette.
    Build {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        fire_class: u32,
        #[arg(long, default_value_t = 100_000)]
        max_pixels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Arm to run; repeat for several. Defaults to every configured arm.
    #[arg(long)]
    arm: Vec<String>,
    #[arg(long)]
    backend_url: Option<String>,
    /// Overrides `base_seed` of the selected arms.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `count` of the selected arms.
    #[arg(long)]
    count: Option<usize>,
    /// Overrides `output_root`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, Vec<String>), PipelineError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        let arms: Vec<String> = if self.arm.is_empty() {
            config.arms.iter().map(|a| a.name.clone()).collect()
        } else {
            for a in &self.arm {
                config.arm(a)?;
            }
            self.arm.clone()
        };
        if let Some(url) = &self.backend_url {
            config.backend.use_url(url);
        }
        if let Some(out) = &self.out {
            config.output_root = out.clone();
        }
        for arm in config.arms.iter_mut().filter(|a| arms.contains(&a.name)) {
            if let Some(seed) = self.seed {
                arm.base_seed = seed;
            }
            if let Some(count) = self.count {
                arm.count = count;
            }
        }
        config.validate()?;
        Ok((config, arms))
    }
}

fn load_config(path: &Path, out: Option<&PathBuf>) -> Result<ExperimentConfig, PipelineError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        config.output_root = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Palette {
            command:
                PaletteCommand::Build {
                    dir,
                    out,
                    fire_class,
                    max_pixels,
                    seed,
                },
        } => {
            if !dir.is_dir() {
                return Err(PipelineError::Config(format!("palette dir {} not found", dir.display())));
            }
            let opts = PaletteOptions {
                fire_class,
                max_pixels,
                seed,
            };
            let palette = build_palette(&dir, &opts)?;
            palette.save(&out)?;
            println!(
                "palette: {} colours from {} images -> {}",
                palette.colors.len(),
                palette.source_count,
                out.display()
            );
        }
        Command::Generate(args) => {
            let (config, arms) = args.load()?;
            let backend = config.backend.build()?;
            for arm in &arms {
                let s = run_generate(&config, arm, backend.as_ref())?;
                println!("{arm}: {} written, {} failed -> {}", s.written, s.failed, s.manifest.display());
            }
        }
        Command::Evaluate { run, real_dir } => {
            let (config, arms) = run.load()?;
            let backend = config.backend.build()?;
            for r in run_metrics(&config, &arms, real_dir.as_deref(), backend.as_ref())? {
                let conf = r.clip_confidence_mean.map_or("NA".to_string(), |c| format!("{c:.4}"));
                println!(
                    "{}: fid {:.4} nfid {:.4} clip {:.4} conf {conf}",
                    r.arm, r.fid, r.nfid, r.clip_score_mean
                );
            }
        }
        Command::Report { config, out } => {
            let config = load_config(&config, out.as_ref())?;
            let (path, _) = merge_reports(&config)?;
            println!("{}", path.display());
        }
        Command::MockServe {
            addr,
            mock_seed,
            inception_dim,
            delay_ms,
        } => {
            let mut mock = MockConfig {
                seed: mock_seed,
                ..MockConfig::default()
            };
            if let Some(d) = inception_dim {
                mock.inception_dim = d;
            }
            let backend = Arc::new(MockBackend::new(mock));
            let server = MockServer::start(&addr, backend, delay_ms.map(Duration::from_millis))
                .map_err(|e| PipelineError::Config(format!("cannot listen on {addr}: {e}")))?;
            println!("listening on {}", server.url());
            server.wait();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
