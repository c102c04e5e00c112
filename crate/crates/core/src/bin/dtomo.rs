use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtomo::builder::{build_grid_rays_2d, build_grid_rays_3d, instance_from_image, project, random_image};
use dtomo::harness::{self, ExperimentSpec};
use dtomo::io::{parse_image, parse_instance, serialize_image, serialize_instance};
use dtomo::model::sigma_to_image;
use dtomo::{dynamics, exec, localsearch, Error, MachineConfig, TomographyInstance};

const EXIT_UNSOLVED: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "dtomo", version, about = "Binary discrete tomography with a relaxed-spin Ising machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random image and its projection instance.
    Generate {
        /// WxH or WxHxD.
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_instance: PathBuf,
    },
    /// Reconstruct an image from an instance file.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long = "T", default_value_t = 5.0)]
        stage_time: f64,
        #[arg(long, default_value_t = 600)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        agitations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_image: PathBuf,
        /// Write `t,relaxed_cut` samples here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        trace_stride: usize,
        /// Image shape for the output; inferred from grid rays when omitted.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<Dims>,
    },
    /// Check an image against an instance's projections.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// 1-opt local search baseline.
    LocalSearch {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1000)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Experiment drivers writing CSV tables.
    Bench {
        #[command(subcommand)]
        experiment: Experiment,
    },
}

#[derive(Subcommand)]
enum Experiment {
    SizeSweep(BenchArgs),
    TSweep(BenchArgs),
    Demo3d(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Comma-separated image sides.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated stage durations (t-sweep).
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    images: Option<usize>,
    /// Machine restarts per image (demo volumes for demo3d).
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    ls_restarts: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    /// Volume for demo3d, e.g. 8x8x4.
    #[arg(long, value_parser = parse_dims)]
    volume: Option<Dims>,
    #[arg(long = "T")]
    stage_time: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    agitations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
}

/// Grid extents given as `WxH` or `WxHxD`.
#[derive(Clone, Debug)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> Result<Dims, String> {
    let dims = s
        .split('x')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad extent {t:?} in {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
        return Err(format!("expected WxH or WxHxD with positive extents, got {s:?}"));
    }
    Ok(Dims(dims))
}

/// Failure surfaced to the user as `error[category]: message`.
struct Failure {
    code: u8,
    category: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.category() {
            "infeasible" => EXIT_INFEASIBLE,
            "io" => EXIT_IO,
            _ => EXIT_PARSE,
        };
        Failure {
            code,
            category: e.category(),
            message: e.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        category: "io",
        message: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_IO,
        category: "io",
        message: format!("{}: {e}", path.display()),
    })
}

fn load_instance(path: &Path) -> Result<TomographyInstance, Failure> {
    parse_instance(&read(path)?).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

/// Recover the grid shape when the rays are exactly the axis lines of a
/// 2D or 3D grid; otherwise fall back to a flat image.
fn infer_dims(instance: &TomographyInstance) -> Vec<usize> {
    let rays = instance.rays();
    let n = rays.node_count();
    let r = rays.ray_count();
    let w = rays.ray_len(0);
    if n.is_multiple_of(w) && r > w {
        let h = r - w;
        if w * h == n && build_grid_rays_2d(w, h).is_ok_and(|g| g.rays() == rays.rays()) {
            return vec![w, h];
        }
    }
    for ny in (1..=n / w).filter(|&ny| n.is_multiple_of(w * ny)) {
        let nz = n / (w * ny);
        if ny * nz + w * nz + w * ny == r && build_grid_rays_3d(w, ny, nz).is_ok_and(|g| g.rays() == rays.rays()) {
            return vec![w, ny, nz];
        }
    }
    vec![n]
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Generate {
            dims,
            density,
            seed,
            out_image,
            out_instance,
        } => {
            let image = random_image(&dims.0, density, seed)?;
            let instance = instance_from_image(&image, seed)?;
            write(&out_image, &serialize_image(&image))?;
            write(&out_instance, &serialize_instance(&instance))?;
            Ok(0)
        }
        Command::Solve {
            instance,
            stage_time,
            steps,
            agitations,
            seed,
            out_image,
            trace,
            trace_stride,
            dims,
        } => {
            let instance = load_instance(&instance)?;
            let config = MachineConfig {
                trace_stride: trace.as_ref().map(|_| trace_stride),
                ..MachineConfig::new(stage_time, steps, agitations, seed)?
            };
            config.validate()?;
            let dims = dims.map_or_else(|| infer_dims(&instance), |d| d.0);
            let report = dynamics::run_machine(&instance, &config)?;
            let image = sigma_to_image(&report.final_sigma, &dims)?;
            write(&out_image, &serialize_image(&image))?;
            if let (Some(path), Some(samples)) = (trace, report.cut_trace.as_ref()) {
                let mut text = String::from("t,relaxed_cut\n");
                for (t, c) in samples {
                    text.push_str(&format!("{t},{c}\n"));
                }
                write(&path, &text)?;
            }
            let status = if report.solved { "solved" } else { "unsolved" };
            println!(
                "{status} agitations={} steps={} cut={}",
                report.agitations_used,
                report.steps,
                report.stage_cuts.last().copied().unwrap_or_default()
            );
            if let Some(reason) = &report.failure {
                eprintln!("error[step-overflow]: {reason}");
            }
            Ok(if report.solved { 0 } else { EXIT_UNSOLVED })
        }
        Command::Verify { instance, image } => {
            let instance = load_instance(&instance)?;
            let image = parse_image(&read(&image)?)?;
            if image.len() != instance.node_count() {
                return Err(Failure {
                    code: EXIT_INFEASIBLE,
                    category: "infeasible",
                    message: format!(
                        "image has {} pixels, instance has {} nodes",
                        image.len(),
                        instance.node_count()
                    ),
                });
            }
            let measured = project(&image, instance.rays())?;
            if measured == instance.projections() {
                println!("match");
                return Ok(0);
            }
            for (r, (&got, &want)) in measured.iter().zip(instance.projections()).enumerate() {
                if got != want {
                    println!("ray {r}: expected {want}, got {got} (residual {})", i64::from(got) - i64::from(want));
                }
            }
            Ok(EXIT_UNSOLVED)
        }
        Command::LocalSearch {
            instance,
            restarts,
            seed,
        } => {
            if restarts == 0 {
                return Err(Error::InvalidConfig("restarts must be >= 1".into()).into());
            }
            let instance = load_instance(&instance)?;
            let successes = localsearch::count_successes(&instance, restarts, seed, exec::Execution::default());
            println!(
                "p_succ {} ({successes}/{restarts})",
                successes as f64 / restarts as f64
            );
            Ok(0)
        }
        Command::Bench { experiment } => {
            let (mut spec, args) = match experiment {
                Experiment::SizeSweep(a) => (ExperimentSpec::size_sweep(), a),
                Experiment::TSweep(a) => (ExperimentSpec::t_sweep(), a),
                Experiment::Demo3d(a) => (ExperimentSpec::demo3d(), a),
            };
            if let Some(v) = args.sizes {
                spec.sizes = v;
            }
            if let Some(v) = args.t_grid {
                spec.t_grid = v;
            }
            if let Some(v) = args.images {
                spec.images_per_size = v;
            }
            if let Some(v) = args.restarts {
                spec.restarts = v;
            }
            if let Some(v) = args.ls_restarts {
                spec.local_search_restarts = v;
            }
            if let Some(v) = args.density {
                spec.density = v;
            }
            if let Some(v) = args.volume {
                spec.volume = match v.0[..] {
                    [x, y, z] => [x, y, z],
                    _ => return Err(Error::InvalidDims("volume needs three extents".into()).into()),
                };
            }
            if let Some(v) = args.stage_time {
                spec.machine.stage_time = v;
            }
            if let Some(v) = args.steps {
                spec.machine.steps_per_stage = v;
            }
            if let Some(v) = args.agitations {
                spec.machine.max_agitations = v;
            }
            spec.master_seed = args.seed;
            spec.record_timing = args.timing;
            let rows = exec::with_threads(args.threads, || harness::run_experiment(&spec))?;
            write(&args.csv, &harness::to_csv_string(&rows)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message);
            ExitCode::from(f.code)
        }
    }
}
