use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use isocast::api::render_depth_image;
use isocast::bench::{run_sweep, speedup_strictly_increasing, to_csv};
use isocast::config::{Config, FailureModelConfig};
use isocast::curriculum::{
    discretize, simulate_curriculum_with, BinHazard, BinTable, CurriculumSettings, FailureModel, FixedFailure,
    NeverFail,
};
use isocast::depth::{run_pipeline, DepthImage};
use isocast::image_io::{read_pfm, write_pfm, write_pgm16};
use isocast::metrics::{mean_tracking_errors, mpjpe, reward, ErrorVector, Frame};
use isocast::motion::{MotionClip, MotionFrame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "isocast", version, about = "Grouped depth ray casting, sensor noise and curriculum tools")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the noise seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ray casting (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "ISOCAST_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time grouped against naive casting over the configured group sweep.
    Bench,
    /// Render raw and processed depth images of the configured scene.
    Render {
        /// Separate TOML file whose [scene] replaces the config's scene.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Apply the noise and inpainting chain to every PFM in a directory.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the adaptive sampling loop against a synthetic failure model.
    CurriculumSim {
        /// Motion clip files; the configured durations are used when absent.
        #[arg(long = "clip")]
        clips: Vec<PathBuf>,
    },
    /// MPJPE and tracking errors between two motion clip files.
    Metrics { state: PathBuf, reference: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    let mut config = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = g.seed {
        config.noise.seed = seed;
    }
    let seed = g.seed.unwrap_or(0);
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    match &cli.command {
        Command::Bench => bench(&config, seed, &g.out),
        Command::Render { scene } => {
            if let Some(path) = scene {
                config.scene = Config::load(path)?.scene;
                config.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            }
            render(&config, &g.out)
        }
        Command::Pipeline { input } => pipeline(&config, input, &g.out),
        Command::CurriculumSim { clips } => curriculum_sim(&config, clips, seed, &g.out),
        Command::Metrics { state, reference } => metrics(&config, state, reference, &g.out),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn bench(config: &Config, seed: u64, out: &Path) -> Result<()> {
    let points = run_sweep(&config.bench, seed)?;
    let monotone = speedup_strictly_increasing(&points);
    let mut text = config.header_comment();
    let _ = writeln!(text, "# seed = {seed}");
    text.push_str(&to_csv(&points));
    write(&out.join("bench.csv"), &text)?;
    for p in &points {
        println!(
            "G={:<5} visits grouped {:>7.1} naive {:>8.1}  ns/ray naive {:>10.1} grouped {:>8.1}  speedup {:>6.2}",
            p.groups,
            p.visits_grouped,
            p.visits_naive,
            p.ns_per_ray_naive,
            p.ns_per_ray_grouped,
            p.speedup()
        );
    }
    if points.len() > 1 {
        println!("speedup strictly increasing in G: {}", if monotone { "yes" } else { "no" });
        if !monotone {
            bail!("speedup is not strictly increasing over the sweep");
        }
    }
    Ok(())
}

fn render(config: &Config, out: &Path) -> Result<()> {
    let scene = config.build_scene()?;
    let camera = config.camera.model()?;
    let raw = render_depth_image(&scene, &camera, config.camera.group, None)?;
    let processed = run_pipeline(&raw, &config.noise, camera.near, camera.far)?;
    for (name, img) in [("depth_raw", &raw), ("depth", &processed)] {
        let pfm = out.join(format!("{name}.pfm"));
        write_pfm(&pfm, img)?;
        let pgm = out.join(format!("{name}.pgm"));
        write_pgm16(&pgm, img)?;
        println!("wrote {} and {}", pfm.display(), pgm.display());
    }
    if let Some((lo, hi)) = raw.valid_range() {
        println!("raw range {lo:.4} .. {hi:.4} m");
    }
    Ok(())
}

fn pipeline(config: &Config, input: &Path, out: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .pfm files in {}", input.display());
    }
    let (near, far) = (config.camera.near, config.camera.far);
    for (k, path) in files.iter().enumerate() {
        let img: DepthImage = read_pfm(path)?;
        // Each frame gets its own stream so images are independent.
        let mut noise = config.noise.clone();
        noise.seed = noise.seed.wrapping_add(k as u64);
        let processed =
            run_pipeline(&img, &noise, near, far).with_context(|| format!("processing {}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
        write_pfm(&out.join(format!("{stem}.pfm")), &processed)?;
        write_pgm16(&out.join(format!("{stem}.pgm")), &processed)?;
    }
    println!("processed {} images into {}", files.len(), out.display());
    Ok(())
}

fn curriculum_sim(config: &Config, clips: &[PathBuf], seed: u64, out: &Path) -> Result<()> {
    let c = &config.curriculum;
    let mut table = if clips.is_empty() {
        BinTable::from_durations(&c.durations, c.t_bin)?
    } else {
        let loaded =
            clips.iter().map(|p| MotionClip::load(p).map_err(anyhow::Error::from)).collect::<Result<Vec<_>>>()?;
        discretize(&loaded, c.t_bin)?
    };
    let settings = c.settings();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = config.header_comment();
    let _ = writeln!(trace, "# seed = {seed}");
    trace.push_str("iteration,k,bin,P\n");
    let failures = match &c.model {
        FailureModelConfig::Never => sim(&mut table, &settings, &mut NeverFail, c.iterations, &mut rng, &mut trace)?,
        FailureModelConfig::Fixed { motion, time } => {
            let mut m = FixedFailure { motion: *motion, time: *time };
            sim(&mut table, &settings, &mut m, c.iterations, &mut rng, &mut trace)?
        }
        FailureModelConfig::Hazard { bins } => {
            let mut probabilities = vec![0.0; table.len()];
            for &(k, j, p) in bins {
                if k >= table.motion_count() || j >= table.bins(k).len() {
                    bail!("hazard entry ({k}, {j}) does not name a bin");
                }
                probabilities[table.flat_index(k, j)] = p;
            }
            sim(&mut table, &settings, &mut BinHazard { probabilities }, c.iterations, &mut rng, &mut trace)?
        }
    };
    write(&out.join("curriculum_trace.csv"), &trace)?;
    write(&out.join("curriculum_checkpoint.csv"), &table.checkpoint())?;
    println!("{} iterations, {failures} failures, {} bins", c.iterations, table.len());
    Ok(())
}

fn sim<M: FailureModel>(
    table: &mut BinTable,
    settings: &CurriculumSettings,
    model: &mut M,
    iterations: usize,
    rng: &mut ChaCha8Rng,
    trace: &mut String,
) -> Result<usize> {
    let layout: Vec<(usize, usize)> = (0..table.len()).map(|f| table.locate(f)).collect();
    let mut bad_sum = None;
    let failures = simulate_curriculum_with(table, settings, model, iterations, rng, |it, p| {
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 && bad_sum.is_none() {
            bad_sum = Some((it, total));
        }
        for (&(k, j), v) in layout.iter().zip(p) {
            let _ = writeln!(trace, "{it},{k},{j},{v:.12e}");
        }
    })?;
    if let Some((it, total)) = bad_sum {
        bail!("probabilities sum to {total} after iteration {it}");
    }
    Ok(failures)
}

/// Keeps only the configured key links, in config order.
fn select_links(clip: &MotionClip, keys: &[String]) -> Result<Vec<MotionFrame>> {
    if keys.is_empty() {
        return Ok(clip.frames.clone());
    }
    let idx = keys
        .iter()
        .map(|k| {
            clip.link_names
                .iter()
                .position(|n| n == k)
                .with_context(|| format!("clip {:?} has no link named {k:?}", clip.id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(clip
        .frames
        .iter()
        .map(|f| MotionFrame { links: idx.iter().map(|&i| f.links[i]).collect(), ..f.clone() })
        .collect())
}

fn metrics(config: &Config, state: &Path, reference: &Path, out: &Path) -> Result<()> {
    let a = MotionClip::load(state)?;
    let b = MotionClip::load(reference)?;
    if config.metrics.key_links.is_empty() && a.link_names != b.link_names {
        bail!("schema mismatch: links {:?} vs {:?}", a.link_names, b.link_names);
    }
    let sa = select_links(&a, &config.metrics.key_links)?;
    let sb = select_links(&b, &config.metrics.key_links)?;
    let g = mpjpe(&sa, &sb, Frame::Global)?;
    let base = mpjpe(&sa, &sb, Frame::Base)?;
    let errors = mean_tracking_errors(&sa, &sb)?;
    let r = reward(&errors, &config.metrics.reward);
    let mut text = config.header_comment();
    let names = ErrorVector::NAMES.map(|n| format!("{n}_err"));
    let _ = writeln!(text, "mpjpe_g,mpjpe_b,{},reward_at_mean_error", names.join(","));
    let values: Vec<String> = errors.to_array().iter().map(|v| format!("{v:.12}")).collect();
    let _ = writeln!(text, "{g:.12},{base:.12},{},{r:.12}", values.join(","));
    write(&out.join("metrics.csv"), &text)?;
    println!("MPJPE_g {g:.6} m, MPJPE_b {base:.6} m");
    Ok(())
}
