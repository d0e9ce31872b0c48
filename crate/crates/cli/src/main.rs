//! Command-line front door for the placement pipeline.
//!
//! Every subcommand is a thin adapter over library calls: it loads the run
//! configuration, resolves paths, invokes the same functions a library user
//! would, and prints results. No behavior lives here that cannot be reached
//! through the library with the same `RunConfig`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (bad files, bad
//! configs), 3 numeric failure (non-finite states, non-convergence). Errors
//! print as one-line diagnostics on standard error.
//!
//! The environment variable `DIFFPLACE_DATA_DIR` sets the default directory
//! for outputs whose path is not given explicitly (checkpoints, datasets,
//! placements, renders); it defaults to the current directory.

use std::env;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use diffplace_core::legalize::{legalize, overlap_area_exact};
use diffplace_core::netlist::filter_macro_connectivity;
use diffplace_core::objectives::hpwl_exact;
use diffplace_core::rng::{derive_seed, stream};
use diffplace_core::sampler::{sample, GuidanceMode};
use diffplace_core::training::{augment_netlist, synthesize_bases, Trainer};

use diffplace::bookshelf::serialize_bookshelf;
use diffplace::checkpoint::{load_checkpoint, save_checkpoint, write_loss_csv, Checkpoint};
use diffplace::config::{config_hash, load_config, RunConfig, DATA_DIR_ENV};
use diffplace::dataset::build_dataset_parallel;
use diffplace::error::{CliError, EXIT_OK, EXIT_USAGE};
use diffplace::eval::{evaluate, summary_table};
use diffplace::json_io::{
    load_dataset, load_input, save_dataset, save_design, save_trajectory, DatasetFile, Design,
    TrajectoryFile,
};
use diffplace::svg::{write_svg, RenderOptions};

#[derive(Parser)]
#[command(
    name = "diffplace",
    version,
    about = "Diffusion-based macro placement: parse, augment, train, sample, legalize, evaluate, render"
)]
struct Cli {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a design and print its statistics.
    Parse(ParseArgs),
    /// Rewire a design's nets while preserving every pin degree exactly.
    Augment(AugmentArgs),
    /// Build a training dataset from base designs (synthetic by default).
    Dataset(DatasetArgs),
    /// Train the denoiser, checkpointing after every epoch.
    Train(TrainArgs),
    /// Draw a placement from a trained checkpoint by guided reverse diffusion.
    Sample(SampleArgs),
    /// Legalize a placement and report the displacement paid.
    Legalize(LegalizeArgs),
    /// Sample, legalize, and measure over several seeds; report mean ± std.
    Eval(EvalArgs),
    /// Render a placed design to SVG.
    Render(RenderArgs),
}

/// Inner-loop guidance mode, overriding the configured one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Two-phase wirelength + overlap guidance.
    Full,
    /// Overlap resolution only.
    OverlapOnly,
    /// No inner loop (vanilla reverse diffusion).
    None,
}

impl From<ModeArg> for GuidanceMode {
    fn from(m: ModeArg) -> GuidanceMode {
        match m {
            ModeArg::Full => GuidanceMode::Full,
            ModeArg::OverlapOnly => GuidanceMode::OverlapOnly,
            ModeArg::None => GuidanceMode::None,
        }
    }
}

#[derive(Args)]
struct ParseArgs {
    /// Input design: Bookshelf `.aux` or native JSON.
    #[arg(value_name = "INPUT", required_unless_present = "aux")]
    input: Option<PathBuf>,
    /// Bookshelf `.aux` file (alias for the positional input).
    #[arg(long, value_name = "FILE", conflicts_with = "input")]
    aux: Option<PathBuf>,
    /// Report the raw design without filtering to macro connectivity.
    #[arg(long)]
    no_filter: bool,
    /// Write the design (filtered unless --no-filter) as native JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Print statistics as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input design: Bookshelf `.aux` or native JSON.
    input: PathBuf,
    /// Output path (only with --count 1); default `<stem>.aug0.json` in the
    /// data directory.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Number of rewired variants to write.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Base seed; variant k uses a sub-seed derived from (seed, k).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Base designs (.aux or .json). Empty: the built-in synthetic suite.
    #[arg(value_name = "BASES")]
    bases: Vec<PathBuf>,
    /// Rewired variants per base; default from the train config.
    #[arg(long)]
    augmentations: Option<usize>,
    /// Seed for augmentation and reference placements; default train seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset file; default `<data-dir>/dataset.json`.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset file; default `<data-dir>/dataset.json`.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Checkpoint output path; default `<data-dir>/checkpoint.json`.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Resume from this checkpoint (same train config required).
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
    /// Write the per-batch loss curve to a CSV file.
    #[arg(long, value_name = "FILE")]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Input design: Bookshelf `.aux` or native JSON.
    input: PathBuf,
    /// Trained checkpoint; default `<data-dir>/checkpoint.json`.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Sampling seed; default the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Placement output (design JSON); default `<data-dir>/placement.json`.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the full reverse-diffusion trajectory as JSON.
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    /// Also render the final placement to SVG.
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    /// Override the configured guidance mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct LegalizeArgs {
    /// Input design with a placement (.aux with .pl, or JSON).
    input: PathBuf,
    /// Legalized design output; default `<data-dir>/legal.json`.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the legal placement as a Bookshelf directory.
    #[arg(long, value_name = "DIR")]
    bookshelf: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Input design: Bookshelf `.aux` or native JSON.
    input: PathBuf,
    /// Trained checkpoint; default `<data-dir>/checkpoint.json`.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Number of seeds; default from the eval config.
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed; seeds run seed0, seed0+1, ...; default from eval config.
    #[arg(long)]
    seed0: Option<u64>,
    /// Override the configured guidance mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Write the summary (reports included) as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Input design with a placement.
    input: PathBuf,
    /// SVG output path; default `<data-dir>/render.svg`.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Fly-lines for the K largest-HPWL nets (capped at 200).
    #[arg(long)]
    fly_lines: Option<usize>,
    /// Stroke every overlapping macro pair's intersection.
    #[arg(long)]
    highlight_overlaps: bool,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Default directory for outputs without an explicit path.
fn data_dir() -> PathBuf {
    env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn default_path(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| data_dir().join(name))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let hash = config_hash(&config);
    match cli.command {
        Command::Parse(args) => run_parse(args, &config, &hash),
        Command::Augment(args) => run_augment(args, &config, &hash),
        Command::Dataset(args) => run_dataset(args, &config, &hash),
        Command::Train(args) => run_train(args, &config, &hash),
        Command::Sample(args) => run_sample(args, &config, &hash),
        Command::Legalize(args) => run_legalize(args, &config, &hash),
        Command::Eval(args) => run_eval(args, &config, &hash),
        Command::Render(args) => run_render(args, &config, &hash),
    }
}

fn run_parse(args: ParseArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let input = args.input.or(args.aux).expect("clap enforces one input");
    let design = load_input(&input)?;
    let raw = design.netlist.stats();
    let filtered_netlist = filter_macro_connectivity(&design.netlist);
    let filtered = filtered_netlist.stats();
    let canvas = design.netlist.canvas;

    if args.json {
        let report = serde_json::json!({
            "input": input.display().to_string(),
            "canvas": canvas,
            "raw": raw,
            "filtered": filtered,
            "has_placement": design.placement.is_some(),
            "config_hash": hash,
            "seed": config.seed,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("stats serialization"));
    } else {
        println!("design  {}", input.display());
        println!(
            "canvas  origin ({}, {})  size {} x {}",
            canvas.origin[0], canvas.origin[1], canvas.width, canvas.height
        );
        println!("{:<8}{:>12}{:>12}", "", "raw", "filtered");
        println!("{:<8}{:>12}{:>12}", "macros", raw.macros, filtered.macros);
        println!("{:<8}{:>12}{:>12}", "pads", raw.pads, filtered.pads);
        println!("{:<8}{:>12}{:>12}", "cells", raw.cells, filtered.cells);
        println!("{:<8}{:>12}{:>12}", "nets", raw.nets, filtered.nets);
        println!("{:<8}{:>12}{:>12}", "pins", raw.pins, filtered.pins);
        println!(
            "placement {}  config {}  seed {}",
            if design.placement.is_some() { "present" } else { "absent" },
            hash,
            config.seed
        );
    }

    if let Some(out) = args.out {
        let written = if args.no_filter {
            design.clone()
        } else {
            Design::new(filtered_netlist, design.placement.clone())
        };
        save_design(&out, &written.with_provenance(hash, config.seed))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_augment(args: AugmentArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    if args.out.is_some() && args.count != 1 {
        return Err(CliError::Usage("--out only applies with --count 1".into()));
    }
    let design = load_input(&args.input)?;
    let base_seed = args.seed.unwrap_or(config.seed);
    let stem = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "design".to_string());

    for k in 0..args.count {
        let variant_seed = derive_seed(base_seed, &[stream::AUGMENT, k as u64]);
        let augmented = augment_netlist(&design.netlist, variant_seed)?;
        let out = match (&args.out, args.count) {
            (Some(path), 1) => path.clone(),
            _ => data_dir().join(format!("{stem}.aug{k}.json")),
        };
        let written =
            Design::new(augmented.netlist, None).with_provenance(hash, variant_seed);
        save_design(&out, &written)?;
        println!(
            "wrote {}  seed {}  {}",
            out.display(),
            variant_seed,
            if augmented.fully_simple { "fully simple" } else { "kept duplicate pin pairs" }
        );
    }
    Ok(())
}

fn run_dataset(args: DatasetArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(config.train.seed);
    let n_aug = args.augmentations.unwrap_or(config.train.augmentations_per_base);
    if n_aug == 0 {
        return Err(CliError::Usage("--augmentations must be at least 1".into()));
    }
    let bases = if args.bases.is_empty() {
        synthesize_bases(seed)?
    } else {
        let mut bases = Vec::with_capacity(args.bases.len());
        for path in &args.bases {
            let design = load_input(path)?;
            bases.push(filter_macro_connectivity(&design.netlist));
        }
        bases
    };
    let dataset = build_dataset_parallel(&bases, n_aug, seed)?;
    let out = default_path(args.out, "dataset.json");
    let samples = dataset.samples.len();
    let degraded = dataset.degraded;
    let file = DatasetFile::new(dataset.samples, degraded).with_provenance(hash, seed);
    save_dataset(&out, &file)?;
    println!(
        "wrote {}  samples {} ({} bases x {} variants)  degraded {}  seed {}",
        out.display(),
        samples,
        bases.len(),
        n_aug,
        degraded,
        seed
    );
    Ok(())
}

fn run_train(args: TrainArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let dataset_path = default_path(args.dataset, "dataset.json");
    let out = default_path(args.out, "checkpoint.json");
    let dataset = load_dataset(&dataset_path)?;

    let mut trainer = match &args.resume {
        Some(path) => {
            let checkpoint = load_checkpoint(path)?;
            if checkpoint.trainer.config != config.train {
                return Err(CliError::Data(format!(
                    "checkpoint {} was trained with a different train config; \
                     resume with the config that produced it",
                    path.display()
                )));
            }
            checkpoint.trainer
        }
        None => Trainer::new(config.train.clone())?,
    };

    let sched = trainer.config.build_schedule()?;
    let mut curve = Vec::new();
    // An initial checkpoint exists even with zero epochs to run, and the CSV
    // always starts with its header.
    save_checkpoint(&out, &Checkpoint::new(trainer.clone(), hash.to_string())?)?;
    if let Some(csv) = &args.loss_csv {
        write_loss_csv(csv, &curve, hash, trainer.config.seed)?;
    }

    while trainer.epoch < trainer.config.epochs {
        let points = trainer.run_epoch(&dataset.samples, &sched)?;
        let epoch_mean = if points.is_empty() {
            0.0
        } else {
            points.iter().map(|p| p.loss).sum::<f64>() / points.len() as f64
        };
        curve.extend(points);
        save_checkpoint(&out, &Checkpoint::new(trainer.clone(), hash.to_string())?)?;
        if let Some(csv) = &args.loss_csv {
            write_loss_csv(csv, &curve, hash, trainer.config.seed)?;
        }
        eprintln!(
            "epoch {}/{}  mean loss {:.6}",
            trainer.epoch,
            trainer.config.epochs,
            epoch_mean
        );
    }
    println!(
        "wrote {}  epochs {}/{}  samples {}  config {}",
        out.display(),
        trainer.epoch,
        trainer.config.epochs,
        dataset.samples.len(),
        hash
    );
    Ok(())
}

fn run_sample(args: SampleArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&default_path(args.checkpoint, "checkpoint.json"))?;
    let design = load_input(&args.input)?;
    let netlist = filter_macro_connectivity(&design.netlist);
    let seed = args.seed.unwrap_or(config.seed);
    let mut guidance = config.guidance;
    if let Some(mode) = args.mode {
        guidance.mode = mode.into();
    }

    let (placement, trajectory) =
        sample(&netlist, checkpoint.params(), &checkpoint.schedule, &guidance, seed)?;
    let hpwl = hpwl_exact(&netlist, &placement)?;
    let overlap = overlap_area_exact(&netlist, &placement)?;

    let out = default_path(args.out, "placement.json");
    save_design(
        &out,
        &Design::new(netlist.clone(), Some(placement.clone())).with_provenance(hash, seed),
    )?;
    if let Some(path) = &args.trajectory {
        save_trajectory(path, &TrajectoryFile::new(trajectory.clone(), hash, seed))?;
    }
    if let Some(path) = &args.svg {
        let options = RenderOptions {
            fly_lines: config.render.fly_lines,
            highlight_overlaps: config.render.highlight_overlaps,
            config_hash: hash.to_string(),
            seed,
        };
        write_svg(&netlist, &placement, &options, path)?;
    }
    println!(
        "wrote {}  seed {}  hpwl {:.6e}  overlap {:.6e}  steps {}  config {}",
        out.display(),
        seed,
        hpwl,
        overlap,
        trajectory.records.len(),
        hash
    );
    Ok(())
}

fn run_legalize(args: LegalizeArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let design = load_input(&args.input)?;
    let placement = design.require_placement()?;
    let result = legalize(&design.netlist, placement)?;
    let hpwl = hpwl_exact(&design.netlist, &result.placement)?;
    let overlap = overlap_area_exact(&design.netlist, &result.placement)?;

    let out = default_path(args.out, "legal.json");
    save_design(
        &out,
        &Design::new(design.netlist.clone(), Some(result.placement.clone()))
            .with_provenance(hash, config.seed),
    )?;
    if let Some(dir) = &args.bookshelf {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from_io(dir, e))?;
        let quantized = diffplace::bookshelf::quantize_netlist(&design.netlist);
        let qplacement = diffplace::bookshelf::quantize_placement(&result.placement);
        serialize_bookshelf(&quantized, &qplacement, dir, "legal")?;
    }
    println!(
        "wrote {}  displacement {:.6e}  moved {}/{}  hpwl {:.6e}  overlap {:.6e}  config {}",
        out.display(),
        result.displacement_total,
        result.moved_count,
        design.netlist.num_movable(),
        hpwl,
        overlap,
        hash
    );
    Ok(())
}

fn run_eval(args: EvalArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&default_path(args.checkpoint, "checkpoint.json"))?;
    let design = load_input(&args.input)?;
    let netlist = filter_macro_connectivity(&design.netlist);
    let mut guidance = config.guidance;
    if let Some(mode) = args.mode {
        guidance.mode = mode.into();
    }
    let num_seeds = args.seeds.map(|n| n as u64).unwrap_or(config.eval.num_seeds);
    let seed0 = args.seed0.unwrap_or(config.eval.seed0);
    if num_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (seed0..seed0 + num_seeds).collect();

    let summary = evaluate(
        &netlist,
        checkpoint.params(),
        &checkpoint.schedule,
        &guidance,
        &seeds,
        hash,
    )?;
    print!("{}", summary_table(&summary));
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&summary).expect("summary serialization");
        std::fs::write(path, text).map_err(|e| CliError::from_io(path, e))?;
        println!("wrote {}", path.display());
    }
    if summary.reports.is_empty() {
        return Err(CliError::Core(diffplace_core::CoreError::NonConvergence(format!(
            "all {num_seeds} seeds failed"
        ))));
    }
    Ok(())
}

fn run_render(args: RenderArgs, config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let design = load_input(&args.input)?;
    let placement = design.require_placement()?;
    // Prefer the provenance stamped into the input: the picture describes
    // the run that produced the placement, not this invocation.
    let (embed_hash, embed_seed) = match &design.provenance {
        Some(p) => (p.config_hash.clone(), p.seed),
        None => (hash.to_string(), config.seed),
    };
    let options = RenderOptions {
        fly_lines: args.fly_lines.unwrap_or(config.render.fly_lines),
        highlight_overlaps: args.highlight_overlaps || config.render.highlight_overlaps,
        config_hash: embed_hash,
        seed: embed_seed,
    };
    let out = default_path(args.out, "render.svg");
    let info = write_svg(&design.netlist, placement, &options, &out)?;
    println!(
        "wrote {}  fly-lines {}  overlap pairs highlighted {}",
        out.display(),
        info.fly_lines_drawn,
        info.highlighted_pairs
    );
    Ok(())
}
