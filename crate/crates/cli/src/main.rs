use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cmem::datasets::{ComboClass, DatasetKind};
use cmem::embeddings::{Modality, SpeechSource};
use cmem::image_models::ImageModelKind;
use cmem::mapping::MappingVariant;
use cmem::pipeline::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "cmem",
    version,
    about = "Cross-modal generation by constrained embedding mapping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the double-digit dataset(s).
    SynthData(Common),
    /// Train the image auto-encoder.
    TrainAe(Common),
    /// Train the modality-to-image-latent mappings.
    TrainMap(Common),
    /// Train the direct regression baselines.
    TrainBaseline(Common),
    /// Generate images for classes from text or speech.
    Generate(GenerateArgs),
    /// Score all methods on the held-out classes.
    Evaluate(Common),
    /// Run every stage in order.
    Pipeline(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, env = "CMEM_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Directory holding MNIST training IDX files.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<usize>,
    /// Fraction of the full per-combination image count.
    #[arg(long)]
    scale: Option<f64>,
    /// double or colored
    #[arg(long)]
    dataset: Option<String>,
    /// conv-vae, mlp-vae, conv-ae or mlp-ae
    #[arg(long)]
    model: Option<String>,
    /// normalization or trainable
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated modalities (text, speech).
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<String>>,
    #[arg(long)]
    ae_epochs: Option<usize>,
    #[arg(long)]
    map_epochs: Option<usize>,
    #[arg(long)]
    baseline_epochs: Option<usize>,
    /// Text embedding table file.
    #[arg(long)]
    token_table: Option<PathBuf>,
    /// Directory of per-word WAV clips.
    #[arg(long)]
    speech_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// text or speech
    #[arg(long = "from", default_value = "text")]
    from: String,
    /// Class words, e.g. "seven five" or "red five blue one"; repeatable.
    #[arg(long = "class", required = true)]
    classes: Vec<String>,
    /// proposed or direct
    #[arg(long, default_value = "proposed")]
    method: String,
}

fn load_config(args: &Common) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(path) => RunConfig::from_json_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.out {
        c.output_dir = v.clone();
    }
    if let Some(v) = &args.data_dir {
        c.data_dir = Some(v.clone());
    }
    if let Some(v) = &args.mnist_dir {
        c.mnist_dir = Some(v.clone());
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.seeds {
        c.seeds = v;
    }
    if let Some(v) = args.scale {
        c.scale = v;
    }
    if let Some(v) = &args.dataset {
        c.dataset.kind = match v.as_str() {
            "double" | "two-digit" => DatasetKind::Double,
            "colored" | "colored-double" => DatasetKind::ColoredDouble,
            other => bail!("unknown dataset `{other}` (expected double or colored)"),
        };
    }
    if let Some(v) = &args.model {
        c.image_model.kind = v.parse::<ImageModelKind>()?;
    }
    if let Some(v) = &args.variant {
        c.mapping.variant = v.parse::<MappingVariant>()?;
    }
    if let Some(v) = &args.modalities {
        c.modalities = v.iter().map(|m| m.parse()).collect::<cmem::Result<_>>()?;
    }
    if let Some(v) = args.ae_epochs {
        c.image_model.train.epochs = v;
    }
    if let Some(v) = args.map_epochs {
        c.mapping.train.epochs = v;
    }
    if let Some(v) = args.baseline_epochs {
        c.baseline.epochs = v;
    }
    if let Some(v) = &args.token_table {
        c.embeddings.token_table = Some(v.clone());
    }
    if let Some(v) = &args.speech_dir {
        c.embeddings.speech = SpeechSource::WavDir { path: v.clone() };
    }
    c.validate()?;
    Ok(c)
}

fn print_report(out: &Path) -> Result<()> {
    let table = std::fs::read_to_string(out.join("report.txt"))?;
    print!("{table}");
    println!("report: {}", out.join("report.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData(a) => {
            let c = load_config(&a)?;
            for dir in pipeline::synth_data(&c)? {
                println!("{}", dir.display());
            }
        }
        Command::TrainAe(a) => {
            let c = load_config(&a)?;
            for (s, h) in c.run_seeds().into_iter().zip(pipeline::train_ae(&c)?) {
                println!(
                    "seed {s}: final loss {:.4}",
                    h.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::TrainMap(a) => pipeline::train_map(&load_config(&a)?)?,
        Command::TrainBaseline(a) => pipeline::train_baseline(&load_config(&a)?)?,
        Command::Generate(g) => {
            let c = load_config(&g.common)?;
            let modality: Modality = g.from.parse()?;
            let classes = g
                .classes
                .iter()
                .map(|s| s.parse::<ComboClass>())
                .collect::<cmem::Result<Vec<_>>>()?;
            for path in pipeline::generate(&c, modality, &classes, Some(&g.method))? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate(a) => {
            let c = load_config(&a)?;
            pipeline::evaluate(&c)?;
            print_report(&c.output_dir)?;
        }
        Command::Pipeline(a) => {
            let c = load_config(&a)?;
            pipeline::run_pipeline(&c)?;
            print_report(&c.output_dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
