//! `adafm`: pretrain, transfer, evaluate and inspect desk-scale GANs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adafm::config::{DataSource, Mode, RunConfig};
use adafm::data::{synth_generate, SynthDomain, SyntheticSpec};
use adafm::metrics::{adafm_stats, gamma_vector, interpolate, latents, sorted_gamma_matrix, stack, style_mix, write_grid};
use adafm::model::{Gan, Head};
use adafm::train::{train_loop, IterRecord, PfidEvaluator, TrainHooks, TrainSummary};
use adafm::transfer::{check_arch, load_checkpoint, save_checkpoint, transfer_init};
use adafm::{Error, Result};

#[derive(Parser)]
#[command(name = "adafm", version, about = "GAN transfer with frozen filters and adaptive filter modulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the source model on the source corpus.
    Pretrain(Common),
    /// Initialize from a source checkpoint and train on the target corpus.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Source checkpoint (ignored with a warning in scratch mode).
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Proxy-FID of a checkpoint against the configured corpus.
    Eval(WithCkpt),
    /// N×N grid of samples.
    Generate {
        #[command(flatten)]
        w: WithCkpt,
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
    /// Strip of images along a straight latent path.
    Interpolate {
        #[command(flatten)]
        w: WithCkpt,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Style mixing: rows are source, destination and mixed images.
    Mix {
        #[command(flatten)]
        w: WithCkpt,
        /// 1-based style block that takes the destination style.
        #[arg(long, default_value_t = 1)]
        block: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Seed of the destination latents (defaults to the run seed + 1).
        #[arg(long)]
        dest_seed: Option<u64>,
    },
    /// AdaFM γ/β statistics and the sorted γ matrix.
    Analyze {
        #[command(flatten)]
        w: WithCkpt,
        /// Further checkpoints contributing rows to the sorted γ matrix.
        #[arg(long = "compare")]
        compare: Vec<PathBuf>,
    },
    /// Render a synthetic corpus to PNG files.
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "target_shapes")]
        domain: SynthDomain,
        #[arg(long, default_value_t = 500)]
        count: usize,
    },
}

#[derive(Args)]
struct WithCkpt {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: PathBuf,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gm: Option<usize>,
    #[arg(long)]
    dn: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    r1_gamma: Option<f64>,
    /// Penalize real and generated batches (γ = gp_gamma_extreme).
    #[arg(long)]
    gp_both: bool,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    limit_n: Option<usize>,
    #[arg(long)]
    grayscale: bool,
    #[arg(long)]
    resolution: Option<usize>,
    /// Corpus: `synthetic:<domain>` or `dir:<path>`.
    #[arg(long)]
    data: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then flags.
    fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("gm", self.gm.map(|v| v.to_string())),
            ("dn", self.dn.map(|v| v.to_string())),
            ("total_iters", self.iters.map(|v| v.to_string())),
            ("warmup_iters", self.warmup.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("r1_gamma", self.r1_gamma.map(|v| v.to_string())),
            ("gp_mode", self.gp_both.then(|| "real_and_fake".to_string())),
            ("latent_dim", self.latent_dim.map(|v| v.to_string())),
            ("limit_n", self.limit_n.map(|v| v.to_string())),
            ("grayscale", self.grayscale.then(|| "true".to_string())),
            ("resolution", self.resolution.map(|v| v.to_string())),
            ("data", self.data.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v).map_err(|e| Error::Config(format!("--{}: {e}", k.replace('_', "-"))))?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves the config, creates the output directory and echoes the
    /// effective config to `config.resolved`.
    fn prepare(&self, base: RunConfig) -> Result<(RunConfig, PathBuf)> {
        let cfg = self.resolve(base)?;
        fs::create_dir_all(&self.out).map_err(|e| io(&self.out, e))?;
        write(&self.out.join("config.resolved"), cfg.to_text())?;
        Ok((cfg, self.out.clone()))
    }
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io(path, e))
}

/// Streams metrics, writes snapshots and sample grids, and dumps the model
/// on a numeric abort.
struct RunHooks<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    metrics: String,
}

impl RunHooks<'_> {
    fn new<'a>(cfg: &'a RunConfig, out: &'a Path) -> RunHooks<'a> {
        RunHooks { cfg, out, metrics: format!("{}\n", adafm::train::METRICS_HEADER) }
    }
}

impl TrainHooks for RunHooks<'_> {
    fn after_iter(&mut self, gan: &Gan, rec: &IterRecord) -> Result<()> {
        self.metrics.push_str(&rec.csv_row());
        self.metrics.push('\n');
        let due = |every: usize| every > 0 && rec.iter % every == 0;
        if due(self.cfg.sample_every) {
            let z = latents(16, gan.arch.latent_dim, self.cfg.eval_seed);
            write_grid(&self.out.join(format!("samples_{:06}.png", rec.iter)), &gan.generate(&z)?, 4)?;
        }
        if due(self.cfg.checkpoint_every) {
            save_checkpoint(gan, None, &self.out.join(format!("snapshot_{:06}.ckpt", rec.iter)))?;
        }
        if due(1000) || rec.iter == self.cfg.total_iters {
            write(&self.out.join("metrics.csv"), &self.metrics)?;
        }
        Ok(())
    }

    fn on_abort(&mut self, gan: &Gan, err: &Error) {
        let _ = write(&self.out.join("metrics.csv"), &self.metrics);
        let path = self.out.join("abort.ckpt");
        match save_checkpoint(gan, None, &path) {
            Ok(()) => eprintln!("aborted ({err}); model state saved to {}", path.display()),
            Err(e) => eprintln!("aborted ({err}); saving model state failed: {e}"),
        }
    }
}

fn finish(gan: &Gan, adam: &adafm::train::AdamState, summary: &TrainSummary, out: &Path) -> Result<()> {
    save_checkpoint(gan, Some(adam), &out.join("final.ckpt"))?;
    let mut s = String::new();
    match summary.best_pfid {
        Some((iter, v)) => s.push_str(&format!("best_pfid {v} at {iter}\n")),
        None => s.push_str("best_pfid none\n"),
    }
    if let Some(v) = summary.final_pfid {
        s.push_str(&format!("final_pfid {v}\n"));
    }
    if let Some(i) = summary.first_overfit {
        s.push_str(&format!("first_overfit {i}\n"));
    }
    print!("{s}");
    write(&out.join("summary.txt"), s)
}

fn source_defaults() -> RunConfig {
    RunConfig {
        mode: Mode::Scratch,
        data: DataSource::Synthetic { domain: SynthDomain::SourceShapes, count: 5000, seed: 0 },
        ..Default::default()
    }
}

fn cmd_pretrain(c: &Common) -> Result<()> {
    let (cfg, out) = c.prepare(source_defaults())?;
    let data = cfg.load_data()?;
    // The source keeps the large head so every transfer mode can start from it.
    let gan = Gan::build(&cfg.arch(), Head::Large, cfg.seed)?;
    let mut hooks = RunHooks::new(&cfg, &out);
    let (gan, adam, summary) = train_loop(gan, &data, &cfg, &mut hooks)?;
    finish(&gan, &adam, &summary, &out)
}

fn cmd_transfer(c: &Common, source: Option<&Path>) -> Result<()> {
    let (cfg, out) = c.prepare(RunConfig::default())?;
    let gan = if cfg.mode == Mode::Scratch {
        if source.is_some() {
            eprintln!("warning: mode=scratch ignores the source checkpoint");
        }
        Gan::build(&cfg.arch(), cfg.mode.head(), cfg.seed)?
    } else {
        let path = source.ok_or_else(|| Error::Config(format!("mode={} needs --source", cfg.mode)))?;
        let ckpt = load_checkpoint(path)?;
        check_arch(&ckpt, &cfg.arch())?;
        let (gan, report) = transfer_init(&ckpt, &cfg)?;
        write(&out.join("transfer_report.txt"), report.to_text())?;
        write(&out.join("transfer_report.csv"), report.to_csv())?;
        gan
    };
    let data = cfg.load_data()?;
    let mut hooks = RunHooks::new(&cfg, &out);
    let (gan, adam, summary) = train_loop(gan, &data, &cfg, &mut hooks)?;
    finish(&gan, &adam, &summary, &out)
}

fn load_model(w: &WithCkpt) -> Result<(RunConfig, PathBuf, Gan)> {
    let (cfg, out) = w.common.prepare(RunConfig::default())?;
    let gan = load_checkpoint(&w.ckpt)?.to_gan()?;
    Ok((cfg, out, gan))
}

fn cmd_eval(w: &WithCkpt) -> Result<()> {
    let (cfg, out, gan) = load_model(w)?;
    let data = cfg.load_data()?;
    let ev = PfidEvaluator::new(&data, cfg.pfid_samples, gan.arch.latent_dim, cfg.eval_seed)?;
    let v = ev.evaluate(&gan)?;
    println!("pfid {v}");
    write(&out.join("eval.csv"), format!("samples,pfid\n{},{v}\n", ev.sample_count()))
}

fn cmd_generate(w: &WithCkpt, grid: usize) -> Result<()> {
    let (cfg, out, gan) = load_model(w)?;
    let z = latents(grid * grid, gan.arch.latent_dim, cfg.seed);
    write_grid(&out.join("generate.png"), &gan.generate(&z)?, grid)
}

fn cmd_interpolate(w: &WithCkpt, steps: usize) -> Result<()> {
    let (cfg, out, gan) = load_model(w)?;
    let z = latents(2, gan.arch.latent_dim, cfg.seed);
    let d = gan.arch.latent_dim;
    let strip = interpolate(&gan, &z.data()[..d], &z.data()[d..], steps)?;
    write_grid(&out.join("interpolate.png"), &strip, steps)
}

fn cmd_mix(w: &WithCkpt, block: usize, count: usize, dest_seed: Option<u64>) -> Result<()> {
    let (cfg, out, gan) = load_model(w)?;
    let d = gan.arch.latent_dim;
    let zs = latents(count, d, cfg.seed);
    let zd = latents(count, d, dest_seed.unwrap_or(cfg.seed.wrapping_add(1)));
    let mixed = style_mix(&gan, &zs, &zd, block)?;
    let rows = stack(&[gan.generate(&zs)?, gan.generate(&zd)?, mixed])?;
    write_grid(&out.join("mix.png"), &rows, count)
}

fn cmd_analyze(w: &WithCkpt, compare: &[PathBuf]) -> Result<()> {
    let (_, out, gan) = load_model(w)?;
    write(&out.join("adafm_stats.csv"), adafm_stats(&gan)?.to_csv())?;
    let mut rows = vec![gamma_vector(&gan)];
    for path in compare {
        rows.push(gamma_vector(&load_checkpoint(path)?.to_gan()?));
    }
    write(&out.join("sorted_gamma.csv"), sorted_gamma_matrix(&rows)?.to_csv())
}

fn cmd_synth(c: &Common, domain: SynthDomain, count: usize) -> Result<()> {
    let (cfg, out) = c.prepare(RunConfig::default())?;
    let corpus = synth_generate(&SyntheticSpec { domain, count, seed: cfg.seed, size: cfg.arch.resolution })?;
    let corpus = if cfg.grayscale { corpus.to_grayscale() } else { corpus };
    for i in 0..corpus.len() {
        write_grid(&out.join(format!("{}_{i:05}.png", domain.name())), &corpus.batch(&[i]), 1)?;
    }
    println!("wrote {} images to {}", corpus.len(), out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Partition(_) | Error::Analysis(_) => 2,
        Error::Data(_) | Error::Io { .. } => 3,
        Error::Numeric(_) | Error::Domain { .. } | Error::Tensor(_) => 4,
        Error::Checkpoint(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Pretrain(c) => cmd_pretrain(c),
        Cmd::Transfer { common, source } => cmd_transfer(common, source.as_deref()),
        Cmd::Eval(w) => cmd_eval(w),
        Cmd::Generate { w, grid } => cmd_generate(w, *grid),
        Cmd::Interpolate { w, steps } => cmd_interpolate(w, *steps),
        Cmd::Mix { w, block, count, dest_seed } => cmd_mix(w, *block, *count, *dest_seed),
        Cmd::Analyze { w, compare } => cmd_analyze(w, compare),
        Cmd::SynthData { common, domain, count } => cmd_synth(common, *domain, *count),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
