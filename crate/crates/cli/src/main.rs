mod args;
mod config;
mod data;
mod error;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use salex_core::image::{read_image, write_pgm};
use salex_core::model::{build_tiny, vgg19_custom, Checkpoint, DEFAULT_VGG_HIDDEN};
use salex_core::saliency::{overlay, spectral_residual, SaliencyMap};
use salex_core::train::{
    correlate_diagonals, evaluate, prepare_inputs, train, write_epoch_log, CropSampling, EvalReport, InputMode,
    StepDecay, TrainConfig,
};
use salex_core::SpectralParams;

use args::{Arch, Cli, Command, CorrelateArgs, EvalArgs, ModeArg, OverlayArgs, SaliencyArgs, Switch, TrainArgs};
use config::FileConfig;
use data::{limit, parse_backend, Dataset};
use error::{CliError, Result};
use manifest::Manifest;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {first}");
            return ExitCode::from(error::Kind::Usage as u8);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Saliency(a) => cmd_saliency(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Overlay(a) => cmd_overlay(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("SALEX_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("SALEX_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn input_mode(mode: ModeArg) -> InputMode {
    match mode {
        ModeArg::Faces => InputMode::Faces,
        ModeArg::Saliency => InputMode::Saliency,
    }
}

fn cmd_saliency(args: SaliencyArgs) -> Result<()> {
    let mut manifest = Manifest::new("saliency");
    let dataset = Dataset::load(&args.input, &args.taxonomy)?;
    let backend = parse_backend(&args.backend)?;
    let selected: Vec<_> = match &args.partition {
        Some(name) => vec![dataset.partition(name)?],
        None => dataset.partitions.iter().collect(),
    };
    manifest.set("input", &args.input);
    manifest.set("backend", &args.backend);
    create_dir(&args.out)?;

    let mut written = 0;
    for part in selected {
        let part = limit(part.clone(), args.limit);
        let maps = backend.map_partition(&part)?;
        for sample in &maps.samples {
            let path = args.out.join(sample.origin.relative_path("pgm"));
            create_parent(&path)?;
            write_pgm(&path, &sample.image)?;
        }
        manifest.set(&format!("dataset.{}", part.name), part.len());
        manifest.output(&args.out.join(&part.name));
        written += maps.len();
    }
    manifest.set("maps_written", written);
    manifest.write(&args.out.join("manifest.txt"))?;
    println!("wrote {written} saliency maps to {}", args.out.display());
    Ok(())
}

/// Flags over config file over built-in defaults.
fn resolve_train(args: &TrainArgs, file: &FileConfig, ckplus: bool) -> Result<(TrainConfig, Arch, String)> {
    let defaults = if ckplus { TrainConfig::ckplus_full() } else { TrainConfig::fer2013_full() };
    let arch = match (args.arch, file.arch.as_deref()) {
        (Some(a), _) => a,
        (None, Some("vgg19")) | (None, None) => Arch::Vgg19,
        (None, Some("tiny")) => Arch::Tiny,
        (None, Some(other)) => return Err(CliError::usage(format!("config arch {other:?} must be vgg19 or tiny"))),
    };
    let input_mode = match (args.mode, file.input_mode.as_deref()) {
        (Some(m), _) => input_mode(m),
        (None, None) => InputMode::Faces,
        (None, Some(s)) => InputMode::parse(s)
            .ok_or_else(|| CliError::usage(format!("config input_mode {s:?} must be faces or saliency")))?,
    };
    let crop_sampling = if args.fixed_crops {
        CropSampling::Fixed
    } else {
        match file.crop_sampling.as_deref() {
            None | Some("per-epoch") => CropSampling::PerEpoch,
            Some("fixed") => CropSampling::Fixed,
            Some(other) => {
                return Err(CliError::usage(format!("config crop_sampling {other:?} must be per-epoch or fixed")))
            }
        }
    };
    let lr_decay = args.lr_decay_every.or(file.lr_decay_every).map(|every| StepDecay {
        every,
        factor: args.lr_decay_factor.or(file.lr_decay_factor).unwrap_or(0.1),
    });
    if lr_decay.is_none() && args.lr_decay_factor.is_some() {
        return Err(CliError::usage("--lr-decay-factor needs --lr-decay-every"));
    }
    let backend = args
        .saliency_backend
        .clone()
        .or_else(|| file.saliency_backend.clone())
        .unwrap_or_else(|| "spectral".into());
    if input_mode == InputMode::Faces && args.saliency_backend.is_some() {
        return Err(CliError::usage("--saliency-backend only applies with --mode saliency"));
    }
    let config = TrainConfig {
        learning_rate: args.lr.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        momentum: args.momentum.or(file.momentum).unwrap_or(defaults.momentum),
        dropout_rate: args.dropout.or(file.dropout_rate).unwrap_or(defaults.dropout_rate),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        input_mode,
        crops_per_sample: args.crops.or(file.crops_per_sample).unwrap_or(defaults.crops_per_sample),
        crop_sampling,
        lr_decay,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok((config, arch, backend))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut manifest = Manifest::new("train");
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ckplus = args.data.taxonomy == "ckplus";
    let (config, arch, backend_spec) = resolve_train(&args, &file, ckplus)?;
    let backend = parse_backend(&backend_spec)?;

    let dataset = Dataset::load(&args.data.dataset, &args.data.taxonomy)?;
    let training = dataset.training(&args.data, args.fold)?;
    let training = prepare_inputs(&training, config.input_mode, &backend)?;
    let k = dataset.taxonomy.len();
    let spec = match arch {
        Arch::Vgg19 => vgg19_custom(k, DEFAULT_VGG_HIDDEN, config.dropout_rate),
        Arch::Tiny => build_tiny(k),
    };

    manifest.set("dataset", &dataset.spec);
    manifest.set("taxonomy", dataset.taxonomy.classes().join(","));
    for p in &dataset.partitions {
        manifest.set(&format!("dataset.{}", p.name), p.len());
    }
    manifest.set("training_partition", &training.name);
    manifest.set("training_samples", training.len());
    manifest.set("arch", format!("{arch:?}").to_lowercase());
    manifest.set("parameters", spec.param_count()?);
    manifest.set("precision", "f32");
    manifest.set("config.learning_rate", config.learning_rate);
    manifest.set("config.epochs", config.epochs);
    manifest.set("config.batch_size", config.batch_size);
    manifest.set("config.momentum", config.momentum);
    manifest.set("config.dropout_rate", config.dropout_rate);
    manifest.set("config.seed", config.seed);
    manifest.set("config.input_mode", config.input_mode.name());
    manifest.set("config.crops_per_sample", config.crops_per_sample);
    manifest.set(
        "config.crop_sampling",
        match config.crop_sampling {
            CropSampling::PerEpoch => "per-epoch",
            CropSampling::Fixed => "fixed",
        },
    );
    manifest.set(
        "config.lr_decay",
        config.lr_decay.map_or("none".into(), |d| format!("x{} every {} epochs", d.factor, d.every)),
    );
    if config.input_mode == InputMode::Saliency {
        manifest.set("saliency_backend", &backend_spec);
    }
    manifest.set("threads", rayon::current_num_threads());

    let outcome = train::<f32>(&spec, &training, &config)?;
    create_parent(&args.out)?;
    outcome.checkpoint.save(&args.out)?;
    manifest.output(&args.out);
    let log_path = args.out.with_extension("log.csv");
    write_epoch_log(&log_path, &outcome.log)?;
    manifest.output(&log_path);
    let last = outcome.log.last().expect("at least one epoch");
    manifest.set("final_mean_loss", format!("{:.6}", last.mean_loss));
    manifest.set("final_train_acc", format!("{:.6}", last.train_acc));
    manifest.write(&args.out.with_extension("manifest.txt"))?;
    println!(
        "trained {} epochs: loss {:.4}, train accuracy {:.4}; checkpoint {}",
        last.epoch,
        last.mean_loss,
        last.train_acc,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut manifest = Manifest::new("eval");
    let backend = parse_backend(&args.saliency_backend)?;
    let ckpt = Checkpoint::<f32>::load(&args.ckpt)?;
    let dataset = Dataset::load(&args.data.dataset, &args.data.taxonomy)?;
    check_trained_taxonomy(&args.ckpt, &dataset)?;
    let part = dataset.evaluation(&args.data, args.partition.as_deref())?;
    let mode = input_mode(args.mode);
    let part = prepare_inputs(&part, mode, &backend)?;
    let tencrop = args.tencrop == Switch::On;
    let report = evaluate(&ckpt.network, &part, &dataset.taxonomy, tencrop)?;

    manifest.set("checkpoint", args.ckpt.display());
    manifest.set("dataset", &dataset.spec);
    manifest.set("partition", &part.name);
    manifest.set("samples", part.len());
    manifest.set("input_mode", mode.name());
    manifest.set("tencrop", tencrop);
    manifest.set("accuracy", format!("{:.6}", report.accuracy));
    manifest.set("chance_level", format!("{:.6}", report.chance_level));
    for p in report.write_dir(&args.out)? {
        manifest.output(&p);
    }
    manifest.write(&args.out.join("manifest.txt"))?;
    println!(
        "accuracy {:.4} on {} samples of {} (chance {:.4})",
        report.accuracy,
        part.len(),
        part.name,
        report.chance_level
    );
    Ok(())
}

/// Both built-in taxonomies have seven classes, so the checkpoint's output
/// size cannot tell them apart; the training manifest records the names.
fn check_trained_taxonomy(ckpt: &Path, dataset: &Dataset) -> Result<()> {
    let Ok(text) = std::fs::read_to_string(ckpt.with_extension("manifest.txt")) else {
        return Ok(());
    };
    let expected = dataset.taxonomy.classes().join(",");
    match text.lines().find_map(|l| l.strip_prefix("taxonomy: ")) {
        Some(trained) if trained != expected => Err(CliError::data(format!(
            "checkpoint was trained on classes {trained} but the dataset uses {expected}"
        ))),
        _ => Ok(()),
    }
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let a = EvalReport::read_dir(&args.report_a)?;
    let b = EvalReport::read_dir(&args.report_b)?;
    if a.confusion.taxonomy() != b.confusion.taxonomy() {
        return Err(CliError::data(format!(
            "reports use different classes: {} vs {}",
            a.confusion.taxonomy().classes().join(","),
            b.confusion.taxonomy().classes().join(",")
        )));
    }
    let r = correlate_diagonals(&a, &b).map_err(|e| CliError::numeric(e.to_string()))?;
    create_parent(&args.out)?;
    let body = format!(
        "report_a,report_b,r\n{},{},{r:.6}\n",
        args.report_a.display(),
        args.report_b.display()
    );
    std::fs::write(&args.out, body).map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    println!("r = {r:.4}");
    Ok(())
}

fn cmd_overlay(args: OverlayArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage(format!("--alpha must lie in [0, 1], got {}", args.alpha)));
    }
    let face = read_image(&args.face)?;
    let map = match &args.map {
        Some(p) => SaliencyMap::normalize(&read_image(p)?),
        None => spectral_residual(&face, &SpectralParams::default())?,
    };
    let out = overlay(&face, &map, args.alpha)?;
    create_parent(&args.out)?;
    write_pgm(&args.out, &out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
