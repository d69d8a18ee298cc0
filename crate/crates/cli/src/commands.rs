use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rnr_core::datasetio::{
    evaluate, generate_dataset, read_annotation, read_manifest, render_table, GeneratorConfig, Split,
};
use rnr_core::diagnose::{diagnose as diagnose_image, render_report, DiagnosticReport, REPORT_SCHEMA};
use rnr_core::grpo::checkpoint::{read_checkpoint, write_checkpoint};
use rnr_core::grpo::train::{train_with, TrainConfig, TrainSample, TrainState};
use rnr_core::imgcore::io::{read_png, write_png};
use rnr_core::restore::{init_policy, restore as restore_image, PolicyConfig};
use rnr_core::Error;

use crate::{DegradeArgs, DiagnoseArgs, EvalArgs, Failure, Format, RestoreArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "policy.ckpt";
pub const LOG_FILE: &str = "train_log.tsv";

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: Failure::IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn require_dir(flag: &str, path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure {
            code: Failure::IO,
            message: format!("{flag}: {} is not a directory", path.display()),
        })
    }
}

/// The input itself, or the `.png` files directly inside it in name order.
fn input_images(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input).map_err(|e| io_failure(input, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_failure(input, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure {
            code: Failure::IO,
            message: format!("{}: no PNG images found", input.display()),
        });
    }
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Prints per-file errors and turns any into a partial-failure status.
fn finish(errors: Vec<(PathBuf, Error)>, total: usize) -> Result<(), Failure> {
    for (path, e) in &errors {
        eprintln!("error: {}: {e}", path.display());
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::partial(format!("{} of {total} images failed", errors.len())))
    }
}

pub fn degrade(args: &DegradeArgs) -> Result<(), Failure> {
    require_dir("--clean", &args.clean)?;
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            GeneratorConfig::from_json(&text).map_err(|e| Failure::config(format!("--config: {e}")))?
        }
        None => GeneratorConfig::default(),
    };
    let manifest = generate_dataset(&args.clean, &args.out, &config, args.seed)?;
    for skip in &manifest.skipped {
        eprintln!("skipped {}: {}", skip.source, skip.reason);
    }
    println!(
        "{}: {} records (train {}, test {}), {} skipped, seed {}, config {}",
        args.out.display(),
        manifest.record_count,
        manifest.split(Split::Train).count(),
        manifest.split(Split::Test).count(),
        manifest.skipped.len(),
        manifest.master_seed,
        &manifest.config_hash[..12],
    );
    Ok(())
}

fn render_record(report: &DiagnosticReport) -> String {
    let value = serde_json::json!({ "schema": REPORT_SCHEMA, "report": report });
    let mut text = serde_json::to_string_pretty(&value).expect("reports serialize");
    text.push('\n');
    text
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<(), Failure> {
    let files = input_images(&args.input)?;
    let (suffix, render): (&str, fn(&DiagnosticReport) -> String) = match args.format {
        Format::Text => ("report.txt", render_report),
        Format::Record => ("report.json", render_record),
    };
    let results: Vec<Result<DiagnosticReport, Error>> = files
        .par_iter()
        .map(|path| {
            let report = diagnose_image(&read_png(path)?)?;
            let out = path.with_extension(suffix);
            fs::write(&out, render(&report)).map_err(|e| Error::Io { path: out, source: e })?;
            Ok(report)
        })
        .collect();
    println!("image\tfog\tshake\train\tnoise");
    let mut errors = Vec::new();
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok(r) => {
                let s = r.severity;
                println!("{}\t{:.1}\t{:.1}\t{:.1}\t{:.1}", file_name(path), s[0], s[1], s[2], s[3]);
            }
            Err(e) => errors.push((path.clone(), e)),
        }
    }
    finish(errors, files.len())
}

pub fn restore(args: &RestoreArgs) -> Result<(), Failure> {
    let files = input_images(&args.input)?;
    let state = match &args.checkpoint {
        Some(path) => Some(read_checkpoint(path)?),
        None => {
            eprintln!("warning: no --checkpoint given; using report-seeded parameters");
            None
        }
    };
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let policy_config = PolicyConfig::default();
    let results: Vec<Result<(), Error>> = files
        .par_iter()
        .map(|path| {
            let img = read_png(path)?;
            let report = diagnose_image(&img)?;
            let policy = match &state {
                Some(s) => s.policy_for(&report),
                None => init_policy(&report, &policy_config),
            };
            write_png(args.out.join(file_name(path)), &restore_image(&img, &policy.mean))
        })
        .collect();
    let errors: Vec<_> = files
        .iter()
        .zip(results)
        .filter_map(|(p, r)| r.err().map(|e| (p.clone(), e)))
        .collect();
    // Output I/O failures are not per-image problems.
    if let Some(pos) = errors.iter().position(|(_, e)| e.is_io()) {
        let (_, e) = errors.into_iter().nth(pos).expect("position is in range");
        return Err(e.into());
    }
    println!("restored {} of {} images into {}", files.len() - errors.len(), files.len(), args.out.display());
    finish(errors, files.len())
}

fn load_train_split(root: &Path) -> Result<Vec<TrainSample>, Failure> {
    let manifest = read_manifest(root)?;
    let entries: Vec<_> = manifest.split(Split::Train).collect();
    if entries.is_empty() {
        return Err(Failure::config(format!("--dataset: {} has no train records", root.display())));
    }
    let samples = entries
        .par_iter()
        .map(|entry| {
            let record = read_annotation(root, &entry.annotation)?;
            let degraded = read_png(root.join(&record.paths.degraded))?;
            let clean = read_png(root.join(&record.paths.clean))?;
            let report = diagnose_image(&degraded)?;
            Ok(TrainSample { degraded, clean, report })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(samples)
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    if args.steps == 0 {
        return Err(Failure::config("--steps: must be at least 1"));
    }
    let config = TrainConfig {
        group_size: args.group,
        tau: args.tau,
        learning_rate: args.lr,
        steps: args.steps,
        seed: args.seed,
        batch_size: args.batch,
        ..TrainConfig::default()
    };
    config.validate()?;
    require_dir("--dataset", &args.dataset)?;
    let samples = load_train_split(&args.dataset)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let ckpt = args.out.join(CHECKPOINT_FILE);
    let log_path = args.out.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| io_failure(&log_path, e))?;
    let mut log_error = None;
    // A checkpoint per step keeps an interrupted run resumable from its last line.
    let result = train_with(&samples, config, |state: &TrainState, step| {
        write_checkpoint(&ckpt, state)?;
        let line = step.to_tsv();
        println!("{line}");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error = Some(io_failure(&log_path, e));
        }
        Ok(())
    });
    if let Some(f) = log_error {
        return Err(f);
    }
    let state = result?;
    eprintln!("wrote {} and {}", ckpt.display(), log_path.display());
    debug_assert_eq!(state.step, args.steps);
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), Failure> {
    require_dir("--dataset", &args.dataset)?;
    require_dir("--restored", &args.restored)?;
    let manifest = read_manifest(&args.dataset)?;
    let table = evaluate(&args.dataset, &manifest, &args.restored)?;
    let text = render_table(&table);
    print!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, &text).map_err(|e| io_failure(out, e))?;
    }
    if table.is_complete() {
        Ok(())
    } else {
        let missing: Vec<_> = table.failures().collect();
        for (id, why) in &missing {
            eprintln!("error: {id}: {why}");
        }
        Err(Failure::partial(format!("{} of {} records not scored", missing.len(), table.rows.len())))
    }
}
