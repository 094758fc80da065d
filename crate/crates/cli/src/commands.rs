use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use matinfo::io::{read_feature_csv, write_atomic, write_feature_csv};
use matinfo::measures::{feature_report, MeasureReport};
use matinfo::sandbox::{mu_sweep, probe_accuracy, train as run_training, LossFamily, SandboxConfig, TrainRecord, Trajectory, DEFAULT_MUS};
use matinfo::spectral::{FeatureMatrix, KernelKind};
use matinfo::verify::{run_verify, VerifyConfig};
use matinfo::Error;
use serde::Serialize;
use serde_json::json;

use crate::{ConfigOverrides, MeasureArgs, MeasureFlags, SweepArgs, TrainArgs, TrajectoryArgs, VerifyArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{failed} of {total} properties failed")]
    VerificationFailed { failed: usize, total: usize },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    /// 1 usage or config, 2 data, 3 numerical, 4 verification.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed { .. } => 4,
            CliError::Lib(e) => match e {
                Error::Config { .. }
                | Error::BadAlpha(_)
                | Error::BadMu(_)
                | Error::BadLambda(_)
                | Error::BadTemperature(_)
                | Error::BadRatio(_) => 1,
                Error::NotPsd { .. }
                | Error::EigFailure
                | Error::SingularLog { .. }
                | Error::SingularSecondArgument { .. }
                | Error::DivergedLoss { .. } => 3,
                _ => 2,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Writes `text` to `out`, or to standard output when `out` is unset.
fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn report_for(z1: &FeatureMatrix, z2: Option<&FeatureMatrix>, flags: &MeasureFlags) -> CliResult<MeasureReport> {
    Ok(feature_report(z1, z2, &flags.alphas, &flags.mus, flags.kernel.into())?)
}

fn kernel_name(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Covariance => "covariance",
        KernelKind::Gram => "gram",
        KernelKind::Generic => "generic",
    }
}

pub fn measure(args: MeasureArgs) -> CliResult {
    let z1 = read_feature_csv(&args.inputs[0])?;
    let z2 = args.inputs.get(1).map(|p| read_feature_csv(p)).transpose()?;
    let report = report_for(&z1, z2.as_ref(), &args.flags)?;
    let inputs: Vec<String> = args.inputs.iter().map(|p| p.display().to_string()).collect();
    let doc = json!({
        "inputs": inputs,
        "kernel": kernel_name(args.flags.kernel.into()),
        "report": report,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

/// Step number of a `step_<k>.csv` file name.
fn checkpoint_step(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("step_")?.strip_suffix(".csv")?.parse().ok()
}

fn list_checkpoints(dir: &Path) -> CliResult<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(step) = checkpoint_step(&path) {
            found.push((step, path));
        }
    }
    found.sort();
    Ok(found)
}

pub fn trajectory(args: TrajectoryArgs) -> CliResult {
    let b1 = args.dir.join("branch1");
    let b2 = args.dir.join("branch2");
    let (first, second) = if b1.is_dir() {
        let first = list_checkpoints(&b1)?;
        let second = if b2.is_dir() { Some(list_checkpoints(&b2)?) } else { None };
        (first, second)
    } else {
        (list_checkpoints(&args.dir)?, None)
    };
    if first.is_empty() {
        return Err(Error::EmptyDirectory(args.dir.clone()).into());
    }
    if let Some(second) = &second {
        let s1: Vec<usize> = first.iter().map(|(s, _)| *s).collect();
        let s2: Vec<usize> = second.iter().map(|(s, _)| *s).collect();
        if s1 != s2 {
            return Err(Error::MixedShapes(format!("branch1 has steps {s1:?} but branch2 has {s2:?}")).into());
        }
    }

    let mut shape = None;
    let mut check_shape = |path: &Path, z: &FeatureMatrix| -> CliResult {
        let s = z.data().shape();
        match shape {
            None => shape = Some((s, path.to_path_buf())),
            Some((expected, ref origin)) if expected != s => {
                return Err(Error::MixedShapes(format!(
                    "{} is {}x{} but {} is {}x{}",
                    path.display(),
                    s.0,
                    s.1,
                    origin.display(),
                    expected.0,
                    expected.1
                ))
                .into())
            }
            _ => {}
        }
        Ok(())
    };

    let mut out = String::from("step\tbranch\tmeasure\tvalue\n");
    for (i, (step, p1)) in first.iter().enumerate() {
        let z1 = read_feature_csv(p1)?;
        check_shape(p1, &z1)?;
        let z2 = match &second {
            Some(second) => {
                let p2 = &second[i].1;
                let z = read_feature_csv(p2)?;
                check_shape(p2, &z)?;
                Some(z)
            }
            None => None,
        };
        for (scope, label, value) in report_for(&z1, z2.as_ref(), &args.flags)?.rows() {
            out.push_str(&format!("{step}\t{scope}\t{label}\t{value}\n"));
        }
    }
    emit(args.out.as_deref(), &out)
}

fn resolve_config(o: &ConfigOverrides, default_loss: LossFamily) -> CliResult<SandboxConfig> {
    let mut cfg = match &o.config {
        Some(path) => SandboxConfig::from_path(path)?,
        None => SandboxConfig {
            loss: default_loss,
            ..SandboxConfig::default()
        },
    };
    if let Some(loss) = o.loss {
        cfg.loss = loss;
    }
    if o.lambda.is_some() {
        cfg.lambda = o.lambda;
    }
    if let Some(mu) = o.mu {
        cfg.mu = mu;
    }
    if let Some(r) = o.mask_ratio {
        cfg.mask_ratio = r;
    }
    if let Some(d) = o.d {
        cfg.encoder.out_dim = d;
    }
    if let Some(b) = o.batch {
        cfg.batch_size = b;
    }
    if let Some(s) = o.steps {
        cfg.steps = s;
    }
    if let Some(lr) = o.lr {
        cfg.learning_rate = lr;
    }
    if let Some(r) = o.record_every {
        cfg.record_every = r;
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn loss_slug(loss: LossFamily) -> &'static str {
    match loss {
        LossFamily::BarlowTwins => "barlow",
        LossFamily::SpectralContrastive => "spectral",
        LossFamily::InfoNce => "infonce",
        LossFamily::Mae => "mae",
        LossFamily::Umae => "umae",
        LossFamily::Mmae => "mmae",
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: String,
    config: &'a SandboxConfig,
    seed: u64,
    version: &'static str,
    status: String,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_record: Option<&'a TrainRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_accuracy: Option<f64>,
    duration_secs: f64,
}

fn jsonl(records: &[TrainRecord]) -> CliResult<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(Error::from)?);
        out.push('\n');
    }
    Ok(out)
}

fn write_checkpoints(dir: &Path, traj: &Trajectory, outputs: &mut Vec<String>) -> CliResult {
    for snap in &traj.snapshots {
        let name = format!("step_{}.csv", snap.step);
        write_feature_csv(&dir.join("branch1").join(&name), &snap.branch1)?;
        outputs.push(format!("branch1/{name}"));
        if let Some(b2) = &snap.branch2 {
            write_feature_csv(&dir.join("branch2").join(&name), b2)?;
            outputs.push(format!("branch2/{name}"));
        }
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> CliResult {
    let start = Instant::now();
    let cfg = resolve_config(&args.overrides, LossFamily::BarlowTwins)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.out_root.join(format!("{}-seed{}", loss_slug(cfg.loss), cfg.seed)));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    let mut outputs = vec!["config.toml".to_string(), "trajectory.jsonl".to_string()];
    let command: Vec<String> = std::env::args().collect();

    let outcome = run_training(&cfg);
    let (status, records, traj, failure) = match outcome {
        Ok(traj) => ("completed".to_string(), traj.records.clone(), Some(traj), None),
        Err(Error::DivergedLoss { step, partial }) => {
            let status = format!("diverged at step {step}");
            (status, partial.clone(), None, Some(Error::DivergedLoss { step, partial }))
        }
        Err(e) => return Err(e.into()),
    };
    write_atomic(&dir.join("trajectory.jsonl"), jsonl(&records)?.as_bytes())?;
    let mut probe = None;
    if let Some(traj) = &traj {
        if !args.no_checkpoints {
            write_checkpoints(&dir, traj, &mut outputs)?;
        }
        probe = Some(probe_accuracy(traj)?);
    }
    let manifest = RunManifest {
        command: command.join(" "),
        config: &cfg,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        status,
        outputs,
        final_record: records.last(),
        probe_accuracy: probe,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), text.as_bytes())?;

    if let Some(last) = records.last() {
        eprintln!("step {}: loss {}", last.step, last.loss.total);
        for m in &last.measures {
            eprintln!("  {} = {}", m.label(), m.value);
        }
    }
    if let Some(p) = probe {
        eprintln!("  probe_accuracy = {p}");
    }
    println!("{}", dir.display());
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn sweep(args: SweepArgs) -> CliResult {
    let cfg = resolve_config(&args.overrides, LossFamily::Mmae)?;
    if cfg.loss.is_siamese() {
        return Err(Error::Config {
            field: "loss".into(),
            message: "the mu sweep runs masked objectives (mae, umae, mmae)".into(),
        }
        .into());
    }
    let mus = args.mus.clone().unwrap_or_else(|| DEFAULT_MUS.to_vec());
    let rows = mu_sweep(&cfg, &mus)?;
    let mut out = String::from("mu\tfinal_erank\tfinal_tcr\tfinal_recon\tprobe_accuracy\n");
    for r in &rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.mu, r.final_erank, r.final_tcr, r.final_recon, r.probe_accuracy
        ));
    }
    emit(args.out.as_deref(), &out)
}

pub fn verify(args: VerifyArgs) -> CliResult {
    let cfg = VerifyConfig {
        sizes: args.sizes,
        trials: args.trials,
        alphas: args.alphas,
        mus: args.mus,
        seed: args.seed,
        inject_non_psd: args.inject_non_psd,
    };
    let report = run_verify(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    for p in &report.properties {
        eprintln!(
            "{} {:<36} trials {:>5}  max violation {:e}  tolerance {:e}",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.trials,
            p.max_violation,
            p.tolerance
        );
        if let Some(note) = &p.note {
            eprintln!("     {note}");
        }
    }
    let failed = report.properties.iter().filter(|p| !p.passed).count();
    if failed > 0 {
        return Err(CliError::VerificationFailed {
            failed,
            total: report.properties.len(),
        });
    }
    Ok(())
}
