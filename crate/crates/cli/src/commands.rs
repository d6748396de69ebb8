use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use zsl_core::dataset::{
    generate_synthetic, load_dataset, load_split_file, make_split, save_dataset, save_split_file,
    standardize_signatures, Dataset, SignatureMatrix, Split, SplitFile, SyntheticConfig,
};
use zsl_core::diagnostics::{self, DiagnosticsExport};
use zsl_core::model::{self, decode_checkpoint, encode_checkpoint, Checkpoint, Metrics};
use zsl_core::projection::project_categories;
use zsl_core::steering::{self, parse_weights, SteeringState, WEIGHT_GUIDANCE_FLOOR};
use zsl_service::{router, AppState, Session, SessionInputs};

use crate::args::*;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_DIAG_FRACTION: f64 = 0.2;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("payload serializes");
    bytes.push(b'\n');
    write(path, &bytes)
}

/// Loaded dataset with its resolved split.
struct Context {
    dataset: Dataset,
    signatures: SignatureMatrix,
    split: Split,
    split_file: SplitFile,
}

impl Context {
    /// Split fields come from the flags, then `recorded` (a checkpoint's
    /// split), then split.json, then defaults.
    fn load(args: &DataArgs, recorded: Option<&SplitFile>) -> Result<Self> {
        let dataset = load_dataset(&args.data)?;
        let on_disk = match recorded {
            Some(_) => None,
            None => load_split_file(&args.data)?,
        };
        let base = recorded.or(on_disk.as_ref());
        let split_file = SplitFile {
            unseen: args
                .unseen
                .clone()
                .or_else(|| base.map(|b| b.unseen.clone()))
                .unwrap_or_default(),
            diag_fraction: args
                .diag_fraction
                .or(base.map(|b| b.diag_fraction))
                .unwrap_or(DEFAULT_DIAG_FRACTION),
            seed: args.seed.or(base.map(|b| b.seed)).unwrap_or(0),
        };
        if split_file.unseen.is_empty() {
            log::warn!("no unseen classes selected; every class is seen");
        }
        let split = make_split(
            &dataset,
            &split_file.unseen,
            split_file.diag_fraction,
            split_file.seed,
        )?;
        let signatures = standardize_signatures(dataset.raw_attributes())?;
        Ok(Self {
            dataset,
            signatures,
            split,
            split_file,
        })
    }

    fn classes(&self, names: &[String]) -> Result<Vec<usize>> {
        Ok(names
            .iter()
            .map(|n| self.dataset.class_index(n))
            .collect::<zsl_core::Result<_>>()?)
    }

    fn check_model(&self, ck: &Checkpoint) -> Result<()> {
        let (d, a) = (self.dataset.feature_dim(), self.dataset.num_attributes());
        if ck.model.input_dim() != d || ck.model.attr_dim() != a {
            return Err(CliError::Usage(format!(
                "checkpoint expects d={} a={}, dataset has d={d} a={a}",
                ck.model.input_dim(),
                ck.model.attr_dim()
            )));
        }
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(decode_checkpoint(&read(path)?)?)
}

fn load_weights(path: &Path, num_attributes: usize) -> Result<Vec<f64>> {
    let w = parse_weights(&read(path)?, Some(num_attributes))?;
    warn_low_weights(&w);
    Ok(w)
}

fn warn_low_weights(w: &[f64]) {
    for (k, &v) in w.iter().enumerate() {
        if v < WEIGHT_GUIDANCE_FLOOR {
            eprintln!(
                "warning: weight of attribute {k} is {v}; weights below {WEIGHT_GUIDANCE_FLOOR} tend to hurt accuracy"
            );
        }
    }
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "{label}: mean per-class {:.2}%, overall {:.2}% ({}/{})",
        100.0 * m.mean_per_class,
        100.0 * m.overall,
        m.correct,
        m.total
    );
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let syn = generate_synthetic(&SyntheticConfig {
        seen_classes: args.seen,
        unseen_classes: args.unseen,
        attributes: args.attrs,
        dim: args.dim,
        per_class: args.per_class,
        noise_sigma: args.noise,
        corrupt_attribute: args.corrupt,
        seed: args.seed,
    })?;
    if !(args.diag_fraction > 0.0 && args.diag_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--diag-fraction must lie in (0, 1), got {}",
            args.diag_fraction
        )));
    }
    save_dataset(&syn.dataset, &args.out)?;
    save_split_file(&syn.split_file(args.diag_fraction, args.seed), &args.out)?;
    println!(
        "wrote {} instances, {} classes ({} unseen), {} attributes to {}",
        syn.dataset.num_instances(),
        syn.dataset.num_classes(),
        args.unseen,
        args.attrs,
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let ctx = Context::load(&args.data, None)?;
    let a = ctx.dataset.num_attributes();
    let weights = match &args.weights {
        Some(p) => load_weights(p, a)?,
        None => vec![1.0; a],
    };
    let config = args.train.config(ctx.split_file.seed);
    config.validate()?;
    let (model, report) = model::train(&ctx.dataset, &ctx.split, &ctx.signatures, &weights, &config)?;
    write(
        &args.out,
        &encode_checkpoint(&model, &weights, &config, Some(&ctx.split_file))?,
    )?;
    println!(
        "trained {} epochs: loss {:.6} -> {:.6}",
        report.epochs_run,
        report.loss_history.first().copied().unwrap_or(f64::NAN),
        report.final_loss
    );
    let seen = steering::seen_metrics(&model, &ctx.dataset, &ctx.split, &ctx.signatures, &weights)?;
    print_metrics("seen (diagnostics holdout)", &seen);
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<String>,
    pub seen: Metrics,
    pub unseen: Option<Metrics>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&args.model)?;
    let ctx = Context::load(&args.data, ck.split.as_ref())?;
    ctx.check_model(&ck)?;
    let w = match &args.weights {
        Some(p) => load_weights(p, ctx.dataset.num_attributes())?,
        None => ck.weights.clone(),
    };
    let seen = steering::seen_metrics(&ck.model, &ctx.dataset, &ctx.split, &ctx.signatures, &w)?;
    let unseen = if ctx.split.unseen_classes.is_empty() {
        None
    } else {
        Some(steering::unseen_metrics(&ck.model, &ctx.dataset, &ctx.split, &ctx.signatures, &w)?)
    };
    print_metrics("seen (diagnostics holdout)", &seen);
    if let Some(m) = &unseen {
        print_metrics("unseen (zero-shot)", m);
    }
    if let Some(out) = &args.out {
        write_json(
            out,
            &EvaluationReport {
                classes: ctx.dataset.class_names().to_vec(),
                seen,
                unseen,
            },
        )?;
    }
    Ok(())
}

pub fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let ck = load_checkpoint(&args.model)?;
    let ctx = Context::load(&args.data, ck.split.as_ref())?;
    ctx.check_model(&ck)?;
    let w = match &args.weights {
        Some(p) => load_weights(p, ctx.dataset.num_attributes())?,
        None => ck.weights.clone(),
    };
    let selected = match &args.categories {
        Some(names) => ctx.classes(names)?,
        None => ctx.split.seen_classes.clone(),
    };
    let unseen = ctx.classes(args.unseen_selection.as_deref().unwrap_or_default())?;
    if let Some(&c) = unseen.iter().find(|&&c| ctx.split.is_seen(c)) {
        return Err(CliError::Usage(format!(
            "--unseen-selection: `{}` is not an unseen class",
            ctx.dataset.class_names()[c]
        )));
    }
    let summary = diagnostics::diagnose(&ck.model, &ctx.dataset, &ctx.split, &ctx.signatures, &w, &selected)?;
    let rows: Vec<&[f64]> = unseen.iter().map(|&c| ctx.signatures.signature(c)).collect();
    let export = DiagnosticsExport::build(
        &summary,
        &ctx.dataset,
        (!rows.is_empty()).then_some(rows.as_slice()),
    )?;
    write_json(&args.out, &export)?;
    let names = ctx.dataset.attribute_names();
    let top: Vec<&str> = export
        .orderings
        .total
        .iter()
        .take(5)
        .map(|&k| names[k].as_str())
        .collect();
    println!("top attributes by total score: {}", top.join(", "));
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionExport {
    pub classes: Vec<String>,
    pub seen: Vec<bool>,
    pub coords: Vec<[f64; 2]>,
    pub kl: f64,
}

pub fn project(args: ProjectArgs) -> Result<()> {
    let ctx = Context::load(&args.data, None)?;
    let config = args.tsne.config(ctx.split_file.seed);
    config.validate()?;
    let p = project_categories(&ctx.signatures, &ctx.split, &config)?;
    let kl = p.kl_history.last().copied().unwrap_or(0.0);
    write_json(
        &args.out,
        &ProjectionExport {
            classes: ctx.dataset.class_names().to_vec(),
            seen: p.seen_mask.clone(),
            coords: p.coords.iter_rows().map(|r| [r[0], r[1]]).collect(),
            kl,
        },
    )?;
    println!("projected {} categories, final KL {kl:.6}", p.seen_mask.len());
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerSide {
    pub weights: Vec<f64>,
    pub seen: Metrics,
    pub unseen: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerReport {
    pub classes: Vec<String>,
    pub before: SteerSide,
    pub after: SteerSide,
    pub final_loss: f64,
}

pub fn steer(args: SteerArgs) -> Result<()> {
    let ck = load_checkpoint(&args.model)?;
    let ctx = Context::load(&args.data, ck.split.as_ref())?;
    ctx.check_model(&ck)?;
    let w = load_weights(&args.weights, ctx.dataset.num_attributes())?;
    let state = SteeringState::from_weights(&w)?;
    let mut config = ck.config.clone();
    if let Some(seed) = args.data.seed {
        config.seed = seed;
    }
    let measure = |m: &model::MappingModel, w: &[f64]| -> Result<SteerSide> {
        let unseen = if args.eval_unseen && !ctx.split.unseen_classes.is_empty() {
            Some(steering::unseen_metrics(m, &ctx.dataset, &ctx.split, &ctx.signatures, w)?)
        } else {
            None
        };
        Ok(SteerSide {
            weights: w.to_vec(),
            seen: steering::seen_metrics(m, &ctx.dataset, &ctx.split, &ctx.signatures, w)?,
            unseen,
        })
    };
    let before = measure(&ck.model, &ck.weights)?;
    let outcome = steering::retrain(&ctx.dataset, &ctx.split, &ctx.signatures, &state, &config)?;
    let after = measure(&outcome.model, &w)?;
    write(
        &args.out,
        &encode_checkpoint(&outcome.model, &w, &config, Some(&ctx.split_file))?,
    )?;
    print_metrics("seen before", &before.seen);
    print_metrics("seen after ", &after.seen);
    if let (Some(b), Some(a)) = (&before.unseen, &after.unseen) {
        print_metrics("unseen before", b);
        print_metrics("unseen after ", a);
    }
    if let Some(path) = &args.report {
        write_json(
            path,
            &SteerReport {
                classes: ctx.dataset.class_names().to_vec(),
                before,
                after,
                final_loss: outcome.report.final_loss,
            },
        )?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let ck = load_checkpoint(&args.model)?;
    let ctx = Context::load(&args.data, ck.split.as_ref())?;
    ctx.check_model(&ck)?;
    let tsne = args.tsne.config(ctx.split_file.seed);
    tsne.validate()?;
    let inputs = SessionInputs {
        dataset: ctx.dataset,
        split: ctx.split,
        signatures: ctx.signatures,
        model: ck.model,
        config: ck.config,
        weights: ck.weights,
        tsne,
        eval_unseen: args.eval_unseen,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<tokio runtime>"),
            source,
        })?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|source| CliError::Io {
                path: PathBuf::from(&addr),
                source,
            })?;
        let state = AppState::loading();
        let app = router(state.clone(), args.static_dir.as_deref());
        eprintln!("listening on http://{addr} (loading session)");
        let server = tokio::spawn(zsl_service::serve(listener, app));
        let session = tokio::task::spawn_blocking(move || Session::new(inputs))
            .await
            .expect("session loader panicked")?;
        state.install(session);
        eprintln!("session ready");
        server
            .await
            .expect("server task panicked")
            .map_err(|source| CliError::Io {
                path: PathBuf::from(&addr),
                source,
            })
    })
}
