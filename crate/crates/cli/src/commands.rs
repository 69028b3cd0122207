use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pseudolabel::augment::{
    ner_fillmask_augment, random_fillmask_augment, seq2seq_augment, AugmentOptions, AugmentProvider, MockProvider,
};
use pseudolabel::classifier::{train_linear, ClassifierHandle, TrainConfig};
use pseudolabel::corpus::{
    generate_synthetic_corpus, load_article_dir, load_labeled_table, write_jsonl, Dataset, Label,
};
use pseudolabel::metrics::{aggregate, evaluate, render_report, Arm, MetricsReport, MetricsRow, ReportFormat};
use pseudolabel::multitask::{
    build_entailment_dataset, build_event_dataset, finetune_causality, pretrain_shared, synthetic_aux, Arch, MtlModel,
};
use pseudolabel::provider::ProviderClient;
use pseudolabel::seed;
use pseudolabel::selftrain::{run_experiment, run_experiment_with_teacher};

use crate::manifest::{check_inputs, Needs, ProviderName, Providers, Resolved, TeacherSource};
use crate::CliError;

pub const PSEUDO_SPLIT: &str = "pseudo_split.jsonl";
pub const TEACHER_MODEL: &str = "teacher.model";
pub const STUDENT_MODEL: &str = "student.model";
pub const BASELINE_MODEL: &str = "baseline.model";
pub const MTL_MODEL: &str = "mtl.model";
pub const AUGMENTED: &str = "augmented.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const RESOLVED_MANIFEST: &str = "manifest.resolved.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AugmentMethod {
    Seq2seq,
    Fillmask,
    Ner,
}

struct Inputs {
    train: Dataset,
    dev: Option<Dataset>,
    unlabeled: Option<Dataset>,
}

fn load_inputs(r: &Resolved, needs: Needs) -> Result<Inputs, CliError> {
    let m = &r.manifest;
    if let Some(spec) = &m.synthetic {
        let corpus = generate_synthetic_corpus(spec)?;
        return Ok(Inputs {
            train: corpus.labeled,
            dev: Some(corpus.test),
            unlabeled: Some(corpus.unlabeled),
        });
    }
    let table = |p: &Path| load_labeled_table(p, r.text_column(), r.label_column());
    let train = table(m.train.as_deref().expect("checked"))?;
    let dev = m.dev.as_deref().map(table).transpose()?;
    let unlabeled = match (&m.unlabeled_dir, needs.unlabeled) {
        (Some(p), true) => Some(load_article_dir(
            p,
            m.min_chars.expect("resolved"),
            m.max_chars.expect("resolved"),
        )?),
        _ => None,
    };
    Ok(Inputs { train, dev, unlabeled })
}

/// Creates the output directory and records the resolved manifest. Runs only
/// after every configuration check has passed.
fn prepare_out_dir(r: &Resolved) -> Result<(), CliError> {
    fs::create_dir_all(&r.out_dir).map_err(|e| io_error(&r.out_dir, e))?;
    let mut body = serde_json::to_string_pretty(&r.manifest).expect("manifests serialize");
    body.push('\n');
    write(&r.out_dir.join(RESOLVED_MANIFEST), body.as_bytes())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Lib(pseudolabel::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, body: &[u8]) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| io_error(path, e))
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), CliError> {
    write(&dir.join(REPORT_JSON), render_report(report, ReportFormat::Json).as_bytes())?;
    write(&dir.join(REPORT_MD), render_report(report, ReportFormat::Markdown).as_bytes())
}

fn remote_client(r: &Resolved) -> Result<Option<ProviderClient>, CliError> {
    match &r.manifest.providers {
        Some(Providers::Remote { endpoint }) => Ok(Some(ProviderClient::http(endpoint.clone())?)),
        _ => Ok(None),
    }
}

fn augment_provider(r: &Resolved) -> Result<Box<dyn AugmentProvider>, CliError> {
    match &r.manifest.providers {
        Some(Providers::Named(ProviderName::Mock)) => Ok(Box::new(MockProvider::default())),
        Some(Providers::Remote { .. }) => Ok(Box::new(remote_client(r)?.expect("remote"))),
        None => Err(CliError::Provider(format!(
            "no provider configured: set `providers` in the manifest or {}",
            crate::manifest::ENDPOINT_ENV
        ))),
    }
}

pub fn ingest(r: &Resolved) -> Result<(), CliError> {
    let needs = Needs {
        train: true,
        dev: false,
        unlabeled: false,
    };
    check_inputs(r, needs)?;
    let inputs = load_inputs(
        r,
        Needs {
            unlabeled: true,
            ..needs
        },
    )?;
    prepare_out_dir(r)?;
    write_jsonl(&inputs.train, r.out_dir.join("train.jsonl"))?;
    if let Some(dev) = &inputs.dev {
        write_jsonl(dev, r.out_dir.join("dev.jsonl"))?;
    }
    if let Some(unlabeled) = &inputs.unlabeled {
        write_jsonl(unlabeled, r.out_dir.join("unlabeled.jsonl"))?;
    }
    Ok(())
}

pub fn selftrain(r: &Resolved) -> Result<(), CliError> {
    let needs = Needs {
        train: true,
        dev: true,
        unlabeled: true,
    };
    check_inputs(r, needs)?;
    let remote_teacher = r.manifest.teacher == Some(TeacherSource::Remote);
    if remote_teacher && !matches!(r.manifest.providers, Some(Providers::Remote { .. })) {
        return Err(CliError::Config("`teacher: remote` requires a provider endpoint".into()));
    }
    let inputs = load_inputs(r, needs)?;
    let dev = inputs.dev.expect("required");
    let unlabeled = inputs.unlabeled.expect("required");
    prepare_out_dir(r)?;

    let out = if remote_teacher {
        let teacher = ClassifierHandle::Remote(Arc::new(remote_client(r)?.expect("remote")));
        run_experiment_with_teacher(&r.pipeline, teacher, &inputs.train, &dev, &unlabeled, r.workers())?
    } else {
        run_experiment(&r.pipeline, &inputs.train, &dev, &unlabeled, r.workers())?
    };

    write_jsonl(&out.pseudo_split, r.out_dir.join(PSEUDO_SPLIT))?;
    if !remote_teacher {
        out.teacher.save(r.out_dir.join(TEACHER_MODEL))?;
    }
    out.student.save(r.out_dir.join(STUDENT_MODEL))?;
    out.baseline.save(r.out_dir.join(BASELINE_MODEL))?;
    write_report(&r.out_dir, &out.report)?;
    eprintln!(
        "kept {} positive and {} negative pseudo-labels; split of {}",
        out.pool.positives.len(),
        out.pool.negatives.len(),
        out.pseudo_split.len()
    );
    Ok(())
}

fn score(model: &ClassifierHandle, eval: &Dataset) -> Result<pseudolabel::metrics::MetricValues, CliError> {
    let preds = model.predict_labels(&eval.texts())?;
    Ok(evaluate(&preds, &eval.labels()?)?)
}

/// Baseline rows for `trials` trials, trained like the self-training baseline.
fn baseline_rows(r: &Resolved, train: &Dataset, eval: &Dataset, trials: usize) -> Result<Vec<MetricsRow>, CliError> {
    let digest = r.pipeline.digest();
    (0..trials)
        .map(|trial| {
            let cfg = r.pipeline.trial_student(trial).with_epochs(r.pipeline.epochs_original);
            let model = train_linear(train, &cfg)?;
            Ok(MetricsRow::new(Arm::Baseline, trial, score(&model, eval)?, &digest))
        })
        .collect()
}

pub fn augment(r: &Resolved, method: AugmentMethod) -> Result<(), CliError> {
    let needs = Needs {
        train: true,
        dev: false,
        unlabeled: false,
    };
    check_inputs(r, needs)?;
    let section = r.augment();
    if method == AugmentMethod::Seq2seq && section.pivots.is_empty() {
        return Err(CliError::Config("`augment.pivots` is empty".into()));
    }
    let provider = augment_provider(r)?;
    let inputs = load_inputs(r, needs)?;
    prepare_out_dir(r)?;

    let options = AugmentOptions {
        skip_failures: section.skip_failures,
    };
    let augmented = match method {
        AugmentMethod::Seq2seq => {
            let pivots: Vec<&str> = section.pivots.iter().map(String::as_str).collect();
            seq2seq_augment(&inputs.train, provider.as_ref(), &pivots, options)?
        }
        AugmentMethod::Fillmask => {
            random_fillmask_augment(&inputs.train, provider.as_ref(), section.seed.expect("resolved"), options)?
        }
        AugmentMethod::Ner => ner_fillmask_augment(&inputs.train, provider.as_ref(), options)?,
    };
    write_jsonl(&augmented, r.out_dir.join(AUGMENTED))?;
    eprintln!("wrote {} examples from {}", augmented.len(), inputs.train.len());

    if let Some(dev) = &inputs.dev {
        let trials = r.pipeline.trials;
        let digest = r.pipeline.digest();
        let mut rows = baseline_rows(r, &inputs.train, dev, trials)?;
        for trial in 0..trials {
            let cfg = r.pipeline.trial_student(trial).with_epochs(section.epochs);
            let model = train_linear(&augmented, &cfg)?;
            rows.push(MetricsRow::new(Arm::Augment, trial, score(&model, dev)?, &digest));
        }
        write_report(&r.out_dir, &aggregate(rows))?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    std::io::BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| io_error(path, e)))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .collect()
}

fn aux_datasets(r: &Resolved) -> Result<(Dataset, Dataset), CliError> {
    let mtl = r.mtl();
    let (Some(ent), Some(ev), Some(ne)) = (&mtl.entailment, &mtl.events, &mtl.nonevents) else {
        return Ok(synthetic_aux(&mtl.aux)?);
    };
    let file = fs::File::open(ent).map_err(|e| io_error(ent, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut pairs: Vec<(String, String, Label)> = Vec::new();
    for (row, record) in reader.deserialize::<(String, String, String)>().enumerate() {
        let (a, b, y) = record.map_err(|e| pseudolabel::Error::Schema(format!("{}: {e}", ent.display())))?;
        let label = match y.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(pseudolabel::Error::Value {
                    row,
                    message: format!("label `{other}` is not 0 or 1"),
                }
                .into())
            }
        };
        pairs.push((a, b, label));
    }
    let entailment = build_entailment_dataset(&pairs)?;
    let event = build_event_dataset(&read_lines(ev)?, &read_lines(ne)?, seed::derive_named(mtl.seed.expect("resolved"), "event"))?;
    Ok((entailment, event))
}

pub fn mtl(r: &Resolved, arch: Arch) -> Result<(), CliError> {
    let needs = Needs {
        train: true,
        dev: true,
        unlabeled: false,
    };
    check_inputs(r, needs)?;
    let section = r.mtl();
    let aux_paths = [&section.entailment, &section.events, &section.nonevents];
    let given = aux_paths.iter().filter(|p| p.is_some()).count();
    if given != 0 && given != 3 {
        return Err(CliError::Config(
            "`mtl.entailment`, `mtl.events` and `mtl.nonevents` must be given together".into(),
        ));
    }
    for p in aux_paths.into_iter().flatten() {
        if !p.exists() {
            return Err(CliError::Config(format!("MTL input {} does not exist", p.display())));
        }
    }
    if section.trials == 0 {
        return Err(CliError::Config("`mtl.trials` must be at least 1".into()));
    }
    let inputs = load_inputs(r, needs)?;
    let dev = inputs.dev.expect("required");
    let (entailment, event) = aux_datasets(r)?;
    prepare_out_dir(r)?;

    let mtl_seed = section.seed.expect("resolved");
    let cfg = TrainConfig {
        lr0: section.lr0,
        dim_log2: section.dim_log2,
        seed: seed::derive_named(mtl_seed, "pretrain"),
        ..TrainConfig::default()
    };
    let init = MtlModel::init(arch, section.dim_log2, section.hidden, seed::derive_named(mtl_seed, "init"))?;
    let pretrained = pretrain_shared(init, &entailment, &event, section.pretrain_epochs, &cfg)?;

    let digest = r.pipeline.digest();
    let mut rows = baseline_rows(r, &inputs.train, &dev, section.trials)?;
    let mut first = None;
    for trial in 0..section.trials {
        let trial_cfg = cfg.clone().with_seed(seed::derive(mtl_seed, trial as u64));
        let (model, row) = finetune_causality(
            pretrained.clone(),
            &inputs.train,
            &dev,
            section.finetune_epochs,
            &trial_cfg,
            trial,
            &digest,
        )?;
        rows.push(row);
        first.get_or_insert((model, trial_cfg));
    }
    let (model, trial_cfg) = first.expect("at least one trial");
    ClassifierHandle::mtl(model, trial_cfg).save(r.out_dir.join(MTL_MODEL))?;
    let mut report = aggregate(rows);
    report.arch = Some(arch.to_string());
    write_report(&r.out_dir, &report)
}

pub fn predict(model: &Path, input: &Path, output: &Path, text_column: &str) -> Result<(), CliError> {
    if !input.exists() {
        return Err(CliError::Config(format!("input {} does not exist", input.display())));
    }
    let model = ClassifierHandle::load(model)?;
    let file = fs::File::open(input).map_err(|e| io_error(input, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let schema = |e: csv::Error| CliError::Lib(pseudolabel::Error::Schema(format!("{}: {e}", input.display())));
    let headers = reader.headers().map_err(schema)?.clone();
    let texts: Vec<String> = if headers.is_empty() {
        Vec::new()
    } else {
        let idx = headers.iter().position(|h| h.trim() == text_column).ok_or_else(|| {
            pseudolabel::Error::Schema(format!("{}: missing column `{text_column}`", input.display()))
        })?;
        reader
            .records()
            .map(|rec| rec.map(|r| r.get(idx).unwrap_or_default().to_owned()).map_err(schema))
            .collect::<Result<_, _>>()?
    };
    let labels = if texts.is_empty() { Vec::new() } else { model.predict_labels(&texts)? };

    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| io_error(output, std::io::Error::other(e.to_string()));
    out.write_record(["index", "prediction"]).map_err(csv_err)?;
    for (i, y) in labels.iter().enumerate() {
        out.write_record([i.to_string(), y.to_string()]).map_err(csv_err)?;
    }
    let body = out.into_inner().map_err(|e| io_error(output, std::io::Error::other(e.to_string())))?;
    write(output, &body)
}

pub fn report(input: &Path, format: ReportFormat, output: Option<PathBuf>) -> Result<(), CliError> {
    if !input.exists() {
        return Err(CliError::Config(format!("report {} does not exist", input.display())));
    }
    let json = fs::read_to_string(input).map_err(|e| io_error(input, e))?;
    let rendered = render_report(&pseudolabel::metrics::parse_report(&json)?, format);
    match output {
        Some(path) => write(&path, rendered.as_bytes()),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
