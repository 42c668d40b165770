//! The `hope` command-line tool.
//!
//! Every command writes its artifacts plus a `<command>.manifest.json` into
//! the output directory. Failures print one line to stderr,
//! `hope: error=<class> code=<n> reason=<text>`, and exit with 1 (config),
//! 2 (data) or 3 (numeric).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{DataSplit, ExemplarMethod, RefSet, Settings};
use crate::data_io::{
    load_delimited, load_idx, make_synthetic, preprocess, preprocess_like, split, Scheme,
};
use crate::dataset::{LabeledDataset, Preprocessing};
use crate::document::{load_exemplars, load_model, save_exemplars, save_json, save_model};
use crate::error::{HopeError, Result};
use crate::evaluation::{evaluate_model, EvalReport};
use crate::exemplar::{kmeans_exemplars, ClusterSpace, ExemplarSet};
use crate::manifest::RunManifest;
use crate::model::HighOrderModel;
use crate::optimizer::{train_embedding, train_joint};
use crate::par;
use crate::plot::{exemplar_pgm, scatter_svg, Overlay};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "HOPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hope", version, about = "Supervised high-order parametric embedding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an embedding model.
    Train(CommandArgs),
    /// Build an exemplar set (k-means or joint optimization).
    Exemplars(CommandArgs),
    /// kNN error against training, exemplar or test references.
    Evaluate(CommandArgs),
    /// Write embedded coordinates and labels as delimited text.
    Embed(CommandArgs),
    /// Write an SVG scatter of a 2-D embedding.
    Plot(CommandArgs),
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        /// Write artifacts here instead of the recorded directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommandArgs {
    /// Flat TOML document; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let reason = e.kind().to_string();
            eprint!("{e}");
            report(&HopeError::Config(format!("bad arguments: {reason}")));
            return 1;
        }
    };
    match dispatch(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.class().exit_code()
        }
    }
}

fn report(e: &HopeError) {
    let class = e.class();
    let reason = e.to_string().replace(['\n', '\r'], " ");
    eprintln!(
        "hope: error={} code={} reason={reason}",
        class.name(),
        class.exit_code()
    );
}

fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    let (name, settings) = match command {
        Command::Replay { manifest, out_dir } => {
            let m = RunManifest::load(&manifest)?;
            let mut s = m.config;
            if out_dir.is_some() {
                s.out_dir = out_dir;
            }
            (m.command, s)
        }
        Command::Train(a) => ("train".into(), resolve(&a)?),
        Command::Exemplars(a) => ("exemplars".into(), resolve(&a)?),
        Command::Evaluate(a) => ("evaluate".into(), resolve(&a)?),
        Command::Embed(a) => ("embed".into(), resolve(&a)?),
        Command::Plot(a) => ("plot".into(), resolve(&a)?),
    };
    run_command(&name, &settings, argv.to_vec())
}

fn resolve(a: &CommandArgs) -> Result<Settings> {
    let file = a.config.as_deref().map(Settings::from_file).transpose()?;
    Ok(Settings::resolve(file.as_ref(), &a.settings))
}

fn thread_count(s: &Settings) -> Result<Option<usize>> {
    if let Some(n) = s.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| HopeError::Config(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Runs command `name` with fully resolved settings.
pub fn run_command(name: &str, s: &Settings, argv: Vec<String>) -> Result<()> {
    par::init_thread_pool(thread_count(s)?);
    let mut manifest = RunManifest::start(name, argv, s);
    let out_dir = s.out_dir();
    fs::create_dir_all(&out_dir).map_err(|e| HopeError::io(&out_dir, e))?;
    match name {
        "train" => cmd_train(s, &mut manifest)?,
        "exemplars" => cmd_exemplars(s, &mut manifest)?,
        "evaluate" => cmd_evaluate(s, &mut manifest)?,
        "embed" => cmd_embed(s, &mut manifest)?,
        "plot" => cmd_plot(s, &mut manifest)?,
        other => return Err(HopeError::Config(format!("unknown command `{other}`"))),
    }
    manifest.finish();
    let path = out_dir.join(format!("{name}.manifest.json"));
    save_json(&path, &manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Training split and optional test split.
pub struct Data {
    pub train: LabeledDataset,
    pub test: Option<LabeledDataset>,
}

/// Loads the configured data source. With `pre` (from a model document) file
/// data is scaled and labeled exactly as during training.
pub fn load_data(
    s: &Settings,
    pre: Option<&Preprocessing>,
    manifest: &mut RunManifest,
) -> Result<Data> {
    let idx = s.train_images.is_some() || s.train_labels.is_some();
    let sources = [s.synthetic.is_some(), s.train_text.is_some(), idx]
        .iter()
        .filter(|&&b| b)
        .count();
    if sources == 0 {
        return Err(HopeError::Config(
            "no training data: set synthetic, train_text, or train_images with train_labels".into(),
        ));
    }
    if sources > 1 {
        return Err(HopeError::Config("more than one training data source".into()));
    }

    if let Some(kind) = s.synthetic {
        let full = make_synthetic(kind, &s.synthetic_params(), s.seed())?;
        let (train, test) = split(&full, s.test_fraction.unwrap_or(0.1), s.seed())?;
        let train = match s.limit {
            Some(n) => train.truncate(n),
            None => train,
        };
        let test = match s.test_limit {
            Some(n) => test.truncate(n),
            None => test,
        };
        return Ok(Data {
            train,
            test: (!test.is_empty()).then_some(test),
        });
    }

    let mut raw = match (&s.train_text, &s.train_images, &s.train_labels) {
        (Some(t), _, _) => {
            manifest.add_input(t)?;
            load_delimited(t)?
        }
        (None, Some(i), Some(l)) => {
            manifest.add_input(i)?;
            manifest.add_input(l)?;
            load_idx(i, l)?
        }
        _ => {
            return Err(HopeError::Config(
                "train_images and train_labels must be given together".into(),
            ))
        }
    };
    if let Some(n) = s.limit {
        raw.truncate(n);
    }
    let train = match pre {
        Some(p) => preprocess_like(&raw, p)?,
        None => preprocess(&raw, Scheme::Scale01, None)?,
    };

    let test_raw = match (&s.test_text, &s.test_images, &s.test_labels) {
        (Some(t), _, _) => {
            manifest.add_input(t)?;
            Some(load_delimited(t)?)
        }
        (None, Some(i), Some(l)) => {
            manifest.add_input(i)?;
            manifest.add_input(l)?;
            Some(load_idx(i, l)?)
        }
        (None, None, None) => None,
        _ => {
            return Err(HopeError::Config(
                "test_images and test_labels must be given together".into(),
            ))
        }
    };
    let test = match test_raw {
        Some(mut r) => {
            if let Some(n) = s.test_limit {
                r.truncate(n);
            }
            Some(preprocess_like(&r, train.preprocessing())?)
        }
        None => None,
    };
    Ok(Data { train, test })
}

fn read_model(s: &Settings, manifest: &mut RunManifest) -> Result<(HighOrderModel, Preprocessing)> {
    let path = s.model_path();
    manifest.add_input(&path)?;
    load_model(&path)
}

fn read_exemplars(path: &Path, manifest: &mut RunManifest) -> Result<ExemplarSet> {
    manifest.add_input(path)?;
    Ok(load_exemplars(path)?.0)
}

fn check_width(model: &HighOrderModel, data: &LabeledDataset) -> Result<()> {
    if model.input_dim() != data.input_dim() {
        return Err(HopeError::DimensionMismatch {
            context: "model input width vs data width",
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    Ok(())
}

fn wrote(manifest: &mut RunManifest, path: &Path) {
    manifest.add_output(path);
    println!("wrote {}", path.display());
}

fn cmd_train(s: &Settings, manifest: &mut RunManifest) -> Result<()> {
    let config = s.train_config();
    config.validate()?;
    let data = load_data(s, None, manifest)?;
    let shape = s.shape(data.train.input_dim())?;
    let model = HighOrderModel::init(shape, s.seed())?;
    let (model, trace) = train_embedding(&model, &data.train, &config)?;

    let model_path = s.model_path();
    save_model(&model_path, &model, data.train.preprocessing())?;
    wrote(manifest, &model_path);
    let trace_path = s.out_dir().join("trace.json");
    save_json(&trace_path, &trace)?;
    wrote(manifest, &trace_path);
    if let (Some(e), Some(err)) = (trace.best_epoch, trace.best_validation_error) {
        println!(
            "best epoch {e}: validation 5NN error {:.4}% over {} epochs",
            err * 100.0,
            trace.epochs.len()
        );
    }
    Ok(())
}

fn cmd_exemplars(s: &Settings, manifest: &mut RunManifest) -> Result<()> {
    let method = s.method.unwrap_or(ExemplarMethod::KmeansInput);
    let per_class = s.per_class.unwrap_or(2);
    let model_path = s.model_path();
    let loaded = match method {
        ExemplarMethod::KmeansInput if !model_path.exists() => None,
        _ => Some(read_model(s, manifest)?),
    };
    let data = load_data(s, loaded.as_ref().map(|(_, p)| p), manifest)?;
    if let Some((m, _)) = &loaded {
        check_width(m, &data.train)?;
    }
    let pre = data.train.preprocessing().clone();
    let out_dir = s.out_dir();

    // report the class by its original label
    let named = |e: HopeError| match e {
        HopeError::ClassTooSmall { class, size, required } => HopeError::ClassTooSmall {
            class: pre
                .label_map
                .get(class as usize - 1)
                .and_then(|&l| u32::try_from(l).ok())
                .unwrap_or(class),
            size,
            required,
        },
        other => other,
    };
    let set = match method {
        ExemplarMethod::KmeansInput => {
            kmeans_exemplars(&data.train, per_class, s.seed(), ClusterSpace::Input, None)
                .map_err(named)?
        }
        ExemplarMethod::KmeansEmbed => {
            let model = &loaded.as_ref().expect("model loaded").0;
            kmeans_exemplars(&data.train, per_class, s.seed(), ClusterSpace::Embedding, Some(model))
                .map_err(named)?
        }
        ExemplarMethod::Joint => {
            let model = &loaded.as_ref().expect("model loaded").0;
            let config = s.train_config();
            config.validate()?;
            let init =
                kmeans_exemplars(&data.train, per_class, s.seed(), ClusterSpace::Input, None)
                    .map_err(named)?;
            let (model, set, trace) = train_joint(model, &data.train, &init, &config)?;
            let joint_model = out_dir.join("model.joint.json");
            save_model(&joint_model, &model, &pre)?;
            wrote(manifest, &joint_model);
            let trace_path = out_dir.join("joint_trace.json");
            save_json(&trace_path, &trace)?;
            wrote(manifest, &trace_path);
            set
        }
    };

    let path = s.exemplar_path();
    save_exemplars(&path, &set, &pre)?;
    wrote(manifest, &path);
    match exemplar_pgm(&set) {
        Some(bytes) => {
            let pgm = out_dir.join("exemplars.pgm");
            fs::write(&pgm, bytes).map_err(|e| HopeError::io(&pgm, e))?;
            wrote(manifest, &pgm);
        }
        None => println!(
            "notice: input width {} is not a square image, exemplar image grid skipped",
            set.e().cols() - 1
        ),
    }
    println!("{} exemplars ({per_class} per class) via {}", set.len(), method.as_str());
    Ok(())
}

/// Output of the `evaluate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub train_refs: Option<EvalReport>,
    pub exemplar_refs: Option<EvalReport>,
    pub test_refs: Option<EvalReport>,
    /// Per-query time against training references over that against exemplars.
    pub retrieval_time_ratio: Option<f64>,
}

fn cmd_evaluate(s: &Settings, manifest: &mut RunManifest) -> Result<()> {
    let (model, pre) = read_model(s, manifest)?;
    let data = load_data(s, Some(&pre), manifest)?;
    check_width(&model, &data.train)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| HopeError::Config("evaluate needs a test split".into()))?;
    let k = s.k.unwrap_or(crate::evaluation::DEFAULT_K);
    let ex_path = s.exemplar_path();
    let refs = s.refs.unwrap_or(if ex_path.exists() {
        RefSet::Both
    } else {
        RefSet::Train
    });

    let mut doc = EvaluationDocument {
        train_refs: None,
        exemplar_refs: None,
        test_refs: None,
        retrieval_time_ratio: None,
    };
    if matches!(refs, RefSet::Train | RefSet::Both) {
        let r = evaluate_model(&model, data.train.x(), data.train.labels(), test, k)?;
        println!("{}", r.summary("training refs"));
        doc.train_refs = Some(r);
    }
    if matches!(refs, RefSet::Exemplars | RefSet::Both) {
        let ex = read_exemplars(&ex_path, manifest)?;
        let r = evaluate_model(&model, ex.e(), ex.labels(), test, k)?;
        println!("{}", r.summary("exemplar refs"));
        doc.exemplar_refs = Some(r);
    }
    if refs == RefSet::Test {
        let r = evaluate_model(&model, test.x(), test.labels(), test, k)?;
        println!("{}", r.summary("test refs"));
        doc.test_refs = Some(r);
    }
    if let (Some(t), Some(e)) = (&doc.train_refs, &doc.exemplar_refs) {
        if e.mean_query_time > 0.0 {
            let ratio = t.mean_query_time / e.mean_query_time;
            println!("retrieval time ratio (training refs / exemplar refs): {ratio:.2}");
            doc.retrieval_time_ratio = Some(ratio);
        }
    }
    let path = s.output.clone().unwrap_or_else(|| s.out_dir().join("eval.json"));
    save_json(&path, &doc)?;
    wrote(manifest, &path);
    Ok(())
}

fn chosen_split<'a>(s: &Settings, data: &'a Data) -> Result<&'a LabeledDataset> {
    match (s.split, &data.test) {
        (Some(DataSplit::Train), _) | (None, None) => Ok(&data.train),
        (Some(DataSplit::Test), Some(t)) | (None, Some(t)) => Ok(t),
        (Some(DataSplit::Test), None) => {
            Err(HopeError::Config("split = test but no test data is configured".into()))
        }
    }
}

fn cmd_embed(s: &Settings, manifest: &mut RunManifest) -> Result<()> {
    let (model, pre) = read_model(s, manifest)?;
    let data = load_data(s, Some(&pre), manifest)?;
    check_width(&model, &data.train)?;
    let ds = chosen_split(s, &data)?;
    let y = model.map_batch(ds.x())?;
    let mut text = String::new();
    for (row, &l) in y.iter_rows().zip(ds.labels()) {
        for v in row {
            text.push_str(&format!("{v:e},"));
        }
        text.push_str(&format!("{}\n", pre.label_map[l as usize - 1]));
    }
    let path = s.output.clone().unwrap_or_else(|| s.out_dir().join("embedding.csv"));
    fs::write(&path, text).map_err(|e| HopeError::io(&path, e))?;
    wrote(manifest, &path);
    Ok(())
}

fn cmd_plot(s: &Settings, manifest: &mut RunManifest) -> Result<()> {
    let (model, pre) = read_model(s, manifest)?;
    if model.embed_dim() != 2 {
        return Err(HopeError::PlotDimension(model.embed_dim()));
    }
    let data = load_data(s, Some(&pre), manifest)?;
    check_width(&model, &data.train)?;
    let ds = chosen_split(s, &data)?;
    let y = model.map_batch(ds.x())?;
    let ex_path = s.exemplar_path();
    let ex = if s.exemplar_file.is_some() || ex_path.exists() {
        Some(read_exemplars(&ex_path, manifest)?)
    } else {
        None
    };
    let ex_y = ex.as_ref().map(|e| model.map_batch(e.e())).transpose()?;
    let overlay = match (&ex, &ex_y) {
        (Some(e), Some(p)) => Some(Overlay {
            points: p,
            labels: e.labels(),
        }),
        _ => None,
    };
    let svg = scatter_svg(&y, ds.labels(), &pre.label_map, overlay)?;
    let path = s.output.clone().unwrap_or_else(|| s.out_dir().join("plot.svg"));
    fs::write(&path, svg).map_err(|e| HopeError::io(&path, e))?;
    wrote(manifest, &path);
    Ok(())
}
