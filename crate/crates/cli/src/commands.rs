use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use confalign::backend::{BackendRegistry, VerbalMode};
use confalign::confidence::{extractors, read_records, write_records, ConfidenceExtractor};
use confalign::data::{synthetic_questions, write_dataset, DatasetSpec, Question, Sampling};
use confalign::metrics::{p_value_methods, PValueMethod, PermutationTest};
use confalign::pipeline::{
    build_preference_set, read_responses, run_generation, write_responses, GenerateOutput,
};
use confalign::preference::{write_preferences, PairStats};
use confalign::report::{CellInput, Report};

use crate::config::RunConfig;
use crate::failure::{Classify, Failure};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MockMode {
    Vanilla,
    Aligned,
}

impl From<MockMode> for VerbalMode {
    fn from(m: MockMode) -> Self {
        match m {
            MockMode::Vanilla => VerbalMode::Vanilla,
            MockMode::Aligned => VerbalMode::Aligned,
        }
    }
}

/// Flags shared by commands that run a backend. Each overrides the matching
/// config-file value.
#[derive(Debug, Args)]
pub struct RunFlags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Backend name (`mock`, `chat-completions`).
    #[arg(long)]
    pub backend: Option<String>,
    /// Use the answer token's share of the choice-letter mass.
    #[arg(long)]
    pub renormalize: bool,
    /// Internal-confidence reader by name; overrides --renormalize.
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Warn when the share of failed records exceeds this fraction.
    #[arg(long)]
    pub failure_threshold: Option<f64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mock_mode: Option<MockMode>,
    #[arg(long)]
    pub mock_seed: Option<u64>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(self.config.as_deref()).usage()?;
        if let Some(b) = &self.backend {
            cfg.backend = b.clone();
        }
        if self.renormalize {
            cfg.renormalize = true;
        }
        if let Some(e) = &self.extractor {
            cfg.extractor = Some(e.clone());
        }
        if let Some(d) = &self.out_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(t) = self.failure_threshold {
            cfg.failure_threshold = t;
        }
        if let Some(p) = self.parallelism {
            cfg.generation.parallelism = p;
        }
        if let Some(n) = self.max_new_tokens {
            cfg.generation.max_new_tokens = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mock_mode {
            cfg.mock.verbal_mode = m.into();
        }
        if let Some(s) = self.mock_seed {
            cfg.mock.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Normalized dataset file; replaces the datasets listed in the config.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset name used for output files (defaults to the file stem).
    #[arg(long, requires = "dataset")]
    pub name: Option<String>,
    #[arg(long, requires = "dataset", default_value = "")]
    pub split: String,
    /// Draw this many questions per subject, seeded by --seed.
    #[arg(long)]
    pub per_subject: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildPrefsArgs {
    /// Records file; repeat together with --responses to merge datasets.
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub responses: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip records whose answer is wrong.
    #[arg(long)]
    pub correct_only: bool,
}

#[derive(Debug, Clone)]
pub struct CellSpec {
    pub model: String,
    pub dataset: String,
    pub path: PathBuf,
}

fn parse_cell(s: &str) -> Result<CellSpec, String> {
    let mut parts = s.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(d), Some(p)) if !m.is_empty() && !d.is_empty() && !p.is_empty() => Ok(CellSpec {
            model: m.into(),
            dataset: d.into(),
            path: p.into(),
        }),
        _ => Err(format!("expected MODEL:DATASET:RECORDS_PATH, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct PValueFlags {
    /// `t-approx` or `permutation`.
    #[arg(long, default_value = "t-approx")]
    pub p_value: String,
    /// Shuffles for the permutation test.
    #[arg(long)]
    pub shuffles: Option<usize>,
    /// Permutation-test seed.
    #[arg(long)]
    pub p_seed: Option<u64>,
}

impl PValueFlags {
    fn method(&self) -> Result<Arc<dyn PValueMethod>, Failure> {
        let registered = p_value_methods().require(&self.p_value).usage()?;
        if registered.name() == "permutation" && (self.shuffles.is_some() || self.p_seed.is_some()) {
            let d = PermutationTest::default();
            return Ok(Arc::new(PermutationTest {
                shuffles: self.shuffles.unwrap_or(d.shuffles),
                seed: self.p_seed.unwrap_or(d.seed),
            }));
        }
        Ok(registered)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One cell as MODEL:DATASET:RECORDS_PATH; repeatable.
    #[arg(long = "cell", required = true, value_parser = parse_cell)]
    pub cells: Vec<CellSpec>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub p_value: PValueFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long, default_value_t = 200)]
    pub questions: usize,
    #[arg(long, default_value_t = 1)]
    pub subjects: usize,
    #[arg(long, default_value_t = 4)]
    pub choices: usize,
    #[arg(long)]
    pub correct_only: bool,
    #[command(flatten)]
    pub p_value: PValueFlags,
}

fn extractor_for(cfg: &RunConfig) -> Result<Arc<dyn ConfidenceExtractor>, Failure> {
    extractors().require(cfg.extractor_name()).usage()
}

fn validated(cfg: RunConfig) -> Result<RunConfig, Failure> {
    cfg.validate().usage()?;
    Ok(cfg)
}

/// Generates one dataset and writes `<name>.records.jsonl` and
/// `<name>.responses.jsonl` under `out_dir`. Nothing is written if the
/// backend is down.
fn generate_one(
    cfg: &RunConfig,
    name: &str,
    questions: &[Question],
    extractor: &dyn ConfidenceExtractor,
    out_dir: &Path,
) -> Result<(GenerateOutput, PathBuf, PathBuf), Failure> {
    let backend = BackendRegistry::default().build(&cfg.backend, &cfg.backend_settings(), questions)?;
    log::info!("{name}: {} questions via {}", questions.len(), backend.name());
    let out = run_generation(questions, backend.as_ref(), extractor, &cfg.generation)?;
    let records_path = out_dir.join(format!("{name}.records.jsonl"));
    let responses_path = out_dir.join(format!("{name}.responses.jsonl"));
    write_responses(&responses_path, &out.responses)?;
    write_records(&records_path, &out.records)?;
    if out.diagnostics.repeated_probability_marker > 0 {
        log::info!(
            "{name}: {} responses repeat the probability marker; the first was used",
            out.diagnostics.repeated_probability_marker
        );
    }
    if out.failure_rate > cfg.failure_threshold {
        log::warn!(
            "{name}: extraction failure rate {:.2}% exceeds threshold {:.2}% \
             (parse failed {}, internal failed {}, backend failed {})",
            100.0 * out.failure_rate,
            100.0 * cfg.failure_threshold,
            out.diagnostics.parse_failed,
            out.diagnostics.internal_failed,
            out.diagnostics.backend_failed,
        );
    }
    Ok((out, records_path, responses_path))
}

pub fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let mut cfg = args.run.resolve()?;
    if let Some(path) = &args.dataset {
        let name = match &args.name {
            Some(n) => n.clone(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Failure::usage(format!("cannot derive a name from {}", path.display())))?,
        };
        cfg.datasets = vec![DatasetSpec {
            name,
            split: args.split.clone(),
            path: path.clone(),
            sampling: None,
        }];
    }
    if let Some(k) = args.per_subject {
        for d in &mut cfg.datasets {
            d.sampling = Some(Sampling {
                per_subject: k,
                seed: cfg.seed,
            });
        }
    }
    if cfg.datasets.is_empty() {
        return Err(Failure::usage("no dataset given (use --dataset or list [[datasets]] in the config)"));
    }
    let mut names = HashSet::new();
    if let Some(dup) = cfg.datasets.iter().find(|d| !names.insert(d.name.as_str())) {
        return Err(Failure::usage(format!("dataset name `{}` appears twice", dup.name)));
    }
    let cfg = validated(cfg)?;
    let extractor = extractor_for(&cfg)?;
    for spec in &cfg.datasets {
        let questions = spec.load()?;
        let (out, records_path, _) = generate_one(&cfg, &spec.name, &questions, extractor.as_ref(), &cfg.output_dir)?;
        println!(
            "{}: {} records, failure rate {:.2}% -> {}",
            spec.name,
            out.records.len(),
            100.0 * out.failure_rate,
            records_path.display()
        );
    }
    Ok(())
}

pub fn build_prefs(args: &BuildPrefsArgs) -> Result<(), Failure> {
    if args.records.len() != args.responses.len() {
        return Err(Failure::usage(format!(
            "{} --records but {} --responses; give them in pairs",
            args.records.len(),
            args.responses.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut stats = PairStats::default();
    for (rec_path, resp_path) in args.records.iter().zip(&args.responses) {
        let records = read_records(rec_path)?;
        let responses = read_responses(resp_path)?;
        let (p, s) = build_preference_set(&records, &responses, args.correct_only)?;
        pairs.extend(p);
        stats.merge(&s);
    }
    write_preferences(&pairs, &args.out)?;
    println!("{stats}");
    Ok(())
}

fn write_report(report: &Report, out_dir: &Path) -> Result<(), Failure> {
    report.write(out_dir).data()?;
    for (cell, err) in report.errors() {
        log::warn!("{} / {}: no metrics: {err}", cell.model, cell.dataset);
    }
    println!("report written to {}", out_dir.join("report.md").display());
    if report.rows().next().is_none() {
        return Err(Failure::Data(anyhow::anyhow!("no cell produced metrics")));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let method = args.p_value.method()?;
    let cells = args
        .cells
        .iter()
        .map(|c| {
            Ok(CellInput {
                model: c.model.clone(),
                dataset: c.dataset.clone(),
                records: read_records(&c.path)?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let report = Report::build(&cells, method.as_ref());
    write_report(&report, &args.out_dir)
}

/// Synthetic dataset → vanilla and aligned mock runs → preference file from
/// the vanilla run → report comparing both.
pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if args.questions == 0 {
        return Err(Failure::usage("--questions must be positive"));
    }
    let mut cfg = args.run.resolve()?;
    if cfg.backend != "mock" {
        return Err(Failure::usage("simulate drives the mock backend only"));
    }
    cfg.datasets.clear();
    let cfg = validated(cfg)?;
    let method = args.p_value.method()?;
    let extractor = extractor_for(&cfg)?;
    let root = &cfg.output_dir;

    let questions = synthetic_questions(args.questions, args.subjects, args.choices, cfg.seed);
    write_dataset(&questions, root.join("dataset.jsonl"))?;

    let mut cells = Vec::new();
    let mut vanilla_files = None;
    for (label, mode) in [("vanilla", VerbalMode::Vanilla), ("aligned", VerbalMode::Aligned)] {
        let mut run_cfg = cfg.clone();
        run_cfg.mock.verbal_mode = mode;
        let (out, records_path, responses_path) =
            generate_one(&run_cfg, "synthetic", &questions, extractor.as_ref(), &root.join(label))?;
        println!(
            "mock-{label}: {} records, failure rate {:.2}%",
            out.records.len(),
            100.0 * out.failure_rate
        );
        if mode == VerbalMode::Vanilla {
            vanilla_files = Some((records_path, responses_path));
        }
        cells.push(CellInput {
            model: format!("mock-{label}"),
            dataset: "synthetic".into(),
            records: out.records,
        });
    }

    let (records_path, responses_path) = vanilla_files.expect("vanilla run happened");
    let (pairs, stats) = build_preference_set(
        &read_records(&records_path)?,
        &read_responses(&responses_path)?,
        args.correct_only,
    )?;
    write_preferences(&pairs, root.join("preferences.jsonl"))?;
    println!("{stats}");

    let report = Report::build(&cells, method.as_ref());
    write_report(&report, &root.join("report"))
}
