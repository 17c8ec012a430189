//! Subcommands of the `sparse` binary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sparse_core::attack::{attribution_to_sigma, integrated_gradients, AttackTrainConfig, DEFAULT_IG_STEPS, DEFAULT_THRESHOLD};
use sparse_core::dataset::{
    generate_similarity_pairs, generate_synthetic, make_paired, ConceptSpec, EmbeddingRecord, PairedDataset, SyntheticPlan,
};
use sparse_core::mask::{inference_mask, mask_to_sigma, train_mask, MaskTrainConfig, TrainingLog};
use sparse_core::metrics::{neuron_sensitivity, sensitivity_split_test, PrivacyReport, SplitTest};
use sparse_core::numkit::DiagonalPD;

use crate::checkpoint::{write_json, AttackCheckpoint, ClassifierCheckpoint, MaskCheckpoint, NetworkWeights, SigmaFile};
use crate::error::{Result, SparseError};
use crate::exec::map_ordered;
use crate::experiment::{
    concept_vocabulary, derived_seed, sanitize_records, score_attack, score_utility, summarize, train_attacker, write_csv,
    CellResult, Mechanism, Summary,
};
use crate::fingerprint::Fingerprint;
use crate::io::{load_dataset, save_dataset, DatasetFormat};

#[derive(Debug, Parser)]
#[command(name = "sparse", version, about = "Concept-specific privacy for text embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted synthetic paired dataset.
    GenerateSynthetic(GenerateArgs),
    /// Learn a neuron mask for a concept from paired data.
    TrainMask(TrainMaskArgs),
    /// Perturb a dataset with isotropic or elliptical noise.
    Sanitize(SanitizeArgs),
    /// Train a token attacker on one split and score leakage on another.
    Attack(AttackArgs),
    /// Sweep mechanisms, budgets and seeds into a privacy/utility table.
    Evaluate(EvaluateArgs),
    /// Per-dimension sensitivity profile and top/bottom split test.
    SensitivityReport(SensitivityArgs),
    /// Derive a sensitivity matrix from attacker attributions.
    Attribute(AttributeArgs),
}

impl Command {
    pub fn run(&self) -> Result<()> {
        match self {
            Command::GenerateSynthetic(a) => cmd_generate(a),
            Command::TrainMask(a) => cmd_train_mask(a),
            Command::Sanitize(a) => cmd_sanitize(a),
            Command::Attack(a) => cmd_attack(a),
            Command::Evaluate(a) => cmd_evaluate(a),
            Command::SensitivityReport(a) => cmd_sensitivity_report(a),
            Command::Attribute(a) => cmd_attribute(a),
        }
    }
}

/// Concept selection shared by the commands that pair records.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ConceptArgs {
    /// Concept name (defaults to the first token).
    #[arg(long)]
    pub concept: Option<String>,
    /// Concept tokens; defaults to every concept token found in the data.
    #[arg(long, value_delimiter = ',')]
    pub tokens: Vec<String>,
}

impl ConceptArgs {
    fn resolve(&self, records: &[EmbeddingRecord]) -> Result<ConceptSpec> {
        let tokens = if self.tokens.is_empty() {
            concept_vocabulary(records)
        } else {
            self.tokens.clone()
        };
        let name = match (&self.concept, tokens.first()) {
            (Some(c), _) => c.clone(),
            (None, Some(t)) => t.clone(),
            (None, None) => return Err(SparseError::config("no concept tokens given or found in the data")),
        };
        Ok(ConceptSpec::new(name, tokens)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub pairs: usize,
    /// Comma-separated planted dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub planted: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub magnitude: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sensitive")]
    pub concept: String,
    /// Also write this many graded-similarity pairs (planted dims left empty).
    #[arg(long, default_value_t = 0)]
    pub similarity_pairs: usize,
    #[arg(long, requires = "similarity_pairs")]
    pub similarity_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainMaskArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    #[command(flatten)]
    pub concept: ConceptArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Matched pairs per minibatch.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 128])]
    pub hidden: Vec<usize>,
    /// Mask checkpoint; the classifier and loss log are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SanitizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    #[arg(long, value_enum)]
    pub mech: Mechanism,
    /// Neuron mask checkpoint (mahalanobis).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Sensitivity matrix file (mahalanobis-wb, or mahalanobis without a mask).
    #[arg(long)]
    pub sigma: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, value_enum)]
    pub out_format: Option<DatasetFormat>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Attacker hyperparameters.
#[derive(Debug, Clone, Args, Serialize)]
pub struct AttackerArgs {
    #[arg(long = "attack-hidden", value_delimiter = ',', default_values_t = [512usize, 256, 128])]
    pub hidden: Vec<usize>,
    #[arg(long = "attack-epochs", default_value_t = 20)]
    pub epochs: usize,
    #[arg(long = "attack-lr", default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long = "attack-batch-size", default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

impl AttackerArgs {
    fn config(&self, seed: u64) -> AttackTrainConfig {
        AttackTrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttackArgs {
    /// (Perturbed) training split.
    #[arg(long)]
    pub train: PathBuf,
    /// (Perturbed) evaluation split.
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    /// Attack vocabulary; defaults to the concept tokens of the training split.
    #[arg(long, value_delimiter = ',')]
    pub vocab: Vec<String>,
    #[command(flatten)]
    pub attacker: AttackerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallel: bool,
    /// Where to write the trained attacker.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Privacy report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Clean training split; sanitized per cell before the attacker sees it.
    #[arg(long)]
    pub train: PathBuf,
    /// Clean evaluation split.
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    /// Sentence pairs with gold scores; without it the utility column is empty.
    #[arg(long)]
    pub utility: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Mechanism::Isotropic, Mechanism::Mahalanobis])]
    pub mech: Vec<Mechanism>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    pub seed: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    pub vocab: Vec<String>,
    #[command(flatten)]
    pub attacker: AttackerArgs,
    #[arg(long)]
    pub parallel: bool,
    /// CSV table; a JSON copy with the fingerprint goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    #[command(flatten)]
    pub concept: ConceptArgs,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttributeArgs {
    /// Attacker checkpoint.
    #[arg(long)]
    pub attack: PathBuf,
    /// Records to attribute; only those carrying a target token are used.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    /// Target tokens; defaults to the attacker vocabulary.
    #[arg(long, value_delimiter = ',')]
    pub tokens: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_IG_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn format_of(path: &Path, explicit: Option<DatasetFormat>) -> Result<DatasetFormat> {
    explicit.map_or_else(|| DatasetFormat::from_path(path), Ok)
}

fn load(path: &Path, explicit: Option<DatasetFormat>) -> Result<Vec<EmbeddingRecord>> {
    load_dataset(path, format_of(path, explicit)?)
}

/// `dir/name.json` -> `dir/name.<tag>.json`.
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let s = path.to_string_lossy();
    let stem = s.strip_suffix(".json").unwrap_or(&s);
    PathBuf::from(format!("{stem}.{tag}.json"))
}

/// Sidecar for outputs that cannot carry a fingerprint themselves.
pub fn meta_path(path: &Path) -> PathBuf {
    PathBuf::from(format!("{}.meta.json", path.to_string_lossy()))
}

#[derive(Serialize)]
struct DatasetMeta<'a, T: Serialize> {
    fingerprint: &'a Fingerprint,
    #[serde(flatten)]
    details: T,
}

fn write_dataset_with_meta<T: Serialize>(
    records: &[EmbeddingRecord],
    out: &Path,
    format: Option<DatasetFormat>,
    fp: &Fingerprint,
    details: T,
) -> Result<()> {
    save_dataset(records, out, format_of(out, format)?)?;
    write_json(
        &meta_path(out),
        &DatasetMeta {
            fingerprint: fp,
            details,
        },
    )
}

fn interleave(paired: PairedDataset) -> Vec<EmbeddingRecord> {
    paired
        .positives
        .into_iter()
        .zip(paired.negatives)
        .flat_map(|(p, n)| [p, n])
        .collect()
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut plan = SyntheticPlan::new(a.n, a.pairs, a.planted.iter().copied(), a.magnitude, a.sigma, a.seed);
    plan.concept = a.concept.clone();
    let fp = Fingerprint::new("generate-synthetic", a, &[])?;
    let records = interleave(generate_synthetic(&plan)?);
    write_dataset_with_meta(&records, &a.out, a.format, &fp, serde_json::json!({ "plan": plan }))?;
    if a.similarity_pairs > 0 {
        let out = a
            .similarity_out
            .as_ref()
            .ok_or_else(|| SparseError::config("--similarity-pairs needs --similarity-out"))?;
        let inactive: BTreeSet<usize> = a.planted.iter().copied().collect();
        let seed = derived_seed(a.seed, "similarity");
        let sims = generate_similarity_pairs(a.n, a.similarity_pairs, &inactive, seed)?;
        write_dataset_with_meta(&sims, out, a.format, &fp, serde_json::json!({}))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LogFile<'a> {
    fingerprint: &'a Fingerprint,
    #[serde(flatten)]
    log: &'a TrainingLog,
    inference_mask: Vec<f64>,
}

fn cmd_train_mask(a: &TrainMaskArgs) -> Result<()> {
    let records = load(&a.pairs, a.format)?;
    let concept = a.concept.resolve(&records)?;
    let paired = make_paired(&records, &concept)?;
    let cfg = MaskTrainConfig {
        lambda: a.lambda,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        delta: a.delta,
        hidden: a.hidden.clone(),
    };
    let fp = Fingerprint::new("train-mask", a, &[&a.pairs])?;
    let trained = train_mask(&paired, &cfg)?;
    write_json(&a.out, &MaskCheckpoint::new(&trained.mask, Some(fp.clone())))?;
    write_json(
        &sibling(&a.out, "classifier"),
        &ClassifierCheckpoint {
            network: NetworkWeights::from_mlp(&trained.classifier),
            fingerprint: Some(fp.clone()),
        },
    )?;
    write_json(
        &sibling(&a.out, "log"),
        &LogFile {
            fingerprint: &fp,
            log: &trained.log,
            inference_mask: inference_mask(&trained.mask),
        },
    )
}

/// Σ for an elliptical mechanism from a mask checkpoint or a Σ file.
fn load_sigma(mech: Mechanism, mask: Option<&Path>, sigma: Option<&Path>, delta: f64) -> Result<Option<DiagonalPD>> {
    let from_mask = |p: &Path| -> Result<DiagonalPD> {
        let m = MaskCheckpoint::load(p)?;
        Ok(mask_to_sigma(&inference_mask(&m), delta)?)
    };
    match (mech, mask, sigma) {
        (Mechanism::Isotropic, _, _) => Ok(None),
        (Mechanism::Mahalanobis, Some(m), _) => from_mask(m).map(Some),
        (_, _, Some(s)) => SigmaFile::load(s).map(Some),
        (Mechanism::Mahalanobis, None, None) => Err(SparseError::config("mechanism mahalanobis needs --mask or --sigma")),
        (Mechanism::MahalanobisWb, _, None) => Err(SparseError::config("mechanism mahalanobis-wb needs --sigma")),
    }
}

#[derive(Serialize)]
struct SanitizeDetails<'a> {
    mechanism: Mechanism,
    epsilon: f64,
    sigma: Option<&'a [f64]>,
}

fn cmd_sanitize(a: &SanitizeArgs) -> Result<()> {
    let records = load(&a.input, a.format)?;
    let n = records.first().map_or(0, |r| r.embedding.len());
    let sigma = load_sigma(a.mech, a.mask.as_deref(), a.sigma.as_deref(), a.delta)?;
    let cfg = a.mech.config(a.eps, n.max(1), sigma.as_ref(), a.seed)?;
    let inputs: Vec<&Path> = [Some(a.input.as_path()), a.mask.as_deref(), a.sigma.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    let fp = Fingerprint::new("sanitize", a, &inputs)?;
    let out = sanitize_records(&records, &cfg, a.parallel)?;
    let details = SanitizeDetails {
        mechanism: a.mech,
        epsilon: a.eps,
        sigma: sigma.as_ref().map(DiagonalPD::diag),
    };
    write_dataset_with_meta(&out, &a.out, a.out_format, &fp, details)
}

#[derive(Serialize)]
struct AttackReport<'a> {
    fingerprint: &'a Fingerprint,
    vocabulary: &'a [String],
    eval_records: usize,
    #[serde(flatten)]
    privacy: &'a PrivacyReport,
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let train = load(&a.train, a.format)?;
    let eval = load(&a.eval, a.format)?;
    let vocab = if a.vocab.is_empty() {
        concept_vocabulary(&train)
    } else {
        a.vocab.clone()
    };
    let fp = Fingerprint::new("attack", a, &[&a.train, &a.eval])?;
    let model = train_attacker(&train, &vocab, &a.attacker.config(a.seed))?;
    let privacy = score_attack(&model, &eval, a.attacker.threshold, a.parallel)?;
    if let Some(ck) = &a.checkpoint {
        write_json(ck, &AttackCheckpoint::new(&model, Some(fp.clone())))?;
    }
    write_json(
        &a.out,
        &AttackReport {
            fingerprint: &fp,
            vocabulary: &vocab,
            eval_records: eval.len(),
            privacy: &privacy,
        },
    )
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    fingerprint: &'a Fingerprint,
    cells: &'a [CellResult],
    summaries: &'a [Summary],
}

struct EvalInputs {
    train: Vec<EmbeddingRecord>,
    eval: Vec<EmbeddingRecord>,
    utility: Option<Vec<EmbeddingRecord>>,
    vocab: Vec<String>,
    n: usize,
}

fn evaluate_cell(
    inputs: &EvalInputs,
    a: &EvaluateArgs,
    mech: Mechanism,
    sigma: Option<&DiagonalPD>,
    eps: f64,
    seed: u64,
) -> Result<CellResult> {
    let cfg_for = |label: &str| mech.config(eps, inputs.n, sigma, derived_seed(seed, label));
    let train = sanitize_records(&inputs.train, &cfg_for("train")?, false)?;
    let eval = sanitize_records(&inputs.eval, &cfg_for("eval")?, false)?;
    let model = train_attacker(&train, &inputs.vocab, &a.attacker.config(seed))?;
    let privacy = score_attack(&model, &eval, a.attacker.threshold, false)?;
    let utility = match &inputs.utility {
        Some(u) => Some(score_utility(&sanitize_records(u, &cfg_for("utility")?, false)?)?.pearson),
        None => None,
    };
    Ok(CellResult {
        mechanism: mech,
        epsilon: eps,
        seed,
        leakage: privacy.leakage,
        confidence: privacy.confidence,
        utility,
    })
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.mech.is_empty() || a.seed.is_empty() {
        return Err(SparseError::config("need at least one mechanism and one seed"));
    }
    let train = load(&a.train, a.format)?;
    let eval = load(&a.eval, a.format)?;
    let utility = a.utility.as_deref().map(|p| load(p, a.format)).transpose()?;
    let n = train.first().map_or(0, |r| r.embedding.len());
    if eval.first().is_some_and(|r| r.embedding.len() != n) {
        return Err(SparseError::config("train and eval dimensions differ"));
    }
    let vocab = if a.vocab.is_empty() {
        concept_vocabulary(&train)
    } else {
        a.vocab.clone()
    };
    let mut sigmas = Vec::with_capacity(a.mech.len());
    for m in &a.mech {
        sigmas.push(load_sigma(*m, a.mask.as_deref(), a.sigma.as_deref(), a.delta)?);
    }
    let inputs = EvalInputs {
        train,
        eval,
        utility,
        vocab,
        n,
    };
    // Fail fast on bad budgets before any training.
    for (m, s) in a.mech.iter().zip(&sigmas) {
        for eps in &a.eps {
            m.config(*eps, n, s.as_ref(), 0)?;
        }
    }
    let mut grid = Vec::new();
    for (mi, m) in a.mech.iter().enumerate() {
        for eps in &a.eps {
            for seed in &a.seed {
                grid.push((mi, *m, *eps, *seed));
            }
        }
    }
    let paths: Vec<&Path> = [Some(a.train.as_path()), Some(a.eval.as_path()), a.utility.as_deref(), a.mask.as_deref(), a.sigma.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    let fp = Fingerprint::new("evaluate", a, &paths)?;
    let cells = map_ordered(&grid, a.parallel, |(mi, m, eps, seed)| {
        evaluate_cell(&inputs, a, *m, sigmas[*mi].as_ref(), *eps, *seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let summaries = summarize(&cells);
    write_csv(&a.out, &cells, &summaries)?;
    write_json(
        &meta_path(&a.out),
        &EvaluateReport {
            fingerprint: &fp,
            cells: &cells,
            summaries: &summaries,
        },
    )
}

#[derive(Serialize)]
struct SensitivityOutput<'a> {
    fingerprint: &'a Fingerprint,
    concept: &'a ConceptSpec,
    fraction: f64,
    delta: &'a [f64],
    ranking: Vec<usize>,
    #[serde(flatten)]
    split: &'a SplitTest,
}

fn cmd_sensitivity_report(a: &SensitivityArgs) -> Result<()> {
    let records = load(&a.pairs, a.format)?;
    let concept = a.concept.resolve(&records)?;
    let paired = make_paired(&records, &concept)?;
    let profile = neuron_sensitivity(&paired)?;
    let split = sensitivity_split_test(&profile, a.fraction)?;
    let ranking = sparse_core::mask::top_k(&profile.delta, profile.delta.len());
    let fp = Fingerprint::new("sensitivity-report", a, &[&a.pairs])?;
    if let Some(csv_path) = &a.csv {
        let wrap = |e: csv::Error| SparseError::format(csv_path, e.to_string());
        let mut w = csv::Writer::from_path(csv_path).map_err(wrap)?;
        w.write_record(["dim", "delta", "rank"]).map_err(wrap)?;
        let mut rank = vec![0; ranking.len()];
        for (r, d) in ranking.iter().enumerate() {
            rank[*d] = r + 1;
        }
        for (d, v) in profile.delta.iter().enumerate() {
            w.write_record([d.to_string(), v.to_string(), rank[d].to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| SparseError::io(csv_path, e))?;
    }
    write_json(
        &a.out,
        &SensitivityOutput {
            fingerprint: &fp,
            concept: &concept,
            fraction: a.fraction,
            delta: &profile.delta,
            ranking,
            split: &split,
        },
    )
}

fn cmd_attribute(a: &AttributeArgs) -> Result<()> {
    let model = AttackCheckpoint::load(&a.attack)?;
    let records = load(&a.input, a.format)?;
    let tokens = if a.tokens.is_empty() {
        model.vocabulary.clone()
    } else {
        a.tokens.clone()
    };
    if let Some(t) = tokens.iter().find(|t| model.token_index(t).is_none()) {
        return Err(SparseError::config(format!("token {t} is not in the attacker vocabulary")));
    }
    let positives: Vec<&EmbeddingRecord> = records
        .iter()
        .filter(|r| tokens.iter().any(|t| r.concept_tokens.contains(t)))
        .collect();
    if positives.is_empty() {
        return Err(SparseError::config("no input record carries a target token"));
    }
    let fp = Fingerprint::new("attribute", a, &[&a.attack, &a.input])?;
    let baseline = vec![0.0; model.input_dim()];
    let per_record = map_ordered(&positives, a.parallel, |r| {
        tokens
            .iter()
            .map(|t| integrated_gradients(&model, &r.embedding, t, a.steps, &baseline))
            .collect::<std::result::Result<Vec<_>, _>>()
    });
    let mut profiles = Vec::new();
    for p in per_record {
        profiles.extend(p?);
    }
    let sigma = attribution_to_sigma(&profiles, a.delta)?;
    write_json(
        &a.out,
        &SigmaFile {
            diag: sigma.diag().to_vec(),
            fingerprint: Some(fp),
        },
    )
}
