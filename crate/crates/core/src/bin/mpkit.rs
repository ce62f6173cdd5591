//! Command-line entry point over the toolkit pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mpkit::dataset::{
    generate_synthetic, parse_labels, parse_ratings, write_labels, write_ratings, ItemId, Label,
    RatingsDataset, RatingsFormat, SynthConfig, UserId,
};
use mpkit::error::{Error, Result};
use mpkit::evaluation::{
    apply_scheme, drop_ratio_stats, run_experiment, tradeoff_sweep, write_curve_csv, Attacker,
    ExperimentConfig, RoundingRange, Scheme, SchemeKind,
};
use mpkit::factorization::{compute_biases, train_mf, AnalystModel, ExtendedItemProfile, MfHyperparams};
use mpkit::inference::{
    logistic_score, logistic_train, lse_attack, nb_score, nb_train, LogisticConfig, LseMode,
    NbConfig,
};
use mpkit::seed;
use mpkit::selection::{
    brute_force_select, brute_force_select_with_cap, default_seed_set, greedy_select, Candidate,
    SelectionProblem,
};
use mpkit::wire::{analyst_serve, user_agent_run, ServeConfig, WireProtocol};

#[derive(Parser)]
#[command(
    name = "mpkit",
    version,
    about = "Privacy-preserving rating collection: protocols, training, attacks, evaluation"
)]
struct Cli {
    /// Cap the number of worker threads for parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled ratings dataset with ground truth.
    Synth(SynthArgs),
    /// Train the bias-augmented matrix-factorization model.
    Train(TrainArgs),
    /// Choose a variance-minimizing solicitation set from a trained model.
    Select(SelectArgs),
    /// Obfuscate every labeled user's ratings under one scheme.
    Obfuscate(ObfuscateArgs),
    /// Train an attack classifier and score obfuscated feedback.
    Attack(AttackArgs),
    /// Run the cross-validated privacy/accuracy evaluation.
    Evaluate(EvaluateArgs),
    /// Sweep the mixing level alpha and emit tradeoff curve points.
    Sweep(SweepArgs),
    /// Serve the analyst side of the wire protocol.
    Serve(ServeArgs),
    /// Run one user-agent session against an analyst service.
    Agent(AgentArgs),
    /// Summarize per-user sub-sampling exclusion ratios.
    DropStats(DropStatsArgs),
}

/// Ratings + optional labels input, shared by most subcommands.
#[derive(Args)]
struct DatasetArgs {
    /// Ratings file.
    #[arg(long)]
    ratings: PathBuf,
    /// Labels CSV with header user_id,label.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Ratings file format: csv or double-colon.
    #[arg(long, default_value = "csv")]
    format: RatingsFormat,
    /// Accepted rating range as "lo,hi"; outside values fail the parse.
    #[arg(long, value_parser = parse_f64_range)]
    range: Option<(f64, f64)>,
    /// Label string mapped to +1 (requires --minus-label).
    #[arg(long)]
    plus_label: Option<String>,
    /// Label string mapped to -1 (requires --plus-label).
    #[arg(long)]
    minus_label: Option<String>,
}

impl DatasetArgs {
    fn load(&self) -> Result<RatingsDataset> {
        let mut dataset = parse_ratings(open(&self.ratings)?, self.format, self.range)?;
        if let Some(labels) = &self.labels {
            let map = match (&self.plus_label, &self.minus_label) {
                (None, None) => None,
                (Some(p), Some(m)) => {
                    let mut map = BTreeMap::new();
                    map.insert(p.clone(), Label::Plus);
                    map.insert(m.clone(), Label::Minus);
                    Some(map)
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "--plus-label and --minus-label must be given together".to_string(),
                    ))
                }
            };
            parse_labels(&mut dataset, open(labels)?, None, map.as_ref())?;
        }
        Ok(dataset)
    }

    fn load_labeled(&self) -> Result<RatingsDataset> {
        if self.labels.is_none() {
            return Err(Error::InvalidArgument("--labels is required here".to_string()));
        }
        let dataset = self.load()?;
        if dataset.labeled_users().is_empty() {
            return Err(Error::InvalidData("no labeled users in the input".to_string()));
        }
        Ok(dataset)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    bias_scale: Option<f64>,
    /// Generate consecutive opposite-label pairs sharing a latent profile.
    #[arg(long)]
    paired: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: RatingsFormat,
    #[arg(long)]
    out_ratings: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
    /// Also write the generating ground truth.
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Hyperparameter JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    regularization: Option<f64>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// Update item biases jointly with the factors instead of freezing
    /// the class-mean estimates.
    #[arg(long)]
    joint_bias: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Items to select beyond the seed set.
    #[arg(long)]
    budget: usize,
    /// Comma-separated seed item ids; default: pivoted spanning pick.
    #[arg(long, value_delimiter = ',')]
    seed_items: Option<Vec<ItemId>>,
    /// Exhaustive search instead of lazy greedy.
    #[arg(long)]
    brute_force: bool,
    /// Subset-count cap for --brute-force.
    #[arg(long)]
    cap: Option<u128>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ObfuscateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scheme: SchemeKind,
    /// Per-rating obfuscation probability.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Integer rounding range "lo,hi" for the rounding schemes.
    #[arg(long, value_parser = parse_i64_range)]
    rounding: Option<(i64, i64)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output feedback file (one JSON object per user per line).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// Training data for the classifier (the analyst's raw dataset).
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Feedback file produced by `obfuscate`.
    #[arg(long)]
    feedback: PathBuf,
    #[arg(long)]
    attacker: Attacker,
    /// Ridge for the least-squares attack.
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,
    /// How the least-squares attack reads values: plain or readd.
    #[arg(long, default_value = "plain")]
    mode: LseMode,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    /// Naive Bayes smoothing.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    max_level: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// True labels of the scored users; adds a label column and prints AUC.
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Output CSV: user_id,score[,label].
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Experiment config JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated scheme kinds replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    /// Rounding range "lo,hi" applied to scheme kinds that round.
    #[arg(long, value_parser = parse_i64_range)]
    rounding: Option<(i64, i64)>,
    /// Comma-separated attackers replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    attackers: Option<Vec<Attacker>>,
    /// Drop users with fewer ratings.
    #[arg(long)]
    min_ratings: Option<usize>,
    #[arg(long, default_value = "report.json")]
    out_json: PathBuf,
    #[arg(long, default_value = "report.csv")]
    out_csv: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Experiment config JSON; the scheme list is replaced by the swept
    /// scheme.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: SchemeKind,
    /// Rounding range "lo,hi" when the swept scheme rounds.
    #[arg(long, value_parser = parse_i64_range)]
    rounding: Option<(i64, i64)>,
    /// Comma-separated mixing levels; default 0,0.1,...,1.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, default_value = "curve.csv")]
    out_csv: PathBuf,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Bind address; port 0 picks a free port (printed on startup).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// mp or mpss.
    #[arg(long, default_value = "mp")]
    protocol: WireProtocol,
    /// Solicit at most this many items (greedy selection).
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,
    /// Serve this many sessions, then exit.
    #[arg(long)]
    max_sessions: Option<usize>,
}

#[derive(Args)]
struct AgentArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Which user's ratings to play.
    #[arg(long)]
    user: UserId,
    /// The private feature value: +1 or -1. Never sent on the wire.
    #[arg(long, allow_hyphen_values = true)]
    label: String,
    /// Analyst address, e.g. 127.0.0.1:7171.
    #[arg(long)]
    connect: String,
    /// mp or mpss.
    #[arg(long, default_value = "mp")]
    protocol: WireProtocol,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DropStatsArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_f64_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected \"lo,hi\", got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("empty range [{lo}, {hi}]"));
    }
    Ok((lo, hi))
}

fn parse_i64_range(s: &str) -> std::result::Result<(i64, i64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected \"lo,hi\", got {s:?}"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("empty range [{lo}, {hi}]"));
    }
    Ok((lo, hi))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path)
        .map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path)
        .map_err(|e| Error::InvalidData(format!("cannot create {}: {e}", path.display())))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    let mut file = create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

fn load_model(path: &Path) -> Result<AnalystModel> {
    AnalystModel::from_json(&read_to_string(path)?)
}

fn parse_label(s: &str) -> Result<Label> {
    match s {
        "+1" | "1" | "plus" => Ok(Label::Plus),
        "-1" | "minus" => Ok(Label::Minus),
        other => Err(Error::InvalidArgument(format!(
            "unknown label {other:?}; expected +1 or -1"
        ))),
    }
}

/// One user's obfuscated feedback, as written by `obfuscate` and read by
/// `attack`. Deliberately label-free.
#[derive(Serialize, Deserialize)]
struct FeedbackLine {
    user_id: UserId,
    revealed: Vec<ItemId>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct SelectionOutput {
    seed_set: Vec<ItemId>,
    selected: Vec<ItemId>,
    /// Objective value of the union of seed set and selection.
    objective: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let usage_ok =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if usage_ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args),
        Command::Select(args) => run_select(args),
        Command::Obfuscate(args) => run_obfuscate(args),
        Command::Attack(args) => run_attack(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Serve(args) => run_serve(args),
        Command::Agent(args) => run_agent(args),
        Command::DropStats(args) => run_drop_stats(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)?,
        None => SynthConfig {
            n_users: 1000,
            n_items: 40,
            d: 5,
            noise_sigma: 0.5,
            bias_scale: 1.0,
            prob_model: Default::default(),
            label_name: "feature".to_string(),
            paired: false,
        },
    };
    if let Some(v) = args.users {
        config.n_users = v;
    }
    if let Some(v) = args.items {
        config.n_items = v;
    }
    if let Some(v) = args.dim {
        config.d = v;
    }
    if let Some(v) = args.sigma {
        config.noise_sigma = v;
    }
    if let Some(v) = args.bias_scale {
        config.bias_scale = v;
    }
    if args.paired {
        config.paired = true;
    }
    let (dataset, truth) = generate_synthetic(&config, args.seed)?;
    write_ratings(&dataset, create(&args.out_ratings)?, args.format)?;
    write_labels(&dataset, create(&args.out_labels)?)?;
    if let Some(path) = &args.out_truth {
        write_string(path, &format!("{}\n", serde_json::to_string_pretty(&truth)?))?;
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let dataset = args.dataset.load_labeled()?;
    let mut mf: MfHyperparams = match &args.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)?,
        None => MfHyperparams::default(),
    };
    if let Some(v) = args.dim {
        mf.d = v;
    }
    if let Some(v) = args.epochs {
        mf.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        mf.learning_rate = v;
    }
    if let Some(v) = args.regularization {
        mf.regularization = v;
    }
    if let Some(v) = args.init_scale {
        mf.init_scale = v;
    }
    if args.joint_bias {
        mf.joint_bias = true;
    }
    if let Some(v) = args.seed {
        mf.seed = v;
    }
    let biases = compute_biases(&dataset)?;
    if !biases.single_class_items.is_empty() {
        eprintln!(
            "warning: {} items rated by a single class; their biases default to 0",
            biases.single_class_items.len()
        );
    }
    let model = train_mf(&dataset, &biases.biases, &mf)?;
    write_string(&args.out, &format!("{}\n", model.to_json()?))?;
    println!(
        "trained {} items, d={}, noise_sigma_hat={:.6}",
        model.items.len(),
        model.d,
        model.noise_sigma_hat
    );
    Ok(())
}

fn run_select(args: SelectArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let candidates: Vec<Candidate> = model
        .items
        .iter()
        .map(|item| Candidate { id: item.id, latent: item.latent.clone() })
        .collect();
    let seed_set = match args.seed_items {
        Some(ids) => ids,
        None => default_seed_set(&candidates),
    };
    let problem = SelectionProblem::new(candidates, args.budget, seed_set.clone())?;
    let selected = if args.brute_force {
        match args.cap {
            Some(cap) => brute_force_select_with_cap(&problem, cap)?,
            None => brute_force_select(&problem)?,
        }
    } else {
        greedy_select(&problem)?
    };
    let objective = problem.value_with_seed(&selected)?;
    let output = SelectionOutput { seed_set, selected, objective };
    let json = format!("{}\n", serde_json::to_string_pretty(&output)?);
    match &args.out {
        Some(path) => write_string(path, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn run_obfuscate(args: ObfuscateArgs) -> Result<()> {
    let dataset = args.dataset.load_labeled()?;
    let model = load_model(&args.model)?;
    let scheme = Scheme {
        kind: args.scheme,
        alpha: args.alpha,
        rounding: args.rounding.map(|(lo, hi)| RoundingRange { lo, hi }),
    };
    scheme.validate()?;
    let mut out = create(&args.out)?;
    for user in dataset.users() {
        let Some(label) = user.label else { continue };
        let mut rng = seed::rng(args.seed, &[seed::stream::SCHEME, user.user_id]);
        let feedback = apply_scheme(&scheme, &user.ratings, label, &model, &mut rng)?;
        let line = FeedbackLine {
            user_id: user.user_id,
            revealed: feedback.revealed,
            values: feedback.values,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_feedback_lines(path: &Path) -> Result<Vec<FeedbackLine>> {
    let reader = BufReader::new(open(path)?);
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FeedbackLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse_line(idx + 1, format!("bad feedback line: {e}")))?;
        lines.push(parsed);
    }
    Ok(lines)
}

fn run_attack(args: AttackArgs) -> Result<()> {
    let train = args.dataset.load_labeled()?;
    let model = load_model(&args.model)?;
    let feedback = read_feedback_lines(&args.feedback)?;
    let catalog: Vec<ExtendedItemProfile> =
        model.items.iter().map(|item| item.profile()).collect();
    let index = model.item_index();
    let n_items = model.items.len();

    let dense = |pairs: &[(ItemId, f64)]| -> Vec<f64> {
        let mut v = vec![0.0; n_items];
        for &(item, value) in pairs {
            if let Some(&idx) = index.get(&item) {
                v[idx] = value;
            }
        }
        v
    };
    let levels =
        |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| x.round().clamp(0.0, args.max_level as f64)).collect() };

    let mut train_vectors = Vec::new();
    let mut train_labels = Vec::new();
    for user in train.users() {
        if let Some(label) = user.label {
            let pairs: Vec<(ItemId, f64)> = user.ratings.iter().map(|(&i, &r)| (i, r)).collect();
            train_vectors.push(dense(&pairs));
            train_labels.push(label);
        }
    }

    enum Trained {
        Lse,
        Logistic(mpkit::inference::LogisticModel),
        NaiveBayes(mpkit::inference::NbModel),
    }
    let trained = match args.attacker {
        Attacker::Lse => Trained::Lse,
        Attacker::Logistic => {
            let cfg = LogisticConfig {
                l2: args.l2,
                epochs: args.epochs,
                learning_rate: args.learning_rate,
                seed: args.seed,
            };
            Trained::Logistic(logistic_train(&train_vectors, &train_labels, &cfg)?)
        }
        Attacker::NaiveBayes => {
            let cfg = NbConfig { alpha: args.alpha, max_level: args.max_level };
            let leveled: Vec<Vec<f64>> = train_vectors.iter().map(|v| levels(v)).collect();
            Trained::NaiveBayes(nb_train(&leveled, &train_labels, &cfg)?)
        }
    };

    let test_labels: Option<BTreeMap<UserId, Label>> = match &args.test_labels {
        None => None,
        Some(path) => {
            let mut holder = RatingsDataset::new(None, None);
            parse_labels(&mut holder, open(path)?, None, None)?;
            Some(
                holder
                    .users()
                    .filter_map(|u| u.label.map(|l| (u.user_id, l)))
                    .collect(),
            )
        }
    };

    let mut skipped = 0usize;
    let mut scored: Vec<(UserId, f64)> = Vec::new();
    for line in &feedback {
        if line.revealed.is_empty() {
            skipped += 1;
            continue;
        }
        let pairs: Vec<(ItemId, f64)> =
            line.revealed.iter().copied().zip(line.values.iter().copied()).collect();
        let score = match &trained {
            Trained::Lse => lse_attack(&pairs, &catalog, args.ridge, args.mode)?.1,
            Trained::Logistic(m) => logistic_score(m, &dense(&pairs))?,
            Trained::NaiveBayes(m) => nb_score(m, &levels(&dense(&pairs)))?,
        };
        scored.push((line.user_id, score));
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} users with empty feedback");
    }

    let mut w = csv::Writer::from_writer(create(&args.out)?);
    if test_labels.is_some() {
        w.write_record(["user_id", "score", "label"])?;
    } else {
        w.write_record(["user_id", "score"])?;
    }
    let mut labeled_scores = Vec::new();
    for (user_id, score) in &scored {
        match &test_labels {
            Some(map) => {
                let label = map.get(user_id).ok_or_else(|| {
                    Error::InvalidData(format!("user {user_id} missing from --test-labels"))
                })?;
                labeled_scores.push((*label, *score));
                w.write_record(&[
                    user_id.to_string(),
                    score.to_string(),
                    format!("{:+}", label.value() as i64),
                ])?;
            }
            None => w.write_record(&[user_id.to_string(), score.to_string()])?,
        }
    }
    w.flush()?;
    if !labeled_scores.is_empty() {
        println!("auc: {:.6}", mpkit::inference::auc(&labeled_scores)?);
    }
    Ok(())
}

fn load_experiment_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_to_string(p)?)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn schemes_from_kinds(
    kinds: &[SchemeKind],
    rounding: Option<(i64, i64)>,
) -> Result<Vec<Scheme>> {
    kinds
        .iter()
        .map(|&kind| {
            if kind.rounds() {
                let (lo, hi) = rounding.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "scheme {} needs --rounding lo,hi",
                        kind.name()
                    ))
                })?;
                Ok(Scheme::rounded(kind, lo, hi))
            } else {
                Ok(Scheme::plain(kind))
            }
        })
        .collect()
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = args.dataset.load_labeled()?;
    let mut config = load_experiment_config(&args.config)?;
    if let Some(v) = args.folds {
        config.folds = v;
    }
    if let Some(v) = args.master_seed {
        config.master_seed = v;
    }
    if let Some(kinds) = &args.schemes {
        config.schemes = schemes_from_kinds(kinds, args.rounding)?;
    }
    if let Some(attackers) = &args.attackers {
        config.attackers = attackers.clone();
    }
    if let Some(v) = args.min_ratings {
        config.min_ratings = v;
    }
    let report = run_experiment(&dataset, &config)?;
    write_string(&args.out_json, &format!("{}\n", report.to_json()?))?;
    report.write_csv(create(&args.out_csv)?)?;
    for outcome in &report.schemes {
        let aucs: Vec<String> = outcome
            .aggregate
            .pooled_auc
            .iter()
            .map(|a| format!("{}={:.4}", a.attacker, a.auc))
            .collect();
        println!(
            "{}: rmse={:.4} auc[{}]",
            outcome.label,
            outcome.aggregate.pooled_rmse,
            aucs.join(" ")
        );
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let dataset = args.dataset.load_labeled()?;
    let mut config = load_experiment_config(&args.config)?;
    if let Some(v) = args.master_seed {
        config.master_seed = v;
    }
    let scheme = schemes_from_kinds(&[args.scheme], args.rounding)?.remove(0);
    let default_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let alphas = args.alphas.unwrap_or(default_grid);
    let points = tradeoff_sweep(&dataset, &scheme, &alphas, &config)?;
    write_curve_csv(&points, create(&args.out_csv)?)?;
    if let Some(path) = &args.out_json {
        write_string(path, &format!("{}\n", serde_json::to_string_pretty(&points)?))?;
    }
    for p in &points {
        println!("alpha={:.2} auc_lse={:.4} rmse={:.4}", p.alpha, p.auc_lse, p.rmse);
    }
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let listener = TcpListener::bind(&args.listen)
        .map_err(|e| Error::InvalidArgument(format!("cannot bind {}: {e}", args.listen)))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let config = ServeConfig {
        protocol: args.protocol,
        budget: args.budget,
        ridge: args.ridge,
        max_sessions: args.max_sessions,
    };
    analyst_serve(&listener, &model, &config)
}

fn run_agent(args: AgentArgs) -> Result<()> {
    let dataset = args.dataset.load()?;
    let label = parse_label(&args.label)?;
    let user = dataset
        .user(args.user)
        .ok_or_else(|| Error::InvalidData(format!("user {} not in the ratings file", args.user)))?;
    let x_hat = user_agent_run(&user.ratings, label, &args.connect, args.protocol, args.seed)?;
    #[derive(Serialize)]
    struct AgentOutput {
        user_id: UserId,
        x_hat: Vec<f64>,
    }
    println!("{}", serde_json::to_string(&AgentOutput { user_id: args.user, x_hat })?);
    Ok(())
}

fn run_drop_stats(args: DropStatsArgs) -> Result<()> {
    let dataset = args.dataset.load_labeled()?;
    let model = load_model(&args.model)?;
    let mut rng = seed::rng(args.seed, &[seed::stream::DROP]);
    let stats = drop_ratio_stats(&dataset, &model, &mut rng)?;
    let json = format!("{}\n", serde_json::to_string_pretty(&stats)?);
    match &args.out {
        Some(path) => write_string(path, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}
