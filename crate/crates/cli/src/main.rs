use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ont_core::checkpoint::Checkpoint;
use ont_core::config::TrainConfig;
use ont_core::encoder::{load_external_embeddings, TextEncoder};
use ont_core::eval::{
    build_inference_sets, score, select_lambda, split_by_kind, split_dataset, CorruptionProtocol, Ranker,
    RankingReport, Split, TargetDataset,
};
use ont_core::normalize::{
    normalize, parse_definitions, parse_normalized, write_definitions, write_normalized, Atom, DefinitionMap,
    NfKind, NormalizedAxiom,
};
use ont_core::ontology::{collect_subexpressions, load_labels, parse_concept, parse_ontology, Concept, LabelMap};
use ont_core::reasoner::{entailed_nf1, EntailmentFilter};
use ont_core::trainer::{train_observed, TrainingData};
use ont_core::verbalize::verbalize;

#[derive(Parser)]
#[command(name = "ont", version, about = "Ontology embedding in the Poincaré ball")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Prediction,
    Inference,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite an ontology into normal forms plus fresh-name definitions.
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        /// When given, check that every axiom and definition verbalizes.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out_axioms: PathBuf,
        #[arg(long)]
        out_defs: PathBuf,
    },
    /// Write `expression<TAB>verbalization` for every concept in an ontology.
    Verbalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        defs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entailed atomic subsumptions of a normalized ontology.
    InferClosure {
        #[arg(long)]
        axioms: PathBuf,
        /// Definitions whose fresh names are left out of the signature.
        #[arg(long)]
        defs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also emit conclusions that are asserted axioms.
        #[arg(long)]
        keep_asserted: bool,
        /// Also emit `A ⊑ owl:Thing`.
        #[arg(long)]
        keep_top: bool,
    },
    /// Split normalized axioms into train/valid/test files.
    Split {
        #[arg(long)]
        axioms: PathBuf,
        #[arg(long)]
        defs: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "prediction")]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split each normal form separately.
        #[arg(long)]
        by_kind: bool,
        /// Receives train.ofn, valid.ofn and test.ofn.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        axioms: PathBuf,
        #[arg(long)]
        defs: Option<PathBuf>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Validation axioms; the selected λ is stored in the checkpoint.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank test axioms against the checkpoint's candidate concepts.
    Evaluate {
        #[arg(long, value_enum, default_value = "prediction")]
        task: Task,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// `auto` selects on --valid, else uses the checkpoint's λ.
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Remove known axioms (test, valid and --known files) from candidates.
        #[arg(long)]
        filtered: bool,
        #[arg(long)]
        known: Vec<PathBuf>,
        /// Keep candidates that turn the query into a tautology.
        #[arg(long)]
        keep_tautologies: bool,
        /// Precomputed `key<TAB>values` embeddings used instead of the encoder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Per-axiom ranks as TSV; printed after the table when absent.
        #[arg(long)]
        ranks: Option<PathBuf>,
    },
    /// Plausibility score of `SUB ⊑ SUP` under a checkpoint.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sub: String,
        #[arg(long)]
        sup: String,
        #[arg(long)]
        lambda: Option<f64>,
        /// Extra labels for concepts outside the training signature.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on another ontology without training.
    Transfer {
        #[arg(long)]
        ckpt: PathBuf,
        /// Holds axioms.ofn (normalized), labels.tsv and optionally defs.tsv.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        keep_tautologies: bool,
        #[arg(long)]
        ranks: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_axioms(path: &Path) -> Result<Vec<NormalizedAxiom>> {
    parse_normalized(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_defs(path: Option<&Path>) -> Result<DefinitionMap> {
    match path {
        Some(p) => parse_definitions(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(DefinitionMap::new()),
    }
}

fn read_labels(path: &Path) -> Result<LabelMap> {
    load_labels(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn protocol(keep_tautologies: bool) -> CorruptionProtocol {
    CorruptionProtocol {
        skip_tautologies: !keep_tautologies,
        ..CorruptionProtocol::default()
    }
}

fn parse_lambda(text: &str) -> Result<f64> {
    let l: f64 = text.parse().with_context(|| format!("bad λ {text:?}: expected `auto` or a number"))?;
    if !(0.0..=1.0).contains(&l) {
        bail!("λ must lie in [0, 1], got {l}");
    }
    Ok(l)
}

fn ranks_tsv(axioms: &[NormalizedAxiom], report: &RankingReport) -> String {
    let mut out = String::from("kind\taxiom\trank\n");
    for (ax, r) in axioms.iter().zip(&report.ranks) {
        out.push_str(&format!("{}\t{}\t{}\n", ax.kind(), ax, r));
    }
    out
}

fn emit_report(axioms: &[NormalizedAxiom], report: &RankingReport, lambda: f64, ranks: Option<&Path>) -> Result<()> {
    println!("lambda  {lambda:>10}");
    println!("{report}");
    let tsv = ranks_tsv(axioms, report);
    match ranks {
        Some(p) => write(p, &tsv),
        None => {
            print!("\n{tsv}");
            Ok(())
        }
    }
}

fn signature(axioms: &[NormalizedAxiom], defs: &DefinitionMap) -> BTreeSet<Atom> {
    axioms
        .iter()
        .flat_map(|a| a.atoms())
        .filter(|a| matches!(a, Atom::Named(i) if !defs.contains_key(i)))
        .cloned()
        .collect()
}

fn write_split(dir: &Path, split: &Split<NormalizedAxiom>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("train.ofn"), &write_normalized(&split.train))?;
    write(&dir.join("valid.ofn"), &write_normalized(&split.valid))?;
    write(&dir.join("test.ofn"), &write_normalized(&split.test))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    task: Task,
    ckpt: &Path,
    test: &Path,
    valid: Option<&Path>,
    lambda: &str,
    filtered: bool,
    known: &[PathBuf],
    keep_tautologies: bool,
    embeddings: Option<&Path>,
    ranks: Option<&Path>,
) -> Result<()> {
    let ck = load_checkpoint(ckpt)?;
    let test_axioms = read_axioms(test)?;
    if task == Task::Inference {
        if let Some(a) = test_axioms.iter().find(|a| a.kind() != NfKind::Nf1) {
            bail!("inference test sets hold atomic subsumptions only, found {a}");
        }
    }
    let valid_axioms = valid.map(read_axioms).transpose()?;
    let mut known_set: HashSet<NormalizedAxiom> = HashSet::new();
    if filtered {
        known_set.extend(test_axioms.iter().cloned());
        known_set.extend(valid_axioms.iter().flatten().cloned());
        for k in known {
            known_set.extend(read_axioms(k)?);
        }
    }
    let reference = ck.encoder();
    let external = embeddings
        .map(|p| load_external_embeddings(&read(p)?, ck.ball).with_context(|| format!("parsing {}", p.display())))
        .transpose()?;
    let encoder: &dyn TextEncoder = match &external {
        Some(e) => e,
        None => &reference,
    };
    let mut ranker = Ranker::new(encoder, &ck.labels, &ck.definitions, ck.candidates.clone())
        .with_protocol(protocol(keep_tautologies));
    if filtered {
        ranker = ranker.with_filter(&known_set);
    }
    let lambda = if lambda == "auto" {
        match (&valid_axioms, ck.lambda) {
            (Some(v), _) => {
                let sel = select_lambda(&mut ranker, v, &ck.config.lambda_grid)?;
                for (l, m) in &sel.mrr_by_lambda {
                    eprintln!("valid λ={l:<4} MRR {:.4}", m);
                }
                sel.lambda
            }
            (None, Some(l)) => l,
            (None, None) => bail!("--lambda auto needs --valid or a checkpoint with a selected λ"),
        }
    } else {
        parse_lambda(lambda)?
    };
    let report = ranker.evaluate(&test_axioms, lambda)?;
    emit_report(&test_axioms, &report, lambda, ranks)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Normalize {
            input,
            labels,
            out_axioms,
            out_defs,
        } => {
            let o = parse_ontology(&read(&input)?).with_context(|| format!("parsing {}", input.display()))?;
            let n = normalize(&o);
            if let Some(l) = labels {
                let labels = read_labels(&l)?;
                for ax in &n.axioms {
                    let a = ax.to_axiom();
                    for side in [&a.sub, &a.sup] {
                        verbalize(side, &labels, &n.definitions).with_context(|| format!("verbalizing {ax}"))?;
                    }
                }
            }
            write(&out_axioms, &write_normalized(&n.axioms))?;
            write(&out_defs, &write_definitions(&n.definitions))?;
            eprintln!("{} axioms, {} fresh concepts", n.axioms.len(), n.definitions.len());
        }
        Command::Verbalize {
            input,
            labels,
            defs,
            out,
        } => {
            let o = parse_ontology(&read(&input)?).with_context(|| format!("parsing {}", input.display()))?;
            let labels = read_labels(&labels)?;
            let defs = read_defs(defs.as_deref())?;
            let subs = collect_subexpressions(&o);
            let concepts: BTreeSet<Concept> = o
                .concept_names()
                .iter()
                .map(|i| Concept::Atomic(i.clone()))
                .chain(subs.existentials)
                .chain(subs.conjunctions)
                .collect();
            let mut text = String::new();
            for c in &concepts {
                let v = verbalize(c, &labels, &defs).with_context(|| format!("verbalizing {c}"))?;
                text.push_str(&format!("{c}\t{v}\n"));
            }
            write(&out, &text)?;
        }
        Command::InferClosure {
            axioms,
            defs,
            out,
            keep_asserted,
            keep_top,
        } => {
            let ax = read_axioms(&axioms)?;
            let defs = read_defs(defs.as_deref())?;
            let filter = EntailmentFilter {
                exclude_asserted: !keep_asserted,
                exclude_top: !keep_top,
            };
            let inferred = entailed_nf1(&ax, &signature(&ax, &defs), &filter);
            write(&out, &write_normalized(&inferred))?;
            eprintln!("{} entailed subsumptions", inferred.len());
        }
        Command::Split {
            axioms,
            defs,
            task,
            seed,
            by_kind,
            out_dir,
        } => {
            let ax = read_axioms(&axioms)?;
            let split = match task {
                Task::Prediction if by_kind => split_by_kind(&ax, seed),
                Task::Prediction => split_dataset(&ax, seed),
                Task::Inference => {
                    let defs = read_defs(defs.as_deref())?;
                    build_inference_sets(&ax, &signature(&ax, &defs), seed, &EntailmentFilter::default())
                }
            };
            write_split(&out_dir, &split)?;
            println!("train\t{}\nvalid\t{}\ntest\t{}", split.train.len(), split.valid.len(), split.test.len());
        }
        Command::Train {
            axioms,
            defs,
            labels,
            config,
            valid,
            out,
        } => {
            let cfg = match config {
                Some(p) => TrainConfig::from_text(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => TrainConfig::default(),
            };
            let ax = read_axioms(&axioms)?;
            let defs = read_defs(defs.as_deref())?;
            let labels = read_labels(&labels)?;
            let data = TrainingData::build(&ax, &labels, &defs)?;
            let outcome = train_observed(&data, &cfg, |epoch, loss| {
                eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
            })?;
            let mut ck = Checkpoint::new(outcome.model, &cfg, &data, outcome.log);
            if let Some(v) = valid {
                let v = read_axioms(&v)?;
                let enc = ck.encoder();
                let mut ranker = Ranker::new(&enc, &ck.labels, &ck.definitions, ck.candidates.clone());
                let sel = select_lambda(&mut ranker, &v, &cfg.lambda_grid)?;
                eprintln!("selected λ = {}", sel.lambda);
                ck.lambda = Some(sel.lambda);
            }
            write(&out, &ck.to_json())?;
        }
        Command::Evaluate {
            task,
            ckpt,
            test,
            valid,
            lambda,
            filtered,
            known,
            keep_tautologies,
            embeddings,
            ranks,
        } => evaluate(
            task,
            &ckpt,
            &test,
            valid.as_deref(),
            &lambda,
            filtered,
            &known,
            keep_tautologies,
            embeddings.as_deref(),
            ranks.as_deref(),
        )?,
        Command::Score {
            ckpt,
            sub,
            sup,
            lambda,
            labels,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let mut all_labels = ck.labels.clone();
            if let Some(p) = labels {
                let extra = read_labels(&p)?;
                for (iri, label) in extra.concept_labels {
                    all_labels.insert_concept(iri, label);
                }
                for (iri, label) in extra.role_labels {
                    all_labels.insert_role(iri, label);
                }
            }
            let sub = parse_concept(&sub).context("parsing --sub")?;
            let sup = parse_concept(&sup).context("parsing --sup")?;
            let lambda = match lambda {
                Some(l) => l,
                None => ck.lambda.unwrap_or(0.0),
            };
            let s = score(&sub, &sup, &ck.encoder(), &all_labels, &ck.definitions, lambda)?;
            println!("{s:.6}");
        }
        Command::Transfer {
            ckpt,
            target,
            lambda,
            keep_tautologies,
            ranks,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let defs_path = target.join("defs.tsv");
            let dataset = TargetDataset {
                axioms: read_axioms(&target.join("axioms.ofn"))?,
                labels: read_labels(&target.join("labels.tsv"))?,
                definitions: read_defs(defs_path.exists().then_some(defs_path.as_path()))?,
            };
            let lambda = lambda.or(ck.lambda).unwrap_or(0.0);
            let opts = ont_core::eval::EvalOptions {
                protocol: protocol(keep_tautologies),
                known: None,
            };
            let report = ont_core::eval::transfer_evaluate(&ck, &dataset, lambda, &opts)?;
            emit_report(&dataset.axioms, &report, lambda, ranks.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
