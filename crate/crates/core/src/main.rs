//! Batch command-line interface for training, scoring, self-training,
//! reranking and bias evaluation. All randomness is controlled by explicit
//! seeds and all outputs go to explicit paths, so full pipelines are
//! byte-reproducible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rankeval::corpus_io::{
    load_model, parse_nbest, read_judgments, read_references, save_model, serialize_nbest,
    write_judgments, MetricModel,
};
use rankeval::ranker::{self, TrainConfig};
use rankeval::selftrain::{self, SelfTrainConfig};
use rankeval::synth::{self, ScenarioConfig};
use rankeval::{evalkit, Error};

#[derive(Parser)]
#[command(name = "rankeval", version, about = "Trainable MT metric with self-training debiasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a metric on human-judged pairs.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        l2: f64,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Score a hypothesis file against an aligned reference file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt a metric to n-best lists by pseudo-labeling and retraining.
    #[command(name = "self-train")]
    SelfTrain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "pairs-per-seg", default_value_t = 10)]
        pairs_per_seg: usize,
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        /// Human pair file to mix into each retraining corpus.
        #[arg(long = "mix-human")]
        mix_human: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Where to write the per-round report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Select the highest-scoring hypothesis per segment.
    Rerank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kendall's tau of a model against human pairs.
    #[command(name = "eval-tau")]
    EvalTau {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Rerank and report the corpus length ratio as a percentage.
    #[command(name = "eval-length")]
    EvalLength {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        refs: PathBuf,
    },
    /// Generate a synthetic biased scenario.
    #[command(name = "gen-synth")]
    GenSynth {
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long = "vocab-size", default_value_t = 50)]
        vocab_size: usize,
        #[arg(long = "n-segments", default_value_t = 300)]
        n_segments: usize,
        #[arg(long = "ref-len-min", default_value_t = 8)]
        ref_len_min: usize,
        #[arg(long = "ref-len-max", default_value_t = 15)]
        ref_len_max: usize,
        #[arg(long = "nbest-size", default_value_t = 20)]
        nbest_size: usize,
        #[arg(long = "sota-noise", default_value_t = 0.1)]
        sota_noise: f64,
        #[arg(long = "diverse-noise", default_value_t = 0.6)]
        diverse_noise: f64,
        /// Probability that the better human-pair hypothesis is the longer one.
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        #[arg(long)]
        seed: u64,
    },
}

fn open_reader(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn load_model_file(path: &Path) -> Result<MetricModel, Error> {
    load_model(open_reader(path)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            pairs,
            out,
            l2,
            lr,
            iters,
            seed,
        } => {
            let corpus = read_judgments(open_reader(&pairs)?)?;
            let cfg = TrainConfig {
                l2_lambda: l2,
                learning_rate: lr,
                iterations: iters,
                seed,
            };
            let (model, summary) = ranker::train(&corpus, &cfg)?;
            save_model(&mut create_writer(&out)?, &model)?;
            println!(
                "trained on {} pairs ({} feature ties), loss {:.6} -> {:.6}",
                summary.n_pairs, summary.n_ties, summary.initial_loss, summary.final_loss
            );
        }
        Command::Score {
            model,
            hyp,
            refs,
            out,
        } => {
            let model = load_model_file(&model)?;
            let hyps = read_references(open_reader(&hyp)?)?;
            let refs = read_references(open_reader(&refs)?)?;
            if hyps.len() != refs.len() {
                return Err(Error::Data(format!(
                    "{} hypotheses but {} references",
                    hyps.len(),
                    refs.len()
                )));
            }
            let mut writer = create_writer(&out)?;
            for (h, r) in hyps.iter().zip(refs.iter()) {
                writeln!(writer, "{}", ranker::score(&model, h, r)?)?;
            }
        }
        Command::SelfTrain {
            model,
            nbest,
            refs,
            out,
            pairs_per_seg,
            margin,
            rounds,
            mix_human,
            seed,
            report,
        } => {
            let initial = load_model_file(&model)?;
            let entries = parse_nbest(open_reader(&nbest)?)?;
            let references = read_references(open_reader(&refs)?)?;
            let human = match mix_human {
                Some(ref p) => Some(read_judgments(open_reader(p)?)?),
                None => None,
            };
            let cfg = SelfTrainConfig {
                pairs_per_segment: pairs_per_seg,
                score_margin: margin,
                rounds,
                mix_human: human.is_some(),
                seed,
            };
            let train_cfg = TrainConfig {
                seed,
                ..Default::default()
            };
            let (adapted, reports) = selftrain::self_train(
                &initial,
                &entries,
                &references,
                human.as_deref(),
                &cfg,
                &train_cfg,
            )?;
            save_model(&mut create_writer(&out)?, &adapted)?;
            if let Some(path) = report {
                let mut writer = create_writer(&path)?;
                let text = serde_json::to_string_pretty(&reports)
                    .map_err(|e| Error::Validation(e.to_string()))?;
                writer.write_all(text.as_bytes())?;
                writer.write_all(b"\n")?;
            }
            for r in &reports {
                println!(
                    "round {}: {} tuples, {} ties discarded, {} training pairs, \
                     agreement {:.3}, weight delta {:.4}",
                    r.round, r.tuples_sampled, r.ties_discarded, r.training_pairs,
                    r.label_agreement, r.weight_l2_delta
                );
            }
        }
        Command::Rerank {
            model,
            nbest,
            refs,
            out,
        } => {
            let model = load_model_file(&model)?;
            let entries = parse_nbest(open_reader(&nbest)?)?;
            let references = read_references(open_reader(&refs)?)?;
            let selections = evalkit::rerank(&model, &entries, &references)?;
            let mut writer = create_writer(&out)?;
            for s in &selections {
                writeln!(writer, "{}", s.hypothesis)?;
            }
        }
        Command::EvalTau { model, pairs } => {
            let model = load_model_file(&model)?;
            let corpus = read_judgments(open_reader(&pairs)?)?;
            let tau = evalkit::kendall_tau(&model, &corpus)?;
            println!("{tau:.4}");
        }
        Command::EvalLength { model, nbest, refs } => {
            let model = load_model_file(&model)?;
            let entries = parse_nbest(open_reader(&nbest)?)?;
            let references = read_references(open_reader(&refs)?)?;
            let selections = evalkit::rerank(&model, &entries, &references)?;
            let selected: Vec<String> =
                selections.iter().map(|s| s.hypothesis.clone()).collect();
            let covered: Vec<String> = selections
                .iter()
                .map(|s| references[s.segment_id].clone())
                .collect();
            let ratio = evalkit::length_ratio(&selected, &covered)?;
            println!("{ratio:.1}");
        }
        Command::GenSynth {
            out_dir,
            vocab_size,
            n_segments,
            ref_len_min,
            ref_len_max,
            nbest_size,
            sota_noise,
            diverse_noise,
            rho,
            seed,
        } => {
            let cfg = ScenarioConfig {
                vocab_size,
                n_segments,
                ref_len_min,
                ref_len_max,
                nbest_size,
                sota_noise,
                diverse_noise,
                length_quality_corr: rho,
                seed,
            };
            let scenario = synth::generate(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut refs_out = create_writer(&out_dir.join("refs.txt"))?;
            for r in &scenario.references {
                writeln!(refs_out, "{r}")?;
            }
            let mut nbest_out = create_writer(&out_dir.join("nbest.txt"))?;
            nbest_out.write_all(serialize_nbest(&scenario.nbest).as_bytes())?;
            let mut human_out = create_writer(&out_dir.join("human.jsonl"))?;
            write_judgments(&mut human_out, &scenario.human_pairs)?;
            println!(
                "wrote {} segments, {} human pairs, {} n-best entries to {}",
                scenario.references.len(),
                scenario.human_pairs.len(),
                scenario.nbest.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
