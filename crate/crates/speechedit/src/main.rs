use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use speechedit::commands::{self, Session};
use speechedit::config::RunConfig;
use speechedit::service::{self, AppState};
use speechedit::vocoder::VocoderChoice;
use speechedit::{toy, Error, Result};
use speechedit_core::evaluation::System;
use speechedit_core::frontend::EditRequest;

/// Text-based speech editing toolkit.
#[derive(Parser, Debug)]
#[command(name = "speechedit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (JSON). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Width multiplier for every layer, in (0, 1].
    #[arg(long, global = true)]
    scale_factor: Option<f64>,
    #[arg(long, global = true)]
    iterations: Option<u64>,
    /// `griffin_lim`, `griffin_lim:<iterations>` or `external:<program> <args..>`
    /// with `{mel}` and `{wav}` placeholders.
    #[arg(long, global = true)]
    vocoder: Option<String>,
    /// Comma-separated systems for `eval`: proposed, baseline1..baseline4.
    #[arg(long, global = true, value_delimiter = ',')]
    systems: Option<Vec<String>>,
    /// Full-size model and 100k iterations. Far beyond desk scale.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the corpus and build the feature cache.
    Prep,
    /// Train the acoustic and duration models.
    Train {
        /// Continue from the latest checkpoint if one exists.
        #[arg(long)]
        resume: bool,
    },
    /// Apply one edit request to a corpus utterance.
    Edit {
        /// Defaults to the latest checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        utterance: String,
        /// Edit request as inline JSON or a path to a JSON file.
        #[arg(long)]
        request: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-reconstruction MCD evaluation.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Write the synthetic two-utterance corpus to a directory.
    MakeToy {
        #[arg(long, default_value = "data/toy")]
        out: PathBuf,
    },
}

fn parse_vocoder(s: &str) -> Result<VocoderChoice> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "griffin_lim" | "griffin-lim" => {
            let iterations = if rest.is_empty() {
                60
            } else {
                rest.parse().map_err(|_| Error::Config(format!("bad Griffin-Lim iteration count {rest:?}")))?
            };
            Ok(VocoderChoice::GriffinLim { iterations })
        }
        "external" => Ok(VocoderChoice::External { command: rest.split_whitespace().map(str::to_string).collect() }),
        _ => Err(Error::Config(format!("unknown vocoder {s:?}"))),
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if g.paper_scale {
        cfg.full_scale();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scale_factor {
        cfg.model.scale_factor = s;
    }
    if let Some(n) = g.iterations {
        cfg.iterations = n;
    }
    if let Some(v) = &g.vocoder {
        cfg.vocoder = parse_vocoder(v)?;
    }
    if let Some(list) = &g.systems {
        cfg.systems = list
            .iter()
            .map(|s| System::parse(s).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_request(arg: &str, utterance: &str) -> Result<EditRequest> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?
    };
    let req: EditRequest = serde_json::from_str(&text).map_err(|e| Error::format(Path::new(arg), e))?;
    Ok(req.for_utterance(utterance))
}

fn run(cli: Cli) -> Result<()> {
    if let Command::MakeToy { out } = &cli.command {
        let utts = toy::write_corpus(out)?;
        println!("wrote {} toy utterances to {}", utts.len(), out.display());
        return Ok(());
    }
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Prep => {
            let s = commands::prep(&cfg)?;
            println!("prepared {} utterances, {} speakers, {} frames into {}", s.utterances, s.speakers, s.frames, cfg.cache.display());
        }
        Command::Train { resume } => {
            let out = commands::train(&cfg, resume, |r| {
                if r.step == 1 || r.step % 50 == 0 {
                    println!(
                        "step {:>6}  fwd {:.5}  bwd {:.5}  total {:.5}  duration {:.5}",
                        r.step,
                        r.acoustic.forward,
                        r.acoustic.backward,
                        r.acoustic.total(),
                        r.duration
                    );
                }
            })?;
            if let Some(step) = out.resumed_from {
                println!("resumed from step {step}");
            }
            println!("checkpoint {}\nloss curve {}", out.checkpoint.display(), out.loss_csv.display());
        }
        Command::Edit { checkpoint, utterance, request, out } => {
            let session = Session::open(&cfg, checkpoint.as_deref())?;
            let req = parse_request(&request, &utterance)?;
            let o = commands::edit(&session, &cfg, &utterance, &req, &out)?;
            let r = &o.report;
            match r.t_fusion {
                Some(t) => println!("t_fusion {t}"),
                None => println!("t_fusion none"),
            }
            println!("regions A {} B' {} C {} (original B {})", r.len_a, r.len_b_edit, r.len_c, r.orig_len_b);
            println!("wrote {} and {}", o.wav.display(), o.diagnostics.display());
        }
        Command::Eval { checkpoint } => {
            let session = Session::open(&cfg, checkpoint.as_deref())?;
            let o = commands::eval(&session, &cfg, &cfg.systems)?;
            print!("{}", o.report.table());
            println!("wrote {} and {}", o.json.display(), o.table.display());
        }
        Command::Serve { checkpoint, addr } => {
            let session = Session::open(&cfg, checkpoint.as_deref())?;
            let state = Arc::new(AppState::new(session, cfg.vocoder.build(), cfg.output.join("edits")));
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Internal(e.to_string()))?;
            println!("listening on http://{addr}");
            rt.block_on(service::serve(state, addr))?;
        }
        Command::MakeToy { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
