use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use kgqa_core::config::AppConfig;
use kgqa_core::embedding::{Embedder, HashingEmbedder, RemoteEmbedder};
use kgqa_core::episode::{run_episode, Episode, HttpLlmClient, LlmClient, NoTools, ScriptedClient, ToolExecutor};
use kgqa_core::eval::{evaluate, EvalOptions, FailurePolicy};
use kgqa_core::gateway::{serve, HttpToolExecutor, ToolService};
use kgqa_core::graph::{load_graph_dir, load_graph_file, GraphId, KnowledgeGraph};
use kgqa_core::loss_mask::{parse_batch_json, weighted_sft_loss};
use kgqa_core::reward::score_episode;
use kgqa_core::rl::{score_trajectory, TrajectoryInput};
use kgqa_core::sft::{episode_to_sharegpt_default, read_dataset, validate_sharegpt, write_dataset};
use kgqa_core::synth::{dedupe, domain_stats, read_qa_jsonl, synthesize, write_qa_jsonl, QaRecord, QuestionSpec};

use crate::{AgentArgs, Cli, Command, StatsFormat};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { graphs, bind } => cmd_serve(&config, graphs.as_deref(), bind),
        Command::Synth {
            graph,
            out,
            scripted_generator,
            scripted_judge,
            report,
            one_two,
            three_plus,
            seed,
        } => {
            let mut synth = config.synth.clone();
            if let Some(n) = one_two {
                synth.target_one_two = n;
            }
            if let Some(n) = three_plus {
                synth.target_three_plus = n;
            }
            if let Some(s) = seed {
                synth.rng_seed = s;
            }
            let graph = load_graph_file(&graph)?;
            let (generator, judge): (Box<dyn LlmClient>, Box<dyn LlmClient>) =
                match (scripted_generator, scripted_judge) {
                    (Some(g), Some(j)) => (Box::new(sequential_script(&g)?), Box::new(sequential_script(&j)?)),
                    _ => (Box::new(http_llm(&config)?), Box::new(http_llm(&config)?)),
                };
            let outcome = synthesize(&graph, &synth, generator.as_ref(), judge.as_ref())?;
            let records: Vec<QaRecord> = dedupe(outcome.specs()).iter().map(QuestionSpec::to_record).collect();
            write_qa_jsonl(create(&out)?, &records)?;
            if let Some(path) = report {
                write_json(&path, &outcome)?;
            }
            eprintln!(
                "{} seeds, {} accepted, {} written to {}",
                outcome.seeds.len(),
                outcome.specs().len(),
                records.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Rollout { qa, out, agent } => {
            let records = read_qa(&qa)?;
            let (llm, tools) = agent_backends(&config, &agent)?;
            let limits = config.limits()?;
            let mut w = create(&out)?;
            for r in &records {
                let graph = GraphId::new(r.graph_type.clone())?;
                let episode = run_episode(
                    &r.question,
                    &graph,
                    Some(&r.golden_answer),
                    llm.as_ref(),
                    tools.as_ref(),
                    limits,
                )?;
                serde_json::to_writer(&mut w, &episode)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ConvertSft { episodes, out } => {
            let episodes: Vec<Episode> = read_jsonl(&episodes)?;
            let mut samples = Vec::new();
            let mut skipped = 0;
            for (i, e) in episodes.iter().enumerate() {
                match episode_to_sharegpt_default(e) {
                    Ok(s) => samples.push(s),
                    Err(err) => {
                        skipped += 1;
                        tracing::warn!(episode = i + 1, error = %err, "skipped");
                    }
                }
            }
            write_dataset(&samples, &out)?;
            eprintln!("{} samples written, {skipped} episodes skipped", samples.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            qa,
            agent,
            batch_size,
            exclude_failures,
            csv,
        } => {
            let records = read_qa(&qa)?;
            let (llm, tools) = agent_backends(&config, &agent)?;
            let options = EvalOptions {
                batch_size,
                failures: if exclude_failures {
                    FailurePolicy::Exclude
                } else {
                    FailurePolicy::CountIncorrect
                },
            };
            let report = evaluate(&records, llm.as_ref(), tools.as_ref(), config.limits()?, options)?;
            if let Some(path) = csv {
                report.write_csv(create(&path)?)?;
            }
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Score { episodes, trajectories } => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            if let Some(path) = episodes {
                for e in read_jsonl::<Episode>(&path)? {
                    serde_json::to_writer(&mut out, &score_episode(&e))?;
                    out.write_all(b"\n")?;
                }
            }
            if let Some(path) = trajectories {
                for (i, t) in read_jsonl::<TrajectoryInput>(&path)?.iter().enumerate() {
                    let report = score_trajectory(t).with_context(|| format!("trajectory {}", i + 1))?;
                    serde_json::to_writer(&mut out, &report)?;
                    out.write_all(b"\n")?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Lossmask { batch } => {
            let text = std::fs::read_to_string(&batch).with_context(|| batch.display().to_string())?;
            let batch = parse_batch_json(&text)?;
            print_json(&weighted_sft_loss(&batch)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { input, format } => {
            let stats = domain_stats(&read_qa(&input)?);
            match format {
                StatsFormat::Text => print!("{}", stats.render_text()),
                StatsFormat::Latex => print!("{}", stats.render_latex()),
                StatsFormat::Json => print_json(&stats)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { graphs, qa, sft } => {
            cmd_validate(&config, graphs.as_deref(), qa.as_deref(), sft.as_deref())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn read_qa(path: &Path) -> Result<Vec<QaRecord>> {
    read_qa_jsonl(open(path)?).with_context(|| path.display().to_string())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn sequential_script(path: &Path) -> Result<ScriptedClient> {
    ScriptedClient::sequential_from_jsonl(open(path)?).with_context(|| path.display().to_string())
}

fn http_llm(config: &AppConfig) -> Result<HttpLlmClient> {
    let Some(endpoint) = &config.llm.endpoint else {
        bail!("no LLM configured: set LLM_ENDPOINT or pass a scripted replay file");
    };
    Ok(HttpLlmClient::new(endpoint.clone(), config.llm.api_key.clone())?)
}

fn embedder(config: &AppConfig) -> Result<Arc<dyn Embedder>> {
    Ok(match &config.embed.endpoint {
        Some(endpoint) => Arc::new(RemoteEmbedder::new(endpoint.clone())?),
        None => Arc::new(HashingEmbedder),
    })
}

fn load_graphs(config: &AppConfig, dir: Option<&Path>) -> Result<Vec<KnowledgeGraph>> {
    let Some(dir) = dir.or(config.graph_dir.as_deref()) else {
        bail!("no graph directory: pass --graphs or set graph_dir in the config");
    };
    let graphs = load_graph_dir(dir)?;
    if graphs.is_empty() {
        bail!("no *.jsonl graphs in {}", dir.display());
    }
    Ok(graphs.into_values().collect())
}

fn tool_service(config: &AppConfig, dir: Option<&Path>) -> Result<ToolService> {
    Ok(ToolService::build(load_graphs(config, dir)?, embedder(config)?)?)
}

fn agent_backends(config: &AppConfig, agent: &AgentArgs) -> Result<(Box<dyn LlmClient>, Box<dyn ToolExecutor>)> {
    let llm: Box<dyn LlmClient> = match &agent.scripted {
        Some(path) => Box::new(ScriptedClient::from_jsonl(open(path)?).with_context(|| path.display().to_string())?),
        None => Box::new(http_llm(config)?),
    };
    let tools: Box<dyn ToolExecutor> = if let Some(url) = &agent.tool_url {
        Box::new(HttpToolExecutor::new(url.clone())?)
    } else if agent.graphs.is_some() || config.graph_dir.is_some() {
        Box::new(tool_service(config, agent.graphs.as_deref())?)
    } else {
        Box::new(NoTools)
    };
    Ok((llm, tools))
}

fn cmd_serve(config: &AppConfig, graphs: Option<&Path>, bind: Option<String>) -> Result<ExitCode> {
    let service = Arc::new(tool_service(config, graphs)?);
    let mut config = config.clone();
    if let Some(b) = bind {
        config.bind_addr = b;
    }
    let addr = config.bind_socket_addr()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = serve(service, addr).await?;
        eprintln!("serving tools on {}", handle.base_url());
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Default, Serialize)]
struct ValidationSummary {
    graphs: Vec<GraphSummary>,
    qa_checked: usize,
    sft_checked: usize,
    problems: Vec<String>,
}

#[derive(Debug, Serialize)]
struct GraphSummary {
    id: String,
    nodes: usize,
    edges: usize,
}

fn cmd_validate(config: &AppConfig, graphs: Option<&Path>, qa: Option<&Path>, sft: Option<&Path>) -> Result<ExitCode> {
    if graphs.is_none() && qa.is_none() && sft.is_none() {
        bail!("nothing to validate: pass --graphs, --qa or --sft");
    }
    let mut summary = ValidationSummary::default();
    let loaded = match graphs.or(config.graph_dir.as_deref()) {
        Some(dir) => load_graph_dir(dir)?,
        None => Default::default(),
    };
    for g in loaded.values() {
        summary.graphs.push(GraphSummary {
            id: g.id().to_string(),
            nodes: g.node_count(),
            edges: g.edge_count(),
        });
    }
    if let Some(path) = qa {
        for r in read_qa(path)? {
            summary.qa_checked += 1;
            if let Err(e) = QuestionSpec::try_from(&r) {
                summary.problems.push(format!("qa {}: {e}", r.id));
                continue;
            }
            if loaded.is_empty() {
                continue;
            }
            match GraphId::new(r.graph_type.clone()).ok().and_then(|g| loaded.get(&g)) {
                None => summary
                    .problems
                    .push(format!("qa {}: unknown graph '{}'", r.id, r.graph_type)),
                Some(g) => {
                    let verdict = g.validate_path(&r.path, &r.golden_answer);
                    if !verdict.valid {
                        summary.problems.push(format!("qa {}: {}", r.id, verdict.reason_text()));
                    }
                }
            }
        }
    }
    if let Some(path) = sft {
        for s in read_dataset(path)? {
            summary.sft_checked += 1;
            let verdict = validate_sharegpt(&s);
            for v in verdict.violations {
                summary.problems.push(format!("sft {}: {v}", s.id));
            }
        }
    }
    print_json(&summary)?;
    Ok(if summary.problems.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
