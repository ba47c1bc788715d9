use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use postate::accumulator::AccumulatorParams;
use postate::bulletin::BoardState;
use postate::identity::{CommitteeKeys, MemberId};
use postate::ledger::{write_blocks, write_snapshots, PublishStrategy};
use postate::proofs::{wpver, WrappedProof};
use postate::sim::{
    assert_type2, bench, AdversaryAction, BenchConfig, ScenarioConfig, SimError, Simulation, Transcript,
};

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_NO_SAFE_VIEW: u8 = 5;
const EXIT_TYPE2: u8 = 6;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(
    name = "postate",
    version,
    about = "Committee-attested ledger state proofs: simulation, queries and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file.
    GenScenario(GenScenario),
    /// Run a scenario and persist its transcript, board log and agent state.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer an external-client query against a finished run.
    Query {
        /// Output directory of a previous `run`.
        #[arg(long)]
        board: PathBuf,
        #[arg(long)]
        key: String,
        /// Number of colluding members the client tolerates.
        #[arg(long, default_value_t = 0)]
        collusion: usize,
        /// Member asked for the proof; defaults to the first honest member.
        #[arg(long)]
        responder: Option<String>,
        /// Write the proof here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a proof file using only the committee file.
    Verify {
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        committee: PathBuf,
    },
    /// Measure agent throughput and query latency.
    Bench {
        /// `standard` or `smoke`.
        #[arg(long, default_value = "standard")]
        preset: String,
    },
    /// Summarize detection latencies and the type-2 verdict of a run.
    Report {
        /// Output directory of a previous `run`, or a transcript file.
        #[arg(long)]
        transcript: PathBuf,
    },
}

#[derive(Args)]
struct GenScenario {
    #[arg(long)]
    members: u32,
    #[arg(long)]
    faults: u32,
    #[arg(long, default_value_t = 5)]
    interval: u32,
    #[arg(long)]
    blocks: Option<u64>,
    #[arg(long, default_value_t = 4)]
    writes: u32,
    /// `MEMBER@ROUND:BEHAVIOR`; repeatable.
    #[arg(long, value_parser = parse_action)]
    adversary: Vec<AdversaryAction>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "ALL", value_parser = parse_strategy)]
    strategy: PublishStrategy,
    #[arg(long)]
    subcommittee: Option<u32>,
    #[arg(long)]
    modulus_bits: Option<u32>,
    #[arg(long, default_value_t = 0)]
    observation_delay: u32,
    #[arg(long)]
    no_observers: bool,
    #[arg(long)]
    cautious: bool,
    /// Collusion bound of the simulated client.
    #[arg(long, default_value_t = 0)]
    collusion: u32,
    #[arg(long)]
    allow_zero_honest: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_action(s: &str) -> Result<AdversaryAction, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<PublishStrategy, String> {
    s.parse()
}

/// Everything an external client needs to check proofs.
#[derive(Serialize, Deserialize)]
struct CommitteeFile {
    params: AccumulatorParams,
    committee: CommitteeKeys,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &[u8]) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => write_output(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let config = ScenarioConfig::from_toml(&read_input(path)?)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    config.validate().map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::NoSafeView(_) => Failure::new(EXIT_NO_SAFE_VIEW, e.to_string()),
        SimError::Config(_) => Failure::new(EXIT_USAGE, e.to_string()),
        _ => Failure::new(EXIT_FAILURE, e.to_string()),
    }
}

fn gen_scenario(a: GenScenario) -> Outcome {
    let mut c = ScenarioConfig::new(a.members, a.faults, a.interval, a.strategy);
    if let Some(b) = a.blocks {
        c.blocks = b;
    }
    c.writes_per_block = a.writes;
    c.rng_seed = a.seed;
    c.adversary_script = a.adversary;
    c.subcommittee_size = a.subcommittee;
    if let Some(bits) = a.modulus_bits {
        c.modulus_bits = bits;
    }
    c.observation_delay = a.observation_delay;
    c.observers = !a.no_observers;
    c.cautious = a.cautious;
    c.client_collusion_bound = a.collusion;
    c.allow_zero_honest = a.allow_zero_honest;
    c.validate().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    emit(a.out.as_deref(), &c.to_toml())
}

/// Runs the scenario to completion; the simulation is kept for queries.
fn simulate(config: ScenarioConfig) -> Result<(Simulation, Transcript), Failure> {
    let mut sim = Simulation::new(config).map_err(sim_failure)?;
    let transcript = sim.run().map_err(sim_failure)?;
    Ok((sim, transcript))
}

fn op_log(board: &BoardState) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    board.write_op_log(&mut buf).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    Ok(buf)
}

fn run(scenario: &Path, out: &Path) -> Outcome {
    let config = load_scenario(scenario)?;
    let (sim, transcript) = simulate(config.clone())?;
    fs::create_dir_all(out.join("snapshots"))
        .map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot create {}: {e}", out.display())))?;
    write_output(&out.join("scenario.toml"), config.to_toml().as_bytes())?;
    write_output(&out.join("board.jsonl"), &op_log(sim.board())?)?;
    write_output(&out.join("transcript.jsonl"), transcript.to_jsonl().as_bytes())?;
    let summary = transcript.summary();
    write_output(&out.join("summary.txt"), summary.as_bytes())?;
    let mut blocks = Vec::new();
    write_blocks(&mut blocks, sim.blocks()).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    write_output(&out.join("blocks.jsonl"), &blocks)?;
    for agent in sim.agents() {
        let mut buf = Vec::new();
        write_snapshots(&mut buf, agent.snapshots()).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
        write_output(&out.join("snapshots").join(format!("{}.tsv", agent.id())), &buf)?;
    }
    let committee = CommitteeFile { params: sim.params().clone(), committee: sim.committee().clone() };
    let json = serde_json::to_string_pretty(&committee).expect("committee serializes") + "\n";
    write_output(&out.join("committee.json"), json.as_bytes())?;
    print!("{summary}");
    if assert_type2(&transcript).passed {
        Ok(())
    } else {
        Err(Failure::new(EXIT_TYPE2, "type-2 guarantee violated"))
    }
}

fn query(dir: &Path, key: &str, c: usize, responder: Option<String>, out: Option<&Path>) -> Outcome {
    let config = load_scenario(&dir.join("scenario.toml"))?;
    let recorded = read_input(&dir.join("board.jsonl"))?;
    BoardState::replay(BufReader::new(recorded.as_bytes()))
        .map_err(|e| Failure::new(EXIT_PARSE, format!("board.jsonl: {e}")))?;
    let responder = match responder {
        Some(r) => MemberId::new(r),
        None => config
            .honest()
            .into_iter()
            .next()
            .ok_or_else(|| Failure::new(EXIT_USAGE, "no honest member to ask; pass --responder"))?,
    };
    if !config.members().contains(&responder) {
        return Err(Failure::new(EXIT_USAGE, format!("{responder} is not a committee member")));
    }
    let (sim, _) = simulate(config)?;
    if op_log(sim.board())? != recorded.as_bytes() {
        return Err(Failure::new(EXIT_PARSE, "board.jsonl does not match a replay of scenario.toml"));
    }
    let result = sim.external_client_query(key.as_bytes(), c, sim.board().clock(), &responder).map_err(sim_failure)?;
    let Some(proof) = result.proof else {
        return Err(Failure::new(EXIT_FAILURE, result.detail));
    };
    emit(out, &(serde_json::to_string_pretty(&proof).expect("proof serializes") + "\n"))?;
    eprintln!(
        "view height {} (tau {}), responder {}: {}",
        result.view.view.height, result.view.tau, responder, result.detail
    );
    if result.verified {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFY, result.detail))
    }
}

fn verify(proof: &Path, committee: &Path) -> Outcome {
    let wrapped: WrappedProof = serde_json::from_str(&read_input(proof)?)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", proof.display())))?;
    let keys: CommitteeFile = serde_json::from_str(&read_input(committee)?)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", committee.display())))?;
    if wpver(&keys.params, &keys.committee, &wrapped.fact, &wrapped, &wrapped.view) {
        println!(
            "verified: {} at height {} signed by {}",
            String::from_utf8_lossy(&wrapped.fact.key),
            wrapped.view.height,
            wrapped.view.signer
        );
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFY, "membership check failed"))
    }
}

fn run_bench(preset: &str) -> Outcome {
    let config = BenchConfig::preset(preset)
        .ok_or_else(|| Failure::new(EXIT_USAGE, format!("unknown preset {preset:?}; expected standard or smoke")))?;
    let report = bench(&config).map_err(sim_failure)?;
    print!("{}", report.table());
    Ok(())
}

fn report(path: &Path) -> Outcome {
    let file = if path.is_dir() { path.join("transcript.jsonl") } else { path.to_path_buf() };
    let transcript = Transcript::from_jsonl(&read_input(&file)?)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", file.display())))?;
    print!("{}", transcript.summary());
    let latencies: Vec<u32> = transcript.misbehaviors.iter().filter_map(|m| m.latency_rounds()).collect();
    if !latencies.is_empty() {
        let max = latencies.iter().max().expect("nonempty");
        let mean = f64::from(latencies.iter().sum::<u32>()) / latencies.len() as f64;
        println!("detection latency: mean {mean:.2} rounds, max {max} rounds");
    }
    if assert_type2(&transcript).passed {
        Ok(())
    } else {
        Err(Failure::new(EXIT_TYPE2, "type-2 guarantee violated"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenScenario(a) => gen_scenario(a),
        Command::Run { scenario, out } => run(&scenario, &out),
        Command::Query { board, key, collusion, responder, out } => {
            query(&board, &key, collusion, responder, out.as_deref())
        }
        Command::Verify { proof, committee } => verify(&proof, &committee),
        Command::Bench { preset } => run_bench(&preset),
        Command::Report { transcript } => report(&transcript),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
