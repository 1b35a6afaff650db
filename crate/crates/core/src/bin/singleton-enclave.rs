// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use singleton_enclave::adversary::{self, Strategy};
use singleton_enclave::attestation::PlatformKeys;
use singleton_enclave::bench::{self, BenchConfig, Suite};
use singleton_enclave::crypto::RsaPublic;
use singleton_enclave::enclave::EnclaveBlueprint;
use singleton_enclave::seed;
use singleton_enclave::sigstruct::{sign_common, SigStruct, SignerKey};
use singleton_enclave::starter::{StartRequest, Starter};
use singleton_enclave::transport::Server;
use singleton_enclave::verifier::{load_policy_dir, Policy, PolicyMode, SecretsBundle, Verifier};

#[derive(Parser)]
#[command(name = "singleton-enclave", version, about = "Simulated SGX measurement, attestation and singleton enclaves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signer key and simulated platform keys.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the base enclave hash and common SIGSTRUCT of a blueprint.
    Measure(MeasureArgs),
    /// Run the attestation verifier service.
    Verifier {
        #[command(subcommand)]
        command: VerifierCommand,
    },
    /// Launch an enclave through the untrusted starter.
    Starter {
        #[command(subcommand)]
        command: StarterCommand,
    },
    /// Reproduce the report-reuse attack.
    Attack {
        #[command(subcommand)]
        command: AttackCommand,
    },
    /// Run a benchmark suite and print a table plus CSV.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct MeasureArgs {
    /// Blueprint manifest (JSON).
    blueprint: PathBuf,
    #[arg(long)]
    signer: PathBuf,
    #[arg(long, default_value_t = 1)]
    isvprodid: u16,
    #[arg(long, default_value_t = 1)]
    isvsvn: u16,
    #[arg(long, default_value_t = 0)]
    date: u64,
    /// Write the common SIGSTRUCT (base64) here.
    #[arg(long)]
    sigstruct_out: Option<PathBuf>,
    /// Also write a verifier policy file.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    #[arg(long, requires = "policy_out")]
    policy_name: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Singleton)]
    mode: ModeArg,
    /// JSON object of configuration entries released on attestation.
    #[arg(long)]
    secrets: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifierCommand {
    Serve {
        #[arg(long, default_value = "127.0.0.1:7700")]
        listen: String,
        /// Directory of policy JSON files.
        #[arg(long)]
        policies: PathBuf,
        /// Token journal; created if missing.
        #[arg(long)]
        journal: PathBuf,
        /// Signer key (PEM) used for on-demand SIGSTRUCTs.
        #[arg(long)]
        signer: PathBuf,
        /// Trusted platform quoting key: public PEM or platform.json.
        #[arg(long = "platform-pub")]
        platform_pub: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StarterCommand {
    Run {
        #[arg(long)]
        policy: String,
        #[arg(long)]
        blueprint: PathBuf,
        #[arg(long)]
        verifier: String,
        /// Start the common enclave instead; no verifier round trip.
        #[arg(long)]
        common: bool,
        #[arg(long)]
        show_secrets: bool,
        /// Simulated platform keys (platform.json from keygen).
        #[arg(long)]
        platform: PathBuf,
        /// Common SIGSTRUCT, base64.
        #[arg(long)]
        sigstruct: PathBuf,
    },
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Scripted reuse attack against an in-process victim deployment.
    Demo {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Singleton strategy: a (no token), b (replayed token), c (mismatched page).
        #[arg(long)]
        strategy: Option<Strategy>,
    },
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(value_parser = parse_suites)]
    suite: Vec<Suite>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    warmup_ms: u64,
    #[arg(long, default_value_t = 20)]
    samples: usize,
}

fn parse_suites(s: &str) -> Result<Suite, String> {
    s.parse()
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Naive,
    Singleton,
}

impl From<ModeArg> for PolicyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => PolicyMode::Naive,
            ModeArg::Singleton => PolicyMode::Singleton,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_signer(path: &Path) -> Result<SignerKey> {
    Ok(SignerKey::from_pem(&read_text(path)?)?)
}

fn load_platform(path: &Path) -> Result<PlatformKeys> {
    Ok(PlatformKeys::from_json(&read_text(path)?)?)
}

fn load_platform_pub(path: &Path) -> Result<RsaPublic> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        return Ok(PlatformKeys::from_json(&text)?.quoting_public().clone());
    }
    Ok(RsaPublic::from_pkcs1_pem(&text)?)
}

fn keygen(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let master = seed::seed_from_env();
    let signer = match master.as_deref() {
        Some(m) => SignerKey::from_seed_label(m, "signer")?,
        None => SignerKey::generate(None)?,
    };
    let platform = PlatformKeys::generate(&mut seed::env_rng("platform"), "platform-0")?;
    fs::write(out.join("signer.pem"), signer.to_pem()?)?;
    fs::write(out.join("platform.json"), platform.to_json()?)?;
    fs::write(out.join("platform.pub.pem"), platform.quoting_public().to_pkcs1_pem()?)?;
    println!("mrsigner {}", signer.mrsigner());
    println!("wrote signer.pem, platform.json, platform.pub.pem to {}", out.display());
    Ok(())
}

fn measure(args: MeasureArgs) -> Result<()> {
    let bp = EnclaveBlueprint::from_manifest_file(&args.blueprint)?;
    let signer = load_signer(&args.signer)?;
    let (base, ss) = sign_common(&bp, &signer, args.isvprodid, args.isvsvn, args.date)?;
    println!("base_hash {}", base.to_hex());
    println!("common_mrenclave {}", ss.body.mrenclave);
    println!("mrsigner {}", signer.mrsigner());
    println!("instance_page_offset {:#x}", bp.instance_page_offset());
    match &args.sigstruct_out {
        Some(p) => fs::write(p, ss.to_base64() + "\n")?,
        None => println!("sigstruct {}", ss.to_base64()),
    }
    if let Some(p) = &args.policy_out {
        let secrets: SecretsBundle = match &args.secrets {
            Some(s) => serde_json::from_str(&read_text(s)?).context("secrets file")?,
            None => SecretsBundle::new(),
        };
        let name = args.policy_name.clone().unwrap_or_else(|| "default".into());
        let policy = Policy::new(name, args.mode.into(), base, ss, bp.instance_page_offset(), secrets);
        policy.check_consistency()?;
        fs::write(p, serde_json::to_string_pretty(&policy)?)?;
    }
    Ok(())
}

fn verifier_serve(
    listen: &str,
    policies: &Path,
    journal: &Path,
    signer: &Path,
    platform_pub: &[PathBuf],
) -> Result<()> {
    let verifier = Verifier::with_journal(load_signer(signer)?, journal, seed::env_rng("verifier"))
        .with_context(|| format!("opening journal {}", journal.display()))?;
    if platform_pub.is_empty() {
        bail!("at least one --platform-pub is required");
    }
    for p in platform_pub {
        verifier.trust_platform(load_platform_pub(p)?);
    }
    for policy in load_policy_dir(policies)? {
        verifier.register_policy(policy)?;
    }
    let server = Server::bind(listen, Arc::new(verifier))?;
    println!("verifier listening on {}", server.local_addr()?);
    server.run();
    Ok(())
}

fn starter_run(
    policy: String,
    blueprint: &Path,
    verifier: String,
    common: bool,
    show_secrets: bool,
    platform: &Path,
    sigstruct: &Path,
) -> Result<ExitCode> {
    let req = StartRequest {
        policy_name: policy,
        blueprint: EnclaveBlueprint::from_manifest_file(blueprint)?,
        common_sigstruct: SigStruct::from_base64(read_text(sigstruct)?.trim())?,
        verifier_address: verifier,
    };
    let mut starter = Starter::new(Arc::new(load_platform(platform)?), seed::env_rng("starter"));
    if common {
        let rt = starter.construct_common(&req)?;
        println!("common enclave initialized, mrenclave {}", rt.enclave().mrenclave);
        println!("attestation required: {}", rt.requires_attestation());
        return Ok(ExitCode::SUCCESS);
    }
    match starter.run_singleton(&req) {
        Ok((rt, secrets)) => {
            println!("singleton enclave initialized, mrenclave {}", rt.enclave().mrenclave);
            println!("token {}", hex::encode(rt.enclave().instance_page.token));
            for (k, v) in &secrets.entries {
                if show_secrets {
                    println!("config {k}={v}");
                } else {
                    println!("config {k}=<redacted>");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error {}: {e}", e.code_str());
            Ok(ExitCode::FAILURE)
        }
    }
}

fn attack_demo(mode: ModeArg, strategy: Option<Strategy>) -> Result<ExitCode> {
    let mode: PolicyMode = mode.into();
    if mode == PolicyMode::Singleton && strategy.is_none() {
        bail!("--mode singleton needs --strategy a|b|c");
    }
    let master = seed::seed_from_env();
    let outcome = adversary::run_demo(mode, strategy, master.as_deref())?;
    for line in &outcome.transcript {
        println!("{line}");
    }
    match &outcome.obtained {
        Some(s) => println!("obtained secrets {}", serde_json::to_string(s)?),
        None => println!("obtained secrets none"),
    }
    if let Some(code) = outcome.code {
        println!("code {code}");
    }
    if outcome.expected() {
        println!("outcome: expected");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("outcome: UNEXPECTED");
        Ok(ExitCode::FAILURE)
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let suites = if args.suite.is_empty() { Suite::ALL.to_vec() } else { args.suite };
    let cfg = BenchConfig {
        warmup: Duration::from_millis(args.warmup_ms),
        samples: args.samples,
        seed: seed::seed_from_env(),
        ..BenchConfig::default()
    };
    let report = bench::run_suites(&suites, &cfg)?;
    print!("{}", report.to_table());
    println!();
    print!("{}", report.to_csv());
    if let Some(p) = &args.csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen { out } => keygen(&out).map(|()| ExitCode::SUCCESS),
        Command::Measure(args) => measure(args).map(|()| ExitCode::SUCCESS),
        Command::Verifier {
            command:
                VerifierCommand::Serve {
                    listen,
                    policies,
                    journal,
                    signer,
                    platform_pub,
                },
        } => verifier_serve(&listen, &policies, &journal, &signer, &platform_pub).map(|()| ExitCode::SUCCESS),
        Command::Starter {
            command:
                StarterCommand::Run {
                    policy,
                    blueprint,
                    verifier,
                    common,
                    show_secrets,
                    platform,
                    sigstruct,
                },
        } => starter_run(policy, &blueprint, verifier, common, show_secrets, &platform, &sigstruct),
        Command::Attack {
            command: AttackCommand::Demo { mode, strategy },
        } => attack_demo(mode, strategy),
        Command::Bench(args) => run_bench(args).map(|()| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
