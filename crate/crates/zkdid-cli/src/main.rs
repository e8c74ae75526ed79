//! `zkdid`: command-line frontend over the identity toolkit.
//!
//! All state lives in a directory (default `.zkdid`): one key file per
//! named actor, issuer accumulator snapshots, the verifier's burned
//! nonces, a shared configuration and the ledger log (relocatable with
//! `--ledger`). Credentials, requests and presentations travel as JSON
//! envelope files between commands, mirroring how they would travel
//! between real parties.
//!
//! Every source of randomness derives from `--seed` (or `ZKDID_SEED`),
//! so identical command sequences with identical seeds produce
//! byte-identical ledgers, proofs and reports. Time is logical: the
//! ledger height advances when a command lands a transaction or when
//! `ledger tick` is invoked, never from a clock.
//!
//! Exit codes: 0 on success (and accepted presentations), 1 on
//! operational or verification failure, 2 on usage and parse errors.
//! Failures print `error: <code>: <message>` on stderr, where `<code>`
//! is stable and machine-parseable.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use zkdid_cli::cost::cost_units;
use zkdid_cli::scenario;
use zkdid_cli::state::{
    self, protocol_code, Actor, CliError, Paths,
};
use zkdid_core::protocol::{
    credential_from_json, credential_to_json, presentation_from_json, presentation_to_json,
    request_from_json, request_to_json, Decision, HolderWallet, IssuerContext, RejectReason,
    SystemConfig, VerifierContext,
};
use zkdid_core::vdr::{RecoveryStatus, TxPayload};
use zkdid_core::{Did, Keychain, Vdr};

#[derive(Parser)]
#[command(
    name = "zkdid",
    version,
    about = "Privacy-preserving decentralized identity toolkit",
    max_term_width = 100
)]
struct Cli {
    /// State directory (created on demand).
    #[arg(long, global = true, default_value = ".zkdid")]
    dir: PathBuf,

    /// Ledger log location (defaults to <dir>/ledger.log).
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,

    /// Seed for all randomness; fixed seed means reproducible output.
    #[arg(long, global = true, env = "ZKDID_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the shared configuration (defaults apply otherwise).
    Init(InitArgs),
    /// Create a named keychain.
    Keygen {
        /// Actor name; keys land in <dir>/<name>.keys.
        name: String,
    },
    /// DID registry operations.
    Did {
        #[command(subcommand)]
        cmd: DidCmd,
    },
    /// Issuer setup.
    Issuer {
        #[command(subcommand)]
        cmd: IssuerCmd,
    },
    /// Issue a credential to a holder and write its envelope file.
    Issue {
        /// Issuing actor (must have run `issuer init`).
        issuer: String,
        /// Receiving actor name, or a raw did:zkd: identifier.
        holder: String,
        /// Schema tag, e.g. credit/v1.
        schema: String,
        /// Attribute assignments, e.g. creditScore=750.
        #[arg(required = true)]
        attributes: Vec<String>,
        /// Credential envelope destination.
        #[arg(long, default_value = "credential.json")]
        out: PathBuf,
    },
    /// Revoke an issued credential.
    Revoke {
        /// Issuing actor.
        issuer: String,
        /// Accumulator slot to revoke.
        #[arg(long, conflicts_with = "credential")]
        slot: Option<u32>,
        /// Credential envelope whose slot should be revoked.
        #[arg(long)]
        credential: Option<PathBuf>,
    },
    /// Create a presentation request (verifier side).
    Request {
        /// Schema tag the answer must come from.
        schema: String,
        /// Attribute the threshold applies to.
        attribute: String,
        /// Claimed lower bound: prove attribute >= threshold.
        threshold: u32,
        /// Trusted issuer: actor name or did:zkd: identifier.
        #[arg(long)]
        issuer: String,
        /// Request envelope destination.
        #[arg(long, default_value = "request.json")]
        out: PathBuf,
    },
    /// Answer a request with a zero-knowledge presentation.
    Present {
        /// Holder actor owning the credential.
        holder: String,
        /// Request envelope to answer.
        #[arg(long)]
        request: PathBuf,
        /// Credential envelope to draw from.
        #[arg(long)]
        credential: PathBuf,
        /// Presentation envelope destination.
        #[arg(long, default_value = "presentation.json")]
        out: PathBuf,
    },
    /// Check a presentation against a request; exit 0 only on accept.
    Verify {
        /// Request envelope the presentation answers.
        #[arg(long)]
        request: PathBuf,
        /// Presentation envelope to check.
        #[arg(long)]
        presentation: PathBuf,
        /// Override the request nonce (hex, 16 bytes) before checking.
        #[arg(long)]
        nonce: Option<String>,
    },
    /// Social recovery of a DID's keys.
    Recovery {
        #[command(subcommand)]
        cmd: RecoveryCmd,
    },
    /// Ledger inspection and logical time.
    Ledger {
        #[command(subcommand)]
        cmd: LedgerCmd,
    },
    /// Scripted multi-party scenarios.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// Measure prove/verify cost at the configured parameters.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InitArgs {
    /// Revocation accumulator depth (capacity 2^depth).
    #[arg(long, default_value_t = SystemConfig::standard().tree_depth)]
    tree_depth: u8,
    /// Compression permutation rounds (power of two).
    #[arg(long, default_value_t = SystemConfig::standard().mimc_rounds)]
    mimc_rounds: u16,
    /// Attribute range-check width in bits.
    #[arg(long, default_value_t = SystemConfig::standard().range_bits)]
    range_bits: u8,
    /// Key-tree height (2^height one-time keys per actor).
    #[arg(long, default_value_t = SystemConfig::standard().key_height)]
    key_height: u32,
    /// Recovery veto window in blocks.
    #[arg(long, default_value_t = SystemConfig::standard().timelock_blocks)]
    timelock: u64,
    /// STARK query count.
    #[arg(long, default_value_t = SystemConfig::standard().num_queries)]
    queries: usize,
}

#[derive(Subcommand)]
enum DidCmd {
    /// Register an actor's DID on the ledger.
    Register { name: String },
}

#[derive(Subcommand)]
enum IssuerCmd {
    /// Create an issuer: keychain, empty accumulator, DID registration.
    Init { name: String },
}

#[derive(Subcommand)]
enum RecoveryCmd {
    /// Set a DID's guardian set and approval threshold.
    Configure {
        /// Controller actor whose guardians are being set.
        subject: String,
        /// Comma-separated guardian actors (names or DIDs).
        #[arg(long)]
        guardians: String,
        /// Approvals required before the timelock starts.
        #[arg(long)]
        threshold: u32,
    },
    /// Guardian: propose replacing a subject's keys.
    Initiate {
        /// Actor (or DID) being recovered.
        subject: String,
        /// Guardian actor signing the proposal.
        #[arg(long)]
        by: String,
        /// Actor whose keychain becomes the replacement (run keygen first).
        #[arg(long)]
        new_keys: String,
    },
    /// Guardian: approve the pending recovery.
    Approve {
        subject: String,
        #[arg(long)]
        by: String,
    },
    /// Controller veto: abandon the active recovery.
    Cancel { subject: String },
    /// Install the recovered keys once the timelock elapsed.
    Finalize {
        subject: String,
        /// Any registered actor may execute the finalize.
        #[arg(long)]
        by: String,
    },
}

#[derive(Subcommand)]
enum LedgerCmd {
    /// Print the ledger state as deterministic text.
    Dump,
    /// Seal empty blocks to advance logical time.
    Tick {
        #[arg(default_value_t = 1)]
        count: u64,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Execute a scenario script against a fresh in-memory ledger.
    Run {
        /// Script path; a .json extension selects the JSON carrier.
        path: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Repetitions per measurement (median is reported).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Use the small test parameterization instead of the configured one.
    #[arg(long)]
    toy: bool,
    /// Emit machine-readable JSON instead of the table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit.clamp(0, 255) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let paths = Paths::new(&cli.dir, cli.ledger.as_deref());
    let seed = cli.seed;
    match cli.command {
        Command::Init(args) => cmd_init(&paths, args),
        Command::Keygen { name } => cmd_keygen(&paths, seed, &name),
        Command::Did {
            cmd: DidCmd::Register { name },
        } => cmd_register(&paths, &name),
        Command::Issuer {
            cmd: IssuerCmd::Init { name },
        } => cmd_issuer_init(&paths, seed, &name),
        Command::Issue {
            issuer,
            holder,
            schema,
            attributes,
            out,
        } => cmd_issue(&paths, seed, &issuer, &holder, &schema, &attributes, &out),
        Command::Revoke {
            issuer,
            slot,
            credential,
        } => cmd_revoke(&paths, &issuer, slot, credential.as_deref()),
        Command::Request {
            schema,
            attribute,
            threshold,
            issuer,
            out,
        } => cmd_request(&paths, seed, &schema, &attribute, threshold, &issuer, &out),
        Command::Present {
            holder,
            request,
            credential,
            out,
        } => cmd_present(&paths, seed, &holder, &request, &credential, &out),
        Command::Verify {
            request,
            presentation,
            nonce,
        } => cmd_verify(&paths, &request, &presentation, nonce.as_deref()),
        Command::Recovery { cmd } => cmd_recovery(&paths, cmd),
        Command::Ledger { cmd } => cmd_ledger(&paths, cmd),
        Command::Scenario {
            cmd: ScenarioCmd::Run { path },
        } => cmd_scenario(seed, &path),
        Command::Bench(args) => cmd_bench(&paths, seed, args),
    }
}

fn protocol_err(e: zkdid_core::protocol::ProtocolError) -> CliError {
    CliError::fail(protocol_code(&e), e.to_string())
}

/// Resolves an actor name or literal `did:zkd:` string to a DID.
fn resolve_did(paths: &Paths, arg: &str) -> Result<Did, CliError> {
    if arg.starts_with("did:zkd:") {
        return arg
            .parse()
            .map_err(|e| CliError::fail("bad-did", format!("{e}")));
    }
    Ok(state::load_actor(paths, arg)?.did)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::fail("io", format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::fail("io", format!("{}: {e}", path.display())))
}

/// Stable exit reason for each verifier rejection.
fn reject_code(reason: RejectReason) -> &'static str {
    match reason {
        RejectReason::NonceMismatch => "reject:nonce-mismatch",
        RejectReason::NonceReplayed => "reject:nonce-replayed",
        RejectReason::StatementMismatch => "reject:statement-mismatch",
        RejectReason::UnknownSchema => "reject:unknown-schema",
        RejectReason::UnknownAttribute => "reject:unknown-attribute",
        RejectReason::UnknownIssuer => "reject:unknown-issuer",
        RejectReason::StaleRoot => "reject:stale-root",
        RejectReason::MalformedProof => "reject:malformed-proof",
        RejectReason::WrongParameters => "reject:wrong-parameters",
        RejectReason::InvalidProof => "reject:invalid-proof",
    }
}

fn cmd_init(paths: &Paths, args: InitArgs) -> Result<u8, CliError> {
    let config = SystemConfig {
        tree_depth: args.tree_depth,
        mimc_rounds: args.mimc_rounds,
        range_bits: args.range_bits,
        key_height: args.key_height,
        timelock_blocks: args.timelock,
        num_queries: args.queries,
    };
    // Reject parameter sets the proof system cannot serve.
    config
        .proof_params(1)
        .air
        .validate()
        .map_err(|e| CliError::fail("bad-parameters", e.to_string()))?;
    let (_, schemas) = state::load_config(paths)?;
    state::save_config(paths, &config, &schemas)?;
    println!("config written to {}", paths.config().display());
    Ok(0)
}

fn cmd_keygen(paths: &Paths, seed: u64, name: &str) -> Result<u8, CliError> {
    if state::actor_exists(paths, name) {
        return Err(CliError::fail(
            "duplicate-actor",
            format!("{name:?} already has a key file"),
        ));
    }
    let (config, _) = state::load_config(paths)?;
    let keys = Keychain::generate(state::derive_actor_seed(seed, name), config.key_height)
        .map_err(|e| CliError::fail("identity", e.to_string()))?;
    let actor = Actor {
        name: name.to_string(),
        did: keys.did(),
        keys,
        issuer: false,
    };
    state::save_actor(paths, &actor)?;
    println!("{}", actor.did);
    Ok(0)
}

fn cmd_register(paths: &Paths, name: &str) -> Result<u8, CliError> {
    let (config, _) = state::load_config(paths)?;
    let actor = state::load_actor(paths, name)?;
    let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
    let mut wallet = HolderWallet::from_parts(config, actor.did, actor.keys, Vec::new());
    wallet.register_on(&mut vdr).map_err(protocol_err)?;
    vdr.tick();
    state::save_vdr(paths, &vdr)?;
    state::save_actor(
        paths,
        &Actor {
            keys: wallet.keychain().clone(),
            ..actor
        },
    )?;
    println!("registered {} at height {}", wallet.did, vdr.height());
    Ok(0)
}

fn cmd_issuer_init(paths: &Paths, seed: u64, name: &str) -> Result<u8, CliError> {
    if state::actor_exists(paths, name) {
        return Err(CliError::fail(
            "duplicate-actor",
            format!("{name:?} already has a key file"),
        ));
    }
    let (config, _) = state::load_config(paths)?;
    let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
    let mut ctx = IssuerContext::new(config, state::derive_actor_seed(seed, name))
        .map_err(protocol_err)?;
    ctx.register_on(&mut vdr).map_err(protocol_err)?;
    vdr.tick();
    state::save_vdr(paths, &vdr)?;
    state::save_accumulator(paths, name, ctx.accumulator())?;
    state::save_actor(
        paths,
        &Actor {
            name: name.to_string(),
            did: ctx.did,
            keys: ctx.keychain().clone(),
            issuer: true,
        },
    )?;
    println!("{}", ctx.did);
    Ok(0)
}

/// Loads an issuer actor together with its accumulator snapshot.
fn load_issuer(paths: &Paths, config: &SystemConfig, name: &str) -> Result<(Actor, IssuerContext), CliError> {
    let actor = state::load_actor(paths, name)?;
    if !actor.issuer {
        return Err(CliError::fail(
            "not-an-issuer",
            format!("{name:?} was not created with issuer init"),
        ));
    }
    let accumulator = state::load_accumulator(paths, name)?;
    let ctx = IssuerContext::from_parts(config.clone(), actor.did, actor.keys.clone(), accumulator);
    Ok((actor, ctx))
}

fn save_issuer(paths: &Paths, actor: &Actor, ctx: &IssuerContext) -> Result<(), CliError> {
    state::save_accumulator(paths, &actor.name, ctx.accumulator())?;
    state::save_actor(
        paths,
        &Actor {
            name: actor.name.clone(),
            did: actor.did,
            keys: ctx.keychain().clone(),
            issuer: true,
        },
    )
}

fn cmd_issue(
    paths: &Paths,
    seed: u64,
    issuer: &str,
    holder: &str,
    schema: &str,
    raw_attrs: &[String],
    out: &Path,
) -> Result<u8, CliError> {
    let (config, schemas) = state::load_config(paths)?;
    let bound = 1u64 << config.range_bits.min(32);
    let mut attributes = Vec::with_capacity(raw_attrs.len());
    for raw in raw_attrs {
        let Some((name, value)) = raw.split_once('=') else {
            return Err(CliError::usage(format!(
                "attribute {raw:?} is not name=value"
            )));
        };
        let value: u64 = value
            .parse()
            .map_err(|_| CliError::usage(format!("attribute value {value:?} is not an integer")))?;
        if value >= bound {
            return Err(CliError::fail(
                "attribute-out-of-range",
                format!("{name}={value} exceeds the {}-bit range", config.range_bits),
            ));
        }
        attributes.push((name.to_string(), value as u32));
    }
    let holder_did = resolve_did(paths, holder)?;
    let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
    let (actor, mut ctx) = load_issuer(paths, &config, issuer)?;
    // Epoch in the tag keeps salts distinct across sequential issues.
    let mut rng = state::command_rng(
        seed,
        &format!("issue/{issuer}/{}", ctx.accumulator().epoch()),
    );
    let credential = ctx
        .issue(&mut vdr, &schemas, holder_did, schema, &attributes, &mut rng)
        .map_err(protocol_err)?;
    vdr.tick();
    state::save_vdr(paths, &vdr)?;
    save_issuer(paths, &actor, &ctx)?;
    write_file(out, &credential_to_json(&credential))?;
    println!(
        "issued slot {} epoch {} -> {}",
        credential.content.slot,
        credential.content.epoch,
        out.display()
    );
    Ok(0)
}

fn cmd_revoke(
    paths: &Paths,
    issuer: &str,
    slot: Option<u32>,
    credential: Option<&Path>,
) -> Result<u8, CliError> {
    let (config, _) = state::load_config(paths)?;
    let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
    let (actor, mut ctx) = load_issuer(paths, &config, issuer)?;
    let slot = match (slot, credential) {
        (Some(slot), None) => slot,
        (None, Some(path)) => {
            let credential = credential_from_json(&read_file(path)?).map_err(protocol_err)?;
            if credential.content.issuer != actor.did {
                return Err(CliError::fail(
                    "wrong-issuer",
                    "credential was issued by a different DID",
                ));
            }
            credential.content.slot
        }
        _ => return Err(CliError::usage("pass exactly one of --slot or --credential")),
    };
    ctx.revoke(&mut vdr, slot).map_err(protocol_err)?;
    vdr.tick();
    state::save_vdr(paths, &vdr)?;
    save_issuer(paths, &actor, &ctx)?;
    println!("revoked slot {slot}; epoch {}", ctx.accumulator().epoch());
    Ok(0)
}

fn cmd_request(
    paths: &Paths,
    seed: u64,
    schema: &str,
    attribute: &str,
    threshold: u32,
    issuer: &str,
    out: &Path,
) -> Result<u8, CliError> {
    let (config, schemas) = state::load_config(paths)?;
    let issuer_did = resolve_did(paths, issuer)?;
    let verifier = VerifierContext::new(config, schemas);
    // The counter keeps nonces distinct across repeated requests.
    let counter = state::bump_request_counter(paths)?;
    let mut rng = state::command_rng(seed, &format!("request/{counter}"));
    let request = verifier
        .make_request(schema, attribute, threshold, issuer_did, &mut rng)
        .map_err(protocol_err)?;
    write_file(out, &request_to_json(&request))?;
    println!("request written to {}", out.display());
    Ok(0)
}

fn cmd_present(
    paths: &Paths,
    seed: u64,
    holder: &str,
    request: &Path,
    credential: &Path,
    out: &Path,
) -> Result<u8, CliError> {
    let (config, schemas) = state::load_config(paths)?;
    let request = request_from_json(&read_file(request)?).map_err(protocol_err)?;
    let credential = credential_from_json(&read_file(credential)?).map_err(protocol_err)?;
    let actor = state::load_actor(paths, holder)?;
    let vdr = state::load_vdr(paths, config.timelock_blocks)?;

    // The issuer-side handshake: a fresh membership witness for the
    // credential's slot, served from the local issuer snapshot.
    let issuer_actor = state::find_actor_by_did(paths, &credential.content.issuer)?
        .filter(|a| a.issuer)
        .ok_or_else(|| {
            CliError::fail(
                "unknown-actor",
                "the issuing actor is not present in this state directory",
            )
        })?;
    let issuer_ctx = IssuerContext::from_parts(
        config.clone(),
        issuer_actor.did,
        issuer_actor.keys,
        state::load_accumulator(paths, &issuer_actor.name)?,
    );
    let witness = issuer_ctx
        .witness(credential.content.slot)
        .map_err(protocol_err)?;

    let wallet = HolderWallet::from_parts(config, actor.did, actor.keys, vec![credential]);
    let mut rng = state::command_rng(
        seed,
        &format!("present/{holder}/{}", hex::encode(request.nonce)),
    );
    let presentation = wallet
        .present(&request, &schemas, &vdr, &witness, &mut rng)
        .map_err(protocol_err)?;
    write_file(out, &presentation_to_json(&presentation))?;
    println!("presentation written to {}", out.display());
    Ok(0)
}

fn cmd_verify(
    paths: &Paths,
    request: &Path,
    presentation: &Path,
    nonce: Option<&str>,
) -> Result<u8, CliError> {
    let (config, schemas) = state::load_config(paths)?;
    let mut request = request_from_json(&read_file(request)?).map_err(protocol_err)?;
    if let Some(hex_nonce) = nonce {
        let raw = hex::decode(hex_nonce)
            .map_err(|_| CliError::usage("nonce must be hex"))?;
        request.nonce = raw
            .try_into()
            .map_err(|_| CliError::usage("nonce must be 16 bytes of hex"))?;
    }
    let presentation = presentation_from_json(&read_file(presentation)?).map_err(protocol_err)?;
    let vdr = state::load_vdr(paths, config.timelock_blocks)?;
    let mut verifier =
        VerifierContext::from_parts(config, schemas, state::load_nonces(paths)?);
    let decision = verifier.verify_presentation(&vdr, &request, &presentation);
    println!("{decision}");
    match decision {
        Decision::Accept => {
            state::save_nonces(paths, verifier.used_nonces())?;
            Ok(0)
        }
        Decision::Reject(reason) => Err(CliError::fail(
            reject_code(reason),
            "presentation rejected",
        )),
    }
}

/// Loads an actor as a signing wallet (credentials are irrelevant here).
fn load_signer(paths: &Paths, config: &SystemConfig, name: &str) -> Result<(Actor, HolderWallet), CliError> {
    let actor = state::load_actor(paths, name)?;
    let wallet = HolderWallet::from_parts(config.clone(), actor.did, actor.keys.clone(), Vec::new());
    Ok((actor, wallet))
}

fn save_signer(paths: &Paths, actor: &Actor, wallet: &HolderWallet) -> Result<(), CliError> {
    state::save_actor(
        paths,
        &Actor {
            name: actor.name.clone(),
            did: actor.did,
            keys: wallet.keychain().clone(),
            issuer: actor.issuer,
        },
    )
}

fn cmd_recovery(paths: &Paths, cmd: RecoveryCmd) -> Result<u8, CliError> {
    let (config, _) = state::load_config(paths)?;
    let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
    match cmd {
        RecoveryCmd::Configure {
            subject,
            guardians,
            threshold,
        } => {
            let mut dids = Vec::new();
            for g in guardians.split(',') {
                dids.push(resolve_did(paths, g.trim())?);
            }
            let (actor, mut wallet) = load_signer(paths, &config, &subject)?;
            wallet
                .configure_guardians(&mut vdr, dids, threshold)
                .map_err(protocol_err)?;
            vdr.tick();
            state::save_vdr(paths, &vdr)?;
            save_signer(paths, &actor, &wallet)?;
            println!("guardians configured for {}", actor.did);
        }
        RecoveryCmd::Initiate {
            subject,
            by,
            new_keys,
        } => {
            let subject_did = resolve_did(paths, &subject)?;
            let new_root = state::load_actor(paths, &new_keys)?.keys.root();
            let (actor, mut wallet) = load_signer(paths, &config, &by)?;
            wallet
                .initiate_recovery(&mut vdr, subject_did, new_root)
                .map_err(protocol_err)?;
            vdr.tick();
            state::save_vdr(paths, &vdr)?;
            save_signer(paths, &actor, &wallet)?;
            println!("recovery of {subject_did} initiated");
        }
        RecoveryCmd::Approve { subject, by } => {
            let subject_did = resolve_did(paths, &subject)?;
            let pending_root = match vdr.record(&subject_did).map(|r| &r.recovery) {
                Some(RecoveryStatus::Pending { new_key_root, .. })
                | Some(RecoveryStatus::TimeLocked { new_key_root, .. }) => *new_key_root,
                _ => {
                    return Err(CliError::fail(
                        "no-pending-recovery",
                        format!("no recovery in progress for {subject_did}"),
                    ))
                }
            };
            let (actor, mut wallet) = load_signer(paths, &config, &by)?;
            wallet
                .approve_recovery(&mut vdr, subject_did, pending_root)
                .map_err(protocol_err)?;
            vdr.tick();
            state::save_vdr(paths, &vdr)?;
            save_signer(paths, &actor, &wallet)?;
            let status = match vdr.record(&subject_did).map(|r| &r.recovery) {
                Some(RecoveryStatus::TimeLocked { locked_at, .. }) => {
                    format!("time-locked at height {locked_at}")
                }
                _ => "pending".to_string(),
            };
            println!("approved; recovery is {status}");
        }
        RecoveryCmd::Cancel { subject } => {
            let (actor, mut wallet) = load_signer(paths, &config, &subject)?;
            wallet.cancel_recovery(&mut vdr).map_err(protocol_err)?;
            vdr.tick();
            state::save_vdr(paths, &vdr)?;
            save_signer(paths, &actor, &wallet)?;
            println!("recovery canceled by controller");
        }
        RecoveryCmd::Finalize { subject, by } => {
            let subject_did = resolve_did(paths, &subject)?;
            let (actor, mut wallet) = load_signer(paths, &config, &by)?;
            wallet
                .finalize_recovery(&mut vdr, subject_did)
                .map_err(protocol_err)?;
            vdr.tick();
            state::save_vdr(paths, &vdr)?;
            save_signer(paths, &actor, &wallet)?;
            println!("recovery of {subject_did} finalized");

            // If the replacement keychain lives here, the subject's key
            // file adopts it (the DID itself never changes).
            if state::actor_exists(paths, &subject) {
                let subject_actor = state::load_actor(paths, &subject)?;
                let new_root = vdr
                    .document(&subject_did)
                    .expect("finalized subject is registered")
                    .key_root;
                if let Some(replacement) = state::find_actor_by_key_root(paths, &new_root)? {
                    state::save_actor(
                        paths,
                        &Actor {
                            name: subject_actor.name.clone(),
                            did: subject_actor.did,
                            keys: replacement.keys,
                            issuer: subject_actor.issuer,
                        },
                    )?;
                    println!("{subject} adopted the keychain of {}", replacement.name);
                }
            }
        }
    }
    Ok(0)
}

fn payload_kind(payload: &TxPayload) -> &'static str {
    match payload {
        TxPayload::RegisterDid(_) => "register-did",
        TxPayload::UpdateDocument(_) => "update-document",
        TxPayload::PublishRoot { .. } => "publish-root",
        TxPayload::ConfigureGuardians { .. } => "configure-guardians",
        TxPayload::InitiateRecovery { .. } => "initiate-recovery",
        TxPayload::ApproveRecovery { .. } => "approve-recovery",
        TxPayload::CancelRecovery { .. } => "cancel-recovery",
        TxPayload::FinalizeRecovery { .. } => "finalize-recovery",
    }
}

fn cmd_ledger(paths: &Paths, cmd: LedgerCmd) -> Result<u8, CliError> {
    let (config, _) = state::load_config(paths)?;
    match cmd {
        LedgerCmd::Dump => {
            let vdr = state::load_vdr(paths, config.timelock_blocks)?;
            print!("{}", dump_vdr(&vdr));
        }
        LedgerCmd::Tick { count } => {
            let mut vdr = state::load_vdr(paths, config.timelock_blocks)?;
            for _ in 0..count {
                vdr.tick();
            }
            state::save_vdr(paths, &vdr)?;
            println!("height {}", vdr.height());
        }
    }
    Ok(0)
}

/// Renders the full registry state as stable, diff-friendly text.
fn dump_vdr(vdr: &Vdr) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "height {}", vdr.height()).unwrap();
    for block in vdr.blocks() {
        if block.transactions.is_empty() {
            continue;
        }
        let kinds: Vec<&str> = block
            .transactions
            .iter()
            .map(|tx| payload_kind(&tx.payload))
            .collect();
        writeln!(out, "block {}: {}", block.height, kinds.join(", ")).unwrap();
    }
    for did in vdr.dids() {
        let record = vdr.record(did).expect("listed DID");
        writeln!(out, "{did}").unwrap();
        writeln!(out, "  key-root {}", record.document.key_root.to_hex()).unwrap();
        if !record.guardians.is_empty() {
            let list: Vec<String> = record.guardians.iter().map(Did::to_string).collect();
            writeln!(
                out,
                "  guardians {}-of-{}: {}",
                record.recovery_threshold,
                record.guardians.len(),
                list.join(", ")
            )
            .unwrap();
        }
        match &record.recovery {
            RecoveryStatus::None => {}
            RecoveryStatus::Pending { approvals, .. } => {
                writeln!(out, "  recovery pending ({} approvals)", approvals.len()).unwrap();
            }
            RecoveryStatus::TimeLocked { locked_at, .. } => {
                writeln!(out, "  recovery time-locked at height {locked_at}").unwrap();
            }
        }
        if let Some((epoch, root)) = vdr.latest_root(did) {
            writeln!(out, "  accumulator epoch {epoch} root {root}").unwrap();
        }
    }
    out
}

fn cmd_scenario(seed: u64, path: &Path) -> Result<u8, CliError> {
    let text = read_file(path)?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed = if is_json {
        scenario::parse_json(&text)
    } else {
        scenario::parse(&text)
    };
    let script = parsed.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let outcome = scenario::run(&script, seed);
    print!("{}", outcome.report);
    Ok(if outcome.failures == 0 { 0 } else { 1 })
}

fn median_ms(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

fn cmd_bench(paths: &Paths, seed: u64, args: BenchArgs) -> Result<u8, CliError> {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let (configured, schemas) = state::load_config(paths)?;
    let config = if args.toy {
        SystemConfig {
            tree_depth: 2,
            mimc_rounds: 64,
            range_bits: 32,
            key_height: 3,
            timelock_blocks: 5,
            num_queries: configured.num_queries,
        }
    } else {
        configured
    };

    // A self-contained pipeline on an in-memory ledger; the state
    // directory is never touched.
    let mut vdr = Vdr::with_timelock(config.timelock_blocks);
    let mut issuer = IssuerContext::new(config.clone(), state::derive_actor_seed(seed, "bench-issuer"))
        .map_err(protocol_err)?;
    issuer.register_on(&mut vdr).map_err(protocol_err)?;
    let mut holder = HolderWallet::new(config.clone(), state::derive_actor_seed(seed, "bench-holder"))
        .map_err(protocol_err)?;
    let mut rng = state::command_rng(seed, "bench-setup");
    let credential = issuer
        .issue(
            &mut vdr,
            &schemas,
            holder.did,
            "credit/v1",
            &[("creditScore".to_string(), 750)],
            &mut rng,
        )
        .map_err(protocol_err)?;
    vdr.tick();
    holder
        .add_credential(credential.clone(), &vdr)
        .map_err(protocol_err)?;
    let witness = issuer
        .witness(credential.content.slot)
        .map_err(protocol_err)?;
    let verifier_template = VerifierContext::new(config.clone(), schemas.clone());
    let request = verifier_template
        .make_request("credit/v1", "creditScore", 700, issuer.did, &mut rng)
        .map_err(protocol_err)?;

    let mut prove_ms = Vec::with_capacity(args.reps);
    let mut verify_ms = Vec::with_capacity(args.reps);
    let mut proof_bytes = 0usize;
    for rep in 0..args.reps {
        // One fixed rng stream per rep keeps every rep's proof (and so
        // its size) identical under one seed.
        let mut prover_rng = state::command_rng(seed, "bench-prove");
        let started = Instant::now();
        let presentation = holder
            .present(&request, &schemas, &vdr, &witness, &mut prover_rng)
            .map_err(protocol_err)?;
        prove_ms.push(started.elapsed().as_secs_f64() * 1e3);

        let mut verifier = VerifierContext::new(config.clone(), schemas.clone());
        let started = Instant::now();
        let decision = verifier.verify_presentation(&vdr, &request, &presentation);
        verify_ms.push(started.elapsed().as_secs_f64() * 1e3);
        if decision != Decision::Accept {
            return Err(CliError::fail(
                "bench-failed",
                format!("rep {rep} was rejected: {decision}"),
            ));
        }
        proof_bytes = presentation.proof_bytes.len();
    }

    let params = config.proof_params(1);
    let cost = cost_units(&params);
    let prove = median_ms(prove_ms);
    let verify = median_ms(verify_ms);
    if args.json {
        let doc = serde_json::json!({
            "params": {
                "tree_depth": config.tree_depth,
                "mimc_rounds": config.mimc_rounds,
                "range_bits": config.range_bits,
                "num_queries": config.num_queries,
                "trace_length": params.air.trace_length(),
            },
            "reps": args.reps,
            "prove_ms": prove,
            "verify_ms": verify,
            "proof_bytes": proof_bytes,
            "cost_units": cost,
        });
        println!("{doc}");
    } else {
        println!(
            "parameters   depth {}, rounds {}, range {} bits, {} queries",
            config.tree_depth, config.mimc_rounds, config.range_bits, config.num_queries
        );
        println!("prove time   {prove:10.1} ms   (median of {})", args.reps);
        println!("verify time  {verify:10.1} ms   (median of {})", args.reps);
        println!("proof size   {proof_bytes:10} bytes");
        println!("ledger cost  {cost:10} units");
    }
    Ok(0)
}
