//! On-disk state: a state directory holding the shared configuration,
//! one key file per actor, issuer accumulator snapshots, the verifier's
//! burned-nonce list, and the ledger log.
//!
//! Key files are small JSON documents; accumulators use their native
//! binary snapshot format; the ledger uses the registry's text log. All
//! writes are whole-file rewrites, so a command either lands completely
//! or not at all from the next command's point of view.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use zkdid_core::protocol::{ProtocolError, SchemaRegistry, SystemConfig};
use zkdid_core::{byte_hash, Accumulator, Did, Keychain, Vdr, VdrError};

pub const CONFIG_VERSION: &str = "zkdid-config/1";
pub const KEYFILE_VERSION: &str = "zkdid-keys/1";

/// A CLI-level failure: a stable machine-parseable code, a human
/// message, and the process exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    /// Operational failure (exit 1).
    pub fn fail(code: &'static str, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
            exit: 1,
        }
    }

    /// Usage or parse error (exit 2).
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: "usage",
            message: message.into(),
            exit: 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

/// Stable error code for each protocol-level failure.
pub fn protocol_code(err: &ProtocolError) -> &'static str {
    match err {
        ProtocolError::UnknownSchema(_) => "unknown-schema",
        ProtocolError::UnknownAttribute { .. } => "unknown-attribute",
        ProtocolError::SchemaExists(_) => "schema-exists",
        ProtocolError::BadSchema(_) => "bad-schema",
        ProtocolError::SchemaMismatch(_) => "schema-mismatch",
        ProtocolError::NoMatchingCredential => "no-matching-credential",
        ProtocolError::BadCredential(_) => "bad-credential",
        ProtocolError::StaleWitness => "stale-witness",
        ProtocolError::Revoked => "revoked",
        ProtocolError::NoPublishedRoot => "no-published-root",
        ProtocolError::Envelope(_) => "bad-envelope",
        ProtocolError::Hashing(_) => "hashing",
        ProtocolError::Identity(_) => "identity",
        ProtocolError::Vdr(e) => vdr_code(e),
        ProtocolError::Accumulator(_) => "accumulator",
        ProtocolError::Air(_) => "unprovable-statement",
        ProtocolError::Prove(_) => "unprovable-statement",
        ProtocolError::Json(_) => "bad-envelope",
    }
}

pub fn vdr_code(err: &VdrError) -> &'static str {
    match err {
        VdrError::UnknownDid(_) => "unknown-did",
        VdrError::BadSignature => "bad-signature",
        VdrError::KeyReuse { .. } => "key-reuse",
        VdrError::BadAnchor { .. } => "bad-anchor",
        VdrError::Unauthorized(_) => "unauthorized",
        VdrError::InvalidTransition(_) => "invalid-transition",
        VdrError::NotGuardian => "not-guardian",
        VdrError::DuplicateApproval => "duplicate-approval",
        VdrError::TimelockNotElapsed { .. } => "timelock-not-elapsed",
        VdrError::NoPendingRecovery => "no-pending-recovery",
        VdrError::EpochGap { .. } => "epoch-gap",
        VdrError::MalformedLog(_) => "malformed-log",
        VdrError::Io(_) => "io",
    }
}

/// Resolved locations of every state file.
#[derive(Clone, Debug)]
pub struct Paths {
    pub dir: PathBuf,
    pub ledger: PathBuf,
}

impl Paths {
    pub fn new(dir: &Path, ledger_override: Option<&Path>) -> Paths {
        Paths {
            dir: dir.to_path_buf(),
            ledger: ledger_override
                .map(Path::to_path_buf)
                .unwrap_or_else(|| dir.join("ledger.log")),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.json")
    }

    pub fn actor(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.keys"))
    }

    pub fn accumulator(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.acc"))
    }

    pub fn nonces(&self) -> PathBuf {
        self.dir.join("verifier.nonces")
    }

    pub fn request_counter(&self) -> PathBuf {
        self.dir.join("verifier.requests")
    }

    pub fn ensure_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::fail("io", format!("cannot create state dir: {e}")))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::fail("io", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::fail("io", format!("{}: {e}", path.display())))
}

fn bad_state(path: &Path, what: &str) -> CliError {
    CliError::fail("bad-state-file", format!("{}: {what}", path.display()))
}

/// Loads the shared configuration, or the standard one if none has been
/// written yet.
pub fn load_config(paths: &Paths) -> Result<(SystemConfig, SchemaRegistry), CliError> {
    let path = paths.config();
    if !path.exists() {
        return Ok((SystemConfig::standard(), SchemaRegistry::new()));
    }
    let v: Value = serde_json::from_str(&read_text(&path)?)
        .map_err(|_| bad_state(&path, "not valid JSON"))?;
    if v.get("v").and_then(Value::as_str) != Some(CONFIG_VERSION) {
        return Err(bad_state(&path, "wrong config version"));
    }
    let num = |key: &str| -> Result<u64, CliError> {
        v.get(key)
            .and_then(Value::as_u64)
            .ok_or_else(|| bad_state(&path, "missing numeric field"))
    };
    let config = SystemConfig {
        tree_depth: num("tree_depth")? as u8,
        mimc_rounds: num("mimc_rounds")? as u16,
        range_bits: num("range_bits")? as u8,
        key_height: num("key_height")? as u32,
        timelock_blocks: num("timelock_blocks")?,
        num_queries: num("num_queries")? as usize,
    };
    let mut schemas = SchemaRegistry::new();
    let Some(map) = v.get("schemas").and_then(Value::as_object) else {
        return Err(bad_state(&path, "missing schemas"));
    };
    for (tag, attrs) in map {
        let Some(list) = attrs.as_array() else {
            return Err(bad_state(&path, "schema attributes must be an array"));
        };
        let names: Option<Vec<&str>> = list.iter().map(Value::as_str).collect();
        let names = names.ok_or_else(|| bad_state(&path, "attribute names must be strings"))?;
        if schemas.attributes(tag).is_ok() {
            continue; // built-in
        }
        schemas
            .register(tag, &names)
            .map_err(|_| bad_state(&path, "invalid schema definition"))?;
    }
    Ok((config, schemas))
}

pub fn save_config(
    paths: &Paths,
    config: &SystemConfig,
    schemas: &SchemaRegistry,
) -> Result<(), CliError> {
    paths.ensure_dir()?;
    let mut map = serde_json::Map::new();
    for tag in schemas.tags() {
        let attrs = schemas.attributes(tag).expect("listed tag");
        map.insert(tag.to_string(), json!(attrs));
    }
    let doc = json!({
        "v": CONFIG_VERSION,
        "tree_depth": config.tree_depth,
        "mimc_rounds": config.mimc_rounds,
        "range_bits": config.range_bits,
        "key_height": config.key_height,
        "timelock_blocks": config.timelock_blocks,
        "num_queries": config.num_queries,
        "schemas": Value::Object(map),
    });
    write_text(&paths.config(), &doc.to_string())
}

/// Loads the ledger, or a fresh one if the log does not exist yet.
pub fn load_vdr(paths: &Paths, timelock_blocks: u64) -> Result<Vdr, CliError> {
    if !paths.ledger.exists() {
        return Ok(Vdr::with_timelock(timelock_blocks));
    }
    Vdr::read_log(&paths.ledger, timelock_blocks)
        .map_err(|e| CliError::fail(vdr_code(&e), format!("ledger replay failed: {e}")))
}

pub fn save_vdr(paths: &Paths, vdr: &Vdr) -> Result<(), CliError> {
    paths.ensure_dir()?;
    vdr.write_log(&paths.ledger)
        .map_err(|e| CliError::fail("io", format!("cannot write ledger: {e}")))
}

/// One named actor: a keychain, its DID, and whether it issues (and so
/// owns an accumulator snapshot next to its key file).
pub struct Actor {
    pub name: String,
    pub did: Did,
    pub keys: Keychain,
    pub issuer: bool,
}

pub fn actor_exists(paths: &Paths, name: &str) -> bool {
    paths.actor(name).exists()
}

pub fn load_actor(paths: &Paths, name: &str) -> Result<Actor, CliError> {
    let path = paths.actor(name);
    if !path.exists() {
        return Err(CliError::fail(
            "unknown-actor",
            format!("no key file for {name:?} (run keygen or did register first)"),
        ));
    }
    let v: Value = serde_json::from_str(&read_text(&path)?)
        .map_err(|_| bad_state(&path, "not valid JSON"))?;
    if v.get("v").and_then(Value::as_str) != Some(KEYFILE_VERSION) {
        return Err(bad_state(&path, "wrong key file version"));
    }
    let did: Did = v
        .get("did")
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad_state(&path, "bad did"))?;
    let keys_hex = v
        .get("keys")
        .and_then(Value::as_str)
        .ok_or_else(|| bad_state(&path, "missing keys"))?;
    let raw = hex::decode(keys_hex).map_err(|_| bad_state(&path, "bad keys hex"))?;
    let keys = Keychain::from_bytes(&raw).map_err(|_| bad_state(&path, "bad keychain"))?;
    let issuer = v.get("issuer").and_then(Value::as_bool).unwrap_or(false);
    Ok(Actor {
        name: name.to_string(),
        did,
        keys,
        issuer,
    })
}

pub fn save_actor(paths: &Paths, actor: &Actor) -> Result<(), CliError> {
    paths.ensure_dir()?;
    let doc = json!({
        "v": KEYFILE_VERSION,
        "name": actor.name,
        "did": actor.did.to_string(),
        "keys": hex::encode(actor.keys.to_bytes()),
        "issuer": actor.issuer,
    });
    write_text(&paths.actor(&actor.name), &doc.to_string())
}

/// Names of all key files in the state directory, sorted.
pub fn actor_names(paths: &Paths) -> Vec<String> {
    let Ok(entries) = fs::read_dir(&paths.dir) else {
        return Vec::new();
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".keys").map(str::to_string)
        })
        .collect();
    names.sort();
    names
}

/// Finds the actor whose DID matches, scanning key files in name order.
pub fn find_actor_by_did(paths: &Paths, did: &Did) -> Result<Option<Actor>, CliError> {
    for name in actor_names(paths) {
        let actor = load_actor(paths, &name)?;
        if actor.did == *did {
            return Ok(Some(actor));
        }
    }
    Ok(None)
}

/// Finds the actor whose current keychain root matches.
pub fn find_actor_by_key_root(
    paths: &Paths,
    root: &zkdid_core::Digest32,
) -> Result<Option<Actor>, CliError> {
    for name in actor_names(paths) {
        let actor = load_actor(paths, &name)?;
        if actor.keys.root() == *root {
            return Ok(Some(actor));
        }
    }
    Ok(None)
}

pub fn load_accumulator(paths: &Paths, name: &str) -> Result<Accumulator, CliError> {
    Accumulator::load(&paths.accumulator(name)).map_err(|e| {
        CliError::fail(
            "bad-state-file",
            format!("{}: {e}", paths.accumulator(name).display()),
        )
    })
}

pub fn save_accumulator(paths: &Paths, name: &str, acc: &Accumulator) -> Result<(), CliError> {
    paths.ensure_dir()?;
    acc.save(&paths.accumulator(name))
        .map_err(|e| CliError::fail("io", format!("cannot write accumulator: {e}")))
}

/// The verifier's burned nonces, one hex nonce per line.
pub fn load_nonces(paths: &Paths) -> Result<BTreeSet<[u8; 16]>, CliError> {
    let path = paths.nonces();
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let mut out = BTreeSet::new();
    for line in read_text(&path)?.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let raw = hex::decode(line).map_err(|_| bad_state(&path, "bad nonce hex"))?;
        let nonce: [u8; 16] = raw
            .try_into()
            .map_err(|_| bad_state(&path, "bad nonce length"))?;
        out.insert(nonce);
    }
    Ok(out)
}

pub fn save_nonces(paths: &Paths, nonces: &BTreeSet<[u8; 16]>) -> Result<(), CliError> {
    paths.ensure_dir()?;
    let mut text = String::new();
    for n in nonces {
        text.push_str(&hex::encode(n));
        text.push('\n');
    }
    write_text(&paths.nonces(), &text)
}

/// Returns the verifier's request counter and advances it. Folding the
/// counter into the request RNG keeps nonces distinct across otherwise
/// identical `request` invocations without losing determinism.
pub fn bump_request_counter(paths: &Paths) -> Result<u64, CliError> {
    let path = paths.request_counter();
    let current: u64 = if path.exists() {
        read_text(&path)?
            .trim()
            .parse()
            .map_err(|_| bad_state(&path, "not a counter"))?
    } else {
        0
    };
    paths.ensure_dir()?;
    write_text(&path, &format!("{}\n", current + 1))?;
    Ok(current)
}

/// Keychain seed for a named actor: distinct per name under one CLI seed.
pub fn derive_actor_seed(seed: u64, name: &str) -> [u8; 32] {
    let mut input = Vec::with_capacity(24 + name.len() + 8);
    input.extend_from_slice(b"zkdid-cli/actor-seed");
    input.extend_from_slice(name.as_bytes());
    input.extend_from_slice(&seed.to_be_bytes());
    *byte_hash(&input).as_bytes()
}

/// Deterministic RNG for one command invocation, domain-separated by a
/// short tag so distinct commands draw distinct streams.
pub fn command_rng(seed: u64, tag: &str) -> ChaCha20Rng {
    let mut input = Vec::with_capacity(20 + tag.len() + 8);
    input.extend_from_slice(b"zkdid-cli/rng");
    input.extend_from_slice(tag.as_bytes());
    input.extend_from_slice(&seed.to_be_bytes());
    ChaCha20Rng::from_seed(*byte_hash(&input).as_bytes())
}
