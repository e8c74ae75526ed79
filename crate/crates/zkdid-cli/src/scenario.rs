//! Scripted multi-party scenarios: a line-oriented language for driving
//! issuers, holders, a verifier and the ledger from one deterministic
//! seed, with assertions that decide the process exit code.
//!
//! One action per line; `#` starts a comment line; blank lines are
//! skipped. A `.json` script is the same step language carried as a
//! JSON string array under `{"v": "zkdid-scn/1", "steps": [...]}`.
//!
//! Verbs:
//!
//! ```text
//! config key=value ...             first step only; keys: tree-depth,
//!                                  mimc-rounds, range-bits, key-height,
//!                                  timelock, queries
//! schema <tag> <attribute>...
//! create-did <name> [role=issuer|holder]
//! new-key <name>
//! issue <issuer> <holder> <schema> [as=<id>] <attr>=<value>...
//! revoke <issuer> <credential-id | slot=<n>>
//! request <schema> <attribute> <threshold> from=<issuer> [as=<id>]
//! present <request-id> by=<holder> [as=<id>]
//! verify <request-id> <presentation-id>
//! assert-accept
//! assert-reject reason=<token>
//! assert-state registered <name> | height <n> | epoch <issuer> <n>
//!            | key-root <name> <staged-key> | recovery <name> <status>
//!            | credentials <holder> <n>
//! configure-guardians <subject> guardians=<a,b,...> threshold=<n>
//! recover-initiate <subject> by=<guardian> new-keys=<staged-key>
//! recover-approve <subject> by=<guardian>
//! recover-cancel <subject>
//! recover-finalize <subject> by=<name>
//! tick [n]
//! ```
//!
//! Any action verb accepts `expect=error`, inverting its success: the
//! step passes only if the action is refused. Every successful action
//! that touches the ledger seals one block, so heights advance in lock
//! step with the script; `tick` appends empty blocks (logical time).
//!
//! Recovery verbs sign with wallet keys, so subjects and guardians must
//! be holder actors; issuer DIDs may still appear in guardian lists.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use zkdid_core::protocol::{
    Decision, HolderWallet, IssuerContext, Presentation, PresentationRequest, RejectReason,
    SchemaRegistry, SystemConfig, VerifierContext,
};
use zkdid_core::vdr::RecoveryStatus;
use zkdid_core::{Did, Digest32, Keychain, Vdr};

/// A script that failed to parse; `line` is 1-based.
#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum CredRef {
    Id(String),
    Slot(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum StateAssert {
    Registered { name: String },
    Height { value: u64 },
    Epoch { issuer: String, value: u64 },
    KeyRoot { name: String, staged: String },
    Recovery { name: String, status: String },
    Credentials { holder: String, count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Verb {
    Config(Vec<(String, String)>),
    Schema {
        tag: String,
        attributes: Vec<String>,
    },
    CreateDid {
        name: String,
        issuer: bool,
    },
    NewKey {
        name: String,
    },
    Issue {
        issuer: String,
        holder: String,
        schema: String,
        id: Option<String>,
        attributes: Vec<(String, u64)>,
    },
    Revoke {
        issuer: String,
        credential: CredRef,
    },
    Request {
        schema: String,
        attribute: String,
        threshold: u32,
        issuer: String,
        id: Option<String>,
    },
    Present {
        request: String,
        holder: String,
        id: Option<String>,
    },
    Verify {
        request: String,
        presentation: String,
    },
    AssertAccept,
    AssertReject {
        reason: RejectReason,
    },
    AssertState(StateAssert),
    ConfigureGuardians {
        subject: String,
        guardians: Vec<String>,
        threshold: u32,
    },
    RecoverInitiate {
        subject: String,
        by: String,
        new_keys: String,
    },
    RecoverApprove {
        subject: String,
        by: String,
    },
    RecoverCancel {
        subject: String,
    },
    RecoverFinalize {
        subject: String,
        by: String,
    },
    Tick {
        count: u64,
    },
}

#[derive(Clone, Debug)]
struct Step {
    line: usize,
    text: String,
    verb: Verb,
    expect_error: bool,
}

/// A parsed script, ready to run.
#[derive(Debug)]
pub struct Script {
    steps: Vec<Step>,
}

/// Outcome of one run: the full report text and the failure count.
pub struct RunOutcome {
    pub report: String,
    pub steps: usize,
    pub failures: usize,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures == 0 {
            0
        } else {
            1
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// Splits tokens into leading positionals and `key=value` arguments.
fn split_args(tokens: &[&str]) -> (Vec<String>, Vec<(String, String)>) {
    let mut positional = Vec::new();
    let mut pairs = Vec::new();
    for t in tokens {
        match t.split_once('=') {
            Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
            None => positional.push(t.to_string()),
        }
    }
    (positional, pairs)
}

fn take_pair(pairs: &mut Vec<(String, String)>, key: &str) -> Option<String> {
    let found = pairs.iter().position(|(k, _)| k == key)?;
    Some(pairs.remove(found).1)
}

fn parse_count<T: std::str::FromStr>(line: usize, what: &str, raw: &str) -> Result<T, ParseError> {
    raw.parse()
        .map_err(|_| err(line, format!("bad {what}: {raw:?}")))
}

fn parse_step(line: usize, text: &str) -> Result<Step, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let verb_word = tokens[0];
    let (pos, mut pairs) = split_args(&tokens[1..]);

    // `expect=error` is honored uniformly; pull it out first.
    let expect_error = match take_pair(&mut pairs, "expect").as_deref() {
        None | Some("ok") => false,
        Some("error") => true,
        Some(other) => return Err(err(line, format!("bad expect value {other:?}"))),
    };

    let verb = match verb_word {
        "config" => {
            if !pos.is_empty() {
                return Err(err(line, "config takes key=value pairs only"));
            }
            Verb::Config(std::mem::take(&mut pairs))
        }
        "schema" => {
            if pos.len() < 2 {
                return Err(err(line, "schema needs a tag and at least one attribute"));
            }
            Verb::Schema {
                tag: pos[0].clone(),
                attributes: pos[1..].to_vec(),
            }
        }
        "create-did" => {
            if pos.len() != 1 {
                return Err(err(line, "create-did needs exactly one name"));
            }
            let issuer = match take_pair(&mut pairs, "role").as_deref() {
                None | Some("holder") => false,
                Some("issuer") => true,
                Some(other) => return Err(err(line, format!("unknown role {other:?}"))),
            };
            Verb::CreateDid {
                name: pos[0].clone(),
                issuer,
            }
        }
        "new-key" => {
            if pos.len() != 1 {
                return Err(err(line, "new-key needs exactly one name"));
            }
            Verb::NewKey {
                name: pos[0].clone(),
            }
        }
        "issue" => {
            if pos.len() != 3 {
                return Err(err(line, "issue needs <issuer> <holder> <schema>"));
            }
            let id = take_pair(&mut pairs, "as");
            let mut attributes = Vec::new();
            for (k, v) in pairs.drain(..) {
                attributes.push((k, parse_count(line, "attribute value", &v)?));
            }
            if attributes.is_empty() {
                return Err(err(line, "issue needs at least one attribute=value"));
            }
            Verb::Issue {
                issuer: pos[0].clone(),
                holder: pos[1].clone(),
                schema: pos[2].clone(),
                id,
                attributes,
            }
        }
        "revoke" => {
            let slot = take_pair(&mut pairs, "slot");
            let credential = match (pos.len(), slot) {
                (2, None) => CredRef::Id(pos[1].clone()),
                (1, Some(slot)) => CredRef::Slot(parse_count(line, "slot", &slot)?),
                _ => {
                    return Err(err(
                        line,
                        "revoke needs <issuer> and a credential id or slot=<n>",
                    ))
                }
            };
            Verb::Revoke {
                issuer: pos[0].clone(),
                credential,
            }
        }
        "request" => {
            if pos.len() != 3 {
                return Err(err(line, "request needs <schema> <attribute> <threshold>"));
            }
            let issuer =
                take_pair(&mut pairs, "from").ok_or_else(|| err(line, "request needs from=<issuer>"))?;
            Verb::Request {
                schema: pos[0].clone(),
                attribute: pos[1].clone(),
                threshold: parse_count(line, "threshold", &pos[2])?,
                issuer,
                id: take_pair(&mut pairs, "as"),
            }
        }
        "present" => {
            if pos.len() != 1 {
                return Err(err(line, "present needs a request id"));
            }
            let holder =
                take_pair(&mut pairs, "by").ok_or_else(|| err(line, "present needs by=<holder>"))?;
            Verb::Present {
                request: pos[0].clone(),
                holder,
                id: take_pair(&mut pairs, "as"),
            }
        }
        "verify" => {
            if pos.len() != 2 {
                return Err(err(line, "verify needs <request-id> <presentation-id>"));
            }
            Verb::Verify {
                request: pos[0].clone(),
                presentation: pos[1].clone(),
            }
        }
        "assert-accept" => Verb::AssertAccept,
        "assert-reject" => {
            let token = take_pair(&mut pairs, "reason")
                .ok_or_else(|| err(line, "assert-reject needs reason=<token>"))?;
            let reason = RejectReason::from_token(&token)
                .ok_or_else(|| err(line, format!("unknown reject reason {token:?}")))?;
            Verb::AssertReject { reason }
        }
        "assert-state" => {
            let assert = match pos.first().map(String::as_str) {
                Some("registered") if pos.len() == 2 => StateAssert::Registered {
                    name: pos[1].clone(),
                },
                Some("height") if pos.len() == 2 => StateAssert::Height {
                    value: parse_count(line, "height", &pos[1])?,
                },
                Some("epoch") if pos.len() == 3 => StateAssert::Epoch {
                    issuer: pos[1].clone(),
                    value: parse_count(line, "epoch", &pos[2])?,
                },
                Some("key-root") if pos.len() == 3 => StateAssert::KeyRoot {
                    name: pos[1].clone(),
                    staged: pos[2].clone(),
                },
                Some("recovery") if pos.len() == 3 => {
                    if !["none", "pending", "locked"].contains(&pos[2].as_str()) {
                        return Err(err(line, "recovery status is none|pending|locked"));
                    }
                    StateAssert::Recovery {
                        name: pos[1].clone(),
                        status: pos[2].clone(),
                    }
                }
                Some("credentials") if pos.len() == 3 => StateAssert::Credentials {
                    holder: pos[1].clone(),
                    count: parse_count(line, "count", &pos[2])?,
                },
                _ => return Err(err(line, "unknown assert-state form")),
            };
            Verb::AssertState(assert)
        }
        "configure-guardians" => {
            if pos.len() != 1 {
                return Err(err(line, "configure-guardians needs a subject"));
            }
            let guardians = take_pair(&mut pairs, "guardians")
                .ok_or_else(|| err(line, "configure-guardians needs guardians=<a,b,...>"))?;
            let threshold = take_pair(&mut pairs, "threshold")
                .ok_or_else(|| err(line, "configure-guardians needs threshold=<n>"))?;
            Verb::ConfigureGuardians {
                subject: pos[0].clone(),
                guardians: guardians.split(',').map(str::to_string).collect(),
                threshold: parse_count(line, "threshold", &threshold)?,
            }
        }
        "recover-initiate" => {
            if pos.len() != 1 {
                return Err(err(line, "recover-initiate needs a subject"));
            }
            Verb::RecoverInitiate {
                subject: pos[0].clone(),
                by: take_pair(&mut pairs, "by")
                    .ok_or_else(|| err(line, "recover-initiate needs by=<guardian>"))?,
                new_keys: take_pair(&mut pairs, "new-keys")
                    .ok_or_else(|| err(line, "recover-initiate needs new-keys=<staged-key>"))?,
            }
        }
        "recover-approve" => {
            if pos.len() != 1 {
                return Err(err(line, "recover-approve needs a subject"));
            }
            Verb::RecoverApprove {
                subject: pos[0].clone(),
                by: take_pair(&mut pairs, "by")
                    .ok_or_else(|| err(line, "recover-approve needs by=<guardian>"))?,
            }
        }
        "recover-cancel" => {
            if pos.len() != 1 {
                return Err(err(line, "recover-cancel needs a subject"));
            }
            Verb::RecoverCancel {
                subject: pos[0].clone(),
            }
        }
        "recover-finalize" => {
            if pos.len() != 1 {
                return Err(err(line, "recover-finalize needs a subject"));
            }
            Verb::RecoverFinalize {
                subject: pos[0].clone(),
                by: take_pair(&mut pairs, "by")
                    .ok_or_else(|| err(line, "recover-finalize needs by=<name>"))?,
            }
        }
        "tick" => {
            let count = match pos.len() {
                0 => 1,
                1 => parse_count(line, "tick count", &pos[0])?,
                _ => return Err(err(line, "tick takes at most one count")),
            };
            Verb::Tick { count }
        }
        other => return Err(err(line, format!("unknown verb {other:?}"))),
    };

    if !pairs.is_empty() {
        let keys: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
        return Err(err(line, format!("unexpected arguments: {}", keys.join(", "))));
    }
    Ok(Step {
        line,
        text: tokens.join(" "),
        verb,
        expect_error,
    })
}

/// Parses plain-text scripts (one action per line).
pub fn parse(text: &str) -> Result<Script, ParseError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        steps.push(parse_step(line, trimmed)?);
    }
    check_config_position(&steps)?;
    Ok(Script { steps })
}

/// Parses the JSON carrier: the same step language in a string array.
pub fn parse_json(text: &str) -> Result<Script, ParseError> {
    let v: Value = serde_json::from_str(text).map_err(|e| err(0, format!("invalid JSON: {e}")))?;
    if v.get("v").and_then(Value::as_str) != Some("zkdid-scn/1") {
        return Err(err(0, "expected {\"v\": \"zkdid-scn/1\", ...}"));
    }
    let Some(items) = v.get("steps").and_then(Value::as_array) else {
        return Err(err(0, "missing steps array"));
    };
    let mut steps = Vec::new();
    for (idx, item) in items.iter().enumerate() {
        let line = idx + 1;
        let Some(s) = item.as_str() else {
            return Err(err(line, "steps must be strings"));
        };
        let trimmed = s.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        steps.push(parse_step(line, trimmed)?);
    }
    check_config_position(&steps)?;
    Ok(Script { steps })
}

fn check_config_position(steps: &[Step]) -> Result<(), ParseError> {
    for (i, step) in steps.iter().enumerate() {
        if matches!(step.verb, Verb::Config(_)) && i != 0 {
            return Err(err(step.line, "config must be the first step"));
        }
    }
    Ok(())
}

fn config_from_pairs(line: usize, pairs: &[(String, String)]) -> Result<SystemConfig, ParseError> {
    let mut config = SystemConfig::standard();
    for (k, v) in pairs {
        match k.as_str() {
            "tree-depth" => config.tree_depth = parse_count(line, "tree-depth", v)?,
            "mimc-rounds" => config.mimc_rounds = parse_count(line, "mimc-rounds", v)?,
            "range-bits" => config.range_bits = parse_count(line, "range-bits", v)?,
            "key-height" => config.key_height = parse_count(line, "key-height", v)?,
            "timelock" => config.timelock_blocks = parse_count(line, "timelock", v)?,
            "queries" => config.num_queries = parse_count(line, "queries", v)?,
            other => return Err(err(line, format!("unknown config key {other:?}"))),
        }
    }
    Ok(config)
}

enum ActorCtx {
    Issuer(IssuerContext),
    Holder(HolderWallet),
}

impl ActorCtx {
    fn did(&self) -> Did {
        match self {
            ActorCtx::Issuer(i) => i.did,
            ActorCtx::Holder(h) => h.did,
        }
    }

    fn key_root(&self) -> Digest32 {
        match self {
            ActorCtx::Issuer(i) => i.key_root(),
            ActorCtx::Holder(h) => h.key_root(),
        }
    }
}

/// A step-level failure with a stable, seed-independent code.
struct StepError(String);

impl StepError {
    fn new(code: impl Into<String>) -> StepError {
        StepError(code.into())
    }
}

impl From<zkdid_core::protocol::ProtocolError> for StepError {
    fn from(e: zkdid_core::protocol::ProtocolError) -> StepError {
        StepError(crate::state::protocol_code(&e).to_string())
    }
}

struct Exec {
    config: SystemConfig,
    vdr: Vdr,
    schemas: SchemaRegistry,
    used_nonces: BTreeSet<[u8; 16]>,
    actors: BTreeMap<String, ActorCtx>,
    staged: BTreeMap<String, Keychain>,
    pending_new_keys: BTreeMap<String, String>,
    credentials: BTreeMap<String, (String, u32)>, // id -> (issuer name, slot)
    requests: BTreeMap<String, PresentationRequest>,
    presentations: BTreeMap<String, Presentation>,
    last_decision: Option<Decision>,
    next_ids: [u64; 3], // credential, request, presentation counters
    rng: ChaCha20Rng,
}

impl Exec {
    fn new(config: SystemConfig, seed: u64) -> Exec {
        let vdr = Vdr::with_timelock(config.timelock_blocks);
        Exec {
            config,
            vdr,
            schemas: SchemaRegistry::new(),
            used_nonces: BTreeSet::new(),
            actors: BTreeMap::new(),
            staged: BTreeMap::new(),
            pending_new_keys: BTreeMap::new(),
            credentials: BTreeMap::new(),
            requests: BTreeMap::new(),
            presentations: BTreeMap::new(),
            last_decision: None,
            next_ids: [1, 1, 1],
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Next unused auto id; skips ids a script claimed with `as=`.
    fn fresh_id(&mut self, kind: usize, prefix: &str) -> String {
        loop {
            let id = format!("{prefix}{}", self.next_ids[kind]);
            self.next_ids[kind] += 1;
            let taken = match kind {
                0 => self.credentials.contains_key(&id),
                1 => self.requests.contains_key(&id),
                _ => self.presentations.contains_key(&id),
            };
            if !taken {
                return id;
            }
        }
    }

    fn fresh_seed(&mut self) -> [u8; 32] {
        let mut s = [0u8; 32];
        self.rng.fill_bytes(&mut s);
        s
    }

    fn actor(&self, name: &str) -> Result<&ActorCtx, StepError> {
        self.actors
            .get(name)
            .ok_or_else(|| StepError::new("unknown-actor"))
    }

    /// Removes an issuer from the actor map for a mutating operation;
    /// the caller must reinsert it via [`Exec::put`].
    fn take_issuer(&mut self, name: &str) -> Result<IssuerContext, StepError> {
        match self.actors.remove(name) {
            Some(ActorCtx::Issuer(ctx)) => Ok(ctx),
            Some(other) => {
                self.actors.insert(name.to_string(), other);
                Err(StepError::new("not-an-issuer"))
            }
            None => Err(StepError::new("unknown-actor")),
        }
    }

    fn take_holder(&mut self, name: &str) -> Result<HolderWallet, StepError> {
        match self.actors.remove(name) {
            Some(ActorCtx::Holder(wallet)) => Ok(wallet),
            Some(other) => {
                self.actors.insert(name.to_string(), other);
                Err(StepError::new("not-a-holder"))
            }
            None => Err(StepError::new("unknown-actor")),
        }
    }

    fn put(&mut self, name: &str, actor: ActorCtx) {
        self.actors.insert(name.to_string(), actor);
    }

    fn staged_root(&self, name: &str) -> Result<Digest32, StepError> {
        self.staged
            .get(name)
            .map(Keychain::root)
            .ok_or_else(|| StepError::new("unknown-key"))
    }

    /// Runs one action verb; `Ok(note)` carries extra report text.
    fn run_verb(&mut self, verb: &Verb) -> Result<String, StepError> {
        match verb {
            Verb::Config(_) => Ok(String::new()), // consumed before execution
            Verb::Schema { tag, attributes } => {
                let names: Vec<&str> = attributes.iter().map(String::as_str).collect();
                self.schemas.register(tag, &names)?;
                Ok(String::new())
            }
            Verb::CreateDid { name, issuer } => {
                if self.actors.contains_key(name) {
                    return Err(StepError::new("duplicate-actor"));
                }
                let seed = self.fresh_seed();
                if *issuer {
                    let mut ctx = IssuerContext::new(self.config.clone(), seed)?;
                    ctx.register_on(&mut self.vdr)?;
                    self.put(name, ActorCtx::Issuer(ctx));
                } else {
                    let mut wallet = HolderWallet::new(self.config.clone(), seed)?;
                    wallet.register_on(&mut self.vdr)?;
                    self.put(name, ActorCtx::Holder(wallet));
                }
                self.vdr.tick();
                Ok(String::new())
            }
            Verb::NewKey { name } => {
                if self.staged.contains_key(name) {
                    return Err(StepError::new("duplicate-key"));
                }
                let seed = self.fresh_seed();
                let keys = Keychain::generate(seed, self.config.key_height)
                    .map_err(|_| StepError::new("identity"))?;
                self.staged.insert(name.clone(), keys);
                Ok(String::new())
            }
            Verb::Issue {
                issuer,
                holder,
                schema,
                id,
                attributes,
            } => {
                let id = match id {
                    Some(id) => id.clone(),
                    None => self.fresh_id(0, "c"),
                };
                if self.credentials.contains_key(&id) {
                    return Err(StepError::new("duplicate-id"));
                }
                let bound = 1u64 << self.config.range_bits.min(32);
                let mut attrs = Vec::with_capacity(attributes.len());
                for (name, value) in attributes {
                    if *value >= bound {
                        return Err(StepError::new("attribute-out-of-range"));
                    }
                    attrs.push((name.clone(), *value as u32));
                }
                let holder_did = match self.actor(holder)? {
                    ActorCtx::Holder(w) => w.did,
                    ActorCtx::Issuer(_) => return Err(StepError::new("not-a-holder")),
                };
                let mut ctx = self.take_issuer(issuer)?;
                let outcome = ctx.issue(
                    &mut self.vdr,
                    &self.schemas,
                    holder_did,
                    schema,
                    &attrs,
                    &mut self.rng,
                );
                self.put(issuer, ActorCtx::Issuer(ctx));
                let credential = outcome?;
                let slot = credential.content.slot;

                let mut wallet = self.take_holder(holder)?;
                let accepted = wallet.add_credential(credential, &self.vdr);
                self.put(holder, ActorCtx::Holder(wallet));
                accepted?;
                self.vdr.tick();
                self.credentials.insert(id.clone(), (issuer.clone(), slot));
                Ok(format!(" -> {id}"))
            }
            Verb::Revoke { issuer, credential } => {
                let slot = match credential {
                    CredRef::Slot(slot) => *slot,
                    CredRef::Id(id) => {
                        let (owner, slot) = self
                            .credentials
                            .get(id)
                            .ok_or_else(|| StepError::new("unknown-id"))?;
                        if owner != issuer {
                            return Err(StepError::new("wrong-issuer"));
                        }
                        *slot
                    }
                };
                let mut ctx = self.take_issuer(issuer)?;
                let outcome = ctx.revoke(&mut self.vdr, slot);
                self.put(issuer, ActorCtx::Issuer(ctx));
                outcome?;
                self.vdr.tick();
                Ok(String::new())
            }
            Verb::Request {
                schema,
                attribute,
                threshold,
                issuer,
                id,
            } => {
                let id = match id {
                    Some(id) => id.clone(),
                    None => self.fresh_id(1, "r"),
                };
                if self.requests.contains_key(&id) {
                    return Err(StepError::new("duplicate-id"));
                }
                let issuer_did = self.actor(issuer)?.did();
                let verifier = VerifierContext::new(self.config.clone(), self.schemas.clone());
                let request =
                    verifier.make_request(schema, attribute, *threshold, issuer_did, &mut self.rng)?;
                self.requests.insert(id.clone(), request);
                Ok(format!(" -> {id}"))
            }
            Verb::Present {
                request,
                holder,
                id,
            } => {
                let id = match id {
                    Some(id) => id.clone(),
                    None => self.fresh_id(2, "p"),
                };
                if self.presentations.contains_key(&id) {
                    return Err(StepError::new("duplicate-id"));
                }
                let req = self
                    .requests
                    .get(request)
                    .cloned()
                    .ok_or_else(|| StepError::new("unknown-id"))?;
                let Some(ActorCtx::Holder(wallet)) = self.actors.get(holder) else {
                    return Err(StepError::new("not-a-holder"));
                };
                // The handshake a real holder would perform: find the
                // matching credential, then ask its issuer for a fresh
                // membership witness.
                let credential = wallet
                    .credentials()
                    .iter()
                    .rev()
                    .find(|c| c.content.schema == req.schema && c.content.issuer == req.issuer)
                    .ok_or_else(|| StepError::new("no-matching-credential"))?;
                let issuer_ctx = self
                    .actors
                    .values()
                    .find_map(|a| match a {
                        ActorCtx::Issuer(ctx) if ctx.did == req.issuer => Some(ctx),
                        _ => None,
                    })
                    .ok_or_else(|| StepError::new("unknown-actor"))?;
                let witness = issuer_ctx.witness(credential.content.slot)?;
                let presentation =
                    wallet.present(&req, &self.schemas, &self.vdr, &witness, &mut self.rng)?;
                self.presentations.insert(id.clone(), presentation);
                Ok(format!(" -> {id}"))
            }
            Verb::Verify {
                request,
                presentation,
            } => {
                let req = self
                    .requests
                    .get(request)
                    .ok_or_else(|| StepError::new("unknown-id"))?;
                let pres = self
                    .presentations
                    .get(presentation)
                    .ok_or_else(|| StepError::new("unknown-id"))?;
                let mut verifier = VerifierContext::from_parts(
                    self.config.clone(),
                    self.schemas.clone(),
                    std::mem::take(&mut self.used_nonces),
                );
                let decision = verifier.verify_presentation(&self.vdr, req, pres);
                self.used_nonces = verifier.used_nonces().clone();
                self.last_decision = Some(decision);
                Ok(format!(" -> {decision}"))
            }
            Verb::AssertAccept => match self.last_decision {
                Some(Decision::Accept) => Ok(String::new()),
                Some(other) => Err(StepError(format!("last decision was {other}"))),
                None => Err(StepError::new("no decision yet")),
            },
            Verb::AssertReject { reason } => match self.last_decision {
                Some(Decision::Reject(r)) if r == *reason => Ok(String::new()),
                Some(other) => Err(StepError(format!("last decision was {other}"))),
                None => Err(StepError::new("no decision yet")),
            },
            Verb::AssertState(assert) => self.check_state(assert).map(|()| String::new()),
            Verb::ConfigureGuardians {
                subject,
                guardians,
                threshold,
            } => {
                let mut dids = Vec::with_capacity(guardians.len());
                for g in guardians {
                    dids.push(self.actor(g)?.did());
                }
                let mut wallet = self.take_holder(subject)?;
                let outcome = wallet.configure_guardians(&mut self.vdr, dids, *threshold);
                self.put(subject, ActorCtx::Holder(wallet));
                outcome?;
                self.vdr.tick();
                Ok(String::new())
            }
            Verb::RecoverInitiate {
                subject,
                by,
                new_keys,
            } => {
                let subject_did = self.actor(subject)?.did();
                let root = self.staged_root(new_keys)?;
                let mut wallet = self.take_holder(by)?;
                let outcome = wallet.initiate_recovery(&mut self.vdr, subject_did, root);
                self.put(by, ActorCtx::Holder(wallet));
                outcome?;
                self.vdr.tick();
                self.pending_new_keys
                    .insert(subject.clone(), new_keys.clone());
                Ok(String::new())
            }
            Verb::RecoverApprove { subject, by } => {
                let subject_did = self.actor(subject)?.did();
                let staged_name = self
                    .pending_new_keys
                    .get(subject)
                    .cloned()
                    .ok_or_else(|| StepError::new("no-pending-recovery"))?;
                let root = self.staged_root(&staged_name)?;
                let mut wallet = self.take_holder(by)?;
                let outcome = wallet.approve_recovery(&mut self.vdr, subject_did, root);
                self.put(by, ActorCtx::Holder(wallet));
                outcome?;
                self.vdr.tick();
                Ok(String::new())
            }
            Verb::RecoverCancel { subject } => {
                let mut wallet = self.take_holder(subject)?;
                let outcome = wallet.cancel_recovery(&mut self.vdr);
                self.put(subject, ActorCtx::Holder(wallet));
                outcome?;
                self.vdr.tick();
                self.pending_new_keys.remove(subject);
                Ok(String::new())
            }
            Verb::RecoverFinalize { subject, by } => {
                let subject_did = self.actor(subject)?.did();
                let mut wallet = self.take_holder(by)?;
                let outcome = wallet.finalize_recovery(&mut self.vdr, subject_did);
                self.put(by, ActorCtx::Holder(wallet));
                outcome?;
                self.vdr.tick();
                // The subject's wallet adopts the staged chain.
                if let Some(staged_name) = self.pending_new_keys.remove(subject) {
                    let keys = self.staged.get(&staged_name).cloned();
                    if let (Some(keys), Some(ActorCtx::Holder(wallet))) =
                        (keys, self.actors.get_mut(subject))
                    {
                        wallet.adopt_keys(keys);
                    }
                }
                Ok(String::new())
            }
            Verb::Tick { count } => {
                for _ in 0..*count {
                    self.vdr.tick();
                }
                Ok(String::new())
            }
        }
    }

    fn check_state(&self, assert: &StateAssert) -> Result<(), StepError> {
        match assert {
            StateAssert::Registered { name } => {
                let did = self.actor(name)?.did();
                if self.vdr.is_registered(&did) {
                    Ok(())
                } else {
                    Err(StepError::new("not registered"))
                }
            }
            StateAssert::Height { value } => {
                if self.vdr.height() == *value {
                    Ok(())
                } else {
                    Err(StepError(format!("height is {}", self.vdr.height())))
                }
            }
            StateAssert::Epoch { issuer, value } => {
                let ActorCtx::Issuer(ctx) = self.actor(issuer)? else {
                    return Err(StepError::new("not-an-issuer"));
                };
                if ctx.accumulator().epoch() == *value {
                    Ok(())
                } else {
                    Err(StepError(format!("epoch is {}", ctx.accumulator().epoch())))
                }
            }
            StateAssert::KeyRoot { name, staged } => {
                let actual = self.actor(name)?.key_root();
                let expected = self.staged_root(staged)?;
                if actual == expected {
                    Ok(())
                } else {
                    Err(StepError::new("key root differs"))
                }
            }
            StateAssert::Recovery { name, status } => {
                let did = self.actor(name)?.did();
                let record = self
                    .vdr
                    .record(&did)
                    .ok_or_else(|| StepError::new("not registered"))?;
                let actual = match record.recovery {
                    RecoveryStatus::None => "none",
                    RecoveryStatus::Pending { .. } => "pending",
                    RecoveryStatus::TimeLocked { .. } => "locked",
                };
                if actual == status {
                    Ok(())
                } else {
                    Err(StepError(format!("recovery is {actual}")))
                }
            }
            StateAssert::Credentials { holder, count } => {
                let ActorCtx::Holder(wallet) = self.actor(holder)? else {
                    return Err(StepError::new("not-a-holder"));
                };
                let actual = wallet.credentials().len();
                if actual == *count {
                    Ok(())
                } else {
                    Err(StepError(format!("holder has {actual} credentials")))
                }
            }
        }
    }
}

/// Runs a parsed script. The report lists one line per step plus a
/// summary; it is bit-stable for a given script and seed.
pub fn run(script: &Script, seed: u64) -> RunOutcome {
    let config = match script.steps.first() {
        Some(Step {
            verb: Verb::Config(pairs),
            line,
            ..
        }) => match config_from_pairs(*line, pairs) {
            Ok(c) => c,
            // Key names are checked at parse time; bad values surface
            // here as a failing first step.
            Err(e) => {
                let report = format!(
                    "{:>3} fail  config ! {}\nsummary: 1 steps, 0 ok, 1 failed\n",
                    e.line, e.message
                );
                return RunOutcome {
                    report,
                    steps: 1,
                    failures: 1,
                };
            }
        },
        _ => SystemConfig::standard(),
    };

    let mut exec = Exec::new(config, seed);
    let mut report = String::new();
    let mut failures = 0usize;

    for step in &script.steps {
        let outcome = exec.run_verb(&step.verb);
        let is_assert = matches!(
            step.verb,
            Verb::AssertAccept | Verb::AssertReject { .. } | Verb::AssertState(_)
        );
        let (ok, note) = match (outcome, step.expect_error && !is_assert) {
            (Ok(note), false) => (true, note),
            (Ok(_), true) => (false, " ! expected an error".to_string()),
            (Err(StepError(code)), true) => (true, format!(" -> error:{code}")),
            (Err(StepError(code)), false) => (false, format!(" ! {code}")),
        };
        if !ok {
            failures += 1;
        }
        let status = if ok { "ok  " } else { "fail" };
        report.push_str(&format!("{:>3} {status}  {}{}\n", step.line, step.text, note));
    }
    report.push_str(&format!(
        "summary: {} steps, {} ok, {} failed\n",
        script.steps.len(),
        script.steps.len() - failures,
        failures
    ));
    RunOutcome {
        report,
        steps: script.steps.len(),
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str =
        "config tree-depth=2 mimc-rounds=64 range-bits=32 key-height=3 timelock=5 queries=20";

    #[test]
    fn empty_script_passes() {
        let script = parse("").unwrap();
        let outcome = run(&script, 1);
        assert_eq!(outcome.failures, 0);
        assert_eq!(outcome.steps, 0);
        assert_eq!(outcome.exit_code(), 0);
        assert_eq!(outcome.report, "summary: 0 steps, 0 ok, 0 failed\n");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "create-did alice\n\n# comment\nfrobnicate bob\n";
        let e = parse(text).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("frobnicate"));

        let e = parse("create-did alice\nconfig queries=2\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("first step"));

        let e = parse("assert-reject reason=not-a-reason\n").unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn issue_present_verify_flow() {
        let text = format!(
            "{TOY}\n\
             create-did bank role=issuer\n\
             create-did alice\n\
             issue bank alice credit/v1 creditScore=750 as=c1\n\
             request credit/v1 creditScore 700 from=bank as=r1\n\
             present r1 by=alice as=p1\n\
             verify r1 p1\n\
             assert-accept\n\
             verify r1 p1\n\
             assert-reject reason=nonce-replayed\n\
             assert-state epoch bank 1\n\
             assert-state credentials alice 1\n\
             assert-state registered alice\n"
        );
        let script = parse(&text).unwrap();
        let outcome = run(&script, 42);
        assert_eq!(outcome.failures, 0, "report:\n{}", outcome.report);
        assert!(outcome.report.contains("verify r1 p1 -> accept"));
        assert!(outcome.report.contains("-> reject:nonce-replayed"));
    }

    #[test]
    fn expected_errors_flip_outcomes() {
        let text = format!(
            "{TOY}\n\
             create-did bank role=issuer\n\
             create-did alice\n\
             issue bank alice credit/v1 creditScore=640 as=c1\n\
             request credit/v1 creditScore 700 from=bank as=r1\n\
             present r1 by=alice expect=error\n\
             present r1 by=alice as=p1\n"
        );
        let script = parse(&text).unwrap();
        let outcome = run(&script, 42);
        // The expected failure passes; the unexpected one fails.
        assert_eq!(outcome.failures, 1, "report:\n{}", outcome.report);
        assert!(outcome.report.contains("-> error:unprovable-statement"));
        assert!(outcome.report.contains(" ! unprovable-statement"));
    }

    #[test]
    fn revocation_and_stale_root() {
        let text = format!(
            "{TOY}\n\
             create-did bank role=issuer\n\
             create-did alice\n\
             issue bank alice credit/v1 creditScore=750 as=c1\n\
             request credit/v1 creditScore 700 from=bank as=r1\n\
             present r1 by=alice as=p1\n\
             revoke bank c1\n\
             verify r1 p1\n\
             assert-reject reason=stale-root\n\
             present r1 by=alice expect=error\n\
             assert-state epoch bank 2\n"
        );
        let script = parse(&text).unwrap();
        let outcome = run(&script, 9);
        assert_eq!(outcome.failures, 0, "report:\n{}", outcome.report);
        assert!(outcome.report.contains("-> error:revoked"));
    }

    #[test]
    fn recovery_flow_with_timelock() {
        let text = format!(
            "{TOY}\n\
             create-did carol\n\
             create-did g1\n\
             create-did g2\n\
             create-did g3\n\
             configure-guardians carol guardians=g1,g2,g3 threshold=2\n\
             new-key fresh\n\
             recover-initiate carol by=g1 new-keys=fresh\n\
             assert-state recovery carol pending\n\
             recover-approve carol by=g2\n\
             assert-state recovery carol locked\n\
             recover-finalize carol by=g1 expect=error\n\
             tick 5\n\
             recover-finalize carol by=g1\n\
             assert-state recovery carol none\n\
             assert-state key-root carol fresh\n"
        );
        let script = parse(&text).unwrap();
        let outcome = run(&script, 5);
        assert_eq!(outcome.failures, 0, "report:\n{}", outcome.report);
        assert!(outcome.report.contains("-> error:timelock-not-elapsed"));
    }

    #[test]
    fn reports_are_deterministic() {
        let text = format!(
            "{TOY}\n\
             create-did bank role=issuer\n\
             create-did alice\n\
             issue bank alice credit/v1 creditScore=750\n\
             request credit/v1 creditScore 700 from=bank\n\
             present r1 by=alice\n\
             verify r1 p1\n\
             assert-accept\n"
        );
        let script = parse(&text).unwrap();
        let a = run(&script, 77);
        let script2 = parse(&text).unwrap();
        let b = run(&script2, 77);
        assert_eq!(a.report, b.report);
        assert_eq!(a.failures, 0, "report:\n{}", a.report);

        let c = run(&parse(&text).unwrap(), 78);
        assert_eq!(c.failures, 0, "different seed still passes");
    }

    #[test]
    fn json_scripts_use_the_same_grammar() {
        let doc =
            r#"{"v":"zkdid-scn/1","steps":["create-did alice","assert-state registered alice"]}"#;
        let script = parse_json(doc).unwrap();
        let outcome = run(&script, 3);
        assert_eq!(outcome.failures, 0, "report:\n{}", outcome.report);

        assert!(parse_json("{}").is_err());
        assert!(parse_json(r#"{"v":"zkdid-scn/1","steps":[42]}"#).is_err());
    }

    #[test]
    fn attribute_range_is_enforced_at_issue() {
        let text = format!(
            "{TOY}\n\
             create-did bank role=issuer\n\
             create-did alice\n\
             issue bank alice credit/v1 creditScore=4294967296 expect=error\n"
        );
        let script = parse(&text).unwrap();
        let outcome = run(&script, 1);
        assert_eq!(outcome.failures, 0, "report:\n{}", outcome.report);
        assert!(outcome.report.contains("-> error:attribute-out-of-range"));
    }
}
