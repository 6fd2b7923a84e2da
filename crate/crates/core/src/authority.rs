//! CA state machine: admission, append, cosignature quorum, landmarks and
//! revocation. Transport and cosigner I/O live with the caller.
//!
//! Issuance is split in two so cosignatures can be gathered concurrently:
//! [`Authority::begin_issue`] appends the entry under a persisted pending
//! marker, and [`Authority::finish_issue`] either returns the certificate or
//! revokes the index and fails closed.
//!
//! A data directory holds `log/` (see [`MerkleLog::open`]), `entries.jsonl`
//! (one issued entry and key per line, in index order), `state.json`
//! (landmarks, revocations, latest cosigned checkpoint) and, while an
//! issuance is in flight, `pending.json`.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{hex_bytes, Cosignature, EncodeError, MtcCertificate, MtcProof, TbsCertEntry};
use crate::cosigner::evaluate_policy;
use crate::landmark::{max_landmarks, LandmarkRecord, LandmarkSchedule, LandmarkSequence, SignedCheckpoint};
use crate::merkle::{Checkpoint, ConsistencyProof, LogError, MerkleLog, SubtreeRange};
use crate::revocation::RevokedRanges;
use crate::signature::{SchemeId, SignatureRegistry};
use crate::trust::TrustConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuancePolicy {
    pub checkpoint_interval_secs: u64,
    pub landmark_interval_secs: u64,
    pub cert_lifetime_secs: u64,
    pub max_landmarks: u64,
    pub admission_token: String,
}

impl IssuancePolicy {
    /// `max_landmarks` derived from lifetime and interval.
    pub fn derived(checkpoint_interval_secs: u64, landmark_interval_secs: u64, cert_lifetime_secs: u64, admission_token: impl Into<String>) -> Self {
        IssuancePolicy {
            checkpoint_interval_secs,
            landmark_interval_secs,
            cert_lifetime_secs,
            max_landmarks: max_landmarks(cert_lifetime_secs, landmark_interval_secs),
            admission_token: admission_token.into(),
        }
    }
}

/// Body of `POST /issue-cert`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRequest {
    pub subject: String,
    #[serde(default)]
    pub dns_names: Vec<String>,
    pub scheme: SchemeId,
    #[serde(with = "hex_bytes")]
    pub public_key: Vec<u8>,
    /// Defaults to the CA's clock.
    #[serde(default)]
    pub not_before: Option<u64>,
    /// Defaults to, and may not exceed, the configured lifetime.
    #[serde(default)]
    pub lifetime_secs: Option<u64>,
    pub admission_token: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IssueError {
    #[error("admission token rejected")]
    Unauthorized,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("cosigner quorum unavailable: {got} of {need} valid cosignatures{}", if *.mirror_required { ", including a mirror" } else { "" })]
    QuorumUnavailable { got: usize, need: usize, mirror_required: bool },
    #[error("no landmark covers index {0} yet")]
    NotReady(u64),
    #[error("landmark {0} is not active")]
    UnknownLandmark(u64),
    #[error("index {0} is revoked")]
    Revoked(u64),
    #[error("index {0} was never issued")]
    UnknownIndex(u64),
    #[error("range [{lo}, {hi}) is empty or beyond the log")]
    BadRange { lo: u64, hi: u64 },
    #[error("no issuance with index {0} is pending")]
    NotPending(u64),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
}

impl From<EncodeError> for IssueError {
    fn from(e: EncodeError) -> Self {
        IssueError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedEntry {
    pub entry: TbsCertEntry,
    #[serde(with = "hex_bytes")]
    pub public_key: Vec<u8>,
}

/// An appended entry waiting for cosignatures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingIssue {
    pub index: u64,
    pub checkpoint: Checkpoint,
}

#[derive(Default, Serialize, Deserialize)]
struct PersistedState {
    schedule: LandmarkSchedule,
    revoked: RevokedRanges,
    cosigned: Option<SignedCheckpoint>,
}

pub struct Authority {
    config: TrustConfig,
    policy: IssuancePolicy,
    log: MerkleLog,
    entries: Vec<IssuedEntry>,
    schedule: LandmarkSchedule,
    revoked: RevokedRanges,
    cosigned: Option<SignedCheckpoint>,
    pending: Option<PendingIssue>,
    dir: Option<PathBuf>,
    registry: SignatureRegistry,
}

impl Authority {
    pub fn new(config: TrustConfig, policy: IssuancePolicy) -> Self {
        Authority {
            schedule: LandmarkSchedule::new(policy.max_landmarks),
            config,
            policy,
            log: MerkleLog::new(),
            entries: Vec::new(),
            revoked: RevokedRanges::new(),
            cosigned: None,
            pending: None,
            dir: None,
            registry: SignatureRegistry::new(),
        }
    }

    /// Opens the CA state in `dir`. An issuance interrupted by a crash is
    /// revoked: its certificate was never returned.
    pub fn open(dir: impl AsRef<Path>, config: TrustConfig, policy: IssuancePolicy) -> Result<Self, IssueError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut a = Authority::new(config, policy);
        a.log = MerkleLog::open(dir.join("log"))?;

        let mut entries = Vec::new();
        if let Ok(f) = fs::File::open(dir.join("entries.jsonl")) {
            for line in io::BufReader::new(f).lines() {
                let line = line?;
                match serde_json::from_str::<IssuedEntry>(&line) {
                    Ok(e) => entries.push(e),
                    Err(_) => break,
                }
            }
        }
        if (entries.len() as u64) < a.log.size() {
            return Err(IssueError::Storage(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("log has {} leaves but only {} entries are stored", a.log.size(), entries.len()),
            )));
        }
        // Entries are written before their leaf; drop any that never made it.
        entries.truncate(a.log.size() as usize);
        for (i, e) in entries.iter().enumerate() {
            if a.log.leaf(i as u64).ok() != Some(crate::codec::entry_hash(&e.entry)?) {
                return Err(IssueError::Storage(io::Error::new(io::ErrorKind::InvalidData, format!("entry {i} does not match its leaf"))));
            }
        }
        a.entries = entries;
        rewrite_entries(&dir, &a.entries)?;

        if let Ok(bytes) = fs::read(dir.join("state.json")) {
            let s: PersistedState = serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            a.schedule = s.schedule;
            a.schedule.max_landmarks = a.policy.max_landmarks;
            a.revoked = s.revoked;
            a.cosigned = s.cosigned;
        }
        a.dir = Some(dir.clone());
        if let Ok(bytes) = fs::read(dir.join("pending.json")) {
            if let Ok(p) = serde_json::from_slice::<PendingIssue>(&bytes) {
                if p.index < a.log.size() {
                    a.revoked.insert(p.index, p.index + 1).expect("non-empty");
                }
            }
            fs::remove_file(dir.join("pending.json"))?;
            a.save_state()?;
        }
        Ok(a)
    }

    pub fn config(&self) -> &TrustConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut TrustConfig {
        &mut self.config
    }

    pub fn policy(&self) -> &IssuancePolicy {
        &self.policy
    }

    pub fn log(&self) -> &MerkleLog {
        &self.log
    }

    pub fn size(&self) -> u64 {
        self.log.size()
    }

    pub fn entry(&self, index: u64) -> Option<&IssuedEntry> {
        self.entries.get(index as usize)
    }

    pub fn revoked(&self) -> &RevokedRanges {
        &self.revoked
    }

    pub fn schedule(&self) -> &LandmarkSchedule {
        &self.schedule
    }

    pub fn cosigned(&self) -> Option<&SignedCheckpoint> {
        self.cosigned.as_ref()
    }

    pub fn landmark_sequence(&self) -> LandmarkSequence {
        self.schedule.sequence(&self.revoked)
    }

    pub fn consistency_proof(&self, old: u64, new: u64) -> Result<ConsistencyProof, LogError> {
        self.log.consistency_proof(old, new)
    }

    /// Validates the request, persists a pending marker and appends the
    /// entry. The caller must follow with `finish_issue` or `fail_issue`.
    pub fn begin_issue(&mut self, req: &IssueRequest, now: u64) -> Result<PendingIssue, IssueError> {
        if !constant_time_eq(req.admission_token.as_bytes(), self.policy.admission_token.as_bytes()) {
            return Err(IssueError::Unauthorized);
        }
        if let Some(p) = &self.pending {
            return Err(IssueError::Invalid(format!("issuance of index {} still pending", p.index)));
        }
        if req.public_key.len() != req.scheme.public_key_len() {
            return Err(IssueError::Invalid(format!(
                "{} public key must be {} bytes",
                req.scheme,
                req.scheme.public_key_len()
            )));
        }
        let lifetime = req.lifetime_secs.unwrap_or(self.policy.cert_lifetime_secs);
        if lifetime == 0 || lifetime > self.policy.cert_lifetime_secs {
            return Err(IssueError::Invalid(format!("lifetime must be 1..={} seconds", self.policy.cert_lifetime_secs)));
        }
        let not_before = req.not_before.unwrap_or(now);
        let entry = TbsCertEntry::for_key(
            req.subject.clone(),
            req.dns_names.clone(),
            not_before,
            not_before + lifetime,
            req.scheme,
            &req.public_key,
        );
        let leaf = crate::codec::entry_hash(&entry)?;
        let issued = IssuedEntry { entry, public_key: req.public_key.clone() };

        let index = self.log.size();
        let pending_checkpoint = Checkpoint { root: crate::merkle::empty_root(), size: index + 1 };
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join("pending.json"), &serde_json::to_vec(&PendingIssue { index, checkpoint: pending_checkpoint }).unwrap())?;
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("entries.jsonl"))?;
            let mut line = serde_json::to_vec(&issued).unwrap();
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.log.append(leaf)?;
        self.entries.push(issued);
        let pending = PendingIssue { index, checkpoint: self.log.checkpoint() };
        self.pending = Some(pending.clone());
        Ok(pending)
    }

    /// Checks the collected cosignatures against the policy. Below quorum the
    /// index is revoked and the call fails closed.
    pub fn finish_issue(&mut self, index: u64, cosignatures: Vec<Cosignature>) -> Result<MtcCertificate, IssueError> {
        let pending = match &self.pending {
            Some(p) if p.index == index => p.clone(),
            _ => return Err(IssueError::NotPending(index)),
        };
        let cp = pending.checkpoint;
        let outcome = evaluate_policy(&cp, &cosignatures, &self.config.policy, &self.registry);
        if !outcome.accepted {
            self.fail_issue(index)?;
            return Err(IssueError::QuorumUnavailable {
                got: outcome.valid,
                need: self.config.policy.required_k,
                mirror_required: self.config.policy.require_mirror,
            });
        }
        // Keep only what the policy needs to see, in the order it verified.
        let signed = SignedCheckpoint { root: cp.root, size: cp.size, cosignatures };
        let cert = self.standalone_certificate(index, &signed)?;
        if self.cosigned.as_ref().is_none_or(|c| c.size <= cp.size) {
            self.cosigned = Some(signed);
        }
        self.pending = None;
        self.save_state()?;
        if let Some(dir) = &self.dir {
            remove_if_exists(&dir.join("pending.json"))?;
        }
        Ok(cert)
    }

    /// Abandons a pending issuance. The entry stays in the log (it cannot
    /// be removed) but its index is revoked.
    pub fn fail_issue(&mut self, index: u64) -> Result<(), IssueError> {
        match &self.pending {
            Some(p) if p.index == index => {}
            _ => return Err(IssueError::NotPending(index)),
        }
        self.revoked.insert(index, index + 1).expect("non-empty");
        self.pending = None;
        self.save_state()?;
        if let Some(dir) = &self.dir {
            remove_if_exists(&dir.join("pending.json"))?;
        }
        Ok(())
    }

    /// Records cosignatures for the current tree without issuing, e.g. to
    /// refresh the checkpoint mirrors fetch.
    pub fn record_cosigned(&mut self, signed: SignedCheckpoint) -> Result<bool, IssueError> {
        let cp = signed.checkpoint();
        if self.log.checkpoint_at(cp.size).ok() != Some(cp) {
            return Ok(false);
        }
        if !evaluate_policy(&cp, &signed.cosignatures, &self.config.policy, &self.registry).accepted {
            return Ok(false);
        }
        if self.cosigned.as_ref().is_none_or(|c| c.size <= cp.size) {
            self.cosigned = Some(signed);
            self.save_state()?;
        }
        Ok(true)
    }

    /// Standalone certificate for `index` against a cosigned checkpoint.
    pub fn standalone_certificate(&self, index: u64, signed: &SignedCheckpoint) -> Result<MtcCertificate, IssueError> {
        let issued = self.entry(index).ok_or(IssueError::UnknownIndex(index))?;
        if index >= signed.size {
            return Err(IssueError::UnknownIndex(index));
        }
        let range = SubtreeRange::new(0, signed.size).expect("size > index");
        Ok(MtcCertificate {
            log_id: self.config.log_id.clone(),
            index,
            entry: issued.entry.clone(),
            entity_public_key: issued.public_key.clone(),
            proof: MtcProof {
                range,
                inclusion: self.log.inclusion_proof(index, range)?,
                cosignatures: signed.cosignatures.clone(),
            },
        })
    }

    /// Signature-free certificate for `index` under landmark `number`, or
    /// under the oldest active landmark covering it when `number` is `None`.
    pub fn landmark_certificate(&self, index: u64, number: Option<u64>) -> Result<(u64, MtcCertificate), IssueError> {
        let issued = self.entry(index).ok_or(IssueError::UnknownIndex(index))?;
        if self.revoked.contains(index) {
            return Err(IssueError::Revoked(index));
        }
        let record: &LandmarkRecord = match number {
            Some(n) => self.schedule.get(n).ok_or(IssueError::UnknownLandmark(n))?,
            None => self
                .schedule
                .active
                .iter()
                .find(|r| r.covering(index).is_some())
                .ok_or(IssueError::NotReady(index))?,
        };
        let subtree = record.covering(index).ok_or(IssueError::NotReady(index))?;
        Ok((
            record.number,
            MtcCertificate {
                log_id: self.config.log_id.clone(),
                index,
                entry: issued.entry.clone(),
                entity_public_key: issued.public_key.clone(),
                proof: MtcProof {
                    range: subtree.range,
                    inclusion: self.log.inclusion_proof(index, subtree.range)?,
                    cosignatures: Vec::new(),
                },
            },
        ))
    }

    /// Allocates a landmark at the latest cosigned tree size, if it has
    /// grown since the previous landmark.
    pub fn allocate_landmark(&mut self, now: u64) -> Result<Option<LandmarkRecord>, IssueError> {
        let Some(size) = self.cosigned.as_ref().map(|c| c.size) else {
            return Ok(None);
        };
        let rec = self.schedule.allocate(&self.log, size, now)?.cloned();
        if rec.is_some() {
            self.save_state()?;
        }
        Ok(rec)
    }

    pub fn revoke(&mut self, lo: u64, hi: u64) -> Result<&RevokedRanges, IssueError> {
        if lo >= hi || hi > self.log.size() {
            return Err(IssueError::BadRange { lo, hi });
        }
        self.revoked.insert(lo, hi).expect("checked non-empty");
        self.save_state()?;
        Ok(&self.revoked)
    }

    fn save_state(&self) -> io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let s = PersistedState { schedule: self.schedule.clone(), revoked: self.revoked.clone(), cosigned: self.cosigned.clone() };
        write_atomic(&dir.join("state.json"), &serde_json::to_vec_pretty(&s).expect("state serializes"))
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

fn rewrite_entries(dir: &Path, entries: &[IssuedEntry]) -> io::Result<()> {
    let mut body = Vec::new();
    for e in entries {
        body.extend(serde_json::to_vec(e).expect("entry serializes"));
        body.push(b'\n');
    }
    write_atomic(&dir.join("entries.jsonl"), &body)
}

fn remove_if_exists(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}
