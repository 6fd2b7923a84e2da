use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtc_core::signature::SchemeId;

/// Merkle Tree Certificates: CA, cosigners, mirror, landmark distributor
/// and relying-party tooling.
///
/// Every subcommand accepts `--config FILE` (TOML or JSON). Keys are flag
/// names without the leading dashes, either at top level or in a table
/// named after the subcommand. Flags on the command line win.
#[derive(Debug, Parser)]
#[command(name = "mtc", version)]
pub struct Cli {
    /// Config file overlay (TOML or JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `mtc_services=debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the certificate authority.
    Ca(CaArgs),
    /// Run a witness cosigner.
    Cosigner(CosignerArgs),
    /// Run a log mirror, optionally cosigning.
    Mirror(MirrorArgs),
    /// Run the landmark distributor.
    Distributor(DistributorArgs),
    /// Request a certificate from a CA.
    Issue(IssueArgs),
    /// Verify a certificate file; exits 1 on reject.
    Verify(VerifyArgs),
    /// Revoke an index range.
    Revoke(RevokeArgs),
    /// Run every role in-process and walk a certificate through its life.
    Demo(DemoArgs),
    /// Microbenchmarks over loopback handshakes.
    Bench(BenchArgs),
    /// Analytical size and relying-party state tables.
    Tables(TablesArgs),
}

pub fn parse_scheme(s: &str) -> Result<SchemeId, String> {
    let norm = s.to_ascii_lowercase().replace('-', "_");
    let alias = match norm.as_str() {
        "ml_dsa_65" | "mldsa65" | "ml_dsa_65_emulated" => "mldsa65_emulated",
        "p256" | "ecdsa" => "ecdsa_p256",
        other => other,
    };
    SchemeId::from_name(alias).ok_or_else(|| format!("unknown scheme {s:?} (ed25519, ecdsa-p256, mldsa65-emulated)"))
}

#[derive(Debug, Args)]
pub struct CaArgs {
    /// Listen address; `:8440` binds all interfaces.
    #[arg(long, default_value = ":8440")]
    pub listen: String,
    /// Seconds between checkpoint cosigning rounds.
    #[arg(long, default_value_t = 2)]
    pub checkpoint_interval: u64,
    /// Seconds between landmark allocations.
    #[arg(long, default_value_t = 600)]
    pub landmark_interval: u64,
    /// Maximum certificate lifetime in seconds.
    #[arg(long, default_value_t = 86_400)]
    pub cert_lifetime: u64,
    /// Cosigner base URL; repeat for each cosigner.
    #[arg(long = "cosigner-url", required = true)]
    pub cosigner_urls: Vec<String>,
    /// Cosignatures required per checkpoint.
    #[arg(long, default_value_t = 2)]
    pub policy_k: usize,
    /// Require a mirror among the k cosignatures.
    #[arg(long)]
    pub require_mirror: bool,
    #[arg(long, required = true)]
    pub data_dir: PathBuf,
    /// File holding the bearer token clients must present.
    #[arg(long, required = true)]
    pub admission_token_file: PathBuf,
    #[arg(long, default_value = "32473")]
    pub log_id: String,
    /// Overrides ceil(lifetime / interval) + 1.
    #[arg(long)]
    pub max_landmarks: Option<u64>,
    /// URL published as `landmark_url`; defaults to one derived from --listen.
    #[arg(long)]
    pub public_url: Option<String>,
    /// Per-cosigner deadline in milliseconds.
    #[arg(long, default_value_t = 2000)]
    pub cosign_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct CosignerArgs {
    #[arg(long, default_value = ":8441")]
    pub listen: String,
    #[arg(long, required = true)]
    pub data_dir: PathBuf,
    /// Trust anchor ID of this cosigner, e.g. `32473.100`.
    #[arg(long, required = true)]
    pub id: String,
    #[arg(long, default_value = "ed25519", value_parser = parse_scheme)]
    pub scheme: SchemeId,
    /// Defaults to `<data-dir>/key.json`; created if missing.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MirrorArgs {
    #[arg(long, default_value = ":8442")]
    pub listen: String,
    #[arg(long, required = true)]
    pub ca_url: String,
    /// Seconds between syncs.
    #[arg(long, default_value_t = 10)]
    pub sync_interval: u64,
    #[arg(long, required = true)]
    pub data_dir: PathBuf,
    /// Enable mirror cosigning.
    #[arg(long, requires = "id")]
    pub cosign: bool,
    /// Cosigner trust anchor ID, with --cosign.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value = "ed25519", value_parser = parse_scheme)]
    pub scheme: SchemeId,
    /// Defaults to `<data-dir>/key.json`; created if missing.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistributorArgs {
    #[arg(long, required = true)]
    pub mtca_url: String,
    #[arg(long, required = true)]
    pub mirror_url: String,
    #[arg(long, default_value = "./run/landmarks.json")]
    pub out: PathBuf,
    /// Seconds between refreshes.
    #[arg(long, default_value_t = 10)]
    pub interval: u64,
    /// Trust config JSON; fetched from the CA when absent.
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    #[arg(long, default_value_t = 145)]
    pub max_landmarks: usize,
    /// Refresh once, print the report and exit.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct TokenArgs {
    #[arg(long, conflicts_with = "admission_token_file")]
    pub admission_token: Option<String>,
    #[arg(long)]
    pub admission_token_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IssueArgs {
    #[arg(long, required = true)]
    pub ca_url: String,
    #[arg(long, required = true)]
    pub subject: String,
    /// DNS name; repeatable. Defaults to the subject.
    #[arg(long = "dns")]
    pub dns_names: Vec<String>,
    #[arg(long, default_value = "ecdsa-p256", value_parser = parse_scheme)]
    pub scheme: SchemeId,
    /// Entity key; generated if missing.
    #[arg(long, required = true)]
    pub key_file: PathBuf,
    #[arg(long)]
    pub lifetime: Option<u64>,
    /// Where to write the standalone certificate.
    #[arg(long, required = true)]
    pub out: PathBuf,
    #[command(flatten)]
    pub token: TokenArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Encoded certificate, binary or hex.
    #[arg(long, required = true)]
    pub cert: PathBuf,
    /// Trust config JSON. Fetched from --ca-url when absent.
    #[arg(long, required_unless_present = "ca_url")]
    pub trust_config: Option<PathBuf>,
    /// `landmarks.json` written by the distributor.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Also apply the revocations the CA currently publishes.
    #[arg(long)]
    pub ca_url: Option<String>,
    /// Verification time, unix seconds.
    #[arg(long)]
    pub now: Option<u64>,
    /// Revoke every index below this one (pruned log prefix).
    #[arg(long)]
    pub first_available: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RevokeArgs {
    #[arg(long, required = true)]
    pub ca_url: String,
    #[arg(long, required = true)]
    pub lo: u64,
    /// Exclusive upper bound.
    #[arg(long, required = true)]
    pub hi: u64,
    #[command(flatten)]
    pub token: TokenArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FailInjectArg {
    /// The CA leaves the new entry out of the feed mirrors replay.
    WithholdEntry,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_enum)]
    pub fail_inject: Option<FailInjectArg>,
    /// The distributor misses the landmark round.
    #[arg(long)]
    pub stale_distributor: bool,
    /// Keep state here instead of a temporary directory.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Certificates to issue before the first landmark.
    #[arg(long, default_value_t = 16)]
    pub certs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario to run; repeatable. One of classical-ecdsa, standalone-16,
    /// landmark-16, landmark-1024, landmark-4096.
    #[arg(long = "scenario", required_unless_present = "all")]
    pub scenarios: Vec<String>,
    /// Run every scenario.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
