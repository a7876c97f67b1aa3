//! `minihsm` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 authentication failure (or a
//! breached verdict from `attack`), 3 crypto/integrity error, 4 I/O error.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minihsm::bench::BenchOp;
use minihsm::token::Protection;

#[derive(Debug, Parser)]
#[command(
    name = "minihsm",
    version,
    about = "Software HSM: hybrid AES+RSA envelopes and a PIN-protected key store"
)]
pub struct Cli {
    /// Token file holding slots and keys.
    #[arg(long, global = true, env = "MINIHSM_TOKEN", default_value = "minihsm.shsm")]
    pub token: std::path::PathBuf,

    /// Seed for all randomness (testing only).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct UserPin {
    /// User PIN; falls back to MINIHSM_USER_PIN, then an interactive prompt.
    #[arg(long = "user-pin", env = "MINIHSM_USER_PIN", hide_env_values = true)]
    pub user_pin: Option<String>,
}

#[derive(Debug, Args)]
pub struct SoPin {
    /// Security officer PIN; falls back to MINIHSM_SO_PIN, then an interactive prompt.
    #[arg(long = "so-pin", env = "MINIHSM_SO_PIN", hide_env_values = true)]
    pub so_pin: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an RSA keypair as PEM files.
    Keygen {
        #[arg(long, default_value_t = 2048)]
        bits: usize,
        #[arg(long, default_value_t = minihsm::rsa::DEFAULT_EXPONENT)]
        exponent: u64,
        #[arg(long)]
        out_pub: std::path::PathBuf,
        #[arg(long)]
        out_priv: std::path::PathBuf,
    },
    /// Create a slot protected by a user PIN and an SO PIN.
    InitSlot {
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = minihsm::token::DEFAULT_KDF_ITERATIONS)]
        kdf_iterations: u32,
        #[command(flatten)]
        user_pin: UserPin,
        #[command(flatten)]
        so_pin: SoPin,
    },
    /// Import a private key into a slot (requires the SO PIN).
    ImportKey {
        #[arg(long)]
        slot: String,
        #[arg(long)]
        label: String,
        #[arg(long)]
        key: std::path::PathBuf,
        #[arg(long)]
        extractable: bool,
        #[arg(long, default_value = "protected")]
        protection: Protection,
        #[command(flatten)]
        so_pin: SoPin,
    },
    /// List key labels and statuses in a slot.
    ListKeys {
        #[arg(long)]
        slot: String,
    },
    /// Seal a file for a recipient public key.
    Encrypt {
        #[arg(long = "pub")]
        public: std::path::PathBuf,
        #[arg(long = "in")]
        input: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Open an envelope with a key stored in a slot (requires the user PIN).
    Decrypt {
        #[arg(long)]
        slot: String,
        #[arg(long)]
        label: String,
        #[arg(long = "in")]
        input: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        #[command(flatten)]
        user_pin: UserPin,
    },
    /// Attempt to extract a stored private key and report what came out.
    Attack {
        #[arg(long)]
        slot: String,
        #[arg(long)]
        label: String,
        #[arg(long, default_value = minihsm::attack::DEFAULT_OUT_NAME)]
        out: std::path::PathBuf,
        /// Also write the key=value report here.
        #[arg(long)]
        report: Option<std::path::PathBuf>,
        /// Supply the SO PIN to the tool (positive-control runs).
        #[arg(long)]
        as_so: bool,
        #[command(flatten)]
        so_pin: SoPin,
    },
    /// Time encryption, decryption or slot access.
    Bench {
        #[arg(long)]
        op: BenchOp,
        #[arg(long, default_value_t = 500.0)]
        size_mb: f64,
        #[arg(long, default_value_t = 10)]
        batches: usize,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 2048)]
        rsa_bits: usize,
        #[arg(long, default_value_t = minihsm::token::DEFAULT_KDF_ITERATIONS)]
        kdf_iterations: u32,
        /// Destination for the CSV (or JSON) report; stdout when omitted.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("minihsm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
