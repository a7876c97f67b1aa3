use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use minihsm::attack::{run_extraction_attack_with, AttackOptions, Verdict};
use minihsm::bench::{emit_csv, run_benchmark, BenchConfig};
use minihsm::envelope;
use minihsm::rsa::{self, RsaPrivateKey, RsaPublicKey};
use minihsm::token::{Role, Token};
use minihsm::{rng, Error};

use crate::{Cli, Command};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_AUTH: u8 = 2;
pub const EXIT_CRYPTO: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let e = match self {
            CliError::Usage(_) => return EXIT_USAGE,
            CliError::Core(e) => e,
        };
        match e {
            Error::AuthFailure | Error::RoleDenied | Error::SessionMismatch(_) => EXIT_AUTH,
            Error::Io(_) => EXIT_IO,
            Error::UnsupportedKeySize(_)
            | Error::InvalidExponent
            | Error::WeakPin
            | Error::DuplicateSlotLabel(_)
            | Error::DuplicateKeyLabel(_)
            | Error::UnknownSlot(_)
            | Error::UnknownKey(_)
            | Error::MeasurementUnsupported => EXIT_USAGE,
            _ => EXIT_CRYPTO,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn resolve_pin(given: &Option<String>, prompt: &str) -> CliResult<String> {
    match given {
        Some(pin) => Ok(pin.clone()),
        None => rpassword::prompt_password(prompt)
            .map_err(|e| CliError::Usage(format!("no PIN supplied and prompting failed: {e}"))),
    }
}

fn check_writable(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Core(Error::Io(io::Error::new(
            io::ErrorKind::AlreadyExists,
            format!("refusing to overwrite {} (pass --force)", path.display()),
        ))));
    }
    Ok(())
}

/// Writes through a temporary file in the destination directory, which only
/// replaces `path` once `f` has succeeded.
fn write_atomically<T>(path: &Path, f: impl FnOnce(&mut BufWriter<&File>) -> CliResult<T>) -> CliResult<T> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    let out = {
        let mut writer = BufWriter::new(tmp.as_file());
        let out = f(&mut writer)?;
        writer.flush()?;
        out
    };
    tmp.persist(path).map_err(|e| CliError::Core(Error::Io(e.error)))?;
    Ok(out)
}

fn read_text(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Keygen {
            bits,
            exponent,
            out_pub,
            out_priv,
        } => {
            check_writable(out_pub, cli.force)?;
            check_writable(out_priv, cli.force)?;
            let (public, private) = rsa::generate_keypair(*bits, *exponent, cli.seed)?;
            write_atomically(out_priv, |w| Ok(w.write_all(private.to_pem().as_bytes())?))?;
            write_atomically(out_pub, |w| Ok(w.write_all(public.to_pem().as_bytes())?))?;
            println!("generated {bits}-bit keypair");
        }

        Command::InitSlot {
            label,
            kdf_iterations,
            user_pin,
            so_pin,
        } => {
            let user = resolve_pin(&user_pin.user_pin, "User PIN: ")?;
            let so = resolve_pin(&so_pin.so_pin, "Security officer PIN: ")?;
            let mut token = Token::open_or_create(&cli.token)?.with_kdf_iterations(*kdf_iterations);
            if let Some(seed) = cli.seed {
                token = token.with_seed(seed);
            }
            let id = token.create_slot(label, &user, &so)?;
            println!("created slot {id} ({label})");
        }

        Command::ImportKey {
            slot,
            label,
            key,
            extractable,
            protection,
            so_pin,
        } => {
            let private = RsaPrivateKey::from_pem(&read_text(key)?)?;
            let mut token = Token::open(&cli.token)?;
            if let Some(seed) = cli.seed {
                token = token.with_seed(seed);
            }
            token.slot(slot)?;
            let pin = resolve_pin(&so_pin.so_pin, "Security officer PIN: ")?;
            let session = token.authenticate(slot, &pin, Role::SecurityOfficer)?;
            token.import_private_key(&session, label, &private, *protection, *extractable)?;
            println!("imported {label} into {slot}");
        }

        Command::ListKeys { slot } => {
            let token = Token::open(&cli.token)?;
            let keys = token.list_keys(slot)?;
            if keys.is_empty() {
                println!("(no keys in {slot})");
            }
            for k in keys {
                println!("{}\t{}\textractable={}", k.key_label, k.protection, k.extractable);
            }
        }

        Command::Encrypt { public, input, out } => {
            check_writable(out, cli.force)?;
            let recipient = RsaPublicKey::from_pem(&read_text(public)?)?;
            let mut reader = BufReader::new(File::open(input)?);
            let mut rng = rng::from_seed(cli.seed);
            let summary = write_atomically(out, |w| {
                Ok(envelope::seal_stream(&mut reader, w, &recipient, &mut rng)?)
            })?;
            println!(
                "sealed {} bytes into {} bytes",
                summary.plaintext_len,
                summary.header_len + summary.ciphertext_len
            );
        }

        Command::Decrypt {
            slot,
            label,
            input,
            out,
            user_pin,
        } => {
            check_writable(out, cli.force)?;
            let mut token = Token::open(&cli.token)?;
            token.slot(slot)?;
            let pin = resolve_pin(&user_pin.user_pin, "User PIN: ")?;
            let session = token.authenticate(slot, &pin, Role::User)?;
            let handle = token.key_handle(&session, label)?;
            let mut reader = BufReader::new(File::open(input)?);
            let written = write_atomically(out, |w| Ok(handle.open_stream(&mut reader, w)?))?;
            println!("recovered {written} bytes");
        }

        Command::Attack {
            slot,
            label,
            out,
            report,
            as_so,
            so_pin,
        } => {
            check_writable(out, cli.force)?;
            if let Some(r) = report {
                check_writable(r, cli.force)?;
            }
            let pin = if *as_so {
                Some(resolve_pin(&so_pin.so_pin, "Security officer PIN: ")?)
            } else {
                None
            };
            let options = AttackOptions {
                so_pin: pin.as_deref(),
                seed: cli.seed,
            };
            let result = run_extraction_attack_with(&cli.token, slot, label, out, &options)?;
            let text = result.to_kv_string();
            print!("{text}");
            if let Some(r) = report {
                fs::write(r, &text)?;
            }
            return Ok(match result.verdict {
                Verdict::Secure => EXIT_OK,
                Verdict::Breached => EXIT_AUTH,
            });
        }

        Command::Bench {
            op,
            size_mb,
            batches,
            samples,
            rsa_bits,
            kdf_iterations,
            out,
            json,
        } => {
            if !(size_mb.is_finite() && *size_mb >= 0.0) {
                return Err(CliError::Usage("--size-mb must be a non-negative number".into()));
            }
            if let Some(out) = out {
                check_writable(out, cli.force)?;
            }
            let cfg = BenchConfig {
                batches: *batches,
                samples: *samples,
                rsa_bits: *rsa_bits,
                kdf_iterations: *kdf_iterations,
                seed: cli.seed.unwrap_or(0),
                ..BenchConfig::new(*op, (size_mb * 1024.0 * 1024.0).round() as u64)
            };
            let report = run_benchmark(&cfg)?;
            if !report.cpu_split_measured {
                eprintln!("minihsm: user/system time unavailable on this platform; reporting real time only");
            }
            match (out, json) {
                (Some(path), false) => emit_csv(&report, path)?,
                (Some(path), true) => fs::write(path, report.to_json())?,
                (None, false) => print!("{}", report.to_csv()),
                (None, true) => println!("{}", report.to_json()),
            }
        }
    }
    Ok(EXIT_OK)
}
