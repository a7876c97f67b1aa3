//! Time and memory measurement of the encryption pipeline.
//!
//! A run is `batches` x `samples` timed executions of one operation. Each
//! sample records wall-clock time, process user/system CPU time, peak
//! resident set size as a percentage of physical memory and CPU utilization
//! (`(user + system) / real`). A batch reports the mean of its samples and
//! the report carries the mean of the batches.
//!
//! Key generation, workload generation and any envelope or token needed by
//! the operation are prepared before the timed region.

pub mod measure;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::envelope::{self, CHUNK_SIZE};
use crate::rsa::{self, RsaPrivateKey, RsaPublicKey};
use crate::token::{self, Protection, Role, Token};
use crate::{Error, Result};

use measure::{measure, total_memory_bytes, Measurement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchOp {
    Encrypt,
    Decrypt,
    SlotAccess,
}

impl BenchOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchOp::Encrypt => "encrypt",
            BenchOp::Decrypt => "decrypt",
            BenchOp::SlotAccess => "slot-access",
        }
    }
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "encrypt" => Ok(BenchOp::Encrypt),
            "decrypt" => Ok(BenchOp::Decrypt),
            "slot-access" | "slot_access" => Ok(BenchOp::SlotAccess),
            other => Err(format!("unknown benchmark operation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BenchSample {
    pub real_s: f64,
    pub user_s: f64,
    pub sys_s: f64,
    pub peak_rss_pct: f64,
    pub cpu_pct: f64,
}

impl BenchSample {
    /// CPU time exceeding wall time means the work ran on several cores.
    pub fn is_multicore(&self) -> bool {
        self.user_s + self.sys_s > self.real_s
    }

    fn from_measurement(m: &Measurement, total_memory: Option<u64>) -> BenchSample {
        let real_s = m.real.as_secs_f64();
        let (user_s, sys_s) = m
            .cpu
            .map(|c| (c.user.as_secs_f64(), c.system.as_secs_f64()))
            .unwrap_or((0.0, 0.0));
        let cpu_pct = if real_s > 0.0 {
            (user_s + sys_s) / real_s * 100.0
        } else {
            0.0
        };
        let peak_rss_pct = match total_memory {
            Some(total) if total > 0 => m.peak_rss_bytes as f64 / total as f64 * 100.0,
            _ => 0.0,
        };
        BenchSample {
            real_s,
            user_s,
            sys_s,
            peak_rss_pct,
            cpu_pct,
        }
    }
}

/// Field-wise arithmetic mean. Empty input gives the zero sample.
pub fn mean(samples: &[BenchSample]) -> BenchSample {
    if samples.is_empty() {
        return BenchSample::default();
    }
    let n = samples.len() as f64;
    let sum = |f: fn(&BenchSample) -> f64| samples.iter().map(f).sum::<f64>() / n;
    BenchSample {
        real_s: sum(|s| s.real_s),
        user_s: sum(|s| s.user_s),
        sys_s: sum(|s| s.sys_s),
        peak_rss_pct: sum(|s| s.peak_rss_pct),
        cpu_pct: sum(|s| s.cpu_pct),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub op: BenchOp,
    pub file_size_bytes: u64,
    pub batches: Vec<BenchSample>,
    pub grand_mean: BenchSample,
    /// False when user/system time could not be measured; those columns are
    /// then zero.
    pub cpu_split_measured: bool,
}

impl BenchReport {
    pub fn from_batches(op: BenchOp, file_size_bytes: u64, batches: Vec<BenchSample>) -> BenchReport {
        BenchReport {
            op,
            file_size_bytes,
            grand_mean: mean(&batches),
            batches,
            cpu_split_measured: true,
        }
    }

    /// `batch,real_s,user_s,sys_s,peak_rss_pct,cpu_pct`, one row per batch and
    /// a closing `average` row, three decimals throughout.
    pub fn to_csv(&self) -> String {
        fn row(out: &mut String, name: &str, s: &BenchSample) {
            let _ = writeln!(
                out,
                "{name},{:.3},{:.3},{:.3},{:.3},{:.3}",
                s.real_s, s.user_s, s.sys_s, s.peak_rss_pct, s.cpu_pct
            );
        }
        let mut out = String::from("batch,real_s,user_s,sys_s,peak_rss_pct,cpu_pct\n");
        for (i, s) in self.batches.iter().enumerate() {
            row(&mut out, &(i + 1).to_string(), s);
        }
        row(&mut out, "average", &self.grand_mean);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn emit_csv(report: &BenchReport, path: &Path) -> Result<()> {
    fs::write(path, report.to_csv())?;
    Ok(())
}

/// Writes `size_bytes` of seeded pseudorandom data to `path`.
pub fn generate_workload(path: &Path, size_bytes: u64, seed: u64) -> Result<PathBuf> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = BufWriter::new(File::create(path)?);
    let mut chunk = vec![0u8; CHUNK_SIZE];
    let mut remaining = size_bytes;
    while remaining > 0 {
        let n = remaining.min(CHUNK_SIZE as u64) as usize;
        rng.fill_bytes(&mut chunk[..n]);
        out.write_all(&chunk[..n])?;
        remaining -= n as u64;
    }
    out.flush()?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub op: BenchOp,
    pub file_size_bytes: u64,
    pub batches: usize,
    pub samples: usize,
    pub rsa_bits: usize,
    /// KDF cost of the slot used by `slot-access`.
    pub kdf_iterations: u32,
    pub seed: u64,
    /// Where scratch files go; the system temp directory by default.
    pub work_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(op: BenchOp, file_size_bytes: u64) -> BenchConfig {
        BenchConfig {
            op,
            file_size_bytes,
            batches: 10,
            samples: 8,
            rsa_bits: 2048,
            kdf_iterations: token::DEFAULT_KDF_ITERATIONS,
            seed: 0,
            work_dir: None,
        }
    }
}

const SLOT_LABEL: &str = "bench";
const KEY_LABEL: &str = "bench-key";
const USER_PIN: &str = "bench-user";
const SO_PIN: &str = "bench-officer";

/// Inputs prepared outside the timed region.
struct Fixture {
    dir: tempfile::TempDir,
    workload: PathBuf,
    public: RsaPublicKey,
    private: RsaPrivateKey,
    envelope: Option<PathBuf>,
    token: Option<PathBuf>,
}

fn prepare(cfg: &BenchConfig) -> Result<Fixture> {
    let dir = match &cfg.work_dir {
        Some(d) => tempfile::tempdir_in(d)?,
        None => tempfile::tempdir()?,
    };
    let (public, private) = rsa::generate_keypair(cfg.rsa_bits, rsa::DEFAULT_EXPONENT, Some(cfg.seed))?;
    let workload = generate_workload(&dir.path().join("workload.bin"), cfg.file_size_bytes, cfg.seed)?;
    let mut fixture = Fixture {
        dir,
        workload,
        public,
        private,
        envelope: None,
        token: None,
    };
    match cfg.op {
        BenchOp::Encrypt => {}
        BenchOp::Decrypt => {
            let path = fixture.dir.path().join("workload.env");
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            let mut reader = BufReader::new(File::open(&fixture.workload)?);
            let mut writer = BufWriter::new(File::create(&path)?);
            envelope::seal_stream(&mut reader, &mut writer, &fixture.public, &mut rng)?;
            writer.flush()?;
            fixture.envelope = Some(path);
        }
        BenchOp::SlotAccess => {
            let path = fixture.dir.path().join("bench.shsm");
            let mut token = Token::create(&path)?
                .with_seed(cfg.seed)
                .with_kdf_iterations(cfg.kdf_iterations);
            token.create_slot(SLOT_LABEL, USER_PIN, SO_PIN)?;
            let so = token.authenticate(SLOT_LABEL, SO_PIN, Role::SecurityOfficer)?;
            token.import_private_key(&so, KEY_LABEL, &fixture.private, Protection::HighlyProtected, false)?;
            fixture.token = Some(path);
        }
    }
    Ok(fixture)
}

fn run_once(cfg: &BenchConfig, fx: &Fixture, sample_seed: u64) -> Result<()> {
    match cfg.op {
        BenchOp::Encrypt => {
            let mut rng = ChaCha20Rng::seed_from_u64(sample_seed);
            let mut reader = BufReader::new(File::open(&fx.workload)?);
            let mut writer = BufWriter::new(File::create(fx.dir.path().join("out.env"))?);
            envelope::seal_stream(&mut reader, &mut writer, &fx.public, &mut rng)?;
            writer.flush()?;
        }
        BenchOp::Decrypt => {
            let env = fx.envelope.as_ref().expect("prepared");
            let mut reader = BufReader::new(File::open(env)?);
            let mut writer = BufWriter::new(File::create(fx.dir.path().join("out.bin"))?);
            envelope::open_stream(&mut reader, &mut writer, &fx.private)?;
            writer.flush()?;
        }
        BenchOp::SlotAccess => {
            let mut token = Token::open(fx.token.as_ref().expect("prepared"))?;
            let session = token.authenticate(SLOT_LABEL, USER_PIN, Role::User)?;
            let handle = token.key_handle(&session, KEY_LABEL)?;
            std::hint::black_box(&handle);
        }
    }
    Ok(())
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.batches == 0 || cfg.samples == 0 {
        return Err(Error::Malformed(
            "benchmark shape (batches and samples must be nonzero)",
        ));
    }
    let fixture = prepare(cfg)?;
    let total_memory = total_memory_bytes();
    let mut cpu_split_measured = true;
    let mut batches = Vec::with_capacity(cfg.batches);
    for b in 0..cfg.batches {
        let mut samples = Vec::with_capacity(cfg.samples);
        for s in 0..cfg.samples {
            let sample_seed = cfg.seed ^ ((b * cfg.samples + s) as u64 + 1);
            let ((), m) = measure(|| run_once(cfg, &fixture, sample_seed))?;
            cpu_split_measured &= m.cpu.is_some();
            samples.push(BenchSample::from_measurement(&m, total_memory));
        }
        batches.push(mean(&samples));
    }
    let mut report = BenchReport::from_batches(cfg.op, cfg.file_size_bytes, batches);
    report.cpu_split_measured = cpu_split_measured;
    Ok(report)
}
