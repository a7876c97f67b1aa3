//! OS counters: process CPU time, resident set size and physical memory.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::{Error, Result};

pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CpuTimes {
    pub user: Duration,
    pub system: Duration,
}

#[cfg(unix)]
pub fn process_cpu_times() -> Result<CpuTimes> {
    fn tv(t: libc::timeval) -> Duration {
        Duration::from_secs(t.tv_sec as u64) + Duration::from_micros(t.tv_usec as u64)
    }
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let usage = unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut usage) != 0 {
            return Err(Error::Io(std::io::Error::last_os_error()));
        }
        usage
    };
    Ok(CpuTimes {
        user: tv(usage.ru_utime),
        system: tv(usage.ru_stime),
    })
}

#[cfg(not(unix))]
pub fn process_cpu_times() -> Result<CpuTimes> {
    Err(Error::MeasurementUnsupported)
}

#[cfg(unix)]
fn page_size() -> u64 {
    // SAFETY: sysconf has no memory-safety preconditions.
    unsafe { libc::sysconf(libc::_SC_PAGESIZE).max(0) as u64 }
}

/// Current resident set size in bytes.
#[cfg(target_os = "linux")]
pub fn current_rss_bytes() -> Option<u64> {
    let statm = std::fs::read_to_string("/proc/self/statm").ok()?;
    let resident: u64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    Some(resident * page_size())
}

/// Falls back to the lifetime peak where the current value is not exposed.
#[cfg(all(unix, not(target_os = "linux")))]
pub fn current_rss_bytes() -> Option<u64> {
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let usage = unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut usage) != 0 {
            return None;
        }
        usage
    };
    // ru_maxrss is in bytes on macOS.
    Some(usage.ru_maxrss as u64)
}

#[cfg(not(unix))]
pub fn current_rss_bytes() -> Option<u64> {
    None
}

#[cfg(unix)]
pub fn total_memory_bytes() -> Option<u64> {
    // SAFETY: sysconf has no memory-safety preconditions.
    let pages = unsafe { libc::sysconf(libc::_SC_PHYS_PAGES) };
    (pages > 0).then(|| pages as u64 * page_size())
}

#[cfg(not(unix))]
pub fn total_memory_bytes() -> Option<u64> {
    None
}

/// Background thread tracking peak RSS while a measurement runs.
pub struct RssSampler {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<u64>,
}

impl RssSampler {
    pub fn start(interval: Duration) -> RssSampler {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = thread::spawn(move || {
            let mut peak = current_rss_bytes().unwrap_or(0);
            while !flag.load(Ordering::Acquire) {
                thread::park_timeout(interval);
                peak = peak.max(current_rss_bytes().unwrap_or(0));
            }
            peak
        });
        RssSampler { stop, handle }
    }

    /// Stops sampling and returns the peak RSS in bytes.
    pub fn finish(self) -> u64 {
        let last = current_rss_bytes().unwrap_or(0);
        self.stop.store(true, Ordering::Release);
        self.handle.thread().unpark();
        self.handle.join().unwrap_or(0).max(last)
    }
}

/// One timed run of some closure.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub real: Duration,
    /// `None` when the platform has no user/system split.
    pub cpu: Option<CpuTimes>,
    pub peak_rss_bytes: u64,
}

pub fn measure<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Measurement)> {
    let sampler = RssSampler::start(SAMPLE_INTERVAL);
    let cpu_before = process_cpu_times().ok();
    let started = Instant::now();
    let out = f();
    let real = started.elapsed();
    let cpu_after = process_cpu_times().ok();
    let peak_rss_bytes = sampler.finish();
    let cpu = match (cpu_before, cpu_after) {
        (Some(a), Some(b)) => Some(CpuTimes {
            user: b.user.saturating_sub(a.user),
            system: b.system.saturating_sub(a.system),
        }),
        _ => None,
    };
    Ok((
        out?,
        Measurement {
            real,
            cpu,
            peak_rss_bytes,
        },
    ))
}
