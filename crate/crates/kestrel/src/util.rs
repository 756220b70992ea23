//! Small shared utilities: injectable clock and sleeper, deterministic
//! hashing and RNG for tests, RFC 3339 helpers, and word tokenization.

use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

/// Source of the current time in seconds since the Unix epoch.
///
/// Every timing-sensitive operation in the crate takes a clock so tests can
/// drive time deterministically.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Wall-clock time.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs_f64()
    }
}

/// Manually advanced clock for tests.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<f64>,
}

impl FakeClock {
    pub fn new(start: f64) -> Self {
        Self { now: Mutex::new(start) }
    }

    pub fn advance(&self, secs: f64) {
        *self.now.lock().unwrap() += secs;
    }

    pub fn set(&self, secs: f64) {
        *self.now.lock().unwrap() = secs;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        *self.now.lock().unwrap()
    }
}

/// Sleep abstraction so retry and backoff logic can be tested without
/// actually waiting.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, secs: f64);
}

/// Sleeps on the current thread.
#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

/// Records requested sleeps instead of performing them.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    slept: Mutex<Vec<f64>>,
}

impl RecordingSleeper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn slept(&self) -> Vec<f64> {
        self.slept.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, secs: f64) {
        self.slept.lock().unwrap().push(secs);
    }
}

/// FNV-1a 64-bit hash. Used for cache keys and the deterministic test
/// embedder; not cryptographic.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Tiny deterministic RNG (xorshift64*) for generated test corpora and
/// fixtures. Reproducible across platforms, no external dependency.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed.max(1) }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            (self.next_u64() % n as u64) as usize
        }
    }
}

/// Lowercased word tokens: split on whitespace, strip leading/trailing
/// non-alphanumeric characters (internal hyphens and apostrophes survive).
pub fn lower_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Whitespace word count without any normalization.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

const DAYS_PER_400Y: i64 = 146_097;

/// Parse an RFC 3339 UTC timestamp (`2025-02-25T00:00:00Z`, optional
/// fractional seconds) into epoch seconds.
pub fn parse_rfc3339(s: &str) -> Option<f64> {
    let s = s.trim();
    let bytes = s.as_bytes();
    if bytes.len() < 20 || bytes[4] != b'-' || bytes[7] != b'-' {
        return None;
    }
    let sep = bytes[10];
    if sep != b'T' && sep != b't' && sep != b' ' {
        return None;
    }
    let year: i64 = s.get(0..4)?.parse().ok()?;
    let month: i64 = s.get(5..7)?.parse().ok()?;
    let day: i64 = s.get(8..10)?.parse().ok()?;
    let hour: i64 = s.get(11..13)?.parse().ok()?;
    let minute: i64 = s.get(14..16)?.parse().ok()?;
    let second: i64 = s.get(17..19)?.parse().ok()?;
    let rest = s.get(19..)?;
    let mut frac = 0.0;
    let mut idx = 0;
    let rest_bytes = rest.as_bytes();
    if rest_bytes.first() == Some(&b'.') {
        idx = 1;
        let mut scale = 0.1;
        while idx < rest_bytes.len() && rest_bytes[idx].is_ascii_digit() {
            frac += (rest_bytes[idx] - b'0') as f64 * scale;
            scale /= 10.0;
            idx += 1;
        }
    }
    match &rest[idx..] {
        "Z" | "z" | "+00:00" | "-00:00" => {}
        _ => return None,
    }
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    // Days-from-civil (Howard Hinnant's algorithm).
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (month + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * DAYS_PER_400Y + doe - 719_468;
    Some((days * 86_400 + hour * 3_600 + minute * 60 + second) as f64 + frac)
}

/// Format epoch seconds as an RFC 3339 UTC timestamp with whole-second
/// precision.
pub fn format_rfc3339(epoch: f64) -> String {
    let total = epoch.floor() as i64;
    let (days, mut secs) = (total.div_euclid(86_400), total.rem_euclid(86_400));
    let hour = secs / 3_600;
    secs %= 3_600;
    let minute = secs / 60;
    let second = secs % 60;
    // Civil-from-days (inverse of the algorithm above).
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - DAYS_PER_400Y + 1 } / DAYS_PER_400Y;
    let doe = z - era * DAYS_PER_400Y;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { y + 1 } else { y };
    format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}:{second:02}Z")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_round_trip() {
        for ts in ["2025-02-25T00:00:00Z", "1970-01-01T00:00:00Z", "2038-01-19T03:14:07Z"] {
            let secs = parse_rfc3339(ts).unwrap();
            assert_eq!(format_rfc3339(secs), ts);
        }
    }

    #[test]
    fn rfc3339_known_epoch() {
        assert_eq!(parse_rfc3339("1970-01-01T00:00:00Z"), Some(0.0));
        assert_eq!(parse_rfc3339("1970-01-02T00:00:00Z"), Some(86_400.0));
        assert_eq!(parse_rfc3339("2025-01-25T10:30:00Z"), Some(1_737_801_000.0));
    }

    #[test]
    fn rfc3339_fractional_seconds() {
        let secs = parse_rfc3339("1970-01-01T00:00:00.5Z").unwrap();
        assert!((secs - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tokens_strip_punctuation() {
        assert_eq!(lower_tokens("Tax, then $899 (net)."), vec!["tax", "then", "899", "net"]);
        assert_eq!(lower_tokens("per-laptop cost"), vec!["per-laptop", "cost"]);
    }

    #[test]
    fn det_rng_is_stable() {
        let mut a = DetRng::new(42);
        let mut b = DetRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
