//! Size and rate units.
//!
//! Sizes use binary prefixes (1 MB = 2^20 bytes) so that the usual chunk and
//! packet sizes divide each other. Rates use the same prefixes
//! (1 Mbit/s = 2^20 bit/s), which keeps "64 MB at 100 Mbit/s" at 5.12 s.

pub const KB: usize = 1 << 10;
pub const MB: usize = 1 << 20;

/// Bits per second in one Mbit/s.
pub const MBIT: f64 = (1u64 << 20) as f64;

pub fn mbps(v: f64) -> f64 {
    v * MBIT
}

/// Seconds to move `bytes` at `bits_per_sec`.
pub fn transfer_secs(bytes: f64, bits_per_sec: f64) -> f64 {
    bytes * 8.0 / bits_per_sec
}

/// Parses `64MB`, `256KB`, `16k`, `1048576`, `8MiB`.
pub fn parse_size(s: &str) -> Option<usize> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: usize = num.parse().ok()?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => KB,
        "m" | "mb" | "mib" => MB,
        "g" | "gb" | "gib" => 1 << 30,
        _ => return None,
    };
    n.checked_mul(mult)
}
