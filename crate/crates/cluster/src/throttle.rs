//! Token-bucket rate limiting for sockets.
//!
//! Callers reserve transmission slots on a shared virtual clock, so
//! concurrent streams through one gate are served in arrival order and
//! together never exceed the configured rate beyond the burst allowance.

use std::io::{self, Read, Write};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

pub const DEFAULT_BURST: usize = 32 * 1024;
pub const SLICE: usize = 16 * 1024;

#[derive(Debug)]
pub struct Throttle {
    rate: f64,
    burst: Duration,
    next: Mutex<Option<Instant>>,
}

impl Throttle {
    /// `rate` in bits per second; infinite means no limit.
    pub fn new(rate: f64, burst_bytes: usize) -> Throttle {
        assert!(rate > 0.0, "rate must be positive");
        let burst = if rate.is_finite() {
            Duration::from_secs_f64(burst_bytes as f64 * 8.0 / rate)
        } else {
            Duration::ZERO
        };
        Throttle { rate, burst, next: Mutex::new(None) }
    }

    pub fn with_rate(rate: Option<f64>) -> Throttle {
        Throttle::new(rate.unwrap_or(f64::INFINITY), DEFAULT_BURST)
    }

    pub fn unlimited() -> Throttle {
        Throttle::new(f64::INFINITY, 0)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_limited(&self) -> bool {
        self.rate.is_finite()
    }

    /// Blocks until `bytes` may pass.
    pub fn acquire(&self, bytes: usize) {
        if !self.is_limited() || bytes == 0 {
            return;
        }
        let cost = Duration::from_secs_f64(bytes as f64 * 8.0 / self.rate);
        let now = Instant::now();
        let release = {
            let mut next = self.next.lock().unwrap();
            let floor = now.checked_sub(self.burst).unwrap_or(now);
            let start = match *next {
                Some(t) if t > floor => t,
                _ => floor,
            };
            let end = start + cost;
            *next = Some(end);
            end
        };
        if release > now {
            thread::sleep(release - now);
        }
    }
}

/// Writes in slices, each admitted by the gate.
pub struct ThrottledWriter<W> {
    inner: W,
    gate: Arc<Throttle>,
}

impl<W: Write> ThrottledWriter<W> {
    pub fn new(inner: W, gate: Arc<Throttle>) -> Self {
        ThrottledWriter { inner, gate }
    }

    pub fn get_ref(&self) -> &W {
        &self.inner
    }
}

impl<W: Write> Write for ThrottledWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if !self.gate.is_limited() {
            return self.inner.write(buf);
        }
        let n = buf.len().min(SLICE);
        self.gate.acquire(n);
        self.inner.write_all(&buf[..n])?;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Reads in slices and charges the gate for what arrived.
pub struct ThrottledReader<R> {
    inner: R,
    gate: Arc<Throttle>,
}

impl<R: Read> ThrottledReader<R> {
    pub fn new(inner: R, gate: Arc<Throttle>) -> Self {
        ThrottledReader { inner, gate }
    }
}

impl<R: Read> Read for ThrottledReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if !self.gate.is_limited() {
            return self.inner.read(buf);
        }
        let cap = buf.len().min(SLICE);
        let n = self.inner.read(&mut buf[..cap])?;
        self.gate.acquire(n);
        Ok(n)
    }
}
