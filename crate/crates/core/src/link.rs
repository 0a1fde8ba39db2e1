//! Coordinator → robot command link.
//!
//! Wire layout (14 bytes, multi-byte fields little-endian):
//!
//! | bytes | field                                    |
//! |-------|------------------------------------------|
//! | 0–1   | magic `A5 5A`                            |
//! | 2     | version `01`                             |
//! | 3     | robot id (0–31)                          |
//! | 4–5   | sequence number (u16, wrapping)          |
//! | 6–7   | v in mm/s (i16)                          |
//! | 8–9   | ω in mrad/s (i16)                        |
//! | 10    | flags (bit 0 = ESTOP, rest zero)         |
//! | 11    | reserved `00`                            |
//! | 12–13 | CRC-16/CCITT-FALSE over bytes 0–11       |

use crate::control::Command;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const FRAME_LEN: usize = 14;
pub const MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const VERSION: u8 = 0x01;
pub const FLAG_ESTOP: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("field `{0}` out of range")]
    FieldOutOfRange(&'static str),
    #[error("buffer holds {0} bytes, need 14")]
    ShortBuffer(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("crc mismatch: frame says {expected:#06x}, computed {computed:#06x}")]
    BadCrc { expected: u16, computed: u16 },
}

const fn crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 0x8000 != 0 { (c << 1) ^ 0x1021 } else { c << 1 };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

static CRC_TABLE: [u16; 256] = crc_table();

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    data.iter().fold(0xFFFF, |crc, &b| (crc << 8) ^ CRC_TABLE[((crc >> 8) as u8 ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandFrame {
    pub robot_id: u8,
    pub seq: u16,
    pub v_mm_s: i16,
    pub omega_mrad_s: i16,
    pub flags: u8,
}

impl CommandFrame {
    /// Quantizes a command, saturating at the 16-bit field range.
    pub fn from_command(robot_id: u8, seq: u16, cmd: &Command) -> Self {
        let q = |x: f64| (x * 1000.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        Self {
            robot_id,
            seq,
            v_mm_s: q(cmd.v),
            omega_mrad_s: q(cmd.omega),
            flags: if cmd.estop { FLAG_ESTOP } else { 0 },
        }
    }

    pub fn command(&self) -> Command {
        if self.flags & FLAG_ESTOP != 0 {
            return Command::estop();
        }
        Command::new(self.v_mm_s as f64 / 1000.0, self.omega_mrad_s as f64 / 1000.0)
    }
}

pub fn encode_command(f: &CommandFrame) -> Result<[u8; FRAME_LEN], LinkError> {
    if f.robot_id > 31 {
        return Err(LinkError::FieldOutOfRange("robot_id"));
    }
    if f.flags & !FLAG_ESTOP != 0 {
        return Err(LinkError::FieldOutOfRange("flags"));
    }
    let mut b = [0u8; FRAME_LEN];
    b[0..2].copy_from_slice(&MAGIC);
    b[2] = VERSION;
    b[3] = f.robot_id;
    b[4..6].copy_from_slice(&f.seq.to_le_bytes());
    b[6..8].copy_from_slice(&f.v_mm_s.to_le_bytes());
    b[8..10].copy_from_slice(&f.omega_mrad_s.to_le_bytes());
    b[10] = f.flags;
    b[11] = 0;
    let crc = crc16_ccitt_false(&b[..12]);
    b[12..14].copy_from_slice(&crc.to_le_bytes());
    Ok(b)
}

/// Checks length, magic, version and CRC in that order.
pub fn decode_command(b: &[u8]) -> Result<CommandFrame, LinkError> {
    if b.len() < FRAME_LEN {
        return Err(LinkError::ShortBuffer(b.len()));
    }
    if b[0..2] != MAGIC {
        return Err(LinkError::BadMagic);
    }
    if b[2] != VERSION {
        return Err(LinkError::BadVersion(b[2]));
    }
    let expected = u16::from_le_bytes([b[12], b[13]]);
    let computed = crc16_ccitt_false(&b[..12]);
    if expected != computed {
        return Err(LinkError::BadCrc { expected, computed });
    }
    let frame = CommandFrame {
        robot_id: b[3],
        seq: u16::from_le_bytes([b[4], b[5]]),
        v_mm_s: i16::from_le_bytes([b[6], b[7]]),
        omega_mrad_s: i16::from_le_bytes([b[8], b[9]]),
        flags: b[10],
    };
    // A CRC-valid frame can still carry reserved bits or an id out of range.
    if frame.robot_id > 31 {
        return Err(LinkError::FieldOutOfRange("robot_id"));
    }
    if frame.flags & !FLAG_ESTOP != 0 || b[11] != 0 {
        return Err(LinkError::FieldOutOfRange("flags"));
    }
    Ok(frame)
}

/// True when `a` is newer than `b` in wrapping u16 sequence space.
pub fn seq_newer(a: u16, b: u16) -> bool {
    a != b && a.wrapping_sub(b) < 0x8000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub base_latency_s: f64,
    pub jitter_s: f64,
    pub drop_prob: f64,
    /// Channel rng seed; derived from the scenario seed when absent.
    pub seed: Option<u64>,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { base_latency_s: 0.0, jitter_s: 0.0, drop_prob: 0.0, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight {
    deliver_at: f64,
    order: u64,
    link: u8,
    bytes: Vec<u8>,
}

/// A message handed out by [`Channel::poll`].
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub deliver_at: f64,
    pub link: u8,
    pub bytes: Vec<u8>,
}

/// Outcome of a send.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendOutcome {
    Dropped,
    Scheduled { deliver_at: f64 },
}

/// Seeded lossy, delayed, order-preserving channel. One link per robot id.
#[derive(Debug, Clone)]
pub struct Channel {
    params: LinkParams,
    rng: ChaCha8Rng,
    in_flight: Vec<InFlight>,
    last_delivery: BTreeMap<u8, f64>,
    sent: u64,
}

impl Channel {
    pub fn new(params: LinkParams, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(seed)),
            params,
            in_flight: Vec::new(),
            last_delivery: BTreeMap::new(),
            sent: 0,
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn send(&mut self, link: u8, bytes: &[u8], t_now: f64) -> SendOutcome {
        let u: f64 = self.rng.random();
        if u < self.params.drop_prob {
            return SendOutcome::Dropped;
        }
        let jitter = if self.params.jitter_s > 0.0 {
            self.rng.random::<f64>() * self.params.jitter_s
        } else {
            0.0
        };
        let earliest = t_now + self.params.base_latency_s + jitter;
        let last = self.last_delivery.get(&link).copied().unwrap_or(f64::NEG_INFINITY);
        let deliver_at = earliest.max(last);
        self.last_delivery.insert(link, deliver_at);
        self.in_flight.push(InFlight { deliver_at, order: self.sent, link, bytes: bytes.to_vec() });
        self.sent += 1;
        SendOutcome::Scheduled { deliver_at }
    }

    /// Removes and returns every message due by `t_now`, by delivery time
    /// and then send order.
    pub fn poll(&mut self, t_now: f64) -> Vec<Delivery> {
        let (mut due, keep): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|m| m.deliver_at <= t_now);
        self.in_flight = keep;
        due.sort_by(|a, b| a.deliver_at.total_cmp(&b.deliver_at).then(a.order.cmp(&b.order)));
        due.into_iter()
            .map(|m| Delivery { deliver_at: m.deliver_at, link: m.link, bytes: m.bytes })
            .collect()
    }
}

/// Value-style wrappers matching the channel operations.
pub fn channel_send(ch: &Channel, link: u8, bytes: &[u8], t_now: f64) -> Channel {
    let mut next = ch.clone();
    next.send(link, bytes, t_now);
    next
}

pub fn channel_poll(ch: &Channel, t_now: f64) -> (Channel, Vec<Vec<u8>>) {
    let mut next = ch.clone();
    let out = next.poll(t_now).into_iter().map(|d| d.bytes).collect();
    (next, out)
}
