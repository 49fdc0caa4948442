//! Session files.
//!
//! Binary layout, all integers little-endian:
//!
//! | field              | type                                   |
//! |--------------------|----------------------------------------|
//! | magic              | `b"QSYNCSES"`                          |
//! | version            | u16 (currently 1)                      |
//! | config length      | u32                                    |
//! | config             | JSON-encoded protocol configuration    |
//! | true offset        | u64                                    |
//! | alpha              | f64                                    |
//! | drift ppm          | f64                                    |
//! | transmission start | u64                                    |
//! | transmission end   | u64                                    |
//! | record length      | u64                                    |
//! | Alice length       | u64, then one symbol code per slot     |
//! | Bob length         | u64, then one outcome byte per bin     |
//!
//! Symbol codes are H=0, L=1, R=2, vacuum=3, idle=4. Outcome bytes hold the
//! H, V, L and R detectors in bits 0 to 3.

use std::io::{self, Read, Write};
use std::path::Path;

use qsync_core::{AliceString, AliceSymbol, BobRecord, GroundTruth, ProtocolConfig, Session};

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"QSYNCSES";
pub const VERSION: u16 = 1;

pub fn write_session(w: &mut impl Write, s: &Session) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&s.config).map_err(io::Error::other)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    let t = &s.truth;
    w.write_all(&(t.true_offset_bins as u64).to_le_bytes())?;
    w.write_all(&t.alpha.to_le_bytes())?;
    w.write_all(&t.drift_ppm.to_le_bytes())?;
    w.write_all(&(t.transmission_start as u64).to_le_bytes())?;
    w.write_all(&(t.transmission_end as u64).to_le_bytes())?;
    w.write_all(&(t.record_len as u64).to_le_bytes())?;
    let alice: Vec<u8> = s.alice.symbols().iter().map(|a| a.code()).collect();
    w.write_all(&(alice.len() as u64).to_le_bytes())?;
    w.write_all(&alice)?;
    w.write_all(&(s.bob.len() as u64).to_le_bytes())?;
    w.write_all(s.bob.outcomes())?;
    Ok(())
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn array<const K: usize>(r: &mut impl Read) -> io::Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn u64_len(r: &mut impl Read, what: &str) -> io::Result<usize> {
    let v = u64::from_le_bytes(array(r)?);
    usize::try_from(v).map_err(|_| invalid(format!("{what} length {v} does not fit in memory")))
}

fn bytes(r: &mut impl Read, len: usize) -> io::Result<Vec<u8>> {
    let mut v = Vec::new();
    r.take(len as u64).read_to_end(&mut v)?;
    if v.len() != len {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("expected {len} bytes, found {}", v.len()),
        ));
    }
    Ok(v)
}

/// Reads and validates a session. Any structural problem is `InvalidData` or
/// `UnexpectedEof`.
pub fn read_session(r: &mut impl Read) -> io::Result<Session> {
    if &array::<8>(r)? != MAGIC {
        return Err(invalid("not a session file (bad magic)"));
    }
    let version = u16::from_le_bytes(array(r)?);
    if version != VERSION {
        return Err(invalid(format!("unsupported session version {version}")));
    }
    let cfg_len = u32::from_le_bytes(array(r)?) as usize;
    let config: ProtocolConfig = serde_json::from_slice(&bytes(r, cfg_len)?)
        .map_err(|e| invalid(format!("config echo: {e}")))?;
    config
        .validate()
        .map_err(|e| invalid(format!("config echo: {e}")))?;
    let truth = GroundTruth {
        true_offset_bins: u64_len(r, "offset")?,
        alpha: f64::from_le_bytes(array(r)?),
        drift_ppm: f64::from_le_bytes(array(r)?),
        transmission_start: u64_len(r, "start")?,
        transmission_end: u64_len(r, "end")?,
        record_len: u64_len(r, "record")?,
    };
    let alice_len = u64_len(r, "Alice")?;
    let symbols = bytes(r, alice_len)?
        .into_iter()
        .map(|c| AliceSymbol::from_code(c).ok_or_else(|| invalid(format!("symbol code {c}"))))
        .collect::<io::Result<Vec<_>>>()?;
    let alice = AliceString::from_symbols(symbols, config.period())
        .map_err(|e| invalid(format!("Alice string: {e}")))?;
    let bob_len = u64_len(r, "Bob")?;
    let bob = BobRecord::from_outcomes(bytes(r, bob_len)?)
        .map_err(|e| invalid(format!("Bob record: {e}")))?;
    if bob.len() != truth.record_len {
        return Err(invalid(format!(
            "record holds {} bins but the ground truth says {}",
            bob.len(),
            truth.record_len
        )));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(invalid("trailing bytes after the Bob record"));
    }
    Ok(Session {
        config,
        truth,
        alice,
        bob,
    })
}

pub fn save(path: &Path, s: &Session) -> AppResult<()> {
    let mut buf = Vec::with_capacity(s.alice.len() + s.bob.len() + 256);
    write_session(&mut buf, s).map_err(|e| AppError::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<Session> {
    let data = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    read_session(&mut data.as_slice()).map_err(|e| AppError::io(path, e))
}

/// One row per record bin: Alice's symbol at that slot (blank past the end of
/// her string) and Bob's four detector bits.
pub fn write_csv(w: impl Write, s: &Session) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "alice", "bob_h", "bob_v", "bob_l", "bob_r"])?;
    let rows = s.alice.len().max(s.bob.len());
    for i in 0..rows {
        let a = s.alice.symbols().get(i).map_or("", |a| a.label());
        let b = s.bob.outcomes().get(i).copied();
        let bit = |k: u8| b.map_or(String::new(), |b| (b >> k & 1).to_string());
        out.write_record([i.to_string(), a.to_string(), bit(0), bit(1), bit(2), bit(3)])?;
    }
    out.flush()?;
    Ok(())
}
