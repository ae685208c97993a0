//! Skilled driving logs: sessions of contiguous 100 ms steps.
//!
//! File format: UTF-8 text; lines starting with `#` are comments; every other
//! line is one step as comma-separated decimals in this order:
//!
//! `session, tick, steer, pedal, speed, yaw, pitch, roll, d0, …, d179`
//!
//! Control is physical (`[-1, 1]`), speed m/s, angles radians, distances
//! meters (entry 0 = right, 90 = ahead, 179 = left). Rows of a session are
//! consecutive and their ticks contiguous.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::preprocess::{RawFrame, DISTANCE_LEN, INPUT_LEN};
use crate::sim::PhysicalControl;

pub const HEADER: &str = "# session,tick,steer,pedal,speed,yaw,pitch,roll,d0..d179";
const FIELDS: usize = 8 + DISTANCE_LEN;

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub id: u64,
    pub start_tick: u64,
    pub frames: Vec<RawFrame>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Normalized model inputs, one row per step.
    pub fn inputs(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.frames.len(), INPUT_LEN));
        for (mut row, f) in x.rows_mut().into_iter().zip(&self.frames) {
            row.assign(&f.to_input());
        }
        x
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sessions: Vec<Session>,
}

impl Dataset {
    pub fn total_steps(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        let mut line = String::new();
        for s in &self.sessions {
            for (i, f) in s.frames.iter().enumerate() {
                line.clear();
                write!(
                    line,
                    "{},{},{},{},{},{},{},{}",
                    s.id,
                    s.start_tick + i as u64,
                    f.ci.steer,
                    f.ci.pedal,
                    f.speed,
                    f.yaw,
                    f.pitch,
                    f.roll
                )
                .unwrap();
                for d in &f.distances {
                    write!(line, ",{d}").unwrap();
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut sessions: Vec<Session> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Dataset(format!("line {}: {msg}", lineno + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != FIELDS {
                return Err(bad(format!("expected {FIELDS} fields, found {}", cols.len())));
            }
            let id: u64 = cols[0].parse().map_err(|e| bad(format!("session: {e}")))?;
            let tick: u64 = cols[1].parse().map_err(|e| bad(format!("tick: {e}")))?;
            let mut v = [0.0f64; FIELDS - 2];
            for (slot, c) in v.iter_mut().zip(&cols[2..]) {
                *slot = c.parse().map_err(|e| bad(format!("{c:?}: {e}")))?;
                if !slot.is_finite() {
                    return Err(bad(format!("non-finite value {c}")));
                }
            }
            let mut distances = [0.0; DISTANCE_LEN];
            distances.copy_from_slice(&v[6..]);
            let frame = RawFrame {
                ci: PhysicalControl::new(v[0], v[1]),
                speed: v[2],
                yaw: v[3],
                pitch: v[4],
                roll: v[5],
                distances,
            };
            match sessions.last_mut() {
                Some(s) if s.id == id => {
                    let expected = s.start_tick + s.frames.len() as u64;
                    if tick != expected {
                        return Err(bad(format!("tick {tick} breaks session {id} (expected {expected})")));
                    }
                    s.frames.push(frame);
                }
                _ => {
                    if sessions.iter().any(|s| s.id == id) {
                        return Err(bad(format!("session {id} is not contiguous")));
                    }
                    sessions.push(Session {
                        id,
                        start_tick: tick,
                        frames: vec![frame],
                    });
                }
            }
        }
        Ok(Self { sessions })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
