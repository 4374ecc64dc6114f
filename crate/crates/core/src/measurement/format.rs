//! Plain-text serialization of a [`MeasurementSet`].
//!
//! ```text
//! swarmloc-measurements 1
//! n 5
//! bandwidth_hz 30000000
//! frame_s 0.02
//! carrier_hz 5000000000
//! speed_of_light 299792458
//! noise quantized
//! pair 0 1
//! 0 0 -3 1
//! 1 20 6 3
//! ...
//! ```
//!
//! Header keys may appear in any order before the first `pair` block. Each
//! `pair i j` block holds `N - 1` rows `m distance velocity truth_k`, in list
//! order. UAV ids are zero-based. Blank lines and `#` comments are ignored.
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::io::{BufRead, Write};

use super::{ordered_pairs, AssignmentMaps, ChannelLists, MeasurementSet, NoiseModel, OtfsGridConfig, PathEntry};
use crate::error::{Error, Result};

const MAGIC: &str = "swarmloc-measurements";
const VERSION: u32 = 1;

pub fn write_measurements<W: Write>(set: &MeasurementSet, mut out: W) -> Result<()> {
    let n = set.n();
    let g = &set.grid;
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "n {n}")?;
    writeln!(out, "bandwidth_hz {}", g.bandwidth)?;
    writeln!(out, "frame_s {}", g.frame_duration)?;
    writeln!(out, "carrier_hz {}", g.carrier)?;
    writeln!(out, "speed_of_light {}", g.speed_of_light)?;
    writeln!(out, "noise {}", g.noise)?;
    for (i, j) in ordered_pairs(n) {
        writeln!(out, "pair {i} {j}")?;
        for (m, e) in set.lists.list(i, j).iter().enumerate() {
            let k = set.truth_maps.reflector_at(i, j, m).map_or(-1, |k| k as i64);
            writeln!(out, "{m} {} {} {k}", e.distance, e.velocity)?;
        }
    }
    Ok(())
}

pub fn read_measurements<R: BufRead>(input: R) -> Result<MeasurementSet> {
    let mut n: Option<usize> = None;
    let mut grid = OtfsGridConfig::default();
    let mut lists: Option<ChannelLists> = None;
    let mut maps: Option<AssignmentMaps> = None;
    let mut current: Option<(usize, usize)> = None;
    let mut seen_pairs = 0usize;
    let mut saw_magic = false;

    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let perr = |message: String| Error::Parse { line: lineno, message };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| perr(format!("bad number {s:?}")))
        };
        let int = |s: &str| -> Result<usize> { s.parse::<usize>().map_err(|_| perr(format!("bad integer {s:?}"))) };

        if !saw_magic {
            if tok.len() != 2 || tok[0] != MAGIC || tok[1] != VERSION.to_string() {
                return Err(perr(format!("expected \"{MAGIC} {VERSION}\"")));
            }
            saw_magic = true;
            continue;
        }

        match tok[0] {
            "pair" => {
                let n = n.ok_or_else(|| perr("pair block before `n`".into()))?;
                if tok.len() != 3 {
                    return Err(perr("expected `pair i j`".into()));
                }
                let (i, j) = (int(tok[1])?, int(tok[2])?);
                if i >= n || j >= n || i == j {
                    return Err(perr(format!("invalid pair ({i}, {j})")));
                }
                if let Some(prev) = current {
                    check_block_complete(prev, lists.as_ref().unwrap(), maps.as_ref().unwrap(), lineno)?;
                }
                if lists.is_none() {
                    lists = Some(ChannelLists::zeros(n));
                    maps = Some(AssignmentMaps::unset(n));
                }
                lists.as_mut().unwrap().list_mut(i, j).clear();
                current = Some((i, j));
                seen_pairs += 1;
            }
            key if current.is_none() => {
                if tok.len() != 2 {
                    return Err(perr(format!("expected `{key} <value>`")));
                }
                match key {
                    "n" => {
                        let v = int(tok[1])?;
                        if v < 3 {
                            return Err(perr("n must be at least 3".into()));
                        }
                        n = Some(v);
                    }
                    "bandwidth_hz" => grid.bandwidth = num(tok[1])?,
                    "frame_s" => grid.frame_duration = num(tok[1])?,
                    "carrier_hz" => grid.carrier = num(tok[1])?,
                    "speed_of_light" => grid.speed_of_light = num(tok[1])?,
                    "noise" => grid.noise = tok[1].parse::<NoiseModel>().map_err(|e| perr(e.to_string()))?,
                    other => return Err(perr(format!("unknown header key {other:?}"))),
                }
            }
            _ => {
                let (i, j) = current.unwrap();
                if tok.len() != 4 {
                    return Err(perr("expected `m distance velocity truth_k`".into()));
                }
                let n = n.unwrap();
                let m = int(tok[0])?;
                let list = lists.as_mut().unwrap().list_mut(i, j);
                if m != list.len() || m >= n - 1 {
                    return Err(perr(format!("entry index {m} out of order")));
                }
                list.push(PathEntry { distance: num(tok[1])?, velocity: num(tok[2])? });
                let k: i64 = tok[3].parse().map_err(|_| perr(format!("bad reflector id {:?}", tok[3])))?;
                if k >= 0 {
                    let k = k as usize;
                    if k >= n || k == i {
                        return Err(perr(format!("invalid reflector {k} on pair ({i}, {j})")));
                    }
                    maps.as_mut().unwrap().set(i, j, k, m);
                }
            }
        }
    }

    let n = n.ok_or_else(|| Error::Parse { line: 0, message: "missing `n`".into() })?;
    let (lists, maps) = match (lists, maps) {
        (Some(l), Some(m)) => (l, m),
        _ => return Err(Error::Parse { line: 0, message: "no pair blocks".into() }),
    };
    if let Some(prev) = current {
        check_block_complete(prev, &lists, &maps, 0)?;
    }
    if seen_pairs != n * (n - 1) {
        return Err(Error::Parse { line: 0, message: format!("expected {} pair blocks, found {seen_pairs}", n * (n - 1)) });
    }
    grid.validate()?;
    lists.validate()?;
    Ok(MeasurementSet { lists, truth_maps: maps, grid })
}

fn check_block_complete(pair: (usize, usize), lists: &ChannelLists, maps: &AssignmentMaps, line: usize) -> Result<()> {
    let (i, j) = pair;
    if lists.list(i, j).len() != lists.n() - 1 {
        return Err(Error::Parse { line, message: format!("pair ({i}, {j}) block is incomplete") });
    }
    if !maps.pair_is_bijective(i, j) {
        return Err(Error::Parse { line, message: format!("pair ({i}, {j}) truth map is not a bijection") });
    }
    Ok(())
}
