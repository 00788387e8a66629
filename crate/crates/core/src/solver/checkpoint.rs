//! Checkpoints: `u.bin`, `v.bin` (binary snapshots) and `state.csv`, one
//! header line plus one line with the step counter and all running totals.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ClipLog, Cumulative, SimState};
use crate::error::{Error, Result};
use crate::grid::{read_snapshot_binary, write_snapshot_binary, Grid};

pub const CHECKPOINT_COLUMNS: [&str; 13] = [
    "t",
    "steps",
    "mu",
    "cum_grad_v_sq",
    "cum_consumption",
    "cum_u_dev_l1",
    "cum_fisher_u",
    "cum_hess_v_sq",
    "cum_weighted_grad_v",
    "cum_dissipation",
    "clip_events",
    "clip_total_mass",
    "clip_max_mass",
];

pub fn write_checkpoint(dir: &Path, grid: &Grid, state: &SimState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut u = BufWriter::new(File::create(dir.join("u.bin"))?);
    write_snapshot_binary(&mut u, grid, state.t, &state.u)?;
    u.flush()?;
    let mut v = BufWriter::new(File::create(dir.join("v.bin"))?);
    write_snapshot_binary(&mut v, grid, state.t, &state.v)?;
    v.flush()?;
    let c = &state.cumulative;
    let mut w = BufWriter::new(File::create(dir.join("state.csv"))?);
    writeln!(w, "{}", CHECKPOINT_COLUMNS.join(","))?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        state.t,
        state.steps,
        state.mu,
        c.grad_v_sq,
        c.consumption,
        c.u_dev_l1,
        c.fisher_u,
        c.hess_v_sq,
        c.weighted_grad_v,
        c.dissipation,
        state.clip.events,
        state.clip.total_mass,
        state.clip.max_mass
    )?;
    w.flush()?;
    Ok(())
}

/// Restore a state written by [`write_checkpoint`]; the snapshots must match `grid`.
pub fn read_checkpoint(dir: &Path, grid: &Grid) -> Result<SimState> {
    let u = read_snapshot_binary(BufReader::new(File::open(dir.join("u.bin"))?))?;
    let v = read_snapshot_binary(BufReader::new(File::open(dir.join("v.bin"))?))?;
    for s in [&u, &v] {
        if s.resolution != grid.resolution() {
            return Err(Error::Format(format!("checkpoint resolution {} does not match grid {}", s.resolution, grid.resolution())));
        }
    }
    let mut lines = BufReader::new(File::open(dir.join("state.csv"))?).lines();
    let header = lines.next().ok_or_else(|| Error::Format("state.csv is empty".into()))??;
    if header.trim() != CHECKPOINT_COLUMNS.join(",") {
        return Err(Error::Format(format!("unexpected state.csv header '{header}'")));
    }
    let line = lines.next().ok_or_else(|| Error::Format("state.csv has no data line".into()))??;
    let cols: Vec<&str> = line.trim().split(',').collect();
    if cols.len() != CHECKPOINT_COLUMNS.len() {
        return Err(Error::Format(format!("state.csv has {} columns, expected {}", cols.len(), CHECKPOINT_COLUMNS.len())));
    }
    let f = |i: usize| -> Result<f64> {
        cols[i].parse().map_err(|e| Error::Format(format!("{}: '{}': {e}", CHECKPOINT_COLUMNS[i], cols[i])))
    };
    let n = |i: usize| -> Result<u64> {
        cols[i].parse().map_err(|e| Error::Format(format!("{}: '{}': {e}", CHECKPOINT_COLUMNS[i], cols[i])))
    };
    Ok(SimState {
        t: f(0)?,
        steps: n(1)?,
        mu: f(2)?,
        cumulative: Cumulative {
            grad_v_sq: f(3)?,
            consumption: f(4)?,
            u_dev_l1: f(5)?,
            fisher_u: f(6)?,
            hess_v_sq: f(7)?,
            weighted_grad_v: f(8)?,
            dissipation: f(9)?,
        },
        clip: ClipLog { events: n(10)?, total_mass: f(11)?, max_mass: f(12)? },
        u: u.field,
        v: v.field,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{run, run_from, SimParams};
    use super::*;
    use crate::grid::{make_grid, Geometry, Resolution};
    use crate::initial::InitialPair;

    #[test]
    fn restart_is_bit_exact() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(32)).unwrap();
        let raw_u = g.field_from_fn(|p| 0.5 + (-40.0 * (p.x - 0.3).powi(2)).exp());
        let init = InitialPair::mollified(&g, &raw_u, &g.field_from_fn(|p| 1.0 + 0.5 * p.x), 0.1).unwrap();
        let full = run(&g, &init, &SimParams::fixed(0.1, 1e-4, 0.02, 50), &mut ()).unwrap();
        let half = run(&g, &init, &SimParams::fixed(0.1, 1e-4, 0.01, 50), &mut ()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(dir.path(), &g, &half.final_state).unwrap();
        let restored = read_checkpoint(dir.path(), &g).unwrap();
        assert_eq!(restored, half.final_state);
        let resumed = run_from(&g, restored, &SimParams::fixed(0.1, 1e-4, 0.02, 50), &mut ()).unwrap();
        assert_eq!(resumed.final_state, full.final_state);
        assert_eq!(resumed.records.last(), full.records.last());
    }

    #[test]
    fn rejects_mismatched_grid() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(8)).unwrap();
        let init = InitialPair::new(&g, g.constant(1.0), g.constant(1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(dir.path(), &g, &super::super::SimState::new(&init)).unwrap();
        let other = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(16)).unwrap();
        assert!(read_checkpoint(dir.path(), &other).is_err());
    }
}
