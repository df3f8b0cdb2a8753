//! Personal communication system: hexagonal cells with channel pools.
//!
//! New calls arrive at each cell as a Poisson process, hold a channel for an
//! exponential duration and may hand off to a neighbouring cell first. Every
//! channel set-up scans all busy channels to derive the transmit power.

use std::collections::VecDeque;

use crate::error::ModelError;
use crate::model::{Emitter, Model};
use crate::rng::RngStream;
use crate::time::{Event, ObjectId, Payload};

pub const CALL_ARRIVAL: u16 = 0;
pub const CALL_END: u16 = 1;
pub const HANDOFF_LEAVE: u16 = 2;
pub const HANDOFF_ARRIVE: u16 = 3;

pub const FULL_CELLS: usize = 4096;
pub const FULL_CHANNELS: u32 = 5000;
/// Mean busy channels per cell at full scale for light, medium and heavy load.
pub const FULL_TARGETS: [f64; 3] = [120.0, 600.0, 1200.0];

const P_MIN: f64 = 1e-3;
const P_MAX: f64 = 2.0;
const NOISE_FLOOR: f64 = 40.0;
const PATH_LOSS: f64 = 3.5;
const D_MIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct PcsConfig {
    /// Rounded to the nearest square.
    pub cells: usize,
    pub channels: u32,
    /// Mean busy channels per cell.
    pub target_busy: f64,
    pub call_mean: f64,
    pub move_mean: f64,
    /// Minimum event latency in minutes; doubles as the lookahead.
    pub min_delay: f64,
}

impl PcsConfig {
    /// `target_full` is the full-scale busy target; it is scaled by
    /// `channels / 5000`.
    pub fn new(cells: usize, channels: u32, target_full: f64) -> Self {
        PcsConfig {
            cells,
            channels,
            target_busy: target_full * channels as f64 / FULL_CHANNELS as f64,
            call_mean: 2.0,
            move_mean: 5.0,
            min_delay: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pcs {
    side: usize,
    channels: u32,
    arrival_rate: f64,
    call_mean: f64,
    move_mean: f64,
    min_delay: f64,
    neighbors: Vec<Vec<ObjectId>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Channel {
    pub busy: bool,
    pub power: f64,
    pub distance: f64,
    pub end_ts: f64,
    pub call: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcsCell {
    pub channels: Vec<Channel>,
    /// Indices of busy channels, so power scans touch only those.
    busy: Vec<u32>,
    position: Vec<u32>,
    free: Vec<u32>,
    pub row: u32,
    pub col: u32,
    pub next_call: u64,
    pub blocked: u64,
    pub accepted: u64,
    pub handoffs_in: u64,
    /// Integral of busy_count over time, up to `last_change`.
    pub busy_area: f64,
    pub last_change: f64,
    /// Scheduled, not yet delivered, arrival timestamps in order.
    arrivals: VecDeque<f64>,
}

impl PcsCell {
    pub fn new(channels: u32, row: u32, col: u32) -> Self {
        PcsCell {
            channels: vec![Channel::default(); channels as usize],
            busy: Vec::new(),
            position: vec![u32::MAX; channels as usize],
            free: (0..channels).rev().collect(),
            row,
            col,
            next_call: 0,
            blocked: 0,
            accepted: 0,
            handoffs_in: 0,
            busy_area: 0.0,
            last_change: 0.0,
            arrivals: VecDeque::new(),
        }
    }

    pub fn busy_count(&self) -> usize {
        self.busy.len()
    }

    pub fn busy_slots(&self) -> &[u32] {
        &self.busy
    }

    fn advance_area(&mut self, now: f64) {
        self.busy_area += self.busy.len() as f64 * (now - self.last_change);
        self.last_change = now;
    }

    /// Occupancy integral extended to `now`.
    pub fn area_until(&self, now: f64) -> f64 {
        self.busy_area + self.busy.len() as f64 * (now - self.last_change).max(0.0)
    }

    /// Takes a free channel, or `None` when all are busy.
    pub fn occupy(&mut self, power: f64, distance: f64, end_ts: f64) -> Option<(u32, u64)> {
        let slot = self.free.pop()?;
        let call = self.next_call;
        self.next_call += 1;
        self.channels[slot as usize] = Channel { busy: true, power, distance, end_ts, call };
        self.position[slot as usize] = self.busy.len() as u32;
        self.busy.push(slot);
        Some((slot, call))
    }

    pub fn release(&mut self, slot: u32, call: u64) -> Result<(), ModelError> {
        let ch = self
            .channels
            .get_mut(slot as usize)
            .ok_or_else(|| ModelError::Inconsistent(format!("channel {slot} out of range")))?;
        if !ch.busy || ch.call != call {
            return Err(ModelError::Inconsistent(format!("release of channel {slot} for call {call} that does not hold it")));
        }
        ch.busy = false;
        let at = self.position[slot as usize] as usize;
        self.busy.swap_remove(at);
        if let Some(&moved) = self.busy.get(at) {
            self.position[moved as usize] = at as u32;
        }
        self.position[slot as usize] = u32::MAX;
        self.free.push(slot);
        Ok(())
    }
}

/// Power for a new call: interference from every busy channel, attenuated by
/// distance, raises the floor power. Scans every busy slot.
pub fn compute_power(cell: &PcsCell, fading: f64) -> f64 {
    let mut interference = 0.0;
    for &slot in &cell.busy {
        let ch = &cell.channels[slot as usize];
        interference += ch.power * ch.distance.max(D_MIN).powf(-PATH_LOSS);
    }
    (P_MIN * (1.0 + fading * interference / NOISE_FLOOR)).clamp(P_MIN, P_MAX)
}

/// Neighbours of `(row, col)` on an odd-row-offset hexagonal tiling.
pub fn hex_neighbors(side: usize, row: usize, col: usize) -> Vec<(usize, usize)> {
    let (r, c) = (row as isize, col as isize);
    let shift = if row.is_multiple_of(2) { -1 } else { 0 };
    let cand = [(r, c - 1), (r, c + 1), (r - 1, c + shift), (r - 1, c + shift + 1), (r + 1, c + shift), (r + 1, c + shift + 1)];
    cand.iter()
        .filter(|&&(a, b)| a >= 0 && b >= 0 && (a as usize) < side && (b as usize) < side)
        .map(|&(a, b)| (a as usize, b as usize))
        .collect()
}

impl Pcs {
    pub fn new(cfg: &PcsConfig) -> Result<Self, ModelError> {
        if cfg.cells == 0 || cfg.channels == 0 {
            return Err(ModelError::Config("cells and channels must be positive".into()));
        }
        if !(cfg.target_busy > 0.0 && cfg.call_mean > 0.0 && cfg.move_mean > 0.0 && cfg.min_delay > 0.0) {
            return Err(ModelError::Config("load target, means and minimum delay must be positive".into()));
        }
        let side = ((cfg.cells as f64).sqrt().round() as usize).max(1);
        let mut neighbors = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                neighbors.push(hex_neighbors(side, r, c).into_iter().map(|(a, b)| ObjectId::from(a * side + b)).collect());
            }
        }
        Ok(Pcs {
            side,
            channels: cfg.channels,
            arrival_rate: cfg.target_busy / cfg.call_mean,
            call_mean: cfg.call_mean,
            move_mean: cfg.move_mean,
            min_delay: cfg.min_delay,
            neighbors,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    /// New calls per minute per cell.
    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn neighbors(&self, cell: ObjectId) -> &[ObjectId] {
        &self.neighbors[cell.index()]
    }

    fn delay(&self, d: f64) -> f64 {
        d.max(self.min_delay)
    }

    /// Extends the arrival stream so the next undelivered arrival is followed
    /// by at least one lookahead of already-scheduled arrivals.
    fn extend_arrivals(&self, cell: ObjectId, state: &mut PcsCell, rng: &mut RngStream, out: &mut Emitter) {
        let mut horizon = state.arrivals.back().copied().unwrap_or(out.now());
        loop {
            if let Some(&front) = state.arrivals.front() {
                if horizon >= front + self.min_delay {
                    break;
                }
            }
            horizon += rng.exp_f64(1.0 / self.arrival_rate);
            state.arrivals.push_back(horizon);
            out.schedule(horizon, cell, CALL_ARRIVAL, Payload::EMPTY);
        }
    }

    /// Sets up a call of `remaining` minutes on a free channel, scheduling its
    /// end or its handoff to a neighbour.
    fn admit(&self, cell: ObjectId, state: &mut PcsCell, remaining: f64, rng: &mut RngStream, out: &mut Emitter) -> bool {
        let now = out.now();
        let fading = 0.5 + rng.uniform();
        let power = compute_power(state, fading);
        let distance = 0.1 + 0.9 * rng.uniform();
        let move_after = rng.exp_f64(self.move_mean);
        let neighbors = &self.neighbors[cell.index()];
        let hands_off = move_after < remaining && !neighbors.is_empty();
        let end = if hands_off { now + self.delay(move_after) } else { now + self.delay(remaining) };
        let Some((slot, call)) = state.occupy(power, distance, end) else {
            state.blocked += 1;
            return false;
        };
        if hands_off {
            let target = neighbors[rng.below(neighbors.len() as u64) as usize];
            out.schedule(end, cell, HANDOFF_LEAVE, Payload::new(slot as u64, call));
            out.schedule(end, target, HANDOFF_ARRIVE, Payload::new((remaining - move_after).to_bits(), 0));
        } else {
            out.schedule(end, cell, CALL_END, Payload::new(slot as u64, call));
        }
        true
    }
}

impl Model for Pcs {
    type State = PcsCell;

    fn name(&self) -> &'static str {
        "pcs"
    }

    fn n_objects(&self) -> usize {
        self.side * self.side
    }

    fn lookahead(&self) -> f64 {
        self.min_delay
    }

    fn init(&self, obj: ObjectId, rng: &mut RngStream, out: &mut Emitter) -> PcsCell {
        let (row, col) = (obj.index() / self.side, obj.index() % self.side);
        let mut cell = PcsCell::new(self.channels, row as u32, col as u32);
        self.extend_arrivals(obj, &mut cell, rng, out);
        cell
    }

    fn on_event(&self, state: &mut PcsCell, event: &Event, rng: &mut RngStream, out: &mut Emitter) -> Result<(), ModelError> {
        let now = out.now();
        let cell = event.dst();
        state.advance_area(now);
        match event.kind {
            CALL_ARRIVAL => {
                if state.arrivals.pop_front() != Some(now) {
                    return Err(ModelError::Inconsistent(format!("unexpected arrival at {now} in cell {cell}")));
                }
                self.extend_arrivals(cell, state, rng, out);
                let duration = rng.exp_f64(self.call_mean);
                if self.admit(cell, state, duration, rng, out) {
                    state.accepted += 1;
                }
            }
            HANDOFF_ARRIVE => {
                let remaining = event.payload.float(0);
                if self.admit(cell, state, remaining, rng, out) {
                    state.handoffs_in += 1;
                }
            }
            CALL_END | HANDOFF_LEAVE => {
                state.release(event.payload.word(0) as u32, event.payload.word(1))?;
            }
            k => return Err(ModelError::Inconsistent(format!("unknown PCS event kind {k}"))),
        }
        Ok(())
    }

    fn state_bytes(&self, s: &PcsCell, buf: &mut Vec<u8>) {
        for v in [s.busy.len() as u64, s.next_call, s.blocked, s.accepted, s.handoffs_in] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&s.busy_area.to_bits().to_le_bytes());
        for &slot in &s.busy {
            let ch = &s.channels[slot as usize];
            buf.extend_from_slice(&slot.to_le_bytes());
            for v in [ch.power.to_bits(), ch.distance.to_bits(), ch.end_ts.to_bits(), ch.call] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for a in &s.arrivals {
            buf.extend_from_slice(&a.to_bits().to_le_bytes());
        }
    }
}
