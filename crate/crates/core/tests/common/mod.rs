#![allow(dead_code)]

pub mod causal;

use pdes::error::ModelError;
use pdes::model::{Emitter, Model};
use pdes::rng::RngStream;
use pdes::time::{Event, ObjectId, Payload};

/// Classic PHOLD: every event forwards one event to a random object.
pub struct Phold {
    pub n: usize,
    pub per_object: usize,
    pub lookahead: f64,
    pub mean: f64,
    /// Optional event-count bound per object; further events are absorbed.
    pub horizon: Option<u64>,
}

impl Phold {
    pub fn new(n: usize, lookahead: f64) -> Self {
        Phold { n, per_object: 2, lookahead, mean: 1.0, horizon: None }
    }
}

#[derive(Clone, Debug)]
pub struct PholdState {
    pub count: u64,
    pub acc: u64,
}

impl Model for Phold {
    type State = PholdState;

    fn name(&self) -> &'static str {
        "phold"
    }

    fn n_objects(&self) -> usize {
        self.n
    }

    fn lookahead(&self) -> f64 {
        self.lookahead
    }

    fn init(&self, obj: ObjectId, rng: &mut RngStream, out: &mut Emitter) -> PholdState {
        for _ in 0..self.per_object {
            out.schedule(self.lookahead + rng.exp_f64(self.mean), obj, 0, Payload::EMPTY);
        }
        PholdState { count: 0, acc: obj.0 as u64 }
    }

    fn on_event(
        &self,
        state: &mut PholdState,
        event: &Event,
        rng: &mut RngStream,
        out: &mut Emitter,
    ) -> Result<(), ModelError> {
        state.count += 1;
        state.acc = state.acc.rotate_left(7) ^ event.key.src.0 as u64 ^ event.ts().as_f64().to_bits();
        if self.horizon.is_some_and(|h| state.count >= h) {
            return Ok(());
        }
        let dst = ObjectId(rng.below(self.n as u64) as u32);
        out.schedule(out.now() + self.lookahead + rng.exp_f64(self.mean), dst, 0, Payload::new(state.count, 0));
        Ok(())
    }

    fn state_bytes(&self, state: &PholdState, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&state.count.to_le_bytes());
        buf.extend_from_slice(&state.acc.to_le_bytes());
    }
}
