use std::collections::{HashMap, HashSet};

use pdes::engine::CausalRecord;
use pdes::error::ModelError;
use pdes::model::{Emitter, Model};
use pdes::rng::RngStream;
use pdes::time::{Event, ObjectId, Payload};

/// Instances transitively generated by undone executions: the children of
/// every undone execution, then the children of any execution of those.
pub fn doomed(rec: &CausalRecord) -> HashSet<u64> {
    let undone: HashSet<u64> = rec.undone.iter().copied().collect();
    let mut by_instance: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, e) in rec.executions.iter().enumerate() {
        by_instance.entry(e.instance).or_default().push(i);
    }
    let mut seen = HashSet::new();
    let mut work: Vec<u64> =
        rec.executions.iter().filter(|e| undone.contains(&e.id)).flat_map(|e| e.children.iter().copied()).collect();
    while let Some(inst) = work.pop() {
        if !seen.insert(inst) {
            continue;
        }
        for &i in by_instance.get(&inst).into_iter().flatten() {
            work.extend(rec.executions[i].children.iter().copied());
        }
    }
    seen
}

/// Committed instances that descend from a rolled-back execution.
pub fn violations(rec: &CausalRecord) -> Vec<u64> {
    let doomed = doomed(rec);
    rec.committed.iter().copied().filter(|i| doomed.contains(i)).collect()
}

pub const LOCAL: u16 = 0;
pub const SEND: u16 = 1;
pub const RECV: u16 = 2;
pub const ECHO: u16 = 3;

/// Two objects. A holds a local event at 1 and a send at 2; the send reaches
/// B at 2.5, which echoes to itself at 2.75.
pub struct Chain;

impl Model for Chain {
    type State = Vec<(u16, u64)>;

    fn name(&self) -> &'static str {
        "chain"
    }

    fn n_objects(&self) -> usize {
        2
    }

    fn lookahead(&self) -> f64 {
        0.25
    }

    fn init(&self, obj: ObjectId, _: &mut RngStream, out: &mut Emitter) -> Self::State {
        if obj == ObjectId(0) {
            out.schedule(1.0, obj, LOCAL, Payload::EMPTY);
            out.schedule(2.0, obj, SEND, Payload::EMPTY);
        }
        Vec::new()
    }

    fn on_event(&self, s: &mut Self::State, ev: &Event, _: &mut RngStream, out: &mut Emitter) -> Result<(), ModelError> {
        s.push((ev.kind, ev.ts().as_f64().to_bits()));
        match ev.kind {
            SEND => out.schedule(out.now() + 0.5, ObjectId(1), RECV, Payload::EMPTY),
            RECV => out.schedule(out.now() + 0.25, ObjectId(1), ECHO, Payload::EMPTY),
            _ => {}
        }
        Ok(())
    }

    fn state_bytes(&self, s: &Self::State, buf: &mut Vec<u8>) {
        for (k, t) in s {
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
}
