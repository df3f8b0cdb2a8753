use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use crossbeam::utils::CachePadded;

use crate::time::ObjectId;

/// Spins briefly, then yields so oversubscribed runs still make progress.
#[inline]
pub(crate) fn backoff(spins: &mut u32) {
    *spins += 1;
    if *spins < 64 {
        std::hint::spin_loop();
    } else {
        std::thread::yield_now();
    }
}

/// Sense-reversing centralized barrier over one arrival counter.
pub(crate) struct Barrier {
    n: usize,
    count: CachePadded<AtomicUsize>,
    sense: CachePadded<AtomicBool>,
}

impl Barrier {
    pub fn new(n: usize) -> Self {
        Barrier { n: n.max(1), count: CachePadded::new(AtomicUsize::new(0)), sense: CachePadded::new(AtomicBool::new(false)) }
    }

    /// Blocks until all `n` threads arrive. The last arriver runs `leader`
    /// before anyone is released. Returns true on the leader.
    pub fn wait(&self, local_sense: &mut bool, leader: impl FnOnce()) -> bool {
        *local_sense = !*local_sense;
        if self.count.fetch_add(1, Ordering::AcqRel) + 1 == self.n {
            leader();
            self.count.store(0, Ordering::Relaxed);
            self.sense.store(*local_sense, Ordering::Release);
            true
        } else {
            let mut spins = 0;
            while self.sense.load(Ordering::Acquire) != *local_sense {
                backoff(&mut spins);
            }
            false
        }
    }
}

/// One dispensing counter per NUMA node over the IDs homed there.
pub(crate) struct PickCounters {
    ids: Vec<Vec<ObjectId>>,
    next: Vec<CachePadded<AtomicUsize>>,
}

impl PickCounters {
    pub fn new(object_home: &[usize], n_nodes: usize) -> Self {
        let n_nodes = n_nodes.max(1);
        let mut ids = vec![Vec::new(); n_nodes];
        for (i, &home) in object_home.iter().enumerate() {
            ids[home % n_nodes].push(ObjectId::from(i));
        }
        PickCounters { next: (0..n_nodes).map(|_| CachePadded::new(AtomicUsize::new(0))).collect(), ids }
    }

    /// Next undispensed ID, local node first, then nodes `my_node+1, my_node+2, ...`
    /// modulo the node count.
    pub fn pick(&self, my_node: usize) -> Option<ObjectId> {
        let n = self.ids.len();
        for step in 0..n {
            let node = (my_node + step) % n;
            let ids = &self.ids[node];
            if self.next[node].load(Ordering::Relaxed) >= ids.len() {
                continue;
            }
            let i = self.next[node].fetch_add(1, Ordering::AcqRel);
            if let Some(&id) = ids.get(i) {
                return Some(id);
            }
        }
        None
    }

    /// Re-arms every counter; only called while all pickers are parked.
    pub fn reset(&self) {
        for c in &self.next {
            c.store(0, Ordering::Relaxed);
        }
    }
}
