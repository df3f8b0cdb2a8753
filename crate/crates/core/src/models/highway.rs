//! Highway traffic: one simulation object per kilometre zone.
//!
//! Each zone keeps its cars in a singly linked list. An arriving car walks
//! the whole list to count the slower cars it must pass, which sets its
//! traversal time together with the zone density. The arrival in the next
//! zone is scheduled together with the departure, both at the end of the
//! traversal, so the lookahead is the shortest possible traversal.

use crate::error::ModelError;
use crate::model::{Emitter, Model};
use crate::rng::RngStream;
use crate::time::{Event, ObjectId, Payload};

pub const CAR_ARRIVE: u16 = 0;
pub const CAR_DEPART: u16 = 1;
pub const CAR_ENTER: u16 = 2;

pub const FULL_ZONES: usize = 3000;
pub const SPEED_LIMIT: f64 = 130.0;
pub const CLASS_SPEEDS: [f64; 3] = [130.0, 120.0, 110.0];
pub const LANES: u32 = 3;
/// Density ratios for light, medium and heavy load.
pub const DENSITY_RATIOS: [f64; 3] = [0.25, 1.0, 1.5];
pub const JITTER_SIGMA: f64 = 0.05;
/// Extra traversal time per slower car passed, relative to the zone population.
const PASS_COST: f64 = 0.05;

/// Cars per kilometre that the road carries at the speed limit with a
/// two-second gap in every lane.
pub fn capacity_ref(lanes: u32, speed: f64) -> f64 {
    lanes as f64 * 3600.0 / (speed * 2.0)
}

/// Speed reduced by the density ratio once the zone is over capacity.
pub fn effective_speed(v_class: f64, density_ratio: f64) -> f64 {
    if density_ratio <= 1.0 {
        v_class
    } else {
        v_class / density_ratio
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighwayConfig {
    pub zones: usize,
    pub lanes: u32,
    /// Initial density ratio of every zone.
    pub ratios: Vec<f64>,
    pub jitter_sigma: f64,
    /// Zones where cars may leave the road. Empty means a closed loop.
    pub exit_zones: Vec<usize>,
    pub exit_probability: f64,
    /// Zones where new cars join, each at `entry_rate` cars per hour.
    pub entry_zones: Vec<usize>,
    pub entry_rate: f64,
}

impl HighwayConfig {
    /// Closed loop with every zone at `ratio`.
    pub fn uniform(zones: usize, ratio: f64) -> Self {
        HighwayConfig {
            zones,
            lanes: LANES,
            ratios: vec![ratio; zones],
            jitter_sigma: JITTER_SIGMA,
            exit_zones: Vec::new(),
            exit_probability: 0.0,
            entry_zones: Vec::new(),
            entry_rate: 0.0,
        }
    }

    /// First half at `ratio`, second half at half of it.
    pub fn unbalanced(zones: usize, ratio: f64) -> Self {
        let mut cfg = Self::uniform(zones, ratio);
        for r in cfg.ratios.iter_mut().skip(zones / 2) {
            *r = ratio / 2.0;
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Car {
    pub id: u64,
    pub class: u8,
    pub entered: f64,
    pub departs: f64,
    pub next: Option<Box<Car>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Zone {
    pub cars: Option<Box<Car>>,
    pub count: u32,
    pub passes: u64,
    pub arrivals: u64,
    pub exits: u64,
    pub entries: u64,
}

impl Zone {
    /// Appends at the tail, returning how many cars ahead are slower.
    pub fn push(&mut self, car: Car) -> u32 {
        let departs = car.departs;
        self.push_with(car, |_| departs).0
    }

    /// Appends at the tail after one pass over the list; `departs` maps the
    /// number of slower cars ahead to the departure time.
    pub fn push_with(&mut self, mut car: Car, departs: impl FnOnce(u32) -> f64) -> (u32, f64) {
        let speed = CLASS_SPEEDS[car.class as usize];
        let mut slower = 0;
        let mut link = &mut self.cars;
        while let Some(node) = link {
            if CLASS_SPEEDS[node.class as usize] < speed {
                slower += 1;
            }
            link = &mut node.next;
        }
        car.departs = departs(slower);
        let at = car.departs;
        *link = Some(Box::new(car));
        self.count += 1;
        (slower, at)
    }

    pub fn remove(&mut self, id: u64) -> Option<Car> {
        let mut link = &mut self.cars;
        loop {
            match link {
                None => return None,
                Some(node) if node.id == id => {
                    let mut car = link.take().expect("matched above");
                    *link = car.next.take();
                    self.count -= 1;
                    return Some(*car);
                }
                Some(node) => link = &mut node.next,
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Car> {
        std::iter::successors(self.cars.as_deref(), |c| c.next.as_deref())
    }
}

impl Drop for Zone {
    fn drop(&mut self) {
        // Unlink iteratively so a long list cannot overflow the stack.
        let mut link = self.cars.take();
        while let Some(mut node) = link {
            link = node.next.take();
        }
    }
}

#[derive(Clone, Debug)]
pub struct Highway {
    zones: usize,
    capacity: f64,
    initial: Vec<u32>,
    jitter_sigma: f64,
    lookahead: f64,
    exits: Vec<bool>,
    exit_probability: f64,
    entries: Vec<bool>,
    entry_rate: f64,
}

impl Highway {
    pub fn new(cfg: &HighwayConfig) -> Result<Self, ModelError> {
        if cfg.zones == 0 || cfg.lanes == 0 {
            return Err(ModelError::Config("zones and lanes must be positive".into()));
        }
        if cfg.ratios.len() != cfg.zones || cfg.ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(ModelError::Config("one finite, non-negative density ratio per zone is required".into()));
        }
        if !(0.0..0.5).contains(&cfg.jitter_sigma) {
            return Err(ModelError::Config(format!("jitter sigma {} out of range", cfg.jitter_sigma)));
        }
        if !(0.0..=1.0).contains(&cfg.exit_probability) || !(cfg.entry_rate >= 0.0) {
            return Err(ModelError::Config("exit probability or entry rate out of range".into()));
        }
        if let Some(z) = cfg.exit_zones.iter().chain(&cfg.entry_zones).find(|&&z| z >= cfg.zones) {
            return Err(ModelError::Config(format!("ramp zone {z} beyond {} zones", cfg.zones)));
        }
        if cfg.entry_zones.iter().any(|_| cfg.entry_rate <= 0.0) {
            return Err(ModelError::Config("entry zones need a positive entry rate".into()));
        }
        let capacity = capacity_ref(cfg.lanes, SPEED_LIMIT);
        let mut exits = vec![false; cfg.zones];
        let mut entries = vec![false; cfg.zones];
        cfg.exit_zones.iter().for_each(|&z| exits[z] = true);
        cfg.entry_zones.iter().for_each(|&z| entries[z] = true);
        Ok(Highway {
            zones: cfg.zones,
            capacity,
            initial: cfg.ratios.iter().map(|r| (r * capacity).round() as u32).collect(),
            jitter_sigma: cfg.jitter_sigma,
            lookahead: (-4.0 * cfg.jitter_sigma).exp() / SPEED_LIMIT,
            exits,
            exit_probability: cfg.exit_probability,
            entries,
            entry_rate: cfg.entry_rate,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn initial_cars(&self, zone: usize) -> u32 {
        self.initial[zone]
    }

    pub fn is_closed(&self) -> bool {
        !self.exits.contains(&true) && !self.entries.contains(&true)
    }

    fn next_zone(&self, zone: ObjectId) -> ObjectId {
        ObjectId::from((zone.index() + 1) % self.zones)
    }

    /// Hours to cross one kilometre, never below the lookahead.
    fn traversal(&self, class: u8, count: u32, slower: u32, rng: &mut RngStream) -> f64 {
        let ratio = count as f64 / self.capacity;
        let v = effective_speed(CLASS_SPEEDS[class as usize], ratio);
        let passing = 1.0 + PASS_COST * slower as f64 / count.max(1) as f64;
        passing * rng.lognormal_jitter(self.jitter_sigma) / v
    }

    fn admit(&self, zone: &mut Zone, obj: ObjectId, id: u64, class: u8, rng: &mut RngStream, out: &mut Emitter) {
        let now = out.now();
        // The count includes the newcomer.
        let count = zone.count + 1;
        let car = Car { id, class, entered: now, departs: 0.0, next: None };
        let (slower, departs) = zone.push_with(car, |slower| now + self.traversal(class, count, slower, rng));
        zone.passes += slower as u64;
        let exits = self.exits[obj.index()] && rng.uniform() < self.exit_probability;
        out.schedule(departs, obj, CAR_DEPART, Payload::new(id, exits as u64));
        if !exits {
            out.schedule(departs, self.next_zone(obj), CAR_ARRIVE, Payload::new(id, class as u64));
        }
    }

    /// Cars joining during one lookahead slot, Poisson with the entry rate.
    fn entering(&self, rng: &mut RngStream) -> u32 {
        let mut n = 0;
        let mut at = rng.exp_f64(1.0 / self.entry_rate);
        while at < self.lookahead {
            n += 1;
            at += rng.exp_f64(1.0 / self.entry_rate);
        }
        n
    }
}

impl Model for Highway {
    type State = Zone;

    fn name(&self) -> &'static str {
        "highway"
    }

    fn n_objects(&self) -> usize {
        self.zones
    }

    fn lookahead(&self) -> f64 {
        self.lookahead
    }

    fn init(&self, obj: ObjectId, rng: &mut RngStream, out: &mut Emitter) -> Zone {
        let mut zone = Zone::default();
        for k in 0..self.initial[obj.index()] {
            let id = (obj.0 as u64) << 32 | k as u64;
            let class = rng.below(CLASS_SPEEDS.len() as u64) as u8;
            // Cars start spread along the zone.
            let t = self.traversal(class, self.initial[obj.index()], 0, rng) * rng.uniform();
            zone.push(Car { id, class, entered: 0.0, departs: t, next: None });
            out.schedule(t, obj, CAR_DEPART, Payload::new(id, 0));
            out.schedule(t, self.next_zone(obj), CAR_ARRIVE, Payload::new(id, class as u64));
        }
        if self.entries[obj.index()] {
            out.schedule(self.lookahead, obj, CAR_ENTER, Payload::EMPTY);
        }
        zone
    }

    fn on_event(&self, zone: &mut Zone, event: &Event, rng: &mut RngStream, out: &mut Emitter) -> Result<(), ModelError> {
        let obj = event.dst();
        let now = out.now();
        match event.kind {
            CAR_ARRIVE => {
                zone.arrivals += 1;
                self.admit(zone, obj, event.payload.word(0), event.payload.word(1) as u8, rng, out);
            }
            CAR_DEPART => {
                let id = event.payload.word(0);
                zone.remove(id).ok_or_else(|| ModelError::Inconsistent(format!("car {id} not in zone {obj}")))?;
                if event.payload.word(1) == 1 {
                    zone.exits += 1;
                }
            }
            CAR_ENTER => {
                for _ in 0..self.entering(rng) {
                    let id = 1 << 63 | (obj.0 as u64) << 32 | zone.entries;
                    zone.entries += 1;
                    let class = rng.below(CLASS_SPEEDS.len() as u64) as u8;
                    self.admit(zone, obj, id, class, rng, out);
                }
                out.schedule(now + self.lookahead, obj, CAR_ENTER, Payload::EMPTY);
            }
            k => return Err(ModelError::Inconsistent(format!("unknown highway event kind {k}"))),
        }
        Ok(())
    }

    fn state_bytes(&self, z: &Zone, buf: &mut Vec<u8>) {
        for v in [z.count as u64, z.passes, z.arrivals, z.exits, z.entries] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for c in z.iter() {
            for v in [c.id, c.class as u64, c.entered.to_bits(), c.departs.to_bits()] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}
