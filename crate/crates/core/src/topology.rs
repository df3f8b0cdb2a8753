//! Hardware topology and placement of workers and object homes on NUMA nodes.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TopologyError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    /// Logical CPU ids grouped by physical core.
    pub cores: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<String>,
}

impl Node {
    pub fn cpus(&self) -> impl Iterator<Item = usize> + '_ {
        self.cores.iter().flatten().copied()
    }

    pub fn n_cpus(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementPolicy {
    Clustered,
    Circular,
}

/// Where each worker runs and where each object's state is homed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub thread_to_cpu: Vec<usize>,
    pub thread_node: Vec<usize>,
    pub object_home: Vec<usize>,
    pub n_nodes: usize,
}

const CISC_JSON: &str = include_str!("../fixtures/cisc.json");
const RISC_JSON: &str = include_str!("../fixtures/risc.json");

impl Topology {
    pub fn new(nodes: Vec<Node>) -> Result<Self, TopologyError> {
        let t = Topology { nodes };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let mut seen = HashSet::new();
        for cpu in self.nodes.iter().flat_map(Node::cpus) {
            if !seen.insert(cpu) {
                return Err(TopologyError::DuplicateCpu(cpu));
            }
        }
        if seen.is_empty() {
            return Err(TopologyError::Empty);
        }
        Ok(())
    }

    /// One node with every CPU on its own core.
    pub fn flat(n_cpus: usize) -> Self {
        Topology { nodes: vec![Node { cores: (0..n_cpus.max(1)).map(|c| vec![c]).collect(), memory: None }] }
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let t: Topology = serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_file(path: &Path) -> Result<Self, TopologyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TopologyError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Two-socket x86 server: 2 nodes, 10 cores each, 2 threads per core.
    pub fn cisc_fixture() -> Self {
        Self::from_json(CISC_JSON).expect("bundled fixture is valid")
    }

    /// Four-node POWER server: 3 cores per node, 8 threads per core.
    pub fn risc_fixture() -> Self {
        Self::from_json(RISC_JSON).expect("bundled fixture is valid")
    }

    /// Reads the machine topology from sysfs, falling back to a flat topology.
    pub fn discover() -> Self {
        discover_sysfs(Path::new("/sys/devices/system")).unwrap_or_else(|| {
            Topology::flat(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cpus(&self) -> usize {
        self.nodes.iter().map(Node::n_cpus).sum()
    }

    /// Threads-per-core of the first core, the figure vendors report.
    pub fn threads_per_core(&self) -> usize {
        self.nodes.iter().flat_map(|n| n.cores.first()).map(Vec::len).next().unwrap_or(1)
    }

    pub fn node_of_cpu(&self, cpu: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.cpus().any(|c| c == cpu))
    }

    fn check_capacity(&self, n_threads: usize) -> Result<(), TopologyError> {
        let available = self.n_cpus();
        if n_threads > available {
            return Err(TopologyError::Capacity { requested: n_threads, available });
        }
        Ok(())
    }

    /// Fills node 0 completely, core by core, before moving to node 1.
    pub fn place_clustered(&self, n_threads: usize) -> Result<Vec<usize>, TopologyError> {
        self.check_capacity(n_threads)?;
        Ok(self.nodes.iter().flat_map(Node::cpus).take(n_threads).collect())
    }

    /// Worker `i` goes to node `i mod n_nodes`; within a node, the first
    /// hardware thread of every core is used before any second thread.
    pub fn place_circular(&self, n_threads: usize) -> Result<Vec<usize>, TopologyError> {
        self.check_capacity(n_threads)?;
        let mut orders: Vec<Vec<usize>> = self.nodes.iter().map(core_spread).collect();
        for o in &mut orders {
            o.reverse();
        }
        let mut out = Vec::with_capacity(n_threads);
        let mut node = 0;
        while out.len() < n_threads {
            if let Some(cpu) = orders[node].pop() {
                out.push(cpu);
            }
            node = (node + 1) % orders.len();
        }
        Ok(out)
    }

    pub fn home_objects(&self, n_objects: usize, policy: PlacementPolicy) -> Vec<usize> {
        let k = self.n_nodes().max(1);
        match policy {
            PlacementPolicy::Clustered => {
                let block = n_objects.div_ceil(k).max(1);
                (0..n_objects).map(|i| (i / block).min(k - 1)).collect()
            }
            PlacementPolicy::Circular => (0..n_objects).map(|i| i % k).collect(),
        }
    }

    pub fn place(
        &self,
        n_threads: usize,
        n_objects: usize,
        policy: PlacementPolicy,
    ) -> Result<Placement, TopologyError> {
        let thread_to_cpu = match policy {
            PlacementPolicy::Clustered => self.place_clustered(n_threads)?,
            PlacementPolicy::Circular => self.place_circular(n_threads)?,
        };
        let thread_node = thread_to_cpu.iter().map(|&c| self.node_of_cpu(c).unwrap_or(0)).collect();
        Ok(Placement {
            thread_to_cpu,
            thread_node,
            object_home: self.home_objects(n_objects, policy),
            n_nodes: self.n_nodes(),
        })
    }
}

fn core_spread(node: &Node) -> Vec<usize> {
    let depth = node.cores.iter().map(Vec::len).max().unwrap_or(0);
    (0..depth).flat_map(|t| node.cores.iter().filter_map(move |c| c.get(t).copied())).collect()
}

impl Placement {
    /// Single-node labels with no CPU binding, for oversubscribed or test runs.
    pub fn unpinned(n_threads: usize, n_objects: usize) -> Self {
        Placement {
            thread_to_cpu: Vec::new(),
            thread_node: vec![0; n_threads],
            object_home: vec![0; n_objects],
            n_nodes: 1,
        }
    }

    pub fn threads_on_node(&self, node: usize) -> usize {
        self.thread_node.iter().filter(|&&n| n == node).count()
    }

    pub fn objects_on_node(&self, node: usize) -> usize {
        self.object_home.iter().filter(|&&n| n == node).count()
    }

    pub fn cpu_of(&self, worker: usize) -> Option<usize> {
        self.thread_to_cpu.get(worker).copied()
    }
}

/// Binds the calling thread to `cpu`. Best effort: returns false when the
/// platform refuses or does not support binding.
pub fn pin_current_thread(cpu: usize) -> bool {
    #[cfg(target_os = "linux")]
    {
        if cpu >= libc::CPU_SETSIZE as usize {
            return false;
        }
        // SAFETY: cpu_set_t is plain data; the set is fully initialized below.
        unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_SET(cpu, &mut set);
            libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
        }
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = cpu;
        false
    }
}

/// Parses a kernel cpulist such as `0-3,8,10-11`.
pub fn parse_cpulist(text: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.trim().split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                if b < a {
                    return None;
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().ok()?),
        }
    }
    Some(out)
}

fn discover_sysfs(root: &Path) -> Option<Topology> {
    let read = |p: &Path| std::fs::read_to_string(p).ok();
    let mut node_cpus: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    if let Ok(entries) = std::fs::read_dir(root.join("node")) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(id) = name.strip_prefix("node").and_then(|s| s.parse::<usize>().ok()) else { continue };
            let Some(cpus) = read(&entry.path().join("cpulist")).and_then(|t| parse_cpulist(&t)) else { continue };
            if !cpus.is_empty() {
                node_cpus.insert(id, cpus);
            }
        }
    }
    if node_cpus.is_empty() {
        let cpus = parse_cpulist(&read(&root.join("cpu/online"))?)?;
        node_cpus.insert(0, cpus);
    }
    let mut nodes = Vec::new();
    for cpus in node_cpus.into_values() {
        let mut cores: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for cpu in cpus {
            let base = root.join(format!("cpu/cpu{cpu}/topology"));
            let core = read(&base.join("core_id")).and_then(|t| t.trim().parse().ok()).unwrap_or(cpu);
            let pkg = read(&base.join("physical_package_id")).and_then(|t| t.trim().parse().ok()).unwrap_or(0);
            cores.entry((pkg, core)).or_default().push(cpu);
        }
        let mut cores: Vec<Vec<usize>> = cores.into_values().collect();
        cores.sort_by_key(|c| c[0]);
        nodes.push(Node { cores, memory: None });
    }
    Topology::new(nodes).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpulist_parsing() {
        assert_eq!(parse_cpulist("0-3,8,10-11\n"), Some(vec![0, 1, 2, 3, 8, 10, 11]));
        assert_eq!(parse_cpulist("5"), Some(vec![5]));
        assert_eq!(parse_cpulist("3-1"), None);
    }

    #[test]
    fn duplicate_cpus_rejected() {
        let n = Node { cores: vec![vec![0, 1]], memory: None };
        assert_eq!(Topology::new(vec![n.clone(), n]), Err(TopologyError::DuplicateCpu(0)));
        assert_eq!(Topology::new(vec![]), Err(TopologyError::Empty));
    }

    #[test]
    fn discovery_never_fails() {
        let t = Topology::discover();
        assert!(t.n_cpus() >= 1);
    }

    #[test]
    fn flat_fallback_is_one_node() {
        let t = Topology::flat(6);
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.n_cpus(), 6);
        assert_eq!(t.home_objects(10, PlacementPolicy::Clustered), vec![0; 10]);
        assert_eq!(t.home_objects(10, PlacementPolicy::Circular), vec![0; 10]);
    }

    #[test]
    fn capacity_error() {
        let t = Topology::flat(2);
        assert_eq!(t.place_clustered(3), Err(TopologyError::Capacity { requested: 3, available: 2 }));
        assert!(t.place_circular(3).is_err());
    }
}
