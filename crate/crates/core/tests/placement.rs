use pdes::topology::{PlacementPolicy, Topology};

#[test]
fn fixtures_match_machine_tables() {
    let cisc = Topology::cisc_fixture();
    assert_eq!((cisc.n_nodes(), cisc.n_cpus(), cisc.threads_per_core()), (2, 40, 2));
    let node0: Vec<usize> = cisc.nodes[0].cpus().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    assert_eq!(node0, (0..40).step_by(2).collect::<Vec<_>>());
    let risc = Topology::risc_fixture();
    assert_eq!((risc.n_nodes(), risc.n_cpus(), risc.threads_per_core()), (4, 96, 8));
    assert_eq!(risc.nodes[0].cpus().collect::<Vec<_>>(), (0..24).collect::<Vec<_>>());
    assert_eq!(risc.nodes[3].cpus().collect::<Vec<_>>(), (72..96).collect::<Vec<_>>());
}

#[test]
fn clustered_fills_first_node_core_first() {
    let t = Topology::cisc_fixture();
    assert_eq!(t.place_clustered(10).unwrap(), vec![0, 20, 2, 22, 4, 24, 6, 26, 8, 28]);
    let p = t.place(25, 4096, PlacementPolicy::Clustered).unwrap();
    assert_eq!((p.threads_on_node(0), p.threads_on_node(1)), (20, 5));
    assert_eq!(&p.thread_to_cpu[20..], &[1, 21, 3, 23, 5]);
    let r = Topology::risc_fixture().place(96, 96, PlacementPolicy::Clustered).unwrap();
    assert!((0..4).all(|n| r.threads_on_node(n) == 24));
    assert_eq!(&r.thread_to_cpu[..9], &[0, 1, 2, 3, 4, 5, 6, 7, 8]);
}

#[test]
fn circular_round_robins_nodes_and_spreads_cores() {
    let r = Topology::risc_fixture();
    assert_eq!(r.place_circular(4).unwrap(), vec![0, 24, 48, 72]);
    assert_eq!(r.place_circular(8).unwrap(), vec![0, 24, 48, 72, 8, 32, 56, 80]);
    let p = r.place(40, 3000, PlacementPolicy::Circular).unwrap();
    assert!((0..4).all(|n| p.threads_on_node(n) == 10));
    let c = Topology::cisc_fixture();
    assert_eq!(c.place_circular(8).unwrap(), vec![0, 1, 2, 3, 4, 5, 6, 7]);
    let p = c.place(8, 10, PlacementPolicy::Circular).unwrap();
    assert_eq!((p.threads_on_node(0), p.threads_on_node(1)), (4, 4));
    // Second hardware threads only after every core has one worker.
    let all = c.place_circular(40).unwrap();
    assert_eq!(&all[18..22], &[18, 19, 20, 21]);
}

#[test]
fn object_homing() {
    let c = Topology::cisc_fixture();
    let h = c.home_objects(4096, PlacementPolicy::Clustered);
    assert!(h[..2048].iter().all(|&n| n == 0) && h[2048..].iter().all(|&n| n == 1));
    let r = Topology::risc_fixture();
    let h = r.home_objects(3000, PlacementPolicy::Circular);
    assert!((0..4).all(|n| h.iter().filter(|&&x| x == n).count() == 750));
    assert_eq!(&h[..5], &[0, 1, 2, 3, 0]);
}

#[test]
fn placement_properties() {
    for t in [Topology::cisc_fixture(), Topology::risc_fixture()] {
        for n in 1..=t.n_cpus() {
            for policy in [PlacementPolicy::Clustered, PlacementPolicy::Circular] {
                let p = t.place(n, 100, policy).unwrap();
                assert_eq!(p, t.place(n, 100, policy).unwrap(), "deterministic");
                let mut cpus = p.thread_to_cpu.clone();
                cpus.sort();
                cpus.dedup();
                assert_eq!(cpus.len(), n, "injective");
                let counts: Vec<usize> = (0..t.n_nodes()).map(|k| p.threads_on_node(k)).collect();
                match policy {
                    PlacementPolicy::Circular => {
                        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
                    }
                    PlacementPolicy::Clustered => {
                        // A later node is used only once every earlier node is full.
                        for k in 1..t.n_nodes() {
                            if counts[k] > 0 {
                                assert_eq!(counts[k - 1], t.nodes[k - 1].n_cpus());
                            }
                        }
                    }
                }
            }
        }
        assert!(t.place(t.n_cpus() + 1, 1, PlacementPolicy::Clustered).is_err());
    }
}
