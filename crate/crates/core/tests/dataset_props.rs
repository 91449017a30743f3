use gnncl::dataset::{generate_synthetic, load_graph, save_graph, split_stratified, MultiRelationGraph, SyntheticConfig};
use proptest::prelude::*;

fn config_strategy() -> impl Strategy<Value = SyntheticConfig> {
    (
        10usize..80,
        1usize..6,
        0.05f64..0.6,
        1usize..4,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..6.0,
        any::<u64>(),
    )
        .prop_map(|(n, d, fr, rels, intra, camo, deg, seed)| SyntheticConfig {
            num_nodes: n,
            feature_dim: d,
            fraud_ratio: fr,
            relation_count: rels,
            intra_class_prob: intra,
            camouflage_rate: camo,
            avg_degree: deg,
            seed,
        })
        .prop_filter("both classes present", |c| c.validate().is_ok())
}

fn cross_class_edges(g: &MultiRelationGraph) -> (usize, usize) {
    let labels = g.labels();
    let (mut cross, mut fraud_incident) = (0, 0);
    for rel in g.relations() {
        for &(u, v) in &rel.edges {
            if labels[u] == 1 || labels[v] == 1 {
                fraud_incident += 1;
                if labels[u] != labels[v] {
                    cross += 1;
                }
            }
        }
    }
    (cross, fraud_incident)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generated_graphs_satisfy_invariants(config in config_strategy()) {
        let g = generate_synthetic(&config).unwrap();
        prop_assert_eq!(g.num_nodes(), config.num_nodes);
        prop_assert_eq!(g.feature_dim(), config.feature_dim);
        prop_assert_eq!(g.num_fraud(), config.fraud_count());
        prop_assert_eq!(g.relations().len(), config.relation_count);
        prop_assert!(g.features().is_finite());
        prop_assert!(g.labels().iter().all(|&y| y <= 1));
        for rel in g.relations() {
            prop_assert!(rel.edges.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(rel.edges.iter().all(|&(u, v)| u < v && v < g.num_nodes()));
        }
        // Rebuilding through the validating constructor must succeed.
        let rebuilt = MultiRelationGraph::new(g.features().clone(), g.labels().to_vec(), g.relations().to_vec());
        prop_assert!(rebuilt.is_ok());
    }

    #[test]
    fn save_then_load_is_identity(config in config_strategy()) {
        let g = generate_synthetic(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn stratified_split_partitions(config in config_strategy(), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let g = generate_synthetic(&config).unwrap();
        let s = split_stratified(&g, ratio, seed).unwrap();
        let n = g.num_nodes();
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        prop_assert_eq!(s.train.len(), (ratio * n as f64).round() as usize);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(s.train_fraud.iter().all(|v| g.labels()[*v] == 1 && s.train.binary_search(v).is_ok()));
    }
}

#[test]
fn saving_twice_gives_identical_bytes() {
    let g = generate_synthetic(&SyntheticConfig { num_nodes: 60, seed: 5, ..Default::default() }).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_graph(&g, a.path()).unwrap();
    save_graph(&generate_synthetic(&SyntheticConfig { num_nodes: 60, seed: 5, ..Default::default() }).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3 + 3);
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
}

#[test]
fn camouflage_raises_cross_class_edges_on_average() {
    let rates = [0.0, 0.25, 0.5, 0.75, 1.0];
    let means: Vec<f64> = rates
        .iter()
        .map(|&rate| {
            let total: usize = (0..20)
                .map(|seed| {
                    let g = generate_synthetic(&SyntheticConfig {
                        num_nodes: 300,
                        camouflage_rate: rate,
                        seed,
                        ..Default::default()
                    })
                    .unwrap();
                    cross_class_edges(&g).0
                })
                .sum();
            total as f64 / 20.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn without_camouflage_cross_class_share_follows_mixing_rate() {
    // Edge (u, v) starts at a uniform u and picks a same-class partner with
    // probability q. Among fraud-incident edges the expected cross-class
    // share is ((1-q)·f + (1-q)·(1-f)) / (f + (1-q)·(1-f)).
    let (f, q) = (0.1, 0.8);
    let expected = ((1.0 - q) * f + (1.0 - q) * (1.0 - f)) / (f + (1.0 - q) * (1.0 - f));
    let (mut cross, mut incident) = (0, 0);
    for seed in 0..20 {
        let g = generate_synthetic(&SyntheticConfig {
            num_nodes: 500,
            fraud_ratio: f,
            intra_class_prob: q,
            camouflage_rate: 0.0,
            seed,
            ..Default::default()
        })
        .unwrap();
        let (c, i) = cross_class_edges(&g);
        cross += c;
        incident += i;
        let camouflaged = generate_synthetic(&SyntheticConfig {
            num_nodes: 500,
            fraud_ratio: f,
            intra_class_prob: q,
            camouflage_rate: 0.5,
            seed,
            ..Default::default()
        })
        .unwrap();
        let (cc, ci) = cross_class_edges(&camouflaged);
        assert!((c as f64 / i as f64) <= cc as f64 / ci as f64, "seed {seed}");
    }
    let share = cross as f64 / incident as f64;
    assert!((share - expected).abs() < 0.03, "{share} vs {expected}");
}
