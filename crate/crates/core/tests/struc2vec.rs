use pricegraph::graph::Graph;
use pricegraph::struc2vec::{
    cosine, degree_ring, dtw_cost, embed_graph, multilayer_walks, structural_distances, train_skipgram_walks,
    MultilayerGraph, SkipGram, SkipGramConfig, Struc2VecConfig, WalkParams,
};
use pricegraph::visibility::vg_fast;
use rand::seq::SliceRandom;
use rand::Rng;

/// Two K5 cliques joined through a two-node path.
fn barbell() -> (Graph, Vec<usize>, Vec<usize>) {
    let mut e = Vec::new();
    for a in 0..5 {
        for b in a + 1..5 {
            e.push((a, b));
            e.push((a + 7, b + 7));
        }
    }
    e.extend([(4, 5), (5, 6), (6, 7)]);
    (Graph::from_edges(12, e).unwrap(), vec![0, 1, 2, 3], vec![8, 9, 10, 11])
}

#[test]
fn distances_are_symmetric_zero_diagonal_and_monotone() {
    let mut rng = pricegraph::seed::rng(21);
    for _ in 0..100 {
        let n = rng.random_range(4..=30);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..50.0)).collect();
        let d = structural_distances(&vg_fast(&x).unwrap(), 5);
        for k in 0..=d.k_max {
            for u in 0..n {
                assert_eq!(d.get(k, u, u), 0.0);
                for v in 0..n {
                    assert_eq!(d.get(k, u, v), d.get(k, v, u));
                    if k > 0 && d.get(k, u, v).is_finite() {
                        assert!(d.get(k, u, v) >= d.get(k - 1, u, v));
                    }
                }
            }
        }
    }
}

#[test]
fn cycle_layers_are_all_zero() {
    for n in [5, 8, 13] {
        let g = Graph::from_edges(n, (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n)))).unwrap();
        let d = structural_distances(&g, 10);
        assert_eq!(d.k_max, n / 2);
        assert!(d.layers.iter().all(|l| l.iter().all(|&w| w == 0.0)));
    }
}

#[test]
fn ring_and_dtw_reference_values() {
    let (g, _, _) = barbell();
    assert_eq!(degree_ring(&g, 0, 0), vec![4]);
    assert_eq!(degree_ring(&g, 0, 1), vec![4, 4, 4, 5]);
    assert_eq!(degree_ring(&g, 5, 1), vec![2, 5]);
    // |2/1 - 1| + |4/2 - 1| with one warping step
    assert_eq!(dtw_cost(&[1, 2], &[2, 4]), 2.0);
    assert_eq!(dtw_cost(&[3, 3], &[3]), 0.0);
    assert_eq!(dtw_cost(&[], &[1]), f64::INFINITY);
}

#[test]
fn relabeling_permutes_distances() {
    let mut rng = pricegraph::seed::rng(5);
    let x: Vec<f64> = (0..15).map(|_| rng.random_range(1.0..9.0)).collect();
    let g = vg_fast(&x).unwrap();
    let mut perm: Vec<usize> = (0..15).collect();
    perm.shuffle(&mut rng);
    let h = g.relabel(&perm).unwrap();
    let (dg, dh) = (structural_distances(&g, 5), structural_distances(&h, 5));
    for k in 0..=dg.k_max {
        for u in 0..15 {
            for v in 0..15 {
                assert_eq!(dg.get(k, u, v), dh.get(k, perm[u], perm[v]));
            }
        }
    }
}

#[test]
fn transition_rows_are_distributions() {
    let (g, _, _) = barbell();
    let ml = MultilayerGraph::new(&structural_distances(&g, 5));
    for layer in 0..ml.layer_count() {
        for u in 0..12 {
            let t = ml.transition(u, layer);
            let s: f64 = t.iter().map(|(_, p)| p).sum();
            assert!(t.is_empty() || (s - 1.0).abs() < 1e-12);
            assert!(t.iter().all(|&(v, _)| v != u));
        }
    }
}

#[test]
fn barbell_interiors_embed_together() {
    let (g, left, right) = barbell();
    let mut passes = 0;
    for seed in 0..20 {
        let cfg = Struc2VecConfig { seed, ..Struc2VecConfig::default() };
        let e = embed_graph(&g, &cfg).unwrap();
        let mut cross = Vec::new();
        for &a in &left {
            for &b in &right {
                cross.push(cosine(e.row(a), e.row(b)));
            }
        }
        let mut rng = pricegraph::seed::rng(1000 + seed);
        let random: Vec<f64> = (0..500)
            .map(|_| {
                let a = rng.random_range(0..12);
                let mut b = rng.random_range(0..12);
                while b == a {
                    b = rng.random_range(0..12);
                }
                cosine(e.row(a), e.row(b))
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        if mean(&cross) > mean(&random) {
            passes += 1;
        }
    }
    assert!(passes >= 19, "{passes}/20");
}

#[test]
fn skipgram_loss_decreases() {
    let (g, _, _) = barbell();
    let corpus = multilayer_walks(
        &structural_distances(&g, 5),
        &WalkParams { walks_per_node: 10, walk_length: 10, stay_prob: 0.3, seed: 9 },
    )
    .unwrap();
    let t = train_skipgram_walks(&corpus.walks, 12, &SkipGramConfig { dim: 16, window: 5, epochs: 8, lr: 0.025, seed: 1 })
        .unwrap();
    assert!(t.epoch_losses.last().unwrap() < t.epoch_losses.first().unwrap(), "{:?}", t.epoch_losses);
}

#[test]
fn skipgram_gradient_matches_finite_differences() {
    let corpus = vec![vec![0, 1, 2, 3, 4, 0, 2], vec![4, 3, 1, 1, 0]];
    let mut m = SkipGram::init(5, 3, 2);
    let mut rng = pricegraph::seed::rng(8);
    m.context.iter_mut().for_each(|c| *c = rng.random_range(-0.5..0.5));
    let (gc, gx) = m.log_likelihood_gradient(&corpus, 2);
    let h = 1e-5;
    let check = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
        assert!(rel < 1e-6, "analytic {analytic} fd {fd} rel {rel}");
    };
    for i in 0..m.center.len() {
        let mut p = m.clone();
        p.center[i] += h;
        let mut q = m.clone();
        q.center[i] -= h;
        check(gc[i], p.log_likelihood(&corpus, 2), q.log_likelihood(&corpus, 2));
    }
    for i in 0..m.context.len() {
        let mut p = m.clone();
        p.context[i] += h;
        let mut q = m.clone();
        q.context[i] -= h;
        check(gx[i], p.log_likelihood(&corpus, 2), q.log_likelihood(&corpus, 2));
    }
}

#[test]
fn identical_graphs_embed_identically() {
    let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0];
    let cfg = Struc2VecConfig { dim: 8, ..Struc2VecConfig::default() };
    let a = embed_graph(&vg_fast(&x).unwrap(), &cfg).unwrap();
    let b = embed_graph(&vg_fast(&x.map(|v| v * 2.0 + 1.0)).unwrap(), &cfg).unwrap();
    assert_eq!(a, b);
}
