mod common;

use common::*;
use mvr_core::losses::*;
use mvr_core::model::EmbeddingSet;
use rand::Rng;

fn batch(a: &Rows, v: &Rows, labels: &[usize], tau: f64) -> ContrastiveBatch<f64> {
    ContrastiveBatch {
        emb_a: to_matrix(a),
        emb_v: to_matrix(v),
        labels: labels.to_vec(),
        temperature: tau,
    }
}

#[test]
fn directional_losses_match_scalar_oracle() {
    for seed in 0..120 {
        let worst = suites::loss_oracle_case(seed);
        assert!(worst <= suites::LOSS_TOL, "seed {seed}: {worst}");
    }
}

#[test]
fn single_pair_gives_zero_loss() {
    let (single, _) = suites::trivial_loss_values();
    assert_eq!(single, [0.0, 0.0]);
}

#[test]
fn supcon_three_pair_example() {
    let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let labels = [0, 0, 1];
    let got = supcon_directional(&batch(&e, &e, &labels, 1.0), Direction::AudioToVideo).unwrap();
    // Anchors 0 and 1 see logits [1, 1, 0] with two positives; anchor 2 sees [0, 0, 1].
    let z01 = (2.0 * 1f64.exp() + 1.0).ln();
    let z2 = (2.0 + 1f64.exp()).ln();
    let want = -((1.0 - z01) + (1.0 - z01) + (1.0 - z2)) / 3.0;
    assert!((got - want).abs() < 1e-12);
    assert!((got - oracle_supcon(&e, &e, &labels, 1.0)).abs() < 1e-12);
}

#[test]
fn total_matches_oracle_and_sums_components() {
    for seed in 0..40 {
        let mut r = rng(1000 + seed);
        let n = 6;
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let mut m = || to_matrix(&unit_rows(&gaussian_rows(&mut r, n, 4)));
        let emb = EmbeddingSet {
            q_ssl_a: m(),
            q_sup_a: m(),
            q_ssl_v: m(),
            q_sup_v: m(),
            u_a: m(),
            v_a: m(),
            u_v: m(),
            v_v: m(),
            z_a: m(),
            z_v: m(),
            alpha: 0.5,
        };
        let got = total_loss(&emb, &labels, 0.1).unwrap();
        let want = oracle_total(
            &to_rows(&emb.z_a),
            &to_rows(&emb.z_v),
            &to_rows(&emb.q_ssl_a),
            &to_rows(&emb.q_ssl_v),
            &to_rows(&emb.q_sup_a),
            &to_rows(&emb.q_sup_v),
            &labels,
            0.1,
        );
        let got_all = [got.l_ssl_z, got.l_sup_z, got.l_ssl_h, got.l_sup_h, got.total];
        for (g, w) in got_all.iter().zip(want) {
            assert!((g - w).abs() <= 1e-10);
        }
        assert_eq!(got.total, got.l_ssl_z + got.l_sup_z + got.l_ssl_h + got.l_sup_h);
        assert!(got.components().iter().all(|(_, v)| *v >= 0.0));
    }
}

#[test]
fn permuting_pairs_leaves_losses_unchanged() {
    for seed in 0..30 {
        let (a, v, labels) = suites::random_draw(500 + seed);
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng(seed));
        let pa: Rows = perm.iter().map(|&i| a[i].clone()).collect();
        let pv: Rows = perm.iter().map(|&i| v[i].clone()).collect();
        let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        for d in Direction::BOTH {
            let x = infonce_directional(&batch(&a, &v, &labels, 0.1), d).unwrap();
            let y = infonce_directional(&batch(&pa, &pv, &pl, 0.1), d).unwrap();
            assert!((x - y).abs() <= 1e-12);
            let x = supcon_directional(&batch(&a, &v, &labels, 0.1), d).unwrap();
            let y = supcon_directional(&batch(&pa, &pv, &pl, 0.1), d).unwrap();
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn all_equal_embeddings_same_label_give_ln4() {
    let e = vec![vec![0.6, 0.8]; 4];
    let b = batch(&e, &e, &[2, 2, 2, 2], 0.1);
    let s = supcon_directional(&b, Direction::AudioToVideo).unwrap();
    let i = infonce_directional(&b, Direction::VideoToAudio).unwrap();
    assert!((s - 4f64.ln()).abs() < 1e-9);
    assert!((i - 4f64.ln()).abs() < 1e-9);
}
