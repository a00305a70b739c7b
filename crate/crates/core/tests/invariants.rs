use std::collections::BTreeSet;

use avembed_core::attention::select_top_k;
use avembed_core::cca::{fit_cca, Ridge};
use avembed_core::data::{partition_chunks, video_level_visual, FeatureSequence, Modality};
use avembed_core::deep::total_correlation;
use avembed_core::eval::{mean_ap, output_sizes, precision_recall, RelevanceJudgment};
use avembed_core::retrieval::{build_index, RankedList};
use avembed_core::supervision::{expand_pairs, seeded_kmeans};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    gaussian(rng, d, d).qr().q()
}

fn correlated_views(seed: u64, n: usize, dx: usize, dy: usize) -> (DMatrix<f64>, DMatrix<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = gaussian(&mut rng, n, 2);
    let x = gaussian(&mut rng, n, dx) + &shared * gaussian(&mut rng, 2, dx);
    let y = gaussian(&mut rng, n, dy) + &shared * gaussian(&mut rng, 2, dy);
    (x, y, rng)
}

fn sequence(seed: u64, frames: usize, dim: usize, modality: Modality) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..frames)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect())
        .collect();
    FeatureSequence::from_rows("v", modality, &rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunks_tile_the_truncated_sequence(seed in any::<u64>(), frames in 1usize..60, len in 1usize..7) {
        let seq = sequence(seed, frames, 3, Modality::Audio);
        let chunks = partition_chunks(&seq, len).unwrap();
        prop_assert_eq!(chunks.len(), frames / len);
        let mut next = 0;
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert_eq!(c.start_sec, next);
            prop_assert_eq!(c.end_sec - c.start_sec, len);
            prop_assert_eq!(c.data(), &seq.data()[c.start_sec * 3..c.end_sec * 3]);
            next = c.end_sec;
        }
        prop_assert_eq!(next, frames - frames % len);
    }

    #[test]
    fn visual_pooling_ignores_frame_order(seed in any::<u64>(), frames in 1usize..40) {
        let seq = sequence(seed, frames, 5, Modality::Visual);
        let mut rows: Vec<Vec<f32>> = seq.frames().map(|f| f.to_vec()).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled = FeatureSequence::from_rows("v", Modality::Visual, &rows).unwrap();
        prop_assert_eq!(video_level_visual(&seq).unwrap(), video_level_visual(&shuffled).unwrap());
    }

    #[test]
    fn selection_is_ordered_and_monotone_invariant(
        theta in prop::collection::vec(0.0f64..1.0, 72),
        ck in prop::sample::select(vec![(3usize, 1usize), (3, 3), (6, 2), (6, 3), (9, 3), (9, 9)]),
    ) {
        let (c, k) = ck;
        let t = DVector::from_vec(theta);
        let sel = select_top_k(&t, c, k).unwrap();
        prop_assert_eq!(sel.selected_indices.len(), k);
        prop_assert!(sel.selected_indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sel.selected_indices.iter().all(|&i| i < c));
        let warped = t.map(|v| (3.0 * v).exp() + 0.5);
        prop_assert_eq!(select_top_k(&warped, c, k).unwrap().selected_indices, sel.selected_indices);
    }

    #[test]
    fn cca_correlations_are_sorted_and_rotation_invariant(
        seed in any::<u64>(), n in 30usize..120, dx in 2usize..7, dy in 2usize..7,
    ) {
        let (x, y, mut rng) = correlated_views(seed, n, dx, dy);
        let r = dx.min(dy);
        let a = fit_cca(&x, &y, r, Ridge::Relative(1e-4)).unwrap();
        prop_assert!(a.correlations.as_slice().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(a.correlations.iter().all(|&c| (0.0..=1.0).contains(&c)));
        let q = orthogonal(&mut rng, dx);
        let b = fit_cca(&(&x * q), &y, r, Ridge::Relative(1e-4)).unwrap();
        prop_assert!((&a.correlations - &b.correlations).abs().max() < 1e-8);
    }

    #[test]
    fn objective_ignores_shifts_and_rotations(
        seed in any::<u64>(), n in 20usize..80, dx in 3usize..7, dy in 3usize..7,
    ) {
        let (x, y, mut rng) = correlated_views(seed, n, dx, dy);
        let (r, reg) = (dx.min(dy) - 1, 1e-3);
        let base = total_correlation(&x, &y, r, reg).unwrap();
        let shift = DVector::from_fn(dy, |_, _| rng.random_range(-5.0..5.0));
        let mut shifted = y.clone();
        for mut row in shifted.row_iter_mut() {
            row += shift.transpose();
        }
        prop_assert!((total_correlation(&x, &shifted, r, reg).unwrap() - base).abs() < 1e-8);
        let q = orthogonal(&mut rng, dx);
        prop_assert!((total_correlation(&(&x * q), &y, r, reg).unwrap() - base).abs() < 1e-8);
    }

    #[test]
    fn kmeans_labels_and_inertia_behave(seed in any::<u64>(), n in 12usize..80, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, n, 3);
        let seeds: Vec<Vec<DVector<f64>>> = (0..k).map(|c| vec![x.row(c).transpose()]).collect();
        let m = seeded_kmeans(&x, &seeds, 200, 0.0).unwrap();
        prop_assert!(m.labels.iter().all(|&l| l < k));
        prop_assert!(m.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
        if m.iterations_run < 200 {
            for c in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| m.labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                for j in 0..3 {
                    let mean = members.iter().map(|&i| x[(i, j)]).sum::<f64>() / members.len() as f64;
                    prop_assert!((m.centroids[(c, j)] - mean).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn expanded_pairs_stay_within_clusters(
        labels in prop::collection::vec(0usize..4, 1..30), f in 0.0f64..=1.0, seed in any::<u64>(),
    ) {
        let set = expand_pairs(&labels, &labels, f, seed, None).unwrap();
        let mut seen = BTreeSet::new();
        for p in &set.pairs {
            prop_assert_eq!(labels[p.audio], labels[p.visual]);
            prop_assert_eq!(p.label, labels[p.audio]);
            prop_assert!(seen.insert((p.audio, p.visual)));
        }
        for i in 0..labels.len() {
            prop_assert!(seen.contains(&(i, i)));
        }
        let zero = expand_pairs(&labels, &labels, 0.0, seed, None).unwrap();
        let identity: Vec<(usize, usize)> = (0..labels.len()).map(|i| (i, i)).collect();
        prop_assert_eq!(zero.pairs.iter().map(|p| (p.audio, p.visual)).collect::<Vec<_>>(), identity);
    }

    #[test]
    fn ranking_is_sorted_and_scale_invariant(seed in any::<u64>(), n in 1usize..40, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<DVector<f64>> = (0..n).map(|_| gaussian(&mut rng, 3, 1).column(0).into_owned()).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("v{:03}", (i * 7) % 1000)).collect();
        let index = build_index(&rows, &vec![0; n], &ids).unwrap();
        let q = vec![1.0, -0.5, 2.0];
        let a = index.rank("q", &q, n).unwrap();
        prop_assert_eq!(a.items.len(), n);
        prop_assert!(a.items.windows(2).all(|w| w[0].1 >= w[1].1));
        let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
        let b = index.rank("q", &scaled, n).unwrap();
        prop_assert_eq!(
            a.items.iter().map(|i| &i.0).collect::<Vec<_>>(),
            b.items.iter().map(|i| &i.0).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tied_similarities_follow_ascending_ids(seed in any::<u64>(), n in 1usize..30, copies in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<DVector<f64>> = (0..n).map(|_| gaussian(&mut rng, 3, 1).column(0).into_owned()).collect();
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for (i, v) in base.iter().enumerate() {
            for c in 0..copies {
                rows.push(v.clone());
                ids.push(format!("v{:03}", (i * 31 + c * 17) % 1000));
            }
        }
        prop_assume!(ids.iter().collect::<BTreeSet<_>>().len() == ids.len());
        let index = build_index(&rows, &vec![0; rows.len()], &ids).unwrap();
        let ranked = index.rank("q", &[0.3, 1.0, -2.0], rows.len()).unwrap();
        for w in ranked.items.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn recall_never_decreases(relevant in prop::collection::vec(any::<bool>(), 1..60), stride in 1usize..7) {
        prop_assume!(relevant.iter().any(|&b| b));
        let ids: Vec<String> = (0..relevant.len()).map(|i| i.to_string()).collect();
        let list = RankedList { query_id: "q".into(), items: ids.iter().map(|i| (i.clone(), 0.0)).collect() };
        let judgment = RelevanceJudgment::new("q", ids.iter().zip(&relevant).filter(|(_, &r)| r).map(|(i, _)| i.clone()));
        let sizes = output_sizes(relevant.len(), stride);
        prop_assert_eq!(sizes.last().copied(), Some(relevant.len()));
        let pr = precision_recall(&list, &judgment, &sizes).unwrap();
        prop_assert!(pr.windows(2).all(|w| w[0].recall <= w[1].recall));
        prop_assert!((pr.last().unwrap().recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_ignores_query_order(aps in prop::collection::vec(0.0f64..=1.0, 1..50), seed in any::<u64>()) {
        let mut shuffled = aps.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((mean_ap(&aps).unwrap() - mean_ap(&shuffled).unwrap()).abs() < 1e-12);
    }
}
