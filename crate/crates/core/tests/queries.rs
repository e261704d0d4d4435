mod common;

use common::*;
use pointsift::geometry::{farthest_point_sampling, octant_of, dist2, FpsStart, Point3, SpatialIndex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud_strategy(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s8n_matches_brute_force(pts in cloud_strategy(120), radius in 0.05f64..1.5) {
        let index = SpatialIndex::from_positions(&pts, radius).unwrap();
        for q in 0..pts.len() {
            let nb = index.s8n(q, radius).unwrap();
            prop_assert_eq!(nb.neighbor_indices, s8n_brute(&pts, q, radius));
            for o in 0..8 {
                prop_assert_eq!(nb.self_duplicated[o], nb.neighbor_indices[o] == q);
            }
        }
    }

    #[test]
    fn s8n_neighbors_sit_in_their_octant(pts in cloud_strategy(80), radius in 0.1f64..1.0) {
        let index = SpatialIndex::from_positions(&pts, radius).unwrap();
        for q in 0..pts.len() {
            let nb = index.s8n(q, radius).unwrap();
            for o in 0..8 {
                let j = nb.neighbor_indices[o];
                if !nb.self_duplicated[o] {
                    let off = [pts[j][0] - pts[q][0], pts[j][1] - pts[q][1], pts[j][2] - pts[q][2]];
                    prop_assert_eq!(octant_of(&off), o);
                    prop_assert!(dist2(&pts[j], &pts[q]) <= radius * radius);
                }
            }
        }
    }

    #[test]
    fn ball_query_matches_brute_force(pts in cloud_strategy(150), radius in 0.05f64..2.0, max_k in 1usize..40) {
        let index = SpatialIndex::from_positions(&pts, radius).unwrap();
        for c in pts.iter().take(20) {
            let got = index.ball_query(c, radius, max_k).unwrap();
            prop_assert_eq!(&got.indices, &ball_brute(&pts, c, radius, max_k));
        }
    }

    #[test]
    fn knn_matches_brute_force(pts in cloud_strategy(150), cell in 0.02f64..1.0, k in 1usize..10, q in prop::array::uniform3(-3.0f64..3.0)) {
        let k = k.min(pts.len());
        let index = SpatialIndex::from_positions(&pts, cell).unwrap();
        prop_assert_eq!(index.knn(&q, k).unwrap().indices, knn_brute(&pts, &q, k));
    }

    #[test]
    fn fps_matches_brute_force(pts in cloud_strategy(100), frac in 0.01f64..1.0) {
        let m = ((pts.len() as f64 * frac).ceil() as usize).clamp(1, pts.len());
        let got = farthest_point_sampling(&pts, m, FpsStart::Canonical).unwrap();
        prop_assert_eq!(got, fps_brute(&pts, m, canonical_first(&pts)));
    }

    #[test]
    fn fps_spreads_at_least_as_far_as_next_pick(pts in cloud_strategy(100), m in 2usize..20) {
        // Each selected point was the farthest when chosen, so the minimum
        // pairwise distance among the first m picks is at least the
        // distance of any remaining point to that set.
        let m = m.min(pts.len());
        let sel = farthest_point_sampling(&pts, m, FpsStart::Canonical).unwrap();
        let mut min_pair = f64::INFINITY;
        for a in 0..m {
            for b in 0..a {
                min_pair = min_pair.min(dist2(&pts[sel[a]], &pts[sel[b]]));
            }
        }
        let cover = (0..pts.len())
            .map(|j| sel.iter().map(|&c| dist2(&pts[j], &pts[c])).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        prop_assert!(m < 2 || cover <= min_pair);
    }

    #[test]
    fn integer_translation_preserves_queries(
        raw in prop::collection::vec(prop::array::uniform3(0u32..64), 2..80),
        shift in prop::array::uniform3(-8i32..8),
    ) {
        // Dyadic coordinates and integer shifts keep every offset exact.
        let pts: Vec<Point3> = raw.iter().map(|p| p.map(|c| c as f64 / 64.0)).collect();
        let moved: Vec<Point3> = pts.iter().map(|p| [p[0] + shift[0] as f64, p[1] + shift[1] as f64, p[2] + shift[2] as f64]).collect();
        let (a, b) = (SpatialIndex::from_positions(&pts, 0.25).unwrap(), SpatialIndex::from_positions(&moved, 0.25).unwrap());
        for q in 0..pts.len() {
            prop_assert_eq!(a.s8n(q, 0.25).unwrap(), b.s8n(q, 0.25).unwrap());
            prop_assert_eq!(a.ball_query(&pts[q], 0.25, 8).unwrap(), b.ball_query(&moved[q], 0.25, 8).unwrap());
        }
        let m = pts.len().min(10);
        prop_assert_eq!(
            farthest_point_sampling(&pts, m, FpsStart::Canonical).unwrap(),
            farthest_point_sampling(&moved, m, FpsStart::Canonical).unwrap()
        );
    }
}

#[test]
fn mixed_clouds_with_duplicates_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2, 17, 300] {
        let pts = mixed_cloud(n, &mut rng);
        let index = SpatialIndex::from_positions(&pts, 0.1).unwrap();
        for q in 0..n {
            assert_eq!(index.s8n(q, 0.1).unwrap().neighbor_indices, s8n_brute(&pts, q, 0.1));
            assert_eq!(index.ball_query(&pts[q], 0.1, 16).unwrap().indices, ball_brute(&pts, &pts[q], 0.1, 16));
            assert_eq!(index.knn(&pts[q], n.min(5)).unwrap().indices, knn_brute(&pts, &pts[q], n.min(5)));
        }
        for start in [FpsStart::Canonical, FpsStart::Seeded(3), FpsStart::Index(n - 1)] {
            let m = n.min(40);
            assert_eq!(farthest_point_sampling(&pts, m, start).unwrap(), fps_brute(&pts, m, fps_first(&pts, start)));
        }
    }
}
