use aggcox::allocation::{
    base_mass, draw_augmented_counts, draw_slice, exact_q, initialise_counts, marginal_q_uncertain,
    mc_q, AllocationTable, EffortWeights, RegionTotals,
};
use aggcox::geometry::{
    build_grid, build_partition, intersect_region_cell, BoundaryModel, IndependentBoundaries,
    MultiPolygon, Rect, Region, RegionSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rect_regions(rects: &[Rect], efforts: &[f64]) -> RegionSet {
    RegionSet::new(
        rects
            .iter()
            .zip(efforts)
            .enumerate()
            .map(|(k, (r, e))| {
                Region::new(format!("a{k}"), MultiPolygon::from_rect(*r)).with_effort(*e)
            })
            .collect(),
    )
    .unwrap()
}

fn random_rect(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Rect {
    let x0 = rng.random_range(lo..hi - 0.3);
    let y0 = rng.random_range(lo..hi - 0.3);
    Rect::new(
        x0,
        y0,
        rng.random_range(x0 + 0.2..hi + 0.5),
        rng.random_range(y0 + 0.2..hi + 0.5),
    )
}

#[test]
fn base_mass_symmetry_and_scaling() {
    let g = build_grid(Rect::new(0., 0., 2., 1.), 2, 1, &[0.]).unwrap();
    let rs = rect_regions(&[Rect::new(0., 0., 2., 1.)], &[1.0]);
    let part = build_partition(&g, &rs).unwrap();
    let p = base_mass(&part, &[0.3, 0.3], None).unwrap();
    assert!((p[0][0].1 - p[0][1].1).abs() < 1e-15);
    let p2 = base_mass(&part, &[0.3, 0.3 + 2f64.ln()], None).unwrap();
    assert!((p2[0][1].1 - 2.0 * p[0][1].1).abs() < 1e-14);
    assert!(base_mass(&part, &[0.0; 3], None).is_err());
}

#[test]
fn base_mass_matches_term_by_term() {
    let g = build_grid(Rect::new(0., 0., 4., 4.), 4, 4, &[0.]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let rects: Vec<Rect> = (0..3).map(|_| random_rect(&mut rng, 0.0, 4.0)).collect();
    let rs = rect_regions(&rects, &[1.0, 1.0, 1.0]);
    let part = build_partition(&g, &rs).unwrap();
    let eta: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lam: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..3.0)).collect();
    let p = base_mass(&part, &eta, Some(&lam)).unwrap();
    for (i, r) in rects.iter().enumerate() {
        let mp = MultiPolygon::from_rect(*r);
        for j in 0..16 {
            let a = intersect_region_cell(&mp, &g.cell_rect(j));
            let direct = a * lam[j] * eta[j].exp();
            let got = p[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
            assert!(
                (got - direct).abs() <= 1e-12 * direct.max(1.0),
                "region {i} cell {j}"
            );
        }
    }
}

fn unit_cell() -> aggcox::geometry::Grid {
    build_grid(Rect::new(0., 0., 1., 1.), 1, 1, &[0.]).unwrap()
}

#[test]
fn exact_q_examples() {
    let g = unit_cell();
    let full = Rect::new(0., 0., 1., 1.);
    let q_of = |rects: &[Rect], eff: &[f64]| {
        let rs = rect_regions(rects, eff);
        let part = build_partition(&g, &rs).unwrap();
        exact_q(&part, &EffortWeights::from_regions(&rs).unwrap()).unwrap()
    };
    let q = q_of(&[full, full], &[1.0, 1.0]);
    assert!((q.q(0, 0) - 0.5).abs() < 1e-15 && (q.q(1, 0) - 0.5).abs() < 1e-15);
    let q = q_of(&[full, full], &[2.0, 1.0]);
    assert!((q.q(0, 0) - 2.0 / 3.0).abs() < 1e-15);
    let q = q_of(&[full, Rect::new(0., 0., 0.5, 1.)], &[1.0, 1.0]);
    assert!((q.q(0, 0) - 0.75).abs() < 1e-15);
}

fn rect_overlap(a: &Rect, b: &Rect) -> Option<Rect> {
    let r = Rect::new(
        a.min_x.max(b.min_x),
        a.min_y.max(b.min_y),
        a.max_x.min(b.max_x),
        a.max_y.min(b.max_y),
    );
    (r.min_x < r.max_x && r.min_y < r.max_y).then_some(r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn exact_q_matches_two_region_expansion(seed in 0u64..1_000_000, e1 in 0.1f64..5.0, e2 in 0.1f64..5.0) {
        let g = unit_cell();
        let cell = Rect::new(0., 0., 1., 1.);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a1, a2) = (random_rect(&mut rng, -0.3, 1.0), random_rect(&mut rng, -0.3, 1.0));
        let rs = rect_regions(&[a1, a2], &[e1, e2]);
        let part = build_partition(&g, &rs).unwrap();
        let q = exact_q(&part, &EffortWeights::from_regions(&rs).unwrap()).unwrap();
        let c1 = cell.overlap_area(&a1);
        let c2 = cell.overlap_area(&a2);
        let both = rect_overlap(&a1, &a2).map_or(0.0, |r| r.overlap_area(&cell));
        // p1^mod / p1 = [|A1 \ A2| + e1/(e1+e2) |A1 ∩ A2|] / |A1| within the cell
        if c1 > 0.0 {
            let closed = ((c1 - both) + e1 / (e1 + e2) * both) / c1;
            prop_assert!((q.q(0, 0) - closed).abs() < 1e-12, "{} vs {closed}", q.q(0, 0));
        }
        if c2 > 0.0 {
            let closed = ((c2 - both) + e2 / (e1 + e2) * both) / c2;
            prop_assert!((q.q(1, 0) - closed).abs() < 1e-12);
        }
    }
}

#[test]
fn mc_q_single_region_and_determinism() {
    let g = unit_cell();
    let rs = rect_regions(&[Rect::new(-1., -1., 0.6, 2.)], &[1.0]);
    let part = build_partition(&g, &rs).unwrap();
    let w = EffortWeights::from_regions(&rs).unwrap();
    for m in [1, 7, 1000] {
        let q = mc_q(
            &g,
            &rs,
            &part,
            &w,
            m,
            &mut ChaCha8Rng::seed_from_u64(m as u64),
        )
        .unwrap();
        assert!(q.q(0, 0) == 1.0);
    }
    let rs = rect_regions(
        &[Rect::new(0., 0., 0.7, 1.), Rect::new(0.2, 0., 1., 0.8)],
        &[1.0, 2.0],
    );
    let part = build_partition(&g, &rs).unwrap();
    let w = EffortWeights::from_regions(&rs).unwrap();
    let a = mc_q(&g, &rs, &part, &w, 500, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = mc_q(&g, &rs, &part, &w, 500, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mc_q_tracks_exact_q() {
    let g = unit_cell();
    let rs = rect_regions(
        &[
            Rect::new(-0.2, 0.1, 0.8, 1.3),
            Rect::new(0.3, -0.5, 1.4, 0.9),
            Rect::new(0.1, 0.4, 0.7, 0.95),
        ],
        &[1.0, 2.5, 0.7],
    );
    let part = build_partition(&g, &rs).unwrap();
    let w = EffortWeights::from_regions(&rs).unwrap();
    let exact = exact_q(&part, &w).unwrap();
    let m = 100_000;
    let mc = mc_q(&g, &rs, &part, &w, m, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    for i in 0..3 {
        let q = exact.q(i, 0);
        let f = part.cells[0].region_area(i) / g.cell_area();
        // the estimate is a ratio over the M f points landing in A_i
        let qu = q * f;
        let bound = 3.0 * (qu * (1.0 - qu) / m as f64).sqrt() / f;
        assert!(
            (mc.q(i, 0) - q).abs() < bound,
            "region {i}: {} vs {q}",
            mc.q(i, 0)
        );
        let se = mc.get(i, 0).unwrap().std_error;
        assert!(
            (mc.q(i, 0) - q).abs() < 3.0 * se,
            "region {i}: reported se {se}"
        );
    }
}

#[test]
fn marginal_q_reduces_and_averages() {
    let g = unit_cell();
    let cover = MultiPolygon::from_rect(Rect::new(-0.5, -0.5, 1.5, 1.5));
    let miss = MultiPolygon::from_rect(Rect::new(2.0, 2.0, 3.0, 3.0));
    let mixed = RegionSet::new(vec![Region::new("m", cover.clone()).with_boundary(
        BoundaryModel::Mixture {
            candidates: vec![cover.clone(), miss],
            weights: vec![1.0, 1.0],
        },
    )])
    .unwrap();
    let w = EffortWeights::uniform(1);
    let n = 4000;
    let q = marginal_q_uncertain(
        &g,
        &mixed,
        &IndependentBoundaries,
        &w,
        10,
        n,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let e = q.get(0, 0).unwrap();
    assert!(
        (e.q - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt(),
        "{}",
        e.q
    );

    // all fixed: agrees with plain Monte Carlo
    let rs = rect_regions(
        &[Rect::new(0., 0., 0.7, 1.), Rect::new(0.2, 0., 1., 0.8)],
        &[1.0, 2.0],
    );
    let part = build_partition(&g, &rs).unwrap();
    let w = EffortWeights::from_regions(&rs).unwrap();
    let exact = exact_q(&part, &w).unwrap();
    let marg = marginal_q_uncertain(
        &g,
        &rs,
        &IndependentBoundaries,
        &w,
        2000,
        20,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    let plain = mc_q(
        &g,
        &rs,
        &part,
        &w,
        40_000,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    for i in 0..2 {
        let (a, b) = (marg.get(i, 0).unwrap(), plain.get(i, 0).unwrap());
        let se = a.std_error.hypot(b.std_error);
        assert!(
            (a.q - b.q).abs() < 3.0 * se,
            "region {i}: {} vs {}",
            a.q,
            b.q
        );
        assert!((a.q - exact.q(i, 0)).abs() < 3.0 * a.std_error);
    }

    // a single draw is plain Monte Carlo on that realisation
    let one = marginal_q_uncertain(
        &g,
        &rs,
        &IndependentBoundaries,
        &w,
        300,
        1,
        &mut ChaCha8Rng::seed_from_u64(6),
    )
    .unwrap();
    let direct = mc_q(&g, &rs, &part, &w, 300, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    for i in 0..2 {
        assert_eq!(one.q(i, 0), direct.q(i, 0));
    }
}

fn strip(n: usize) -> aggcox::geometry::Grid {
    build_grid(Rect::new(0., 0., n as f64, 1.), n, 1, &[0.]).unwrap()
}

fn table(g: &aggcox::geometry::Grid, rs: &RegionSet, eta: &[f64]) -> AllocationTable {
    let part = build_partition(g, rs).unwrap();
    let q = exact_q(&part, &EffortWeights::from_regions(rs).unwrap()).unwrap();
    AllocationTable::new(g.n_cells(), base_mass(&part, eta, None).unwrap(), &q).unwrap()
}

#[test]
fn allocation_moments() {
    let g = strip(2);
    let rs = rect_regions(&[Rect::new(0., 0., 2., 1.)], &[1.0]);
    let t = table(&g, &rs, &[0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let zero = draw_slice(&[0], &t, 0, &mut rng).unwrap();
    assert_eq!(zero.cell_totals(2), vec![0, 0]);
    let draws = 200;
    let mut first = 0.0;
    for _ in 0..draws {
        let s = draw_slice(&[100_000], &t, 0, &mut rng).unwrap();
        assert_eq!(s.region_total(0), 100_000);
        first += s.cell_totals(2)[0] as f64;
    }
    let mean = first / draws as f64;
    assert!((mean - 50_000.0).abs() < 3.0 * (100_000.0f64 * 0.25).sqrt() / (draws as f64).sqrt());
}

#[test]
fn allocation_follows_pq() {
    let g = strip(3);
    let rs = rect_regions(
        &[Rect::new(0., 0., 2., 1.), Rect::new(1., 0., 3., 1.)],
        &[1.0, 1.0],
    );
    let eta = [0.2, -0.1, 0.5];
    let t = table(&g, &rs, &eta);
    // hand-computed: region 1 masses e^0.2 * 1, e^-0.1 * 0.5; region 2 e^-0.1 * 0.5, e^0.5 * 1
    let m1 = [0.2f64.exp(), 0.5 * (-0.1f64).exp()];
    let m2 = [0.5 * (-0.1f64).exp(), 0.5f64.exp()];
    let p1 = m1[0] / (m1[0] + m1[1]);
    let p2 = m2[0] / (m2[0] + m2[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100_000;
    let (mut c1, mut c2) = (0.0, 0.0);
    for _ in 0..n {
        let s = draw_slice(&[1, 1], &t, 0, &mut rng).unwrap();
        c1 += s.regions[0].iter().find(|e| e.0 == 0).map_or(0, |e| e.1) as f64;
        c2 += s.regions[1].iter().find(|e| e.0 == 1).map_or(0, |e| e.1) as f64;
    }
    let (f1, f2) = (c1 / n as f64, c2 / n as f64);
    assert!(
        (f1 - p1).abs() < 3.0 * (p1 * (1.0 - p1) / n as f64).sqrt(),
        "{f1} vs {p1}"
    );
    assert!(
        (f2 - p2).abs() < 3.0 * (p2 * (1.0 - p2) / n as f64).sqrt(),
        "{f2} vs {p2}"
    );
}

#[test]
fn unexplainable_total_is_an_error() {
    let g = strip(2);
    let rs = rect_regions(&[Rect::new(0., 0., 2., 1.)], &[1.0]);
    let part = build_partition(&g, &rs).unwrap();
    let q = exact_q(&part, &EffortWeights::uniform(1)).unwrap();
    let t = AllocationTable::new(
        2,
        base_mass(&part, &[0.0, 0.0], Some(&[0.0, 0.0])).unwrap(),
        &q,
    )
    .unwrap();
    assert!(draw_slice(&[3], &t, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    assert!(draw_slice(&[0], &t, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_ok());
}

#[test]
fn initialisation_examples() {
    let g = strip(2);
    let rs = rect_regions(&[Rect::new(0., 0., 2., 1.)], &[1.0]);
    let part = build_partition(&g, &rs).unwrap();
    let totals = RegionTotals::spatial(vec![4]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 20_000;
    let mut freq = [0usize; 5];
    for _ in 0..n {
        let a = initialise_counts(&totals, &[&part], None, &mut rng).unwrap();
        freq[a.cells[0][0] as usize] += 1;
    }
    let binom = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
    for k in 0..5 {
        let f = freq[k] as f64 / n as f64;
        assert!(
            (f - binom[k]).abs() < 3.0 * (binom[k] * (1.0 - binom[k]) / n as f64).sqrt(),
            "k={k}"
        );
    }
    let off = vec![vec![0.0, 2.0]];
    let a = initialise_counts(&totals, &[&part], Some(&off), &mut rng).unwrap();
    assert_eq!(a.cells[0], vec![0, 4]);
}

#[test]
fn initialisation_conserves_on_random_instances() {
    let g = build_grid(Rect::new(0., 0., 5., 5.), 5, 5, &[0.]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let k = rng.random_range(1..5);
        let rects: Vec<Rect> = (0..k).map(|_| random_rect(&mut rng, 0.0, 5.0)).collect();
        let rs = rect_regions(&rects, &vec![1.0; k]);
        let part = build_partition(&g, &rs).unwrap();
        let totals = RegionTotals::spatial((0..k).map(|_| rng.random_range(0..50)).collect());
        let off = vec![(0..25)
            .map(|_| rng.random_range(0.1..2.0))
            .collect::<Vec<f64>>()];
        let a = initialise_counts(&totals, &[&part], Some(&off), &mut rng).unwrap();
        assert_eq!(a.conservation_violations(&totals), 0);
        for (i, row) in a.slices[0].regions.iter().enumerate() {
            for &(j, c) in row {
                assert!(c == 0 || part.cells[j].region_area(i) > 0.0);
            }
        }
    }
}

#[test]
fn overlap_reconstruction_is_homogeneous() {
    let g = strip(4);
    let rs = rect_regions(
        &[Rect::new(0., 0., 2.5, 1.), Rect::new(1.5, 0., 4., 1.)],
        &[1.0, 1.0],
    );
    // intensity 100 per unit area: each region reports 150 + 100 / 2
    let totals = RegionTotals::spatial(vec![200, 200]);
    let t = table(&g, &rs, &[0.0; 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 10_000;
    let mut sum = [0.0; 4];
    let mut sq = [0.0; 4];
    for _ in 0..n {
        let a = draw_augmented_counts(&totals, std::slice::from_ref(&t), &mut rng).unwrap();
        for j in 0..4 {
            let c = a.cells[0][j] as f64;
            sum[j] += c;
            sq[j] += c * c;
        }
    }
    for j in 0..4 {
        let m = sum[j] / n as f64;
        let se = ((sq[j] / n as f64 - m * m) / n as f64).sqrt();
        assert!((m - 100.0).abs() < 3.0 * se, "cell {j}: {m} (se {se})");
    }
}
