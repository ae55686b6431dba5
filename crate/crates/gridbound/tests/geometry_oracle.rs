//! Independent cross-checks for the overlap-probability machinery.
//!
//! The production code computes kernel/cell overlap bounds by critical-point
//! enumeration. These tests re-derive the same quantities the dumb way —
//! dense sampling of source points, brute-force summation over cells — and
//! require the two to agree. The samplers share no code with the functions
//! under test.

use gridbound::geometry::{
    overlap_bounds, overlap_fraction, AxisBox, GridPartition, RegionId,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AGREE_TOL: f64 = 1e-9;
const CONTAIN_TOL: f64 = 1e-12;

fn walker_domain() -> AxisBox {
    AxisBox::new(vec![0.0, 0.0], vec![1.2, 1.2]).unwrap()
}

fn kernel_box(center: &[f64], eps: f64) -> AxisBox {
    AxisBox::new(
        center.iter().map(|c| c - eps).collect(),
        center.iter().map(|c| c + eps).collect(),
    )
    .unwrap()
}

/// Brute-force extrema of the kernel/target overlap fraction over an
/// `n x n` grid of source points (inclusive of the source box faces).
/// Returns `None` when every sampled kernel is degenerate.
fn sampled_extrema(
    source: &AxisBox,
    drift: &[f64],
    eps: f64,
    target: &AxisBox,
    domain: &AxisBox,
    n: usize,
) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let fx = i as f64 / (n - 1) as f64;
            let ft = j as f64 / (n - 1) as f64;
            let s = [
                source.lo[0] + fx * (source.hi[0] - source.lo[0]),
                source.lo[1] + ft * (source.hi[1] - source.lo[1]),
            ];
            let center = [s[0] + drift[0], s[1] + drift[1]];
            if let Ok(f) = overlap_fraction(&kernel_box(&center, eps), target, domain) {
                lo = lo.min(f);
                hi = hi.max(f);
            }
        }
    }
    (hi >= lo).then_some((lo, hi))
}

// ═══════════════════════════════════════════════════════════════════════
// Dense-sampling oracle for the source/target reference instance
// ═══════════════════════════════════════════════════════════════════════

#[test]
fn reference_instance_agrees_with_dense_sampling() {
    let domain = walker_domain();
    let source = AxisBox::new(vec![0.4, 0.4], vec![0.5, 0.5]).unwrap();
    let target = AxisBox::new(vec![0.5, 0.5], vec![0.6, 0.6]).unwrap();
    let drift = [0.1, 0.1];
    let eps = 0.1;

    let (p_low, p_high) = overlap_bounds(&source, &drift, eps, &target, &domain).unwrap();
    let (s_low, s_high) = sampled_extrema(&source, &drift, eps, &target, &domain, 200).unwrap();

    assert!(
        (p_low - s_low).abs() < AGREE_TOL && (p_high - s_high).abs() < AGREE_TOL,
        "analytic bounds [{p_low}, {p_high}] vs sampled extrema [{s_low}, {s_high}]"
    );
    // Containment: no sampled mass may escape the analytic interval.
    assert!(s_low >= p_low - CONTAIN_TOL && s_high <= p_high + CONTAIN_TOL);
}

#[test]
fn random_instances_contained_in_bounds() {
    let domain = walker_domain();
    let coarse = GridPartition::uniform(domain.clone(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0075);
    let mut checked = 0usize;
    for _ in 0..60 {
        let lo = [rng.gen_range(0.0..0.9), rng.gen_range(0.0..0.9)];
        let size = [rng.gen_range(0.02..0.25), rng.gen_range(0.02..0.25)];
        let source =
            AxisBox::new(lo.to_vec(), vec![lo[0] + size[0], lo[1] + size[1]]).unwrap();
        let drift = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let eps = rng.gen_range(0.02..0.25);
        let target_cell = RegionId(vec![rng.gen_range(0..12), rng.gen_range(0..12)]);
        let target = coarse.region_box(&target_cell).unwrap();

        let Ok((p_low, p_high)) = overlap_bounds(&source, &drift, eps, &target, &domain)
        else {
            continue; // kernel may leave the domain for extreme drifts
        };
        let (s_low, s_high) =
            sampled_extrema(&source, &drift, eps, &target, &domain, 60).unwrap();
        assert!(
            s_low >= p_low - CONTAIN_TOL && s_high <= p_high + CONTAIN_TOL,
            "sampled [{s_low}, {s_high}] escapes analytic [{p_low}, {p_high}] \
             for source {source:?} drift {drift:?} eps {eps}"
        );
        checked += 1;
    }
    assert!(checked >= 30, "too many degenerate instances: {checked}");
}

// ═══════════════════════════════════════════════════════════════════════
// Partition-level invariants
// ═══════════════════════════════════════════════════════════════════════

/// For every interior source cell, the per-cell lower masses must sum to at
/// most 1 and the upper masses to at least 1 — otherwise no transition
/// distribution would fit the bounds and the interval abstraction would be
/// vacuous.
#[test]
fn cell_mass_bounds_bracket_unity() {
    let domain = walker_domain();
    let grid = GridPartition::uniform(domain.clone(), 0.1).unwrap();
    let actions: [(&str, [f64; 2]); 2] = [("fast", [0.25, 0.05]), ("slow", [0.10, 0.10])];
    let eps = 0.1;
    let inner = AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let mut tested = 0usize;
    for id in grid.regions() {
        let source = grid.region_box(&id).unwrap();
        if !inner.contains_box(&source) {
            continue;
        }
        for (name, drift) in &actions {
            let mut sum_lo = 0.0;
            let mut sum_hi = 0.0;
            for tid in grid.regions() {
                let target = grid.region_box(&tid).unwrap();
                let (p_low, p_high) =
                    overlap_bounds(&source, drift, eps, &target, &domain).unwrap();
                sum_lo += p_low;
                sum_hi += p_high;
            }
            assert!(
                sum_lo <= 1.0 + 1e-12 && sum_hi >= 1.0 - 1e-12,
                "cell {id} action {name}: lower masses sum to {sum_lo}, upper to {sum_hi}"
            );
            tested += 1;
        }
    }
    assert_eq!(tested, 200, "expected all 100 interior cells x 2 actions");
}

proptest! {
    /// A kernel's masses over all cells of a partition sum to exactly 1.
    #[test]
    fn fractions_sum_to_one(
        cx in 0.0f64..1.2,
        ct in 0.0f64..1.2,
        eps in 0.01f64..0.3,
    ) {
        let domain = walker_domain();
        let grid = GridPartition::uniform(domain.clone(), 0.1).unwrap();
        let kernel = kernel_box(&[cx, ct], eps);
        let total: f64 = grid
            .regions()
            .map(|id| {
                let cell = grid.region_box(&id).unwrap();
                overlap_fraction(&kernel, &cell, &domain).unwrap()
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "masses sum to {total}");
    }

    /// The analytic bounds contain the fraction at the source-box midpoint.
    #[test]
    fn bounds_contain_midpoint_fraction(
        lox in 0.0f64..0.9,
        lot in 0.0f64..0.9,
        sx in 0.01f64..0.25,
        st in 0.01f64..0.25,
        dx in -0.3f64..0.3,
        dt in -0.3f64..0.3,
        eps in 0.02f64..0.25,
        ti in 0usize..12,
        tj in 0usize..12,
    ) {
        let domain = walker_domain();
        let grid = GridPartition::uniform(domain.clone(), 0.1).unwrap();
        let source = AxisBox::new(vec![lox, lot], vec![lox + sx, lot + st]).unwrap();
        let target = grid.region_box(&RegionId(vec![ti, tj])).unwrap();
        if let Ok((p_low, p_high)) = overlap_bounds(&source, &[dx, dt], eps, &target, &domain) {
            let mid = source.midpoint();
            let center = [mid[0] + dx, mid[1] + dt];
            if let Ok(f) = overlap_fraction(&kernel_box(&center, eps), &target, &domain) {
                prop_assert!(
                    f >= p_low - CONTAIN_TOL && f <= p_high + CONTAIN_TOL,
                    "midpoint mass {f} outside [{p_low}, {p_high}]"
                );
            }
        }
    }

    /// Refining by `f` divides the cell diagonal by exactly `f`.
    #[test]
    fn granularity_scales_with_refinement(
        width in 0.01f64..0.3,
        factor in 1usize..5,
    ) {
        let grid = GridPartition::uniform(walker_domain(), width).unwrap();
        let fine = grid.refine(factor).unwrap();
        let expected = grid.granularity() / factor as f64;
        prop_assert!((fine.granularity() - expected).abs() < 1e-12);
    }

    /// Each refined cell nests inside the coarse cell owning the same point.
    #[test]
    fn refined_cells_nest_in_coarse(
        points in prop::collection::vec((0.0f64..=1.2, 0.0f64..=1.2), 100),
        factor in 1usize..4,
    ) {
        let coarse = GridPartition::uniform(walker_domain(), 0.1).unwrap();
        let fine = coarse.refine(factor).unwrap();
        for (x, t) in points {
            let p = [x, t];
            let coarse_box = coarse.region_box(&coarse.region_of(&p).unwrap()).unwrap();
            let fine_box = fine.region_box(&fine.region_of(&p).unwrap()).unwrap();
            prop_assert!(coarse_box.contains_box(&fine_box));
            prop_assert!(fine_box.contains_halfopen(&p, coarse.domain()));
        }
    }
}
