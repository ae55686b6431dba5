//! The solved interval abstraction must bracket an independently computed
//! fine-grid approximation of the continuous optimal cost on (nearly) all
//! cells: lower bound ≤ continuous optimum ≤ upper bound.

use gridbound::abstraction::{induce, AbstractionMode};
use gridbound::emdp::{fine_grid_oracle, WalkerModel};
use gridbound::geometry::GridPartition;
use gridbound::imdp::{value_iteration, OptMode, ViParams};

#[test]
fn interval_bounds_bracket_fine_grid_optimum() {
    let model = WalkerModel::default_walker();
    let partition = GridPartition::uniform(model.domain.clone(), 0.1).unwrap();
    let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
    let params = ViParams::default().with_tol(1e-9);
    let lo = value_iteration(&induced.imdp, OptMode::Min, &params).unwrap();
    let hi = value_iteration(&induced.imdp, OptMode::Max, &params).unwrap();

    // Independent approximation of the continuous model: much finer grid,
    // midpoint kernels, plain (non-robust) value iteration.
    let oracle = fine_grid_oracle(&model, 0.02, 1e-9, 100_000).unwrap();
    assert!(oracle.converged);

    let mut inside = 0usize;
    let mut total = 0usize;
    let mut first_escape: Option<String> = None;
    for id in partition.regions() {
        let lin = partition.linear_index(&id);
        if induced.imdp.goal[lin] {
            continue;
        }
        let mid = partition.region_box(&id).unwrap().midpoint();
        let fine_id = oracle.partition.region_of(&mid).unwrap();
        let v = oracle.values[oracle.partition.linear_index(&fine_id)];
        total += 1;
        if lo.values[lin] - 1e-9 <= v && v <= hi.values[lin] + 1e-9 {
            inside += 1;
        } else if first_escape.is_none() {
            first_escape = Some(format!(
                "cell {id}: oracle value {v} outside [{}, {}]",
                lo.values[lin], hi.values[lin]
            ));
        }
    }
    eprintln!("sandwich probes inside bounds: {inside}/{total}");
    assert_eq!(total, 100, "every regular cell gets probed");
    assert!(
        inside * 20 >= total * 19,
        "only {inside}/{total} probes inside the solved bounds; first escape: {first_escape:?}"
    );
}
