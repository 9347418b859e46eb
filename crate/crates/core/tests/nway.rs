use branchsim::born::{nway_config, nway_mean_branches};
use branchsim::evolution::{closed_form, evolve, evolve_with, EvolveOptions};
use branchsim::born::BornError;
use branchsim::{build_topology_seeded, ModelParams, ParamError, RecordScope};

fn base(seed: u64) -> ModelParams {
    ModelParams {
        orbit_len: 1200,
        branch_points: 120,
        age_levels: 48,
        records: 4000,
        lifetime: 40,
        alpha: 1.5,
        l0: 2.0,
        d_min: 3,
        n_reg: 2,
        n_split: 2,
        seed,
        w_red: 3,
        record_scope: RecordScope::All,
    }
}

#[test]
fn binary_weights_reduce_to_two_way_model() {
    let p = nway_config(&base(1), &[0.5]).unwrap();
    assert_eq!(p, base(1));
    let a = build_topology_seeded(&p).unwrap();
    let b = build_topology_seeded(&base(1)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(evolve(&a, 40).unwrap(), evolve(&b, 40).unwrap());
}

#[test]
fn three_way_norm_partition() {
    // three-way jump graphs close loops sooner; T = 30 stays constructible
    let short = ModelParams { lifetime: 30, ..base(2) };
    let p = nway_config(&short, &[1.0 / 3.0]).unwrap();
    assert_eq!(p.n_split, 3);
    let topo = build_topology_seeded(&p).unwrap();
    assert!(topo.branch_points().iter().all(|&q| topo.targets(q).len() == 3));
    for t in 0..=30 {
        let s = evolve(&topo, t).unwrap();
        assert!(s.norm_is_exact(), "t = {t}");
        assert!(s.pairwise_distinguishable(&topo));
    }
    let last = evolve(&topo, 30).unwrap();
    assert!(last.branches.iter().any(|b| b.p() >= 2));
    let opts = EvolveOptions { conscious: false, ..Default::default() };
    let a = evolve_with(&topo, 30, opts).unwrap();
    assert_eq!(a.branches, closed_form(&topo, 30).unwrap().branches);
}

#[test]
fn register_partition_too_fine_is_rejected() {
    let small = ModelParams { branch_points: 120, n_reg: 5, ..base(0) };
    // 3^5 = 243 register subsets exceed 120 branching points
    match nway_config(&small, &[1.0 / 3.0]) {
        Err(BornError::Params(ParamError::RegisterPartition { .. })) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn generalized_mean_formula() {
    assert!((nway_mean_branches(0.1, 2, 40) - 1.1f64.powi(40)).abs() < 1e-9);
    assert!((nway_mean_branches(0.1, 3, 10) - 1.2f64.powi(10)).abs() < 1e-12);
}
