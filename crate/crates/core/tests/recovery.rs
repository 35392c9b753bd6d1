use bisbm::diagnostics::corrupt_partition;
use bisbm::gpm::{default_t_max, gpm_refine};
use bisbm::harness::n2_from_scale;
use bisbm::hl_baseline::hl_cluster;
use bisbm::linalg::hollowed_gram;
use bisbm::metrics::{misclustering_rate, nmi};
use bisbm::model::{sample_adjacency, BiSBMParams, Partition};
use bisbm::seed::rng_for;
use bisbm::spec_init::{spec_init, SpecConfig};

#[test]
fn spec_recovers_deep_snr_instances() {
    let params = BiSBMParams::sbisbm(300, 20000, 2, 0.05, 0.3).unwrap();
    let (z1, z2) = params.planted_partitions();
    let good = (0..20u64)
        .filter(|&s| {
            let a = sample_adjacency(&params, &z1, &z2, s).unwrap();
            let z = spec_init(&a, 2, &SpecConfig::default(), s).unwrap();
            nmi(&z, &z1).unwrap() >= 0.95
        })
        .count();
    assert!(good >= 18, "{good}/20");
}

#[test]
fn spec_is_deterministic_and_blind_to_label_names() {
    let params = BiSBMParams::sbisbm(120, 3000, 3, 0.1, 0.3).unwrap();
    let (z1, z2) = params.planted_partitions();
    let a = sample_adjacency(&params, &z1, &z2, 5).unwrap();
    let cfg = SpecConfig::default();
    let z = spec_init(&a, 3, &cfg, 9).unwrap();
    assert_eq!(z, spec_init(&a, 3, &cfg, 9).unwrap());
    // Renaming the planted communities does not change the sampled graph,
    // and the agreement with the renamed truth is unchanged.
    let renamed = z1.relabel(&[2, 0, 1]).unwrap();
    assert_eq!(misclustering_rate(&z, &renamed).unwrap(), misclustering_rate(&z, &z1).unwrap());
}

#[test]
fn gpm_keeps_truth_fixed_and_repairs_corruption() {
    let params = BiSBMParams::sbisbm(300, 20000, 2, 0.05, 0.3).unwrap();
    let (z1, z2) = params.planted_partitions();
    let t_max = default_t_max(300);
    for s in 0..5u64 {
        let a = sample_adjacency(&params, &z1, &z2, 100 + s).unwrap();
        let b = hollowed_gram(&a).unwrap();
        let from_truth = gpm_refine(&b, &z1, t_max).unwrap();
        assert_eq!(from_truth.converged_at, Some(0));
        assert_eq!(from_truth.last(), &z1);

        let z0 = corrupt_partition(&z1, 0.1, &mut rng_for(s, &[1]));
        let traj = gpm_refine(&b, &z0, t_max).unwrap();
        assert_eq!(misclustering_rate(traj.last(), &z1).unwrap(), 0.0);
        assert!(traj.converged_at.is_some());
    }
}

#[test]
fn gpm_handles_more_communities() {
    let params = BiSBMParams::sbisbm(240, 8000, 4, 0.1, 0.3).unwrap();
    let (z1, z2) = params.planted_partitions();
    let a = sample_adjacency(&params, &z1, &z2, 3).unwrap();
    let b = hollowed_gram(&a).unwrap();
    let z0 = spec_init(&a, 4, &SpecConfig::default(), 3).unwrap();
    let traj = gpm_refine(&b, &z0, default_t_max(240)).unwrap();
    assert_eq!(misclustering_rate(traj.last(), &z1).unwrap(), 0.0);
}

#[test]
fn hl_recovers_two_communities() {
    let n1 = 500;
    let params = BiSBMParams::sbisbm(n1, n2_from_scale(10.0, n1), 2, 0.02, 0.3).unwrap();
    let (z1, z2) = params.planted_partitions();
    let exact = (0..5u64)
        .filter(|&s| {
            let a = sample_adjacency(&params, &z1, &z2, s).unwrap();
            misclustering_rate(&hl_cluster(&a, default_t_max(n1), s).unwrap(), &z1).unwrap() == 0.0
        })
        .count();
    assert_eq!(exact, 5);
}

#[test]
fn unbalanced_rows_are_recovered() {
    let pi = bisbm::model::sbisbm_connectivity(2, 0.08, 0.3).unwrap();
    let params = BiSBMParams::new(pi, vec![80, 160], vec![3000, 3000]).unwrap();
    let (z1, z2) = params.planted_partitions();
    let a = sample_adjacency(&params, &z1, &z2, 8).unwrap();
    let b = hollowed_gram(&a).unwrap();
    let z0 = spec_init(&a, 2, &SpecConfig::default(), 8).unwrap();
    let z = gpm_refine(&b, &z0, default_t_max(240)).unwrap();
    assert_eq!(misclustering_rate(z.last(), &z1).unwrap(), 0.0);
    let sizes = Partition::sizes(z.last());
    assert!(sizes.contains(&80) && sizes.contains(&160));
}
