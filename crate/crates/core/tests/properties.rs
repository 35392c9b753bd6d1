use bisbm::gpm::{gpm_refine, normalize_membership, project_rows};
use bisbm::io::{format_metric, read_matrix_market, read_partition, write_matrix_market, write_partition};
use bisbm::linalg::{hollowed_gram, DenseSymmetricMatrix, Mat};
use bisbm::metrics::{hamming, loss_l, misclustering_rate, nmi, SignalMatrix};
use bisbm::model::{check_assumptions, BiSBMParams, Partition, SparseBinaryMatrix};
use proptest::prelude::*;

fn partition(max_n: usize, max_k: usize) -> impl Strategy<Value = Partition> {
    (1..=max_k, 1..=max_n).prop_flat_map(|(k, n)| {
        prop::collection::vec(0..k, n).prop_map(move |labels| Partition::new(labels, k).unwrap())
    })
}

fn partition_pair(max_n: usize, max_k: usize) -> impl Strategy<Value = (Partition, Partition)> {
    (1..=max_k, 1..=max_n).prop_flat_map(|(k, n)| {
        (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n))
            .prop_map(move |(a, b)| (Partition::new(a, k).unwrap(), Partition::new(b, k).unwrap()))
    })
}

fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..k).collect::<Vec<_>>()).prop_shuffle()
}

fn sparse(max_r: usize, max_c: usize) -> impl Strategy<Value = SparseBinaryMatrix> {
    (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
        prop::collection::vec(any::<bool>(), r * c).prop_map(move |bits| {
            let coords = bits.iter().enumerate().filter(|(_, &b)| b).map(|(idx, _)| (idx / c, idx % c)).collect();
            SparseBinaryMatrix::from_coords(r, c, coords).unwrap()
        })
    })
}

fn symmetric(n: usize) -> impl Strategy<Value = DenseSymmetricMatrix> {
    prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = if i <= j { v[i * n + j] } else { v[j * n + i] };
            }
        }
        DenseSymmetricMatrix::new(n, data).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projecting_a_vertex_returns_it(z in partition(40, 6)) {
        let (n, k) = (z.len(), z.k());
        let mut m = Mat::zeros(n, k);
        for (i, &l) in z.labels().iter().enumerate() {
            m.set(i, l, 1.0);
        }
        prop_assert_eq!(project_rows(&m).unwrap(), z);
    }

    #[test]
    fn projection_is_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 12), s in 0.001f64..1000.0) {
        let m = Mat::from_vec(4, 3, v.clone()).unwrap();
        let scaled = Mat::from_vec(4, 3, v.iter().map(|x| x * s).collect()).unwrap();
        prop_assert_eq!(project_rows(&m).unwrap(), project_rows(&scaled).unwrap());
    }

    #[test]
    fn gpm_is_invariant_to_scaling_b(a in sparse(12, 15), k in 1usize..4, s in prop::sample::select(vec![0.5, 2.0, 4.0, 8.0])) {
        prop_assume!(k <= a.n_rows());
        let b = hollowed_gram(&a).unwrap();
        let n = b.n();
        let scaled = DenseSymmetricMatrix::new(n, b.as_mat().data().iter().map(|x| x * s).collect()).unwrap();
        let z0 = Partition::new((0..n).map(|i| i % k).collect(), k).unwrap();
        prop_assert_eq!(gpm_refine(&b, &z0, 8).unwrap(), gpm_refine(&scaled, &z0, 8).unwrap());
    }

    #[test]
    fn membership_columns_sum_to_one_on_nonempty(z in partition(30, 5)) {
        let w = normalize_membership(&z);
        for c in 0..z.k() {
            let s: f64 = w.w.column(c).iter().sum();
            if w.empty[c] {
                prop_assert_eq!(s, 0.0);
            } else {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_and_nmi_ignore_relabeling(
        (zhat, z, perm) in partition_pair(60, 6).prop_flat_map(|(a, b)| {
            let k = a.k();
            (Just(a), Just(b), permutation(k))
        })
    ) {
        let relabeled = zhat.relabel(&perm).unwrap();
        prop_assert_eq!(misclustering_rate(&relabeled, &z).unwrap(), misclustering_rate(&zhat, &z).unwrap());
        prop_assert!((nmi(&relabeled, &z).unwrap() - nmi(&zhat, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metric_ranges((zhat, z) in partition_pair(60, 5)) {
        let r = misclustering_rate(&zhat, &z).unwrap();
        let k = z.k() as f64;
        prop_assert!((0.0..=1.0 - 1.0 / k + 1e-12).contains(&r));
        let v = nmi(&zhat, &z).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - nmi(&z, &zhat).unwrap()).abs() < 1e-12);
        prop_assert_eq!(misclustering_rate(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn hamming_bounded_by_loss(
        k in 2usize..5,
        n1 in 30usize..120,
        ratio in 2usize..20,
        p in 0.05f64..0.9,
        c in 0.01f64..0.7,
        seed in any::<u64>(),
    ) {
        let params = BiSBMParams::sbisbm(n1, n1 * ratio, k, p, c).unwrap();
        let sig = SignalMatrix::from_params(&params).unwrap();
        prop_assume!(check_assumptions(&params).satisfied.iter().all(|&s| s) && !sig.clamped);
        let mut state = seed;
        let mut next = move || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 33) as usize };
        let z = Partition::new((0..n1).map(|_| next() % k).collect(), k).unwrap();
        let zp = Partition::new(z.labels().iter().map(|&l| if next() % 3 == 0 { next() % k } else { l }).collect(), k).unwrap();
        let h = hamming(&z, &zp).unwrap() as f64;
        let l = loss_l(&z, &zp, &sig).unwrap();
        prop_assert!(h * sig.delta_min_sq <= l * (1.0 + 1e-12));
    }

    #[test]
    fn gram_counts_shared_columns(a in sparse(10, 14)) {
        let b = hollowed_gram(&a).unwrap();
        for i in 0..a.n_rows() {
            prop_assert_eq!(b.get(i, i), 0.0);
            for j in 0..a.n_rows() {
                if i != j {
                    let shared = a.row(i).iter().filter(|c| a.row(j).contains(c)).count() as f64;
                    prop_assert_eq!(b.get(i, j), shared);
                    prop_assert_eq!(b.get(i, j), b.get(j, i));
                }
            }
        }
    }

    #[test]
    fn hollowing_is_linear((m, n) in (symmetric(6), symmetric(6))) {
        let sum = DenseSymmetricMatrix::new(6, m.as_mat().data().iter().zip(n.as_mat().data()).map(|(x, y)| x + y).collect()).unwrap();
        let lhs = sum.hollowed();
        let (hm, hn) = (m.hollowed(), n.hollowed());
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((lhs.get(i, j) - (hm.get(i, j) + hn.get(i, j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_market_round_trip(a in sparse(15, 15)) {
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        prop_assert_eq!(read_matrix_market(&buf[..]).unwrap(), a);
    }

    #[test]
    fn partition_round_trip(z in partition(50, 7)) {
        let mut buf = Vec::new();
        write_partition(&z, &mut buf).unwrap();
        prop_assert_eq!(read_partition(&buf[..], Some(z.k())).unwrap(), z);
    }

    #[test]
    fn formatted_metrics_keep_six_digits(x in prop_oneof![-1e9f64..1e9, -1.0f64..1.0, 1e-9f64..1e-3]) {
        let back: f64 = format_metric(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + f64::MIN_POSITIVE);
    }
}
