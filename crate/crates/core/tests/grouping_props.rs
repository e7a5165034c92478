use gmsdb::distance::ClusterDistanceMatrix;
use gmsdb::grouping::{
    dbscan_precomputed, delta_d, epsilon_schedule, mc, mc_p_value, super_distance_matrix, SuperDistanceMatrix,
};
use proptest::prelude::*;

fn symmetric(n: usize, upper: &[f64]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[i][j] = upper[k];
            m[j][i] = upper[k];
            k += 1;
        }
    }
    m
}

fn matrices() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=8).prop_flat_map(|n| {
        prop::collection::vec(0.1f64..10.0, n * (n - 1) / 2).prop_map(move |u| symmetric(n, &u))
    })
}

/// Connected components of the graph `R <= eps` by repeated relaxation.
fn components(r: &[Vec<f64>], eps: f64) -> Vec<usize> {
    let n = r.len();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if r[i][j] <= eps && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            return label;
        }
    }
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dbscan_with_one_point_is_connected_components(rows in matrices(), pick in 0usize..64) {
        let r = ClusterDistanceMatrix::from_entries(&rows).unwrap();
        let schedule = epsilon_schedule(&r).unwrap();
        let eps = schedule.values()[pick % schedule.len()];
        let p = dbscan_precomputed(&r, eps, 1).unwrap();
        prop_assert!(same_partition(p.map(), &components(&rows, eps)));
    }

    #[test]
    fn superclusters_never_increase_along_the_schedule(rows in matrices()) {
        let r = ClusterDistanceMatrix::from_entries(&rows).unwrap();
        let schedule = epsilon_schedule(&r).unwrap();
        let counts: Vec<usize> =
            schedule.values().iter().map(|&e| dbscan_precomputed(&r, e, 1).unwrap().count()).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
        prop_assert_eq!(*counts.last().unwrap(), 1);
        prop_assert!(schedule.values().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn threshold_and_p_value_forms_agree(rows in matrices(), alpha in 0.01f64..0.5, d in 1usize..6) {
        let dm = SuperDistanceMatrix::from_rows(&rows).unwrap();
        let t = delta_d(alpha, d).unwrap();
        prop_assert_eq!(mc(&dm, t), mc_p_value(&dm, alpha, d).unwrap());
    }

    #[test]
    fn super_distances_are_member_minima(rows in matrices(), pick in 0usize..64) {
        let r = ClusterDistanceMatrix::from_entries(&rows).unwrap();
        let schedule = epsilon_schedule(&r).unwrap();
        let p = dbscan_precomputed(&r, schedule.values()[pick % schedule.len()], 1).unwrap();
        let dm = super_distance_matrix(&r, &p).unwrap();
        let groups = p.members();
        for (i, gi) in groups.iter().enumerate() {
            for (j, gj) in groups.iter().enumerate() {
                let want = if i == j {
                    0.0
                } else {
                    gi.iter().flat_map(|&a| gj.iter().map(move |&b| (a, b))).map(|(a, b)| rows[a][b]).fold(f64::INFINITY, f64::min)
                };
                prop_assert_eq!(dm.get(i, j), want);
            }
        }
    }
}

#[test]
fn threshold_closed_form_in_two_dimensions() {
    // 2 degrees of freedom: Q_{1-alpha} = -2 ln(alpha), so deltaD = sqrt(-4 ln alpha).
    for alpha in [0.01, 0.05, 0.1, 0.3] {
        let want = (-4.0 * f64::ln(alpha)).sqrt();
        assert!((delta_d(alpha, 2).unwrap() - want).abs() < 1e-9);
    }
}
