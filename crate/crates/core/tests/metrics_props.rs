use gmsdb::metrics::{pair_counts, pwtn, pwtp, rand_index};
use proptest::prelude::*;

fn brute_force(a: &[u8], b: &[u8]) -> (u64, u64, u64) {
    let (mut tp, mut tn, mut total) = (0, 0, 0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            total += 1;
            let same_a = a[i] == a[j];
            let same_b = b[i] == b[j];
            if same_a && same_b {
                tp += 1;
            } else if !same_a && !same_b {
                tn += 1;
            }
        }
    }
    (tp, tn, total)
}

fn labelings() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (2usize..=50).prop_flat_map(|n| (prop::collection::vec(0u8..6, n), prop::collection::vec(0u8..6, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contingency_matches_enumeration((a, b) in labelings()) {
        let c = pair_counts(&a, &b).unwrap();
        let (tp, tn, total) = brute_force(&a, &b);
        prop_assert_eq!((c.true_positive, c.true_negative, c.total), (tp, tn, total));
        prop_assert_eq!(rand_index(&a, &b).unwrap(), pwtp(&a, &b).unwrap() + pwtn(&a, &b).unwrap());
        prop_assert_eq!(rand_index(&a, &b).unwrap(), rand_index(&b, &a).unwrap());
    }

    #[test]
    fn invariant_under_relabeling((a, b) in labelings(), shift in 1u8..200) {
        let renamed: Vec<u8> = b.iter().map(|&l| l.wrapping_mul(7).wrapping_add(shift)).collect();
        prop_assert_eq!(pair_counts(&a, &b).unwrap(), pair_counts(&a, &renamed).unwrap());
    }
}

#[test]
fn mixed_label_types() {
    let truth: Vec<i64> = vec![-1, -1, 0, 0, 1];
    let pred = ["a", "a", "b", "b", "c"];
    assert_eq!(rand_index(&truth, &pred).unwrap(), 1.0);
}
