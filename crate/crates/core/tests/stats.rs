use chanreduce::stats::{
    average_rank, pairwise_pvalues, rank_descending, summarize, welch_t_test, MethodSample,
};
use proptest::prelude::*;

// scipy.stats.ttest_ind(a, b, equal_var=False)
const T_REF: f64 = 0.6123724356957946;
const DOF_REF: f64 = 2.5599999999999996;
const P_REF: f64 = 0.5903318162661183;

fn sig6(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-7 * b.abs()
}

#[test]
fn welch_matches_reference_fixture() {
    let a = MethodSample::new("a", vec![0.60, 0.62, 0.61]);
    let b = MethodSample::new("b", vec![0.58, 0.59, 0.63]);
    let w = welch_t_test(&a, &b).unwrap();
    assert!(sig6(w.t, T_REF), "{}", w.t);
    assert!(sig6(w.dof, DOF_REF), "{}", w.dof);
    assert!(sig6(w.p_two_sided, P_REF), "{}", w.p_two_sided);
}

#[test]
fn shifted_samples_are_separated() {
    let a = MethodSample::new("a", vec![1.0, 2.0, 3.0]);
    let b = MethodSample::new("b", vec![101.0, 102.0, 103.0]);
    let w = welch_t_test(&a, &b).unwrap();
    assert!(sig6(w.p_two_sided, 2.6654818961636016e-08));
}

#[test]
fn three_method_fixture_matches_reference() {
    let samples = vec![
        MethodSample::new("pca", vec![0.81, 0.83, 0.82]),
        MethodSample::new("svd", vec![0.78, 0.80, 0.79, 0.77]),
        MethodSample::new("rp", vec![0.70, 0.74, 0.69]),
    ];
    let m = pairwise_pvalues(&samples).unwrap();
    assert_eq!(m.method_ids, vec!["pca", "svd", "rp"]);
    assert!(sig6(m.p[0][1], 0.010076943347988865));
    assert!(sig6(m.p[0][2], 0.01082187128505759));
    assert!(sig6(m.p[2][1], 0.024856735662667294));
    for i in 0..3 {
        assert_eq!(m.p[i][i], 1.0);
    }
}

#[test]
fn identical_methods_have_unit_pvalues() {
    let s = MethodSample::new("x", vec![0.5, 0.7, 0.6]);
    let m = pairwise_pvalues(&[s.clone(), MethodSample { method_id: "y".into(), ..s }]).unwrap();
    assert_eq!(m.p, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
}

#[test]
fn pair_errors_name_both_methods() {
    let err = pairwise_pvalues(&[MethodSample::new("good", vec![1.0, 2.0]), MethodSample::new("short", vec![1.0])])
        .unwrap_err()
        .to_string();
    assert!(err.contains("good") && err.contains("short"), "{err}");
}

#[test]
fn rank_examples() {
    assert_eq!(average_rank(&[vec![0.9, 0.8, 0.7]]).unwrap(), vec![1.0, 2.0, 3.0]);
    assert_eq!(average_rank(&[vec![0.9, 0.9, 0.7]]).unwrap(), vec![1.5, 1.5, 3.0]);
    assert!(average_rank(&[]).is_err());
}

/// Sort-and-scan ranking: for each value count strictly larger and equal entries.
fn brute_force_ranks(row: &[f64]) -> Vec<f64> {
    row.iter()
        .map(|&v| {
            let greater = row.iter().filter(|&&u| u > v).count() as f64;
            let equal = row.iter().filter(|&&u| u == v).count() as f64;
            greater + (equal + 1.0) / 2.0
        })
        .collect()
}

fn table(datasets: usize, methods: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // coarse grid so ties occur
    prop::collection::vec(prop::collection::vec((0u8..10).prop_map(|v| v as f64 / 10.0), methods), datasets)
}

proptest! {
    #[test]
    fn average_rank_matches_brute_force(acc in table(5, 4)) {
        let got = average_rank(&acc).unwrap();
        for m in 0..4 {
            let expected = acc.iter().map(|row| brute_force_ranks(row)[m]).sum::<f64>() / 5.0;
            prop_assert!((got[m] - expected).abs() < 1e-12);
            prop_assert!((1.0..=4.0).contains(&got[m]));
        }
    }

    #[test]
    fn ranks_survive_increasing_affine_maps(row in prop::collection::vec(0.0f64..1.0, 1..8), a in 0.01f64..10.0, b in -5.0f64..5.0) {
        let mapped: Vec<f64> = row.iter().map(|v| a * v + b).collect();
        // strictly increasing maps preserve order but may merge values that are
        // within rounding of each other, so compare only well-separated inputs
        let separated = row.iter().all(|x| row.iter().all(|y| x == y || (x - y).abs() > 1e-9));
        prop_assume!(separated);
        prop_assert_eq!(rank_descending(&row), rank_descending(&mapped));
    }

    #[test]
    fn pairwise_matrix_is_symmetric(
        values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2..6), 2..5)
    ) {
        let samples: Vec<MethodSample> =
            values.into_iter().enumerate().map(|(i, v)| MethodSample::new(format!("m{i}"), v)).collect();
        let m = pairwise_pvalues(&samples).unwrap();
        for i in 0..samples.len() {
            prop_assert_eq!(m.p[i][i], 1.0);
            for j in 0..samples.len() {
                prop_assert_eq!(m.p[i][j], m.p[j][i]);
                prop_assert!((0.0..=1.0).contains(&m.p[i][j]));
            }
        }
    }

    #[test]
    fn welch_swap_flips_t_only(a in prop::collection::vec(-3.0f64..3.0, 2..6), b in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        let (sa, sb) = (MethodSample::new("a", a), MethodSample::new("b", b));
        let ab = welch_t_test(&sa, &sb).unwrap();
        let ba = welch_t_test(&sb, &sa).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p_two_sided, ba.p_two_sided);
    }

    #[test]
    fn summarize_matches_two_pass(values in prop::collection::vec(-100.0f64..100.0, 2..30)) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (m, s) = summarize(&values);
        prop_assert!((m - mean).abs() < 1e-12);
        prop_assert!((s - var.sqrt()).abs() < 1e-12);
    }
}
