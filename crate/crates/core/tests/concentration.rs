use nrdf_core::bsms::bsms_kernel;
use nrdf_core::concentration::*;
use nrdf_core::probability::{pair_chain, MarkovSource};
use proptest::prelude::*;

#[test]
fn lambda_is_the_smallest_pair_chain_entry() {
    for (p, d) in [(0.25, 0.1), (0.1, 0.05), (0.4, 0.3), (0.7, 0.2)] {
        let lam = lambda_for_bsms(p, d).unwrap();
        let k = bsms_kernel(p, d).unwrap().into_kernel();
        let chain = pair_chain(&MarkovSource::bsms(p).unwrap(), &k).unwrap();
        let min = chain.matrix().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= lam - 1e-15, "p={p} d={d}");
        assert!((min - lam).abs() < 1e-15, "p={p} d={d}: {min} vs {lam}");
    }
}

#[test]
fn curve_on_a_log_grid() {
    let params = bsms_params(0.25, 0.1, 0.01).unwrap();
    let (pts, skipped) = bound_curve(&params, &[10_000, 100_000, 1_000_000, 10_000_000]).unwrap();
    assert_eq!(skipped, vec![10_000]);
    assert_eq!(pts.len(), 3);
    assert!(pts.windows(2).all(|w| w[1].bound < w[0].bound));
    assert!(pts[2].bound < pts[0].bound);
    let first = excess_bound(&params, 22_401).unwrap();
    assert!(first > 0.0 && first <= 1.0);
    let far = excess_bound(&params, 224_000).unwrap();
    assert!(far < 1.0);
}

proptest! {
    #[test]
    fn bound_is_a_decreasing_probability(p in 0.05f64..0.95, d in 0.02f64..0.45, delta in 0.005f64..0.1, k in 1.0f64..50.0) {
        let params = bsms_params(p, d, delta).unwrap();
        let n = (params.threshold() * (1.0 + k / 10.0)).ceil() as u64;
        let a = excess_bound(&params, n).unwrap();
        let b = excess_bound(&params, n * 2).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b < a);
    }
}
