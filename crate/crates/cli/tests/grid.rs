use hkuramoto_cli::config::parse_grid;
use proptest::prelude::*;

proptest! {
    #[test]
    fn range_grids_hit_both_ends(a in -10.0f64..10.0, b in -10.0f64..10.0, n in 2usize..200) {
        let g = parse_grid(&format!("{a:?}:{b:?}:{n}")).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], a);
        prop_assert!((g[n - 1] - b).abs() <= 1e-12 * (1.0 + b.abs()));
        let step = (b - a) / (n - 1) as f64;
        for w in g.windows(2) {
            prop_assert!((w[1] - w[0] - step).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }

    #[test]
    fn lists_round_trip(xs in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let spec = xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_grid(&spec).unwrap(), xs);
    }
}

#[test]
fn rejects_malformed_grids() {
    for bad in ["", "1:2", "1:2:3:4", "a,b", "1:nan:3", "1:2:0", "inf"] {
        assert!(parse_grid(bad).is_err(), "{bad:?}");
    }
}
