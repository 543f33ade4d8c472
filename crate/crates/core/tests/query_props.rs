mod common;

use plato_core::query::{parse, validate, Catalog, Expr};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printed_queries_parse_back(e in common::arbitrary_expr(6)) {
        prop_assert!(common::depth(&e) <= 6);
        let text = e.to_string();
        let back = parse(&text);
        prop_assert_eq!(back.as_ref(), Ok(&e), "{}", text);
    }

    #[test]
    fn printing_is_idempotent(e in common::arbitrary_expr(6)) {
        let once = e.to_string();
        let twice = parse(&once).unwrap().to_string();
        prop_assert_eq!(once, twice);
    }

    /// Generated workload queries are valid against their catalog.
    #[test]
    fn generated_queries_validate(seed in any::<u64>(), n in 8u64..600, extra in 1u64..20) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gen = common::QueryGen::new(&mut rng, n, extra);
        let catalog: Catalog = [("T1".to_string(), n), ("T2".to_string(), n), ("T3".to_string(), n + extra)].into_iter().collect();
        let mut ok = 0;
        for _ in 0..20 {
            let q: Expr = gen.query(&mut rng, 5);
            prop_assert!(common::depth(&q) <= 5, "{}", q);
            let back = parse(&q.to_string());
            prop_assert_eq!(back.as_ref(), Ok(&q));
            if validate(&q, &catalog).is_ok() {
                ok += 1;
            }
        }
        prop_assert!(ok >= 10, "only {} of 20 valid", ok);
    }
}
