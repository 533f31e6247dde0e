mod support;

use proptest::prelude::*;

use hybrid_shield::lang::{parse_formula, parse_program, parse_term, print_formula, print_program, print_term};
use support::gen::trees;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn programs_round_trip(p in trees(8).2) {
        let text = print_program(&p);
        prop_assert_eq!(parse_program(&text).map_err(|e| e.render(&text)), Ok(p));
    }

    #[test]
    fn formulas_round_trip(f in trees(8).1) {
        let text = print_formula(&f);
        prop_assert_eq!(parse_formula(&text).map_err(|e| e.render(&text)), Ok(f));
    }

    #[test]
    fn terms_round_trip(t in trees(8).0) {
        let text = print_term(&t);
        prop_assert_eq!(parse_term(&text).map_err(|e| e.render(&text)), Ok(t));
    }

    #[test]
    fn printing_is_a_fixed_point(p in trees(6).2) {
        let once = print_program(&p);
        let twice = print_program(&parse_program(&once).unwrap());
        prop_assert_eq!(once, twice);
    }
}
