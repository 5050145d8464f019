mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn constrained_episodes_never_exceed_the_budget(seed in any::<u64>()) {
        let (achieved, bound) = common::budget_trial(seed);
        prop_assert!(achieved <= bound, "achieved {achieved} > bound {bound}");
    }
}
