use clip_coherence::logic::{
    combine_and, combine_neg, combine_or, count_descriptions, enumerate_descriptions, nth_description, parse,
    truth_eval, Atom, Description, Vocabulary,
};
use proptest::prelude::*;
use std::collections::HashSet;

fn vocab(words: &[&str]) -> Vocabulary {
    Vocabulary::from_strs(words).unwrap()
}

fn arb_description(max_depth: u32) -> impl Strategy<Value = Description> {
    let leaf = prop_oneof![Just("cat"), Just("dog"), Just("red car"), Just("x_1")]
        .prop_map(|w| Description::atom(&Atom::new(w).unwrap()));
    leaf.prop_recursive(max_depth, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(combine_neg),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| combine_or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| combine_and(a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn parse_inverts_render(d in arb_description(4)) {
        prop_assert!(d.depth() <= 4);
        let text = d.render();
        prop_assert_eq!(parse(&text).unwrap(), d);
    }

    #[test]
    fn extra_whitespace_is_tolerated(d in arb_description(3)) {
        let spaced = d.render().replace(' ', "   ");
        prop_assert_eq!(parse(&spaced).unwrap(), d);
    }

    #[test]
    fn truth_eval_respects_de_morgan(d in arb_description(3), e in arb_description(3), bits in 0u8..16) {
        let assign = |a: &Atom| {
            let k = ["cat", "dog", "red car", "x_1"].iter().position(|w| *w == a.as_str()).unwrap();
            bits >> k & 1 == 1
        };
        let lhs = truth_eval(&combine_neg(combine_or(d.clone(), e.clone())), &assign);
        let rhs = truth_eval(&combine_and(combine_neg(d), combine_neg(e)), &assign);
        prop_assert_eq!(lhs, rhs);
    }
}

#[test]
fn round_trip_exhaustive_to_depth_three() {
    let all = enumerate_descriptions(&vocab(&["a", "b"]), 3).unwrap();
    assert_eq!(all.len(), 182_712);
    for d in &all {
        assert_eq!(&parse(&d.render()).unwrap(), d);
    }
}

#[test]
fn enumeration_is_duplicate_free_and_depth_ordered() {
    let all = enumerate_descriptions(&vocab(&["a", "b", "c"]), 2).unwrap();
    let distinct: HashSet<String> = all.iter().map(|d| d.render()).collect();
    assert_eq!(distinct.len(), all.len());
    assert!(all.windows(2).all(|w| w[0].depth() <= w[1].depth()));
}

// independent count: number of trees of depth exactly k, summed
fn brute_count(n_atoms: u128, depth: usize) -> u128 {
    let mut exact = vec![n_atoms];
    for k in 1..=depth {
        let below: u128 = exact[..k - 1].iter().sum();
        let prev = exact[k - 1];
        // not over depth k-1; or/and with max operand depth exactly k-1
        let pairs = prev * prev + 2 * prev * below;
        exact.push(prev + 2 * pairs);
    }
    exact.iter().sum()
}

#[test]
fn counts_match_independent_recurrence() {
    for n in 1..5usize {
        for depth in 0..6 {
            assert_eq!(count_descriptions(n, depth), Some(brute_count(n as u128, depth)), "n={n} depth={depth}");
        }
    }
    assert_eq!(count_descriptions(2, 1), Some(12));
    assert_eq!(count_descriptions(2, 2), Some(302));
    assert_eq!(count_descriptions(1, 4), Some(15_415_129));
}

#[test]
fn unranking_agrees_with_enumeration() {
    for words in [&["a"][..], &["a", "b"], &["a", "b", "c"]] {
        let v = vocab(words);
        let depth = if words.len() == 3 { 2 } else { 3 };
        let all = enumerate_descriptions(&v, depth).unwrap();
        for (k, d) in all.iter().enumerate() {
            assert_eq!(&nth_description(&v, depth, k as u128).unwrap(), d);
        }
        assert!(nth_description(&v, depth, all.len() as u128).is_err());
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    for bad in ["", "(", "cat )", "not cat", "( cat ) or", "( cat ) xor ( dog )", "( cat )", "not ( or )", "cat ( dog )"] {
        assert!(parse(bad).is_err(), "{bad:?} should not parse");
    }
}
