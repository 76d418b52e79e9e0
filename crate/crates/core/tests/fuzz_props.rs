mod common;

use dvkit::fuzz::{generate, parse_template, MutationPlan, Operator};
use dvkit::spec::{parse_spec, BenchmarkSpec};
use proptest::prelude::*;

const TEMPLATES: &[&str] = &[
    "-c {{ascii:1..8=data}}.gz",
    "--level={{int:1..9=6}}",
    "{{dict:-d|-t|-l}} --name {{ascii:0..4}}",
    "raw:{{bytes:2..6=00ff10}}:end",
    "{{{{literal}}}} {{int:-50..50}} / {{dict:x|yy}}",
    "no holes at all",
];

#[test]
fn ten_thousand_mutants_keep_their_skeleton() {
    let mut total = 0;
    for (i, src) in TEMPLATES.iter().enumerate() {
        let t = parse_template(src).unwrap();
        let plan = MutationPlan::new(i as u64, 1700);
        let mutants = generate(&t, &t.seed_instance(), &plan).unwrap();
        for m in &mutants {
            let rendered = t.render(m);
            assert!(common::matches_skeleton(&t, &rendered), "{src}: {:?}", String::from_utf8_lossy(&rendered));
        }
        total += mutants.len();
    }
    assert!(total >= 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mutants_respect_bounds(seed in any::<u64>(), which in 0..TEMPLATES.len(), ops in proptest::sample::subsequence(Operator::ALL.to_vec(), 1..=6)) {
        let t = parse_template(TEMPLATES[which]).unwrap();
        let mut plan = MutationPlan::new(seed, 40);
        plan.operators = ops.into_iter().collect();
        let mutants = generate(&t, &t.seed_instance(), &plan).unwrap();
        prop_assert_eq!(mutants.len(), 40);
        for m in &mutants {
            prop_assert!(t.check_instance(m).is_ok());
            prop_assert!(common::matches_skeleton(&t, &t.render(m)));
        }
        prop_assert_eq!(generate(&t, &t.seed_instance(), &plan).unwrap(), mutants);
    }

    #[test]
    fn template_source_round_trips(idx in 0..TEMPLATES.len()) {
        let t = parse_template(TEMPLATES[idx]).unwrap();
        prop_assert_eq!(parse_template(&t.to_source()).unwrap(), t);
    }
}

fn arb_spec() -> impl Strategy<Value = BenchmarkSpec> {
    let name = "[a-z][a-z0-9_]{0,6}";
    let argv = proptest::collection::vec(
        prop_oneof![Just("-x".to_string()), Just("{{int:0..9}}".to_string()), "[a-z]{1,5}"],
        1..3,
    );
    let command = (argv, proptest::option::of("[a-z ]{0,6}"), 0usize..4);
    let feature = (name, any::<bool>(), proptest::collection::vec(command, 1..3));
    (proptest::collection::vec(feature, 1..4), 1u32..20, 1u32..100).prop_map(|(features, trials, timeout)| {
        let mut seen = std::collections::BTreeSet::new();
        let features: Vec<_> = features
            .into_iter()
            .filter(|(n, _, _)| seen.insert(n.clone()))
            .map(|(n, retain, cmds)| {
                serde_json::json!({
                    "name": n,
                    "disposition": if retain { "retain" } else { "debloat" },
                    "commands": cmds.into_iter().map(|(argv, stdin, fc)| {
                        let mut c = serde_json::json!({"argv": argv, "fuzz_count": fc});
                        if let Some(s) = stdin { c["stdin"] = s.into(); }
                        c
                    }).collect::<Vec<_>>()
                })
            })
            .collect();
        let doc = serde_json::json!({
            "id": "p",
            "original": {"label": "o", "exe": "/bin/true"},
            "variants": [{"label": "v", "exe": "/bin/false", "libs": ["/lib/x.so"]}],
            "features": features,
            "env": {"A": "1"},
            "timeout_seconds": timeout as f64 / 4.0,
            "trials": trials
        });
        parse_spec(doc.to_string().as_bytes()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spec_round_trips(spec in arb_spec()) {
        let again = parse_spec(spec.to_json().as_bytes()).unwrap();
        prop_assert_eq!(again, spec);
    }
}
