mod common;

use dvkit::fuzz::MutationPlan;
use dvkit::spec::{load_spec, winnow_to_aggressive};
use dvkit::verdict::{run_campaign, Budget, CampaignOptions, Verdict};

#[test]
fn three_variant_toy() {
    let toy = common::toy_benchmark(3, &["no_b", "same", "crash_a"]);
    let spec = load_spec(&toy.spec_path).unwrap();
    let opts = CampaignOptions { jobs: 2, workdir: None };
    let r = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &opts).unwrap();
    assert_eq!(r.summary.inputs_executed, 8);

    for v in &r.per_variant["no_b"] {
        let want = if v.feature == "A" { Verdict::ExpectedMatch } else { Verdict::ExpectedDifference };
        assert_eq!(v.value, want, "{v:?}");
    }
    assert!(r.per_variant["same"].iter().filter(|v| v.feature == "B").all(|v| v.value == Verdict::UnexpectedMatch));
    assert!(r.per_variant["crash_a"].iter().filter(|v| v.feature == "A").all(|v| v.value == Verdict::VariantCrash));

    let s = &r.summary;
    assert!(s.per_variant["no_b"].passed);
    assert!(!s.per_variant["same"].passed);
    assert!(!s.per_variant["crash_a"].passed);
    assert_eq!(s.passed, 1);
    assert_eq!(s.variants_with_error_or_crash.count, 1);
    assert_eq!(s.variants_with_unremoved_feature.count, 1);
    assert_eq!(s.variants_with_unremoved_feature.fraction, 0.5);
}

#[test]
fn campaigns_are_reproducible() {
    let toy = common::toy_benchmark(5, &["no_b", "same"]);
    let spec = load_spec(&toy.spec_path).unwrap();
    let run = |jobs| {
        run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &CampaignOptions { jobs, workdir: None })
            .unwrap()
            .to_jsonl()
    };
    let a = run(1);
    assert_eq!(a, run(3));
    let other = run_campaign(&spec, &MutationPlan::new(1, 0), Budget::default(), &CampaignOptions::default()).unwrap();
    assert_ne!(a, other.to_jsonl());
}

#[test]
fn aggressive_use_case() {
    let toy = common::toy_benchmark(0, &["no_b"]);
    let spec = winnow_to_aggressive(&load_spec(&toy.spec_path).unwrap()).unwrap();
    let r = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &CampaignOptions::default()).unwrap();
    assert!(r.all_passed());
}

#[test]
fn workdir_and_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    std::fs::create_dir(&work).unwrap();
    std::fs::write(work.join("input.txt"), "payload\n").unwrap();
    let script = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}")).unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    };
    let orig = script("orig", "cat input.txt > out.txt\n");
    let bad = script("bad", "echo different > out.txt\n");
    let doc = serde_json::json!({
        "id": "files",
        "original": {"label": "orig", "exe": orig},
        "variants": [{"label": "bad", "exe": bad}],
        "features": [{"name": "copy", "disposition": "retain",
                      "commands": [{"argv": ["x"], "files": ["out.txt"]}],
                      "comparators": [{"kind": "exit_status"}, {"kind": "file_digest", "path": "out.txt"}]}],
        "env": {"PATH": "/usr/bin:/bin"},
        "timeout_seconds": 10
    });
    let spec = dvkit::spec::parse_spec(doc.to_string().as_bytes()).unwrap();
    let opts = CampaignOptions { jobs: 1, workdir: Some(work.clone()) };
    let r = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &opts).unwrap();
    let v = &r.per_variant["bad"][0];
    assert_eq!(v.value, Verdict::UnexpectedDifference);
    let file_cmp = v.evidence.per_comparator.iter().find(|c| !c.matched).unwrap();
    assert!(file_cmp.evidence.contains("out.txt"), "{}", file_cmp.evidence);
    // the sandbox copy is private
    assert_eq!(std::fs::read_dir(&work).unwrap().count(), 1);
}
