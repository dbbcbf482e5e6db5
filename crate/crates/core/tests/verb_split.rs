//! Shared-noun split over the Kinetics-verb class list.

use std::collections::BTreeMap;

use vfc_core::eval::{build_verb_split, verb_split_groups};
use vfc_core::textgen::VerbLexicon;

fn fixture() -> Vec<(String, String)> {
    include_str!("fixtures/kinetics_verb_classes.tsv")
        .lines()
        .map(|l| {
            let (g, label) = l.split_once('\t').expect("group<TAB>label");
            (g.to_string(), label.to_string())
        })
        .collect()
}

fn published_groups(rows: &[(String, String)]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (g, l) in rows {
        out.entry(g.clone()).or_default().push(l.clone());
    }
    out
}

fn built_groups(labels: &[String]) -> Vec<Vec<String>> {
    verb_split_groups(labels, &VerbLexicon::builtin())
        .into_iter()
        .map(|g| g.into_iter().map(|i| labels[i].clone()).collect())
        .collect()
}

#[test]
fn hair_nails_and_basketball_groups_match() {
    let rows = fixture();
    assert_eq!(rows.len(), 97);
    let labels: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    let published = published_groups(&rows);
    let built = built_groups(&labels);
    for name in ["hair", "nails", "basketball"] {
        let want = &published[name];
        let got = built
            .iter()
            .find(|g| g.contains(&want[0]))
            .unwrap_or_else(|| panic!("no group contains {:?}", want[0]));
        assert_eq!(got, want, "group {name}");
    }
}

#[test]
fn every_listed_class_is_kept() {
    let labels: Vec<String> = fixture().into_iter().map(|r| r.1).collect();
    let kept = build_verb_split(&labels, &VerbLexicon::builtin());
    let missing: Vec<&String> = (0..labels.len()).filter(|i| !kept.contains(i)).map(|i| &labels[i]).collect();
    assert!(missing.is_empty(), "dropped {missing:?}");
}

#[test]
fn all_published_groups_match() {
    let rows = fixture();
    let labels: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    let built = built_groups(&labels);
    let published = published_groups(&rows);
    assert_eq!(built.len(), published.len());
    for (name, want) in published {
        let got = built.iter().find(|g| g.contains(&want[0]));
        assert_eq!(got, Some(&want), "group {name}");
    }
}
