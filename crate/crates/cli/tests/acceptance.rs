//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails. Runs without the libtest harness so the lines are
//! always printed.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use vfc_cli::config::RunConfig;
use vfc_cli::{cmd_experiment, cmd_gen, layout, ExperimentOutcome};
use vfc_core::corpus::{make_synthetic_corpus, split_synthetic_caption, SynthSpec, SYNTH_VERBS};
use vfc_core::eval::{build_verb_split, verb_split_groups};
use vfc_core::experiments::{AttractionReport, RatioLawReport, ShortcutReport};
use vfc_core::textgen::VerbLexicon;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn worst(results: &[(String, f64)]) -> (String, f64) {
    results
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1
fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let results = support::gradient_suite(1e-5);
    let t = start.elapsed();
    let (name, err) = worst(&results);
    verdict(
        err <= 1e-5 && t < Duration::from_secs(10),
        format!("{} cases, worst {name} rel {err:.2e} (<= 1e-5), {:.2}s (< 10s)", results.len(), secs(t)),
    )
}

// 2
fn oracle_equivalence() -> Verdict {
    let (lname, lerr) = worst(&support::loss_oracle_suite());
    let (ename, eerr) = worst(&support::eval_oracle_suite(300));
    verdict(
        lerr <= 1e-12 && eerr <= 1e-12,
        format!("loss worst {lname} rel {lerr:.2e}; eval worst {ename} {eerr:.2e} (<= 1e-12)"),
    )
}

// 3
fn uniform_identity() -> Verdict {
    let (name, err) = worst(&support::uniform_identity_suite());
    verdict(err <= 1e-9, format!("worst {name} |normalized - 1| = {err:.2e} (<= 1e-9)"))
}

fn read_report<T: serde::de::DeserializeOwned>(run: &ExperimentOutcome) -> T {
    let text = fs::read_to_string(run.dir.join(layout::REPORT_JSON)).expect("experiment report");
    serde_json::from_str(&text).expect("report parses")
}

// 4
fn ratio_law(run: &ExperimentOutcome, t: Duration) -> Verdict {
    let r: RatioLawReport = read_report(run);
    let err = r.max_relative_error();
    let per: Vec<String> = r
        .variants
        .iter()
        .map(|v| format!("{}={:.2e}", vfc_core::experiments::variant_name(v.variant), v.max_relative_error))
        .collect();
    verdict(
        r.n_concepts >= 50 && r.min_s_count >= 20 && r.epochs >= 200 && err <= 0.05 && t < Duration::from_secs(120),
        format!(
            "{} concepts, min S {}, {} epochs, max rel {} (<= 5%), {:.1}s (< 120s)",
            r.n_concepts,
            r.min_s_count,
            r.epochs,
            per.join(" "),
            secs(t)
        ),
    )
}

// 5
fn calibration_post_conditions() -> Verdict {
    let bad: Vec<String> = [2, 16, 256].iter().flat_map(|&b| support::calibration_violations(100, b)).collect();
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "100 random manifests x 3 batch sizes: G <= S, S = 0 => G = 0, idempotent".to_string()
        } else {
            format!("{} violations, first: {}", bad.len(), bad[0])
        },
    )
}

// 6
fn attraction(run: &ExperimentOutcome, t: Duration) -> Verdict {
    let r: AttractionReport = read_report(run);
    verdict(
        r.reproduces() && t < Duration::from_secs(120),
        format!(
            "HN max share/prevalence {:.3} (>= 2), CHN {:.3} (<= 1.3), macro acc CHN {:.3} vs HN {:.3}, {:.1}s (< 120s)",
            r.uncalibrated.max_share_ratio,
            r.calibrated.max_share_ratio,
            r.calibrated.macro_accuracy,
            r.uncalibrated.macro_accuracy,
            secs(t)
        ),
    )
}

// 7
fn shortcut(run: &ExperimentOutcome, t: Duration) -> Verdict {
    let r: ShortcutReport = read_report(run);
    verdict(
        r.reproduces() && t < Duration::from_secs(300),
        format!(
            "baseline verb MC {:.3} (chance {:.2} +/- 0.10), gain {:+.3} (>= 0.20), noun drop {:+.3} (<= 0.02), {:.1}s (< 300s)",
            r.baseline.verb_mc.accuracy,
            r.chance,
            r.verb_gain(),
            r.noun_drop(),
            secs(t)
        ),
    )
}

// 8
fn postprocess_fixture() -> Verdict {
    let (got, want) = support::postprocess_fixture();
    verdict(got == want, format!("{} candidates, expected {}", got.len(), want.len()))
}

// 9
fn verb_split() -> Verdict {
    let rows: Vec<(String, String)> = include_str!("../../core/tests/fixtures/kinetics_verb_classes.tsv")
        .lines()
        .map(|l| {
            let (g, label) = l.split_once('\t').expect("group<TAB>label");
            (g.to_string(), label.to_string())
        })
        .collect();
    let labels: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    let lex = VerbLexicon::builtin();
    let groups = verb_split_groups(&labels, &lex);
    let mut detail = Vec::new();
    let mut pass = true;
    for name in ["hair", "nails", "basketball"] {
        let want: Vec<&String> = rows.iter().filter(|r| r.0 == name).map(|r| &r.1).collect();
        let got: Vec<&String> = groups
            .iter()
            .find(|g| g.iter().any(|&i| &labels[i] == want[0]))
            .map(|g| g.iter().map(|&i| &labels[i]).collect())
            .unwrap_or_default();
        pass &= got == want;
        detail.push(format!("{name} {}/{}", got.len(), want.len()));
    }
    let split = build_verb_split(&labels, &lex);
    verdict(pass, format!("{}; {} classes in split", detail.join(", "), split.len()))
}

// 10
fn same_bytes(a: &Path, b: &Path) -> bool {
    matches!((fs::read(a), fs::read(b)), (Ok(x), Ok(y)) if x == y)
}

fn determinism(first: &[(ExperimentOutcome, Duration)], second: &[ExperimentOutcome], scratch: &Path) -> Verdict {
    let mut diffs = Vec::new();
    let mut files = 0;
    for ((a, _), b) in first.iter().zip(second) {
        let mut pairs: Vec<(std::path::PathBuf, std::path::PathBuf)> =
            a.checkpoints.iter().cloned().zip(b.checkpoints.iter().cloned()).collect();
        pairs.push((a.dir.join(layout::REPORT_JSON), b.dir.join(layout::REPORT_JSON)));
        pairs.push((a.dir.join("summary.txt"), b.dir.join("summary.txt")));
        if a.checkpoints.len() != b.checkpoints.len() {
            diffs.push(format!("{}: checkpoint count", a.name));
        }
        for (x, y) in pairs {
            files += 1;
            if !same_bytes(&x, &y) {
                diffs.push(x.display().to_string());
            }
        }
    }
    let (cold, warm, same_manifest) = warm_cache_generation(scratch);
    verdict(
        diffs.is_empty() && cold > 0 && warm == 0 && same_manifest,
        format!(
            "{files} experiment files identical across runs{}; gen network calls cold {cold}, warm {warm}; warm manifest identical {same_manifest}",
            if diffs.is_empty() { String::new() } else { format!(" except {diffs:?}") }
        ),
    )
}

/// Runs `cmd_gen` twice against a stub transcript with a shared cache;
/// returns (cold calls, warm calls, manifests equal).
fn warm_cache_generation(scratch: &Path) -> (usize, usize, bool) {
    let spec = SynthSpec {
        n_contexts: 4,
        verbs_per_context: 4,
        captions_per_cell: 1,
        frequency_skew: 0.0,
        seed: 3,
    };
    let corpus = make_synthetic_corpus(&spec).unwrap();
    let mut lines = Vec::new();
    for c in &corpus.captions {
        let (ctx, verb) = split_synthetic_caption(&c.text).unwrap();
        let cands: Vec<String> = SYNTH_VERBS
            .iter()
            .filter(|v| **v != verb)
            .take(4)
            .enumerate()
            .map(|(k, v)| format!("{}) {ctx} {v}", k + 1))
            .collect();
        lines.push(serde_json::json!({"input": c.text, "response": {"candidates": [cands.join("\n")]}}).to_string());
    }
    let transcript = scratch.join("transcript.jsonl");
    fs::write(&transcript, lines.join("\n")).unwrap();

    let run = |out: &str| {
        let mut cfg = RunConfig::default();
        cfg.out_dir = scratch.join(out);
        cfg.corpus.synthetic = Some(spec.clone());
        cfg.client.stub_transcript = Some(transcript.clone());
        cfg.client.cache_dir = Some(scratch.join("cache"));
        let o = cmd_gen(&cfg).unwrap();
        (o.network_calls, fs::read(cfg.out_dir.join(layout::GEN_MANIFEST)).unwrap())
    };
    let (cold, a) = run("cold");
    let (warm, b) = run("warm");
    (cold, warm, a == b)
}

fn run_experiment(name: &str, out: &Path) -> (ExperimentOutcome, Duration) {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out.to_path_buf();
    let start = Instant::now();
    let o = cmd_experiment(name, &cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    (o, start.elapsed())
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let names = ["ratio_law", "attraction_point", "shortcut"];
    let first: Vec<(ExperimentOutcome, Duration)> =
        names.iter().map(|n| run_experiment(n, &scratch.path().join("run_a"))).collect();
    let second: Vec<ExperimentOutcome> = names
        .iter()
        .map(|n| run_experiment(n, &scratch.path().join("run_b")).0)
        .collect();

    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("gradient suite", Box::new(gradient_suite)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("uniform-normalization identity", Box::new(uniform_identity)),
        ("ratio law", Box::new(|| ratio_law(&first[0].0, first[0].1))),
        ("calibration post-conditions", Box::new(calibration_post_conditions)),
        ("attraction point", Box::new(|| attraction(&first[1].0, first[1].1))),
        ("shortcut mitigation", Box::new(|| shortcut(&first[2].0, first[2].1))),
        ("post-processing bit-exactness", Box::new(postprocess_fixture)),
        ("verb-split builder", Box::new(verb_split)),
        ("determinism", Box::new(|| determinism(&first, &second, scratch.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("{} criterion {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
