mod common;

use std::path::{Path, PathBuf};

use atomic_reasoner::backend::{CallTag, CompletionRequest, FnBackend};
use atomic_reasoner::bench::load_tasks;
use atomic_reasoner::engine::{CallContext, Sampling};
use atomic_reasoner::model::{AtomicAction, Problem};
use atomic_reasoner::prompts::PromptCatalog;
use atomic_reasoner::sop::{load_sops, sop_block, triage, SopError, SopRegistry, DEFAULT_DOMAIN};
use common::fixture;

fn shipped_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("sops")
}

fn copy_sops(names: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for n in names {
        std::fs::copy(shipped_dir().join(n), dir.path().join(n)).unwrap();
    }
    dir
}

#[test]
fn shipped_directory_matches_builtin() {
    let loaded = load_sops(&shipped_dir()).unwrap();
    let builtin = SopRegistry::builtin();
    assert_eq!(loaded.labels(), builtin.labels());
    for action in AtomicAction::ALL {
        for label in builtin.labels() {
            assert_eq!(loaded.guidance_for(label, action), builtin.guidance_for(label, action));
        }
    }
}

#[test]
fn grid_case_triages_to_logic_and_gets_clue_by_clue_checks() {
    let task = load_tasks(&fixture("case2.task.json"), None).unwrap().tasks.remove(0);
    let sops = SopRegistry::builtin();
    let t = triage(&task.problem(), &sops, None);
    assert_eq!(t.domain, "logical-reasoning");
    assert_eq!(t.call, None);
    let hv = sops.guidance_for(&t.domain, AtomicAction::HypothesisVerification).unwrap();
    assert!(hv.to_lowercase().contains("clue by clue"));
}

#[test]
fn keyword_triage_examples() {
    let sops = SopRegistry::builtin();
    let science = triage(&Problem::free_text("∫ x dx = ?"), &sops, None);
    assert_eq!(science.domain, "science-problem");
    let plain = triage(&Problem::free_text("Name a colour you like."), &sops, None);
    assert_eq!(plain.domain, DEFAULT_DOMAIN);
}

#[test]
fn backend_triage_is_used_only_without_keyword_hits() {
    let prompts = PromptCatalog::builtin();
    let sampling = Sampling::default();
    let backend = FnBackend::new("t", |r: &CompletionRequest| {
        assert_eq!(r.tag, CallTag::Triage);
        Ok("This is about physics.\nDOMAIN: science-problem".into())
    });
    let ctx = CallContext::new(&backend, &prompts, &sampling);
    let sops = SopRegistry::builtin();
    let t = triage(&Problem::free_text("How far does it go?"), &sops, Some(&ctx));
    assert_eq!(t.domain, "science-problem");
    assert!(t.call.is_some());

    let confused = FnBackend::new("t", |_: &CompletionRequest| Ok("DOMAIN: astrology".into()));
    let ctx = CallContext::new(&confused, &prompts, &sampling);
    assert_eq!(triage(&Problem::free_text("How far does it go?"), &sops, Some(&ctx)).domain, DEFAULT_DOMAIN);
}

#[test]
fn default_only_directory_loads() {
    let dir = copy_sops(&["default.sop"]);
    let reg = load_sops(dir.path()).unwrap();
    assert_eq!(reg.len(), 1);
    let p = Problem::free_text("Which house holds the owl? Use the clues.");
    assert_eq!(triage(&p, &reg, None).domain, DEFAULT_DOMAIN);
    assert!(!sop_block(&reg, "logical-reasoning", AtomicAction::PremiseDiscovery).is_empty());
}

#[test]
fn directory_without_default_is_rejected() {
    let dir = copy_sops(&["science-problem.sop"]);
    assert!(matches!(load_sops(dir.path()), Err(SopError::MissingDefault)));
}

#[test]
fn unknown_action_section_is_a_parse_error_with_location() {
    let dir = copy_sops(&["default.sop"]);
    std::fs::write(
        dir.path().join("extra.sop"),
        "[meta]\ndomain = extra\n\n[action:guesswork]\nJust guess.\n",
    )
    .unwrap();
    match load_sops(dir.path()) {
        Err(SopError::Parse { file, line, .. }) => {
            assert_eq!(file, "extra.sop");
            assert_eq!(line, 4);
        }
        other => panic!("expected a parse error, got {:?}", other.map(|r| r.labels().len())),
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    assert!(matches!(load_sops(Path::new("/no/such/sops")), Err(SopError::Io { .. })));
}
