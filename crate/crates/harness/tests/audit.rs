//! `reward-audit` for each reward source.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Duration;

use isac_harness::{load_spec, reward_audit, Overrides};
use isac_reward_dsl::{builtin_manual_reward, builtin_normalized_reward, parse, MANUAL_REWARD_SOURCE};
use isac_reward_llm::{Clock, OfflineTransport, ReplayTransport};

struct FixedClock;

impl Clock for FixedClock {
    fn elapsed(&self) -> Duration {
        Duration::ZERO
    }
}

fn spec_file(dir: &Path, mode: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join("spec.toml");
    fs::write(&path, format!("[experiment]\nagent_kind = \"mrt\"\nreward_mode = \"{mode}\"\nsweep_dbm = [20]\n{extra}")).unwrap();
    path
}

fn fixture(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

#[test]
fn fallback_audit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = load_spec(&spec_file(dir.path(), "fallback", ""), &Overrides::default(), &isac_agent::Registry::builtin()).unwrap();
    let offline = OfflineTransport::default();
    let audit = reward_audit(&spec, &offline, &FixedClock, true).unwrap();
    assert!(audit.valid());
    assert_eq!(offline.attempts(), 0);
    assert_eq!(audit.reward.expr, builtin_normalized_reward(&Default::default()));
    let text = audit.to_string();
    assert!(text.contains("reward mode: fallback"));
    assert!(text.contains(&audit.reward.canonical));
    assert!(audit.probe_value.unwrap().is_finite());
}

#[test]
fn file_audit_shows_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.txt"), MANUAL_REWARD_SOURCE).unwrap();
    let spec = load_spec(&spec_file(dir.path(), "file:r.txt", ""), &Overrides::default(), &isac_agent::Registry::builtin()).unwrap();
    let audit = reward_audit(&spec, &OfflineTransport::default(), &FixedClock, true).unwrap();
    assert!(audit.valid());
    assert_eq!(audit.reward.expr, builtin_manual_reward());
    assert!(audit.to_string().contains(MANUAL_REWARD_SOURCE));
}

#[test]
fn llm_audit_from_replayed_reply() {
    let dir = tempfile::tempdir().unwrap();
    let path = spec_file(dir.path(), "llm", "\n[llm]\napi_key_env = \"\"\n");
    let spec = load_spec(&path, &Overrides::default(), &isac_agent::Registry::builtin()).unwrap();
    let body = fixture("chat_reply.json");
    let audit = reward_audit(&spec, &ReplayTransport::new(200, body), &FixedClock, false).unwrap();
    assert!(audit.valid());
    assert_eq!(audit.reward.expr, parse(fixture("chat_reply.expected").trim()).unwrap());
    let text = audit.to_string();
    assert!(text.contains("== prompt =="));
    assert!(text.contains("== transcript =="));
}

#[test]
fn cli_audit_with_replay_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("reply.json"), fixture("chat_reply.json")).unwrap();
    let path = spec_file(dir.path(), "llm", "\n[llm]\nreplay = \"reply.json\"\n");
    let out = Command::new(env!("CARGO_BIN_EXE_isac-lab")).args(["reward-audit", "--offline", "--spec"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let expected = parse(fixture("chat_reply.expected").trim()).unwrap().to_canonical();
    assert!(String::from_utf8_lossy(&out.stdout).contains(&expected));

    let bad = spec_file(dir.path(), "llm", "");
    let out = Command::new(env!("CARGO_BIN_EXE_isac-lab")).args(["reward-audit", "--offline", "--spec"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_specs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    let registry = isac_agent::Registry::builtin();
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let spec = load_spec(&path, &Overrides::default(), &registry).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(spec.sweep_dbm, [10.0, 15.0, 20.0, 25.0, 30.0]);
            n += 1;
        }
    }
    assert_eq!(n, 6);
    let manual = load_spec(&dir.join("agentic_manual.toml"), &Overrides::default(), &registry).unwrap();
    let audit = reward_audit(&manual, &OfflineTransport::default(), &FixedClock, true).unwrap();
    assert_eq!(audit.reward.expr, builtin_manual_reward());
}
