use std::time::{Duration, Instant};

use fksteer::config::{execute_run, RunConfig};
use fksteer::rewards::worker::{WirePayload, WorkerHandle, WorkerRequest};
use fksteer::{Error, WorkerFailure};

fn bin() -> String {
    env!("CARGO_BIN_EXE_fksteer").to_string()
}

fn request(particle: usize) -> WorkerRequest {
    WorkerRequest {
        run_id: "it".into(),
        particle_id: particle,
        t: 4,
        eval_index: 0,
        payload: WirePayload::Pair {
            coords: vec![[0.0, 0.0], [1.0, 0.0]],
            tokens: "KKD".into(),
        },
    }
}

#[test]
fn echo_worker_answers_charge() {
    let mut w = WorkerHandle::spawn(
        &[bin(), "worker-echo".into(), "--mode".into(), "charge".into(), "--q-star".into(), "-1".into()],
        Duration::from_secs(10),
    )
    .unwrap();
    // KKD has charge +1, two away from the target
    let r = w.request(&request(0)).unwrap();
    assert!(r < 0.0);
    let again = w.request(&request(1)).unwrap();
    assert_eq!(r.to_bits(), again.to_bits());
}

#[test]
fn silent_worker_times_out_then_stays_poisoned() {
    let script = r#"echo '{"protocol":"fksteer-reward/1"}'; sleep 30"#;
    let mut w = WorkerHandle::spawn(
        &["sh".into(), "-c".into(), script.into()],
        Duration::from_millis(300),
    )
    .unwrap();
    let started = Instant::now();
    let (kind, _) = w.request(&request(0)).unwrap_err();
    assert_eq!(kind, WorkerFailure::Timeout);
    assert!(started.elapsed() < Duration::from_secs(5));
    let (kind, _) = w.request(&request(1)).unwrap_err();
    assert_eq!(kind, WorkerFailure::Transport);
}

#[test]
fn garbage_reply_is_malformed() {
    let script = r#"echo '{"protocol":"fksteer-reward/1"}'; read line; echo 'not json'"#;
    let mut w = WorkerHandle::spawn(&["sh".into(), "-c".into(), script.into()], Duration::from_secs(5)).unwrap();
    let (kind, detail) = w.request(&request(0)).unwrap_err();
    assert_eq!(kind, WorkerFailure::Malformed);
    assert!(detail.contains("not json"));
}

#[test]
fn mismatched_reply_is_malformed() {
    let script = r#"echo '{"protocol":"fksteer-reward/1"}'; read line; echo '{"particle_id":9,"t":4,"eval_index":0,"reward":1.0}'"#;
    let mut w = WorkerHandle::spawn(&["sh".into(), "-c".into(), script.into()], Duration::from_secs(5)).unwrap();
    let (kind, _) = w.request(&request(0)).unwrap_err();
    assert_eq!(kind, WorkerFailure::Malformed);
}

#[test]
fn wrong_handshake_is_rejected() {
    let err = WorkerHandle::spawn(
        &["sh".into(), "-c".into(), "echo hello; sleep 5".into()],
        Duration::from_secs(5),
    )
    .err()
    .expect("handshake must fail");
    assert!(matches!(err, Error::WorkerStartup(ref m) if m.contains("hello")), "{err}");
}

#[test]
fn external_reward_drives_a_chain_run() {
    let overrides: Vec<String> = [
        "reward=external".to_string(),
        format!("worker_command={} worker-echo --mode charge --q-star 2", bin()),
        "n_particles=6".into(),
        "steps=10".into(),
        "t_start=10".into(),
        "terminal_evals=1".into(),
    ]
    .into();
    let cfg = RunConfig::resolve(None, &overrides).unwrap();
    let t = execute_run(&cfg, None, false).unwrap();
    assert!(t.summary().mean_terminal_reward.unwrap() <= 0.0);
}

#[test]
fn worker_death_mid_run_is_a_transport_error() {
    let overrides: Vec<String> = [
        "reward=external".to_string(),
        format!("worker_command={} worker-echo --die-after 7", bin()),
        "n_particles=4".into(),
        "steps=10".into(),
        "t_start=10".into(),
        "terminal_evals=1".into(),
    ]
    .into();
    let cfg = RunConfig::resolve(None, &overrides).unwrap();
    let err = execute_run(&cfg, None, false).err().unwrap();
    assert!(matches!(err, Error::Worker { kind: WorkerFailure::Transport, .. }), "{err}");
}
