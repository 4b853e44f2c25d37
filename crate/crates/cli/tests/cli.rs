use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use armsim_core::builtin_tara_model;
use armsim_core::sim::{CommandMessage, Recorder, Simulator, DEFAULT_TICK_RATE};
use serde_json::Value;

fn repo(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn armsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(args)
        .env_remove("ARMSIM_MODEL")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn validate_fixture_is_clean() {
    let out = armsim(&["validate", &repo("models/tara.urdf")]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["errors"], Value::Array(vec![]));
    assert_eq!(report["model"], "tara");
}

#[test]
fn validate_corpus_reports_its_code() {
    let out = armsim(&["validate", &repo("models/corpus/multiple_roots.urdf")]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["errors"][0]["code"], "MultipleRoots");
}

#[test]
fn ik_to_a_reachable_target_converges_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = armsim(&[
        "ik",
        "--model",
        &repo("models/tara.urdf"),
        "--target",
        "0.12,-0.08,0.2",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = json(&out);
    assert_eq!(result["status"], "Converged");

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,error_norm_m"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let (i, e) = l.split_once(',').unwrap();
            (i.parse().unwrap(), e.parse().unwrap())
        })
        .collect();
    let trace_json: Vec<f64> = result["trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(rows.len(), trace_json.len());
    for (k, (i, e)) in rows.iter().enumerate() {
        assert_eq!(*i, k);
        assert_eq!(*e, trace_json[k]);
    }
    assert!(rows.last().unwrap().1 < 1e-4);
}

#[test]
fn ik_with_one_iteration_reports_max_iterations() {
    let out = armsim(&["ik", "--target", "0.1,0.1,0.1", "--max-iter", "1"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["status"], "MaxIterations");
}

#[test]
fn collide_fold_pose_exits_two() {
    let fold = repo("poses/fold_collide.json");
    let out = armsim(&[
        "collide",
        "--model",
        &repo("models/tara.urdf"),
        "--q",
        &fold,
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["colliding_pairs"][0][1], "wrist_link");

    let out = armsim(&["collide", "--q", "0.0,0.6,2.6,0.0,0.0"]);
    assert_eq!(code(&out), 2);
    let out = armsim(&["collide", "--q", "0,0,0,0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["colliding_pairs"], Value::Array(vec![]));
}

#[test]
fn fk_and_torque_print_json() {
    let out = armsim(&["fk", "--q", "0,0,0,0,0"]);
    assert_eq!(code(&out), 0);
    let fk = json(&out);
    assert!((fk["end_effector"]["translation"][2].as_f64().unwrap() - 0.41).abs() < 1e-12);
    assert_eq!(fk["link_poses"].as_object().unwrap().len(), 6);

    let out = armsim(&["torque", "--q", &repo("poses/horizontal.json")]);
    assert_eq!(code(&out), 0);
    let tau = json(&out);
    assert!((tau["per_joint"][1].as_f64().unwrap().abs() - 0.73575).abs() < 1e-9);

    let out = armsim(&[
        "torque",
        "--q",
        "0,1.5707963267948966,0,0,0",
        "--g",
        "0,0,0",
    ]);
    assert!(json(&out)["per_joint"]
        .as_array()
        .unwrap()
        .iter()
        .all(|t| t == 0.0));
}

#[test]
fn exit_codes_separate_usage_domain_and_io() {
    assert_eq!(code(&armsim(&["fk"])), 1);
    assert_eq!(code(&armsim(&["fk", "--q", "zero"])), 1);
    assert_eq!(code(&armsim(&["ik", "--target", "1,2"])), 1);
    assert_eq!(code(&armsim(&["frobnicate"])), 1);
    assert_eq!(code(&armsim(&["--help"])), 0);
    // outside the elbow limit
    assert_eq!(code(&armsim(&["fk", "--q", "0,0,3,0,0"])), 2);
    assert_eq!(
        code(&armsim(&[
            "fk",
            "--model",
            "/no/such.urdf",
            "--q",
            "0,0,0,0"
        ])),
        3
    );
    assert_eq!(code(&armsim(&["replay", "/no/such.rec"])), 3);
}

#[test]
fn model_env_var_is_the_default_model() {
    let out = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["fk", "--q", "0,0,0,0"])
        .env("ARMSIM_MODEL", repo("models/corpus/no_links.urdf"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no links"));
}

fn record_file(dir: &std::path::Path) -> PathBuf {
    let model = Arc::new(builtin_tara_model());
    let mut sim = Simulator::new(model.clone(), DEFAULT_TICK_RATE);
    let mut rec = Recorder::new(Vec::new(), model.name(), DEFAULT_TICK_RATE).unwrap();
    for t in 0..120 {
        let cmd = match t {
            3 => Some(CommandMessage::DirectTarget {
                q: vec![0.6, 0.4, -0.3, 0.5],
            }),
            40 => Some(CommandMessage::IkGoal {
                target: [0.1, 0.1, 0.25],
            }),
            80 => Some(CommandMessage::Button { pressed: true }),
            81 => Some(CommandMessage::Button { pressed: false }),
            _ => None,
        };
        if let Some(cmd) = cmd {
            sim.handle(&cmd);
            rec.command(t, &cmd).unwrap();
        }
        rec.state(&sim.step()).unwrap();
    }
    let path = dir.join("session.rec");
    std::fs::write(&path, rec.into_inner()).unwrap();
    path
}

#[test]
fn replay_reproduces_and_checks_a_recording() {
    let dir = tempfile::tempdir().unwrap();
    let rec = record_file(dir.path());
    let out_path = dir.path().join("states.txt");
    let out = armsim(&[
        "replay",
        rec.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--check",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let original = std::fs::read_to_string(&rec).unwrap();
    let recorded_states: String = original
        .lines()
        .filter(|l| l.contains(r#"{"type":"state""#))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), recorded_states);

    let stdout = armsim(&["replay", rec.to_str().unwrap(), "--ticks", "10"]);
    assert_eq!(
        String::from_utf8(stdout.stdout).unwrap().lines().count(),
        10
    );

    // a tampered state line is caught
    let tampered = original.replacen(
        r#""tick":50,"sim_time":1.0"#,
        r#""tick":50,"sim_time":1.5"#,
        1,
    );
    assert_ne!(tampered, original);
    let bad = dir.path().join("tampered.rec");
    std::fs::write(&bad, tampered).unwrap();
    let out = armsim(&[
        "replay",
        bad.to_str().unwrap(),
        "--check",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 50"));
}

struct Server {
    child: Child,
    url: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(extra: &[&str]) -> Server {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let listen = format!("127.0.0.1:{port}");
    let child = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["serve", "--listen", &listen])
        .args(extra)
        .env_remove("ARMSIM_MODEL")
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let server = Server {
        child,
        url: format!("http://{listen}"),
    };
    let deadline = Instant::now() + Duration::from_secs(20);
    while std::net::TcpStream::connect(&listen).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    server
}

#[test]
fn server_flag_gives_the_same_answers_and_exit_codes() {
    let srv = start_server(&[]);
    let fold = repo("poses/fold_collide.json");
    for args in [
        vec!["collide", "--q", fold.as_str()],
        vec!["ik", "--target", "0.12,-0.08,0.2"],
        vec!["fk", "--q", "0.3,0.2,0.1,0.4,0.0"],
        vec![
            "validate",
            "--model",
            &repo("models/corpus/two_parents.urdf"),
        ],
        vec!["fk", "--q", "0,0,3,0,0"],
    ] {
        let local = armsim(&args);
        let mut remote_args = vec!["--server", srv.url.as_str()];
        remote_args.extend(&args);
        let remote = armsim(&remote_args);
        assert_eq!(code(&local), code(&remote), "{args:?}");
        assert_eq!(local.stdout, remote.stdout, "{args:?}");
    }
}

#[test]
fn unreachable_server_is_an_io_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    assert_eq!(
        code(&armsim(&["--server", &url, "fk", "--q", "0,0,0,0"])),
        3
    );
}

#[test]
fn serve_rejects_bad_options() {
    assert_eq!(code(&armsim(&["serve", "--tick-rate", "0"])), 1);
    assert_eq!(code(&armsim(&["serve", "--ui", "/no/such/dir"])), 3);
    assert_eq!(
        code(&armsim(&[
            "serve",
            "--model",
            &repo("models/corpus/cyclic_tree.urdf")
        ])),
        2
    );
}

#[cfg(unix)]
#[test]
fn served_session_recording_replays_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("live.rec");
    let srv = start_server(&["--record", rec.to_str().unwrap()]);
    let client = Command::new("curl").arg("--version").output();
    if client.is_err() {
        eprintln!("curl not available; skipping command injection");
    } else {
        for body in [
            r#"{"type":"direct_target","q":[0.4,0.3,-0.2,0.1]}"#,
            r#"{"type":"ik_goal","target":[0.1,0.0,0.3]}"#,
        ] {
            let out = Command::new("curl")
                .args(["-s", "-H", "content-type: application/json", "-d", body])
                .arg(format!("{}/api/command", srv.url))
                .output()
                .unwrap();
            let ack: Value = serde_json::from_slice(&out.stdout).unwrap();
            assert!(ack["accepted"].as_bool().unwrap(), "{ack}");
        }
    }
    std::thread::sleep(Duration::from_millis(300));
    // SIGINT triggers the graceful shutdown that flushes the recording
    let pid = srv.child.id().to_string();
    Command::new("kill").args(["-INT", &pid]).status().unwrap();
    let mut srv = srv;
    let status = srv.child.wait().unwrap();
    assert!(status.success());

    let out = armsim(&[
        "replay",
        rec.to_str().unwrap(),
        "--check",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
