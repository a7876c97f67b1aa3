use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const USER_PIN: &str = "4321";
const SO_PIN: &str = "officer-pin";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cmd(&self) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_minihsm"));
        cmd.current_dir(self.dir.path())
            .env("MINIHSM_TOKEN", self.path("token.shsm"))
            .env_remove("MINIHSM_USER_PIN")
            .env_remove("MINIHSM_SO_PIN");
        cmd
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd().args(args).output().unwrap()
    }

    fn run_with_pins(&self, args: &[&str], user: &str, so: &str) -> Output {
        self.cmd()
            .args(args)
            .env("MINIHSM_USER_PIN", user)
            .env("MINIHSM_SO_PIN", so)
            .output()
            .unwrap()
    }

    /// keygen -> init-slot -> import-key
    fn provision(&self, extractable: bool) {
        let out = self.run(&[
            "--seed",
            "1",
            "keygen",
            "--bits",
            "512",
            "--out-pub",
            "pub.pem",
            "--out-priv",
            "priv.pem",
        ]);
        assert_success(&out);
        let out = self.run_with_pins(
            &["init-slot", "--label", "plc", "--kdf-iterations", "64"],
            USER_PIN,
            SO_PIN,
        );
        assert_success(&out);
        let mut args = vec!["import-key", "--slot", "plc", "--label", "rsa", "--key", "priv.pem"];
        if extractable {
            args.push("--extractable");
        }
        assert_success(&self.run_with_pins(&args, USER_PIN, SO_PIN));
    }
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_input(path: &Path, len: usize) -> Vec<u8> {
    let data: Vec<u8> = (0..len).map(|i| (i * 31 % 251) as u8).collect();
    fs::write(path, &data).unwrap();
    data
}

#[test]
fn full_workflow_round_trips() {
    let ws = Workspace::new();
    ws.provision(false);
    let data = write_input(&ws.path("plain.bin"), 100_003);

    assert_success(&ws.run(&["encrypt", "--pub", "pub.pem", "--in", "plain.bin", "--out", "plain.env"]));
    assert_eq!(&fs::read(ws.path("plain.env")).unwrap()[..4], b"HENV");

    let out = ws.run_with_pins(
        &[
            "decrypt",
            "--slot",
            "plc",
            "--label",
            "rsa",
            "--in",
            "plain.env",
            "--out",
            "back.bin",
        ],
        USER_PIN,
        SO_PIN,
    );
    assert_success(&out);
    assert_eq!(fs::read(ws.path("back.bin")).unwrap(), data);
}

#[test]
fn pin_flag_takes_precedence_over_env() {
    let ws = Workspace::new();
    ws.provision(false);
    write_input(&ws.path("plain.bin"), 10);
    assert_success(&ws.run(&["encrypt", "--pub", "pub.pem", "--in", "plain.bin", "--out", "plain.env"]));
    let out = ws.run_with_pins(
        &[
            "decrypt",
            "--slot",
            "plc",
            "--label",
            "rsa",
            "--in",
            "plain.env",
            "--out",
            "back.bin",
            "--user-pin",
            USER_PIN,
        ],
        "wrong-env-pin",
        SO_PIN,
    );
    assert_success(&out);
}

#[test]
fn wrong_user_pin_exits_2_without_output() {
    let ws = Workspace::new();
    ws.provision(false);
    write_input(&ws.path("plain.bin"), 1000);
    assert_success(&ws.run(&["encrypt", "--pub", "pub.pem", "--in", "plain.bin", "--out", "plain.env"]));
    let out = ws.run_with_pins(
        &[
            "decrypt",
            "--slot",
            "plc",
            "--label",
            "rsa",
            "--in",
            "plain.env",
            "--out",
            "back.bin",
        ],
        "0000",
        SO_PIN,
    );
    assert_eq!(code(&out), 2);
    assert!(!ws.path("back.bin").exists());
    // the SO PIN does not open a user session either
    let out = ws.run_with_pins(
        &[
            "decrypt",
            "--slot",
            "plc",
            "--label",
            "rsa",
            "--in",
            "plain.env",
            "--out",
            "back.bin",
        ],
        SO_PIN,
        SO_PIN,
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn import_with_user_pin_is_denied() {
    let ws = Workspace::new();
    ws.provision(false);
    let out = ws.run_with_pins(
        &["import-key", "--slot", "plc", "--label", "second", "--key", "priv.pem"],
        USER_PIN,
        USER_PIN,
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn tampered_envelope_exits_3() {
    let ws = Workspace::new();
    ws.provision(false);
    write_input(&ws.path("plain.bin"), 5000);
    assert_success(&ws.run(&["encrypt", "--pub", "pub.pem", "--in", "plain.bin", "--out", "plain.env"]));
    let mut bytes = fs::read(ws.path("plain.env")).unwrap();
    let last = bytes.len() - 40;
    bytes[last] ^= 0x55;
    fs::write(ws.path("plain.env"), bytes).unwrap();
    let out = ws.run_with_pins(
        &[
            "decrypt",
            "--slot",
            "plc",
            "--label",
            "rsa",
            "--in",
            "plain.env",
            "--out",
            "back.bin",
        ],
        USER_PIN,
        SO_PIN,
    );
    assert_eq!(code(&out), 3);
    assert!(!ws.path("back.bin").exists());
}

#[test]
fn list_keys_shows_metadata() {
    let ws = Workspace::new();
    ws.provision(false);
    let out = ws.run(&["list-keys", "--slot", "plc"]);
    assert_success(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, "rsa\tprotected\textractable=false\n");
    assert_eq!(code(&ws.run(&["list-keys", "--slot", "nope"])), 1);
}

#[test]
fn attack_on_non_extractable_key_is_secure() {
    let ws = Workspace::new();
    ws.provision(false);
    let out = ws.run(&["attack", "--slot", "plc", "--label", "rsa", "--report", "report.txt"]);
    assert_eq!(code(&out), 0);
    let report = fs::read_to_string(ws.path("report.txt")).unwrap();
    assert!(report.contains("verdict=secure"));
    assert!(report.contains("extracted_is_private=false"));
    let pem = fs::read_to_string(ws.path("1exported_private_key.pem")).unwrap();
    assert!(pem.starts_with("-----BEGIN MINIHSM RSA PUBLIC KEY-----"));
}

#[test]
fn attack_positive_control_is_breached() {
    let ws = Workspace::new();
    ws.provision(true);
    let out = ws.run_with_pins(
        &["attack", "--slot", "plc", "--label", "rsa", "--as-so"],
        USER_PIN,
        SO_PIN,
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8(out.stdout).unwrap().contains("verdict=breached"));
    let pem = fs::read_to_string(ws.path("1exported_private_key.pem")).unwrap();
    assert_eq!(pem, fs::read_to_string(ws.path("priv.pem")).unwrap());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let ws = Workspace::new();
    ws.provision(false);
    let out = ws.run(&[
        "keygen",
        "--bits",
        "512",
        "--out-pub",
        "pub.pem",
        "--out-priv",
        "priv.pem",
    ]);
    assert_eq!(code(&out), 4);
    let out = ws.run(&[
        "--force",
        "keygen",
        "--bits",
        "512",
        "--out-pub",
        "pub.pem",
        "--out-priv",
        "priv.pem",
    ]);
    assert_success(&out);
}

#[test]
fn seed_makes_outputs_reproducible() {
    let ws = Workspace::new();
    write_input(&ws.path("plain.bin"), 777);
    for name in ["a", "b"] {
        let (public, private, env) = (format!("{name}.pub"), format!("{name}.priv"), format!("{name}.env"));
        assert_success(&ws.run(&[
            "--seed",
            "5",
            "keygen",
            "--bits",
            "512",
            "--out-pub",
            &public,
            "--out-priv",
            &private,
        ]));
        assert_success(&ws.run(&[
            "--seed",
            "6",
            "encrypt",
            "--pub",
            &public,
            "--in",
            "plain.bin",
            "--out",
            &env,
        ]));
    }
    assert_eq!(
        fs::read(ws.path("a.priv")).unwrap(),
        fs::read(ws.path("b.priv")).unwrap()
    );
    assert_eq!(fs::read(ws.path("a.env")).unwrap(), fs::read(ws.path("b.env")).unwrap());
}

#[test]
fn usage_errors_exit_1() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["frobnicate"])), 1);
    assert_eq!(code(&ws.run(&["keygen", "--bits", "512"])), 1);
    assert_eq!(
        code(&ws.run(&["keygen", "--bits", "1000", "--out-pub", "a", "--out-priv", "b"])),
        1
    );
    assert_eq!(code(&ws.run(&["bench", "--op", "sideways"])), 1);
    assert_eq!(code(&ws.run(&["--help"])), 0);
}

#[test]
fn weak_pin_rejected() {
    let ws = Workspace::new();
    let out = ws.run_with_pins(&["init-slot", "--label", "x", "--kdf-iterations", "4"], "12", SO_PIN);
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_writes_csv_and_json() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "bench",
        "--op",
        "encrypt",
        "--size-mb",
        "0.25",
        "--batches",
        "3",
        "--samples",
        "2",
        "--rsa-bits",
        "512",
        "--out",
        "enc.csv",
    ]);
    assert_success(&out);
    let csv = fs::read_to_string(ws.path("enc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "batch,real_s,user_s,sys_s,peak_rss_pct,cpu_pct");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("average,"));

    let out = ws.run(&[
        "bench",
        "--op",
        "slot-access",
        "--size-mb",
        "0",
        "--batches",
        "1",
        "--samples",
        "2",
        "--rsa-bits",
        "512",
        "--kdf-iterations",
        "1000",
        "--json",
    ]);
    assert_success(&out);
    let json = String::from_utf8(out.stdout).unwrap();
    assert!(json.contains("\"op\": \"slot-access\""));
    assert!(json.contains("\"grand_mean\""));
}
