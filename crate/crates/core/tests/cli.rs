use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pmba(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmba")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn shard(dir: &Path, j: usize) -> String {
    dir.join(format!("shard_{j:03}.pmba")).to_str().unwrap().to_string()
}

#[test]
fn encode_reconstruct_repair_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("notes.txt");
    let data: Vec<u8> = (0..5000u32).map(|i| (i * 7 + i / 13) as u8).collect();
    fs::write(&input, &data).unwrap();
    let shards = tmp.path().join("shards");

    let out = pmba(&[
        "encode", "--input", path(&input), "--out-dir", path(&shards), "--k", "3", "--delta", "2", "--n", "7", "--q", "263",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(shards.join("manifest.txt").exists());

    // Example node choice {1, 2, 4}.
    let restored = tmp.path().join("restored.txt");
    let out = pmba(&["reconstruct", "--output", path(&restored), &shard(&shards, 4), &shard(&shards, 2), &shard(&shards, 1)]);
    assert!(out.status.success());
    assert_eq!(fs::read(&restored).unwrap(), data);

    // More than k shards: explicit node choice.
    let all: Vec<String> = (1..=7).map(|j| shard(&shards, j)).collect();
    let mut args = vec!["reconstruct", "--output", path(&restored), "--nodes", "3,6,7"];
    args.extend(all.iter().map(String::as_str));
    assert!(pmba(&args).status.success());
    assert_eq!(fs::read(&restored).unwrap(), data);

    let original7 = fs::read(shard(&shards, 7)).unwrap();
    let repaired = tmp.path().join("r7.pmba");
    let out = pmba(&[
        "repair", "--failed", "7", "--output", path(&repaired),
        &shard(&shards, 1), &shard(&shards, 2), &shard(&shards, 3), &shard(&shards, 4),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&repaired).unwrap(), original7);

    let manifest = shards.join("manifest.txt");
    let mut args = vec!["verify", "--manifest", path(&manifest)];
    args.extend(all.iter().map(String::as_str));
    let out = pmba(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("verify: ok"));

    // Corrupt one payload byte: verification is a data error.
    let mut bytes = fs::read(shard(&shards, 5)).unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 1;
    fs::write(shard(&shards, 5), bytes).unwrap();
    let out = pmba(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("checksum node 5: MISMATCH"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pmba(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pmba(&["params", "show", "--k", "3"]).status.code(), Some(1));
    assert_eq!(pmba(&["params", "show", "--k", "1", "--delta", "2", "--n", "7"]).status.code(), Some(1));
    assert_eq!(pmba(&["--help"]).status.code(), Some(0));

    let input = tmp.path().join("x.bin");
    fs::write(&input, b"some bytes here").unwrap();
    let shards = tmp.path().join("s");
    let out = pmba(&["encode", "--input", path(&input), "--out-dir", path(&shards), "--k", "3", "--delta", "2", "--n", "7", "--q", "11"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("257"));

    assert!(pmba(&["encode", "--input", path(&input), "--out-dir", path(&shards), "--k", "3", "--delta", "2", "--n", "7"])
        .status
        .success());
    let five: Vec<String> = (1..=5).map(|j| shard(&shards, j)).collect();
    let mut args = vec!["repair", "--failed", "7", "--output", "unused.pmba"];
    args.extend(five.iter().map(String::as_str));
    let out = pmba(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("D = [4, 6]"));

    let missing = tmp.path().join("missing.pmba");
    let out = pmba(&["reconstruct", "--output", "o", path(&missing), &shard(&shards, 1), &shard(&shards, 2)]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(tmp.path().join("junk.pmba"), b"not a shard").unwrap();
    let out = pmba(&["verify", path(&tmp.path().join("junk.pmba"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn params_and_simulate() {
    let out = pmba(&["params", "show", "--k", "3", "--delta", "2", "--n", "7", "--q", "11"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("alpha") && text.contains("D ") && text.contains("4,6"));
    assert!(text.contains("mds") && text.contains("4/7"));

    let run = || pmba(&["simulate", "--k", "3", "--delta", "2", "--n", "7", "--seed", "9", "--fail", "7,3", "--stripes", "3"]);
    let out = run();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8_lossy(&out.stdout).to_string();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "stripe_count,f,d,helpers,symbols_moved");
    assert!(lines[1].starts_with("3,7,4,") && lines[1].ends_with(",8"));
    assert!(lines[2].starts_with("3,3,6,") && lines[2].ends_with(",6"));
    assert_eq!(String::from_utf8_lossy(&run().stdout), csv);

    let out = pmba(&["simulate", "--k", "3", "--delta", "2", "--n", "7", "--policy", "fixed:5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pmba(&["simulate", "--k", "3", "--delta", "2", "--n", "7", "--policy", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}
