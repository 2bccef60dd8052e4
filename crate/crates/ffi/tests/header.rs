use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn header() -> String {
    std::fs::read_to_string(crate_dir().join("include/beda.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let header = header();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for item in [
        "#ifndef BEDA_H",
        "typedef struct BedaModel BedaModel;",
        "typedef struct BedaRunner BedaRunner;",
        "BEDA_STATUS_OK = 0",
        "BEDA_STATUS_EMPTY = 8",
        "BEDA_STATUS_PANIC = 10",
        "#define BEDA_ACT_ADVERSARIAL 0",
        "#define BEDA_ACT_ALIGNMENT 1",
    ] {
        assert!(header.contains(item), "{item}");
    }
}

/// The directory holding the library artifacts, two levels above the test
/// executable (`target/<profile>/deps/<test>`).
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = artifact_dir().join("libbeda_ffi.a");
    if !lib.exists() {
        // Test-only builds stop at the rlib.
        let mut cargo = Command::new(env!("CARGO"));
        cargo.args(["build", "--lib", "-p", "beda-ffi"]);
        if artifact_dir().ends_with("release") {
            cargo.arg("--release");
        }
        let status = cargo.current_dir(crate_dir()).status().unwrap();
        assert!(status.success());
    }
    assert!(lib.exists(), "{} not built", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap_or_else(|e| panic!("{cc}: {e}"));
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.trim().ends_with("ok"), "{stdout}");
}
