use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crownflow::cli::{CheckReport, InfoBody, Report, SCHEMA};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crownflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn job(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../jobs").join(name)
}

fn crownflow(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crownflow")).args(args).args(extra).output().unwrap()
}

fn write_job(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("job.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn check_is_deterministic_and_round_trips() {
    let dir = scratch("check");
    let (a, b) = (dir.join("a"), dir.join("b"));
    let first = crownflow(&["check", "--seed", "3", "--out"], &[&a]);
    let second = crownflow(&["check", "--seed", "3", "--out"], &[&b]);
    assert_eq!(first.status.code(), Some(0));
    let bytes = std::fs::read(a.join("check.json")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("check.json")).unwrap());
    assert_eq!(first.stdout, bytes);
    assert_eq!(second.stdout, bytes);

    let report: CheckReport = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(report.schema, SCHEMA);
    assert_eq!(report.seed, 3);
    assert_eq!(report.body.failed, 0);
    assert_eq!(format!("{}\n", serde_json::to_string_pretty(&report).unwrap()).into_bytes(), bytes);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn info_report_parses() {
    let dir = scratch("info");
    let out = crownflow(&["info", "--no-svg", "--config"], &[&job("quadratic.toml"), Path::new("--out"), &dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Report<InfoBody> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((report.command.as_str(), report.seed), ("info", 1));
    assert_eq!(report.body.pole_order, 6);
    assert_eq!(report.body.zeros.len(), 2);
    assert_eq!(std::fs::read(dir.join("info.json")).unwrap(), out.stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = scratch("config");
    assert_eq!(crownflow(&["info"], &[]).status.code(), Some(2));
    assert_eq!(crownflow(&["info", "--config"], &[&dir.join("missing.toml")]).status.code(), Some(2));
    let top = write_job(&dir, "bogus = 3\n[differential]\nkind = \"polynomial\"\ncoeffs = [[1.0, 0.0]]\n");
    assert_eq!(crownflow(&["info", "--config"], &[&top]).status.code(), Some(2));
    let nested = write_job(&dir, "[differential]\nkind = \"polynomial\"\ncoeffs = [[1.0, 0.0]]\nextra = 1\n");
    assert_eq!(crownflow(&["info", "--config"], &[&nested]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn strict_turns_warnings_into_failures() {
    let dir = scratch("strict");
    // Trajectories of z⁻⁴ dz² run into the pole well before length 50.
    let path = write_job(
        &dir,
        "[differential]\nkind = \"laurent\"\npole_order = 4\nlaurent = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]\n\
         [foliate]\nseeds = 8\nlength = 50.0\n",
    );
    let out = dir.join("out");
    let lenient = crownflow(&["foliate", "--no-svg", "--config"], &[&path, Path::new("--out"), &out]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning"));
    let strict = crownflow(&["foliate", "--no-svg", "--strict", "--config"], &[&path, Path::new("--out"), &out]);
    assert_eq!(strict.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failed_solve_leaves_no_artifacts() {
    let dir = scratch("fail");
    // The unit circle passes through the zeros of z² + i.
    let path = write_job(
        &dir,
        "[differential]\nkind = \"polynomial\"\ncoeffs = [[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]]\n\
         [solver]\ngeometry = \"disk\"\nradius = 1.0\nn = 65\n",
    );
    let out = dir.join("out");
    let run = crownflow(&["solve", "--config"], &[&path, Path::new("--out"), &out]);
    assert_eq!(run.status.code(), Some(3));
    assert!(run.stdout.is_empty());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
    std::fs::remove_dir_all(&dir).unwrap();
}
