use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn wmlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wmlab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    wmlab().args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

const SMALL: &str = r#"
seed = 5

[corpus]
source = "synthetic"
count = 12
duration_s = 1.0

[owner]
family = "qim-freq"
key = 3
"#;

/// Tiny neural schedule so training-backed commands finish quickly.
const TINY_TRAINING: &str = r#"
[training]
iterations = 10
corpus_clips = 3
corpus_duration_s = 0.5
"#;

#[test]
fn white_box_attack_report_has_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", SMALL);
    let out = tmp.path().join("wb");
    ok(&run(&["attack", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tier", "white-box"]));
    let report = read(out.join("report.csv"));
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for col in ["asr", "acc", "snr_mean_db"] {
        assert!(header.contains(&col), "missing {col} in {header:?}");
    }
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), header.len());
    let asr: f64 = row[header.iter().position(|c| *c == "asr").unwrap()].parse().unwrap();
    assert!(asr >= 0.9, "white-box ASR {asr}");
    assert_eq!(read(out.join("samples.csv")).lines().count(), 13);

    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "attack");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["attack"]["tier"], "white-box");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["versions"]["wmlab"].is_string());
    assert!(manifest["outputs"]["samples.csv"].is_string());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = cfg.to_str().unwrap();
    ok(&run(&["attack", "--config", c, "--out", a.to_str().unwrap(), "--jobs", "1"]));
    ok(&run(&["attack", "--config", c, "--out", b.to_str().unwrap(), "--jobs", "3"]));
    for f in ["samples.csv", "report.csv", "report.txt", "histogram.csv", "manifest.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
    }
    ok(&run(&["attack", "--config", c, "--out", b.to_str().unwrap(), "--seed", "6"]));
    assert_ne!(read(a.join("samples.csv")), read(b.join("samples.csv")));
}

#[test]
fn matrix_over_four_families_is_four_by_four() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{}{TINY_TRAINING}\n[metrics]\nmatrix_families = [\"lsb\", \"spread-spectrum\", \"qim-freq\", \"neural\"]\n", SMALL.replace("duration_s = 1.0", "duration_s = 2.0"));
    let cfg = write_config(tmp.path(), "exp.toml", &body);
    let out = tmp.path().join("m");
    ok(&run(&["matrix", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let csv = read(out.join("matrix.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 5));
    for (i, r) in rows[1..].iter().enumerate() {
        assert_eq!(r[0], rows[0][i + 1]);
    }
}

#[test]
fn serve_oracle_refuses_query_past_budget() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", SMALL);
    let corpus_out = tmp.path().join("corpus_run");
    ok(&run(&["embed", "--config", cfg.to_str().unwrap(), "--out", corpus_out.to_str().unwrap()]));
    let wav = corpus_out.join("marked").join("clip0000.wav");
    let probe = "0000";
    let out = tmp.path().join("oracle");
    let mut child = wmlab()
        .args(["serve-oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--budget", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        for id in ["q1", "q2", "q3"] {
            writeln!(stdin, "{id}\t{}\t{probe}", wav.display()).unwrap();
        }
    }
    let done = child.wait_with_output().unwrap();
    ok(&done);
    let stdout = String::from_utf8(done.stdout).unwrap();
    let lines: Vec<Vec<&str>> = stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    assert_eq!(lines[0][0], "q1");
    assert_eq!(lines[0].len(), 5);
    assert_eq!(lines[0][4], "1");
    assert_eq!(lines[1][4], "2");
    assert_eq!(lines[2][..2], ["q3", "ERR"]);
    assert_eq!(read(out.join("queries.csv")).lines().count(), 3);
}

#[test]
fn invalid_config_fails_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    for (i, body) in [
        "seed = 1\n[owner]\nfamily = \"nope\"\n",
        "seed = 1\n[corpus]\nsource = \"wav\"\ndir = \"missing\"\n",
        "seed = 1\nunknown_key = 3\n",
        "seed = 1\n[attack]\ntier = \"omniscient\"\n",
        "seed = 1\n[owner]\nfamily = \"neural\"\ncheckpoint = \"absent.ckpt\"\n",
    ]
    .into_iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), body);
        let r = run(&["attack", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(!r.status.success(), "config {i} accepted");
        assert!(!String::from_utf8_lossy(&r.stderr).trim().is_empty());
        assert!(!out.exists());
    }
    let r = run(&["attack", "--config", tmp.path().join("absent.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
}

#[test]
fn failed_run_removes_partial_outputs_and_keeps_previous() {
    let tmp = TempDir::new().unwrap();
    let bad_samples = write_config(tmp.path(), "samples.csv", "clip_id,owner_ber,adv_ber,snr_db,detect_fail\nc0,zero,,1,false\n");
    let body = format!("{SMALL}\n[report]\nsamples = \"{}\"\n", bad_samples.file_name().unwrap().to_string_lossy());
    let cfg = write_config(tmp.path(), "exp.toml", &body);
    let out = tmp.path().join("r");
    let r = run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(!out.exists());
    let leftovers: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(leftovers.iter().all(|n| !n.to_string_lossy().contains("staging")), "{leftovers:?}");

    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "previous").unwrap();
    let r = run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert_eq!(read(out.join("keep.txt")), "previous");
}

#[test]
fn corpus_embed_detect_report_pipeline() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let gen = tmp.path().join("gen");
    ok(&run(&["gen-corpus", "--config", c, "--out", gen.to_str().unwrap()]));
    let wavs = std::fs::read_dir(gen.join("corpus")).unwrap().count();
    assert_eq!(wavs, 12);

    let wav_cfg = write_config(
        tmp.path(),
        "wav.toml",
        "seed = 5\n[corpus]\nsource = \"wav\"\ndir = \"gen/corpus\"\n[owner]\nfamily = \"qim-freq\"\nkey = 3\n",
    );
    let emb = tmp.path().join("emb");
    ok(&run(&["embed", "--config", wav_cfg.to_str().unwrap(), "--out", emb.to_str().unwrap()]));
    assert_eq!(read(emb.join("messages.csv")).lines().count(), 13);

    let det_cfg = write_config(
        tmp.path(),
        "det.toml",
        "seed = 5\n[corpus]\nsource = \"wav\"\ndir = \"gen/corpus\"\n[owner]\nfamily = \"qim-freq\"\nkey = 3\n\
         [detect]\ninput = \"emb/marked\"\nmessages = \"emb/messages.csv\"\n",
    );
    let det = tmp.path().join("det");
    ok(&run(&["detect", "--config", det_cfg.to_str().unwrap(), "--out", det.to_str().unwrap()]));
    let rows: Vec<String> = read(det.join("detections.csv")).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 12);
    let exact = rows.iter().filter(|r| r.ends_with(",0.000000")).count();
    assert!(exact >= 11, "{rows:?}");

    let wb = tmp.path().join("wb");
    ok(&run(&["attack", "--config", c, "--out", wb.to_str().unwrap()]));
    let rep_cfg = write_config(tmp.path(), "rep.toml", &format!("{SMALL}\n[report]\nsamples = \"wb/samples.csv\"\n"));
    let rep = tmp.path().join("rep");
    ok(&run(&["report", "--config", rep_cfg.to_str().unwrap(), "--out", rep.to_str().unwrap()]));
    let original = read(wb.join("report.txt"));
    let recomputed = read(rep.join("report.txt"));
    assert!(original.starts_with(&recomputed), "{original}\nvs\n{recomputed}");
}

#[test]
fn train_writes_checkpoint_usable_as_owner() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", &format!("{SMALL}{TINY_TRAINING}"));
    let tr = tmp.path().join("tr");
    ok(&run(&["train", "--config", cfg.to_str().unwrap(), "--out", tr.to_str().unwrap()]));
    assert_eq!(read(tr.join("loss_log.csv")).lines().count(), 11);
    assert!(read(tr.join("scheme.txt")).contains("checkpoint = model.ckpt"));

    let owner_cfg = write_config(
        tmp.path(),
        "neural.toml",
        "seed = 5\n[corpus]\nsource = \"synthetic\"\ncount = 4\nduration_s = 1.0\n\
         [owner]\nfamily = \"neural\"\ncheckpoint = \"tr/model.ckpt\"\n",
    );
    let emb = tmp.path().join("emb");
    ok(&run(&["embed", "--config", owner_cfg.to_str().unwrap(), "--out", emb.to_str().unwrap()]));
    assert_eq!(std::fs::read_dir(emb.join("marked")).unwrap().count(), 4);
}
