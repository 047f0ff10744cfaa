use std::path::Path;
use std::process::{Command, Output};

fn ctc_ocr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctc-ocr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("error line");
    serde_json::from_str(last).expect("JSON on stderr")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn evaluate_text_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.txt");
    let gt = dir.path().join("gt.txt");
    std::fs::write(&pred, "gandi\nab\n").unwrap();
    std::fs::write(&gt, "gandhi\nab\n").unwrap();
    let v = stdout_json(&ctc_ocr(&["evaluate", "--pred", p(&pred), "--gt", p(&gt)]));
    assert!((v["char_accuracy"].as_f64().unwrap() - 87.5).abs() < 1e-9);
    assert_eq!(v["seq_accuracy"].as_f64().unwrap(), 50.0);

    std::fs::write(&pred, "the quik fox").unwrap();
    std::fs::write(&gt, "the quick fox").unwrap();
    let v = stdout_json(&ctc_ocr(&["evaluate", "--pred", p(&pred), "--gt", p(&gt), "--mode", "page"]));
    assert_eq!(format!("{:.2}", v["word_accuracy"].as_f64().unwrap()), "66.67");
}

#[test]
fn errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("nope.png");
    let v = stderr_json(&ctc_ocr(&["recognize", "--image", p(&img)]));
    assert_eq!(v["error"], "config");

    let ck = dir.path().join("missing.ckpt");
    let v = stderr_json(&ctc_ocr(&["--checkpoint", p(&ck), "recognize", "--image", p(&img)]));
    assert_eq!(v["error"], "io");

    let out = ctc_ocr(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let pred = dir.path().join("p.txt");
    std::fs::write(&pred, "a\n").unwrap();
    let v = stderr_json(&ctc_ocr(&["--config", p(&bad), "evaluate", "--pred", p(&pred), "--gt", p(&pred)]));
    assert_eq!(v["error"], "config");
}

#[test]
fn synth_train_recognize_and_page_ocr() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = dir.path().join("lexicon.txt");
    std::fs::write(&lexicon, "12\n3\n45\n").unwrap();
    let data = dir.path().join("data");
    let v = stdout_json(&ctc_ocr(&[
        "--seed", "5", "synth", "--lexicon", p(&lexicon), "--count", "4", "--out", p(&data),
    ]));
    assert_eq!(v["images"], 12);
    let manifest = data.join("manifest.tsv");
    // reuse the train images as validation and test data
    let tsv = std::fs::read_to_string(&manifest).unwrap();
    let mut all = tsv.clone();
    all.push_str(&tsv.replace("\ttrain", "\tval"));
    all.push_str(&tsv.replace("\ttrain", "\ttest"));
    std::fs::write(&manifest, all).unwrap();

    let config = dir.path().join("train.toml");
    std::fs::write(&config, "[train]\nkind = \"crnn\"\ntiny = 4\nepochs = 2\nbatch_size = 4\nlearning_rate = 0.001\n").unwrap();
    let ck = dir.path().join("model.ckpt");
    let log = dir.path().join("log.csv");
    let v = stdout_json(&ctc_ocr(&[
        "--seed", "1", "--config", p(&config), "--checkpoint", p(&ck),
        "train", "--manifest", p(&manifest), "--log", p(&log),
    ]));
    assert_eq!(v["train_samples"], 12);
    assert!(ck.exists());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);

    let v = stdout_json(&ctc_ocr(&["--checkpoint", p(&ck), "evaluate", "--manifest", p(&manifest)]));
    assert_eq!(v["n_samples"], 12);

    let img = data.join("img000000.pgm");
    let out = ctc_ocr(&["--checkpoint", p(&ck), "recognize", "--image", p(&img)]);
    assert!(out.status.success());
    let word = String::from_utf8(out.stdout).unwrap().trim_end_matches('\n').to_string();
    assert!(word.chars().all(|c| "12345".contains(c)));

    // the word image as a one-box page
    let (w, h) = {
        let bytes = std::fs::read(&img).unwrap();
        let header = String::from_utf8_lossy(&bytes[..20]).to_string();
        let nums: Vec<usize> = header.split_whitespace().skip(1).take(2).map(|s| s.parse().unwrap()).collect();
        (nums[0], nums[1])
    };
    let det = dir.path().join("det.txt");
    std::fs::write(&det, format!("page data/img000000.pgm\n0 0 {w} {h} 0 word\n")).unwrap();
    let v = stdout_json(&ctc_ocr(&["--checkpoint", p(&ck), "page-ocr", "--detections", p(&det)]));
    assert_eq!(v["text"], word);

    std::fs::write(&det, format!("0 0 {w} {h} 0 line\n")).unwrap();
    let v = stderr_json(&ctc_ocr(&["--checkpoint", p(&ck), "page-ocr", "--detections", p(&det), "--image", p(&img)]));
    assert_eq!(v["error"], "config");
}
