//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use callisense_core::compare::extremity_box;
use callisense_core::fusion::{make_tier_scale, tier, TierScope};
use callisense_core::ingest::{binarize, canvas_rect, compute_homography, correct_perspective, Homography, InkMask};
use callisense_core::model::{normalize_yaw, validate_session, ComparisonReport, Session, Vec2};
use callisense_core::skeleton::centroid;
use callisense_core::synth::{score_against_truth, GroundTruth, TruthMetrics};
use common::{data, process, run, s, synth};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Work {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    sessions: Vec<Session>,
}

impl Work {
    fn path(&self, p: &str) -> PathBuf {
        self.root.join(p)
    }

    /// synth + process + score; returns metrics and the synth+process wall time.
    fn roundtrip(&mut self, name: &str, script: &str, flags: &[&str]) -> (TruthMetrics, Duration) {
        let dir = self.path(name);
        let out = self.path(&format!("{name}.json"));
        let t0 = Instant::now();
        synth(&data(script), &dir, flags);
        process(&dir, &out, &[]);
        let elapsed = t0.elapsed();
        let session = validate_session(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let truth = GroundTruth::read(&dir.join("truth.json")).unwrap();
        let m = score_against_truth(&session, &truth);
        self.sessions.push(session);
        (m, elapsed)
    }
}

fn fmt(m: &TruthMetrics) -> String {
    format!(
        "count_match={} rmse={:.3}px corr={:.3} rot_mae={:.3}deg iou={:.3}",
        m.stroke_count_match, m.skeleton_rmse_px, m.speed_corr, m.rotation_mae_deg, m.contact_iou
    )
}

fn round_trip(w: &mut Work) -> Outcome {
    let (m, t) = w.roundtrip("clean", "three_strokes.json", &[]);
    let ok = m.stroke_count_match
        && m.skeleton_rmse_px <= 3.6
        && m.contact_iou >= 0.95
        && m.speed_corr >= 0.9
        && m.rotation_mae_deg <= 2.0
        && t < Duration::from_secs(10);
    check(ok, format!("{} runtime={:.2}s", fmt(&m), t.as_secs_f64()))
}

fn noise_robustness(w: &mut Work) -> Outcome {
    let flags = ["--seed", "17", "--gap-noise", "1", "--pressure-noise", "8", "--angle-noise", "0.5"];
    let (m, _) = w.roundtrip("noisy", "three_strokes.json", &flags);
    check(m.stroke_count_match && m.skeleton_rmse_px <= 4.5, fmt(&m))
}

fn occlusion_repair(w: &mut Work) -> Outcome {
    let (clean, _) = w.roundtrip("clean_ref", "three_strokes.json", &[]);
    let (occ, _) = w.roundtrip("occluded", "three_strokes.json", &["--occlusion-k", "3"]);
    let ratio = occ.skeleton_rmse_px / clean.skeleton_rmse_px;
    check(
        occ.stroke_count_match && ratio <= 1.5,
        format!(
            "rmse clean={:.3}px occluded={:.3}px degradation={:+.1}%",
            clean.skeleton_rmse_px,
            occ.skeleton_rmse_px,
            (ratio - 1.0) * 100.0
        ),
    )
}

/// Disc drawn in camera space by supersampling the canvas disc through `h`.
fn camera_disc(h: &Homography, w: u32, hgt: u32, c: Vec2, r: f64) -> GrayImage {
    GrayImage::from_fn(w, hgt, |x, y| {
        let mut dark = 0u32;
        for sy in 0..4 {
            for sx in 0..4 {
                let p = Vec2::new(f64::from(x) + (f64::from(sx) + 0.5) / 4.0, f64::from(y) + (f64::from(sy) + 0.5) / 4.0);
                if h.apply(p).dist(c) <= r {
                    dark += 1;
                }
            }
        }
        Luma([(255 - dark * 255 / 16) as u8])
    })
}

fn homography(_: &mut Work) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dst = canvas_rect(400, 300);
    let (mut worst, mut n) = (0.0f64, 0);
    while n < 1000 {
        let mut j = || rng.gen_range(-150.0..150.0);
        let q = [
            Vec2::new(j(), j()),
            Vec2::new(640.0 + j(), j()),
            Vec2::new(640.0 + j(), 480.0 + j()),
            Vec2::new(j(), 480.0 + j()),
        ];
        let Ok(h) = compute_homography(&q, &dst) else { continue };
        n += 1;
        for (a, b) in q.iter().zip(&dst) {
            worst = worst.max(h.apply(*a).dist(*b));
        }
    }
    let mut worst_c = 0.0f64;
    for _ in 0..40 {
        let mut j = || rng.gen_range(-20.0..20.0);
        let q = [
            Vec2::new(25.0 + j(), 25.0 + j()),
            Vec2::new(205.0 + j(), 25.0 + j()),
            Vec2::new(205.0 + j(), 185.0 + j()),
            Vec2::new(25.0 + j(), 185.0 + j()),
        ];
        let h = compute_homography(&q, &canvas_rect(160, 160)).unwrap();
        let c = Vec2::new(rng.gen_range(50.0..110.0), rng.gen_range(50.0..110.0));
        let r = rng.gen_range(5.0..15.0);
        let cam = camera_disc(&h, 240, 220, c, r);
        let mask = binarize(&correct_perspective(&cam, &h, 160, 160).unwrap(), 128, 0);
        let px: Vec<(u32, u32)> = mask.ink_pixels().collect();
        worst_c = worst_c.max(centroid(&px).unwrap().dist(c));
    }
    check(
        worst < 1e-9 && worst_c < 0.5,
        format!("1000 quads max corner residual={worst:.2e}; 40 blobs max centroid error={worst_c:.3}px"),
    )
}

fn add_yaw(csv: &str, offset: f64) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i > 0 {
            let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
            f[1] = format!("{:.3}", normalize_yaw(f[1].parse::<f64>().unwrap() + offset));
            out.push_str(&f.join(","));
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn rotation_bits(s: &Session) -> Vec<Vec<u64>> {
    s.strokes.iter().map(|st| st.skeleton.iter().map(|p| p.rotation_deg.to_bits()).collect()).collect()
}

fn rotation_calibration(w: &mut Work) -> Outcome {
    let zero_first = w.sessions.iter().all(|s| s.strokes.iter().all(|st| st.skeleton[0].rotation_deg == 0.0));
    let dir = w.path("yaw");
    synth(&data("three_strokes.json"), &dir, &[]);
    process(&dir, &w.path("yaw_a.json"), &[]);
    let a = validate_session(&std::fs::read_to_string(w.path("yaw_a.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(dir.join("sensor.csv")).unwrap();
    let mut same = true;
    for offset in [37.125, -123.456, 180.0] {
        std::fs::write(dir.join("sensor.csv"), add_yaw(&csv, offset)).unwrap();
        process(&dir, &w.path("yaw_b.json"), &[]);
        let b = validate_session(&std::fs::read_to_string(w.path("yaw_b.json")).unwrap()).unwrap();
        same &= rotation_bits(&a) == rotation_bits(&b);
    }
    check(
        zero_first && same,
        format!(
            "rotation[0]=0 across {} sessions: {zero_first}; offsets 37.125/-123.456/180 bit-identical: {same}",
            w.sessions.len()
        ),
    )
}

fn tiering(_: &mut Work) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    let cases = 2000;
    for case in 0..cases {
        let n = rng.gen_range(2..10u32);
        let len = rng.gen_range(1..30);
        // Every fifth set is flat.
        let flat = case % 5 == 0;
        let base = rng.gen_range(-500.0..500.0);
        let vals: Vec<f64> = (0..len).map(|_| if flat { base } else { rng.gen_range(-1000.0..1000.0) }).collect();
        let scale = make_tier_scale(vals.iter().copied(), TierScope::Character, n).unwrap();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probes: Vec<f64> = (0..20).map(|_| rng.gen_range(-1500.0..1500.0)).chain(vals.iter().copied()).collect();
        probes.sort_by(f64::total_cmp);
        let tiers: Vec<u32> = probes.iter().map(|v| tier(*v, &scale)).collect();
        let monotone = tiers.windows(2).all(|w| w[0] <= w[1]);
        let bounded = tiers.iter().all(|&t| t < n);
        let ends = if hi > lo {
            tier(lo, &scale) == 0 && tier(hi, &scale) == n - 1 && tier(lo - 1.0, &scale) == 0 && tier(hi + 1.0, &scale) == n - 1
        } else {
            tiers.iter().all(|&t| t == 0)
        };
        // Split into strokes: each stroke scale is the min/max of its own values.
        let k = rng.gen_range(1..=len);
        let (a, b) = vals.split_at(k);
        let scopes = [a, b].iter().filter(|p| !p.is_empty()).all(|part| {
            let sc = make_tier_scale(part.iter().copied(), TierScope::Stroke, n).unwrap();
            sc.lo == part.iter().copied().fold(f64::INFINITY, f64::min)
                && sc.hi == part.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                && sc.lo >= scale.lo
                && sc.hi <= scale.hi
        });
        if !(monotone && bounded && ends && scopes && scale.lo == lo && scale.hi == hi) {
            failures.push(case);
        }
    }
    check(failures.is_empty(), format!("{}/{cases} random value sets pass; failing cases {failures:?}", cases - failures.len()))
}

fn random_glyph(rng: &mut ChaCha8Rng) -> InkMask {
    let (w, h) = (rng.gen_range(8..80u32), rng.gen_range(8..80u32));
    let mut m = InkMask::empty(w, h, 0);
    for _ in 0..rng.gen_range(1..6) {
        let (cx, cy, r) = (rng.gen_range(0.0..f64::from(w)), rng.gen_range(0.0..f64::from(h)), rng.gen_range(0.5..10.0));
        for y in 0..h {
            for x in 0..w {
                if Vec2::new(f64::from(x) + 0.5, f64::from(y) + 0.5).dist(Vec2::new(cx, cy)) <= r {
                    m.set(x, y, true);
                }
            }
        }
    }
    if m.is_empty() {
        m.set(w / 2, h / 2, true);
    }
    m
}

fn brute_box(m: &InkMask) -> [(u32, u32); 4] {
    let mut ink = Vec::new();
    for y in 0..m.h {
        for x in 0..m.w {
            if m.get(x, y) {
                ink.push((x, y));
            }
        }
    }
    let top = *ink.iter().min_by_key(|p| (p.1, p.0)).unwrap();
    let bottom = *ink.iter().min_by_key(|p| (u32::MAX - p.1, p.0)).unwrap();
    let left = *ink.iter().min_by_key(|p| (p.0, p.1)).unwrap();
    let right = *ink.iter().min_by_key(|p| (u32::MAX - p.0, p.1)).unwrap();
    [top, bottom, left, right]
}

fn comparison_identities(w: &mut Work) -> Outcome {
    let t = w.path("clean.json");
    let out = w.path("self_report.json");
    let o = run(&["compare", "--teacher", s(&t), "--student", s(&t), "--out", s(&out)]);
    if !o.status.success() {
        return Err(format!("compare failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let r: ComparisonReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let zero = r.pairs.iter().all(|p| {
        p.pressure.diff.iter().all(|&d| d == 0.0) && p.pressure.max_abs_diff == 0.0 && p.speed.teacher == p.speed.student
    });
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatched = 0;
    for _ in 0..100 {
        let g = random_glyph(&mut rng);
        let b = extremity_box(&g).unwrap();
        let want = brute_box(&g);
        let got = [b.top, b.bottom, b.left, b.right].map(|p| (p.x as u32, p.y as u32));
        let rect_ok = b.rect.left == f64::from(want[2].0)
            && b.rect.right == f64::from(want[3].0)
            && b.rect.top == f64::from(want[0].1)
            && b.rect.bottom == f64::from(want[1].1);
        if got != want || !rect_ok {
            mismatched += 1;
        }
    }
    check(
        zero && mismatched == 0 && r.stroke_count == 3,
        format!("self-report {} pairs all-zero diffs: {zero}; extremity boxes matching brute force: {}/100", r.stroke_count, 100 - mismatched),
    )
}

fn sha(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn determinism(w: &mut Work) -> Outcome {
    let dir = w.path("clean");
    let (a, b) = (w.path("det_a"), w.path("det_b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    process(&dir, &a.join("s.json"), &[]);
    process(&dir, &b.join("s.json"), &[]);
    let session_same = sha(&a.join("s.json")) == sha(&b.join("s.json"));
    let mask_same = sha(&a.join("s.mask.pgm")) == sha(&b.join("s.mask.pgm"));
    let student = w.path("noisy.json");
    let mut hashes = Vec::new();
    for d in [&a, &b] {
        let out = d.join("r.json");
        let o = run(&["compare", "--teacher", s(&d.join("s.json")), "--student", s(&student), "--out", s(&out)]);
        assert!(o.status.success());
        hashes.push(sha(&out));
    }
    let report_same = hashes[0] == hashes[1];
    check(
        session_same && mask_same && report_same,
        format!("session {session_same}, glyph mask {mask_same}, report {report_same} (sha256 {})", &hashes[0][..16]),
    )
}

fn http(port: u16, path: &str) -> std::io::Result<(u16, Vec<u8>)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status: u16 = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut body = raw[split + 4..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        let mut out = Vec::new();
        let mut rest = &body[..];
        loop {
            let eol = rest.windows(2).position(|w| w == b"\r\n").unwrap();
            let size = usize::from_str_radix(std::str::from_utf8(&rest[..eol]).unwrap().trim(), 16).unwrap();
            if size == 0 {
                break;
            }
            out.extend_from_slice(&rest[eol + 2..eol + 2 + size]);
            rest = &rest[eol + 4 + size..];
        }
        body = out;
    }
    Ok((status, body))
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn api_contract(w: &mut Work) -> Outcome {
    let data_dir = w.path("served");
    std::fs::create_dir_all(&data_dir).unwrap();
    let t = w.path("api_t");
    let st = w.path("api_s");
    synth(&data("three_strokes.json"), &t, &[]);
    synth(&data("student_strokes.json"), &st, &[]);
    process(&t, &data_dir.join("teacher.json"), &["--role", "teacher", "--label", "yong"]);
    process(&st, &data_dir.join("student.json"), &["--role", "student", "--label", "yong"]);
    let cli_report = w.path("cli_report.json");
    let o = run(&[
        "compare",
        "--teacher",
        s(&data_dir.join("teacher.json")),
        "--student",
        s(&data_dir.join("student.json")),
        "--out",
        s(&cli_report),
    ]);
    assert!(o.status.success());

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let child = common::bin()
        .args(["serve", "--data", s(&data_dir), "--port", &port.to_string()])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let _server = Server(child);
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        if Instant::now() > deadline {
            return Err("server did not start".into());
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let (code, body) = http(port, "/api/sessions").map_err(|e| e.to_string())?;
    let listed = serde_json::from_slice::<Vec<serde_json::Value>>(&body).map(|v| v.len()).unwrap_or(0);
    let (ccode, cbody) = http(port, "/api/compare?teacher=teacher&student=student").map_err(|e| e.to_string())?;
    let identical = ccode == 200 && cbody == std::fs::read(&cli_report).unwrap();
    let unknown = [
        "/api/sessions/ghost",
        "/api/compare?teacher=ghost&student=student",
        "/api/compare?teacher=teacher&student=ghost",
    ]
    .iter()
    .map(|p| http(port, p).map(|r| r.0).unwrap_or(0))
    .collect::<Vec<u16>>();
    check(
        code == 200 && listed == 2 && identical && unknown.iter().all(|&c| c == 404),
        format!("/api/sessions lists {listed}; /api/compare byte-identical to cmd_compare: {identical}; unknown ids -> {unknown:?}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut w = Work {
        root: tmp.path().to_path_buf(),
        _tmp: tmp,
        sessions: Vec::new(),
    };
    let criteria: [(&str, fn(&mut Work) -> Outcome); 9] = [
        ("synthetic round-trip", round_trip),
        ("noise robustness", noise_robustness),
        ("occlusion repair", occlusion_repair),
        ("homography", homography),
        ("rotation calibration", rotation_calibration),
        ("tiering", tiering),
        ("comparison identities", comparison_identities),
        ("determinism", determinism),
        ("api contract", api_contract),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut w)))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
