use callisense_core::compare::{extremity_box, pressure_diff_profile, resample_curve};
use callisense_core::fusion::{attach_sensor_at, make_tier_scale, relative_rotation_micro, tier, TierScope};
use callisense_core::ingest::{binarize, canvas_rect, compute_homography, correct_perspective, Homography, InkMask, Size, TipSample, TipTrace};
use callisense_core::model::{
    serialize_session, validate_session, ContactInterval, EnrichedPoint, Orientation, Role, SensorSample,
    SensorStream, Session, Stroke, Vec2, SCHEMA_VERSION,
};
use callisense_core::segment::{assign_time, detect_contacts, timestamp_pixels, ContactConfig};
use callisense_core::skeleton::centroid;
use callisense_core::synth::{generate_session, SpeedProfile, StrokeScript, SynthOptions};
use image::{GrayImage, Luma};
use proptest::prelude::*;

fn quad_near(w: f64, h: f64, jitter: f64) -> impl Strategy<Value = [Vec2; 4]> {
    prop::array::uniform8(-jitter..jitter).prop_map(move |d| {
        [
            Vec2::new(d[0], d[1]),
            Vec2::new(w + d[2], d[3]),
            Vec2::new(w + d[4], h + d[5]),
            Vec2::new(d[6], h + d[7]),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn homography_maps_corners(q in quad_near(640.0, 480.0, 150.0)) {
        let dst = canvas_rect(300, 300);
        let h = compute_homography(&q, &dst).unwrap();
        for (s, d) in q.iter().zip(&dst) {
            prop_assert!(h.apply(*s).dist(*d) < 1e-9);
        }
        let inv = h.inverse().unwrap();
        for d in &dst {
            let back = inv.apply(*d);
            prop_assert!(q.iter().any(|s| s.dist(back) < 1e-6));
        }
    }

    #[test]
    fn tiers_are_monotone_and_clamped(
        values in prop::collection::vec(-1e3f64..1e3, 1..40),
        probes in prop::collection::vec(-2e3f64..2e3, 2..20),
        n in 2u32..10,
    ) {
        let scale = make_tier_scale(values.iter().copied(), TierScope::Stroke, n).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!((scale.lo, scale.hi), (lo, hi));
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let tiers: Vec<u32> = sorted.iter().map(|v| tier(*v, &scale)).collect();
        prop_assert!(tiers.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(tiers.iter().all(|&t| t < n));
        if hi > lo {
            prop_assert_eq!(tier(lo, &scale), 0);
            prop_assert_eq!(tier(hi, &scale), n - 1);
            prop_assert_eq!(tier(lo - 1.0, &scale), 0);
            prop_assert_eq!(tier(hi + 1.0, &scale), n - 1);
        } else {
            prop_assert!(tiers.iter().all(|&t| t == 0));
        }
    }

    #[test]
    fn stroke_scope_is_min_max_of_the_stroke(
        strokes in prop::collection::vec(prop::collection::vec(0f64..1023.0, 1..10), 1..5),
    ) {
        let all = make_tier_scale(strokes.iter().flatten().copied(), TierScope::Character, 5).unwrap();
        for s in &strokes {
            let one = make_tier_scale(s.iter().copied(), TierScope::Stroke, 5).unwrap();
            prop_assert_eq!(one.lo, s.iter().copied().fold(f64::INFINITY, f64::min));
            prop_assert_eq!(one.hi, s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            prop_assert!(all.lo <= one.lo && one.hi <= all.hi);
        }
    }

    #[test]
    fn extremity_box_matches_brute_force(bits in prop::collection::vec(prop::bool::weighted(0.05), 40 * 30)) {
        let mask = InkMask::from_bits(40, 30, 0, bits);
        let ink: Vec<(u32, u32)> = (0..30).flat_map(|y| (0..40).map(move |x| (x, y))).filter(|&(x, y)| mask.get(x, y)).collect();
        match extremity_box(&mask) {
            Err(_) => prop_assert!(ink.is_empty()),
            Ok(b) => {
                let top = ink.iter().min_by_key(|p| (p.1, p.0)).unwrap();
                let bottom = ink.iter().min_by_key(|p| (std::cmp::Reverse(p.1), p.0)).unwrap();
                let left = ink.iter().min_by_key(|p| (p.0, p.1)).unwrap();
                let right = ink.iter().min_by_key(|p| (std::cmp::Reverse(p.0), p.1)).unwrap();
                let v = |p: &(u32, u32)| Vec2::new(f64::from(p.0), f64::from(p.1));
                prop_assert_eq!(b.top, v(top));
                prop_assert_eq!(b.bottom, v(bottom));
                prop_assert_eq!(b.left, v(left));
                prop_assert_eq!(b.right, v(right));
                prop_assert_eq!((b.rect.left, b.rect.top, b.rect.right, b.rect.bottom),
                    (f64::from(left.0), f64::from(top.1), f64::from(right.0), f64::from(bottom.1)));
            }
        }
    }

    #[test]
    fn centroid_is_the_pixel_center_mean(px in prop::collection::vec((0u32..500, 0u32..500), 1..50)) {
        let c = centroid(&px).unwrap();
        let n = px.len() as f64;
        let mx = px.iter().map(|p| f64::from(p.0) + 0.5).sum::<f64>() / n;
        let my = px.iter().map(|p| f64::from(p.1) + 0.5).sum::<f64>() / n;
        prop_assert!((c.x - mx).abs() < 1e-9 && (c.y - my).abs() < 1e-9);
    }

    #[test]
    fn constant_yaw_offset_keeps_rotation_bits(
        yaws in prop::collection::vec(-180_000i64..180_000, 2..30),
        offset in -360_000i64..360_000,
        probes in prop::collection::vec(0i64..1000, 1..30),
    ) {
        // Yaws in milli-degrees, as written to the sensor log.
        let mk = |off: i64| {
            let samples = yaws.iter().enumerate().map(|(i, &y)| {
                let deg = callisense_core::model::normalize_yaw((y + off) as f64 / 1000.0);
                SensorSample::new(i as i64 * 1000 / yaws.len() as i64, Orientation::new(deg, 0.0, 0.0).unwrap(), 0).unwrap()
            }).collect();
            SensorStream::new(samples).unwrap()
        };
        let mut times = probes.clone();
        times.sort();
        times.dedup();
        let rot = |s: &SensorStream| {
            let yaw: Vec<i64> = attach_sensor_at(&times, s).unwrap().iter().map(|a| a.yaw_micro_deg).collect();
            relative_rotation_micro(&yaw).iter().map(|r| r.to_bits()).collect::<Vec<u64>>()
        };
        let a = rot(&mk(0));
        prop_assert_eq!(f64::from_bits(a[0]), 0.0);
        prop_assert_eq!(a, rot(&mk(offset)));
    }

    #[test]
    fn resampling_reproduces_linear_functions(
        steps in prop::collection::vec(0.001f64..1.0, 1..20),
        slope in -100f64..100.0,
        n in 2usize..200,
    ) {
        let total: f64 = steps.iter().sum();
        let mut arc = vec![0.0];
        for s in &steps {
            arc.push(arc[arc.len() - 1] + s / total);
        }
        *arc.last_mut().unwrap() = 1.0;
        let vals: Vec<f64> = arc.iter().map(|a| slope * a + 3.0).collect();
        let c = resample_curve(&arc, &vals, n).unwrap();
        prop_assert_eq!(c.values[0], vals[0]);
        prop_assert_eq!(c.values[n - 1], vals[vals.len() - 1]);
        for (p, v) in c.positions.iter().zip(&c.values) {
            prop_assert!((v - (slope * p + 3.0)).abs() < 1e-9);
        }
        let d = pressure_diff_profile(&c, &c).unwrap();
        prop_assert!(d.diff.values.iter().all(|&x| x == 0.0));
        prop_assert_eq!(d.max_abs_diff, 0.0);
    }

    #[test]
    fn contacts_follow_the_hand_scan(runs in prop::collection::vec((1usize..12, 0usize..3), 1..20)) {
        let levels = [2.0, 6.0, 30.0];
        let mut gaps = Vec::new();
        for (n, l) in &runs {
            gaps.extend(std::iter::repeat(levels[*l]).take(*n));
        }
        let trace = TipTrace::new(gaps.iter().enumerate().map(|(i, &g)| TipSample { t_ms: i as i64 * 10, gap_px: g }).collect()).unwrap();
        let cfg = ContactConfig::default();
        let got: Vec<(i64, i64)> = detect_contacts(&trace, &cfg).unwrap().iter().map(|c| (c.start_ms, c.end_ms)).collect();
        prop_assert_eq!(got, hand_scan(&gaps, 10, &cfg));
    }

    #[test]
    fn pixel_times_are_first_appearances(frames in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 16), 1..8)) {
        let masks: Vec<InkMask> = frames.iter().enumerate().map(|(k, b)| InkMask::from_bits(4, 4, k as i64 * 33, b.clone())).collect();
        let map = timestamp_pixels(&masks).unwrap();
        for i in 0..16u32 {
            let first = frames.iter().position(|f| f[i as usize]).map(|k| k as i64 * 33);
            prop_assert_eq!(map.get(i % 4, i / 4), first);
        }
    }

    #[test]
    fn every_time_has_at_most_one_stroke(t in -100i64..3000, slack in 0i64..200) {
        let cs: Vec<ContactInterval> = (0..4).map(|i| ContactInterval { index: i, start_ms: i as i64 * 700, end_ms: i as i64 * 700 + 400 }).collect();
        let hits: Vec<usize> = cs.iter().filter(|c| c.contains(t)).map(|c| c.index).collect();
        match assign_time(&cs, t, slack) {
            Some(i) => {
                if hits.is_empty() {
                    prop_assert!(t > cs[i].end_ms && t - cs[i].end_ms <= slack);
                } else {
                    prop_assert_eq!(vec![i], hits);
                }
            }
            None => prop_assert!(hits.is_empty()),
        }
    }
}

/// Independent hysteresis: scan maximal runs of low and high samples.
fn hand_scan(gaps: &[f64], dt: i64, cfg: &ContactConfig) -> Vec<(i64, i64)> {
    let low: Vec<bool> = gaps.iter().map(|&g| g < cfg.t_low_px).collect();
    let high: Vec<bool> = gaps.iter().map(|&g| g > cfg.t_high_px).collect();
    let run_end = |flags: &[bool], i: usize| {
        let mut j = i;
        while j + 1 < flags.len() && flags[j + 1] {
            j += 1;
        }
        j
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < gaps.len() {
        // Look for a low run long enough to enter.
        if !low[i] {
            i += 1;
            continue;
        }
        let j = run_end(&low, i);
        if ((j - i) as i64) * dt < cfg.min_down_ms {
            i = j + 1;
            continue;
        }
        let start = i;
        // Look for a high run long enough to leave.
        let mut k = i;
        // Trace ends while down: close at the last sample that is not high.
        let mut end = (start..gaps.len()).rev().find(|&x| !high[x]).unwrap();
        let mut next = gaps.len();
        while k < gaps.len() {
            if high[k] {
                let m = run_end(&high, k);
                if ((m - k) as i64) * dt >= cfg.min_up_ms {
                    end = k - 1;
                    next = m + 1;
                    break;
                }
                k = m + 1;
            } else {
                k += 1;
            }
        }
        if end > start && ((end - start) as i64) * dt >= cfg.min_down_ms {
            out.push((start as i64 * dt, end as i64 * dt));
        }
        i = next;
    }
    out
}

/// Disc rendered in camera space by sampling the canvas-space disc through `h`.
fn camera_disc(h: &Homography, cam: Size, c: Vec2, r: f64) -> GrayImage {
    GrayImage::from_fn(cam.w, cam.h, |x, y| {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn warp_then_correct_keeps_the_centroid(
        q in quad_near(180.0, 160.0, 20.0),
        cx in 60f64..120.0,
        cy in 60f64..100.0,
        r in 6f64..14.0,
    ) {
        let q = q.map(|p| p + Vec2::new(25.0, 25.0));
        let canvas = Size { w: 160, h: 160 };
        let h = compute_homography(&q, &canvas_rect(canvas.w, canvas.h)).unwrap();
        let cam = camera_disc(&h, Size { w: 240, h: 220 }, Vec2::new(cx, cy), r);
        let rect = correct_perspective(&cam, &h, canvas.w, canvas.h).unwrap();
        let mask = binarize(&rect, 128, 0);
        let px: Vec<(u32, u32)> = mask.ink_pixels().collect();
        let c = centroid(&px).unwrap();
        prop_assert!(c.dist(Vec2::new(cx, cy)) < 0.5, "centroid {:?} vs ({cx}, {cy})", c);
    }

    #[test]
    fn synth_ink_only_grows(
        pts in prop::collection::vec((10f64..90.0, 10f64..70.0), 2..4),
        duration in 100i64..600,
        radius in 1f64..6.0,
        ease in prop::bool::ANY,
    ) {
        let path: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        prop_assume!(path.windows(2).map(|w| w[0].dist(w[1])).sum::<f64>() > 1.0);
        let s = StrokeScript {
            path,
            duration_ms: duration,
            speed_profile: if ease { SpeedProfile::EaseInOut } else { SpeedProfile::Uniform },
            pressure_profile: vec![(0.0, 500.0)],
            yaw_profile: vec![(0.0, 0.0)],
            pitch_profile: vec![(0.0, 0.0)],
            roll_profile: vec![(0.0, 0.0)],
            brush_radius_px: radius,
            inter_stroke_pause_ms: 100,
        };
        let out = generate_session(&[s.clone(), s], &SynthOptions { canvas: Size { w: 100, h: 80 }, ..SynthOptions::default() }).unwrap();
        for w in out.frames.windows(2) {
            prop_assert!(w[0].pixels().zip(w[1].pixels()).all(|(a, b)| a.0[0] != 0 || b.0[0] == 0));
        }
        let down: Vec<&str> = out.tip_csv.lines().skip(1).filter(|l| l.ends_with(",2.000")).collect();
        let covered: usize = out.truth.strokes.iter().map(|t| out.tip_csv.lines().skip(1).filter(|l| {
            let ms: i64 = l.split(',').next().unwrap().parse().unwrap();
            t.contact.contains(ms)
        }).count()).sum();
        prop_assert_eq!(down.len(), covered);
    }

    #[test]
    fn sessions_round_trip(strokes in prop::collection::vec(prop::collection::vec((1i64..50, 0f64..20.0, 0u16..1024, 0f64..500.0, -90f64..90.0), 1..8), 1..4)) {
        let mut t = 0;
        let mut out = Vec::new();
        for (index, pts) in strokes.iter().enumerate() {
            let start = t + 10;
            let mut skeleton = Vec::new();
            let mut tt = start;
            let mut x = 0.0;
            for (j, &(dt, dx, p, v, rot)) in pts.iter().enumerate() {
                if j > 0 {
                    tt += dt;
                    x += dx + 0.1;
                }
                skeleton.push(EnrichedPoint {
                    pos: Vec2::new(x, 1.0 / 3.0),
                    t_ms: tt,
                    speed_px_s: v,
                    pressure_raw: p,
                    pressure_tier: u32::from(p) % 5,
                    speed_tier: (j % 5) as u32,
                    tilt_proj: Vec2::new(0.1 * rot.to_radians().sin(), 0.2),
                    rotation_deg: if j == 0 { 0.0 } else { rot },
                    arc_pos: 0.0,
                });
            }
            let total = x;
            if skeleton.len() > 1 {
                for p in skeleton.iter_mut() {
                    p.arc_pos = p.pos.x / total;
                }
            }
            out.push(Stroke { index, contact: ContactInterval { index, start_ms: start, end_ms: tt + 1 }, skeleton, pixel_count: pts.len() * 7 });
            t = tt + 1;
        }
        let s = Session {
            schema_version: SCHEMA_VERSION.into(),
            id: "p".into(),
            role: Role::Student,
            character_label: "yong".into(),
            canvas_w: 64,
            canvas_h: 48,
            frame_count: 9,
            config_fingerprint: "abc".into(),
            glyph_mask: Some("p.mask.pgm".into()),
            frames_dir: None,
            strokes: out,
        };
        let doc = serialize_session(&s);
        let back = validate_session(&doc).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_session(&back), doc);
    }
}
