use std::ffi::CStr;
use std::ptr;

use mldbfm_ffi::*;

fn message() -> String {
    unsafe { CStr::from_ptr(mld_last_error_message()) }.to_string_lossy().into_owned()
}

fn wave(n: usize, c: usize) -> Vec<f64> {
    (0..n * c)
        .map(|i| {
            let (t, ch) = (i / c, i % c);
            ((t as f64) * 0.31 * (1.0 + ch as f64 * 0.05)).sin() + 0.1 * ((t * 7 + ch * 13) % 11) as f64
        })
        .collect()
}

unsafe fn signal(n: usize) -> *mut MldSignal {
    let data = wave(n, 128);
    let (rows, cols) = ([8usize, 8], [8usize, 8]);
    let mut out = ptr::null_mut();
    let s = mld_signal_new(data.as_ptr(), n, 128, 2048.0, rows.as_ptr(), cols.as_ptr(), 2, &mut out);
    assert_eq!(s, MldStatus::Ok, "{}", message());
    out
}

unsafe fn features(f: *const MldFeatures) -> (usize, usize, Vec<f64>) {
    let (mut r, mut c) = (0, 0);
    assert_eq!(mld_features_shape(f, &mut r, &mut c), MldStatus::Ok);
    let mut buf = vec![0.0; r * c];
    assert_eq!(mld_features_data(f, buf.as_mut_ptr(), buf.len()), MldStatus::Ok);
    (r, c, buf)
}

#[test]
fn signal_round_trip() {
    unsafe {
        let s = signal(300);
        let (mut n, mut c) = (0, 0);
        assert_eq!(mld_signal_shape(s, &mut n, &mut c), MldStatus::Ok);
        assert_eq!((n, c), (300, 128));
        let mut buf = vec![0.0; n * c];
        assert_eq!(mld_signal_data(s, buf.as_mut_ptr(), buf.len()), MldStatus::Ok);
        assert_eq!(buf, wave(300, 128));
        mld_signal_free(s);
    }
}

#[test]
fn block_features_and_names() {
    unsafe {
        let s = signal(2048);
        let mut f = ptr::null_mut();
        assert_eq!(mld_extract_mld_bfm(s, 2, 1, 0.15, 0.05, &mut f), MldStatus::Ok, "{}", message());
        let (rows, cols, values) = features(f);
        assert_eq!(cols, 98 * 3);
        assert!(rows > 0 && values.iter().all(|v| v.is_finite()));
        let first = CStr::from_ptr(mld_features_column_name(f, 0)).to_str().unwrap();
        assert_eq!(first, "b0:sigma");
        assert!(mld_features_column_name(f, cols).is_null());
        mld_features_free(f);
        mld_signal_free(s);
    }
}

#[test]
fn unit_blocks_reproduce_rms() {
    unsafe {
        let s = signal(1500);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(mld_extract_mld_bfm(s, 1, 1, 0.1, 0.05, &mut a), MldStatus::Ok);
        assert_eq!(mld_extract_rms(s, 0.1, 0.05, &mut b), MldStatus::Ok);
        let (ra, ca, va) = features(a);
        let (rb, cb, vb) = features(b);
        assert_eq!((ra, ca, cb), (rb, 3 * 128, 128));
        for r in 0..ra {
            for ch in 0..128 {
                assert_eq!(va[r * ca + 3 * ch].to_bits(), vb[r * cb + ch].to_bits());
            }
        }
        mld_features_free(a);
        mld_features_free(b);
        mld_signal_free(s);
    }
}

#[test]
fn preprocess_crops() {
    unsafe {
        let s = signal(4096);
        let mut p = ptr::null_mut();
        let st = mld_signal_preprocess(s, 10.0, 500.0, 4, 60.0, 30.0, 0.5, 1.5, &mut p);
        assert_eq!(st, MldStatus::Ok, "{}", message());
        let (mut n, mut c) = (0, 0);
        mld_signal_shape(p, &mut n, &mut c);
        assert_eq!((n, c), (2048, 128));
        let st = mld_signal_preprocess(s, 10.0, 500.0, 4, 0.0, 30.0, 1.5, 0.5, &mut p);
        assert_ne!(st, MldStatus::Ok);
        assert!(!message().is_empty());
        mld_signal_free(p);
        mld_signal_free(s);
    }
}

#[test]
fn descriptors_of_a_segment() {
    let seg = wave(100, 4);
    let mut out = [0.0; 3];
    let s = unsafe { mld_descriptors(seg.as_ptr(), 100, 4, 1000.0, out.as_mut_ptr()) };
    assert_eq!(s, MldStatus::Ok);
    let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
    assert!((out[0] - rms).abs() < 1e-12);
    assert!(out[1] > 0.0);
    assert!((1.0..=4.0).contains(&out[2]));
}

#[test]
fn ridge_recovers_linear_map() {
    let (n, p, d) = (60, 3, 2);
    let x: Vec<f64> = (0..n * p).map(|i| ((i * 37 % 23) as f64) / 7.0 - 1.0).collect();
    let y: Vec<f64> = (0..n)
        .flat_map(|r| {
            let row = &x[r * p..(r + 1) * p];
            [2.0 * row[0] - row[2] + 0.5, row[1] * 3.0 - 1.0]
        })
        .collect();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(mld_ridge_fit(x.as_ptr(), y.as_ptr(), n, p, d, 0.0, &mut m), MldStatus::Ok);
        let mut pred = vec![0.0; n * d];
        assert_eq!(mld_ridge_predict(m, x.as_ptr(), n, p, pred.as_mut_ptr(), pred.len()), MldStatus::Ok);
        for (a, b) in pred.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut r2 = 0.0;
        assert_eq!(mld_r2_vw(y.as_ptr(), pred.as_ptr(), n, d, &mut r2), MldStatus::Ok);
        assert!((r2 - 1.0).abs() < 1e-12);
        let st = mld_ridge_predict(m, x.as_ptr(), n, p, pred.as_mut_ptr(), 3);
        assert_eq!(st, MldStatus::BufferTooSmall);
        mld_ridge_free(m);
        let st = mld_ridge_fit(x.as_ptr(), y.as_ptr(), n, p, d, -1.0, &mut m);
        assert_eq!(st, MldStatus::InvalidSpec);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut out = 0.0;
        let st = mld_r2_vw(ptr::null(), ptr::null(), 3, 1, &mut out);
        assert_eq!(st, MldStatus::NullPointer);
        assert!(message().contains("null"));
        let mut f = ptr::null_mut();
        assert_eq!(mld_extract_rms(ptr::null(), 0.1, 0.0, &mut f), MldStatus::NullPointer);
        mld_signal_free(ptr::null_mut());
        mld_features_free(ptr::null_mut());
        let ok = mld_r2_vw([1.0, 2.0].as_ptr(), [1.0, 2.0].as_ptr(), 2, 1, &mut out);
        assert_eq!(ok, MldStatus::Ok);
        assert_eq!(message(), "");
    }
}

#[test]
fn header_declares_exports() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mldbfm.h")).unwrap();
    for name in [
        "mld_last_error_message",
        "mld_version",
        "mld_signal_new",
        "mld_signal_preprocess",
        "mld_extract_mld_bfm",
        "mld_extract_rms",
        "mld_features_column_name",
        "mld_descriptors",
        "mld_r2_vw",
        "mld_ridge_fit",
        "mld_ridge_predict",
        "mld_ridge_free",
        "MLD_STATUS_NULL_POINTER",
        "typedef struct MldSignal MldSignal",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(mld_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"mldbfm.h\"\nint main(void) { MldSignal *s = 0; MldStatus st = mld_signal_shape(s, 0, 0); mld_signal_free(s); return st == MLD_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        match std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .output()
        {
            Ok(out) => assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr)),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
