use qre_core::detect::{detect_wpm, detect_wpb, WpmParams, WpbParams};
use qre_core::synthetic::{generate, SyntheticSpec};
use qre_core::wavelet::{cwt, ScaleGrid, WaveletSpec};

#[test]
fn scratch_wpm_calibration() {
    let mut all_ok = true;
    for seed in 0..10u64 {
        let spec = SyntheticSpec::train(5, 100.0, 150, 4.0, 10.0, 0.001, seed);
        let (sig, truth) = generate(&spec).unwrap();
        let grid = ScaleGrid::integers(6);
        let wspec = WaveletSpec::new(2, 0.003).unwrap(); // 3-sample width
        let sp = cwt(&sig, &grid, &wspec);
        let sbar = 4.0;
        let si = 3usize;
        let pbar = sp.row(si).iter().cloned().fold(0.0f64, f64::max) / 2.0;
        let params = WpmParams { sbar, pbar, eps: 1.0, delta: 3 };
        let ann = detect_wpm(&sp, &wspec, &params).unwrap();
        let idx = ann.indices();
        let ok = idx.len() == truth.len()
            && idx.iter().zip(&truth).all(|(a, b)| a.abs_diff(*b) <= 3);
        all_ok &= ok;
        println!("seed {seed} wpm {ok} -> {:?} truth {truth:?}", idx);
        let wpb = detect_wpb(&sp, &wspec, &WpbParams { sbar, pbar, bl: 50 }).unwrap();
        println!("seed {seed} wpb -> {:?}", wpb.indices());
    }
    assert!(all_ok);
}
