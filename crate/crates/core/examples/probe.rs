// scratch experiment runner; not part of the deliverable surface
use std::time::Instant;

use zbwm::adapter::{zb_embed, MessageKey, SurrogateDecoder};
use zbwm::attacks::{ddn_attack, DdnConfig};
use zbwm::bench::{build_whitener, derive_seed, synthetic_image, Corpus, CorpusSource, WhitenerPolicy};
use zbwm::broken_arrows::*;
use zbwm::detector::{BaDetector, Detector, DetectorHandle, ZbDetector};
use zbwm::image::{l2_distance, psnr, Decibels};
use zbwm::transforms::jpeg_approx;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "ba".into());
    match which.as_str() {
        "ba" => probe_ba(),
        "ddn" => probe_ddn(),
        _ => eprintln!("unknown probe"),
    }
}

fn probe_ba() {
    let n_img = 6;
    let size = 1024;
    let alpha = 1e-6;
    let t0 = Instant::now();
    for i in 0..n_img {
        let img = synthetic_image(derive_seed(7, i), size);
        let t1 = Instant::now();
        let key = ba_keygen(derive_seed(1000, i), BaParams::full_scale()).unwrap();
        let t_key = t1.elapsed();
        let t1 = Instant::now();
        let wm = ba_embed(&img, &key, Decibels(42.0)).unwrap();
        let t_embed = t1.elapsed();
        let embed_psnr = psnr(&img, &wm).unwrap();
        let t1 = Instant::now();
        let p = ba_detect(&wm, &key).unwrap();
        let t_det = t1.elapsed();
        let p_host = ba_detect(&img, &key).unwrap();
        let j90 = ba_detect(&jpeg_approx(&wm, 90).unwrap(), &key).unwrap();
        let j5 = ba_detect(&jpeg_approx(&wm, 5).unwrap(), &key).unwrap();
        // optimal attack
        let margin = default_attack_margin(alpha, &key).unwrap();
        let rec = ba_optimal_attack(&wm, &key, alpha, margin).unwrap();
        // half perturbation
        let mut half = wm.clone();
        for (h, (&a, &w)) in half
            .data_mut()
            .iter_mut()
            .zip(rec.attacked.data().iter().zip(wm.data()))
        {
            *h = w + 0.5 * (a - w);
        }
        let p_half = ba_detect(&half, &key).unwrap();
        // grid oracle for perturbation norm
        let r = ba_project(&wm, &key).unwrap();
        let cosines = cone_cosines(&r, &key);
        let (_, best) = zbwm::hypercone::winning_cone(&cosines);
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let theta_t = detection_angle(alpha, &key).unwrap() + margin;
        let theta_r = best.acos();
        let analytic_norm = norm_r * (theta_t - theta_r).sin();
        let actual_norm = l2_distance(&wm, &rec.attacked);
        println!(
            "img{i}: embed {embed_psnr}, log10p wm {:.1} host {:.2} j90 {:.1} j5 {:.1} | atk psnr {} succ {} log10p {:.2} half-p {:.1} | norm {actual_norm:.2} vs analytic {analytic_norm:.2} | keygen {:?} embed {:?} detect {:?}",
            p.log10_value(),
            p_host.log10_value(),
            j90.log10_value(),
            j5.log10_value(),
            rec.psnr_vs_watermarked,
            rec.success,
            rec.final_pvalue.log10_value(),
            p_half.log10_value(),
            t_key, t_embed, t_det
        );
    }
    println!("total {:?}", t0.elapsed());
}

fn probe_ddn() {
    let size = 1024;
    let alpha = 1e-6;
    let m = 256;
    let t0 = Instant::now();
    let dec = SurrogateDecoder::new(derive_seed(7, 0xdec0de), m, size, size, 3, None).unwrap();
    let corpus = Corpus::open(CorpusSource::Synthetic { count: 4 }, 7).unwrap();
    let whitener = build_whitener(WhitenerPolicy::Synthetic, &dec, &corpus, size, 7).unwrap();
    println!("whitener fit in {:?}", t0.elapsed());
    for i in 0..4u64 {
        let img = synthetic_image(derive_seed(21, i), size);
        let key = MessageKey::random(derive_seed(31, i), m).unwrap();
        let wm = zb_embed(&dec, &key, &img, Decibels(42.0)).unwrap();
        let det = ZbDetector::new(dec.clone(), whitener.clone(), key.clone()).unwrap();
        let p = det.detect(&wm).unwrap();
        let s = det.statistic(&wm).unwrap();
        let thr = det.threshold(alpha).unwrap();
        let t1 = Instant::now();
        let handle = DetectorHandle::new(&det, alpha);
        let rec = ddn_attack(&handle, &wm, 250, &DdnConfig::default()).unwrap();
        println!(
            "img{i}: stat {s:.3} thr {thr:.3} log10p {:.1} | ddn psnr {} succ {} q {} | {:?}",
            p.log10_value(),
            rec.psnr_vs_watermarked,
            rec.success,
            rec.queries_used,
            t1.elapsed()
        );
        // also check identity-whitener detection for contrast
        let det_id =
            ZbDetector::new(dec.clone(), zbwm::adapter::Whitener::identity(m), key).unwrap();
        let p_id = det_id.detect(&wm).unwrap();
        println!("   identity-whitener log10p {:.1}", p_id.log10_value());
    }
    println!("total {:?}", t0.elapsed());
}
