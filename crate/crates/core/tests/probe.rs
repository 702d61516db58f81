// temporary probe for acceptance-critical numbers; deleted before shipping
use difet_core::describe::{brief_describe, hamming_distance, orb_extract, BinaryDescriptor, SamplingPattern};
use difet_core::detect::fast_detect;
use difet_core::engine::Algorithm;
use difet_core::params::{DescriptorParams, DetectorParams};
use difet_core::raster::{gaussian_blur, to_grayscale, GrayImage};
use difet_core::synth::generate_image;
use std::time::Instant;

fn rotate_about_center(img: &GrayImage, angle: f64) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    let mut out = GrayImage::filled(w, h, 0.5);
    for y in 0..h {
        for x in 0..w {
            // inverse map: rotate destination offset by -angle
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if sx >= 0.0 && sy >= 0.0 && sx < (w - 1) as f64 && sy < (h - 1) as f64 {
                let x0 = sx.floor() as usize;
                let y0 = sy.floor() as usize;
                let tx = sx - x0 as f64;
                let ty = sy - y0 as f64;
                let v = img.get(x0, y0) * (1.0 - tx) * (1.0 - ty)
                    + img.get(x0 + 1, y0) * tx * (1.0 - ty)
                    + img.get(x0, y0 + 1) * (1.0 - tx) * ty
                    + img.get(x0 + 1, y0 + 1) * tx * ty;
                out.set(x, y, v);
            }
        }
    }
    out
}

fn match_rate(orig: &[BinaryDescriptor], rot: &[BinaryDescriptor], thresh: u32) -> f64 {
    if orig.is_empty() || rot.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for d in orig {
        let best = rot.iter().map(|r| hamming_distance(d, r)).min().unwrap();
        if best <= thresh {
            hits += 1;
        }
    }
    hits as f64 / orig.len() as f64
}

#[test]
fn probe_numbers() {
    // ORB / Shi-Tomasi caps on the 1024x1024 corpus
    for i in 0..3u32 {
        let img = generate_image(7, i, 1024, 1024);
        let gray = to_grayscale(&img);
        let t0 = Instant::now();
        let orb = orb_extract(
            &gray,
            &DescriptorParams::default(),
            &DetectorParams::defaults_for(Algorithm::Orb),
        )
        .unwrap();
        let t_orb = t0.elapsed();
        let t0 = Instant::now();
        let grid = difet_core::detect::harris_response(
            &gray,
            &DetectorParams::defaults_for(Algorithm::Harris),
        )
        .unwrap();
        let harris =
            difet_core::detect::nms_select(&grid, &DetectorParams::defaults_for(Algorithm::Harris));
        let t_harris = t0.elapsed();
        let shi_grid = difet_core::detect::shi_tomasi_response(
            &gray,
            &DetectorParams::defaults_for(Algorithm::ShiTomasi),
        )
        .unwrap();
        let shi = difet_core::detect::nms_select(
            &shi_grid,
            &DetectorParams::defaults_for(Algorithm::ShiTomasi),
        );
        println!(
            "img {i}: orb={} ({t_orb:?})  shi={}  harris={} ({t_harris:?})",
            orb.len(),
            shi.len(),
            harris.len()
        );
    }

    // rotation invariance on a 256 scene (smoothed so both orientations see
    // the same band-limited content)
    let scene = gaussian_blur(&to_grayscale(&generate_image(99, 0, 256, 256)), 1.0).unwrap();
    let rotated = rotate_about_center(&scene, 15f64.to_radians());
    let p = DescriptorParams::default();
    let dp = DetectorParams::defaults_for(Algorithm::Orb);
    let orb_a: Vec<BinaryDescriptor> =
        orb_extract(&scene, &p, &dp).unwrap().into_iter().map(|(_, d)| d).collect();
    let orb_b: Vec<BinaryDescriptor> =
        orb_extract(&rotated, &p, &dp).unwrap().into_iter().map(|(_, d)| d).collect();
    let orb_rate = match_rate(&orb_a, &orb_b, 64);

    let fast_params = DetectorParams::defaults_for(Algorithm::Fast);
    let pattern = SamplingPattern::builtin();
    let brief_of = |img: &GrayImage| -> Vec<BinaryDescriptor> {
        let corners = fast_detect(img, &fast_params).unwrap();
        let blurred = gaussian_blur(img, p.brief_blur_sigma).unwrap();
        corners.iter().filter_map(|k| brief_describe(&blurred, k, pattern)).collect()
    };
    let brief_a = brief_of(&scene);
    let brief_b = brief_of(&rotated);
    let brief_rate = match_rate(&brief_a, &brief_b, 64);
    println!(
        "orb: {} vs {} descs, rate {:.3}; brief: {} vs {} descs, rate {:.3}",
        orb_a.len(),
        orb_b.len(),
        orb_rate,
        brief_a.len(),
        brief_b.len(),
        brief_rate
    );

    // SIFT timing at 256
    let t0 = Instant::now();
    let kps = difet_core::describe::sift_detect(&scene, &p).unwrap();
    let described: Vec<_> =
        kps.iter().filter_map(|k| difet_core::describe::sift_describe(&scene, k)).collect();
    println!("sift 256: {} kps, {} descs, {:?}", kps.len(), described.len(), t0.elapsed());

    // SURF at 256
    let t0 = Instant::now();
    let kps = difet_core::describe::surf_detect(&scene, &p).unwrap();
    println!("surf 256: {} kps, {:?}", kps.len(), t0.elapsed());
}
