//! Periodic test textures for flow estimation.

/// Smooth random texture in [0, 255], periodic so that wrapped shifts are exact.
pub fn texture(h: usize, w: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let waves: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            let kx = (1 + (next() * 6.0) as usize) as f64;
            let ky = (1 + (next() * 6.0) as usize) as f64;
            (kx, ky, next() * std::f64::consts::TAU, 8.0 + next() * 12.0)
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let mut v = 128.0;
            for &(kx, ky, ph, amp) in &waves {
                v += amp * (std::f64::consts::TAU * (kx * x as f64 / w as f64 + ky * y as f64 / h as f64) + ph).sin();
            }
            out[y * w + x] = v.clamp(0.0, 255.0);
        }
    }
    out
}

pub fn shift_wrapped(img: &[f64], h: usize, w: usize, dx: usize, dy: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[((y + dy) % h) * w + (x + dx) % w] = img[y * w + x];
        }
    }
    out
}
