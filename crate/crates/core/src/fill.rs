//! Hole filling and distance transforms shared by densification and the
//! baseline completer.

use crate::image::{Mask, RgbImage};

struct Level {
    w: usize,
    h: usize,
    color: Vec<[f64; 3]>,
    weight: Vec<f64>,
}

/// Pull-push interpolation of the pixels in `known` into the rest of the
/// image.
///
/// `levels` bounds the number of pull steps (`None` builds the full pyramid
/// down to one pixel), which bounds how far values travel. Returns the
/// filled colors and a flag per pixel telling whether a value reached it.
/// Known pixels keep their exact input value.
pub fn pull_push(rgb: &RgbImage, known: &Mask, levels: Option<usize>) -> (Vec<[f64; 3]>, Vec<bool>) {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let base = Level {
        w,
        h,
        color: (0..w * h)
            .map(|i| {
                let p = rgb.at(i);
                [p[0] as f64, p[1] as f64, p[2] as f64]
            })
            .collect(),
        weight: known.as_slice().iter().map(|k| *k as u8 as f64).collect(),
    };
    let mut pyramid = vec![base];
    let max_levels = levels.unwrap_or(usize::MAX);
    while pyramid.len() <= max_levels {
        let top = pyramid.last().expect("nonempty");
        if top.w == 1 && top.h == 1 {
            break;
        }
        pyramid.push(pull(top));
    }

    // Push: walk back down, blending each level with its parent.
    let mut filled: Vec<bool> = pyramid
        .last()
        .expect("nonempty")
        .weight
        .iter()
        .map(|w| *w > 0.0)
        .collect();
    for l in (0..pyramid.len() - 1).rev() {
        let (lower, upper) = pyramid.split_at_mut(l + 1);
        let child = &mut lower[l];
        let parent = &upper[0];
        let mut child_filled = vec![false; child.w * child.h];
        for y in 0..child.h {
            for x in 0..child.w {
                let i = y * child.w + x;
                let wgt = child.weight[i];
                if wgt >= 1.0 {
                    child_filled[i] = true;
                    continue;
                }
                match sample_parent(parent, &filled, x, y) {
                    Some(up) => {
                        let c = &mut child.color[i];
                        for ch in 0..3 {
                            c[ch] = wgt * c[ch] + (1.0 - wgt) * up[ch];
                        }
                        child_filled[i] = true;
                    }
                    None => child_filled[i] = wgt > 0.0,
                }
            }
        }
        filled = child_filled;
    }
    let base = pyramid.swap_remove(0);
    (base.color, filled)
}

fn pull(child: &Level) -> Level {
    let (w, h) = (child.w.div_ceil(2), child.h.div_ceil(2));
    let mut color = vec![[0.0; 3]; w * h];
    let mut weight = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            let mut sum = 0.0;
            for (cx, cy) in [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)] {
                if cx < child.w && cy < child.h {
                    let i = cy * child.w + cx;
                    let wgt = child.weight[i];
                    if wgt > 0.0 {
                        for ch in 0..3 {
                            acc[ch] += wgt * child.color[i][ch];
                        }
                        sum += wgt;
                    }
                }
            }
            let i = y * w + x;
            if sum > 0.0 {
                color[i] = [acc[0] / sum, acc[1] / sum, acc[2] / sum];
                weight[i] = sum.min(1.0);
            }
        }
    }
    Level { w, h, color, weight }
}

/// Bilinear sample of the parent level at the center of child pixel
/// `(x, y)`, using only parents that hold a value.
fn sample_parent(parent: &Level, filled: &[bool], x: usize, y: usize) -> Option<[f64; 3]> {
    let px = (x as f64 + 0.5) / 2.0 - 0.5;
    let py = (y as f64 + 0.5) / 2.0 - 0.5;
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    let mut acc = [0.0; 3];
    let mut sum = 0.0;
    for (dx, dy, bw) in [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
        (1.0, 0.0, fx * (1.0 - fy)),
        (0.0, 1.0, (1.0 - fx) * fy),
        (1.0, 1.0, fx * fy),
    ] {
        if bw <= 0.0 {
            continue;
        }
        let i = clamp(y0 + dy, parent.h) * parent.w + clamp(x0 + dx, parent.w);
        if filled[i] {
            for ch in 0..3 {
                acc[ch] += bw * parent.color[i][ch];
            }
            sum += bw;
        }
    }
    (sum > 0.0).then(|| [acc[0] / sum, acc[1] / sum, acc[2] / sum])
}

/// Rounds a filled value back to 8 bits.
pub fn to_rgb8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(start) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = start;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in start + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance, in pixels, from every pixel to the nearest set
/// pixel of `mask`. Infinite everywhere when the mask is empty.
pub fn distance_to_set(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut grid: Vec<f64> = mask
        .as_slice()
        .iter()
        .map(|m| if *m { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        dt_1d(&col, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        dt_1d(&grid[y * w..(y + 1) * w], &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_distance(mask: &Mask) -> Vec<f64> {
        let (w, h) = mask.dims();
        let set: Vec<(i64, i64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|(x, y)| mask.get(*x, *y))
            .map(|(x, y)| (x as i64, y as i64))
            .collect();
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x as i64, y as i64)))
            .map(|(x, y)| {
                set.iter()
                    .map(|(sx, sy)| (((sx - x).pow(2) + (sy - y).pow(2)) as f64).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn distance_transform_matches_brute_force(
            w in 1u32..14, h in 1u32..14, bits in proptest::collection::vec(0u8..12, 196)
        ) {
            let mask = Mask::from_fn(w, h, |x, y| bits[(y * 14 + x) as usize] == 0);
            let fast = distance_to_set(&mask);
            let slow = brute_distance(&mask);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!(a == b || (a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn known_pixels_are_untouched(seed in any::<u64>()) {
            let img = RgbImage::from_raw(9, 7, (0..189).map(|i| ((i as u64 * 31 + seed) % 251) as u8).collect()).unwrap();
            let known = Mask::from_fn(9, 7, |x, y| (seed >> ((x + 9 * y) % 64)) & 1 == 1);
            let (out, filled) = pull_push(&img, &known, None);
            for i in 0..63 {
                if known.as_slice()[i] {
                    prop_assert_eq!(to_rgb8(out[i]), img.at(i));
                }
                prop_assert!(filled[i] || !known.any());
            }
        }
    }

    #[test]
    fn checkerboard_of_constant_fills_constant() {
        let img = RgbImage::filled(16, 12, [40, 120, 200]);
        let known = Mask::from_fn(16, 12, |x, y| (x + y) % 2 == 0);
        let mut holed = img.clone();
        for y in 0..12 {
            for x in 0..16 {
                if !known.get(x, y) {
                    holed.put(x, y, [0, 0, 0]);
                }
            }
        }
        let (out, filled) = pull_push(&holed, &known, Some(3));
        assert!(filled.iter().all(|f| *f));
        assert!(out.iter().all(|c| to_rgb8(*c) == [40, 120, 200]));
    }

    #[test]
    fn bounded_levels_bound_reach() {
        let img = RgbImage::filled(64, 1, [9, 9, 9]);
        let known = Mask::from_fn(64, 1, |x, _| x == 0);
        let (_, filled) = pull_push(&img, &known, Some(2));
        assert!(filled[0] && filled[3]);
        assert!(!filled[63]);
    }

    #[test]
    fn empty_mask_distance_is_infinite() {
        assert!(distance_to_set(&Mask::new(3, 3)).iter().all(|d| d.is_infinite()));
    }
}
