//! Radar-centered window selection. Only horizontal coordinates take part;
//! every row of a retained column is retained.

/// Columns `x_m` of a level of width `level_width` with
/// `x_p − a < x_m < x_p + a` for at least one point, ascending, plus a
/// per-column retained flag.
pub fn select_pixels(level_width: usize, radar_u: &[f64], a: f64) -> (Vec<usize>, Vec<bool>) {
    let mut flag = vec![false; level_width];
    if level_width == 0 {
        return (Vec::new(), flag);
    }
    let last = level_width as f64 - 1.0;
    for &xp in radar_u {
        // candidate range padded by one column; the predicate below decides,
        // so both selections agree exactly under rounding
        let lo = ((xp - a).floor()).clamp(0.0, last) as usize;
        let hi = ((xp + a).ceil()).clamp(0.0, last) as usize;
        for (x, f) in flag.iter_mut().enumerate().take(hi + 1).skip(lo) {
            if in_window(x as f64, xp, a) {
                *f = true;
            }
        }
    }
    let cols = flag.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect();
    (cols, flag)
}

/// Indices of the points with `x_m − a < x_p < x_m + a`, ascending.
pub fn select_points(x_m: f64, radar_u: &[f64], a: f64) -> Vec<usize> {
    radar_u
        .iter()
        .enumerate()
        .filter(|(_, &xp)| in_window(x_m, xp, a))
        .map(|(i, _)| i)
        .collect()
}

#[inline]
fn in_window(x_m: f64, x_p: f64, a: f64) -> bool {
    x_m - a < x_p && x_p < x_m + a
}

/// Retained point indices for every column of a level.
pub fn column_keys(level_width: usize, radar_u: &[f64], a: f64) -> Vec<Vec<usize>> {
    (0..level_width)
        .map(|x| select_points(x as f64, radar_u, a))
        .collect()
}
