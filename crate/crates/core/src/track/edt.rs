//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher lower
//! envelope of parabolas), applied separably along columns then rows.

use ndarray::Array2;

const INF: f64 = f64::INFINITY;

/// Squared distance transform of a 1D sampled function, in place.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    // Rows with no finite sample stay infinite.
    if f.iter().all(|x| x.is_infinite()) {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    let mut k = 0usize;
    let first = f.iter().position(|x| x.is_finite()).unwrap();
    v[0] = first;
    z[0] = -INF;
    z[1] = INF;
    for q in (first + 1)..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Distance in meters from every cell center to the nearest `true` cell
/// center. Indexing is `[row, col]`. Cells in an all-`false` grid are `+∞`.
pub fn distance_field(seeds: &Array2<bool>, resolution: f64) -> Array2<f64> {
    let (rows, cols) = seeds.dim();
    let mut sq = seeds.mapv(|s| if s { 0.0 } else { INF });
    let n = rows.max(cols);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..cols {
        for r in 0..rows {
            f[r] = sq[[r, c]];
        }
        dt_1d(&f[..rows], &mut out[..rows], &mut v, &mut z);
        for r in 0..rows {
            sq[[r, c]] = out[r];
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            f[c] = sq[[r, c]];
        }
        dt_1d(&f[..cols], &mut out[..cols], &mut v, &mut z);
        for c in 0..cols {
            sq[[r, c]] = out[c];
        }
    }
    sq.mapv_inplace(|d| if d.is_finite() { d.sqrt() * resolution } else { INF });
    sq
}
