//! 2-D FFT (radix-2, power-of-two extents) and frequency-band masks.

use crate::error::{Error, Result};

/// Spectrum of a 2-D real or complex field, stored as separate
/// real/imaginary planes in row-major order.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn energy(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwo(n));
    }
    Ok(())
}

/// In-place iterative radix-2 Cooley-Tukey on one line. `sign` is -1 for the
/// forward transform, +1 for the inverse (unnormalized).
fn fft_line(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0, 0.0);
            for k in 0..len / 2 {
                let a = i + k;
                let b = i + k + len / 2;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

fn fft2_planes(mut re: Vec<f64>, mut im: Vec<f64>, rows: usize, cols: usize, sign: f64) -> Spectrum {
    let mut scratch_re = vec![0.0; rows];
    let mut scratch_im = vec![0.0; rows];
    for r in 0..rows {
        fft_line(&mut re[r * cols..(r + 1) * cols], &mut im[r * cols..(r + 1) * cols], sign);
    }
    for c in 0..cols {
        for r in 0..rows {
            scratch_re[r] = re[r * cols + c];
            scratch_im[r] = im[r * cols + c];
        }
        fft_line(&mut scratch_re, &mut scratch_im, sign);
        for r in 0..rows {
            re[r * cols + c] = scratch_re[r];
            im[r * cols + c] = scratch_im[r];
        }
    }
    Spectrum { rows, cols, re, im }
}

/// Forward 2-D FFT of a real field. Extents must be powers of two.
pub fn fft2(data: &[f64], rows: usize, cols: usize) -> Result<Spectrum> {
    check_pow2(rows)?;
    check_pow2(cols)?;
    assert_eq!(data.len(), rows * cols, "fft2: data length mismatch");
    Ok(fft2_planes(data.to_vec(), vec![0.0; data.len()], rows, cols, -1.0))
}

/// Inverse 2-D FFT; returns the real part (normalized by 1/(rows*cols)).
pub fn ifft2(spec: &Spectrum) -> Result<Vec<f64>> {
    check_pow2(spec.rows)?;
    check_pow2(spec.cols)?;
    let out = fft2_planes(spec.re.clone(), spec.im.clone(), spec.rows, spec.cols, 1.0);
    let norm = 1.0 / (spec.rows * spec.cols) as f64;
    Ok(out.re.iter().map(|v| v * norm).collect())
}

/// Disk mask of 1.0 within `cutoff` of the DC bin (frequency wrap-around
/// respected), 0.0 elsewhere.
pub fn low_pass_mask(rows: usize, cols: usize, cutoff: f64) -> Vec<f64> {
    let mut mask = vec![0.0; rows * cols];
    for r in 0..rows {
        let fr = if r <= rows / 2 { r as f64 } else { (rows - r) as f64 };
        for c in 0..cols {
            let fc = if c <= cols / 2 { c as f64 } else { (cols - c) as f64 };
            if (fr * fr + fc * fc).sqrt() <= cutoff {
                mask[r * cols + c] = 1.0;
            }
        }
    }
    mask
}

/// Applies a 0/1 mask to a spectrum.
pub fn apply_mask(spec: &Spectrum, mask: &[f64]) -> Spectrum {
    assert_eq!(mask.len(), spec.re.len());
    Spectrum {
        rows: spec.rows,
        cols: spec.cols,
        re: spec.re.iter().zip(mask).map(|(v, m)| v * m).collect(),
        im: spec.im.iter().zip(mask).map(|(v, m)| v * m).collect(),
    }
}

pub fn scale_spectrum(spec: &Spectrum, s: f64) -> Spectrum {
    Spectrum {
        rows: spec.rows,
        cols: spec.cols,
        re: spec.re.iter().map(|v| v * s).collect(),
        im: spec.im.iter().map(|v| v * s).collect(),
    }
}

pub fn add_spectra(a: &Spectrum, b: &Spectrum) -> Spectrum {
    assert_eq!(a.re.len(), b.re.len());
    Spectrum {
        rows: a.rows,
        cols: a.cols,
        re: a.re.iter().zip(&b.re).map(|(x, y)| x + y).collect(),
        im: a.im.iter().zip(&b.im).map(|(x, y)| x + y).collect(),
    }
}

/// Fraction of spectral energy at radial frequency above `cutoff`.
pub fn high_band_energy_fraction(data: &[f64], rows: usize, cols: usize, cutoff: f64) -> Result<f64> {
    let spec = fft2(data, rows, cols)?;
    let total = spec.energy();
    if total == 0.0 {
        return Ok(0.0);
    }
    let low = apply_mask(&spec, &low_pass_mask(rows, cols, cutoff));
    Ok((total - low.energy()) / total)
}
