//! Per-band 2D FFT used by the frequency-domain data-fidelity solver.
//!
//! Forward transform is unnormalized (DC bin of a constant plane c is
//! c*M*N); the inverse divides by M*N so the round trip is the identity.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Unnormalized forward 2D DFT of one band plane.
pub fn fft2_band(plane: &Array2<f64>) -> Array2<Complex64> {
    let buf = plane.mapv(|v| Complex64::new(v, 0.0));
    fft2_complex(&buf, rustfft::FftDirection::Forward)
}

/// Inverse 2D DFT (normalized by M*N); returns the complex plane.
pub fn ifft2_band(spectrum: &Array2<Complex64>) -> Array2<Complex64> {
    let (m, n) = spectrum.dim();
    let mut out = fft2_complex(spectrum, rustfft::FftDirection::Inverse);
    let scale = 1.0 / (m * n) as f64;
    out.mapv_inplace(|v| v * scale);
    out
}

/// Inverse 2D DFT returning the real part (for spectra of real signals).
pub fn ifft2_band_real(spectrum: &Array2<Complex64>) -> Array2<f64> {
    ifft2_band(spectrum).mapv(|v| v.re)
}

fn fft2_complex(input: &Array2<Complex64>, direction: rustfft::FftDirection) -> Array2<Complex64> {
    let (m, n) = input.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(n, direction);
    let col_fft = planner.plan_fft(m, direction);

    let mut data = input.clone();
    for mut row in data.rows_mut() {
        let row = row.as_slice_mut().expect("contiguous row");
        row_fft.process(row);
    }
    let mut col_buf = vec![Complex64::new(0.0, 0.0); m];
    for c in 0..n {
        for r in 0..m {
            col_buf[r] = data[(r, c)];
        }
        col_fft.process(&mut col_buf);
        for r in 0..m {
            data[(r, c)] = col_buf[r];
        }
    }
    data
}
