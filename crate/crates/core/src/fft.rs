//! Multi-dimensional FFT over row-major arrays, one axis at a time.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalized DFT of `data` with the given `shape` (axis 0
/// slowest). `Forward` uses the kernel `exp(-2 pi i k m / n)`.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    assert_eq!(data.len(), shape.iter().product::<usize>(), "shape/data length");
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..shape.len() {
        let n = shape[axis];
        if n <= 1 {
            continue;
        }
        let fft = planner.plan_fft(n, direction);
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        if inner == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let mut line = vec![Complex64::default(); n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * inner];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * inner] = *v;
                }
            }
        }
    }
}

/// Integer frequency of FFT output slot `j` for length `n`, in `[-n/2, n/2)`
/// (`[-floor(n/2), ceil(n/2))` for odd `n`).
pub fn slot_frequency(j: usize, n: usize) -> i64 {
    if j < n - n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// FFT output slot holding integer frequency `m`.
pub fn frequency_slot(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}
