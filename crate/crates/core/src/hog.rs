//! Gradient densities of images and the orientation histogram derived from
//! them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::baselines::finite_diff_gradients;
use crate::density::GradientDensity;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::wavefn::{choose_tau, power_spectrum_density_with, SpectrumOptions, Tau, DEFAULT_MARGIN};

/// Largest `|g_i|` over central-difference gradients of the field.
pub fn finite_difference_bound(field: &ScalarField) -> Result<f64> {
    let g = finite_diff_gradients(field)?;
    Ok(g.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `tau` from the finite-difference gradient bound times the default margin.
/// A flat image has bound 0; `fallback` stands in for it then.
pub fn auto_tau(field: &ScalarField, fallback: f64) -> Result<Tau> {
    let bound = finite_difference_bound(field)?;
    let bound = if bound > 0.0 { bound } else { fallback };
    choose_tau(field, bound, DEFAULT_MARGIN)
}

/// 2-D gradient density of an image field.
pub fn image_gradient_density(field: &ScalarField, tau: Tau, options: &SpectrumOptions) -> Result<GradientDensity> {
    if field.dim() != 2 {
        return Err(Error::UnsupportedDimension(field.dim()));
    }
    power_spectrum_density_with(field, tau, options)
}

/// Radius-integrated mass per equal-angle sector. Sector `j` is centered on
/// angle `2 pi j / sectors`; mass at `u = 0` has no angle and is kept apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationHistogram {
    pub sectors: Vec<f64>,
    pub zero_gradient_mass: f64,
}

impl OrientationHistogram {
    pub fn peak(&self) -> usize {
        self.sectors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

pub fn orientation_histogram(density: &GradientDensity, sectors: usize) -> Result<OrientationHistogram> {
    if density.dim() != 2 {
        return Err(Error::UnsupportedDimension(density.dim()));
    }
    if sectors == 0 {
        return Err(Error::Precondition("need at least one orientation sector".into()));
    }
    let vol = density.bin_volume();
    let width = 2.0 * PI / sectors as f64;
    let tiny = 1e-9 * density.grid.axes().iter().fold(0.0, |m: f64, a| m.max(a.step));
    let mut out = OrientationHistogram {
        sectors: vec![0.0; sectors],
        zero_gradient_mass: 0.0,
    };
    for (k, v) in density.values.iter().enumerate() {
        let u = density.grid.center(k);
        let mass = v * vol;
        if u[0].abs() < tiny && u[1].abs() < tiny {
            out.zero_gradient_mass += mass;
            continue;
        }
        let theta = u[1].atan2(u[0]);
        let j = ((theta / width).round() as i64).rem_euclid(sectors as i64) as usize;
        out.sectors[j] += mass;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{read_image_pgm, write_pgm, PgmEncoding};

    fn image(width: usize, height: usize, pixel: impl Fn(usize, usize) -> u16) -> ScalarField {
        let pixels: Vec<u16> = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| pixel(r, c))
            .collect();
        let mut buf = Vec::new();
        write_pgm(&mut buf, width, height, 255, &pixels, PgmEncoding::Binary).unwrap();
        read_image_pgm(&buf, 0.5).unwrap()
    }

    #[test]
    fn ramp_peaks_at_its_slope() {
        let ramp = image(64, 48, |_, c| c as u16);
        assert_eq!(finite_difference_bound(&ramp).unwrap(), 0.5);
        let tau = auto_tau(&ramp, 1.0).unwrap();
        let d = image_gradient_density(&ramp, tau, &SpectrumOptions::default()).unwrap();
        assert_eq!(d.grid.locate(&d.argmax()), d.grid.locate(&[0.5, 0.0]));
        let h = orientation_histogram(&d, 8).unwrap();
        assert_eq!(h.peak(), 0);
    }

    #[test]
    fn rotating_the_ramp_shifts_the_peak_a_quarter_turn() {
        let across = image(64, 64, |_, c| c as u16);
        let down = image(64, 64, |r, _| r as u16);
        for sectors in [4usize, 8, 12] {
            let peak = |f: &ScalarField| {
                let d = image_gradient_density(f, auto_tau(f, 1.0).unwrap(), &SpectrumOptions::default()).unwrap();
                orientation_histogram(&d, sectors).unwrap().peak()
            };
            assert_eq!((peak(&down) + sectors - peak(&across)) % sectors, sectors / 4);
        }
    }

    #[test]
    fn flat_image_puts_mass_at_zero() {
        let flat = image(32, 32, |_, _| 7);
        let tau = auto_tau(&flat, 1.0).unwrap();
        let d = image_gradient_density(&flat, tau, &SpectrumOptions::default()).unwrap();
        assert_eq!(d.grid.locate(&d.argmax()), d.grid.locate(&[0.0, 0.0]));
        let h = orientation_histogram(&d, 8).unwrap();
        assert!((h.zero_gradient_mass - 1.0).abs() < 1e-9);
    }
}
