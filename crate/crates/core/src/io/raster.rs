//! 8-bit PGM/PPM exports for fraction and concentration maps.
//!
//! Scaling conventions:
//! - Fraction maps: `frac ∈ [0, 1]` maps linearly to gray 0–255; pixels with
//!   an undefined fraction render as 0 and are marked in a companion mask
//!   (mask 255 = defined, 0 = undefined).
//! - The two-channel overlay colors each pixel by composition — the
//!   one-shot population in blue, the recondensing population in yellow —
//!   with brightness proportional to total droplet concentration normalized
//!   to the image maximum. Undefined pixels are black.

use crate::error::{Error, Result};
use crate::unmix::FractionMaps;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Write a binary (P5) 8-bit PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::validation("PGM pixel count mismatch"));
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Write a binary (P6) 8-bit RGB PPM.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::validation("PPM pixel count mismatch"));
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    Ok(())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Gray levels for the fraction map: 0–255 over `[0, 1]`, undefined = 0.
pub fn frac56_to_gray(maps: &FractionMaps) -> Vec<u8> {
    maps.frac56
        .iter()
        .zip(&maps.defined)
        .map(|(&f, &ok)| if ok { to_byte(f) } else { 0 })
        .collect()
}

/// Definedness mask: 255 where the fraction is defined, 0 elsewhere.
pub fn defined_mask(maps: &FractionMaps) -> Vec<u8> {
    maps.defined.iter().map(|&ok| if ok { 255 } else { 0 }).collect()
}

/// RGB overlay of the two droplet populations (blue = one-shot, yellow =
/// recondensing).
pub fn overlay_rgb(maps: &FractionMaps) -> Vec<u8> {
    let max_total = maps
        .c28
        .iter()
        .zip(&maps.c56)
        .map(|(a, b)| a + b)
        .fold(0.0f64, f64::max);
    let mut rgb = Vec::with_capacity(maps.c28.len() * 3);
    for i in 0..maps.c28.len() {
        if !maps.defined[i] || max_total <= 0.0 {
            rgb.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let total = maps.c28[i] + maps.c56[i];
        let intensity = total / max_total;
        let f = maps.frac56[i];
        // yellow (255,255,0) weighted by f, blue (0,0,255) by 1-f.
        rgb.push(to_byte(intensity * f));
        rgb.push(to_byte(intensity * f));
        rgb.push(to_byte(intensity * (1.0 - f)));
    }
    rgb
}

/// Write the full raster set for one unmixed stack: fraction PGM, mask PGM,
/// and overlay PPM. Returns the written paths.
pub fn write_map_rasters(
    dir: &Path,
    stem: &str,
    maps: &FractionMaps,
) -> Result<Vec<std::path::PathBuf>> {
    let frac_path = dir.join(format!("{stem}_frac56.pgm"));
    let mask_path = dir.join(format!("{stem}_mask.pgm"));
    let overlay_path = dir.join(format!("{stem}_overlay.ppm"));
    write_pgm(&frac_path, maps.width, maps.height, &frac56_to_gray(maps))?;
    write_pgm(&mask_path, maps.width, maps.height, &defined_mask(maps))?;
    write_ppm(&overlay_path, maps.width, maps.height, &overlay_rgb(maps))?;
    Ok(vec![frac_path, mask_path, overlay_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy_maps() -> FractionMaps {
        FractionMaps {
            width: 2,
            height: 1,
            c28: vec![1.0, 0.0],
            c56: vec![1.0, 0.0],
            cbg: vec![0.0, 1.0],
            frac56: vec![0.5, f64::NAN],
            defined: vec![true, false],
        }
    }

    #[test]
    fn gray_and_mask_values() {
        let maps = toy_maps();
        assert_eq!(frac56_to_gray(&maps), vec![128, 0]);
        assert_eq!(defined_mask(&maps), vec![255, 0]);
    }

    #[test]
    fn overlay_blends_blue_and_yellow() {
        let maps = toy_maps();
        let rgb = overlay_rgb(&maps);
        // Defined pixel at 50/50 with full intensity: half yellow, half blue.
        assert_eq!(&rgb[0..3], &[128, 128, 128]);
        // Undefined pixel is black.
        assert_eq!(&rgb[3..6], &[0, 0, 0]);
    }

    #[test]
    fn pgm_header_and_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&path, 2, 1, &[7, 9]).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 2..], &[7, 9]);
    }
}
