//! FRS1: the binary frame-stack format.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FRS1"
//! 4       4     u32 width
//! 8       4     u32 height
//! 12      4     u32 n_frames
//! 16      4     u32 reserved (written as 0)
//! 20      4     u32 header-extension length (bytes to skip after the header)
//! 24      ...   header extension (opaque)
//! ...           n_frames f64 frame times
//! ...           width*height*n_frames f32 voxels, frame-major then row-major
//! ```

use crate::error::{Error, Result};
use crate::phantom::FrameStack;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FRS1";

/// Write a frame stack. The reserved field and extension length are zero.
pub fn write_frame_stack(path: &Path, stack: &FrameStack) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(stack.width() as u32).to_le_bytes())?;
    w.write_all(&(stack.height() as u32).to_le_bytes())?;
    w.write_all(&(stack.n_frames() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?; // reserved
    w.write_all(&0u32.to_le_bytes())?; // extension length
    for &t in stack.frame_times_s() {
        w.write_all(&t.to_le_bytes())?;
    }
    for &v in stack.voxels() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Read a frame stack, validating the magic, the dimensions against the
/// file size, and the voxel invariants (finite, nonnegative).
pub fn read_frame_stack(path: &Path) -> Result<FrameStack> {
    let file = fs::File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::validation(format!(
            "{}: not an FRS1 file (magic {magic:?})",
            path.display()
        )));
    }
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let n_frames = read_u32(&mut r)? as usize;
    let _reserved = read_u32(&mut r)?;
    let ext_len = read_u32(&mut r)? as usize;

    if width == 0 || height == 0 || n_frames == 0 {
        return Err(Error::validation(format!(
            "{}: zero dimension in header ({width}x{height}x{n_frames})",
            path.display()
        )));
    }
    let voxel_count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(n_frames))
        .ok_or_else(|| Error::validation(format!("{}: dimensions overflow", path.display())))?;

    let expected_len = 24u64 + ext_len as u64 + 8 * n_frames as u64 + 4 * voxel_count as u64;
    if file_len != expected_len {
        return Err(Error::validation(format!(
            "{}: file is {file_len} bytes but the header implies {expected_len}",
            path.display()
        )));
    }

    if ext_len > 0 {
        let mut skip = vec![0u8; ext_len];
        r.read_exact(&mut skip)?;
    }

    let mut times = Vec::with_capacity(n_frames);
    let mut tbuf = [0u8; 8];
    for _ in 0..n_frames {
        r.read_exact(&mut tbuf)?;
        times.push(f64::from_le_bytes(tbuf));
    }

    let mut raw = vec![0u8; voxel_count * 4];
    r.read_exact(&mut raw)?;

    let voxels: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    FrameStack::new(width, height, times, voxels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_stack() -> FrameStack {
        let times = vec![0.0, 0.1, 0.2];
        let voxels: Vec<f32> = (0..2 * 2 * 3).map(|i| i as f32 * 0.5).collect();
        FrameStack::new(2, 2, times, voxels).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.frs1");
        let stack = small_stack();
        write_frame_stack(&path, &stack).unwrap();
        let back = read_frame_stack(&path).unwrap();
        assert_eq!(stack, back);

        // Writing the same stack twice yields identical bytes.
        let path2 = dir.path().join("s2.frs1");
        write_frame_stack(&path2, &stack).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.frs1");
        fs::write(&path, b"NOPE\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            read_frame_stack(&path),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.frs1");
        let stack = small_stack();
        write_frame_stack(&path, &stack).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_frame_stack(&path).is_err());
    }

    #[test]
    fn negative_voxel_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("neg.frs1");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FRS1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&0.0f64.to_le_bytes());
        bytes.extend_from_slice(&(-1.0f32).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_frame_stack(&path),
            Err(Error::Validation(_))
        ));
    }
}
