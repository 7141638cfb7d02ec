//! 8-bit luma frames and binary PGM (P5) I/O.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Frame dimensions must tile into 64×64 macroblocks.
pub const FRAME_ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    luma: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, luma: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(FRAME_ALIGN) || !height.is_multiple_of(FRAME_ALIGN) {
            return Err(Error::InvalidFrame(format!(
                "{width}x{height} is not a positive multiple of {FRAME_ALIGN}"
            )));
        }
        if luma.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} samples for a {width}x{height} frame",
                luma.len()
            )));
        }
        Ok(Self { width, height, luma })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut luma = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                luma.push(f(x, y));
            }
        }
        Self::new(width, height, luma)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.luma[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.luma[y * self.width + x]
    }

    /// Sample with coordinates clamped into the frame.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.luma[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Frame) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let (w, h, data) = read_pgm(path)?;
        Frame::new(w, h, data).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_pgm(path, self.width, self.height, &self.luma)
    }
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    debug_assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, data)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|msg| Error::format(path, msg))
}

/// Decodes an 8-bit binary PGM.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0;
    let mut next_token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = next_token()?;
    if magic != "P5" {
        return Err(format!("unsupported magic {magic:?}, expected P5"));
    }
    let mut num = |what: &str| -> std::result::Result<usize, String> {
        next_token()?
            .parse::<usize>()
            .map_err(|_| format!("bad {what} in header"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported, expected 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = width * height;
    if bytes.len() < start + len {
        return Err(format!("raster truncated: need {len} bytes"));
    }
    Ok((width, height, bytes[start..start + len].to_vec()))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.pgm")
}

/// Lists the `.pgm` files of a directory in file-name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    list_frames(dir)?.iter().map(|p| Frame::read_pgm(p)).collect()
}

pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        frame.write_pgm(&dir.join(frame_file_name(i)))?;
    }
    Ok(())
}
