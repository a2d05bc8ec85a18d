//! Binary portable pixmap (P6) output and input.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::render::Framebuffer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Rows top to bottom, 3 bytes per pixel.
    pub rgb: Vec<u8>,
}

impl Image {
    /// Panics when `rgb` does not hold exactly `width·height` pixels.
    pub fn new(width: u32, height: u32, rgb: Vec<u8>) -> Image {
        assert_eq!(rgb.len(), width as usize * height as usize * 3, "pixel buffer does not match dims");
        Image { width, height, rgb }
    }

    pub fn from_framebuffer(fb: &Framebuffer) -> Image {
        Image::new(fb.width, fb.height, fb.rgb_bytes())
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.rgb);
    out
}

pub fn write_ppm(img: &Image, w: &mut impl Write) -> io::Result<()> {
    w.write_all(&encode_ppm(img))
}

pub fn write_image(img: &Image, path: &Path) -> io::Result<()> {
    std::fs::write(path, encode_ppm(img))
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Accepts the header layout written by [`encode_ppm`] plus arbitrary
/// whitespace and `#` comments.
pub fn decode_ppm(data: &[u8]) -> io::Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated header"));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| invalid("bad header"))?);
    }
    if fields[0] != "P6" {
        return Err(invalid("not a binary pixmap"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| invalid("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(invalid("only 8-bit pixmaps are supported"));
    }
    pos += 1;
    let n = w as usize * h as usize * 3;
    if data.len() < pos + n {
        return Err(invalid("truncated pixel data"));
    }
    Ok(Image::new(w, h, data[pos..pos + n].to_vec()))
}

pub fn read_image(path: &Path) -> io::Result<Image> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    decode_ppm(&data)
}
