//! 8-bit grayscale PNG writer/reader.
//!
//! The writer emits one Paeth-filtered IDAT stream per image, which is
//! compact on the piecewise-constant grids it stores. The reader accepts
//! any conforming 8-bit grayscale, non-interlaced file: all five filter
//! types, multiple IDAT chunks, and unknown ancillary chunks are handled.

use crate::error::{Error, Result};

use super::deflate::{zlib_compress, zlib_decompress};

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

const fn build_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut n = 0;
    while n < 256 {
        let mut c = n as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[n] = c;
        n += 1;
    }
    table
}

const CRC_TABLE: [u32; 256] = build_crc_table();

/// CRC-32 as used by PNG chunks (reflected, polynomial 0xEDB88320).
pub fn crc32(data: &[u8]) -> u32 {
    let mut c = u32::MAX;
    for &byte in data {
        c = CRC_TABLE[usize::from((c as u8) ^ byte)] ^ (c >> 8);
    }
    c ^ u32::MAX
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let (pa, pb, pc) = {
        let (a, b, c) = (i32::from(a), i32::from(b), i32::from(c));
        let p = a + b - c;
        ((p - a).abs(), (p - b).abs(), (p - c).abs())
    };
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

fn write_chunk(out: &mut Vec<u8>, ctype: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(ctype);
    out.extend_from_slice(data);
    let mut crc_input = Vec::with_capacity(4 + data.len());
    crc_input.extend_from_slice(ctype);
    crc_input.extend_from_slice(data);
    out.extend_from_slice(&crc32(&crc_input).to_be_bytes());
}

/// Encodes a row-major grayscale buffer as a PNG file.
pub fn encode_gray8(pixels: &[u8], width: u32, height: u32) -> Result<Vec<u8>> {
    if width == 0 || height == 0 {
        return Err(Error::Png(format!("degenerate image {width}x{height}")));
    }
    let expected = width as usize * height as usize;
    if pixels.len() != expected {
        return Err(Error::ShapeMismatch {
            context: "png pixels",
            expected,
            got: pixels.len(),
        });
    }

    let w = width as usize;
    let mut filtered = Vec::with_capacity((w + 1) * height as usize);
    for y in 0..height as usize {
        filtered.push(4u8); // Paeth on every row
        for x in 0..w {
            let raw = pixels[y * w + x];
            let a = if x > 0 { pixels[y * w + x - 1] } else { 0 };
            let b = if y > 0 { pixels[(y - 1) * w + x] } else { 0 };
            let c = if x > 0 && y > 0 { pixels[(y - 1) * w + x - 1] } else { 0 };
            filtered.push(raw.wrapping_sub(paeth(a, b, c)));
        }
    }

    let mut ihdr = Vec::with_capacity(13);
    ihdr.extend_from_slice(&width.to_be_bytes());
    ihdr.extend_from_slice(&height.to_be_bytes());
    ihdr.extend_from_slice(&[8, 0, 0, 0, 0]); // depth 8, grayscale, deflate, adaptive, no interlace

    let mut out = Vec::new();
    out.extend_from_slice(&SIGNATURE);
    write_chunk(&mut out, b"IHDR", &ihdr);
    write_chunk(&mut out, b"IDAT", &zlib_compress(&filtered));
    write_chunk(&mut out, b"IEND", &[]);
    Ok(out)
}

struct ChunkReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ChunkReader<'a> {
    fn next_chunk(&mut self) -> Result<([u8; 4], &'a [u8])> {
        let header = self
            .data
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Png("file ends mid-chunk".into()))?;
        let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
        let ctype: [u8; 4] = header[4..8].try_into().unwrap();
        let body_start = self.pos + 8;
        let body = self
            .data
            .get(body_start..body_start + len)
            .ok_or_else(|| Error::Png("chunk body exceeds file".into()))?;
        let stored_crc = self
            .data
            .get(body_start + len..body_start + len + 4)
            .ok_or_else(|| Error::Png("chunk crc missing".into()))?;
        let mut crc_input = Vec::with_capacity(4 + len);
        crc_input.extend_from_slice(&ctype);
        crc_input.extend_from_slice(body);
        let computed = crc32(&crc_input);
        let stored = u32::from_be_bytes(stored_crc.try_into().unwrap());
        if computed != stored {
            return Err(Error::Png(format!(
                "crc mismatch in {:?} chunk: stored {stored:#010x}, computed {computed:#010x}",
                String::from_utf8_lossy(&ctype)
            )));
        }
        self.pos = body_start + len + 4;
        Ok((ctype, body))
    }
}

/// Decodes an 8-bit grayscale non-interlaced PNG into `(pixels, width,
/// height)`.
pub fn decode_gray8(bytes: &[u8]) -> Result<(Vec<u8>, u32, u32)> {
    if bytes.len() < 8 || bytes[..8] != SIGNATURE {
        return Err(Error::Png("missing png signature".into()));
    }
    let mut reader = ChunkReader { data: bytes, pos: 8 };

    let (ctype, ihdr) = reader.next_chunk()?;
    if &ctype != b"IHDR" || ihdr.len() != 13 {
        return Err(Error::Png("first chunk is not a valid IHDR".into()));
    }
    let width = u32::from_be_bytes(ihdr[0..4].try_into().unwrap());
    let height = u32::from_be_bytes(ihdr[4..8].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(Error::Png(format!("degenerate image {width}x{height}")));
    }
    let (depth, color, compression, filter, interlace) =
        (ihdr[8], ihdr[9], ihdr[10], ihdr[11], ihdr[12]);
    if (depth, color) != (8, 0) {
        return Err(Error::Png(format!(
            "unsupported format: bit depth {depth}, color type {color}"
        )));
    }
    if (compression, filter, interlace) != (0, 0, 0) {
        return Err(Error::Png("unsupported compression/filter/interlace flags".into()));
    }

    let mut idat = Vec::new();
    loop {
        let (ctype, body) = reader.next_chunk()?;
        match &ctype {
            b"IDAT" => idat.extend_from_slice(body),
            b"IEND" => break,
            b"IHDR" => return Err(Error::Png("duplicate IHDR".into())),
            _ => {} // ancillary chunks carry nothing we need
        }
    }

    let filtered = zlib_decompress(&idat)?;
    let w = width as usize;
    let h = height as usize;
    if filtered.len() != (w + 1) * h {
        return Err(Error::Png(format!(
            "filtered data is {} bytes, expected {}",
            filtered.len(),
            (w + 1) * h
        )));
    }

    let mut pixels = vec![0u8; w * h];
    for y in 0..h {
        let row = &filtered[y * (w + 1)..(y + 1) * (w + 1)];
        let ftype = row[0];
        for x in 0..w {
            let a = if x > 0 { pixels[y * w + x - 1] } else { 0 };
            let b = if y > 0 { pixels[(y - 1) * w + x] } else { 0 };
            let c = if x > 0 && y > 0 { pixels[(y - 1) * w + x - 1] } else { 0 };
            let f = row[1 + x];
            pixels[y * w + x] = match ftype {
                0 => f,
                1 => f.wrapping_add(a),
                2 => f.wrapping_add(b),
                3 => f.wrapping_add(((u16::from(a) + u16::from(b)) / 2) as u8),
                4 => f.wrapping_add(paeth(a, b, c)),
                _ => return Err(Error::Png(format!("unknown filter type {ftype}"))),
            };
        }
    }
    Ok((pixels, width, height))
}
