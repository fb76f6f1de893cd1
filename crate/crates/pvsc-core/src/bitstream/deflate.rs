//! Minimal zlib stream codec (RFC 1950/1951).
//!
//! Compression emits a single fixed-Huffman block driven by a greedy
//! hash-chain LZ77 matcher — small, deterministic, and good enough for the
//! smooth index grids this crate stores. Decompression is complete
//! (stored, fixed, and dynamic blocks) so streams from other encoders can
//! be read back too.

use crate::error::{Error, Result};

const WINDOW: usize = 32 * 1024;
const MIN_MATCH: usize = 3;
const MAX_MATCH: usize = 258;
const HASH_BITS: u32 = 15;
const MAX_CHAIN: usize = 128;

const LENGTH_BASE: [u16; 29] = [
    3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31, 35, 43, 51, 59, 67, 83, 99, 115,
    131, 163, 195, 227, 258,
];
const LENGTH_EXTRA: [u8; 29] = [
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0,
];
const DIST_BASE: [u16; 30] = [
    1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193, 257, 385, 513, 769, 1025, 1537,
    2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577,
];
const DIST_EXTRA: [u8; 30] = [
    0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12,
    13, 13,
];

/// Rolling Adler-32 checksum (RFC 1950 §8).
pub fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    let mut a: u32 = 1;
    let mut b: u32 = 0;
    // 5552 is the largest chunk for which u32 sums cannot overflow
    for chunk in data.chunks(5552) {
        for &byte in chunk {
            a += u32::from(byte);
            b += a;
        }
        a %= MOD;
        b %= MOD;
    }
    (b << 16) | a
}

// --- bit-level io (deflate packs bits LSB-first within bytes) ---

struct BitWriter {
    out: Vec<u8>,
    buf: u64,
    count: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            out: Vec::new(),
            buf: 0,
            count: 0,
        }
    }

    fn write_bits(&mut self, value: u32, count: u32) {
        debug_assert!(count <= 32);
        debug_assert!(count == 32 || u64::from(value) < (1u64 << count));
        self.buf |= u64::from(value) << self.count;
        self.count += count;
        while self.count >= 8 {
            self.out.push((self.buf & 0xFF) as u8);
            self.buf >>= 8;
            self.count -= 8;
        }
    }

    /// Huffman codes go on the wire most-significant bit first.
    fn write_code(&mut self, code: u32, len: u32) {
        let mut reversed = 0u32;
        for i in 0..len {
            reversed |= ((code >> i) & 1) << (len - 1 - i);
        }
        self.write_bits(reversed, len);
    }

    fn finish(mut self) -> Vec<u8> {
        if self.count > 0 {
            self.out.push((self.buf & 0xFF) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    buf: u32,
    count: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        BitReader {
            data,
            pos: 0,
            buf: 0,
            count: 0,
        }
    }

    fn read_bits(&mut self, count: u32) -> Result<u32> {
        debug_assert!(count <= 25);
        while self.count < count {
            let byte = *self
                .data
                .get(self.pos)
                .ok_or_else(|| Error::Bitstream("deflate stream ended mid-symbol".into()))?;
            self.buf |= u32::from(byte) << self.count;
            self.count += 8;
            self.pos += 1;
        }
        let value = self.buf & ((1u32 << count) - 1);
        self.buf >>= count;
        self.count -= count;
        Ok(value)
    }

    fn read_bit(&mut self) -> Result<u32> {
        self.read_bits(1)
    }

    /// Drops buffered bits so the next read starts on a byte boundary.
    fn align_byte(&mut self) {
        self.buf = 0;
        self.count = 0;
    }

    fn read_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        debug_assert_eq!(self.count, 0);
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Bitstream("stored block exceeds stream".into()))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }
}

// --- fixed-tree encoder ---

/// Fixed-Huffman code for a literal/length symbol (RFC 1951 §3.2.6).
fn fixed_litlen_code(sym: u16) -> (u32, u32) {
    match sym {
        0..=143 => (0x30 + u32::from(sym), 8),
        144..=255 => (0x190 + u32::from(sym) - 144, 9),
        256..=279 => (u32::from(sym) - 256, 7),
        280..=287 => (0xC0 + u32::from(sym) - 280, 8),
        _ => unreachable!("literal/length symbol out of range"),
    }
}

/// Maps a match length in `3..=258` to `(symbol, extra_bits, extra_value)`.
fn length_code(len: usize) -> (u16, u8, u32) {
    debug_assert!((MIN_MATCH..=MAX_MATCH).contains(&len));
    let idx = LENGTH_BASE.partition_point(|&b| usize::from(b) <= len) - 1;
    (
        257 + idx as u16,
        LENGTH_EXTRA[idx],
        (len - usize::from(LENGTH_BASE[idx])) as u32,
    )
}

/// Maps a match distance in `1..=32768` to `(symbol, extra_bits, extra_value)`.
fn dist_code(dist: usize) -> (u16, u8, u32) {
    debug_assert!((1..=WINDOW).contains(&dist));
    let idx = DIST_BASE.partition_point(|&b| usize::from(b) <= dist) - 1;
    (
        idx as u16,
        DIST_EXTRA[idx],
        (dist - usize::from(DIST_BASE[idx])) as u32,
    )
}

fn hash3(data: &[u8], pos: usize) -> usize {
    let x = u32::from(data[pos])
        | (u32::from(data[pos + 1]) << 8)
        | (u32::from(data[pos + 2]) << 16);
    (x.wrapping_mul(0x9E37_79B1) >> (32 - HASH_BITS)) as usize
}

/// Compresses `data` into one final fixed-Huffman deflate block.
pub fn deflate_fixed(data: &[u8]) -> Vec<u8> {
    let mut w = BitWriter::new();
    w.write_bits(1, 1); // BFINAL
    w.write_bits(1, 2); // BTYPE = fixed Huffman

    let mut head = vec![usize::MAX; 1 << HASH_BITS];
    let mut prev = vec![usize::MAX; data.len()];
    let insert = |head: &mut Vec<usize>, prev: &mut Vec<usize>, pos: usize| {
        if pos + MIN_MATCH <= data.len() {
            let h = hash3(data, pos);
            prev[pos] = head[h];
            head[h] = pos;
        }
    };

    let mut pos = 0;
    while pos < data.len() {
        let mut best_len = 0usize;
        let mut best_dist = 0usize;
        if pos + MIN_MATCH <= data.len() {
            let limit = (data.len() - pos).min(MAX_MATCH);
            let mut candidate = head[hash3(data, pos)];
            let mut chain = MAX_CHAIN;
            while candidate != usize::MAX && pos - candidate <= WINDOW && chain > 0 {
                let mut len = 0;
                while len < limit && data[candidate + len] == data[pos + len] {
                    len += 1;
                }
                if len > best_len {
                    best_len = len;
                    best_dist = pos - candidate;
                    if len == limit {
                        break;
                    }
                }
                candidate = prev[candidate];
                chain -= 1;
            }
        }

        if best_len >= MIN_MATCH {
            let (lsym, lextra, lval) = length_code(best_len);
            let (code, bits) = fixed_litlen_code(lsym);
            w.write_code(code, bits);
            w.write_bits(lval, u32::from(lextra));
            let (dsym, dextra, dval) = dist_code(best_dist);
            w.write_code(u32::from(dsym), 5);
            w.write_bits(dval, u32::from(dextra));
            for p in pos..pos + best_len {
                insert(&mut head, &mut prev, p);
            }
            pos += best_len;
        } else {
            let (code, bits) = fixed_litlen_code(u16::from(data[pos]));
            w.write_code(code, bits);
            insert(&mut head, &mut prev, pos);
            pos += 1;
        }
    }

    let (code, bits) = fixed_litlen_code(256);
    w.write_code(code, bits);
    w.finish()
}

// --- canonical-Huffman decoder ---

struct Huffman {
    counts: [u16; 16],
    symbols: Vec<u16>,
}

impl Huffman {
    /// Builds a canonical decoder from per-symbol code lengths (0 = unused).
    fn build(lengths: &[u8]) -> Result<Huffman> {
        let mut counts = [0u16; 16];
        for &len in lengths {
            if len > 15 {
                return Err(Error::Bitstream(format!("huffman code length {len} > 15")));
            }
            counts[usize::from(len)] += 1;
        }
        // reject over-subscribed trees; incomplete ones simply fail to
        // decode if an unassigned pattern ever appears
        let mut left: i32 = 1;
        for &count in &counts[1..16] {
            left = (left << 1) - i32::from(count);
            if left < 0 {
                return Err(Error::Bitstream("over-subscribed huffman code".into()));
            }
        }
        let mut offsets = [0u16; 16];
        for len in 1..15 {
            offsets[len + 1] = offsets[len] + counts[len];
        }
        let assigned: usize = (1..16).map(|l| usize::from(counts[l])).sum();
        let mut symbols = vec![0u16; assigned];
        for (sym, &len) in lengths.iter().enumerate() {
            if len != 0 {
                symbols[usize::from(offsets[usize::from(len)])] = sym as u16;
                offsets[usize::from(len)] += 1;
            }
        }
        Ok(Huffman { counts, symbols })
    }

    fn decode(&self, r: &mut BitReader) -> Result<u16> {
        let mut code: u32 = 0;
        let mut first: u32 = 0;
        let mut index: u32 = 0;
        for len in 1..16 {
            code |= r.read_bit()?;
            let count = u32::from(self.counts[len]);
            if code < first + count {
                return Ok(self.symbols[(index + code - first) as usize]);
            }
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        Err(Error::Bitstream("invalid huffman code".into()))
    }
}

fn fixed_trees() -> (Huffman, Huffman) {
    let mut litlen = [0u8; 288];
    litlen[0..144].fill(8);
    litlen[144..256].fill(9);
    litlen[256..280].fill(7);
    litlen[280..288].fill(8);
    let dist = [5u8; 32];
    (
        Huffman::build(&litlen).expect("fixed litlen tree"),
        Huffman::build(&dist).expect("fixed dist tree"),
    )
}

/// Order in which code-length code lengths appear in a dynamic header.
const CLEN_ORDER: [usize; 19] = [16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15];

fn dynamic_trees(r: &mut BitReader) -> Result<(Huffman, Huffman)> {
    let hlit = r.read_bits(5)? as usize + 257;
    let hdist = r.read_bits(5)? as usize + 1;
    let hclen = r.read_bits(4)? as usize + 4;
    if hlit > 286 || hdist > 30 {
        return Err(Error::Bitstream("dynamic header exceeds symbol limits".into()));
    }
    let mut clen_lengths = [0u8; 19];
    for &slot in CLEN_ORDER.iter().take(hclen) {
        clen_lengths[slot] = r.read_bits(3)? as u8;
    }
    let clen_tree = Huffman::build(&clen_lengths)?;

    let mut lengths = vec![0u8; hlit + hdist];
    let mut i = 0;
    while i < lengths.len() {
        let sym = clen_tree.decode(r)?;
        match sym {
            0..=15 => {
                lengths[i] = sym as u8;
                i += 1;
            }
            16 => {
                if i == 0 {
                    return Err(Error::Bitstream("length repeat with no previous code".into()));
                }
                let n = 3 + r.read_bits(2)? as usize;
                let v = lengths[i - 1];
                fill_lengths(&mut lengths, &mut i, n, v)?;
            }
            17 => {
                let n = 3 + r.read_bits(3)? as usize;
                fill_lengths(&mut lengths, &mut i, n, 0)?;
            }
            18 => {
                let n = 11 + r.read_bits(7)? as usize;
                fill_lengths(&mut lengths, &mut i, n, 0)?;
            }
            _ => return Err(Error::Bitstream("invalid code-length symbol".into())),
        }
    }
    Ok((
        Huffman::build(&lengths[..hlit])?,
        Huffman::build(&lengths[hlit..])?,
    ))
}

fn fill_lengths(lengths: &mut [u8], i: &mut usize, n: usize, v: u8) -> Result<()> {
    if *i + n > lengths.len() {
        return Err(Error::Bitstream("code-length repeat overruns header".into()));
    }
    lengths[*i..*i + n].fill(v);
    *i += n;
    Ok(())
}

/// Decompresses a raw deflate stream (any block types).
pub fn inflate(data: &[u8]) -> Result<Vec<u8>> {
    let mut r = BitReader::new(data);
    let mut out = Vec::new();
    loop {
        let bfinal = r.read_bit()?;
        match r.read_bits(2)? {
            0 => {
                r.align_byte();
                let header = r.read_bytes(4)?;
                let len = u16::from_le_bytes([header[0], header[1]]);
                let nlen = u16::from_le_bytes([header[2], header[3]]);
                if len != !nlen {
                    return Err(Error::Bitstream("stored block length check failed".into()));
                }
                out.extend_from_slice(r.read_bytes(usize::from(len))?);
            }
            btype @ (1 | 2) => {
                let (litlen, dist) = if btype == 1 {
                    fixed_trees()
                } else {
                    dynamic_trees(&mut r)?
                };
                inflate_block(&mut r, &litlen, &dist, &mut out)?;
            }
            _ => return Err(Error::Bitstream("reserved deflate block type".into())),
        }
        if bfinal == 1 {
            return Ok(out);
        }
    }
}

fn inflate_block(
    r: &mut BitReader,
    litlen: &Huffman,
    dist: &Huffman,
    out: &mut Vec<u8>,
) -> Result<()> {
    loop {
        let sym = litlen.decode(r)?;
        match sym {
            0..=255 => out.push(sym as u8),
            256 => return Ok(()),
            257..=285 => {
                let idx = usize::from(sym) - 257;
                let len = usize::from(LENGTH_BASE[idx])
                    + r.read_bits(u32::from(LENGTH_EXTRA[idx]))? as usize;
                let dsym = usize::from(dist.decode(r)?);
                if dsym >= DIST_BASE.len() {
                    return Err(Error::Bitstream("invalid distance symbol".into()));
                }
                let d = usize::from(DIST_BASE[dsym])
                    + r.read_bits(u32::from(DIST_EXTRA[dsym]))? as usize;
                if d > out.len() {
                    return Err(Error::Bitstream("match distance before stream start".into()));
                }
                // byte-at-a-time so overlapping matches replicate correctly
                let start = out.len() - d;
                for k in 0..len {
                    let b = out[start + k];
                    out.push(b);
                }
            }
            _ => return Err(Error::Bitstream("invalid literal/length symbol".into())),
        }
    }
}

/// Wraps [`deflate_fixed`] in a zlib container with an Adler-32 trailer.
pub fn zlib_compress(data: &[u8]) -> Vec<u8> {
    let mut out = vec![0x78, 0x01]; // 32K window, fastest-compression hint
    out.extend_from_slice(&deflate_fixed(data));
    out.extend_from_slice(&adler32(data).to_be_bytes());
    out
}

/// Unwraps a zlib container, inflating and verifying the checksum.
pub fn zlib_decompress(data: &[u8]) -> Result<Vec<u8>> {
    if data.len() < 6 {
        return Err(Error::Bitstream("zlib stream shorter than its framing".into()));
    }
    let cmf = data[0];
    let flg = data[1];
    if cmf & 0x0F != 8 || cmf >> 4 > 7 {
        return Err(Error::Bitstream(format!("unsupported zlib method byte {cmf:#04x}")));
    }
    if (u16::from(cmf) * 256 + u16::from(flg)) % 31 != 0 {
        return Err(Error::Bitstream("zlib header check failed".into()));
    }
    if flg & 0x20 != 0 {
        return Err(Error::Bitstream("preset dictionaries are not supported".into()));
    }
    let body = &data[2..data.len() - 4];
    let out = inflate(body)?;
    let expected = u32::from_be_bytes(data[data.len() - 4..].try_into().unwrap());
    let got = adler32(&out);
    if got != expected {
        return Err(Error::Bitstream(format!(
            "adler32 mismatch: stored {expected:#010x}, computed {got:#010x}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adler32_known_vectors() {
        assert_eq!(adler32(b""), 1);
        assert_eq!(adler32(b"abc"), 0x024d_0127);
        assert_eq!(adler32(b"Wikipedia"), 0x11E6_0398);
    }

    #[test]
    fn length_code_boundaries() {
        assert_eq!(length_code(3), (257, 0, 0));
        assert_eq!(length_code(10), (264, 0, 0));
        assert_eq!(length_code(11), (265, 1, 0));
        assert_eq!(length_code(12), (265, 1, 1));
        assert_eq!(length_code(130), (280, 4, 15));
        assert_eq!(length_code(257), (284, 5, 30));
        assert_eq!(length_code(258), (285, 0, 0));
    }

    #[test]
    fn dist_code_boundaries() {
        assert_eq!(dist_code(1), (0, 0, 0));
        assert_eq!(dist_code(4), (3, 0, 0));
        assert_eq!(dist_code(5), (4, 1, 0));
        assert_eq!(dist_code(24577), (29, 13, 0));
        assert_eq!(dist_code(32768), (29, 13, 8191));
    }

    fn pseudo_random_bytes(n: usize, seed: u64) -> Vec<u8> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as u8
            })
            .collect()
    }

    #[test]
    fn round_trip_assorted_payloads() {
        let cases: Vec<Vec<u8>> = vec![
            vec![],
            b"a".to_vec(),
            b"hello hello hello hello".to_vec(),
            vec![0u8; 10_000],
            b"abcabcabcabcabcabcabcabcabcabc".repeat(40),
            pseudo_random_bytes(5000, 7),
            (0..=255u8).cycle().take(4096).collect(),
        ];
        for data in cases {
            let packed = deflate_fixed(&data);
            let back = inflate(&packed).unwrap();
            assert_eq!(back, data, "mismatch for payload of {} bytes", data.len());
        }
    }

    #[test]
    fn repetitive_input_actually_compresses() {
        let data = vec![0u8; 16_384];
        let packed = deflate_fixed(&data);
        assert!(packed.len() < data.len() / 50, "got {} bytes", packed.len());
    }

    #[test]
    fn overlapping_match_replication() {
        // single literal followed by a long run compresses to an
        // overlapping match (dist 1); the decoder must replicate bytewise
        let mut data = vec![7u8];
        data.extend(std::iter::repeat_n(7u8, 300));
        let packed = deflate_fixed(&data);
        assert_eq!(inflate(&packed).unwrap(), data);
    }

    #[test]
    fn stored_block_decodes() {
        // hand-assembled: BFINAL=1 BTYPE=00, then LEN/NLEN + payload
        let payload = b"stored!";
        let mut raw = vec![0x01];
        raw.extend_from_slice(&(payload.len() as u16).to_le_bytes());
        raw.extend_from_slice(&(!(payload.len() as u16)).to_le_bytes());
        raw.extend_from_slice(payload);
        assert_eq!(inflate(&raw).unwrap(), payload);
    }

    #[test]
    fn corrupt_streams_error_instead_of_panicking() {
        // reserved block type
        assert!(inflate(&[0x07]).is_err());
        // truncated fixed block
        let mut packed = deflate_fixed(b"some reasonably long input string");
        packed.truncate(packed.len() / 2);
        assert!(inflate(&packed).is_err());
        // stored block with broken NLEN
        assert!(inflate(&[0x01, 0x03, 0x00, 0x00, 0x00, b'a', b'b', b'c']).is_err());
        // fixed block opening with a match: distance reaches before the
        // start of the output (bits assembled by hand)
        let mut w = BitWriter::new();
        w.write_bits(1, 1);
        w.write_bits(1, 2);
        w.write_code(0x01, 7); // length symbol 257 = match of 3
        w.write_code(0, 5); // distance symbol 0 = distance 1
        assert!(inflate(&w.finish()).is_err());
    }

    #[test]
    fn zlib_round_trip_and_header() {
        let data = b"zlib wrapping test payload, repeated: zlib wrapping test payload";
        let packed = zlib_compress(data);
        assert_eq!(packed[0], 0x78);
        assert_eq!((u16::from(packed[0]) * 256 + u16::from(packed[1])) % 31, 0);
        assert_eq!(zlib_decompress(&packed).unwrap(), data);
    }

    #[test]
    fn zlib_rejects_checksum_damage() {
        let mut packed = zlib_compress(b"payload under test");
        let n = packed.len();
        packed[n - 1] ^= 0xFF;
        assert!(zlib_decompress(&packed).is_err());
    }

    #[test]
    fn huffman_rejects_oversubscribed_tree() {
        // three 1-bit codes cannot exist
        assert!(Huffman::build(&[1, 1, 1]).is_err());
    }
}
