//! Lossless side-information coding: the entropy-coded hyperlatent, the
//! PNG-packed rate map, and the framed side-link packet that carries both
//! together with the frame's power scale.

pub mod deflate;
pub mod png;
pub mod prior;
pub mod range;

pub use prior::{decode_hyperlatent, encode_hyperlatent, FactorizedPrior, HyperLatent};
pub use range::{range_decode, range_encode, CdfTable, RangeDecoder, RangeEncoder, CDF_TOTAL};

use crate::error::{Error, Result};
use crate::rate::{RateMap, RateSet};

/// Leading bytes of every side-info frame.
pub const SIDE_INFO_MAGIC: [u8; 4] = *b"PVSC";
/// Current wire-format version.
pub const SIDE_INFO_VERSION: u8 = 1;
/// Bytes occupied by the fixed fields (everything except the payloads).
pub const SIDE_INFO_OVERHEAD: usize = 21;

/// One parsed side-link packet.
#[derive(Clone, Debug, PartialEq)]
pub struct SideInfoFrame {
    pub frame_index: u32,
    pub power_scale: f32,
    /// Entropy-coded hyperlatent bytes.
    pub payload_z: Vec<u8>,
    /// PNG-coded rate map bytes.
    pub payload_k: Vec<u8>,
}

impl SideInfoFrame {
    /// Total wire size in bytes.
    pub fn wire_len(&self) -> usize {
        SIDE_INFO_OVERHEAD + self.payload_z.len() + self.payload_k.len()
    }

    /// Total wire size in bits, the quantity charged to the side link.
    pub fn side_bits(&self) -> u64 {
        self.wire_len() as u64 * 8
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        frame_side_info(
            self.frame_index,
            &self.payload_z,
            &self.payload_k,
            self.power_scale,
        )
    }
}

/// Frames one side-link packet, little-endian throughout:
/// `magic | version | frame_index u32 | power_scale f32 | len_z u32 |
/// payload_z | len_k u32 | payload_k`.
pub fn frame_side_info(
    frame_index: u32,
    payload_z: &[u8],
    payload_k: &[u8],
    power_scale: f32,
) -> Result<Vec<u8>> {
    if payload_z.len() > u32::MAX as usize || payload_k.len() > u32::MAX as usize {
        return Err(Error::Bitstream("side-info payload exceeds 2^32 bytes".into()));
    }
    let mut out = Vec::with_capacity(SIDE_INFO_OVERHEAD + payload_z.len() + payload_k.len());
    out.extend_from_slice(&SIDE_INFO_MAGIC);
    out.push(SIDE_INFO_VERSION);
    out.extend_from_slice(&frame_index.to_le_bytes());
    out.extend_from_slice(&power_scale.to_le_bytes());
    out.extend_from_slice(&(payload_z.len() as u32).to_le_bytes());
    out.extend_from_slice(payload_z);
    out.extend_from_slice(&(payload_k.len() as u32).to_le_bytes());
    out.extend_from_slice(payload_k);
    Ok(out)
}

/// Parses a side-link packet; errors name the field that failed.
pub fn parse_side_info(bytes: &[u8]) -> Result<SideInfoFrame> {
    fn field<'a>(bytes: &'a [u8], pos: usize, n: usize, name: &'static str) -> Result<&'a [u8]> {
        bytes.get(pos..pos + n).ok_or(Error::SideInfoParse {
            field: name,
            reason: "truncated",
        })
    }

    let magic = field(bytes, 0, 4, "magic")?;
    if magic != SIDE_INFO_MAGIC {
        return Err(Error::SideInfoParse {
            field: "magic",
            reason: "unexpected value",
        });
    }
    let version = field(bytes, 4, 1, "version")?[0];
    if version != SIDE_INFO_VERSION {
        return Err(Error::SideInfoParse {
            field: "version",
            reason: "unsupported version",
        });
    }
    let frame_index = u32::from_le_bytes(field(bytes, 5, 4, "frame_index")?.try_into().unwrap());
    let power_scale = f32::from_le_bytes(field(bytes, 9, 4, "power_scale")?.try_into().unwrap());
    if !power_scale.is_finite() {
        return Err(Error::SideInfoParse {
            field: "power_scale",
            reason: "not finite",
        });
    }
    let len_z = u32::from_le_bytes(field(bytes, 13, 4, "len_z")?.try_into().unwrap()) as usize;
    let payload_z = field(bytes, 17, len_z, "payload_z")?.to_vec();
    let k_pos = 17 + len_z;
    let len_k = u32::from_le_bytes(field(bytes, k_pos, 4, "len_k")?.try_into().unwrap()) as usize;
    let payload_k = field(bytes, k_pos + 4, len_k, "payload_k")?.to_vec();
    if bytes.len() != k_pos + 4 + len_k {
        return Err(Error::SideInfoParse {
            field: "payload_k",
            reason: "trailing bytes",
        });
    }
    Ok(SideInfoFrame {
        frame_index,
        power_scale,
        payload_z,
        payload_k,
    })
}

/// Packs a rate map's index grid as an 8-bit grayscale PNG.
pub fn encode_rate_map(map: &RateMap) -> Result<Vec<u8>> {
    if map.width() > u32::MAX as usize || map.height() > u32::MAX as usize {
        return Err(Error::Bitstream("rate map dimensions exceed png limits".into()));
    }
    png::encode_gray8(map.indices(), map.width() as u32, map.height() as u32)
}

/// Recovers a rate map from its PNG payload, validating every index
/// against the session's rate set.
pub fn decode_rate_map(bytes: &[u8], rate_set: RateSet) -> Result<RateMap> {
    let (indices, width, height) = png::decode_gray8(bytes)?;
    RateMap::new(indices, height as usize, width as usize, rate_set)
}
