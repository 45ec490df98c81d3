use super::ascii85::{ascii85_decode, ascii85_encode};
use super::message::BLE_MAX_MESSAGE;
use super::CodecError;

/// Number of 16-bit service UUID fields in one advertisement.
pub const UUID_FIELDS: usize = 7;
const UUID_BYTES: usize = UUID_FIELDS * 2;

/// A message laid out as BLE advertisement attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleAdvPayload {
    pub uuids: [u16; UUID_FIELDS],
    pub local_name: String,
}

/// Packs up to 32 bytes: the first 14 go into the UUID fields (big-endian,
/// zero padded), the rest into the ASCII85-encoded local name.
pub fn ble_pack(b: &[u8]) -> Result<BleAdvPayload, CodecError> {
    if b.len() > BLE_MAX_MESSAGE {
        return Err(CodecError::Oversize {
            len: b.len(),
            limit: BLE_MAX_MESSAGE,
        });
    }
    let split = b.len().min(UUID_BYTES);
    let mut padded = [0u8; UUID_BYTES];
    padded[..split].copy_from_slice(&b[..split]);
    let mut uuids = [0u16; UUID_FIELDS];
    for (u, pair) in uuids.iter_mut().zip(padded.chunks_exact(2)) {
        *u = u16::from_be_bytes([pair[0], pair[1]]);
    }
    Ok(BleAdvPayload {
        uuids,
        local_name: ascii85_encode(&b[split..]),
    })
}

pub fn ble_unpack(p: &BleAdvPayload) -> Result<Vec<u8>, CodecError> {
    let mut out: Vec<u8> = p.uuids.iter().flat_map(|u| u.to_be_bytes()).collect();
    out.extend(ascii85_decode(&p.local_name)?);
    Ok(out)
}
