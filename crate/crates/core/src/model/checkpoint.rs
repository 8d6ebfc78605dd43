//! Binary checkpoint format. Layout, all integers little-endian:
//!
//! ```text
//! offset 0   magic "CRSPEDGE" (8 bytes)
//! offset 8   u32 version = 1
//! offset 12  payload:
//!              u32 stages, u32 in_channels, u32 side_groups, u64 seed,
//!              u32 stage_channels[stages],
//!              u32 param_count,
//!              then per parameter: u32 name_len, name bytes,
//!                u32 dims[4], f64 values[product(dims)]
//! trailer    u32 crc32 of the payload bytes
//! ```
//!
//! Only parameter values are stored; loading a checkpoint starts with fresh
//! optimizer state.

use std::path::Path;

use crate::error::{Error, Result};

use super::{Network, NetworkConfig};

const MAGIC: &[u8; 8] = b"CRSPEDGE";
const VERSION: u32 = 1;

/// CRC-32 (IEEE, reflected, polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *entry = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

pub fn save_checkpoint(net: &Network) -> Vec<u8> {
    let cfg = net.config();
    let mut payload = Vec::new();
    push_u32(&mut payload, cfg.stages as u32);
    push_u32(&mut payload, cfg.in_channels as u32);
    push_u32(&mut payload, cfg.side_groups as u32);
    payload.extend_from_slice(&cfg.seed.to_le_bytes());
    for &c in &cfg.stage_channels {
        push_u32(&mut payload, c as u32);
    }
    let params = net.params();
    push_u32(&mut payload, params.len() as u32);
    for p in params {
        push_u32(&mut payload, p.name.len() as u32);
        payload.extend_from_slice(p.name.as_bytes());
        let (n, c, h, w) = p.values.dims();
        for d in [n, c, h, w] {
            push_u32(&mut payload, d as u32);
        }
        for v in p.values.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(12 + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());
    out
}

pub fn save_checkpoint_file(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, save_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptCheckpoint {
            offset: 0,
            what: "bad magic, not a checkpoint file".into(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::CorruptCheckpoint {
            offset: 8,
            what: "truncated before version field".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CorruptCheckpoint {
            offset: 8,
            what: format!("unsupported version {}", version),
        });
    }
    if bytes.len() < 16 {
        return Err(Error::CorruptCheckpoint {
            offset: bytes.len(),
            what: "truncated before checksum".into(),
        });
    }
    let payload = &bytes[12..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual_crc = crc32(payload);
    if stored_crc != actual_crc {
        return Err(Error::CorruptCheckpoint {
            offset: bytes.len() - 4,
            what: format!(
                "checksum mismatch: stored {:08x}, computed {:08x}",
                stored_crc, actual_crc
            ),
        });
    }

    let mut cur = Cursor {
        bytes: payload,
        pos: 0,
        base: 12,
    };
    let stages = cur.u32()? as usize;
    if stages == 0 || stages > 10 {
        return Err(cur.corrupt(format!("implausible stage count {}", stages)));
    }
    let in_channels = cur.u32()? as usize;
    let side_groups = cur.u32()? as usize;
    let seed = cur.u64()?;
    let mut stage_channels = Vec::with_capacity(stages);
    for _ in 0..stages {
        let c = cur.u32()? as usize;
        if c == 0 || c > 65_536 {
            return Err(cur.corrupt(format!("implausible channel count {}", c)));
        }
        stage_channels.push(c);
    }
    let config = NetworkConfig {
        stages,
        stage_channels,
        side_groups,
        in_channels,
        seed,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint {
            offset: 12,
            what: format!("stored config is invalid: {}", e),
        })?;

    let mut net = Network::new(config)?;
    let param_count = cur.u32()? as usize;
    {
        let mut params = net.params_mut();
        if param_count != params.len() {
            return Err(Error::CorruptCheckpoint {
                offset: 12 + cur.pos - 4,
                what: format!(
                    "checkpoint has {} parameters, network expects {}",
                    param_count,
                    params.len()
                ),
            });
        }
        for p in params.iter_mut() {
            let name_len = cur.u32()? as usize;
            if name_len > 256 {
                return Err(cur.corrupt(format!("implausible name length {}", name_len)));
            }
            let name_at = cur.abs_pos();
            let name_bytes = cur.take(name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| Error::CorruptCheckpoint {
                    offset: name_at,
                    what: "parameter name is not utf-8".into(),
                })?
                .to_string();
            if name != p.name {
                return Err(Error::CorruptCheckpoint {
                    offset: name_at,
                    what: format!("parameter '{}' where '{}' was expected", name, p.name),
                });
            }
            let dims_at = cur.abs_pos();
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = cur.u32()? as usize;
            }
            if (dims[0], dims[1], dims[2], dims[3]) != p.values.dims() {
                return Err(Error::CorruptCheckpoint {
                    offset: dims_at,
                    what: format!(
                        "parameter '{}' has dims {:?}, expected {:?}",
                        name,
                        dims,
                        p.values.dims()
                    ),
                });
            }
            let count = p.values.len();
            for i in 0..count {
                p.values.data_mut()[i] = cur.f64()?;
            }
        }
    }
    if cur.pos != cur.bytes.len() {
        return Err(Error::CorruptCheckpoint {
            offset: cur.abs_pos(),
            what: format!("{} trailing bytes after parameters", cur.bytes.len() - cur.pos),
        });
    }
    if !net.params().iter().all(|p| p.values.all_finite()) {
        return Err(Error::CorruptCheckpoint {
            offset: 12,
            what: "checkpoint contains non-finite parameter values".into(),
        });
    }
    Ok(net)
}

pub fn load_checkpoint_file(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(&bytes)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// File offset of bytes[0], for error reporting.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn abs_pos(&self) -> usize {
        self.base + self.pos
    }

    fn corrupt(&self, what: String) -> Error {
        Error::CorruptCheckpoint {
            offset: self.abs_pos(),
            what,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint {
                offset: self.base + self.bytes.len(),
                what: format!(
                    "unexpected end of file reading {} bytes at offset {}",
                    n,
                    self.abs_pos()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkConfig;
    use crate::tensor::Tensor4;

    fn small_net(seed: u64) -> Network {
        Network::new(NetworkConfig {
            stages: 2,
            stage_channels: vec![4, 4],
            side_groups: 2,
            in_channels: 1,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn crc32_known_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let net = small_net(42);
        let bytes = save_checkpoint(&net);
        let loaded = load_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.config(), net.config());
        for (a, b) in net.params().iter().zip(loaded.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.values.data(), b.values.data());
            // Optimizer state is fresh.
            assert_eq!(b.step, 0);
            assert!(b.adam_m.data().iter().all(|&v| v == 0.0));
        }
        // Serialization is deterministic.
        assert_eq!(save_checkpoint(&loaded), bytes);
    }

    #[test]
    fn forward_identical_after_round_trip() {
        let net = small_net(7);
        let loaded = load_checkpoint(&save_checkpoint(&net)).unwrap();
        let img = Tensor4::filled(1, 1, 8, 8, 0.3);
        assert_eq!(
            net.forward(&img).unwrap().data(),
            loaded.forward(&img).unwrap().data()
        );
    }

    #[test]
    fn bad_magic_is_rejected_at_offset_zero() {
        let mut bytes = save_checkpoint(&small_net(1));
        bytes[0] = b'X';
        match load_checkpoint(&bytes) {
            Err(Error::CorruptCheckpoint { offset: 0, .. }) => {}
            other => panic!("expected corrupt at offset 0, got {:?}", other.err()),
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = save_checkpoint(&small_net(1));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        match load_checkpoint(&bytes) {
            Err(Error::CorruptCheckpoint { what, .. }) => {
                assert!(what.contains("checksum"), "{}", what);
            }
            other => panic!("expected checksum failure, got {:?}", other.err()),
        }
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = save_checkpoint(&small_net(1));
        for cut in [3, 10, 20, bytes.len() - 5] {
            assert!(load_checkpoint(&bytes[..cut]).is_err(), "cut {}", cut);
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = save_checkpoint(&small_net(1));
        bytes[8] = 9;
        match load_checkpoint(&bytes) {
            Err(Error::CorruptCheckpoint { offset: 8, what }) => {
                assert!(what.contains("version"), "{}", what);
            }
            other => panic!("expected version error, got {:?}", other.err()),
        }
    }
}
