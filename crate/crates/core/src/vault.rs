//! XOR-encrypted incident envelopes and the hidden on-device store.
//!
//! Envelope wire format (big-endian multi-byte fields, 41-byte header):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SMR1"
//!      4     1  version (0x01)
//!      5     1  key_id
//!      6    16  session_id
//!     22     8  timestamp_ms
//!     30     1  class (0 Driver, 1 Passenger, 2 Violation)
//!     31     2  confidence_x1e4 (0..=10000)
//!     33     4  plaintext_crc32 (CRC-32, IEEE polynomial, over the
//!               unencrypted payload)
//!     37     4  payload_len
//!     41     n  payload, XOR-encrypted
//! ```
//!
//! Header metadata stays in cleartext for routing; only the payload is
//! encrypted. The CRC gives tamper/wrong-key evidence, not authentication,
//! and the XOR cipher itself carries no security value beyond keeping the
//! raw scene bytes out of casual reach; key_id plus the version byte leave
//! room for a real cipher later.

use crate::detector::DetectionClass;
use crate::session::SessionId;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ENVELOPE_MAGIC: [u8; 4] = *b"SMR1";
pub const ENVELOPE_VERSION: u8 = 0x01;
pub const ENVELOPE_HEADER_LEN: usize = 41;

/// Hidden directory the device-side store writes under.
pub const STORE_DIR_NAME: &str = ".smr_incidents";
pub const STORE_FILE_EXT: &str = "smri";

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("bad envelope magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported envelope version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("key id mismatch: envelope has {envelope}, key is {key}")]
    KeyMismatch { envelope: u8, key: u8 },
    #[error("payload integrity check failed: stored crc {stored:#010x}, computed {computed:#010x}")]
    IntegrityFailure { stored: u32, computed: u32 },
    #[error("malformed envelope: {0}")]
    Malformed(&'static str),
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("encryption key must be at least one byte")]
    EmptyKey,
    #[error("incident store is full ({capacity} incidents)")]
    StorageFull { capacity: usize },
    #[error("incident {0} already stored")]
    DuplicateIncident(String),
    #[error("incident store io: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared secret plus the one-byte id the envelope routes on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptionKey {
    key_bytes: Vec<u8>,
    key_id: u8,
}

impl EncryptionKey {
    pub fn new(key_bytes: Vec<u8>, key_id: u8) -> Result<Self, VaultError> {
        if key_bytes.is_empty() {
            return Err(VaultError::EmptyKey);
        }
        Ok(EncryptionKey { key_bytes, key_id })
    }

    pub fn key_id(&self) -> u8 {
        self.key_id
    }

    pub fn key_bytes(&self) -> &[u8] {
        &self.key_bytes
    }
}

/// XOR each byte with the key, cycling the key; its own inverse.
pub fn xor_transform(data: &[u8], key: &EncryptionKey) -> Vec<u8> {
    let key_bytes = &key.key_bytes;
    data.iter()
        .enumerate()
        .map(|(i, &b)| b ^ key_bytes[i % key_bytes.len()])
        .collect()
}

/// Cleartext metadata carried by an envelope. Confidence is kept at the
/// wire granularity (x 10^-4) so seal/open round trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncidentMeta {
    pub session_id: SessionId,
    pub timestamp_ms: u64,
    pub class: DetectionClass,
    pub confidence_x1e4: u16,
}

impl IncidentMeta {
    /// Build metadata from a raw confidence in [0, 1]; the stored value is
    /// `confidence * 10000` rounded half to even.
    pub fn new(
        session_id: SessionId,
        timestamp_ms: u64,
        class: DetectionClass,
        confidence: f64,
    ) -> Result<Self, VaultError> {
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(VaultError::InvalidConfidence(confidence));
        }
        Ok(IncidentMeta {
            session_id,
            timestamp_ms,
            class,
            confidence_x1e4: (confidence * 10_000.0).round_ties_even() as u16,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence_x1e4 as f64 / 10_000.0
    }
}

/// Parsed header fields; obtainable without the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopeHeader {
    pub version: u8,
    pub key_id: u8,
    pub meta: IncidentMeta,
    pub plaintext_crc32: u32,
    pub payload_len: u32,
}

/// Parse and validate the cleartext header of an envelope.
pub fn peek_header(envelope: &[u8]) -> Result<EnvelopeHeader, VaultError> {
    if envelope.len() < ENVELOPE_HEADER_LEN {
        return Err(VaultError::Malformed("shorter than 41-byte header"));
    }
    let magic: [u8; 4] = envelope[0..4].try_into().unwrap();
    if magic != ENVELOPE_MAGIC {
        return Err(VaultError::BadMagic(magic));
    }
    let version = envelope[4];
    if version != ENVELOPE_VERSION {
        return Err(VaultError::UnsupportedVersion(version));
    }
    let key_id = envelope[5];
    let session_id = SessionId::from_bytes(envelope[6..22].try_into().unwrap());
    let timestamp_ms = u64::from_be_bytes(envelope[22..30].try_into().unwrap());
    let class = DetectionClass::from_code(envelope[30])
        .ok_or(VaultError::Malformed("unknown class byte"))?;
    let confidence_x1e4 = u16::from_be_bytes(envelope[31..33].try_into().unwrap());
    if confidence_x1e4 > 10_000 {
        return Err(VaultError::Malformed("confidence_x1e4 exceeds 10000"));
    }
    let plaintext_crc32 = u32::from_be_bytes(envelope[33..37].try_into().unwrap());
    let payload_len = u32::from_be_bytes(envelope[37..41].try_into().unwrap());
    if envelope.len() != ENVELOPE_HEADER_LEN + payload_len as usize {
        return Err(VaultError::Malformed("length field disagrees with body"));
    }
    Ok(EnvelopeHeader {
        version,
        key_id,
        meta: IncidentMeta {
            session_id,
            timestamp_ms,
            class,
            confidence_x1e4,
        },
        plaintext_crc32,
        payload_len,
    })
}

/// Encrypt a payload and lay out the envelope bytes.
pub fn seal_incident(payload: &[u8], meta: &IncidentMeta, key: &EncryptionKey) -> Vec<u8> {
    let crc = crc32fast::hash(payload);
    let mut out = Vec::with_capacity(ENVELOPE_HEADER_LEN + payload.len());
    out.extend_from_slice(&ENVELOPE_MAGIC);
    out.push(ENVELOPE_VERSION);
    out.push(key.key_id);
    out.extend_from_slice(meta.session_id.as_bytes());
    out.extend_from_slice(&meta.timestamp_ms.to_be_bytes());
    out.push(meta.class.code());
    out.extend_from_slice(&meta.confidence_x1e4.to_be_bytes());
    out.extend_from_slice(&crc.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&xor_transform(payload, key));
    out
}

/// Validate, decrypt, and integrity-check an envelope.
///
/// A CRC mismatch means the payload was tampered with or the key bytes are
/// wrong; both surface as [`VaultError::IntegrityFailure`].
pub fn open_incident(
    envelope: &[u8],
    key: &EncryptionKey,
) -> Result<(IncidentMeta, Vec<u8>), VaultError> {
    let header = peek_header(envelope)?;
    if header.key_id != key.key_id {
        return Err(VaultError::KeyMismatch {
            envelope: header.key_id,
            key: key.key_id,
        });
    }
    let payload = xor_transform(&envelope[ENVELOPE_HEADER_LEN..], key);
    let computed = crc32fast::hash(&payload);
    if computed != header.plaintext_crc32 {
        return Err(VaultError::IntegrityFailure {
            stored: header.plaintext_crc32,
            computed,
        });
    }
    Ok((header.meta, payload))
}

/// Write-once store of sealed envelopes under a dot-prefixed directory.
///
/// Filenames are `<timestamp_ms>_<frame_id>.smri` with both numbers
/// zero-padded to 20 digits so lexicographic file order is chronological
/// order. Writes go through a temp file and rename, so a concurrent reader
/// never observes a partial envelope.
#[derive(Debug)]
pub struct IncidentStore {
    dir: PathBuf,
    capacity: Option<usize>,
}

impl IncidentStore {
    /// Open (creating if needed) the hidden store below `root`.
    pub fn open(root: &Path) -> Result<Self, VaultError> {
        let dir = root.join(STORE_DIR_NAME);
        fs::create_dir_all(&dir)?;
        Ok(IncidentStore {
            dir,
            capacity: None,
        })
    }

    pub fn with_capacity(root: &Path, capacity: usize) -> Result<Self, VaultError> {
        let mut store = Self::open(root)?;
        store.capacity = Some(capacity);
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_name(timestamp_ms: u64, frame_id: u64) -> String {
        format!("{timestamp_ms:020}_{frame_id:020}.{STORE_FILE_EXT}")
    }

    /// Persist one sealed envelope; the timestamp comes from its header.
    pub fn store_incident(&self, envelope: &[u8], frame_id: u64) -> Result<PathBuf, VaultError> {
        let header = peek_header(envelope)?;
        if let Some(capacity) = self.capacity {
            if self.list_incidents()?.len() >= capacity {
                return Err(VaultError::StorageFull { capacity });
            }
        }
        let name = Self::file_name(header.meta.timestamp_ms, frame_id);
        let path = self.dir.join(&name);
        if path.exists() {
            return Err(VaultError::DuplicateIncident(name));
        }
        let tmp = self.dir.join(format!("{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(envelope)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Incident identifiers (file stems) in timestamp order.
    pub fn list_incidents(&self) -> Result<Vec<String>, VaultError> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|entry| {
                let entry = entry.ok()?;
                let name = entry.file_name().into_string().ok()?;
                name.strip_suffix(&format!(".{STORE_FILE_EXT}"))
                    .map(str::to_string)
            })
            .collect();
        names.sort();
        Ok(names)
    }

    pub fn read_incident(&self, id: &str) -> Result<Vec<u8>, VaultError> {
        Ok(fs::read(self.dir.join(format!("{id}.{STORE_FILE_EXT}")))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::TempDir;

    fn key(bytes: &[u8], id: u8) -> EncryptionKey {
        EncryptionKey::new(bytes.to_vec(), id).unwrap()
    }

    fn meta(confidence: f64) -> IncidentMeta {
        IncidentMeta::new(
            SessionId::from_bytes([3; 16]),
            1_234_567,
            DetectionClass::Violation,
            confidence,
        )
        .unwrap()
    }

    /// Bitwise CRC-32 (IEEE, reflected 0xEDB88320) used as an oracle that is
    /// independent of the implementation the envelope path uses.
    fn crc32_reference(data: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &byte in data {
            crc ^= byte as u32;
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb != 0 {
                    crc ^= 0xEDB8_8320;
                }
            }
        }
        !crc
    }

    #[test]
    fn xor_with_zero_key_is_identity() {
        let k = key(&[0x00], 1);
        let data = b"scene bytes".to_vec();
        assert_eq!(xor_transform(&data, &k), data);
    }

    #[test]
    fn xor_with_ff_key_is_complement() {
        let k = key(&[0xFF], 1);
        assert_eq!(xor_transform(&[0x12, 0x34], &k), vec![0xED, 0xCB]);
    }

    #[test]
    fn xor_handles_empty_data() {
        let k = key(&[0xAA, 0xBB], 1);
        assert_eq!(xor_transform(&[], &k), Vec::<u8>::new());
    }

    #[test]
    fn empty_key_is_rejected() {
        assert!(matches!(
            EncryptionKey::new(Vec::new(), 0),
            Err(VaultError::EmptyKey)
        ));
    }

    #[test]
    fn crc_implementation_matches_bitwise_oracle() {
        assert_eq!(crc32fast::hash(b""), crc32_reference(b""));
        assert_eq!(crc32fast::hash(b""), 0x0000_0000);
        for data in [&b"a"[..], b"123456789", b"\x00\x00\x00", b"smr"] {
            assert_eq!(crc32fast::hash(data), crc32_reference(data));
        }
        // well-known check value for "123456789"
        assert_eq!(crc32_reference(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn empty_payload_envelope_is_41_bytes_with_zero_crc() {
        let k = key(&[0x5A, 0xA5], 1);
        let envelope = seal_incident(&[], &meta(0.9), &k);
        assert_eq!(envelope.len(), 41);
        let header = peek_header(&envelope).unwrap();
        assert_eq!(header.payload_len, 0);
        assert_eq!(header.plaintext_crc32, 0x0000_0000);
    }

    #[test]
    fn confidence_rounds_half_even_to_x1e4() {
        assert_eq!(meta(0.9019).confidence_x1e4, 9019);
        assert_eq!(meta(0.0).confidence_x1e4, 0);
        assert_eq!(meta(1.0).confidence_x1e4, 10_000);
        // ties on the f64 product go to the even quantum
        for confidence in [0.00005f64, 0.00015, 0.12345, 0.99995] {
            let expected = (confidence * 10_000.0).round_ties_even() as u16;
            assert_eq!(meta(confidence).confidence_x1e4, expected);
        }
    }

    #[test]
    fn invalid_confidence_is_rejected() {
        assert!(matches!(
            IncidentMeta::new(SessionId::from_bytes([0; 16]), 0, DetectionClass::Driver, 1.2),
            Err(VaultError::InvalidConfidence(_))
        ));
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let k = key(&[0x01, 0x02, 0x03], 0x42);
        let session = SessionId::from_bytes(*b"ABCDEFGHIJKLMNOP");
        let m = IncidentMeta::new(session, 0x0102030405060708, DetectionClass::Passenger, 0.5)
            .unwrap();
        let payload = b"xyz";
        let envelope = seal_incident(payload, &m, &k);

        assert_eq!(&envelope[0..4], b"SMR1");
        assert_eq!(envelope[4], 0x01);
        assert_eq!(envelope[5], 0x42);
        assert_eq!(&envelope[6..22], b"ABCDEFGHIJKLMNOP");
        assert_eq!(
            envelope[22..30],
            [0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08]
        );
        assert_eq!(envelope[30], 1);
        assert_eq!(u16::from_be_bytes(envelope[31..33].try_into().unwrap()), 5000);
        assert_eq!(
            u32::from_be_bytes(envelope[33..37].try_into().unwrap()),
            crc32_reference(payload)
        );
        assert_eq!(u32::from_be_bytes(envelope[37..41].try_into().unwrap()), 3);
        assert_eq!(envelope.len(), 44);
        // payload is encrypted in place after the header
        assert_eq!(envelope[41], b'x' ^ 0x01);
        assert_eq!(envelope[42], b'y' ^ 0x02);
        assert_eq!(envelope[43], b'z' ^ 0x03);
    }

    #[test]
    fn seal_open_round_trip() {
        let k = key(&[0xDE, 0xAD, 0xBE, 0xEF], 7);
        let m = meta(0.9019);
        let payload = b"the captured scene".to_vec();
        let envelope = seal_incident(&payload, &m, &k);
        let (got_meta, got_payload) = open_incident(&envelope, &k).unwrap();
        assert_eq!(got_meta, m);
        assert_eq!(got_payload, payload);
    }

    #[test]
    fn wrong_key_bytes_same_id_fail_integrity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let len = rng.gen_range(1..=16);
            let good: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let mut bad = good.clone();
            // flip one bit so the keys differ for sure
            bad[0] ^= 1 << rng.gen_range(0..8);
            let payload: Vec<u8> = (0..1024).map(|_| rng.gen()).collect();
            let envelope = seal_incident(&payload, &meta(0.5), &key(&good, 1));
            match open_incident(&envelope, &key(&bad, 1)) {
                Err(VaultError::IntegrityFailure { .. }) => {}
                other => panic!("expected IntegrityFailure, got {other:?}"),
            }
        }
    }

    #[test]
    fn corrupted_magic_is_bad_magic() {
        let k = key(&[1], 1);
        let mut envelope = seal_incident(b"p", &meta(0.5), &k);
        envelope[0] ^= 0xFF;
        assert!(matches!(
            open_incident(&envelope, &k),
            Err(VaultError::BadMagic(_))
        ));
    }

    #[test]
    fn unknown_version_and_key_id_are_rejected() {
        let k = key(&[1], 1);
        let mut envelope = seal_incident(b"p", &meta(0.5), &k);
        envelope[4] = 0x02;
        assert!(matches!(
            open_incident(&envelope, &k),
            Err(VaultError::UnsupportedVersion(0x02))
        ));
        envelope[4] = 0x01;
        let other = key(&[1], 2);
        assert!(matches!(
            open_incident(&envelope, &other),
            Err(VaultError::KeyMismatch { envelope: 1, key: 2 })
        ));
    }

    #[test]
    fn truncated_envelope_is_malformed() {
        let k = key(&[1], 1);
        let envelope = seal_incident(b"payload", &meta(0.5), &k);
        assert!(matches!(
            peek_header(&envelope[..40]),
            Err(VaultError::Malformed(_))
        ));
        assert!(matches!(
            peek_header(&envelope[..envelope.len() - 1]),
            Err(VaultError::Malformed(_))
        ));
    }

    #[test]
    fn every_single_bit_flip_in_payload_is_detected() {
        let k = key(&[0x33, 0x77], 1);
        let payload = b"short but fully swept payload".to_vec();
        let envelope = seal_incident(&payload, &meta(0.75), &k);
        for byte in ENVELOPE_HEADER_LEN..envelope.len() {
            for bit in 0..8 {
                let mut tampered = envelope.clone();
                tampered[byte] ^= 1 << bit;
                match open_incident(&tampered, &k) {
                    Err(VaultError::IntegrityFailure { .. }) => {}
                    other => panic!("flip at byte {byte} bit {bit}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn store_lists_in_timestamp_order() {
        let tmp = TempDir::new().unwrap();
        let store = IncidentStore::open(tmp.path()).unwrap();
        let k = key(&[9], 1);
        for (ts, frame_id) in [(100u64, 1u64), (2_000, 2), (30_000, 3)] {
            let m = IncidentMeta::new(
                SessionId::from_bytes([1; 16]),
                ts,
                DetectionClass::Violation,
                0.9,
            )
            .unwrap();
            store
                .store_incident(&seal_incident(b"img", &m, &k), frame_id)
                .unwrap();
        }
        let ids = store.list_incidents().unwrap();
        assert_eq!(ids.len(), 3);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        // zero-padded names keep 2000 before 30000
        assert!(ids[1].starts_with(&format!("{:020}", 2_000u64)));
    }

    #[test]
    fn store_is_write_once() {
        let tmp = TempDir::new().unwrap();
        let store = IncidentStore::open(tmp.path()).unwrap();
        let k = key(&[9], 1);
        let envelope = seal_incident(b"img", &meta(0.9), &k);
        store.store_incident(&envelope, 5).unwrap();
        assert!(matches!(
            store.store_incident(&envelope, 5),
            Err(VaultError::DuplicateIncident(_))
        ));
        assert_eq!(store.list_incidents().unwrap().len(), 1);
    }

    #[test]
    fn store_capacity_limit() {
        let tmp = TempDir::new().unwrap();
        let store = IncidentStore::with_capacity(tmp.path(), 1).unwrap();
        let k = key(&[9], 1);
        store
            .store_incident(&seal_incident(b"a", &meta(0.9), &k), 1)
            .unwrap();
        let m2 = IncidentMeta::new(
            SessionId::from_bytes([3; 16]),
            99,
            DetectionClass::Violation,
            0.9,
        )
        .unwrap();
        assert!(matches!(
            store.store_incident(&seal_incident(b"b", &m2, &k), 2),
            Err(VaultError::StorageFull { capacity: 1 })
        ));
    }

    #[test]
    fn store_round_trips_envelope_bytes() {
        let tmp = TempDir::new().unwrap();
        let store = IncidentStore::open(tmp.path()).unwrap();
        let k = key(&[0x42], 1);
        let envelope = seal_incident(b"frame payload", &meta(0.85), &k);
        store.store_incident(&envelope, 77).unwrap();
        let ids = store.list_incidents().unwrap();
        assert_eq!(store.read_incident(&ids[0]).unwrap(), envelope);
        // stored under the hidden directory
        assert!(store.dir().file_name().unwrap().to_str().unwrap().starts_with('.'));
    }

    proptest! {
        #[test]
        fn prop_xor_involution(
            data in proptest::collection::vec(any::<u8>(), 0..512),
            key_bytes in proptest::collection::vec(any::<u8>(), 1..32),
        ) {
            let k = key(&key_bytes, 0);
            prop_assert_eq!(xor_transform(&xor_transform(&data, &k), &k), data);
        }

        #[test]
        fn prop_seal_open_round_trip(
            payload in proptest::collection::vec(any::<u8>(), 0..2048),
            key_bytes in proptest::collection::vec(any::<u8>(), 1..32),
            key_id in any::<u8>(),
            confidence in 0.0f64..=1.0,
            timestamp in any::<u64>(),
        ) {
            let k = key(&key_bytes, key_id);
            let m = IncidentMeta::new(
                SessionId::from_bytes([9; 16]),
                timestamp,
                DetectionClass::Violation,
                confidence,
            ).unwrap();
            let envelope = seal_incident(&payload, &m, &k);
            prop_assert_eq!(envelope.len(), ENVELOPE_HEADER_LEN + payload.len());
            let (meta, got) = open_incident(&envelope, &k).unwrap();
            prop_assert_eq!(meta, m);
            prop_assert_eq!(got, payload);
        }

        #[test]
        fn prop_crc_matches_reference(data in proptest::collection::vec(any::<u8>(), 0..256)) {
            prop_assert_eq!(crc32fast::hash(&data), crc32_reference(&data));
        }
    }
}
