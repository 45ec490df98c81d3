//! Format-preserving byte substitution keyed by a shared password.
//!
//! Each byte is mapped through a key-derived permutation table. Output has
//! exactly the length of the input, so encrypted messages still fit the
//! transport limits. This is obfuscation against casual listeners, not
//! authenticated encryption: identical plaintext bytes map to identical
//! ciphertext bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FpeError {
    #[error("empty key")]
    EmptyKey,
}

/// The shared secret for one tuple space.
#[derive(Clone, PartialEq, Eq)]
pub struct FpeKey(String);

impl FpeKey {
    pub fn new(secret: impl Into<String>) -> Result<Self, FpeError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(FpeError::EmptyKey);
        }
        Ok(FpeKey(secret))
    }
}

impl std::fmt::Debug for FpeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FpeKey(..)")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct FpeTables {
    enc: [u8; 256],
    dec: [u8; 256],
}

impl std::fmt::Debug for FpeTables {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FpeTables").finish_non_exhaustive()
    }
}

impl FpeTables {
    pub fn enc(&self) -> &[u8; 256] {
        &self.enc
    }

    pub fn dec(&self) -> &[u8; 256] {
        &self.dec
    }

    pub fn from_secret(secret: &str) -> Result<Self, FpeError> {
        Ok(derive_tables(&FpeKey::new(secret)?))
    }

    pub fn encrypt(&self, b: &[u8]) -> Vec<u8> {
        fpe_encrypt(self, b)
    }

    pub fn decrypt(&self, b: &[u8]) -> Vec<u8> {
        fpe_decrypt(self, b)
    }
}

/// SHA-256 of the key seeds a ChaCha20 stream that Fisher-Yates shuffles
/// the identity table.
pub fn derive_tables(key: &FpeKey) -> FpeTables {
    let seed: [u8; 32] = Sha256::digest(key.0.as_bytes()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut enc: [u8; 256] = std::array::from_fn(|i| i as u8);
    for i in (1..enc.len()).rev() {
        let j = rng.random_range(0..=i);
        enc.swap(i, j);
    }
    let mut dec = [0u8; 256];
    for (plain, &cipher) in enc.iter().enumerate() {
        dec[cipher as usize] = plain as u8;
    }
    FpeTables { enc, dec }
}

pub fn fpe_encrypt(t: &FpeTables, b: &[u8]) -> Vec<u8> {
    b.iter().map(|&x| t.enc[x as usize]).collect()
}

pub fn fpe_decrypt(t: &FpeTables, b: &[u8]) -> Vec<u8> {
    b.iter().map(|&x| t.dec[x as usize]).collect()
}
