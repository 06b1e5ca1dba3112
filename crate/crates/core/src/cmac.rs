//! AES-128-CMAC (NIST SP 800-38B / RFC 4493) over the `aes` block cipher.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;

pub const BLOCK: usize = 16;

const RB: u8 = 0x87;

#[derive(Clone)]
pub struct Cmac {
    cipher: Aes128,
    k1: [u8; BLOCK],
    k2: [u8; BLOCK],
}

fn dbl(block: &[u8; BLOCK]) -> [u8; BLOCK] {
    let mut out = [0u8; BLOCK];
    let mut carry = 0u8;
    for i in (0..BLOCK).rev() {
        out[i] = (block[i] << 1) | carry;
        carry = block[i] >> 7;
    }
    if carry == 1 {
        out[BLOCK - 1] ^= RB;
    }
    out
}

impl Cmac {
    pub fn new(key: &[u8; 16]) -> Self {
        let cipher = Aes128::new(GenericArray::from_slice(key));
        let mut l = GenericArray::clone_from_slice(&[0u8; BLOCK]);
        cipher.encrypt_block(&mut l);
        let l: [u8; BLOCK] = l.into();
        let k1 = dbl(&l);
        let k2 = dbl(&k1);
        Self { cipher, k1, k2 }
    }

    fn encrypt(&self, block: &mut [u8; BLOCK]) {
        self.cipher
            .encrypt_block(GenericArray::from_mut_slice(block.as_mut_slice()));
    }

    /// Tag over the concatenation of `parts`, without materializing it.
    pub fn tag_parts(&self, parts: &[&[u8]]) -> [u8; BLOCK] {
        let total: usize = parts.iter().map(|p| p.len()).sum();
        // Number of full blocks processed before the final one.
        let leading = if total == 0 { 0 } else { (total - 1) / BLOCK };
        let last_len = total - leading * BLOCK;

        let mut state = [0u8; BLOCK];
        let mut pending = [0u8; BLOCK];
        let mut fill = 0usize;
        let mut emitted = 0usize;

        for &b in parts.iter().flat_map(|p| p.iter()) {
            if emitted < leading {
                pending[fill] = b;
                fill += 1;
                if fill == BLOCK {
                    for (s, p) in state.iter_mut().zip(pending.iter()) {
                        *s ^= p;
                    }
                    self.encrypt(&mut state);
                    emitted += 1;
                    fill = 0;
                }
            } else {
                pending[fill] = b;
                fill += 1;
            }
        }

        let subkey = if last_len == BLOCK {
            &self.k1
        } else {
            pending[last_len] = 0x80;
            for p in pending.iter_mut().skip(last_len + 1) {
                *p = 0;
            }
            &self.k2
        };
        for i in 0..BLOCK {
            state[i] ^= pending[i] ^ subkey[i];
        }
        self.encrypt(&mut state);
        state
    }

    pub fn tag(&self, message: &[u8]) -> [u8; BLOCK] {
        self.tag_parts(&[message])
    }
}
