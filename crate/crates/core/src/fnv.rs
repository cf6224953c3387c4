//! 64-bit FNV-1a, used for cache keys, record ids, file checksums and the mock LLM.

pub const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a hasher.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a64(u64);

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self(OFFSET_BASIS)
    }
}

impl Fnv1a64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    Fnv1a64::new().update(bytes).finish()
}

/// Lowercase, zero-padded 16-digit hex.
pub fn hex64(value: u64) -> String {
    format!("{value:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand-rolled reference: xor then multiply, per byte, no shortcuts.
    fn reference(bytes: &[u8]) -> u64 {
        let mut h: u128 = 14695981039346656037;
        for &b in bytes {
            h ^= b as u128;
            h = (h * 1099511628211) % (1u128 << 64);
        }
        h as u64
    }

    #[test]
    fn empty_input_is_offset_basis() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(hex64(fnv1a64(b"")), "cbf29ce484222325");
    }

    #[test]
    fn single_a_matches_published_vector() {
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(reference(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn matches_reference_and_is_incremental() {
        let text = b"foobar housing assistance";
        assert_eq!(fnv1a64(text), reference(text));
        let mut h = Fnv1a64::new();
        h.update(b"foo").update(b"bar housing assistance");
        assert_eq!(h.finish(), fnv1a64(text));
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
