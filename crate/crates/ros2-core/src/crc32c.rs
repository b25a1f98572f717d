//! CRC32C (Castagnoli): polynomial 0x1EDC6F41, reflected, init 0xFFFFFFFF,
//! final xor 0xFFFFFFFF. This is the end-to-end checksum carried on every
//! extent, every bulk transfer, and every shim reply.

/// Reflected form of the Castagnoli polynomial.
const POLY: u32 = 0x82F63B78;

const fn make_tables() -> [[u32; 256]; 8] {
    let mut t = [[0u32; 256]; 8];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut j = 0;
        while j < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ POLY } else { crc >> 1 };
            j += 1;
        }
        t[0][i] = crc;
        i += 1;
    }
    let mut k = 1;
    while k < 8 {
        let mut i = 0;
        while i < 256 {
            let prev = t[k - 1][i];
            t[k][i] = (prev >> 8) ^ t[0][(prev & 0xFF) as usize];
            i += 1;
        }
        k += 1;
    }
    t
}

static TABLES: [[u32; 256]; 8] = make_tables();

/// CRC32C of `data`.
pub fn crc32c(data: &[u8]) -> u32 {
    crc32c_append(0, data)
}

/// Extend a previously computed CRC with more bytes, as if the streams were
/// concatenated. `crc32c_append(crc32c(a), b) == crc32c(a ++ b)`.
pub fn crc32c_append(crc: u32, data: &[u8]) -> u32 {
    let mut state = !crc;
    let mut rest = data;
    // slice-by-8
    while rest.len() >= 8 {
        let low = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) ^ state;
        let high = u32::from_le_bytes([rest[4], rest[5], rest[6], rest[7]]);
        state = TABLES[7][(low & 0xFF) as usize]
            ^ TABLES[6][((low >> 8) & 0xFF) as usize]
            ^ TABLES[5][((low >> 16) & 0xFF) as usize]
            ^ TABLES[4][(low >> 24) as usize]
            ^ TABLES[3][(high & 0xFF) as usize]
            ^ TABLES[2][((high >> 8) & 0xFF) as usize]
            ^ TABLES[1][((high >> 16) & 0xFF) as usize]
            ^ TABLES[0][(high >> 24) as usize];
        rest = &rest[8..];
    }
    for &b in rest {
        state = (state >> 8) ^ TABLES[0][((state ^ b as u32) & 0xFF) as usize];
    }
    !state
}

fn gf2_matrix_times(mat: &[u32; 32], mut vec: u32) -> u32 {
    let mut sum = 0;
    let mut i = 0;
    while vec != 0 {
        if vec & 1 != 0 {
            sum ^= mat[i];
        }
        vec >>= 1;
        i += 1;
    }
    sum
}

fn gf2_matrix_square(square: &mut [u32; 32], mat: &[u32; 32]) {
    for n in 0..32 {
        square[n] = gf2_matrix_times(mat, mat[n]);
    }
}

/// Combine two independent CRCs: given `crc_a = crc32c(a)`, `crc_b = crc32c(b)`
/// and `len_b = b.len()`, returns `crc32c(a ++ b)` without touching the data.
pub fn crc32c_combine(crc_a: u32, crc_b: u32, len_b: u64) -> u32 {
    if len_b == 0 {
        return crc_a;
    }
    let mut even = [0u32; 32];
    let mut odd = [0u32; 32];

    // operator for one zero bit
    odd[0] = POLY;
    let mut row = 1u32;
    for item in odd.iter_mut().skip(1) {
        *item = row;
        row <<= 1;
    }
    // one zero byte
    gf2_matrix_square(&mut even, &odd);
    gf2_matrix_square(&mut odd, &even);

    let mut crc = crc_a;
    let mut len = len_b;
    loop {
        gf2_matrix_square(&mut even, &odd);
        if len & 1 != 0 {
            crc = gf2_matrix_times(&even, crc);
        }
        len >>= 1;
        if len == 0 {
            break;
        }
        gf2_matrix_square(&mut odd, &even);
        if len & 1 != 0 {
            crc = gf2_matrix_times(&odd, crc);
        }
        len >>= 1;
        if len == 0 {
            break;
        }
    }
    crc ^ crc_b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;
    use alloc::vec::Vec;

    /// Independent bit-at-a-time reference, kept deliberately naive so the
    /// table implementation is checked against first principles.
    fn crc32c_bitwise(data: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in data {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 { (crc >> 1) ^ POLY } else { crc >> 1 };
            }
        }
        !crc
    }

    #[test]
    fn empty_input_is_zero() {
        assert_eq!(crc32c(b""), 0x0000_0000);
    }

    #[test]
    fn check_vector_123456789() {
        // Reference value computed by the bitwise oracle, then frozen.
        assert_eq!(crc32c_bitwise(b"123456789"), 0xE306_9283);
        assert_eq!(crc32c(b"123456789"), 0xE306_9283);
    }

    #[test]
    fn table_matches_bitwise_on_random_input() {
        let mut rng = SplitMix64::new(0xC5C5_0001);
        for len in [0usize, 1, 3, 7, 8, 9, 63, 64, 65, 1000, 4096] {
            let data: Vec<u8> = (0..len).map(|_| rng.next_u64() as u8).collect();
            assert_eq!(crc32c(&data), crc32c_bitwise(&data), "len={}", len);
        }
    }

    #[test]
    fn append_equals_whole() {
        let mut rng = SplitMix64::new(0xC5C5_0002);
        let data: Vec<u8> = (0..10_000).map(|_| rng.next_u64() as u8).collect();
        for split in [0usize, 1, 9, 4096, 9999, 10_000] {
            let (a, b) = data.split_at(split);
            assert_eq!(crc32c_append(crc32c(a), b), crc32c(&data));
        }
    }

    #[test]
    fn combine_matches_direct() {
        let mut rng = SplitMix64::new(0xC5C5_0003);
        for _ in 0..50 {
            let la = (rng.next_u64() % 3000) as usize;
            let lb = (rng.next_u64() % 3000) as usize;
            let a: Vec<u8> = (0..la).map(|_| rng.next_u64() as u8).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.next_u64() as u8).collect();
            let mut whole = a.clone();
            whole.extend_from_slice(&b);
            assert_eq!(
                crc32c_combine(crc32c(&a), crc32c(&b), lb as u64),
                crc32c(&whole),
                "la={} lb={}",
                la,
                lb
            );
        }
    }

    #[test]
    fn combine_zero_length_is_identity() {
        assert_eq!(crc32c_combine(0x1234_5678, 0, 0), 0x1234_5678);
    }

    #[test]
    fn four_kib_of_zeros() {
        let zeros = vec![0u8; 4096];
        // Frozen from the bitwise oracle.
        assert_eq!(crc32c_bitwise(&zeros), crc32c(&zeros));
        assert_eq!(crc32c(&zeros), 0x98F9_4189);
    }

    #[test]
    fn single_bit_flips_always_detected() {
        let mut data = vec![0xA5u8; 512];
        let clean = crc32c(&data);
        for byte in 0..data.len() {
            for bit in 0..8 {
                data[byte] ^= 1 << bit;
                assert_ne!(crc32c(&data), clean, "flip at {}:{}", byte, bit);
                data[byte] ^= 1 << bit;
            }
        }
    }
}
