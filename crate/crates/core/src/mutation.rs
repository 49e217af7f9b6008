//! Havoc-style mutation operators with per-combination credit tables.
//!
//! Each objective combination keeps its own counts of how often an
//! operator, and a relative byte position (decile of the input), produced
//! a mutant that raised one of the combination's objectives. Operators and
//! positions are drawn proportionally to `count + 1`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mpmab::CombinationId;

pub const MAX_INPUT_LEN: usize = 4096;
pub const NUM_DECILES: usize = 10;
const MAX_BLOCK: usize = 32;
const ARITH_MAX: i32 = 35;

const INTERESTING_8: [i8; 9] = [-128, -1, 0, 1, 16, 32, 64, 100, 127];
const INTERESTING_16: [i16; 10] = [-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767];
const INTERESTING_32: [i32; 8] = [
    -2147483648,
    -100663046,
    -32769,
    32768,
    65535,
    65536,
    100663045,
    2147483647,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorId {
    BitFlip1,
    BitFlip2,
    BitFlip4,
    ByteFlip1,
    ByteFlip2,
    ByteFlip4,
    Arith8,
    Arith16,
    Arith32,
    InterestingValue,
    RandomByte,
    DeleteBlock,
    InsertBlock,
    OverwriteBlock,
    Splice,
}

impl OperatorId {
    pub const ALL: [OperatorId; 15] = [
        OperatorId::BitFlip1,
        OperatorId::BitFlip2,
        OperatorId::BitFlip4,
        OperatorId::ByteFlip1,
        OperatorId::ByteFlip2,
        OperatorId::ByteFlip4,
        OperatorId::Arith8,
        OperatorId::Arith16,
        OperatorId::Arith32,
        OperatorId::InterestingValue,
        OperatorId::RandomByte,
        OperatorId::DeleteBlock,
        OperatorId::InsertBlock,
        OperatorId::OverwriteBlock,
        OperatorId::Splice,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorId::BitFlip1 => "bitflip1",
            OperatorId::BitFlip2 => "bitflip2",
            OperatorId::BitFlip4 => "bitflip4",
            OperatorId::ByteFlip1 => "byteflip1",
            OperatorId::ByteFlip2 => "byteflip2",
            OperatorId::ByteFlip4 => "byteflip4",
            OperatorId::Arith8 => "arith8",
            OperatorId::Arith16 => "arith16",
            OperatorId::Arith32 => "arith32",
            OperatorId::InterestingValue => "interesting",
            OperatorId::RandomByte => "random_byte",
            OperatorId::DeleteBlock => "delete_block",
            OperatorId::InsertBlock => "insert_block",
            OperatorId::OverwriteBlock => "overwrite_block",
            OperatorId::Splice => "splice",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credits {
    pub operators: [u64; 15],
    pub positions: [u64; NUM_DECILES],
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditTable {
    by_mask: BTreeMap<u32, Credits>,
}

impl CreditTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn credits(&self, combo: CombinationId) -> Credits {
        self.by_mask.get(&combo.mask()).cloned().unwrap_or_default()
    }

    pub fn credits_mut(&mut self, combo: CombinationId) -> &mut Credits {
        self.by_mask.entry(combo.mask()).or_default()
    }

    pub fn masks(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_mask.keys().copied()
    }

    /// Named dump for reports: `{mask: {operators: {name: n}, positions: [..]}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        for (mask, c) in &self.by_mask {
            let ops: serde_json::Map<_, _> = OperatorId::ALL
                .iter()
                .map(|op| (op.name().to_string(), c.operators[op.index()].into()))
                .collect();
            out.insert(
                mask.to_string(),
                serde_json::json!({ "operators": ops, "positions": c.positions }),
            );
        }
        serde_json::Value::Object(out)
    }
}

fn weighted_index(counts: &[u64], rng: &mut impl Rng) -> usize {
    let total: u64 = counts.iter().map(|c| c + 1).sum();
    let mut x = rng.gen_range(0..total);
    for (i, c) in counts.iter().enumerate() {
        let w = c + 1;
        if x < w {
            return i;
        }
        x -= w;
    }
    counts.len() - 1
}

pub fn pick_operator(table: &CreditTable, combo: CombinationId, rng: &mut impl Rng) -> OperatorId {
    let credits = table.credits(combo);
    OperatorId::ALL[weighted_index(&credits.operators, rng)]
}

/// Decile bucket of a byte offset within an input of `len` bytes.
pub fn decile(offset: usize, len: usize) -> usize {
    (offset * NUM_DECILES / len.max(1)).min(NUM_DECILES - 1)
}

/// Offsets whose decile is `bucket`; empty for short inputs.
pub fn decile_range(bucket: usize, len: usize) -> std::ops::Range<usize> {
    let start = (bucket * len).div_ceil(NUM_DECILES);
    let end = ((bucket + 1) * len).div_ceil(NUM_DECILES);
    start..end.min(len)
}

pub fn pick_position(
    table: &CreditTable,
    combo: CombinationId,
    len: usize,
    rng: &mut impl Rng,
) -> usize {
    if len <= 1 {
        return 0;
    }
    let credits = table.credits(combo);
    let occupied: Vec<usize> = (0..NUM_DECILES)
        .filter(|&b| !decile_range(b, len).is_empty())
        .collect();
    let counts: Vec<u64> = occupied.iter().map(|&b| credits.positions[b]).collect();
    let bucket = occupied[weighted_index(&counts, rng)];
    let range = decile_range(bucket, len);
    rng.gen_range(range)
}

/// Wrapping add of `delta` to the `width`-byte integer at `offset`.
pub fn add_wrapping(bytes: &mut [u8], offset: usize, width: usize, delta: i32, big_endian: bool) {
    let window = &mut bytes[offset..offset + width];
    let mut buf = [0u8; 4];
    if big_endian {
        buf[4 - width..].copy_from_slice(window);
        let v = u32::from_be_bytes(buf).wrapping_add(delta as u32);
        window.copy_from_slice(&v.to_be_bytes()[4 - width..]);
    } else {
        buf[..width].copy_from_slice(window);
        let v = u32::from_le_bytes(buf).wrapping_add(delta as u32);
        window.copy_from_slice(&v.to_le_bytes()[..width]);
    }
}

/// Fits a `width`-byte window into `len`, returning (offset, width).
fn fit(offset: usize, width: usize, len: usize) -> (usize, usize) {
    let width = width.min(len);
    (offset.min(len - width), width)
}

fn flip_bits(bytes: &mut [u8], first_bit: usize, count: usize) {
    let total = bytes.len() * 8;
    let start = first_bit.min(total.saturating_sub(count));
    for bit in start..(start + count).min(total) {
        bytes[bit / 8] ^= 0x80 >> (bit % 8);
    }
}

fn random_block(bytes: &[u8], len: usize, rng: &mut impl Rng) -> Vec<u8> {
    if rng.gen_bool(0.5) && bytes.len() >= len {
        let from = rng.gen_range(0..=bytes.len() - len);
        bytes[from..from + len].to_vec()
    } else {
        vec![rng.gen(); len]
    }
}

/// Returns a mutated copy of `input`; the result is never empty.
/// `donor` feeds [`OperatorId::Splice`]; without one the input splices
/// with itself.
pub fn apply_operator(
    op: OperatorId,
    input: &[u8],
    offset: usize,
    donor: Option<&[u8]>,
    rng: &mut impl Rng,
) -> Vec<u8> {
    let mut out = input.to_vec();
    if out.is_empty() {
        out.push(0);
        return out;
    }
    let len = out.len();
    let offset = offset.min(len - 1);
    match op {
        OperatorId::BitFlip1 => flip_bits(&mut out, offset * 8 + rng.gen_range(0..8), 1),
        OperatorId::BitFlip2 => flip_bits(&mut out, offset * 8 + rng.gen_range(0..8), 2),
        OperatorId::BitFlip4 => flip_bits(&mut out, offset * 8 + rng.gen_range(0..8), 4),
        OperatorId::ByteFlip1 | OperatorId::ByteFlip2 | OperatorId::ByteFlip4 => {
            let w = match op {
                OperatorId::ByteFlip1 => 1,
                OperatorId::ByteFlip2 => 2,
                _ => 4,
            };
            let (o, w) = fit(offset, w, len);
            out[o..o + w].iter_mut().for_each(|b| *b ^= 0xFF);
        }
        OperatorId::Arith8 | OperatorId::Arith16 | OperatorId::Arith32 => {
            let w = match op {
                OperatorId::Arith8 => 1,
                OperatorId::Arith16 => 2,
                _ => 4,
            };
            let w = if len >= w { w } else { 1 };
            let (o, w) = fit(offset, w, len);
            let mut delta = rng.gen_range(1..=ARITH_MAX);
            if rng.gen_bool(0.5) {
                delta = -delta;
            }
            add_wrapping(&mut out, o, w, delta, rng.gen_bool(0.5));
        }
        OperatorId::InterestingValue => {
            let choices: &[usize] = match len {
                1 => &[1],
                2 | 3 => &[1, 2],
                _ => &[1, 2, 4],
            };
            let w = choices[rng.gen_range(0..choices.len())];
            let (o, _) = fit(offset, w, len);
            let be = rng.gen_bool(0.5);
            match w {
                1 => out[o] = INTERESTING_8[rng.gen_range(0..INTERESTING_8.len())] as u8,
                2 => {
                    let v = INTERESTING_16[rng.gen_range(0..INTERESTING_16.len())];
                    let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
                    out[o..o + 2].copy_from_slice(&b);
                }
                _ => {
                    let v = INTERESTING_32[rng.gen_range(0..INTERESTING_32.len())];
                    let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
                    out[o..o + 4].copy_from_slice(&b);
                }
            }
        }
        OperatorId::RandomByte => out[offset] ^= rng.gen_range(1..=255u8),
        OperatorId::DeleteBlock => {
            if len > 1 {
                let n = rng.gen_range(1..=(len - 1).min(MAX_BLOCK));
                let o = offset.min(len - n);
                out.drain(o..o + n);
            }
        }
        OperatorId::InsertBlock => {
            if len < MAX_INPUT_LEN {
                let n = rng.gen_range(1..=(MAX_INPUT_LEN - len).min(MAX_BLOCK));
                let block = random_block(input, n, rng);
                let at = offset.min(len);
                out.splice(at..at, block);
            }
        }
        OperatorId::OverwriteBlock => {
            let n = rng.gen_range(1..=(len - offset).min(MAX_BLOCK));
            let block = random_block(input, n, rng);
            out[offset..offset + n].copy_from_slice(&block);
        }
        OperatorId::Splice => {
            let donor = donor.filter(|d| !d.is_empty()).unwrap_or(input);
            let keep = offset.max(1);
            let from = rng.gen_range(0..donor.len());
            out.truncate(keep);
            out.extend_from_slice(&donor[from..]);
            out.truncate(MAX_INPUT_LEN);
        }
    }
    out
}

/// Two-point crossover: swaps `[start, end)` between copies of `a` and `b`.
/// Requires `start <= end <= min(len)`.
pub fn crossover_at(a: &[u8], b: &[u8], start: usize, end: usize) -> (Vec<u8>, Vec<u8>) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x[start..end].swap_with_slice(&mut y[start..end]);
    (x, y)
}

/// Both children of a random two-point crossover over the common length.
pub fn crossover(a: &[u8], b: &[u8], rng: &mut impl Rng) -> (Vec<u8>, Vec<u8>) {
    let m = a.len().min(b.len());
    let start = rng.gen_range(0..=m);
    let end = rng.gen_range(start..=m);
    crossover_at(a, b, start, end)
}

/// Credits `op` and the position bucket for `combo` iff the mutant improved
/// on its parent.
pub fn credit_update(
    table: &mut CreditTable,
    combo: CombinationId,
    op: OperatorId,
    bucket: usize,
    improved: bool,
) {
    if !improved {
        return;
    }
    let c = table.credits_mut(combo);
    c.operators[op.index()] += 1;
    c.positions[bucket.min(NUM_DECILES - 1)] += 1;
}

/// One applied mutation step, kept for credit assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub op: OperatorId,
    pub bucket: usize,
}

/// Stacks 1, 2 or 4 credit-weighted mutations.
pub fn havoc(
    table: &CreditTable,
    combo: CombinationId,
    input: &[u8],
    donor: Option<&[u8]>,
    rng: &mut impl Rng,
) -> (Vec<u8>, Vec<Step>) {
    let rounds = 1usize << rng.gen_range(0..3);
    let mut cur = input.to_vec();
    let mut steps = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let op = pick_operator(table, combo, rng);
        let pos = pick_position(table, combo, cur.len(), rng);
        steps.push(Step {
            op,
            bucket: decile(pos, cur.len()),
        });
        cur = apply_operator(op, &cur, pos, donor, rng);
    }
    (cur, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn combo(mask: u32) -> CombinationId {
        CombinationId::new(mask, 3).unwrap()
    }

    const DRAWS: usize = 100_000;

    #[test]
    fn zero_credits_pick_uniformly() {
        let t = CreditTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hist = [0usize; 15];
        for _ in 0..DRAWS {
            hist[pick_operator(&t, combo(1), &mut rng).index()] += 1;
        }
        for h in hist {
            assert!((h as f64 / DRAWS as f64 - 1.0 / 15.0).abs() < 0.01);
        }
    }

    #[test]
    fn equal_credits_pick_uniformly() {
        let mut t = CreditTable::new();
        t.credits_mut(combo(1)).operators = [7; 15];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut hist = [0usize; 15];
        for _ in 0..DRAWS {
            hist[pick_operator(&t, combo(1), &mut rng).index()] += 1;
        }
        for h in hist {
            assert!((h as f64 / DRAWS as f64 - 1.0 / 15.0).abs() < 0.01);
        }
    }

    #[test]
    fn credited_operator_gets_smoothed_share() {
        let mut t = CreditTable::new();
        t.credits_mut(combo(2)).operators[OperatorId::Arith16.index()] = 14;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let hits = (0..DRAWS)
            .filter(|_| pick_operator(&t, combo(2), &mut rng) == OperatorId::Arith16)
            .count();
        let p = hits as f64 / DRAWS as f64;
        assert!((p - 15.0 / 29.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn credits_are_per_combination() {
        let mut t = CreditTable::new();
        let before = t.credits(combo(5));
        credit_update(&mut t, combo(3), OperatorId::Splice, 4, true);
        assert_eq!(t.credits(combo(5)), before);
        assert_eq!(t.credits(combo(3)).operators[OperatorId::Splice.index()], 1);
        assert_eq!(t.credits(combo(3)).positions[4], 1);
    }

    #[test]
    fn credit_update_only_on_improvement() {
        let mut t = CreditTable::new();
        credit_update(&mut t, combo(1), OperatorId::BitFlip1, 0, false);
        assert_eq!(t, CreditTable::new());
        credit_update(&mut t, combo(1), OperatorId::BitFlip1, 0, true);
        let c = t.credits(combo(1));
        assert_eq!(c.operators.iter().sum::<u64>(), 1);
        assert_eq!(c.positions.iter().sum::<u64>(), 1);
    }

    #[test]
    fn replayed_updates_match_improvement_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut t = CreditTable::new();
        let mut improvements = 0u64;
        let mut per_op = [0u64; 15];
        for _ in 0..1000 {
            let op = OperatorId::ALL[rng.gen_range(0..15)];
            let bucket = rng.gen_range(0..NUM_DECILES);
            let improved = rng.gen_bool(0.3);
            if improved {
                improvements += 1;
                per_op[op.index()] += 1;
            }
            credit_update(&mut t, combo(7), op, bucket, improved);
        }
        let c = t.credits(combo(7));
        assert_eq!(c.operators.iter().sum::<u64>(), improvements);
        assert_eq!(c.positions.iter().sum::<u64>(), improvements);
        assert_eq!(c.operators, per_op);
    }

    #[test]
    fn single_byte_position_is_zero() {
        let t = CreditTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(pick_position(&t, combo(1), 1, &mut rng), 0);
        }
    }

    #[test]
    fn deciles_partition_offsets() {
        for len in 1..60 {
            let mut seen = vec![0; len];
            for b in 0..NUM_DECILES {
                for o in decile_range(b, len) {
                    assert_eq!(decile(o, len), b);
                    seen[o] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "len {len}");
        }
    }

    #[test]
    fn uniform_positions_over_occupied_deciles() {
        let t = CreditTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = 5;
        let occupied = (0..NUM_DECILES)
            .filter(|&b| !decile_range(b, len).is_empty())
            .count();
        let mut hist = [0usize; NUM_DECILES];
        for _ in 0..DRAWS {
            hist[decile(pick_position(&t, combo(1), len, &mut rng), len)] += 1;
        }
        for (b, h) in hist.iter().enumerate() {
            if decile_range(b, len).is_empty() {
                assert_eq!(*h, 0);
            } else {
                assert!((*h as f64 / DRAWS as f64 - 1.0 / occupied as f64).abs() < 0.01);
            }
        }
    }

    #[test]
    fn credited_front_decile() {
        let mut t = CreditTable::new();
        t.credits_mut(combo(4)).positions[0] = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let front = (0..DRAWS)
            .filter(|_| decile(pick_position(&t, combo(4), 100, &mut rng), 100) == 0)
            .count();
        let p = front as f64 / DRAWS as f64;
        assert!((p - 10.0 / 19.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn bitflip_twice_is_identity() {
        let input = b"hello world".to_vec();
        for seed in 0..50 {
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let once = apply_operator(OperatorId::BitFlip1, &input, 3, None, &mut r1);
            assert_ne!(once, input);
            let twice = apply_operator(OperatorId::BitFlip1, &once, 3, None, &mut r2);
            assert_eq!(twice, input);
        }
    }

    #[test]
    fn arith_add_then_subtract_is_identity() {
        let input = vec![0xFFu8, 0x00, 0x7F, 0x80, 0x10];
        for width in [1, 2, 4] {
            for be in [false, true] {
                let mut b = input.clone();
                add_wrapping(&mut b, 1, width, 35, be);
                assert_ne!(b, input);
                add_wrapping(&mut b, 1, width, -35, be);
                assert_eq!(b, input);
            }
        }
    }

    #[test]
    fn overwrite_preserves_length() {
        let input = vec![1u8; 40];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for off in 0..40 {
            let out = apply_operator(OperatorId::OverwriteBlock, &input, off, None, &mut rng);
            assert_eq!(out.len(), input.len());
        }
    }

    #[test]
    fn delete_never_empties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(apply_operator(OperatorId::DeleteBlock, b"x", 0, None, &mut rng), b"x");
        for _ in 0..200 {
            let out = apply_operator(OperatorId::DeleteBlock, b"ab", 1, None, &mut rng);
            assert_eq!(out.len(), 1);
        }
    }

    #[test]
    fn crossover_fixed_points() {
        let a = b"abcdef".to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            assert_eq!(crossover(&a, &a, &mut rng), (a.clone(), a.clone()));
        }
        let b = b"uvwxyz".to_vec();
        assert_eq!(crossover_at(&a, &b, 0, 6), (b.clone(), a.clone()));
    }

    proptest! {
        #[test]
        fn operators_never_empty_and_deterministic(
            input in proptest::collection::vec(any::<u8>(), 1..64),
            donor in proptest::collection::vec(any::<u8>(), 0..16),
            op_idx in 0usize..15,
            offset in 0usize..80,
            seed in any::<u64>(),
        ) {
            let op = OperatorId::ALL[op_idx];
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let before = input.clone();
            let a = apply_operator(op, &input, offset, Some(&donor), &mut r1);
            let b = apply_operator(op, &input, offset, Some(&donor), &mut r2);
            prop_assert!(!a.is_empty());
            prop_assert!(a.len() <= MAX_INPUT_LEN);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(input, before);
        }

        #[test]
        fn crossover_conserves_exchanged_bytes(
            a in proptest::collection::vec(any::<u8>(), 1..40),
            b in proptest::collection::vec(any::<u8>(), 1..40),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = crossover(&a, &b, &mut rng);
            prop_assert_eq!(x.len(), a.len());
            prop_assert_eq!(y.len(), b.len());
            let mut before: Vec<u8> = a.iter().chain(&b).copied().collect();
            let mut after: Vec<u8> = x.iter().chain(&y).copied().collect();
            before.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(before, after);
        }
    }
}
