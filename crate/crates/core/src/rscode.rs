//! Stripe-level RS(k,m) encoding and single-chunk decoding coefficients.
//!
//! Words are bytes: word `i` of a chunk is byte `i`. Chunk indices `0..k`
//! are data, `k..k+m` are parity.

use crate::error::{Error, Result};
use crate::gf::{build_generator_matrix, mat_invert, mul_add_slice, Gf256, GfMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodeParams {
    pub k: usize,
    pub m: usize,
    pub chunk_size: usize,
    pub packet_size: usize,
}

impl CodeParams {
    pub fn new(k: usize, m: usize, chunk_size: usize, packet_size: usize) -> Result<Self> {
        let p = CodeParams { k, m, chunk_size, packet_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k + self.m > 256 {
            return Err(Error::InvalidParams(format!("k = {}, m = {}", self.k, self.m)));
        }
        if self.packet_size == 0 || self.chunk_size % self.packet_size != 0 {
            return Err(Error::InvalidParams(format!(
                "packet size {} does not divide chunk size {}",
                self.packet_size, self.chunk_size
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.k + self.m
    }

    /// Number of packets per chunk (d).
    pub fn packet_count(&self) -> usize {
        self.chunk_size / self.packet_size
    }

    pub fn generator(&self) -> Result<GfMatrix> {
        build_generator_matrix(self.k, self.m)
    }
}

/// The k decoding coefficients for one lost chunk, paired with the helper
/// chunks they apply to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientList {
    pub lost: usize,
    pub helper_chunk_indices: Vec<usize>,
    pub coefficients: Vec<Gf256>,
}

impl CoefficientList {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Coefficient applied to `chunk`, if that chunk is one of the helpers.
    pub fn coefficient_for(&self, chunk: usize) -> Option<Gf256> {
        self.helper_chunk_indices
            .iter()
            .position(|&c| c == chunk)
            .map(|i| self.coefficients[i])
    }
}

/// A fully materialised stripe: data chunks then parity chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripe {
    pub params: CodeParams,
    pub chunks: Vec<Vec<u8>>,
}

impl Stripe {
    pub fn from_data(params: CodeParams, data: Vec<Vec<u8>>) -> Result<Stripe> {
        let parity = encode(&params, &data)?;
        let mut chunks = data;
        chunks.extend(parity);
        Ok(Stripe { params, chunks })
    }

    pub fn data(&self) -> &[Vec<u8>] {
        &self.chunks[..self.params.k]
    }
}

fn check_buffers<B: AsRef<[u8]>>(params: &CodeParams, bufs: &[B], count: usize) -> Result<()> {
    if bufs.len() != count {
        return Err(Error::Dimension(format!("expected {count} buffers, got {}", bufs.len())));
    }
    if let Some(b) = bufs.iter().find(|b| b.as_ref().len() != params.chunk_size) {
        return Err(Error::Dimension(format!(
            "buffer of {} bytes, chunk size is {}",
            b.as_ref().len(),
            params.chunk_size
        )));
    }
    Ok(())
}

/// Computes the m parity chunks for k data chunks.
pub fn encode<B: AsRef<[u8]>>(params: &CodeParams, data: &[B]) -> Result<Vec<Vec<u8>>> {
    let g = params.generator()?;
    encode_with(params, &g, data)
}

pub fn encode_with<B: AsRef<[u8]>>(
    params: &CodeParams,
    generator: &GfMatrix,
    data: &[B],
) -> Result<Vec<Vec<u8>>> {
    params.validate()?;
    check_buffers(params, data, params.k)?;
    let mut parity = vec![vec![0u8; params.chunk_size]; params.m];
    for (j, out) in parity.iter_mut().enumerate() {
        for (l, d) in data.iter().enumerate() {
            mul_add_slice(generator.get(params.k + j, l), d.as_ref(), out);
        }
    }
    Ok(parity)
}

/// Coefficients `d` with `lost_word = sum_j d_j * word(helpers[j])`.
///
/// With `H` the generator rows of the helpers, the data words are `H^-1`
/// times the helper words, so the lost chunk's coefficients are its own
/// generator row times `H^-1`. For a lost data chunk that is the matching
/// row of `H^-1`.
pub fn decoding_coefficients(
    params: &CodeParams,
    generator: &GfMatrix,
    lost: usize,
    helpers: &[usize],
) -> Result<CoefficientList> {
    let n = params.n();
    if generator.rows() != n || generator.cols() != params.k {
        return Err(Error::Dimension("generator does not match code parameters".into()));
    }
    if helpers.len() != params.k {
        return Err(Error::InvalidIndices(format!(
            "need {} helpers, got {}",
            params.k,
            helpers.len()
        )));
    }
    if lost >= n || helpers.iter().any(|&h| h >= n) {
        return Err(Error::InvalidIndices(format!("index out of range 0..{n}")));
    }
    if helpers.contains(&lost) {
        return Err(Error::InvalidIndices(format!("lost chunk {lost} listed as helper")));
    }
    let mut seen = vec![false; n];
    for &h in helpers {
        if std::mem::replace(&mut seen[h], true) {
            return Err(Error::InvalidIndices(format!("duplicate helper {h}")));
        }
    }
    let sub = generator.select_rows(helpers)?;
    let inv = mat_invert(&sub)?;
    let row = generator.select_rows(&[lost])?;
    let coeffs = row.mul(&inv)?;
    Ok(CoefficientList {
        lost,
        helper_chunk_indices: helpers.to_vec(),
        coefficients: coeffs.row(0).to_vec(),
    })
}

/// `out[i] = sum_j coefficients[j] * slices[j][i]`.
pub fn reconstruct_words<B: AsRef<[u8]>>(coeffs: &CoefficientList, slices: &[B]) -> Result<Vec<u8>> {
    if slices.len() != coeffs.coefficients.len() {
        return Err(Error::Dimension(format!(
            "{} slices for {} coefficients",
            slices.len(),
            coeffs.coefficients.len()
        )));
    }
    let len = slices.first().map_or(0, |s| s.as_ref().len());
    if slices.iter().any(|s| s.as_ref().len() != len) {
        return Err(Error::Dimension("slices differ in length".into()));
    }
    let mut out = vec![0u8; len];
    for (c, s) in coeffs.coefficients.iter().zip(slices) {
        mul_add_slice(*c, s.as_ref(), &mut out);
    }
    Ok(out)
}

/// True iff every parity chunk matches a re-encode of the data chunks.
pub fn verify_stripe(stripe: &Stripe, generator: &GfMatrix) -> bool {
    let p = &stripe.params;
    if stripe.chunks.len() != p.n() || generator.rows() != p.n() || generator.cols() != p.k {
        return false;
    }
    match encode_with(p, generator, stripe.data()) {
        Ok(parity) => parity.iter().zip(&stripe.chunks[p.k..]).all(|(a, b)| a == b),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::gf_mul;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(k: usize, len: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| {
                let mut v = vec![0u8; len];
                rng.fill_bytes(&mut v);
                v
            })
            .collect()
    }

    /// Per-byte scalar encode: parity_j[i] = sum_l G[k+j][l] * data_l[i].
    fn scalar_encode(g: &GfMatrix, k: usize, m: usize, data: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let len = data[0].len();
        (0..m)
            .map(|j| {
                (0..len)
                    .map(|i| {
                        (0..k).fold(Gf256::ZERO, |acc, l| {
                            acc + gf_mul(g.get(k + j, l), Gf256(data[l][i]))
                        })
                    })
                    .map(|w| w.0)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn params_validation() {
        assert!(CodeParams::new(4, 2, 1024, 256).is_ok());
        assert!(CodeParams::new(0, 2, 1024, 256).is_err());
        assert!(CodeParams::new(4, 2, 1000, 256).is_err());
        assert!(CodeParams::new(4, 2, 1024, 0).is_err());
        assert!(CodeParams::new(250, 7, 16, 16).is_err());
        assert_eq!(CodeParams::new(4, 2, 1024, 256).unwrap().packet_count(), 4);
    }

    #[test]
    fn encode_zero_is_zero() {
        let p = CodeParams::new(4, 2, 64, 16).unwrap();
        let parity = encode(&p, &vec![vec![0u8; 64]; 4]).unwrap();
        assert!(parity.iter().flatten().all(|&b| b == 0));
    }

    #[test]
    fn encode_k2_m1() {
        let p = CodeParams::new(2, 1, 128, 16).unwrap();
        let g = p.generator().unwrap();
        let data = random_data(2, 128, 3);
        let parity = encode(&p, &data).unwrap();
        assert_eq!(parity, scalar_encode(&g, 2, 1, &data));
        if g.row(2) == [Gf256::ONE, Gf256::ONE] {
            let xor: Vec<u8> = data[0].iter().zip(&data[1]).map(|(a, b)| a ^ b).collect();
            assert_eq!(parity[0], xor);
        }
    }

    #[test]
    fn encode_rs42_matches_scalar_oracle() {
        let p = CodeParams::new(4, 2, 1024, 256).unwrap();
        let g = p.generator().unwrap();
        let data = random_data(4, 1024, 11);
        let stripe = Stripe::from_data(p, data.clone()).unwrap();
        assert_eq!(stripe.chunks[4..].to_vec(), scalar_encode(&g, 4, 2, &data));
        assert!(verify_stripe(&stripe, &g));
    }

    #[test]
    fn encode_rejects_bad_buffers() {
        let p = CodeParams::new(4, 2, 64, 16).unwrap();
        assert!(encode(&p, &vec![vec![0u8; 64]; 3]).is_err());
        assert!(encode(&p, &vec![vec![0u8; 63]; 4]).is_err());
    }

    #[test]
    fn verify_detects_flips() {
        let p = CodeParams::new(4, 2, 256, 64).unwrap();
        let g = p.generator().unwrap();
        let stripe = Stripe::from_data(p, random_data(4, 256, 5)).unwrap();
        assert!(verify_stripe(&stripe, &g));
        let mut bad_parity = stripe.clone();
        bad_parity.chunks[5][17] ^= 0x01;
        assert!(!verify_stripe(&bad_parity, &g));
        let mut bad_data = stripe.clone();
        bad_data.chunks[2][100] ^= 0x80;
        assert!(!verify_stripe(&bad_data, &g));
    }

    #[test]
    fn coefficients_worked_cases() {
        let p = CodeParams::new(4, 2, 512, 128).unwrap();
        let g = p.generator().unwrap();
        let stripe = Stripe::from_data(p, random_data(4, 512, 21)).unwrap();
        let b = decoding_coefficients(&p, &g, 0, &[1, 2, 3, 4]).unwrap();
        let c = decoding_coefficients(&p, &g, 0, &[2, 3, 4, 5]).unwrap();
        assert_ne!(b.coefficients, c.coefficients);
        for list in [&b, &c] {
            let slices: Vec<&[u8]> =
                list.helper_chunk_indices.iter().map(|&i| stripe.chunks[i].as_slice()).collect();
            assert_eq!(reconstruct_words(list, &slices).unwrap(), stripe.chunks[0]);
        }
    }

    #[test]
    fn coefficients_for_parity_are_generator_row() {
        let p = CodeParams::new(4, 2, 16, 16).unwrap();
        let g = p.generator().unwrap();
        for lost in 4..6 {
            let cl = decoding_coefficients(&p, &g, lost, &[0, 1, 2, 3]).unwrap();
            assert_eq!(cl.coefficients, g.row(lost).to_vec());
        }
    }

    #[test]
    fn coefficients_reject_bad_index_sets() {
        let p = CodeParams::new(4, 2, 16, 16).unwrap();
        let g = p.generator().unwrap();
        assert!(decoding_coefficients(&p, &g, 0, &[0, 1, 2, 3]).is_err());
        assert!(decoding_coefficients(&p, &g, 0, &[1, 1, 2, 3]).is_err());
        assert!(decoding_coefficients(&p, &g, 0, &[1, 2, 3]).is_err());
        assert!(decoding_coefficients(&p, &g, 0, &[1, 2, 3, 6]).is_err());
        assert!(decoding_coefficients(&p, &g, 6, &[1, 2, 3, 4]).is_err());
    }

    #[test]
    fn coefficients_deterministic() {
        let p = CodeParams::new(6, 3, 16, 16).unwrap();
        let g = p.generator().unwrap();
        let a = decoding_coefficients(&p, &g, 2, &[0, 1, 3, 5, 7, 8]).unwrap();
        let b = decoding_coefficients(&p, &g, 2, &[0, 1, 3, 5, 7, 8]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let zero = CoefficientList {
            lost: 0,
            helper_chunk_indices: vec![1, 2],
            coefficients: vec![Gf256::ZERO; 2],
        };
        assert_eq!(reconstruct_words(&zero, &[vec![7u8; 8], vec![9u8; 8]]).unwrap(), vec![0u8; 8]);
        let ident =
            CoefficientList { lost: 0, helper_chunk_indices: vec![1], coefficients: vec![Gf256::ONE] };
        assert_eq!(reconstruct_words(&ident, &[vec![1u8, 2, 3]]).unwrap(), vec![1, 2, 3]);
        assert!(reconstruct_words(&zero, &[vec![0u8; 8], vec![0u8; 7]]).is_err());
        assert!(reconstruct_words(&zero, &[vec![0u8; 8]]).is_err());
    }

    #[test]
    fn k1_replication() {
        let p = CodeParams::new(1, 2, 32, 8).unwrap();
        let g = p.generator().unwrap();
        let stripe = Stripe::from_data(p, random_data(1, 32, 2)).unwrap();
        assert_eq!(stripe.chunks[1], stripe.chunks[0]);
        let cl = decoding_coefficients(&p, &g, 0, &[2]).unwrap();
        assert_eq!(reconstruct_words(&cl, &[&stripe.chunks[2]]).unwrap(), stripe.chunks[0]);
    }

    fn k_subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if items.len() < k {
            return vec![];
        }
        let mut with: Vec<Vec<usize>> = k_subsets(&items[1..], k - 1)
            .into_iter()
            .map(|mut s| {
                s.insert(0, items[0]);
                s
            })
            .collect();
        with.extend(k_subsets(&items[1..], k));
        with
    }

    #[test]
    fn exhaustive_subset_decode_small_codes() {
        for (k, m) in [(2, 1), (3, 2), (4, 2), (5, 3)] {
            let p = CodeParams::new(k, m, 64, 16).unwrap();
            let g = p.generator().unwrap();
            let stripe = Stripe::from_data(p, random_data(k, 64, (k * 10 + m) as u64)).unwrap();
            for lost in 0..p.n() {
                let survivors: Vec<usize> = (0..p.n()).filter(|&i| i != lost).collect();
                for helpers in k_subsets(&survivors, k) {
                    let cl = decoding_coefficients(&p, &g, lost, &helpers).unwrap();
                    let slices: Vec<&[u8]> =
                        helpers.iter().map(|&i| stripe.chunks[i].as_slice()).collect();
                    assert_eq!(reconstruct_words(&cl, &slices).unwrap(), stripe.chunks[lost]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn reconstruct_is_linear_over_concatenation(
            coeffs in proptest::collection::vec(any::<u8>(), 3),
            a in proptest::collection::vec(any::<u8>(), 3 * 16),
            b in proptest::collection::vec(any::<u8>(), 3 * 9),
        ) {
            let cl = CoefficientList {
                lost: 0,
                helper_chunk_indices: vec![1, 2, 3],
                coefficients: coeffs.into_iter().map(Gf256).collect(),
            };
            let sa: Vec<&[u8]> = a.chunks(16).collect();
            let sb: Vec<&[u8]> = b.chunks(9).collect();
            let joined: Vec<Vec<u8>> = (0..3).map(|j| [sa[j], sb[j]].concat()).collect();
            let whole = reconstruct_words(&cl, &joined).unwrap();
            let parts = [reconstruct_words(&cl, &sa).unwrap(), reconstruct_words(&cl, &sb).unwrap()].concat();
            prop_assert_eq!(whole, parts);
        }
    }
}
