//! Arithmetic in GF(2^8) and dense matrices over it.
//!
//! Elements are bytes read as polynomials over GF(2), reduced modulo
//! x^8 + x^4 + x^3 + x^2 + 1 (0x11D). Addition is XOR. Multiplication goes
//! through a full 256x256 product table built once on first use; the
//! log/antilog tables are used for inversion.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// Field polynomial with the x^8 term included.
pub const FIELD_POLY: u16 = 0x11D;

const fn build_exp() -> [u8; 512] {
    let mut table = [0u8; 512];
    let mut val: u16 = 1;
    let mut i = 0;
    while i < 255 {
        table[i] = val as u8;
        table[i + 255] = val as u8;
        val <<= 1;
        if val & 0x100 != 0 {
            val ^= FIELD_POLY;
        }
        i += 1;
    }
    table[510] = table[0];
    table
}

const fn build_log(exp: &[u8; 512]) -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        table[exp[i] as usize] = i as u8;
        i += 1;
    }
    table
}

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log(&EXP);

/// `MUL_TABLE[a][b] = a * b`. Row `a` is the lookup used by the slice kernels.
static MUL_TABLE: LazyLock<Box<[[u8; 256]; 256]>> = LazyLock::new(|| {
    let mut t = Box::new([[0u8; 256]; 256]);
    for a in 1..256usize {
        for b in 1..256usize {
            t[a][b] = EXP[LOG[a] as usize + LOG[b] as usize];
        }
    }
    t
});

/// Forces table construction. Arithmetic calls this implicitly; callers that
/// want the cost paid up front (daemons, benchmarks) can call it eagerly.
pub fn init_tables() {
    LazyLock::force(&MUL_TABLE);
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn inv(self) -> Result<Gf256> {
        gf_inv(self)
    }

    /// `self^n`, with `0^0 = 1`.
    pub fn pow(self, n: usize) -> Gf256 {
        if n == 0 {
            return Gf256::ONE;
        }
        if self.0 == 0 {
            return Gf256::ZERO;
        }
        let e = (LOG[self.0 as usize] as usize * n) % 255;
        Gf256(EXP[e])
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl fmt::Display for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    fn add(self, rhs: Gf256) -> Gf256 {
        gf_add(self, rhs)
    }
}

impl AddAssign for Gf256 {
    fn add_assign(&mut self, rhs: Gf256) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        gf_mul(self, rhs)
    }
}

impl MulAssign for Gf256 {
    fn mul_assign(&mut self, rhs: Gf256) {
        *self = gf_mul(*self, rhs);
    }
}

#[inline]
pub fn gf_add(a: Gf256, b: Gf256) -> Gf256 {
    Gf256(a.0 ^ b.0)
}

#[inline]
pub fn gf_mul(a: Gf256, b: Gf256) -> Gf256 {
    Gf256(MUL_TABLE[a.0 as usize][b.0 as usize])
}

pub fn gf_inv(a: Gf256) -> Result<Gf256> {
    if a.0 == 0 {
        return Err(Error::NoInverse);
    }
    Ok(Gf256(EXP[255 - LOG[a.0 as usize] as usize]))
}

/// `dst[i] ^= coef * src[i]` over the common length.
pub fn mul_add_slice(coef: Gf256, src: &[u8], dst: &mut [u8]) {
    match coef.0 {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        c => {
            let row = &MUL_TABLE[c as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `dst[i] = coef * src[i]` over the common length.
pub fn mul_slice(coef: Gf256, src: &[u8], dst: &mut [u8]) {
    let row = &MUL_TABLE[coef.0 as usize];
    for (d, s) in dst.iter_mut().zip(src) {
        *d = row[*s as usize];
    }
}

/// Row-major matrix over GF(2^8).
#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Gf256>,
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GfMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| format!("{:02x}", v.0)).collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl GfMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GfMatrix { rows, cols, data: vec![Gf256::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Gf256::ONE);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| Gf256(v)).collect();
        Ok(GfMatrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Gf256 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Gf256) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Gf256] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<GfMatrix> {
        let mut out = GfMatrix::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            if src >= self.rows {
                return Err(Error::Dimension(format!("row {src} out of {}", self.rows)));
            }
            out.data[dst * self.cols..(dst + 1) * self.cols].copy_from_slice(self.row(src));
        }
        Ok(out)
    }

    pub fn mul(&self, rhs: &GfMatrix) -> Result<GfMatrix> {
        mat_mul(self, rhs)
    }

    pub fn invert(&self) -> Result<GfMatrix> {
        mat_invert(self)
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols && *self == GfMatrix::identity(self.rows)
    }
}

pub fn mat_mul(a: &GfMatrix, b: &GfMatrix) -> Result<GfMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = GfMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for l in 0..a.cols {
            let x = a.get(i, l);
            if x.is_zero() {
                continue;
            }
            for j in 0..b.cols {
                let v = out.get(i, j) + x * b.get(l, j);
                out.set(i, j, v);
            }
        }
    }
    Ok(out)
}

/// Gauss-Jordan inversion.
pub fn mat_invert(a: &GfMatrix) -> Result<GfMatrix> {
    if a.rows != a.cols {
        return Err(Error::Dimension(format!("cannot invert {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = GfMatrix::identity(n);
    for col in 0..n {
        let pivot = (col..n).find(|&r| !work.get(r, col).is_zero()).ok_or(Error::Singular)?;
        if pivot != col {
            for c in 0..n {
                work.data.swap(pivot * n + c, col * n + c);
                inv.data.swap(pivot * n + c, col * n + c);
            }
        }
        let scale = gf_inv(work.get(col, col))?;
        for c in 0..n {
            work.set(col, c, work.get(col, c) * scale);
            inv.set(col, c, inv.get(col, c) * scale);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work.get(r, col);
            if f.is_zero() {
                continue;
            }
            for c in 0..n {
                work.set(r, c, work.get(r, c) + f * work.get(col, c));
                inv.set(r, c, inv.get(r, c) + f * inv.get(col, c));
            }
        }
    }
    Ok(inv)
}

/// Systematic (k+m) x k generator: top block identity, any k rows invertible.
///
/// Built from the extended Vandermonde matrix `V[i][j] = i^j` (i ranging over
/// distinct field elements) multiplied on the right by the inverse of its top
/// k x k block. Column operations keep every k-row minor nonsingular.
pub fn build_generator_matrix(k: usize, m: usize) -> Result<GfMatrix> {
    if k == 0 || k + m > 256 {
        return Err(Error::InvalidParams(format!("k = {k}, m = {m}")));
    }
    let n = k + m;
    let mut vander = GfMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            vander.set(i, j, Gf256(i as u8).pow(j));
        }
    }
    let top = vander.select_rows(&(0..k).collect::<Vec<_>>())?;
    mat_mul(&vander, &mat_invert(&top)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Carry-less multiply then reduce modulo 0x11D, bit by bit.
    fn clmul_oracle(a: u8, b: u8) -> u8 {
        let mut prod: u16 = 0;
        for bit in 0..8 {
            if b & (1 << bit) != 0 {
                prod ^= (a as u16) << bit;
            }
        }
        for bit in (8..16).rev() {
            if prod & (1 << bit) != 0 {
                prod ^= FIELD_POLY << (bit - 8);
            }
        }
        prod as u8
    }

    #[test]
    fn add_examples() {
        assert_eq!(gf_add(Gf256(0x57), Gf256(0x57)), Gf256(0));
        assert_eq!(gf_add(Gf256(0x57), Gf256(0)), Gf256(0x57));
        assert_eq!(gf_add(Gf256(0x57), Gf256(0x83)), Gf256(0xD4));
    }

    #[test]
    fn mul_examples() {
        for a in 0..=255u8 {
            assert_eq!(gf_mul(Gf256(a), Gf256::ONE), Gf256(a));
            assert_eq!(gf_mul(Gf256(a), Gf256::ZERO), Gf256::ZERO);
        }
        // oracle: 0x80 << 1 = 0x100, reduced by 0x11D
        assert_eq!(clmul_oracle(0x02, 0x80), 0x1D);
        assert_eq!(gf_mul(Gf256(0x02), Gf256(0x80)), Gf256(0x1D));
    }

    #[test]
    fn table_matches_carryless_oracle() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf_mul(Gf256(a), Gf256(b)).0, clmul_oracle(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(gf_inv(Gf256(1)), Ok(Gf256(1)));
        assert_eq!(gf_inv(Gf256(0)), Err(Error::NoInverse));
        let brute = (1..=255u8).find(|&x| clmul_oracle(0x53, x) == 1).unwrap();
        assert_eq!(brute, 0x8C);
        assert_eq!(gf_inv(Gf256(0x53)), Ok(Gf256(0x8C)));
    }

    #[test]
    fn inverse_exhaustive() {
        for a in 1..=255u8 {
            let inv = gf_inv(Gf256(a)).unwrap();
            assert_eq!(gf_mul(Gf256(a), inv), Gf256::ONE);
        }
    }

    #[test]
    fn add_axioms_exhaustive() {
        for a in 0..=255u8 {
            let a = Gf256(a);
            assert_eq!(a + a, Gf256::ZERO);
            for b in 0..=255u8 {
                let b = Gf256(b);
                assert_eq!(a + b, b + a);
            }
        }
    }

    #[test]
    fn mul_axioms_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20_000 {
            let (a, b, c) = (Gf256(rng.gen()), Gf256(rng.gen()), Gf256(rng.gen()));
            assert_eq!(a * b, b * a);
            assert_eq!((a * b) * c, a * (b * c));
            assert_eq!(a * (b + c), a * b + a * c);
            assert_eq!((a + b) + c, a + (b + c));
        }
    }

    #[test]
    fn slice_kernels() {
        let src: Vec<u8> = (0..=255).collect();
        let mut dst = vec![0u8; 256];
        mul_add_slice(Gf256(0x1f), &src, &mut dst);
        let mut scaled = vec![0u8; 256];
        mul_slice(Gf256(0x1f), &src, &mut scaled);
        assert_eq!(dst, scaled);
        for (i, v) in dst.iter().enumerate() {
            assert_eq!(*v, clmul_oracle(0x1f, i as u8));
        }
        mul_add_slice(Gf256(0x1f), &src, &mut dst);
        assert!(dst.iter().all(|&b| b == 0));
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> GfMatrix {
        let rows: Vec<Vec<u8>> = (0..r).map(|_| (0..c).map(|_| rng.gen()).collect()).collect();
        GfMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn mat_mul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 4, 3);
        assert_eq!(mat_mul(&GfMatrix::identity(4), &m).unwrap(), m);
        assert_eq!(mat_mul(&m, &GfMatrix::zeros(3, 5)).unwrap(), GfMatrix::zeros(4, 5));
        assert!(matches!(mat_mul(&m, &m), Err(Error::Dimension(_))));

        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let p = mat_mul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0u8;
                for l in 0..3 {
                    acc ^= clmul_oracle(a.get(i, l).0, b.get(l, j).0);
                }
                assert_eq!(p.get(i, j).0, acc);
            }
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(mat_invert(&GfMatrix::identity(4)).unwrap(), GfMatrix::identity(4));
        let singular =
            GfMatrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6], vec![1, 2, 3]]).unwrap();
        assert_eq!(mat_invert(&singular), Err(Error::Singular));
        assert!(matches!(mat_invert(&GfMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn invert_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 200 {
            let n = rng.gen_range(1..=8);
            let m = random_matrix(&mut rng, n, n);
            let Ok(inv) = mat_invert(&m) else { continue };
            assert!(mat_mul(&m, &inv).unwrap().is_identity());
            assert!(mat_mul(&inv, &m).unwrap().is_identity());
            checked += 1;
        }
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn generator_examples() {
        assert_eq!(build_generator_matrix(1, 0).unwrap(), GfMatrix::identity(1));
        let g = build_generator_matrix(4, 2).unwrap();
        assert_eq!((g.rows(), g.cols()), (6, 4));
        assert!(g.select_rows(&[0, 1, 2, 3]).unwrap().is_identity());
        let subs = subsets(6, 4);
        assert_eq!(subs.len(), 15);
        for s in subs {
            assert!(mat_invert(&g.select_rows(&s).unwrap()).is_ok(), "{s:?}");
        }
        assert!(build_generator_matrix(0, 2).is_err());
        assert!(build_generator_matrix(200, 57).is_err());
        assert!(build_generator_matrix(200, 56).is_ok());
    }

    #[test]
    fn generator_mds_up_to_16() {
        for n in 1..=16 {
            for k in 1..=n {
                let g = build_generator_matrix(k, n - k).unwrap();
                assert!(g.select_rows(&(0..k).collect::<Vec<_>>()).unwrap().is_identity());
                for s in subsets(n, k) {
                    assert!(mat_invert(&g.select_rows(&s).unwrap()).is_ok(), "k={k} n={n} {s:?}");
                }
            }
        }
    }
}
