//! Binary extension fields GF(2^8) and GF(2^16) via log/antilog tables.

use crate::error::{Error, Result};

/// x^8 + x^4 + x^3 + x^2 + 1
pub const POLY_GF256: u32 = 0x11D;
/// x^16 + x^12 + x^3 + x + 1
pub const POLY_GF65536: u32 = 0x1100B;

#[derive(Clone, Debug)]
pub struct Field {
    bits: u32,
    order: usize,
    exp: Vec<u16>,
    log: Vec<u32>,
}

impl Field {
    pub fn new(bits: u32) -> Result<Self> {
        let poly = match bits {
            8 => POLY_GF256,
            16 => POLY_GF65536,
            _ => return Err(Error::Input(format!("field size must be 8 or 16 bits, got {bits}"))),
        };
        let order = 1usize << bits;
        let period = order - 1;
        // exp is doubled so products index it without a modulo
        let mut exp = vec![0u16; 2 * period];
        let mut log = vec![0u32; order];
        let mut x: u32 = 1;
        for i in 0..period {
            if i > 0 && x == 1 {
                return Err(Error::invariant(format!("polynomial {poly:#x} is not primitive")));
            }
            exp[i] = x as u16;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & (order as u32) != 0 {
                x ^= poly;
            }
        }
        for i in period..2 * period {
            exp[i] = exp[i - period];
        }
        Ok(Field { bits, order, exp, log })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of field elements.
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn add(&self, a: u16, b: u16) -> u16 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
    }

    /// Panics on zero.
    #[inline]
    pub fn inv(&self, a: u16) -> u16 {
        assert!(a != 0, "zero has no inverse");
        let period = self.order - 1;
        self.exp[(period - self.log[a as usize] as usize) % period]
    }
}

/// Incremental Gaussian elimination keeping one normalized pivot row per leading column.
pub struct Eliminator<'f> {
    field: &'f Field,
    pivots: Vec<Option<Vec<u16>>>,
    rank: usize,
}

impl<'f> Eliminator<'f> {
    pub fn new(field: &'f Field, width: usize) -> Self {
        Eliminator {
            field,
            pivots: vec![None; width],
            rank: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.pivots.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full(&self) -> bool {
        self.rank == self.pivots.len()
    }

    /// Adds a row; returns whether it raised the rank.
    pub fn insert(&mut self, mut row: Vec<u16>) -> bool {
        debug_assert_eq!(row.len(), self.width());
        let f = self.field;
        for col in 0..row.len() {
            let lead = row[col];
            if lead == 0 {
                continue;
            }
            match &self.pivots[col] {
                Some(pivot) => {
                    for k in col..row.len() {
                        row[k] ^= f.mul(lead, pivot[k]);
                    }
                }
                None => {
                    let scale = f.inv(lead);
                    for v in row[col..].iter_mut() {
                        *v = f.mul(*v, scale);
                    }
                    self.pivots[col] = Some(row);
                    self.rank += 1;
                    return true;
                }
            }
        }
        false
    }
}

/// Rank of a dense matrix.
pub fn rank(field: &Field, rows: &[Vec<u16>], width: usize) -> usize {
    let mut elim = Eliminator::new(field, width);
    for row in rows {
        elim.insert(row.clone());
        if elim.is_full() {
            break;
        }
    }
    elim.rank()
}
