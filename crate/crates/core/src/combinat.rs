//! Byproduct parities of AKLT outcome sequences and the counting sets built on them.
//!
//! For a sequence `s ∈ {0,1,2}^r`:
//! `U^r_{p,q}` holds the sequences with parities `(f, g) = (p, q)`,
//! `S^r_{p,q}` the same without the all-2 sequence, and
//! `T^{r,i}_{p,q}` the members of `S^r_{p,q}` whose first symbol is `i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `r` accepted by [`count_enumerate`].
pub const MAX_ENUMERATE_R: usize = 14;
/// Largest `r` for which the closed forms fit in a `u64`.
pub const MAX_CLOSED_R: usize = 39;

fn check_symbols(seq: &[usize]) -> Result<()> {
    match seq.iter().find(|&&s| s > 2) {
        Some(&bad) => Err(Error::OutOfRange {
            index: bad,
            limit: 3,
        }),
        None => Ok(()),
    }
}

/// `f = ⊕_i (δ_{s_i,0} ⊕ δ_{s_i,1})`, i.e. the parity of non-2 symbols.
pub fn parity_f(seq: &[usize]) -> Result<u8> {
    check_symbols(seq)?;
    Ok(seq.iter().filter(|&&s| s != 2).count() as u8 & 1)
}

/// `g = ⊕_i (δ_{s_i,1} ⊕ δ_{s_i,2})`, i.e. the parity of non-0 symbols.
pub fn parity_g(seq: &[usize]) -> Result<u8> {
    check_symbols(seq)?;
    Ok(seq.iter().filter(|&&s| s != 0).count() as u8 & 1)
}

/// Per-symbol contribution to `(f, g)`.
#[inline]
pub(crate) fn symbol_parity(s: usize) -> (u8, u8) {
    match s {
        0 => (1, 0),
        1 => (1, 1),
        _ => (0, 1),
    }
}

/// Marks the sector that receives the all-2 history: `(0,0)` for even `r`,
/// `(0,1)` for odd `r`.
pub fn h_indicator(p: u8, q: u8, r: usize) -> u8 {
    (p == 0 && q as usize == r % 2) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountKind {
    U,
    S,
    T,
}

impl FromStr for CountKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" | "u" => Ok(CountKind::U),
            "S" | "s" => Ok(CountKind::S),
            "T" | "t" => Ok(CountKind::T),
            _ => Err(Error::invalid(format!("unknown count kind `{s}`"))),
        }
    }
}

impl fmt::Display for CountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

fn check_index(kind: CountKind, p: u8, q: u8, i: Option<usize>) -> Result<()> {
    if p > 1 || q > 1 {
        return Err(Error::invalid(format!(
            "parities must be bits, got ({p},{q})"
        )));
    }
    match (kind, i) {
        (CountKind::T, Some(i)) if i <= 2 => Ok(()),
        (CountKind::T, Some(i)) => Err(Error::OutOfRange { index: i, limit: 3 }),
        (CountKind::T, None) => Err(Error::invalid("T counts need a first symbol i")),
        (_, Some(_)) => Err(Error::invalid(format!(
            "{kind} counts take no first symbol"
        ))),
        _ => Ok(()),
    }
}

fn u_closed(r: usize, p: u8, q: u8) -> u64 {
    let pow = 3u64.pow(r as u32);
    if (p, q) == (0, 0) {
        if r.is_multiple_of(2) {
            pow.div_ceil(4)
        } else {
            (pow - 3) / 4
        }
    } else if r.is_multiple_of(2) {
        (pow - 1) / 4
    } else {
        (pow + 1) / 4
    }
}

fn s_closed(r: usize, p: u8) -> u64 {
    // (3^r - 9)/4 ± ((-1)^r - 1)/4 + 2; the parity term is 0 for even r and -1/2 for odd r.
    let pow = 3u64.pow(r as u32);
    if r.is_multiple_of(2) {
        (pow - 9) / 4 + 2
    } else if p == 0 {
        (pow - 9 - 2) / 4 + 2
    } else {
        (pow - 9 + 2) / 4 + 2
    }
}

/// Closed-form count. `U` needs `r ≥ 1`; `S` and `T` need `r ≥ 2`.
///
/// `T^{2,2}` refers to `S^1`, which has no closed form and is enumerated.
pub fn count_closed(kind: CountKind, r: usize, p: u8, q: u8, i: Option<usize>) -> Result<u64> {
    check_index(kind, p, q, i)?;
    let min_r = if kind == CountKind::U { 1 } else { 2 };
    if r < min_r || r > MAX_CLOSED_R {
        return Err(Error::invalid(format!(
            "closed form for {kind} needs {min_r} <= r <= {MAX_CLOSED_R}, got {r}"
        )));
    }
    Ok(match kind {
        CountKind::U => u_closed(r, p, q),
        CountKind::S => s_closed(r, p),
        CountKind::T => match i.expect("checked") {
            0 => u_closed(r - 1, p ^ 1, q),
            1 => u_closed(r - 1, p ^ 1, q ^ 1),
            _ if r == 2 => count_enumerate(CountKind::S, 1, p, q ^ 1, None)?,
            _ => s_closed(r - 1, p),
        },
    })
}

/// Brute-force count over `{0,1,2}^r`.
pub fn count_enumerate(kind: CountKind, r: usize, p: u8, q: u8, i: Option<usize>) -> Result<u64> {
    check_index(kind, p, q, i)?;
    let table = CountTable::enumerate(r)?;
    Ok(table.get(kind, p, q, i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSource {
    ClosedForm,
    Enumeration,
}

/// All counts for one `r`, indexed `[p][q]` and `t[i][p][q]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub r: usize,
    pub u: [[u64; 2]; 2],
    pub s: [[u64; 2]; 2],
    pub t: [[[u64; 2]; 2]; 3],
    pub source: CountSource,
}

impl CountTable {
    /// Single pass over all `3^r` sequences.
    pub fn enumerate(r: usize) -> Result<Self> {
        if r == 0 || r > MAX_ENUMERATE_R {
            return Err(Error::Cap {
                what: "enumeration length r",
                count: r as u128,
                cap: MAX_ENUMERATE_R as u128,
            });
        }
        let mut table = CountTable {
            r,
            u: [[0; 2]; 2],
            s: [[0; 2]; 2],
            t: [[[0; 2]; 2]; 3],
            source: CountSource::Enumeration,
        };
        // digits[0] is the first symbol s_1.
        let mut digits = vec![0usize; r];
        let total = 3u64.pow(r as u32);
        for n in 0..total {
            if n > 0 {
                for d in digits.iter_mut() {
                    *d = (*d + 1) % 3;
                    if *d != 0 {
                        break;
                    }
                }
            }
            let (p, q) = (parity_f(&digits)? as usize, parity_g(&digits)? as usize);
            table.u[p][q] += 1;
            if digits.iter().all(|&s| s == 2) {
                continue;
            }
            table.s[p][q] += 1;
            table.t[digits[0]][p][q] += 1;
        }
        Ok(table)
    }

    /// Closed forms for `2 <= r <= MAX_CLOSED_R`.
    pub fn closed(r: usize) -> Result<Self> {
        let mut table = CountTable {
            r,
            u: [[0; 2]; 2],
            s: [[0; 2]; 2],
            t: [[[0; 2]; 2]; 3],
            source: CountSource::ClosedForm,
        };
        for p in 0..2u8 {
            for q in 0..2u8 {
                let (pi, qi) = (p as usize, q as usize);
                table.u[pi][qi] = count_closed(CountKind::U, r, p, q, None)?;
                table.s[pi][qi] = count_closed(CountKind::S, r, p, q, None)?;
                for i in 0..3 {
                    table.t[i][pi][qi] = count_closed(CountKind::T, r, p, q, Some(i))?;
                }
            }
        }
        Ok(table)
    }

    pub fn get(&self, kind: CountKind, p: u8, q: u8, i: Option<usize>) -> u64 {
        let (p, q) = (p as usize, q as usize);
        match kind {
            CountKind::U => self.u[p][q],
            CountKind::S => self.s[p][q],
            CountKind::T => self.t[i.expect("T needs i")][p][q],
        }
    }

    /// Entries equal, ignoring the source tag.
    pub fn same_counts(&self, other: &CountTable) -> bool {
        self.r == other.r && self.u == other.u && self.s == other.s && self.t == other.t
    }

    /// `kind,r,p,q,i,count` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,r,p,q,i,count\n");
        for p in 0..2 {
            for q in 0..2 {
                out += &format!("U,{},{p},{q},,{}\n", self.r, self.u[p][q]);
            }
        }
        for p in 0..2 {
            for q in 0..2 {
                out += &format!("S,{},{p},{q},,{}\n", self.r, self.s[p][q]);
            }
        }
        for i in 0..3 {
            for p in 0..2 {
                for q in 0..2 {
                    out += &format!("T,{},{p},{q},{i},{}\n", self.r, self.t[i][p][q]);
                }
            }
        }
        out
    }
}
