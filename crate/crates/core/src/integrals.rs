//! One- and two-electron integrals and the FCIDUMP interchange format.
//!
//! Two-electron integrals are kept in chemist notation `(pq|rs)` and folded
//! onto a canonical triangular index, so every one of the eight permutational
//! images of an integral resolves to the same storage slot.

use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegralError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: orbital index {index} outside [0, {norb}]")]
    IndexRange { line: usize, index: i64, norb: usize },
    #[error("orbital index {index} out of range for norb = {norb}")]
    Lookup { index: usize, norb: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Index of the unordered pair `{i, j}` in a packed lower triangle.
#[inline(always)]
pub fn pair_index(i: usize, j: usize) -> usize {
    if i >= j {
        i * (i + 1) / 2 + j
    } else {
        j * (j + 1) / 2 + i
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralTable {
    norb: usize,
    h: Vec<f64>,
    eri: Vec<f64>,
    e_core: f64,
}

impl IntegralTable {
    /// A table with every integral and the core energy set to zero.
    pub fn zeros(norb: usize) -> Self {
        let npair = norb * (norb + 1) / 2;
        Self {
            norb,
            h: vec![0.0; norb * norb],
            eri: vec![0.0; npair * (npair + 1) / 2],
            e_core: 0.0,
        }
    }

    pub fn norb(&self) -> usize {
        self.norb
    }

    pub fn e_core(&self) -> f64 {
        self.e_core
    }

    pub fn set_e_core(&mut self, value: f64) {
        self.e_core = value;
    }

    #[inline(always)]
    fn eri_slot(p: usize, q: usize, r: usize, s: usize) -> usize {
        pair_index(pair_index(p, q), pair_index(r, s))
    }

    fn check(&self, indices: &[usize]) -> Result<(), IntegralError> {
        match indices.iter().find(|&&i| i >= self.norb) {
            Some(&index) => Err(IntegralError::Lookup {
                index,
                norb: self.norb,
            }),
            None => Ok(()),
        }
    }

    /// Sets `h[p][q]` and `h[q][p]`.
    pub fn set_h(&mut self, p: usize, q: usize, value: f64) {
        assert!(p < self.norb && q < self.norb, "orbital index out of range");
        self.h[p * self.norb + q] = value;
        self.h[q * self.norb + p] = value;
    }

    /// Sets `(pq|rs)` together with all its symmetry images.
    pub fn set_eri(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        assert!(
            p < self.norb && q < self.norb && r < self.norb && s < self.norb,
            "orbital index out of range"
        );
        self.eri[Self::eri_slot(p, q, r, s)] = value;
    }

    /// One-electron integral lookup without range checking beyond a debug assert.
    #[inline(always)]
    pub fn h(&self, p: usize, q: usize) -> f64 {
        debug_assert!(p < self.norb && q < self.norb);
        self.h[p * self.norb + q]
    }

    /// Two-electron integral `(pq|rs)` in chemist notation.
    #[inline(always)]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        debug_assert!(p < self.norb && q < self.norb && r < self.norb && s < self.norb);
        self.eri[Self::eri_slot(p, q, r, s)]
    }

    pub fn get_h(&self, p: usize, q: usize) -> Result<f64, IntegralError> {
        self.check(&[p, q])?;
        Ok(self.h(p, q))
    }

    pub fn get_eri(&self, p: usize, q: usize, r: usize, s: usize) -> Result<f64, IntegralError> {
        self.check(&[p, q, r, s])?;
        Ok(self.eri(p, q, r, s))
    }

    /// Builds the two-site Hubbard model: hopping `-t` between the sites and
    /// on-site repulsion `u`.
    pub fn hubbard_dimer(t: f64, u: f64) -> Self {
        let mut table = Self::zeros(2);
        table.set_h(0, 1, -t);
        table.set_eri(0, 0, 0, 0, u);
        table.set_eri(1, 1, 1, 1, u);
        table
    }
}

/// Header metadata carried alongside the integrals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcidumpHeader {
    pub norb: usize,
    pub nelec: usize,
    pub ms2: i64,
}

#[derive(Clone, Debug)]
pub struct Fcidump {
    pub header: FcidumpHeader,
    pub table: IntegralTable,
    /// Number of entries that overwrote an earlier, different value.
    pub conflicting_duplicates: usize,
    /// Body lines that fit none of the integral patterns (orbital energies).
    pub ignored_lines: usize,
}

/// Splits `KEY=value, KEY=v1,v2,...` header text into key/value pairs.
fn header_fields(text: &str) -> Vec<(String, String)> {
    let bytes = text.as_bytes();
    let mut eqs = Vec::new();
    for (pos, &b) in bytes.iter().enumerate() {
        if b == b'=' {
            let mut end = pos;
            while end > 0 && bytes[end - 1].is_ascii_whitespace() {
                end -= 1;
            }
            let mut start = end;
            while start > 0 && (bytes[start - 1].is_ascii_alphanumeric() || bytes[start - 1] == b'_') {
                start -= 1;
            }
            eqs.push((start, end, pos));
        }
    }
    let mut fields = Vec::with_capacity(eqs.len());
    for (k, &(start, end, pos)) in eqs.iter().enumerate() {
        let value_end = eqs.get(k + 1).map_or(text.len(), |next| next.0);
        let key = text[start..end].to_ascii_uppercase();
        let value = text[pos + 1..value_end]
            .trim()
            .trim_end_matches(',')
            .trim()
            .to_string();
        fields.push((key, value));
    }
    fields
}

fn parse_value(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().or_else(|| {
        // Fortran double-precision exponent.
        token.replace(['D', 'd'], "E").parse::<f64>().ok()
    })
}

/// Reads an FCIDUMP stream.
pub fn parse_fcidump<R: BufRead>(reader: R) -> Result<Fcidump, IntegralError> {
    let mut lines = reader.lines().enumerate();

    let mut header_text = String::new();
    let mut saw_start = false;
    let mut header_done = false;
    let mut header_line = 0;
    for (idx, line) in lines.by_ref() {
        let line = line?;
        let lineno = idx + 1;
        header_line = lineno;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut rest = trimmed;
        if !saw_start {
            let upper = rest.to_ascii_uppercase();
            if !upper.starts_with("&FCI") {
                return Err(IntegralError::Parse {
                    line: lineno,
                    msg: "expected `&FCI` header".into(),
                });
            }
            saw_start = true;
            rest = &rest[4..];
        }
        let upper = rest.to_ascii_uppercase();
        let terminator = upper
            .find("&END")
            .map(|p| (p, 4))
            .or_else(|| upper.find('/').map(|p| (p, 1)));
        match terminator {
            Some((pos, _)) => {
                header_text.push_str(&rest[..pos]);
                header_done = true;
                break;
            }
            None => {
                header_text.push_str(rest);
                header_text.push(' ');
            }
        }
    }
    if !header_done {
        return Err(IntegralError::Parse {
            line: header_line.max(1),
            msg: if saw_start {
                "unterminated header (missing `/` or `&END`)".into()
            } else {
                "empty stream, expected `&FCI` header".into()
            },
        });
    }

    let fields = header_fields(&header_text);
    let lookup = |key: &str| -> Result<i64, IntegralError> {
        let (_, value) = fields
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| IntegralError::Parse {
                line: header_line,
                msg: format!("header is missing {key}="),
            })?;
        value
            .split(',')
            .next()
            .unwrap_or("")
            .trim()
            .parse::<i64>()
            .map_err(|_| IntegralError::Parse {
                line: header_line,
                msg: format!("bad value for {key}: `{value}`"),
            })
    };
    let norb = lookup("NORB")?;
    let nelec = lookup("NELEC")?;
    let ms2 = lookup("MS2")?;
    if norb <= 0 || nelec < 0 {
        return Err(IntegralError::Parse {
            line: header_line,
            msg: format!("invalid NORB={norb} / NELEC={nelec}"),
        });
    }
    let norb = norb as usize;
    let header = FcidumpHeader {
        norb,
        nelec: nelec as usize,
        ms2,
    };

    let mut table = IntegralTable::zeros(norb);
    let npair = norb * (norb + 1) / 2;
    let mut eri_seen = vec![false; npair * (npair + 1) / 2];
    let mut h_seen = vec![false; npair];
    let mut core_seen = false;
    let mut conflicting_duplicates = 0;
    let mut ignored_lines = 0;

    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        let value = parse_value(first).ok_or_else(|| IntegralError::Parse {
            line: lineno,
            msg: format!("bad integral value `{first}`"),
        })?;
        let mut idx4 = [0usize; 4];
        for slot in idx4.iter_mut() {
            let tok = tokens.next().ok_or_else(|| IntegralError::Parse {
                line: lineno,
                msg: "expected `value i j k l`".into(),
            })?;
            let index: i64 = tok.parse().map_err(|_| IntegralError::Parse {
                line: lineno,
                msg: format!("bad orbital index `{tok}`"),
            })?;
            if index < 0 || index as usize > norb {
                return Err(IntegralError::IndexRange {
                    line: lineno,
                    index,
                    norb,
                });
            }
            *slot = index as usize;
        }
        if tokens.next().is_some() {
            return Err(IntegralError::Parse {
                line: lineno,
                msg: "trailing fields after `value i j k l`".into(),
            });
        }
        let [i, j, k, l] = idx4;
        if i > 0 && j > 0 && k > 0 && l > 0 {
            let slot = IntegralTable::eri_slot(i - 1, j - 1, k - 1, l - 1);
            if eri_seen[slot] && table.eri[slot] != value {
                conflicting_duplicates += 1;
            }
            eri_seen[slot] = true;
            table.eri[slot] = value;
        } else if i > 0 && j > 0 && k == 0 && l == 0 {
            let slot = pair_index(i - 1, j - 1);
            if h_seen[slot] && table.h(i - 1, j - 1) != value {
                conflicting_duplicates += 1;
            }
            h_seen[slot] = true;
            table.set_h(i - 1, j - 1, value);
        } else if i == 0 && j == 0 && k == 0 && l == 0 {
            if core_seen && table.e_core != value {
                conflicting_duplicates += 1;
            }
            core_seen = true;
            table.e_core = value;
        } else {
            ignored_lines += 1;
        }
    }

    Ok(Fcidump {
        header,
        table,
        conflicting_duplicates,
        ignored_lines,
    })
}

/// Writes `table` as FCIDUMP text. Only non-zero unique integrals are listed;
/// values carry 17 significant digits so a re-parse is exact.
pub fn write_fcidump(table: &IntegralTable, nelec: usize, ms2: i64) -> String {
    let norb = table.norb;
    let mut out = String::new();
    let orbsym = vec!["1"; norb].join(",");
    let _ = writeln!(out, " &FCI NORB={norb},NELEC={nelec},MS2={ms2},");
    let _ = writeln!(out, "  ORBSYM={orbsym},");
    let _ = writeln!(out, "  ISYM=1,");
    let _ = writeln!(out, " &END");
    for p in 0..norb {
        for q in 0..=p {
            for r in 0..norb {
                for s in 0..=r {
                    if pair_index(r, s) > pair_index(p, q) {
                        continue;
                    }
                    let v = table.eri(p, q, r, s);
                    if v != 0.0 {
                        let _ = writeln!(out, "{v:24.16E} {:4} {:4} {:4} {:4}", p + 1, q + 1, r + 1, s + 1);
                    }
                }
            }
        }
    }
    for p in 0..norb {
        for q in 0..=p {
            let v = table.h(p, q);
            if v != 0.0 {
                let _ = writeln!(out, "{v:24.16E} {:4} {:4} {:4} {:4}", p + 1, q + 1, 0, 0);
            }
        }
    }
    let _ = writeln!(out, "{:24.16E} {:4} {:4} {:4} {:4}", table.e_core, 0, 0, 0, 0);
    out
}
