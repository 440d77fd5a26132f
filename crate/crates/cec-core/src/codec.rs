//! MDS encoding of a data matrix and exact decoding of matrix-vector
//! products.
//!
//! A q x r data matrix `X` splits row-wise into `L` equal sub-matrices
//! X_1..X_L. Machine `n` stores the coded shard sum_l g[n][l] * X_l, where
//! `g` is an N x L Vandermonde matrix on the evaluation points 1..N. Every
//! L x L sub-matrix of `g` is invertible, so the per-row inner products
//! <shard row i, w> from any `L` distinct machines determine the entries
//! X_1^(i) w, ..., X_L^(i) w exactly.

use crate::field::{dot, Fp, MODULUS};
use crate::MachineId;
use std::io::{BufRead, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("machine count must be at least 1 and below the field modulus, got {0}")]
    BadMachineCount(usize),
    #[error("split factor must be at least 1")]
    ZeroSplit,
    #[error("split factor {split} exceeds machine count {machines}")]
    SplitExceedsMachines { split: usize, machines: usize },
    #[error("row count {rows} is not divisible by split factor {split}")]
    RowsNotDivisible { rows: usize, split: usize },
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("row index {row} out of range; shard has {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("decode needs {expected} partial results, got {got}")]
    WrongResultCount { expected: usize, got: usize },
    #[error("duplicate machine {0} among decode inputs")]
    DuplicateMachine(MachineId),
    #[error("machine {0} is outside the generator's machine range")]
    UnknownMachine(MachineId),
    #[error("partial result from machine {machine} does not contain row {row}")]
    MissingRow { machine: MachineId, row: usize },
    #[error("singular decode system for machines {0:?}; coded data is corrupt")]
    SingularSystem(Vec<MachineId>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shard header invalid: {0}")]
    BadShardHeader(String),
}

impl CodecError {
    pub fn class(&self) -> crate::FailureClass {
        match self {
            CodecError::SingularSystem(_) => crate::FailureClass::Internal,
            _ => crate::FailureClass::InvalidInput,
        }
    }
}

/// The plaintext q x r matrix together with its split factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    split: usize,
    data: Vec<Fp>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, split: usize, data: Vec<Fp>) -> Result<Self, CodecError> {
        if split == 0 {
            return Err(CodecError::ZeroSplit);
        }
        if rows == 0 || cols == 0 {
            return Err(CodecError::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if !rows.is_multiple_of(split) {
            return Err(CodecError::RowsNotDivisible { rows, split });
        }
        if data.len() != rows * cols {
            return Err(CodecError::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DataMatrix {
            rows,
            cols,
            split,
            data,
        })
    }

    pub fn random<R: rand::Rng>(
        rows: usize,
        cols: usize,
        split: usize,
        rng: &mut R,
    ) -> Result<Self, CodecError> {
        let data = (0..rows.checked_mul(cols).ok_or_else(|| {
            CodecError::DimensionMismatch(format!("matrix {rows}x{cols} too large"))
        })?)
            .map(|_| Fp::new(rng.gen_range(0..MODULUS)))
            .collect();
        DataMatrix::new(rows, cols, split, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn split(&self) -> usize {
        self.split
    }

    /// Rows in each sub-matrix (and in every coded shard): q / L.
    pub fn coded_rows(&self) -> usize {
        self.rows / self.split
    }

    pub fn row(&self, i: usize) -> &[Fp] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row `i` of sub-matrix `l` (both zero-based).
    pub fn sub_row(&self, l: usize, i: usize) -> &[Fp] {
        self.row(l * self.coded_rows() + i)
    }

    /// Plaintext product X * w, the ground truth for decode checks.
    pub fn multiply_vector(&self, w: &[Fp]) -> Result<Vec<Fp>, CodecError> {
        if w.len() != self.cols {
            return Err(CodecError::DimensionMismatch(format!(
                "vector length {} does not match {} columns",
                w.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), w)).collect())
    }
}

/// N x L Vandermonde coefficients; row n holds 1, a_n, ..., a_n^(L-1) with
/// a_n = n. Distinct nonzero points keep every L x L sub-matrix invertible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorMatrix {
    machines: usize,
    split: usize,
    data: Vec<Fp>,
}

impl GeneratorMatrix {
    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn row(&self, machine: MachineId) -> &[Fp] {
        let idx = machine.index();
        &self.data[idx * self.split..(idx + 1) * self.split]
    }

    pub fn entry(&self, machine: MachineId, l: usize) -> Fp {
        self.row(machine)[l]
    }
}

pub fn make_generator(machines: usize, split: usize) -> Result<GeneratorMatrix, CodecError> {
    if machines == 0 || machines as u64 >= MODULUS {
        return Err(CodecError::BadMachineCount(machines));
    }
    if split == 0 {
        return Err(CodecError::ZeroSplit);
    }
    if split > machines {
        return Err(CodecError::SplitExceedsMachines { split, machines });
    }
    let mut data = Vec::with_capacity(machines * split);
    for n in 1..=machines {
        let point = Fp::new(n as u64);
        let mut power = Fp::ONE;
        for _ in 0..split {
            data.push(power);
            power *= point;
        }
    }
    Ok(GeneratorMatrix {
        machines,
        split,
        data,
    })
}

/// One machine's coded q/L x r matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedShard {
    machine: MachineId,
    rows: usize,
    cols: usize,
    data: Vec<Fp>,
}

impl CodedShard {
    pub fn machine(&self) -> MachineId {
        self.machine
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Fp] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Encodes the full shard set, one shard per machine.
pub fn encode(x: &DataMatrix, g: &GeneratorMatrix) -> Result<Vec<CodedShard>, CodecError> {
    if x.split() != g.split() {
        return Err(CodecError::DimensionMismatch(format!(
            "matrix split {} does not match generator split {}",
            x.split(),
            g.split()
        )));
    }
    let coded_rows = x.coded_rows();
    let cols = x.cols();
    let mut shards = Vec::with_capacity(g.machines());
    for n in 1..=g.machines() {
        let machine = MachineId(n as u32);
        let coeffs = g.row(machine);
        let mut data = vec![Fp::ZERO; coded_rows * cols];
        for (l, c) in coeffs.iter().enumerate() {
            for i in 0..coded_rows {
                let src = x.sub_row(l, i);
                let dst = &mut data[i * cols..(i + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += *c * *s;
                }
            }
        }
        shards.push(CodedShard {
            machine,
            rows: coded_rows,
            cols,
            data,
        });
    }
    Ok(shards)
}

/// Per-row inner products <shard row, w> for a subset of rows, sorted by row
/// index; `values[i]` belongs to `rows[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialResult {
    machine: MachineId,
    rows: Vec<usize>,
    values: Vec<Fp>,
}

impl PartialResult {
    pub fn machine(&self) -> MachineId {
        self.machine
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn values(&self) -> &[Fp] {
        &self.values
    }

    pub fn value_for(&self, row: usize) -> Option<Fp> {
        self.rows
            .binary_search(&row)
            .ok()
            .map(|idx| self.values[idx])
    }
}

/// Computes one machine's contribution for the given row subset. An empty
/// subset yields an empty result.
pub fn compute_partial(
    shard: &CodedShard,
    w: &[Fp],
    rows: &[usize],
) -> Result<PartialResult, CodecError> {
    if w.len() != shard.cols {
        return Err(CodecError::DimensionMismatch(format!(
            "vector length {} does not match shard columns {}",
            w.len(),
            shard.cols
        )));
    }
    let mut pairs = Vec::with_capacity(rows.len());
    for &row in rows {
        if row >= shard.rows {
            return Err(CodecError::RowOutOfRange {
                row,
                rows: shard.rows,
            });
        }
        pairs.push((row, dot(shard.row(row), w)));
    }
    pairs.sort_by_key(|(row, _)| *row);
    let (rows, values) = pairs.into_iter().unzip();
    Ok(PartialResult {
        machine: shard.machine,
        rows,
        values,
    })
}

/// Recovers the `L` products X_1^(row) w, ..., X_L^(row) w from `L` distinct
/// machines' partial results, all of which must contain `row`.
pub fn decode_row(
    results: &[&PartialResult],
    row: usize,
    g: &GeneratorMatrix,
) -> Result<Vec<Fp>, CodecError> {
    let l = g.split();
    if results.len() != l {
        return Err(CodecError::WrongResultCount {
            expected: l,
            got: results.len(),
        });
    }
    let mut seen: Vec<MachineId> = Vec::with_capacity(l);
    let mut system = Vec::with_capacity(l * l);
    let mut rhs = Vec::with_capacity(l);
    for result in results {
        let machine = result.machine();
        if machine.0 == 0 || machine.index() >= g.machines() {
            return Err(CodecError::UnknownMachine(machine));
        }
        if seen.contains(&machine) {
            return Err(CodecError::DuplicateMachine(machine));
        }
        seen.push(machine);
        system.extend_from_slice(g.row(machine));
        rhs.push(
            result
                .value_for(row)
                .ok_or(CodecError::MissingRow { machine, row })?,
        );
    }
    solve_square(&mut system, &mut rhs).ok_or(CodecError::SingularSystem(seen))
}

/// Gaussian elimination with pivot-by-first-nonzero over GF(p). Returns the
/// solution of `a x = b` for a square `a` (row-major), or `None` if singular.
fn solve_square(a: &mut [Fp], b: &mut [Fp]) -> Option<Vec<Fp>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let pivot_row = (col..n).find(|&r| !a[r * n + col].is_zero())?;
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let inv = a[col * n + col].inverse()?;
        for k in col..n {
            a[col * n + k] *= inv;
        }
        b[col] *= inv;
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * n + col];
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                let sub = factor * a[col * n + k];
                a[r * n + k] -= sub;
            }
            let sub = factor * b[col];
            b[r] -= sub;
        }
    }
    Some(b.to_vec())
}

// ----- shard binary layout ------------------------------------------------
//
// Little-endian u64 words: machine id, row count (q/L), column count, field
// modulus, then row-major residues.

pub fn write_shard<W: Write>(shard: &CodedShard, mut out: W) -> std::io::Result<()> {
    let header = [
        shard.machine.0 as u64,
        shard.rows as u64,
        shard.cols as u64,
        MODULUS,
    ];
    for word in header {
        out.write_all(&word.to_le_bytes())?;
    }
    for v in &shard.data {
        out.write_all(&(v.value() as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_shard<R: Read>(mut input: R) -> Result<CodedShard, CodecError> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<u64, CodecError> {
        input.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let machine = next(&mut input)?;
    let rows = next(&mut input)? as usize;
    let cols = next(&mut input)? as usize;
    let modulus = next(&mut input)?;
    if machine == 0 || machine > u32::MAX as u64 {
        return Err(CodecError::BadShardHeader(format!(
            "machine id {machine} out of range"
        )));
    }
    if modulus != MODULUS {
        return Err(CodecError::BadShardHeader(format!(
            "modulus {modulus} does not match {MODULUS}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(CodecError::BadShardHeader(format!(
            "empty shard {rows}x{cols}"
        )));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| CodecError::BadShardHeader("shard dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let v = next(&mut input)?;
        if v >= MODULUS {
            return Err(CodecError::BadShardHeader(format!(
                "residue {v} not reduced modulo {MODULUS}"
            )));
        }
        data.push(Fp::new(v));
    }
    Ok(CodedShard {
        machine: MachineId(machine as u32),
        rows,
        cols,
        data,
    })
}

// ----- matrix text format ---------------------------------------------------
//
// First non-empty line: the column count. Every following non-empty line is
// one matrix row of integers, separated by commas or whitespace. Entries are
// reduced modulo p, so negative integers are accepted.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Fp>,
}

pub fn read_matrix_text<R: BufRead>(reader: R) -> Result<TextMatrix, CodecError> {
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        match cols {
            None => {
                if tokens.len() != 1 {
                    return Err(CodecError::Parse {
                        line: line_no,
                        message: "expected a single column count on the first line".into(),
                    });
                }
                let c: usize = tokens[0].parse().map_err(|_| CodecError::Parse {
                    line: line_no,
                    message: format!("bad column count {:?}", tokens[0]),
                })?;
                if c == 0 {
                    return Err(CodecError::Parse {
                        line: line_no,
                        message: "column count must be positive".into(),
                    });
                }
                cols = Some(c);
            }
            Some(c) => {
                if tokens.len() != c {
                    return Err(CodecError::Parse {
                        line: line_no,
                        message: format!("expected {c} entries, found {}", tokens.len()),
                    });
                }
                for token in tokens {
                    let v: i64 = token.parse().map_err(|_| CodecError::Parse {
                        line: line_no,
                        message: format!("bad integer {token:?}"),
                    })?;
                    entries.push(Fp::from_i64(v));
                }
                rows += 1;
            }
        }
    }
    let cols = cols.ok_or(CodecError::Parse {
        line: 0,
        message: "empty input; expected a column count line".into(),
    })?;
    if rows == 0 {
        return Err(CodecError::Parse {
            line: 0,
            message: "matrix has no rows".into(),
        });
    }
    Ok(TextMatrix {
        rows,
        cols,
        entries,
    })
}

impl DataMatrix {
    pub fn from_text<R: BufRead>(reader: R, split: usize) -> Result<DataMatrix, CodecError> {
        let text = read_matrix_text(reader)?;
        DataMatrix::new(text.rows, text.cols, split, text.entries)
    }
}

/// Reads a vector stored as a 1 x r or r x 1 matrix.
pub fn read_vector_text<R: BufRead>(reader: R) -> Result<Vec<Fp>, CodecError> {
    let text = read_matrix_text(reader)?;
    if text.rows != 1 && text.cols != 1 {
        return Err(CodecError::Parse {
            line: 0,
            message: format!("expected a vector, got a {}x{} matrix", text.rows, text.cols),
        });
    }
    Ok(text.entries)
}
