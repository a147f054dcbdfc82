//! Tile-level GeMM core and signed tile combinations.
//!
//! This is the host-CPU stand-in for the hardware micro-kernel. The systolic
//! structure itself is modelled in [`crate::systolic`]; here only exactness
//! and throughput matter.

use crate::error::{Error, Result};
use crate::scalar::Accumulator;
use crate::schedule::Sign;

/// Dense row-major tile of accumulator values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile<A> {
    rows: usize,
    cols: usize,
    data: Vec<A>,
}

impl<A: Accumulator> Tile<A> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tile {
            rows,
            cols,
            data: vec![A::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = A::ONE;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<A>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Tile { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> A) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tile { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> A {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: A) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[A] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [A] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[A] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Tile::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(A::ZERO);
    }

    /// `self += sign * other`, elementwise.
    pub fn add_signed(&mut self, other: &Tile<A>, sign: Sign) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} tile into {:?} tile",
                other.shape(),
                self.shape()
            )));
        }
        match sign {
            Sign::Plus => {
                for (d, &s) in self.data.iter_mut().zip(&other.data) {
                    *d = d.wadd(s);
                }
            }
            Sign::Minus => {
                for (d, &s) in self.data.iter_mut().zip(&other.data) {
                    *d = d.wsub(s);
                }
            }
        }
        Ok(())
    }
}

/// `acc += l * r` in wrapping accumulator arithmetic.
///
/// `acc` is `m x n`, `l` is `m x k`, `r` is `k x n`.
pub fn tile_gemm_accumulate<A: Accumulator>(acc: &mut Tile<A>, l: &Tile<A>, r: &Tile<A>) -> Result<()> {
    let (m, k) = l.shape();
    let n = r.cols;
    if r.rows != k || acc.rows != m || acc.cols != n {
        return Err(Error::Shape(format!(
            "tile product {:?} x {:?} into {:?}",
            l.shape(),
            r.shape(),
            acc.shape()
        )));
    }
    if m == 0 || n == 0 || k == 0 {
        return Ok(());
    }

    // Four output rows at a time so each row of `r` is streamed once per
    // group; the inner loop over `n` is contiguous and vectorises.
    let mut i = 0;
    while i + 4 <= m {
        let (c0, rest) = acc.data[i * n..(i + 4) * n].split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let l0 = &l.data[i * k..(i + 1) * k];
        let l1 = &l.data[(i + 1) * k..(i + 2) * k];
        let l2 = &l.data[(i + 2) * k..(i + 3) * k];
        let l3 = &l.data[(i + 3) * k..(i + 4) * k];
        for p in 0..k {
            let rrow = &r.data[p * n..(p + 1) * n];
            let (a0, a1, a2, a3) = (l0[p], l1[p], l2[p], l3[p]);
            for j in 0..n {
                let b = rrow[j];
                c0[j] = c0[j].wadd(a0.wmul(b));
                c1[j] = c1[j].wadd(a1.wmul(b));
                c2[j] = c2[j].wadd(a2.wmul(b));
                c3[j] = c3[j].wadd(a3.wmul(b));
            }
        }
        i += 4;
    }
    for i in i..m {
        let crow = &mut acc.data[i * n..(i + 1) * n];
        for p in 0..k {
            let a = l.data[i * k + p];
            let rrow = &r.data[p * n..(p + 1) * n];
            for (c, &b) in crow.iter_mut().zip(rrow) {
                *c = c.wadd(a.wmul(b));
            }
        }
    }
    Ok(())
}

/// Signed sum of one to four equally shaped tiles.
pub fn tile_linear_combine<A: Accumulator>(ops: &[(&Tile<A>, Sign)]) -> Result<Tile<A>> {
    let ((first, first_sign), rest) = ops.split_first().ok_or(Error::EmptyOperands)?;
    if ops.len() > 4 {
        return Err(Error::Shape(format!("{} operands (at most 4)", ops.len())));
    }
    let mut out = match first_sign {
        Sign::Plus => (*first).clone(),
        Sign::Minus => {
            let mut t = (*first).clone();
            t.data.iter_mut().for_each(|v| *v = v.wneg());
            t
        }
    };
    for (tile, sign) in rest {
        out.add_signed(tile, *sign)?;
    }
    Ok(out)
}
