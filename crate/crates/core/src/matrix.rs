//! Dense row-major matrices and their 4x4 tile-grid partitioning.
//!
//! A "block" is a 4x4 grid of tiles: for `A` it covers `4*m_p` rows and
//! `4*k_p` columns, for `B` `4*k_p x 4*n_p`, for `C` `4*m_p x 4*n_p`. Tiles are
//! materialised copies, the way the on-chip buffers hold them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::microkernel::Tile;
use crate::scalar::{Accumulator, ElemType, Element, Scalar};

/// Tiles per side of a tile grid.
pub const GRID_DIM: usize = 4;
pub const GRID_TILES: usize = GRID_DIM * GRID_DIM;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Matrix {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Ok(Matrix { rows, cols, data })
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Top-left `rows x cols` sub-matrix.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows > self.rows || cols > self.cols {
            return Err(Error::Shape(format!(
                "cannot crop {}x{} to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        if rows == self.rows && cols == self.cols {
            return Ok(self.clone());
        }
        Matrix::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    /// Zero-padded copy with the given dimensions; content stays at (0, 0).
    pub fn padded(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::Shape(format!(
                "cannot pad {}x{} to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        if rows == self.rows && cols == self.cols {
            return Ok(self.clone());
        }
        let mut out = Matrix::zeros(rows, cols)?;
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
        }
        Ok(out)
    }
}

impl<E: Element> Matrix<E> {
    pub fn elem_type(&self) -> ElemType {
        E::TYPE
    }

    /// Uniform over the full element range.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        check_dims(rows, cols)?;
        let data = (0..rows * cols).map(|_| E::sample(rng)).collect();
        Ok(Matrix { rows, cols, data })
    }

    pub fn widen(&self) -> Matrix<E::Acc> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.widen()).collect(),
        }
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    Ok(())
}

/// Straightforward triple-loop product in the accumulator type.
pub fn naive_gemm<E: Element>(a: &Matrix<E>, b: &Matrix<E>) -> Result<Matrix<E::Acc>> {
    if a.cols != b.rows {
        return Err(Error::InnerDimension {
            m: a.rows,
            k_a: a.cols,
            k_b: b.rows,
            n: b.cols,
        });
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut c = vec![<E::Acc as Accumulator>::ZERO; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p].widen();
            for (cv, bv) in crow.iter_mut().zip(b.row(p)) {
                *cv = cv.wadd(av.wmul(bv.widen()));
            }
        }
    }
    Matrix::from_vec(m, n, c)
}

/// Per-tile dimensions `m_p x k_p` (A), `k_p x n_p` (B), `m_p x n_p` (C).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TileShape {
    pub m_p: usize,
    pub k_p: usize,
    pub n_p: usize,
}

impl Default for TileShape {
    fn default() -> Self {
        TileShape {
            m_p: 64,
            k_p: 64,
            n_p: 64,
        }
    }
}

impl TileShape {
    pub fn new(m_p: usize, k_p: usize, n_p: usize) -> Result<Self> {
        if m_p == 0 || k_p == 0 || n_p == 0 {
            return Err(Error::Config(format!(
                "tile dims must be positive (got {m_p}x{k_p}x{n_p})"
            )));
        }
        Ok(TileShape { m_p, k_p, n_p })
    }

    pub fn square(d: usize) -> Result<Self> {
        Self::new(d, d, d)
    }

    /// `(rows, cols)` of one tile of the given role.
    pub fn tile_dims(&self, role: TileRole) -> (usize, usize) {
        match role {
            TileRole::A => (self.m_p, self.k_p),
            TileRole::B => (self.k_p, self.n_p),
            TileRole::C => (self.m_p, self.n_p),
        }
    }

    /// `(rows, cols)` of a full 4x4 block of the given role.
    pub fn block_dims(&self, role: TileRole) -> (usize, usize) {
        let (r, c) = self.tile_dims(role);
        (GRID_DIM * r, GRID_DIM * c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TileRole {
    A,
    B,
    C,
}

/// Zero-pads `m` so both dimensions are multiples of the role's block size.
pub fn pad_to_block_multiple<T: Scalar>(m: &Matrix<T>, shape: TileShape, role: TileRole) -> Result<Matrix<T>> {
    let (tr, tc) = shape.tile_dims(role);
    let br = tr.checked_mul(GRID_DIM).ok_or(Error::CapacityOverflow(tr))?;
    let bc = tc.checked_mul(GRID_DIM).ok_or(Error::CapacityOverflow(tc))?;
    let rows = m
        .rows
        .checked_next_multiple_of(br)
        .ok_or(Error::CapacityOverflow(m.rows))?;
    let cols = m
        .cols
        .checked_next_multiple_of(bc)
        .ok_or(Error::CapacityOverflow(m.cols))?;
    rows.checked_mul(cols).ok_or(Error::CapacityOverflow(rows))?;
    m.padded(rows, cols)
}

/// A 4x4 grid of equally shaped tiles, indexed `(i, j)` row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid<A> {
    tiles: Vec<Tile<A>>,
    shape: TileShape,
    role: TileRole,
    loads: [u32; GRID_TILES],
}

impl<A: Accumulator> TileGrid<A> {
    pub fn zeros(shape: TileShape, role: TileRole) -> Self {
        let (r, c) = shape.tile_dims(role);
        TileGrid {
            tiles: (0..GRID_TILES).map(|_| Tile::zeros(r, c)).collect(),
            shape,
            role,
            loads: [0; GRID_TILES],
        }
    }

    pub fn from_tiles(tiles: Vec<Tile<A>>, shape: TileShape, role: TileRole) -> Result<Self> {
        if tiles.len() != GRID_TILES {
            return Err(Error::Shape(format!("{} tiles in a 4x4 grid", tiles.len())));
        }
        let want = shape.tile_dims(role);
        if let Some(t) = tiles.iter().find(|t| t.shape() != want) {
            return Err(Error::Shape(format!(
                "{:?} tile in a {role:?} grid of {want:?} tiles",
                t.shape()
            )));
        }
        Ok(TileGrid {
            tiles,
            shape,
            role,
            loads: [0; GRID_TILES],
        })
    }

    #[inline]
    pub fn tile(&self, i: usize, j: usize) -> &Tile<A> {
        &self.tiles[i * GRID_DIM + j]
    }

    #[inline]
    pub fn tile_mut(&mut self, i: usize, j: usize) -> &mut Tile<A> {
        &mut self.tiles[i * GRID_DIM + j]
    }

    pub fn tiles(&self) -> &[Tile<A>] {
        &self.tiles
    }

    pub fn shape(&self) -> TileShape {
        self.shape
    }

    pub fn role(&self) -> TileRole {
        self.role
    }

    /// How many times each tile was copied in from a matrix.
    pub fn load_counts(&self) -> &[u32; GRID_TILES] {
        &self.loads
    }

    pub fn clear(&mut self) {
        self.tiles.iter_mut().for_each(Tile::fill_zero);
        self.loads = [0; GRID_TILES];
    }
}

fn block_grid_dims<T>(m: &Matrix<T>, shape: TileShape, role: TileRole) -> Result<(usize, usize)> {
    let (br, bc) = shape.block_dims(role);
    if !m.rows.is_multiple_of(br) || !m.cols.is_multiple_of(bc) {
        return Err(Error::Shape(format!(
            "{}x{} matrix is not a multiple of the {br}x{bc} {role:?} block",
            m.rows, m.cols
        )));
    }
    Ok((m.rows / br, m.cols / bc))
}

fn check_block<T>(m: &Matrix<T>, shape: TileShape, role: TileRole, row: usize, col: usize) -> Result<()> {
    let (rows, cols) = block_grid_dims(m, shape, role)?;
    if row >= rows || col >= cols {
        return Err(Error::BlockOutOfRange { row, col, rows, cols });
    }
    Ok(())
}

/// Copies the 4x4 tiles of block `(block_row, block_col)` out of a padded
/// matrix, widening into the accumulator type.
pub fn load_tile_grid<T: Scalar, A: Accumulator>(
    m: &Matrix<T>,
    block_row: usize,
    block_col: usize,
    shape: TileShape,
    role: TileRole,
) -> Result<TileGrid<A>> {
    let mut grid = TileGrid::zeros(shape, role);
    load_into(&mut grid, m, block_row, block_col)?;
    Ok(grid)
}

/// Like [`load_tile_grid`] but reuses `grid`'s buffers.
pub fn load_into<T: Scalar, A: Accumulator>(
    grid: &mut TileGrid<A>,
    m: &Matrix<T>,
    block_row: usize,
    block_col: usize,
) -> Result<()> {
    let (shape, role) = (grid.shape, grid.role);
    check_block(m, shape, role, block_row, block_col)?;
    let (tr, tc) = shape.tile_dims(role);
    let (br, bc) = shape.block_dims(role);
    let (base_r, base_c) = (block_row * br, block_col * bc);
    grid.loads = [0; GRID_TILES];
    for ti in 0..GRID_DIM {
        for tj in 0..GRID_DIM {
            let idx = ti * GRID_DIM + tj;
            let tile = &mut grid.tiles[idx];
            for r in 0..tr {
                let src_off = (base_r + ti * tr + r) * m.cols + base_c + tj * tc;
                let src = &m.data[src_off..src_off + tc];
                let dst = &mut tile.as_mut_slice()[r * tc..(r + 1) * tc];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = A::from_i128_wrapping(s.to_i128());
                }
            }
            grid.loads[idx] += 1;
        }
    }
    Ok(())
}

/// Writes the 16 tiles of `grid` back into block `(block_row, block_col)`.
pub fn store_tile_grid<A: Accumulator>(
    c: &mut Matrix<A>,
    grid: &TileGrid<A>,
    block_row: usize,
    block_col: usize,
) -> Result<()> {
    if grid.role != TileRole::C {
        return Err(Error::Shape(format!("storing a {:?} grid", grid.role)));
    }
    check_block(c, grid.shape, grid.role, block_row, block_col)?;
    let (tr, tc) = grid.shape.tile_dims(TileRole::C);
    let (br, bc) = grid.shape.block_dims(TileRole::C);
    let cols = c.cols;
    for ti in 0..GRID_DIM {
        for tj in 0..GRID_DIM {
            let tile = grid.tile(ti, tj);
            for r in 0..tr {
                let off = (block_row * br + ti * tr + r) * cols + block_col * bc + tj * tc;
                c.data[off..off + tc].copy_from_slice(tile.row(r));
            }
        }
    }
    Ok(())
}

/// Number of 4x4 blocks along each side of a padded matrix.
pub fn block_counts<T>(m: &Matrix<T>, shape: TileShape, role: TileRole) -> Result<(usize, usize)> {
    block_grid_dims(m, shape, role)
}
