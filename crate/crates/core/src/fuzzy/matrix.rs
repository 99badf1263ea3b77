use std::sync::OnceLock;

use crate::kg::RelationId;
use crate::scalar::Scalar;

use super::{FuzzyError, FuzzyVector, TNorm};

#[derive(Debug, Clone, PartialEq)]
enum Storage<T> {
    /// Per row, `(col, value)` with strictly increasing columns and values
    /// in (0, 1]. Absent entries are exactly 0.
    Sparse(Vec<Vec<(u32, T)>>),
    /// Row-major, zeros stored explicitly.
    Dense(Vec<T>),
}

/// A relation matrix `P_r` over entities.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMatrix<T> {
    rows: usize,
    cols: usize,
    storage: Storage<T>,
}

/// A borrowed row of either storage kind.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a, T> {
    Sparse(&'a [(u32, T)]),
    Dense(&'a [T]),
}

impl<'a, T: Scalar> RowView<'a, T> {
    #[inline]
    pub fn get(&self, col: usize) -> T {
        match self {
            RowView::Sparse(entries) => entries
                .binary_search_by_key(&(col as u32), |&(c, _)| c)
                .map_or(T::zero(), |i| entries[i].1),
            RowView::Dense(vals) => vals[col],
        }
    }

    /// Nonzero entries in column order.
    pub fn nonzeros(&self) -> Box<dyn Iterator<Item = (usize, T)> + 'a> {
        match *self {
            RowView::Sparse(entries) => Box::new(entries.iter().map(|&(c, v)| (c as usize, v))),
            RowView::Dense(vals) => Box::new(
                vals.iter()
                    .enumerate()
                    .filter(|(_, v)| **v > T::zero())
                    .map(|(c, v)| (c, *v)),
            ),
        }
    }

    /// Number of entries a scan of this row visits.
    pub fn stored_len(&self) -> usize {
        match self {
            RowView::Sparse(e) => e.len(),
            RowView::Dense(v) => v.len(),
        }
    }
}

fn check_stored<T: Scalar>(v: T) -> Result<(), FuzzyError> {
    if v > T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(FuzzyError::BadStoredValue(v.to_f64_lossy()))
    }
}

impl<T: Scalar> FuzzyMatrix<T> {
    pub fn empty(rows: usize, cols: usize) -> Self {
        FuzzyMatrix {
            rows,
            cols,
            storage: Storage::Sparse(vec![Vec::new(); rows]),
        }
    }

    pub fn from_sparse_rows(
        rows: usize,
        cols: usize,
        data: Vec<Vec<(u32, T)>>,
    ) -> Result<Self, FuzzyError> {
        if data.len() != rows {
            return Err(FuzzyError::LengthMismatch {
                left: rows,
                right: data.len(),
            });
        }
        for (i, row) in data.iter().enumerate() {
            let mut prev: Option<u32> = None;
            for &(c, v) in row {
                if c as usize >= cols || prev.is_some_and(|p| p >= c) {
                    return Err(FuzzyError::BadColumn {
                        row: i,
                        col: c as usize,
                    });
                }
                check_stored(v)?;
                prev = Some(c);
            }
        }
        Ok(FuzzyMatrix {
            rows,
            cols,
            storage: Storage::Sparse(data),
        })
    }

    /// Builds a sparse matrix from `(row, col, value)` entries; zeros are
    /// skipped, duplicates rejected.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self, FuzzyError> {
        let mut data: Vec<Vec<(u32, T)>> = vec![Vec::new(); rows];
        for (i, j, v) in entries {
            if i >= rows {
                return Err(FuzzyError::BadColumn { row: i, col: j });
            }
            if v == T::zero() {
                continue;
            }
            data[i].push((j as u32, v));
        }
        for row in &mut data {
            row.sort_by_key(|&(c, _)| c);
        }
        Self::from_sparse_rows(rows, cols, data)
    }

    pub fn from_dense(rows: usize, cols: usize, values: Vec<T>) -> Result<Self, FuzzyError> {
        if values.len() != rows * cols {
            return Err(FuzzyError::LengthMismatch {
                left: rows * cols,
                right: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(FuzzyError::OutOfRange(v.to_f64_lossy()));
        }
        Ok(FuzzyMatrix {
            rows,
            cols,
            storage: Storage::Dense(values),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Count of nonzero entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse(rows) => rows.iter().map(Vec::len).sum(),
            Storage::Dense(v) => v.iter().filter(|x| **x > T::zero()).count(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> RowView<'_, T> {
        match &self.storage {
            Storage::Sparse(rows) => RowView::Sparse(&rows[i]),
            Storage::Dense(v) => RowView::Dense(&v[i * self.cols..(i + 1) * self.cols]),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).get(j)
    }

    /// All nonzero entries, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).nonzeros().map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Self {
        let mut vals = vec![T::zero(); self.rows * self.cols];
        for (i, j, v) in self.entries() {
            vals[i * self.cols + j] = v;
        }
        FuzzyMatrix {
            rows: self.rows,
            cols: self.cols,
            storage: Storage::Dense(vals),
        }
    }

    pub fn to_sparse(&self) -> Self {
        let data = (0..self.rows)
            .map(|i| self.row(i).nonzeros().map(|(j, v)| (j as u32, v)).collect())
            .collect();
        FuzzyMatrix {
            rows: self.rows,
            cols: self.cols,
            storage: Storage::Sparse(data),
        }
    }

    /// Entrywise equality of values regardless of storage kind.
    pub fn same_values(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.entries().eq(other.entries())
    }

    pub fn transpose(&self) -> Self {
        match &self.storage {
            Storage::Sparse(_) => {
                let mut data: Vec<Vec<(u32, T)>> = vec![Vec::new(); self.cols];
                // Row-major traversal pushes columns in increasing order.
                for (i, j, v) in self.entries() {
                    data[j].push((i as u32, v));
                }
                FuzzyMatrix {
                    rows: self.cols,
                    cols: self.rows,
                    storage: Storage::Sparse(data),
                }
            }
            Storage::Dense(vals) => {
                let mut out = vec![T::zero(); vals.len()];
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out[j * self.rows + i] = vals[i * self.cols + j];
                    }
                }
                FuzzyMatrix {
                    rows: self.cols,
                    cols: self.rows,
                    storage: Storage::Dense(out),
                }
            }
        }
    }

    /// Per-column maxima.
    pub fn col_max_reduce(&self) -> FuzzyVector<T> {
        let mut out = vec![T::zero(); self.cols];
        for (_, j, v) in self.entries() {
            out[j] = out[j].max(v);
        }
        FuzzyVector::from_vec_unchecked(out)
    }

    /// Per-row maxima.
    pub fn row_max_reduce(&self) -> FuzzyVector<T> {
        FuzzyVector::from_vec_unchecked(
            (0..self.rows)
                .map(|i| self.row(i).nonzeros().map(|(_, v)| v).fold(T::zero(), T::max))
                .collect(),
        )
    }

    pub fn diag(&self) -> FuzzyVector<T> {
        FuzzyVector::from_vec_unchecked(
            (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect(),
        )
    }

    /// `N(i,j) = M(i,j) t v(j)`. Entries that reach 0 are dropped from
    /// sparse storage.
    pub fn col_scale(&self, kind: TNorm, v: &FuzzyVector<T>) -> Result<Self, FuzzyError> {
        if v.len() != self.cols {
            return Err(FuzzyError::LengthMismatch {
                left: self.cols,
                right: v.len(),
            });
        }
        let storage = match &self.storage {
            Storage::Sparse(rows) => Storage::Sparse(
                rows.iter()
                    .map(|row| {
                        row.iter()
                            .map(|&(c, x)| (c, kind.t(x, v.get(c as usize))))
                            .filter(|(_, x)| *x > T::zero())
                            .collect()
                    })
                    .collect(),
            ),
            Storage::Dense(vals) => Storage::Dense(
                vals.iter()
                    .enumerate()
                    .map(|(k, &x)| kind.t(x, v.get(k % self.cols)))
                    .collect(),
            ),
        };
        Ok(FuzzyMatrix {
            rows: self.rows,
            cols: self.cols,
            storage,
        })
    }
}

/// One square matrix per relation, with lazily built transposes.
#[derive(Debug, Clone)]
pub struct RelationMatrices<T> {
    entity_count: usize,
    matrices: Vec<FuzzyMatrix<T>>,
    transposes: Vec<OnceLock<FuzzyMatrix<T>>>,
}

impl<T: Scalar> PartialEq for RelationMatrices<T> {
    fn eq(&self, other: &Self) -> bool {
        self.entity_count == other.entity_count && self.matrices == other.matrices
    }
}

impl<T: Scalar> RelationMatrices<T> {
    pub fn new(entity_count: usize, matrices: Vec<FuzzyMatrix<T>>) -> Result<Self, FuzzyError> {
        if let Some(m) = matrices
            .iter()
            .find(|m| m.rows() != entity_count || m.cols() != entity_count)
        {
            return Err(FuzzyError::LengthMismatch {
                left: entity_count,
                right: m.rows().max(m.cols()),
            });
        }
        let transposes = matrices.iter().map(|_| OnceLock::new()).collect();
        Ok(RelationMatrices {
            entity_count,
            matrices,
            transposes,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, r: RelationId) -> Option<&FuzzyMatrix<T>> {
        self.matrices.get(r.index())
    }

    pub fn matrices(&self) -> &[FuzzyMatrix<T>] {
        &self.matrices
    }

    pub fn transposed(&self, r: RelationId) -> Option<&FuzzyMatrix<T>> {
        let m = self.matrices.get(r.index())?;
        Some(self.transposes[r.index()].get_or_init(|| m.transpose()))
    }

    /// Appends `transpose(P_r)` as relation `r + |R|` for every `r`.
    pub fn with_reverse_relations(mut self) -> Self {
        let rev: Vec<FuzzyMatrix<T>> = self.matrices.iter().map(FuzzyMatrix::transpose).collect();
        self.matrices.extend(rev);
        self.transposes = self.matrices.iter().map(|_| OnceLock::new()).collect();
        self
    }
}

/// The matrices inference reads: a primary set and an optional dense
/// variant used for clauses without existential variables.
#[derive(Debug, Clone)]
pub struct MatrixSet<T> {
    primary: RelationMatrices<T>,
    dense: Option<RelationMatrices<T>>,
}

impl<T: Scalar> PartialEq for MatrixSet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.primary == other.primary && self.dense == other.dense
    }
}

impl<T: Scalar> MatrixSet<T> {
    pub fn new(entity_count: usize, matrices: Vec<FuzzyMatrix<T>>) -> Result<Self, FuzzyError> {
        Ok(MatrixSet {
            primary: RelationMatrices::new(entity_count, matrices)?,
            dense: None,
        })
    }

    pub fn with_dense_variant(mut self, dense: Vec<FuzzyMatrix<T>>) -> Result<Self, FuzzyError> {
        if dense.len() != self.relation_count() {
            return Err(FuzzyError::LengthMismatch {
                left: self.relation_count(),
                right: dense.len(),
            });
        }
        self.dense = Some(RelationMatrices::new(self.entity_count(), dense)?);
        Ok(self)
    }

    pub fn without_dense_variant(mut self) -> Self {
        self.dense = None;
        self
    }

    pub fn entity_count(&self) -> usize {
        self.primary.entity_count()
    }

    pub fn relation_count(&self) -> usize {
        self.primary.relation_count()
    }

    pub fn primary(&self) -> &RelationMatrices<T> {
        &self.primary
    }

    pub fn dense_variant(&self) -> Option<&RelationMatrices<T>> {
        self.dense.as_ref()
    }

    pub fn matrix(&self, r: RelationId) -> Option<&FuzzyMatrix<T>> {
        self.primary.matrix(r)
    }

    pub fn with_reverse_relations(self) -> Self {
        MatrixSet {
            primary: self.primary.with_reverse_relations(),
            dense: self.dense.map(RelationMatrices::with_reverse_relations),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> FuzzyMatrix<f64> {
        let n = rows[0].len();
        FuzzyMatrix::from_dense(rows.len(), n, rows.concat()).unwrap()
    }

    #[test]
    fn reductions() {
        let a = m(&[&[0.2, 0.9], &[0.5, 0.1]]);
        assert_eq!(a.col_max_reduce().as_slice(), &[0.5, 0.9]);
        assert_eq!(a.row_max_reduce().as_slice(), &[0.9, 0.5]);
        assert_eq!(a.diag().as_slice(), &[0.2, 0.1]);
        assert_eq!(
            FuzzyMatrix::<f64>::empty(3, 3).col_max_reduce(),
            FuzzyVector::zeros(3)
        );
        assert!(a.transpose().transpose() == a);
    }

    #[test]
    fn col_scale_examples() {
        let a = FuzzyMatrix::from_entries(2, 2, [(0, 1, 0.8)]).unwrap();
        let v = FuzzyVector::new(vec![1.0, 0.5]).unwrap();
        assert_eq!(a.col_scale(TNorm::Product, &v).unwrap().get(0, 1), 0.4);
        assert_eq!(a.col_scale(TNorm::Godel, &v).unwrap().get(0, 1), 0.5);
        assert_eq!(a.col_scale(TNorm::Product, &FuzzyVector::ones(2)).unwrap(), a);
        let luk = FuzzyMatrix::from_entries(1, 1, [(0, 0, 0.3)]).unwrap();
        let half = FuzzyVector::new(vec![0.5]).unwrap();
        assert_eq!(luk.col_scale(TNorm::Lukasiewicz, &half).unwrap().nnz(), 0);
    }

    #[test]
    fn rejects_bad_sparse_rows() {
        assert!(FuzzyMatrix::from_sparse_rows(1, 2, vec![vec![(1, 0.5), (0, 0.5)]]).is_err());
        assert!(FuzzyMatrix::from_sparse_rows(1, 2, vec![vec![(2, 0.5)]]).is_err());
        assert!(FuzzyMatrix::from_sparse_rows(1, 2, vec![vec![(0, 0.0)]]).is_err());
        assert!(FuzzyMatrix::from_sparse_rows(1, 2, vec![vec![(0, 1.5)]]).is_err());
    }

    #[test]
    fn reverse_relations_are_transposes() {
        let a = FuzzyMatrix::from_entries(3, 3, [(0, 1, 1.0), (2, 1, 0.5)]).unwrap();
        let set = MatrixSet::new(3, vec![a.clone()]).unwrap().with_reverse_relations();
        assert_eq!(set.relation_count(), 2);
        assert_eq!(set.matrix(RelationId(1)).unwrap(), &a.transpose());
        assert_eq!(set.primary().transposed(RelationId(0)).unwrap(), &a.transpose());
    }

    fn sparse_matrix() -> impl Strategy<Value = FuzzyMatrix<f64>> {
        (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
            proptest::collection::vec(
                prop_oneof![2 => Just(0.0), 3 => 0.0f64..=1.0, 1 => Just(1.0)],
                r * c,
            )
            .prop_map(move |vals| FuzzyMatrix::from_dense(r, c, vals).unwrap().to_sparse())
        })
    }

    proptest! {
        #[test]
        fn sparse_dense_agree(a in sparse_matrix(), seed in 0.0f64..=1.0, kind in 0usize..3) {
            let kind = TNorm::ALL[kind];
            let d = a.to_dense();
            prop_assert!(a.same_values(&d));
            prop_assert_eq!(a.transpose().to_dense(), d.transpose());
            prop_assert_eq!(a.col_max_reduce(), d.col_max_reduce());
            prop_assert_eq!(a.row_max_reduce(), d.row_max_reduce());
            prop_assert_eq!(a.diag(), d.diag());
            let v = FuzzyVector::from_vec_unchecked(
                (0..a.cols()).map(|j| ((j as f64 + 1.0) * seed).fract()).collect(),
            );
            prop_assert_eq!(
                a.col_scale(kind, &v).unwrap().to_dense(),
                d.col_scale(kind, &v).unwrap()
            );
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    prop_assert_eq!(a.get(i, j).to_bits(), d.get(i, j).to_bits());
                }
            }
        }
    }
}
