use crate::error::{MsgrError, Result};

/// Ordered list of distinct vertex ids with a fine-to-local lookup.
///
/// Local indices are the positions in `ids`, contiguous from 0. The lookup is
/// a sorted `(id, local)` table, so construction costs a sort and queries are
/// a binary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    ids: Vec<usize>,
    lookup: Vec<(usize, usize)>,
}

impl IndexSet {
    /// Builds the set from ids in the given order. Duplicates are rejected.
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        let mut lookup: Vec<(usize, usize)> = ids.iter().enumerate().map(|(local, &id)| (id, local)).collect();
        lookup.sort_unstable();
        if let Some(w) = lookup.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MsgrError::InvalidParameter(format!("duplicate vertex {} in index set", w[0].0)));
        }
        Ok(Self { ids, lookup })
    }

    /// Like [`IndexSet::new`], but also checks every id is below `n`.
    pub fn with_bound(ids: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(MsgrError::IndexOutOfRange { index: bad, size: n });
        }
        Self::new(ids)
    }

    /// Sorted ids; never fails.
    pub fn from_sorted_unique(ids: Vec<usize>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let lookup = ids.iter().enumerate().map(|(l, &i)| (i, l)).collect();
        Self { ids, lookup }
    }

    pub fn range(n: usize) -> Self {
        Self::from_sorted_unique((0..n).collect())
    }

    pub fn empty() -> Self {
        Self { ids: Vec::new(), lookup: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<usize> {
        self.ids
    }

    /// Global id of a local index.
    pub fn global(&self, local: usize) -> usize {
        self.ids[local]
    }

    /// Local index of a global id, if present.
    pub fn local(&self, global: usize) -> Option<usize> {
        self.lookup.binary_search_by_key(&global, |&(id, _)| id).ok().map(|pos| self.lookup[pos].1)
    }

    pub fn contains(&self, global: usize) -> bool {
        self.local(global).is_some()
    }

    /// Ids in ascending order.
    pub fn sorted_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.lookup.iter().map(|&(id, _)| id)
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.ids.iter().all(|&i| other.contains(i))
    }

    /// Complement within `0..n`, ascending.
    pub fn complement(&self, n: usize) -> IndexSet {
        let ids = (0..n).filter(|&i| !self.contains(i)).collect();
        IndexSet::from_sorted_unique(ids)
    }

    /// Gathers `v[ids]`.
    pub fn gather(&self, v: &[f64]) -> Vec<f64> {
        self.ids.iter().map(|&i| v[i]).collect()
    }

    /// Writes `local` values into `out[ids]`.
    pub fn scatter(&self, local: &[f64], out: &mut [f64]) {
        for (&i, &x) in self.ids.iter().zip(local) {
            out[i] = x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_roundtrip() {
        let s = IndexSet::new(vec![7, 2, 5]).unwrap();
        assert_eq!(s.local(2), Some(1));
        assert_eq!(s.local(7), Some(0));
        assert_eq!(s.local(3), None);
        assert_eq!(s.global(2), 5);
        assert_eq!(s.sorted_ids().collect::<Vec<_>>(), vec![2, 5, 7]);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(IndexSet::new(vec![1, 1]).is_err());
        assert!(matches!(IndexSet::with_bound(vec![0, 4], 4), Err(MsgrError::IndexOutOfRange { index: 4, size: 4 })));
    }

    #[test]
    fn complement_and_scatter() {
        let s = IndexSet::new(vec![3, 0]).unwrap();
        assert_eq!(s.complement(5).ids(), &[1, 2, 4]);
        let mut out = vec![0.0; 5];
        s.scatter(&[1.0, 2.0], &mut out);
        assert_eq!(out, vec![2.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.gather(&out), vec![1.0, 2.0]);
    }
}
