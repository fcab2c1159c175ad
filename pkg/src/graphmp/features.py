"""Dense feature storage keyed by name, with one row per node or per edge.

Matrices are always 2-D float64, C-contiguous, finite. A FeatureDict pins its
row count at construction so every named matrix stays aligned with the same
graph's nodes (or edges). Stored arrays are returned as read-only views;
replace a name to update it.

Values may also be autodiff variables (anything exposing a ``.value`` array);
the dict validates the underlying matrix and stores the wrapper unchanged so
taped message-passing pipelines can flow through named features.
"""

import numpy as np


def as_feature_matrix(x, rows=None):
    """Coerce x to a 2-D float64 C-contiguous matrix; 1-D input becomes a column.

    Rejects non-finite entries, and a row mismatch when rows is given.
    """
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError("feature matrix must be 1-D or 2-D, got ndim=%d" % m.ndim)
    if not np.isfinite(m).all():
        raise ValueError("feature matrix contains non-finite values")
    if rows is not None and m.shape[0] != rows:
        raise ValueError("feature matrix has %d rows, expected %d" % (m.shape[0], rows))
    return np.ascontiguousarray(m)


def matrix_data(x):
    """The plain ndarray behind x: unwraps autodiff variables, passes arrays through."""
    v = getattr(x, "value", None)
    return v if isinstance(v, np.ndarray) else x


class FeatureDict:
    """Named feature matrices with a fixed row count.

    dict-like: fd['h'] = X; fd['h']; 'h' in fd; del fd['h']; iteration over names.
    """

    def __init__(self, rows):
        rows = int(rows)
        if rows < 0:
            raise ValueError("row count must be non-negative")
        self.rows = rows
        self._store = {}

    def __setitem__(self, name, value):
        if not isinstance(name, str) or not name:
            raise ValueError("feature name must be a non-empty string")
        wrapped = getattr(value, "value", None)
        if isinstance(wrapped, np.ndarray):
            as_feature_matrix(wrapped, rows=self.rows)  # validate, keep the wrapper
            self._store[name] = value
        else:
            self._store[name] = as_feature_matrix(value, rows=self.rows)

    def __getitem__(self, name):
        if name not in self._store:
            raise KeyError("no feature named %r (have: %s)"
                           % (name, ", ".join(sorted(self._store)) or "none"))
        v = self._store[name]
        if isinstance(v, np.ndarray):
            v = v.view()
            v.flags.writeable = False
        return v

    def array(self, name):
        """The ndarray for name, unwrapping an autodiff variable if stored."""
        return matrix_data(self[name])

    def __delitem__(self, name):
        del self._store[name]

    def __contains__(self, name):
        return name in self._store

    def __iter__(self):
        return iter(self._store)

    def __len__(self):
        return len(self._store)

    def keys(self):
        return self._store.keys()


def slice_rows(matrix, ids):
    """Gather rows by id with range validation (negative ids are out of range)."""
    m = np.asarray(matrix)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= m.shape[0]):
        raise IndexError("row id out of range [0, %d)" % m.shape[0])
    return m[ids]
