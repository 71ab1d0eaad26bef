"""LIBSVM-format sparse datasets and synthetic problem generators."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

__all__ = ["SparseDataset", "parse_libsvm", "serialize_libsvm", "to_dense", "generate_exp_lp"]


@dataclass
class SparseDataset:
    """Rows of ``(index, value)`` pairs with 1-based, strictly increasing indices.

    ``raw_labels`` are the labels as read; ``labels`` maps them to ``{-1, +1}``
    (the numerically smaller of two distinct raw labels becomes ``-1``).
    """

    rows: list = field(default_factory=list)
    raw_labels: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    n_features: int = 0

    def __len__(self):
        return len(self.rows)


def _map_labels(raw):
    distinct = sorted(set(raw))
    if len(distinct) > 2:
        raise ParseError(f"expected at most two distinct labels, found {len(distinct)}")
    if set(distinct) <= {-1.0, 1.0}:
        return [float(v) for v in raw]
    if len(distinct) == 1:
        return [1.0] * len(raw)
    low = distinct[0]
    return [-1.0 if v == low else 1.0 for v in raw]


def _finite_float(token, line, column, what):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"malformed {what} {token!r}", line, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} {token!r}", line, column)
    return value


def parse_libsvm(stream):
    """Parse LIBSVM text (``label idx:val idx:val ...`` per line).

    Accepts a string or an iterable of lines. ``#`` starts a comment; blank
    lines are skipped. Errors carry 1-based line and column numbers.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    data = SparseDataset()
    for lineno, raw_line in enumerate(lines, start=1):
        text = raw_line.rstrip("\r\n").split("#", 1)[0]
        tokens = []
        pos = 0
        for tok in text.split():
            pos = text.index(tok, pos)
            tokens.append((tok, pos + 1))
            pos += len(tok)
        if not tokens:
            continue
        label = _finite_float(tokens[0][0], lineno, tokens[0][1], "label")
        row = []
        last = 0
        for tok, col in tokens[1:]:
            idx_text, sep, val_text = tok.partition(":")
            if not sep or not idx_text or not val_text:
                raise ParseError(f"malformed pair {tok!r} (expected index:value)", lineno, col)
            if not idx_text.isdigit():
                raise ParseError(f"malformed index {idx_text!r}", lineno, col)
            idx = int(idx_text)
            if idx < 1:
                raise ParseError("indices are 1-based", lineno, col)
            if idx <= last:
                raise ParseError(f"index {idx} does not increase (previous {last})", lineno, col)
            value = _finite_float(val_text, lineno, col + len(idx_text) + 1, "value")
            row.append((idx, value))
            last = idx
        data.rows.append(row)
        data.raw_labels.append(label)
        data.n_features = max(data.n_features, last)
    data.labels = _map_labels(data.raw_labels)
    return data


def _fmt(v):
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e16 else repr(float(v))


def serialize_libsvm(data):
    """Inverse of :func:`parse_libsvm` up to whitespace (raw labels are kept)."""
    out = []
    for label, row in zip(data.raw_labels, data.rows):
        out.append(" ".join([_fmt(label)] + [f"{i}:{_fmt(v)}" for i, v in row]))
    return "".join(line + "\n" for line in out)


def to_dense(data, n_features=None, scale=True):
    """Dense ``(A, b)``; with ``scale`` each column is mapped affinely onto ``[-1, 1]``.

    Column bounds are taken over the dense matrix (implicit zeros included);
    constant columns map to 0.
    """
    n = data.n_features if n_features is None else int(n_features)
    A = np.zeros((len(data.rows), n))
    for i, row in enumerate(data.rows):
        for j, v in row:
            if j <= n:
                A[i, j - 1] = v
    if scale and A.size:
        lo, hi = A.min(axis=0), A.max(axis=0)
        width = hi - lo
        const = width == 0
        A = np.where(const, 0.0, 2.0 * (A - lo) / np.where(const, 1.0, width) - 1.0)
        A = np.clip(A, -1.0, 1.0)
    return A, np.array(data.labels, dtype=float)


def generate_exp_lp(m, n, seed, sigma=0.001):
    """Random exp-LP instance ``(A, b, c, sigma)``.

    ``A`` is uniform in ``[-1, 1]``, ``b`` and ``c`` are standard normal; all
    three are divided by ``max_i ||a_i||_1`` so that every row has l1 norm at
    most one while the problem is only rescaled.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    b = rng.standard_normal(m)
    c = rng.standard_normal(n)
    s = float(np.max(np.sum(np.abs(A), axis=1)))
    if s > 0:
        A, b, c = A / s, b / s, c / s
    return A, b, c, float(sigma)
