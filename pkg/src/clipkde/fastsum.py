"""Deterministic kernel-sum engines over sorted samples.

Three interchangeable evaluation paths compute sums of compactly supported
polynomial kernel contributions:

* naive: full pairwise matrices, the reference semantics;
* window: per-target windows found by bisection (d = 1) or cell binning
  (d = 2), masked and summed in sample order; per-sample reaches are
  partitioned into dyadic classes so a few wide-reach samples do not widen
  everyone's search window;
* block: exact windowed polynomial sums through recentred prefix moments,
  for uniform-radius polynomial contributions in one dimension.

Every path is a pure function of the sorted input: contributions are summed
with numpy's pairwise reduction in a fixed order (ascending sample index,
per reach class for the scaled paths), so results are reproducible bit for
bit regardless of worker count or call pattern.
"""
from __future__ import annotations

from math import comb

import numpy as np

from .errors import DimensionError, ZeroScaleError

_P = np.polynomial.polynomial

NAIVE_PAIR_LIMIT = 250_000
_TARGET_CHUNK = 256


def profile_scoeffs(profile_coeffs, h: float) -> np.ndarray:
    """Coefficients in s = t - x of u -> profile(u) with u = s^2 / h^2."""
    c = np.asarray(profile_coeffs, dtype=float)
    out = np.zeros(2 * (c.size - 1) + 1)
    out[::2] = c / (float(h) ** (2 * np.arange(c.size)))
    return out


def zpoly_scoeffs(zcoeffs, h: float) -> np.ndarray:
    """Coefficients in s = t - x of z -> poly(z) with z = s / h."""
    c = np.asarray(zcoeffs, dtype=float)
    return c / (float(h) ** np.arange(c.size))


def _as_sorted_1d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"expected 1-d samples, got shape {x.shape}")
    return x


def naive_poly_sum(x, w, targets, scoeffs, radius: float) -> np.ndarray:
    """Reference sum_i w_i * P(t - x_i) over |t - x_i| <= radius."""
    x = _as_sorted_1d(x)
    t = np.asarray(targets, dtype=float).reshape(-1, 1)
    s = t - x[None, :]
    inside = np.abs(s) <= radius
    vals = _P.polyval(np.where(inside, s, 0.0), np.asarray(scoeffs, dtype=float))
    vals *= inside
    if w is not None:
        vals *= np.asarray(w, dtype=float)[None, :]
    return np.sum(vals, axis=1)


def window_poly_sum(x, w, targets, scoeffs, radius: float) -> np.ndarray:
    x = _as_sorted_1d(x)
    t = np.asarray(targets, dtype=float)
    order = np.argsort(t, kind="stable")
    out = np.empty(t.size)
    wv = None if w is None else np.asarray(w, dtype=float)
    c = np.asarray(scoeffs, dtype=float)
    for start in range(0, t.size, _TARGET_CHUNK):
        sel = order[start:start + _TARGET_CHUNK]
        tc = t[sel]
        lo = int(np.searchsorted(x, tc[0] - radius, side="left"))
        hi = int(np.searchsorted(x, tc[-1] + radius, side="right"))
        if hi <= lo:
            out[sel] = 0.0
            continue
        s = tc[:, None] - x[None, lo:hi]
        inside = np.abs(s) <= radius
        vals = _P.polyval(np.where(inside, s, 0.0), c)
        vals *= inside
        if wv is not None:
            vals *= wv[None, lo:hi]
        out[sel] = np.sum(vals, axis=1)
    return out


def block_poly_sum(x, w, targets, scoeffs, radius: float) -> np.ndarray:
    """Exact windowed polynomial sums via prefix moments recentred per chunk.

    For a chunk of nearby targets all samples in the union window are
    recentred at the chunk midpoint nu, prefix sums of w * (x - nu)^j are
    taken once, and each target's window sum of P(t - x) follows from the
    binomial expansion of ((t - nu) - (x - nu))^m.  Everything stays within
    one kernel radius of nu, so no large-magnitude cancellation arises.
    """
    x = _as_sorted_1d(x)
    t = np.asarray(targets, dtype=float)
    c = np.asarray(scoeffs, dtype=float)
    m_deg = c.size - 1
    order = np.argsort(t, kind="stable")
    ts = t[order]
    out = np.empty(t.size)
    wv = None if w is None else np.asarray(w, dtype=float)
    binom = np.array([[comb(m, j) if j <= m else 0 for j in range(m_deg + 1)]
                      for m in range(m_deg + 1)], dtype=float)
    # chunks are capped in span as well as count: the recentred moments stay
    # of order radius^j, which keeps the binomial recombination cancellation-free
    starts = []
    start = 0
    while start < t.size:
        end = min(start + _TARGET_CHUNK, t.size)
        cap = int(np.searchsorted(ts, ts[start] + 2.0 * radius, side="right"))
        end = max(start + 1, min(end, cap))
        starts.append((start, end))
        start = end
    for start, end in starts:
        sel = order[start:end]
        tc = t[sel]
        lo = int(np.searchsorted(x, tc[0] - radius, side="left"))
        hi = int(np.searchsorted(x, tc[-1] + radius, side="right"))
        if hi <= lo:
            out[sel] = 0.0
            continue
        nu = 0.5 * (tc[0] + tc[-1])
        y = x[lo:hi] - nu
        wy = np.ones_like(y) if wv is None else wv[lo:hi]
        prefix = np.zeros((m_deg + 1, y.size + 1))
        pw = wy.copy()
        np.cumsum(pw, out=prefix[0, 1:])
        for j in range(1, m_deg + 1):
            pw = pw * y
            np.cumsum(pw, out=prefix[j, 1:])
        a = np.searchsorted(x[lo:hi], tc - radius, side="left")
        b = np.searchsorted(x[lo:hi], tc + radius, side="right")
        mom = prefix[:, b] - prefix[:, a]
        tv = tc - nu
        tpow = np.vander(tv, m_deg + 1, increasing=True).T
        acc = np.zeros(tc.size)
        for m in range(m_deg + 1):
            if c[m] == 0.0:
                continue
            inner = np.zeros(tc.size)
            sign = 1.0
            for j in range(m + 1):
                inner += sign * binom[m, j] * tpow[m - j] * mom[j]
                sign = -sign
            acc += c[m] * inner
        out[sel] = acc
    return out


def poly_sum(x, w, targets, scoeffs, radius: float, method: str = "auto") -> np.ndarray:
    """Sum of w_i * P(t - x_i) over the kernel window, one value per target.

    x must be ascending.  P is given by ascending coefficients in t - x and
    is treated as zero outside [-radius, radius].
    """
    n = np.asarray(x).shape[0]
    m = np.asarray(targets).shape[0]
    if method == "auto":
        if n * m <= NAIVE_PAIR_LIMIT:
            method = "naive"
        elif n >= 2048 and m >= 512:
            method = "block"
        else:
            method = "window"
    if method == "naive":
        return naive_poly_sum(x, w, targets, scoeffs, radius)
    if method == "window":
        return window_poly_sum(x, w, targets, scoeffs, radius)
    if method == "block":
        return block_poly_sum(x, w, targets, scoeffs, radius)
    raise ValueError(f"unknown method {method!r}")


def _check_scales(scales: np.ndarray) -> np.ndarray:
    s = np.asarray(scales, dtype=float)
    if np.any(s <= 0.0) or not np.all(np.isfinite(s)):
        raise ZeroScaleError("per-sample scales must be positive and finite")
    return s


def _scaled_block(diff2, s_sub, w_sub, coeffs, support, h, dist2_cap) -> np.ndarray:
    # diff2: (m, k) squared distances; returns (m,) sums
    u = diff2 * (s_sub / h) ** 2
    inside = u <= support
    if dist2_cap is not None:
        inside &= diff2 < dist2_cap
    vals = _P.polyval(np.where(inside, u, 0.0), coeffs)
    vals *= inside
    vals *= w_sub
    return np.sum(vals, axis=1)


def naive_scaled_sum(x, scales, w, targets, profile_coeffs, support: float,
                     h: float, hard_radius: float | None = None) -> np.ndarray:
    """Reference sum_i w_i * profile(|t - x_i|^2 s_i^2 / h^2).

    Contributions vanish where the profile argument exceeds its support, and
    a hard_radius additionally truncates at |t - x_i| < hard_radius.
    """
    x2 = np.asarray(x, dtype=float)
    if x2.ndim == 1:
        x2 = x2[:, None]
    t2 = np.asarray(targets, dtype=float)
    if t2.ndim == 1:
        t2 = t2[:, None]
    if t2.shape[1] != x2.shape[1]:
        raise DimensionError(
            f"targets have dimension {t2.shape[1]}, samples {x2.shape[1]}")
    s = _check_scales(scales)
    wv = np.ones(x2.shape[0]) if w is None else np.asarray(w, dtype=float)
    d = t2[:, None, :] - x2[None, :, :]
    diff2 = np.einsum("mnd,mnd->mn", d, d)
    cap = None if hard_radius is None else float(hard_radius) ** 2
    return _scaled_block(diff2, s, wv, np.asarray(profile_coeffs, dtype=float),
                         float(support), float(h), cap)


def _reach_classes(reaches: np.ndarray) -> tuple[np.ndarray, float]:
    """Dyadic partition of per-sample reaches.

    Class k holds reaches in (rmax 2^-(k+1), rmax 2^-k]; the class gather
    radius rmax 2^-k always covers every member's own reach, so gathering
    per class misses no pair.  A handful of wide-reach samples (clipped at
    the scale floor) no longer widens the search window of the bulk.
    """
    rmax = float(np.max(reaches))
    k = np.floor(np.log2(rmax / reaches)).astype(np.intp)
    return np.clip(k, 0, 48), rmax


def window_scaled_sum(x, scales, w, targets, profile_coeffs, support: float,
                      h: float, hard_radius: float | None = None) -> np.ndarray:
    x = _as_sorted_1d(x)
    s = _check_scales(scales)
    wv = np.ones(x.size) if w is None else np.asarray(w, dtype=float)
    t = np.asarray(targets, dtype=float).reshape(-1)
    coeffs = np.asarray(profile_coeffs, dtype=float)
    reaches = float(h) * np.sqrt(float(support)) / s
    if hard_radius is not None:
        reaches = np.minimum(reaches, float(hard_radius))
    cap = None if hard_radius is None else float(hard_radius) ** 2
    kcls, rmax = _reach_classes(reaches)
    order = np.argsort(t, kind="stable")
    out = np.zeros(t.size)
    for k in np.unique(kcls):
        idx = np.flatnonzero(kcls == k)
        xk = x[idx]
        sk = s[idx]
        wk = wv[idx]
        rk = rmax / float(2 ** int(k))
        for start in range(0, t.size, _TARGET_CHUNK):
            sel = order[start:start + _TARGET_CHUNK]
            tc = t[sel]
            lo = int(np.searchsorted(xk, tc[0] - rk, side="left"))
            hi = int(np.searchsorted(xk, tc[-1] + rk, side="right"))
            if hi <= lo:
                continue
            diff = tc[:, None] - xk[None, lo:hi]
            out[sel] += _scaled_block(diff * diff, sk[lo:hi], wk[lo:hi],
                                      coeffs, float(support), float(h), cap)
    return out


_SAMPLE_CHUNK = 16384


def grid_scaled_sum(x, scales, w, targets, profile_coeffs, support: float,
                    h: float, hard_radius: float | None = None) -> np.ndarray:
    """Sample-major scaled sums for ascending one-dimensional targets.

    Each sample scatters its contribution into the targets inside its own
    reach, so the pair count tracks n times the local grid occupancy of a
    kernel window instead of m times the sample occupancy.  That wins when
    targets form a grid much coarser than the sample cloud.  Accumulation
    is per reach class in sample-chunk order.
    """
    x = _as_sorted_1d(x)
    s = _check_scales(scales)
    wv = np.ones(x.size) if w is None else np.asarray(w, dtype=float)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if np.any(np.diff(t) < 0):
        raise DimensionError("grid path expects ascending targets")
    m = t.size
    coeffs = np.asarray(profile_coeffs, dtype=float)
    reaches = float(h) * np.sqrt(float(support)) / s
    if hard_radius is not None:
        reaches = np.minimum(reaches, float(hard_radius))
    cap = None if hard_radius is None else float(hard_radius) ** 2
    kcls, rmax = _reach_classes(reaches)
    out = np.zeros(m)
    for k in np.unique(kcls):
        idx = np.flatnonzero(kcls == k)
        rk = rmax / float(2 ** int(k))
        lo = np.searchsorted(t, x[idx] - rk, side="left")
        hi = np.searchsorted(t, x[idx] + rk, side="right")
        width = int(np.max(hi - lo, initial=0))
        if width == 0:
            continue
        for a in range(0, idx.size, _SAMPLE_CHUNK):
            sub = idx[a:a + _SAMPLE_CHUNK]
            cols = lo[a:a + _SAMPLE_CHUNK, None] + np.arange(width)
            valid = cols < hi[a:a + _SAMPLE_CHUNK, None]
            np.clip(cols, 0, m - 1, out=cols)
            diff = t[cols] - x[sub, None]
            diff2 = diff * diff
            u = diff2 * (s[sub, None] / float(h)) ** 2
            inside = (u <= float(support)) & valid
            if cap is not None:
                inside &= diff2 < cap
            vals = _P.polyval(np.where(inside, u, 0.0), coeffs)
            vals *= inside
            vals *= wv[sub, None]
            out += np.bincount(cols.ravel(), weights=vals.ravel(), minlength=m)
    return out


def cell_scaled_sum(x, scales, w, targets, profile_coeffs, support: float,
                    h: float, hard_radius: float | None = None) -> np.ndarray:
    """Two-dimensional scaled sums via per-reach-class cell binning.

    Within each dyadic reach class, samples are binned into square cells of
    one class radius and each target only meets the 3 x 3 block of cells
    around its own.  Candidate indices are re-sorted ascending, so summation
    follows sample order within each class.
    """
    x2 = np.asarray(x, dtype=float)
    if x2.ndim != 2 or x2.shape[1] != 2:
        raise DimensionError(f"cell path expects (n, 2) samples, got {x2.shape}")
    s = _check_scales(scales)
    wv = np.ones(x2.shape[0]) if w is None else np.asarray(w, dtype=float)
    t2 = np.asarray(targets, dtype=float)
    if t2.ndim != 2 or t2.shape[1] != 2:
        raise DimensionError(f"cell path expects (m, 2) targets, got {t2.shape}")
    coeffs = np.asarray(profile_coeffs, dtype=float)
    reaches = float(h) * np.sqrt(float(support)) / s
    if hard_radius is not None:
        reaches = np.minimum(reaches, float(hard_radius))
    cap = None if hard_radius is None else float(hard_radius) ** 2
    kcls, rmax = _reach_classes(reaches)
    out = np.zeros(t2.shape[0])
    for k in np.unique(kcls):
        cidx = np.flatnonzero(kcls == k)
        radius = rmax / float(2 ** int(k))
        keys = np.floor(x2[cidx] / radius).astype(np.int64)
        cells: dict[tuple[int, int], list[int]] = {}
        for i, (a, b) in zip(cidx, map(tuple, keys)):
            cells.setdefault((a, b), []).append(i)
        cell_idx = {key: np.asarray(v, dtype=np.intp)
                    for key, v in cells.items()}
        tkeys = np.floor(t2 / radius).astype(np.int64)
        groups: dict[tuple[int, int], list[int]] = {}
        for j, (a, b) in enumerate(map(tuple, tkeys)):
            groups.setdefault((a, b), []).append(j)
        for (a, b), tj in groups.items():
            cand = [cell_idx[(a + da, b + db)]
                    for da in (-1, 0, 1) for db in (-1, 0, 1)
                    if (a + da, b + db) in cell_idx]
            if not cand:
                continue
            idx = np.sort(np.concatenate(cand))
            tj = np.asarray(tj, dtype=np.intp)
            d = t2[tj][:, None, :] - x2[idx][None, :, :]
            diff2 = np.einsum("mnd,mnd->mn", d, d)
            out[tj] += _scaled_block(diff2, s[idx], wv[idx], coeffs,
                                     float(support), float(h), cap)
    return out


def scaled_sum(x, scales, w, targets, profile_coeffs, support: float, h: float,
               hard_radius: float | None = None, method: str = "auto") -> np.ndarray:
    """Per-sample-scale kernel sums, one value per target.

    x must be sorted ascending (d = 1) or lexicographically by coordinate
    (d = 2); the caller owns that invariant.
    """
    xa = np.asarray(x)
    dim = 1 if xa.ndim == 1 else xa.shape[1]
    n = xa.shape[0]
    m = np.asarray(targets).shape[0]
    if method == "auto":
        if n * m <= NAIVE_PAIR_LIMIT:
            method = "naive"
        else:
            method = "window" if dim == 1 else "cells"
    if method == "naive":
        return naive_scaled_sum(x, scales, w, targets, profile_coeffs, support,
                                h, hard_radius)
    if method == "window":
        if dim != 1:
            raise DimensionError("window path is one-dimensional; use cells")
        return window_scaled_sum(x, scales, w, targets, profile_coeffs, support,
                                 h, hard_radius)
    if method == "grid":
        if dim != 1:
            raise DimensionError("grid path is one-dimensional; use cells")
        return grid_scaled_sum(x, scales, w, targets, profile_coeffs, support,
                               h, hard_radius)
    if method == "cells":
        if dim != 2:
            raise DimensionError("cell path is two-dimensional; use window")
        return cell_scaled_sum(x, scales, w, targets, profile_coeffs, support,
                               h, hard_radius)
    raise ValueError(f"unknown method {method!r}")
