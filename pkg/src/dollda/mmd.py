"""MMD constraint matrices.

Every elementary term here is a rank-1 matrix ``v v^T`` where ``v`` holds
``1/|a|`` on one sample group and ``-1/|b|`` on another, so that
``tr(A^T X v v^T X^T A)`` is the squared distance between the projected
group means.  Samples are indexed source first (``0..n_s-1``) then target.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import REPULSIVE_VARIANTS, VARIANTS
from .errors import ConfigError, DataError


def pair_vector(n: int, group_a, group_b) -> np.ndarray:
    """Signed mean-difference weights ``1/|a|`` on ``group_a``, ``-1/|b|`` on ``group_b``."""
    group_a = np.asarray(group_a, dtype=np.int64)
    group_b = np.asarray(group_b, dtype=np.int64)
    v = np.zeros(n)
    if group_a.size == 0 or group_b.size == 0:
        return v
    v[group_a] += 1.0 / group_a.size
    v[group_b] -= 1.0 / group_b.size
    return v


def _symmetric(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def build_m0(n_s: int, n_t: int) -> np.ndarray:
    """Marginal MMD matrix between the whole source and target domains."""
    if n_s < 1 or n_t < 1:
        raise ConfigError(f"M0 needs n_s, n_t >= 1, got n_s={n_s}, n_t={n_t}")
    n = n_s + n_t
    v = pair_vector(n, np.arange(n_s), np.arange(n_s, n))
    return np.outer(v, v)


def _class_groups(source_labels, target_labels, class_count: int):
    source_labels = np.asarray(source_labels, dtype=np.int64)
    n_s = source_labels.size
    src = [np.flatnonzero(source_labels == c) for c in range(1, class_count + 1)]
    if target_labels is None:
        tgt = None
    else:
        target_labels = np.asarray(target_labels, dtype=np.int64)
        tgt = [n_s + np.flatnonzero(target_labels == c) for c in range(1, class_count + 1)]
    return src, tgt


def build_mc(source_labels, target_pseudo_labels, c: int) -> np.ndarray:
    """Conditional MMD matrix between source class ``c`` and target pseudo-class ``c``.

    Returns the zero matrix when the target pseudo-class is empty.
    """
    source_labels = np.asarray(source_labels, dtype=np.int64)
    target_pseudo_labels = np.asarray(target_pseudo_labels, dtype=np.int64)
    n_s = source_labels.size
    n = n_s + target_pseudo_labels.size
    src = np.flatnonzero(source_labels == c)
    if src.size == 0:
        raise DataError(f"class {c} has no source sample")
    tgt = n_s + np.flatnonzero(target_pseudo_labels == c)
    v = pair_vector(n, src, tgt)
    return np.outer(v, v)


def _cross_pair_sum(first: np.ndarray, second: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``sum_{c,r} mask[c,r] (f_c - s_r)(f_c - s_r)^T`` for column sets ``f`` and ``s``.

    Expands the outer products so the cost is O(n^2 C) rather than O(n^2 C^2).
    """
    out = (first * mask.sum(axis=1)) @ first.T
    out += (second * mask.sum(axis=0)) @ second.T
    cross = first @ mask @ second.T
    out -= cross + cross.T
    return _symmetric(out)


def _mean_columns(n: int, groups) -> np.ndarray:
    u = np.zeros((n, len(groups)))
    for j, g in enumerate(groups):
        if g.size:
            u[g, j] = 1.0 / g.size
    return u


def build_repulsive(source_labels, target_pseudo_labels, class_count: int | None = None):
    """Repulsive-force matrices ``(M_{S->T}, M_{T->S}, M_{S->S})``.

    Each is a sum over ordered class pairs ``(c, r != c)`` of the rank-1
    cross-MMD term between the corresponding sub-domains.  Pairs touching an
    empty target pseudo-class contribute nothing.
    """
    source_labels = np.asarray(source_labels, dtype=np.int64)
    target_pseudo_labels = np.asarray(target_pseudo_labels, dtype=np.int64)
    if class_count is None:
        class_count = int(source_labels.max())
    n = source_labels.size + target_pseudo_labels.size
    src, tgt = _class_groups(source_labels, target_pseudo_labels, class_count)
    us = _mean_columns(n, src)
    ut = _mean_columns(n, tgt)
    has_s = np.array([g.size > 0 for g in src])
    has_t = np.array([g.size > 0 for g in tgt])
    off_diag = 1.0 - np.eye(class_count)
    m_s2t = _cross_pair_sum(us, ut, off_diag * np.outer(has_s, has_t))
    m_t2s = _cross_pair_sum(ut, us, off_diag * np.outer(has_t, has_s))
    m_s2s = _cross_pair_sum(us, us, off_diag * np.outer(has_s, has_s))
    return m_s2t, m_t2s, m_s2s


@dataclass(frozen=True)
class MmdAssembly:
    m0: np.ndarray
    mc_sum: np.ndarray
    m_s2t: np.ndarray
    m_t2s: np.ndarray
    m_s2s: np.ndarray
    skipped_classes: frozenset = field(default_factory=frozenset)

    @property
    def m_rep(self) -> np.ndarray:
        return self.m_s2t + self.m_t2s + self.m_s2s

    @property
    def m_star(self) -> np.ndarray:
        return self.m0 + self.mc_sum - self.m_rep


def build_assembly(source_labels, target_pseudo_labels, class_count: int,
                   n_target: int | None = None) -> MmdAssembly:
    """Build every MMD component for the given labelling.

    With ``target_pseudo_labels=None`` (no pseudo-labels yet) only ``M0`` is
    populated and all class-conditional parts are zero.
    """
    source_labels = np.asarray(source_labels, dtype=np.int64)
    n_s = source_labels.size
    if target_pseudo_labels is None:
        if n_target is None:
            raise ConfigError("n_target is required when no pseudo-labels are given")
        n = n_s + n_target
        zero = np.zeros((n, n))
        return MmdAssembly(build_m0(n_s, n_target), zero, zero, zero, zero)
    target_pseudo_labels = np.asarray(target_pseudo_labels, dtype=np.int64)
    n_t = target_pseudo_labels.size
    n = n_s + n_t
    src, tgt = _class_groups(source_labels, target_pseudo_labels, class_count)
    skipped = frozenset(c + 1 for c in range(class_count) if tgt[c].size == 0)
    mc_sum = np.zeros((n, n))
    for c in range(class_count):
        if tgt[c].size == 0:
            continue
        v = pair_vector(n, src[c], tgt[c])
        mc_sum += np.outer(v, v)
    reps = build_repulsive(source_labels, target_pseudo_labels, class_count)
    return MmdAssembly(build_m0(n_s, n_t), mc_sum, *reps, skipped_classes=skipped)


def assemble_m_star(assembly: MmdAssembly, variant: str) -> np.ndarray:
    """Combine components into the variant's M*.

    DOLL_DA / CDDA_PLUS use ``M0 + sum Mc - M_REP``, JDA / JOLR_DA drop the
    repulsive part and OLR carries no alignment term at all.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    shapes = {m.shape for m in (assembly.m0, assembly.mc_sum, assembly.m_s2t,
                                assembly.m_t2s, assembly.m_s2s)}
    if len(shapes) != 1:
        raise DataError(f"MMD components have inconsistent shapes {sorted(shapes)}")
    if variant == "OLR":
        return np.zeros_like(assembly.m0)
    if variant in REPULSIVE_VARIANTS:
        return _symmetric(assembly.m_star)
    return _symmetric(assembly.m0 + assembly.mc_sum)


def direct_mmd_oracle(x: np.ndarray, a: np.ndarray, group_a, group_b) -> float:
    """Squared distance between the means of ``A^T x`` over two sample groups."""
    group_a = np.asarray(group_a, dtype=np.int64)
    group_b = np.asarray(group_b, dtype=np.int64)
    if group_a.size == 0 or group_b.size == 0:
        raise DataError("direct MMD needs two non-empty groups")
    z = a.T @ x
    diff = z[:, group_a].mean(axis=1) - z[:, group_b].mean(axis=1)
    return float(diff @ diff)
