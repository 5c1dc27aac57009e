"""Coefficient-space spectral machinery shared by the response and
training experiments.

Everything here is exact arithmetic on truncated eigen-coefficients: the
cutoff schedule, Sobolev-weighted inner products (weight (1 + sqrt(lambda))
raised to 2*alpha, used uniformly for norms and inner products), spectral
multipliers, and the discretize/extend pairs that move signals and
parameter triples between the continuum basis and a graph eigenframe.  The
only numerical content enters through a frame's mixing matrices and the two
eigenvalue tables; every identity asserted by the operators (adjointness,
composition to a truncation, bijectivity on the discrete side) holds to
rounding error by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .manifolds import Manifold, SpectrumTable
from .spectra import SpectralFrame

CONTINUUM = "continuum"
DISCRETE = "discrete"


@dataclass(frozen=True)
class SpectralSignal:
    """Truncated coefficients in an orthonormal eigenbasis.

    The L2 norm of the represented function equals the Euclidean norm of
    the coefficients in either basis; ``n`` tags the resolution of a
    discrete signal and is None exactly for continuum ones.
    """

    coeffs: np.ndarray
    basis: str = CONTINUUM
    n: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs",
                           np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        if self.basis not in (CONTINUUM, DISCRETE):
            raise ValueError(f"unknown basis {self.basis!r}")
        if (self.n is None) != (self.basis == CONTINUUM):
            raise ValueError("discrete signals carry n; continuum ones do not")
        if self.coeffs.ndim != 1:
            raise ValueError("coefficients must form a one-dimensional array")

    @property
    def k(self) -> int:
        return len(self.coeffs)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def _require_same_basis(u: SpectralSignal, v: SpectralSignal):
    if u.basis != v.basis or u.n != v.n:
        raise ValueError(
            f"basis mismatch: ({u.basis}, n={u.n}) vs ({v.basis}, n={v.n})")
    if u.k != v.k:
        raise ValueError(f"truncation mismatch: {u.k} vs {v.k} coefficients")


def h_alpha_weights(eigenvalues, alpha: float) -> np.ndarray:
    """Sobolev weights (1 + sqrt(lambda))^(2 alpha)."""
    lam = np.asarray(eigenvalues, dtype=float)
    return (1.0 + np.sqrt(np.maximum(lam, 0.0))) ** (2.0 * alpha)


def h_alpha_inner(u: SpectralSignal, v: SpectralSignal, alpha: float,
                  eigenvalues) -> float:
    """Weighted inner product sum_k (1+sqrt(lambda_k))^(2 alpha) u_k v_k."""
    _require_same_basis(u, v)
    lam = np.asarray(eigenvalues, dtype=float)
    if len(lam) < u.k:
        raise ValueError(
            f"eigenvalue table holds {len(lam)} entries, need {u.k}")
    w = h_alpha_weights(lam[:u.k], alpha)
    return float(np.sum(w * u.coeffs * v.coeffs))


def h_alpha_norm(u: SpectralSignal, alpha: float, eigenvalues) -> float:
    return math.sqrt(max(h_alpha_inner(u, u, alpha, eigenvalues), 0.0))


def convolve(b: SpectralSignal, u: SpectralSignal) -> SpectralSignal:
    """Spectral multiplier: coefficientwise product in the shared basis."""
    _require_same_basis(b, u)
    return SpectralSignal(b.coeffs * u.coeffs, basis=u.basis, n=u.n)


def project_to_ball(signal: SpectralSignal, alpha: float,
                    eigenvalues) -> SpectralSignal:
    """Metric projection onto the unit ball of the weighted norm.

    The ball is a norm ball, so the projection is radial: signals inside
    come back unchanged (same object), signals outside are rescaled.
    """
    norm = h_alpha_norm(signal, alpha, eigenvalues)
    if norm <= 1.0:
        return signal
    return SpectralSignal(signal.coeffs / norm, basis=signal.basis, n=signal.n)


# ---------------------------------------------------------------------------
# cutoff schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSchedule:
    """Per-resolution spectral windows K_tilde(n) <= K(n).

    K(n) extends K_tilde(n) to the end of its continuum multiplicity
    block, so truncations never cut a block in half.
    """

    records: tuple[dict, ...]  # {n, h, eps_hat, k_tilde, k}

    def for_n(self, n: int) -> dict:
        for rec in self.records:
            if rec["n"] == n:
                return rec
        raise KeyError(f"no schedule entry for n={n}")

    @property
    def k_max(self) -> int:
        return max(rec["k"] for rec in self.records)


def _bandwidth_acceptable(h: float, manifold: Manifold) -> bool:
    # the consistency regime needs h well under the geometric scales
    scale = min(manifold.injectivity_radius, manifold.reach)
    return h <= 0.5 * scale


def cutoff_schedule(ladder, m: int, beta_star: float, table: SpectrumTable,
                    manifold: Manifold | None = None,
                    k_tilde_override: int | None = None) -> CutoffSchedule:
    """Spectral cutoffs for a resolution ladder.

    ``ladder`` is a sequence of mappings with keys n, h, eps_hat and
    strictly increasing n.  With a polynomially controlled gap sequence
    (beta_star + (m+1)/(2m) >= 1) the window grows like
    h^(-m/(2 m beta_star + m + 1)); otherwise like h^(-1/2).  A fixed
    ``k_tilde_override`` pins the raw window at every rung (clipped at n),
    which keeps trend measurements over one common index set.
    """
    ladder = list(ladder)
    if not ladder:
        raise ValueError("cutoff schedule needs at least one rung")
    ns = [int(r["n"]) for r in ladder]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("ladder resolutions must be strictly increasing")

    use_gap_branch = beta_star + (m + 1) / (2 * m) >= 1.0
    exponent = m / (2 * m * beta_star + m + 1) if use_gap_branch else 0.5

    records = []
    for rec in ladder:
        n, h, eps_hat = int(rec["n"]), float(rec["h"]), float(rec["eps_hat"])
        if h <= 0:
            raise ValueError("ladder bandwidths must be positive")
        if manifold is not None and not _bandwidth_acceptable(h, manifold):
            warnings.warn(
                f"bandwidth h={h:.3g} is large for the manifold's geometric "
                "scales; the consistency regime may not apply", stacklevel=2)
        if k_tilde_override is not None:
            k_tilde = min(int(k_tilde_override), n)
        else:
            k_tilde = min(math.floor(h ** (-exponent)), n)
        k_tilde = max(k_tilde, 1)
        k = table.block_end_count(k_tilde)
        while k > n and k_tilde > 1:  # keep the block-complete window <= n
            k_tilde -= 1
            k = table.block_end_count(k_tilde)
        records.append({"n": n, "h": h, "eps_hat": eps_hat,
                        "k_tilde": k_tilde, "k": k})

    tildes = [r["k_tilde"] for r in records]
    if any(b < a for a, b in zip(tildes, tildes[1:])):
        warnings.warn("cutoff window shrinks along the ladder; the rungs do "
                      "not form a valid refinement sequence", stacklevel=2)
    return CutoffSchedule(records=tuple(records))


# ---------------------------------------------------------------------------
# frame-based discretization and extension
# ---------------------------------------------------------------------------

def _frame_scales(frame: SpectralFrame, alpha: float) -> np.ndarray:
    """Per-mode factor (1+sqrt(lambda_cont))^alpha / (1+sqrt(lambda_disc))^alpha."""
    lam_c = frame.table.eigenvalues[:frame.k_n]
    lam_d = np.maximum(frame.discrete.eigenvalues[:frame.k_n], 0.0)
    return ((1.0 + np.sqrt(lam_c)) / (1.0 + np.sqrt(lam_d))) ** alpha


def _blockwise(frame: SpectralFrame, coeffs: np.ndarray,
               transpose: bool) -> np.ndarray:
    """Apply the frame's per-block mixing matrices (or their transposes)."""
    out = np.zeros(frame.k_n)
    for (lo, hi), r in zip(frame.partition.blocks, frame.mixers):
        seg = coeffs[lo:min(hi + 1, len(coeffs))]
        if len(seg) < hi - lo + 1:
            seg = np.pad(seg, (0, hi - lo + 1 - len(seg)))
        out[lo:hi + 1] = (r.T if transpose else r) @ seg
    return out


def spectral_discretize(v: SpectralSignal, alpha: float,
                        frame: SpectralFrame) -> SpectralSignal:
    """Project a continuum signal onto the frame's first K(n) modes.

    Continuum coefficients are rotated into the aligned block bases and
    rescaled so the map is an isometry mode-by-mode between the weighted
    norms (alpha = 0 gives the plain spectral projection).
    """
    if v.basis != CONTINUUM:
        raise ValueError("spectral_discretize expects a continuum signal")
    if len(frame.discrete.eigenvalues) < frame.k_n:
        raise RuntimeError("frame's discrete eigenvalue table is too short")
    rotated = _blockwise(frame, v.coeffs, transpose=True)
    return SpectralSignal(rotated * _frame_scales(frame, alpha),
                          basis=DISCRETE, n=frame.discrete.n)


def spectral_extend(w: SpectralSignal, alpha: float,
                    frame: SpectralFrame) -> SpectralSignal:
    """Adjoint of :func:`spectral_discretize` in the weighted inner products.

    Returns a continuum signal supported on the frame's first K(n)
    reference modes.
    """
    if w.basis != DISCRETE or w.n != frame.discrete.n:
        raise ValueError("spectral_extend expects a discrete signal on the "
                         "frame's resolution")
    if w.k != frame.k_n:
        raise ValueError(
            f"discrete signal carries {w.k} coefficients, frame window is "
            f"{frame.k_n}")
    unscaled = w.coeffs / _frame_scales(frame, alpha)
    return SpectralSignal(_blockwise(frame, unscaled, transpose=False),
                          basis=CONTINUUM)


# ---------------------------------------------------------------------------
# parameter triples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterTriple:
    """Network parameters theta = (a, b, c) over a common basis."""

    a: SpectralSignal
    b: SpectralSignal
    c: SpectralSignal
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        _require_same_basis(self.a, self.b)
        _require_same_basis(self.a, self.c)

    @property
    def basis(self) -> str:
        return self.a.basis


def in_parameter_ball(theta: ParameterTriple, eigenvalues,
                      tol: float = 1e-9) -> bool:
    """Membership check: a and c in the weighted unit ball, b in the L2 ball."""
    return (h_alpha_norm(theta.a, theta.alpha, eigenvalues) <= 1.0 + tol
            and theta.b.l2_norm() <= 1.0 + tol
            and h_alpha_norm(theta.c, theta.alpha, eigenvalues) <= 1.0 + tol)


def param_project(theta: ParameterTriple,
                  frame: SpectralFrame) -> ParameterTriple:
    """Discretize a continuum triple: weighted maps for a and c, the plain
    spectral projection for the filter b.  Never increases any of the three
    norms."""
    if theta.basis != CONTINUUM:
        raise ValueError("param_project expects a continuum triple")
    return ParameterTriple(
        a=spectral_discretize(theta.a, theta.alpha, frame),
        b=spectral_discretize(theta.b, 0.0, frame),
        c=spectral_discretize(theta.c, theta.alpha, frame),
        alpha=theta.alpha)


def param_extend(theta: ParameterTriple,
                 frame: SpectralFrame) -> ParameterTriple:
    """Extend a discrete triple back to the continuum basis (adjoint maps)."""
    if theta.basis != DISCRETE:
        raise ValueError("param_extend expects a discrete triple")
    return ParameterTriple(
        a=spectral_extend(theta.a, theta.alpha, frame),
        b=spectral_extend(theta.b, 0.0, frame),
        c=spectral_extend(theta.c, theta.alpha, frame),
        alpha=theta.alpha)
