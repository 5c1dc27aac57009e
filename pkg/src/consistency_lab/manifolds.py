"""Analytic manifolds with closed-form Laplacian spectra.

Provides the circle, the round 2-sphere and the flat 2-torus together with
uniform samplers, geodesic distances, quadrature grids, eigenfunction
evaluation and eigenvalue tables.  Eigenvalues are stored for the
volume-normalized operator -(1/Vol) div grad, i.e. the Laplacian of the
uniform *probability* measure on the manifold, so that graph Laplacians
built on empirical measures converge to them without rescaling.

The flat torus is represented by its isometric embedding in R^4,
(R1 cos t1, R1 sin t1, R2 cos t2, R2 sin t2) with R_i = L_i / (2 pi); this
keeps "ambient Euclidean distance" meaningful across the periodic seam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, lpmv

TWO_PI = 2.0 * math.pi

# Volume of the unit ball in R^m, m = 1, 2 (enters the eigenvalue counting
# asymptotics).
UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi}


class OffManifoldError(ValueError):
    """A point violates the manifold's defining constraint beyond tolerance."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Points and weights approximating the uniform probability measure."""

    points: np.ndarray   # (Q, ambient_dim)
    weights: np.ndarray  # (Q,), positive, sums to 1

    def __post_init__(self):
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"quadrature weights sum to {total!r}, expected 1")

    @property
    def size(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class PointCloud:
    """An i.i.d. uniform sample from a manifold."""

    points: np.ndarray  # (n, ambient_dim)
    manifold: "Manifold"
    seed: int

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SpectrumTable:
    """Ordered eigenvalues with multiplicity blocks and spectral gaps.

    ``eigenvalues`` holds the first ``count`` volume-normalized eigenvalues
    (with multiplicity).  ``block_starts`` are 0-based indices at which a new
    distinct eigenvalue begins; ``multiplicities[k]`` and ``gaps[k]`` are the
    block multiplicity and the distance to the nearest distinct neighbor of
    eigenvalue k.  A longer private enumeration backs the counting function
    so that N(lambda) is exact at the table boundary.
    """

    eigenvalues: np.ndarray
    block_starts: np.ndarray
    multiplicities: np.ndarray
    gaps: np.ndarray
    beta_star: float
    extended: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def counting(self, lam: float) -> int:
        """N(lambda): number of eigenvalues <= lambda (with multiplicity)."""
        tol = 1e-9 * (1.0 + abs(lam))
        if lam > self.extended[-1] + tol:
            raise ValueError("counting function queried beyond enumerated range")
        return int(np.searchsorted(self.extended, lam + tol, side="right"))

    def blocks(self, upto: int | None = None) -> list[tuple[int, int]]:
        """Multiplicity blocks as (start, end) pairs of 0-based indices,
        end inclusive, restricted to the first ``upto`` eigenvalues."""
        upto = self.count if upto is None else upto
        out = []
        for i, s in enumerate(self.block_starts):
            if s >= upto:
                break
            e = (self.block_starts[i + 1] - 1 if i + 1 < len(self.block_starts)
                 else self.count - 1)
            out.append((int(s), int(min(e, upto - 1))))
        return out

    def block_end_count(self, k: int) -> int:
        """Number of modes through the end of the block containing mode k
        (both counts, i.e. 1-based)."""
        if not 1 <= k <= self.count:
            raise IndexError(f"mode count {k} outside table of {self.count}")
        idx = k - 1
        nxt = np.searchsorted(self.block_starts, idx, side="right")
        if nxt < len(self.block_starts):
            end = int(self.block_starts[nxt])
        else:
            end = self.counting(self.eigenvalues[-1])
        return end


def _blocks_from_values(values: np.ndarray, rel_tol: float = 1e-9):
    """Group a sorted eigenvalue array into blocks of numerically equal
    values.  Returns 0-based start indices."""
    starts = [0]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] > rel_tol * (1.0 + values[i]):
            starts.append(i)
    return np.asarray(starts, dtype=int)


def _beta_star_estimate(gaps_per_index: np.ndarray) -> float:
    """Slope of log(running max of 1/gamma_k) against log k, floored at 0.

    The running envelope is what polynomial-order gap assumptions bound;
    fitting the raw per-index sequence is sign-noisy on spectra whose gaps
    fluctuate (e.g. the flat torus).
    """
    if len(gaps_per_index) < 3:
        return 0.0
    inv = 1.0 / gaps_per_index
    env = np.maximum.accumulate(inv)
    k = np.arange(1, len(env) + 1, dtype=float)
    slope = np.polyfit(np.log(k), np.log(env), 1)[0]
    if slope < 1e-9:  # clamp least-squares noise on flat envelopes
        return 0.0
    return float(slope)


def _assemble_table(ext_values: np.ndarray, count: int) -> SpectrumTable:
    values = ext_values[:count]
    starts = _blocks_from_values(values)
    block_of = np.searchsorted(starts, np.arange(count), side="right") - 1

    # distinct values over the extended range, for gap lookups past the edge
    ext_starts = _blocks_from_values(ext_values)
    distinct = ext_values[ext_starts]

    mult = np.empty(count, dtype=int)
    gaps = np.empty(count)
    for bi, s in enumerate(starts):
        e = starts[bi + 1] if bi + 1 < len(starts) else count
        v = values[s]
        di = int(np.searchsorted(distinct, v + 1e-9 * (1.0 + v)) - 1)
        up = distinct[di + 1] - v if di + 1 < len(distinct) else np.inf
        down = v - distinct[di - 1] if di > 0 else np.inf
        gaps[s:e] = min(up, down)
        # multiplicity from the extended enumeration (the stored slice may
        # clip the final block)
        lo = np.searchsorted(ext_values, v - 1e-9 * (1.0 + v))
        hi = np.searchsorted(ext_values, v + 1e-9 * (1.0 + v), side="right")
        mult[s:e] = hi - lo
    del block_of

    return SpectrumTable(
        eigenvalues=values,
        block_starts=starts,
        multiplicities=mult,
        gaps=gaps,
        beta_star=_beta_star_estimate(gaps),
        extended=ext_values,
    )


class Manifold:
    """Base class: geometry constants plus sampling/spectral services."""

    kind: str
    ambient_dim: int
    intrinsic_dim: int
    volume: float
    curvature_bound: float
    reach: float
    injectivity_radius: float

    # -- sampling ---------------------------------------------------------
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # -- geometry ---------------------------------------------------------
    def geodesic(self, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def geodesic_to_points(self, x: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Vectorized geodesic distance from one point to many."""
        raise NotImplementedError

    def geodesic_paired(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Elementwise geodesic distance between equal-length point lists."""
        raise NotImplementedError

    def geodesic_matrix(self, pts: np.ndarray) -> np.ndarray:
        """All-pairs geodesic distances within one point list."""
        return np.stack([self.geodesic_to_points(p, pts) for p in pts])

    def geodesic_cross(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Cross-distance matrix, shape (len(xs), len(ys))."""
        return np.stack([self.geodesic_to_points(x, ys) for x in xs])

    def chord_radius(self, geodesic_radius: float) -> float:
        """Ambient (Euclidean) radius whose ball contains the geodesic ball
        of the given radius — used to prune KD-tree queries."""
        raise NotImplementedError

    def constraint_residual(self, points: np.ndarray) -> np.ndarray:
        """Deviation from the defining ambient constraint, per point."""
        raise NotImplementedError

    # -- spectrum ---------------------------------------------------------
    def spectrum(self, count: int) -> SpectrumTable:
        if count < 1:
            raise ValueError("count must be >= 1")
        # enumerate past the requested range so the final block is complete
        # and gaps/counting are exact at the boundary
        ext = self._enumerate_eigenvalues(2 * count + 16)
        return _assemble_table(ext, count)

    def _enumerate_eigenvalues(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def eigenfunctions(self, indices, points: np.ndarray) -> np.ndarray:
        """Values phi_k(x), orthonormal in L2 of the uniform probability
        measure; shape (len(points), len(indices))."""
        raise NotImplementedError

    def quadrature(self, size: int | None = None) -> QuadratureGrid:
        raise NotImplementedError

    def as_config(self) -> dict:
        raise NotImplementedError


class Circle(Manifold):
    """Circle of a given radius embedded in R^2."""

    def __init__(self, radius: float = 1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.kind = "circle"
        self.ambient_dim = 2
        self.intrinsic_dim = 1
        self.volume = TWO_PI * self.radius
        self.curvature_bound = 0.0          # intrinsic (sectional) curvature
        self.reach = self.radius
        self.injectivity_radius = math.pi * self.radius

    def sample(self, n, rng):
        theta = rng.uniform(0.0, TWO_PI, size=n)
        return self.radius * np.column_stack([np.cos(theta), np.sin(theta)])

    def _angles(self, points):
        return np.arctan2(points[..., 1], points[..., 0])

    def geodesic(self, x, y):
        d = abs(self._angles(np.asarray(x)) - self._angles(np.asarray(y)))
        d = min(d, TWO_PI - d)
        return self.radius * float(d)

    def geodesic_to_points(self, x, pts):
        d = np.abs(self._angles(np.asarray(pts)) - self._angles(np.asarray(x)))
        return self.radius * np.minimum(d, TWO_PI - d)

    def geodesic_paired(self, xs, ys):
        d = np.abs(self._angles(np.asarray(xs)) - self._angles(np.asarray(ys)))
        return self.radius * np.minimum(d, TWO_PI - d)

    def geodesic_matrix(self, pts):
        th = self._angles(np.asarray(pts))
        d = np.abs(th[:, None] - th[None, :])
        return self.radius * np.minimum(d, TWO_PI - d)

    def geodesic_cross(self, xs, ys):
        d = np.abs(self._angles(np.asarray(xs))[:, None]
                   - self._angles(np.asarray(ys))[None, :])
        return self.radius * np.minimum(d, TWO_PI - d)

    def chord_radius(self, geodesic_radius):
        ang = min(geodesic_radius / self.radius, math.pi)
        return 2.0 * self.radius * math.sin(ang / 2.0)

    def constraint_residual(self, points):
        return np.abs(np.linalg.norm(points, axis=-1) - self.radius)

    def _enumerate_eigenvalues(self, count):
        # frequency j has raw eigenvalue (j/r)^2, multiplicity 2 for j >= 1
        n_blocks = count // 2 + 2
        j = np.arange(n_blocks)
        raw = (j / self.radius) ** 2
        values = np.concatenate([[raw[0]], np.repeat(raw[1:], 2)])
        return (values / self.volume)[:count]

    def eigenfunctions(self, indices, points):
        theta = self._angles(np.asarray(points))
        out = np.empty((len(theta), len(indices)))
        for col, k in enumerate(indices):
            if k == 0:
                out[:, col] = 1.0
            else:
                j = (k + 1) // 2
                if k % 2 == 1:  # 0-based odd index -> cosine of frequency j
                    out[:, col] = math.sqrt(2.0) * np.cos(j * theta)
                else:
                    out[:, col] = math.sqrt(2.0) * np.sin(j * theta)
        return out

    def quadrature(self, size=None):
        q = 4096 if size is None else size
        theta = TWO_PI * np.arange(q) / q
        pts = self.radius * np.column_stack([np.cos(theta), np.sin(theta)])
        return QuadratureGrid(pts, np.full(q, 1.0 / q))

    def as_config(self):
        return {"kind": "circle", "radius": self.radius}


def _real_sph_harm(l: int, m: int, kind: str, cos_theta, phi):
    """Real spherical harmonic orthonormal w.r.t. surface measure.

    kind is "cos" or "sin" (ignored for m = 0).  Uses scipy's associated
    Legendre functions; normalization via log-gammas for stability.
    """
    norm = math.sqrt((2 * l + 1) / (4.0 * math.pi)
                     * math.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))
    leg = lpmv(m, l, cos_theta)
    if m == 0:
        return norm * leg
    if kind == "cos":
        return math.sqrt(2.0) * norm * leg * np.cos(m * phi)
    return math.sqrt(2.0) * norm * leg * np.sin(m * phi)


class Sphere2(Manifold):
    """Round 2-sphere of a given radius embedded in R^3."""

    def __init__(self, radius: float = 1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.kind = "sphere2"
        self.ambient_dim = 3
        self.intrinsic_dim = 2
        self.volume = 4.0 * math.pi * self.radius ** 2
        self.curvature_bound = 1.0 / self.radius ** 2
        self.reach = self.radius
        self.injectivity_radius = math.pi * self.radius

    def sample(self, n, rng):
        g = rng.normal(size=(n, 3))
        norms = np.linalg.norm(g, axis=1)
        # a zero draw has probability 0; guard anyway
        bad = norms < 1e-12
        while np.any(bad):
            g[bad] = rng.normal(size=(int(bad.sum()), 3))
            norms = np.linalg.norm(g, axis=1)
            bad = norms < 1e-12
        return self.radius * g / norms[:, None]

    def geodesic(self, x, y):
        c = float(np.dot(x, y)) / self.radius ** 2
        return self.radius * math.acos(max(-1.0, min(1.0, c)))

    def geodesic_to_points(self, x, pts):
        c = (pts @ np.asarray(x)) / self.radius ** 2
        return self.radius * np.arccos(np.clip(c, -1.0, 1.0))

    def geodesic_paired(self, xs, ys):
        c = np.einsum("ij,ij->i", np.asarray(xs), np.asarray(ys)) / self.radius ** 2
        return self.radius * np.arccos(np.clip(c, -1.0, 1.0))

    def geodesic_matrix(self, pts):
        c = (pts @ pts.T) / self.radius ** 2
        return self.radius * np.arccos(np.clip(c, -1.0, 1.0))

    def geodesic_cross(self, xs, ys):
        c = (np.asarray(xs) @ np.asarray(ys).T) / self.radius ** 2
        return self.radius * np.arccos(np.clip(c, -1.0, 1.0))

    def chord_radius(self, geodesic_radius):
        ang = min(geodesic_radius / self.radius, math.pi)
        return 2.0 * self.radius * math.sin(ang / 2.0)

    def constraint_residual(self, points):
        return np.abs(np.linalg.norm(points, axis=-1) - self.radius)

    def _enumerate_eigenvalues(self, count):
        # degree l has raw eigenvalue l(l+1)/r^2, multiplicity 2l+1
        values = []
        l = 0
        while len(values) < count:
            values.extend([l * (l + 1) / self.radius ** 2] * (2 * l + 1))
            l += 1
        return np.asarray(values[:count]) / self.volume

    def eigenfunctions(self, indices, points):
        pts = np.asarray(points) / self.radius
        cos_theta = np.clip(pts[:, 2], -1.0, 1.0)
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        out = np.empty((len(pts), len(indices)))
        # sqrt(4 pi): convert surface-measure normalization to the uniform
        # probability measure
        scale = math.sqrt(4.0 * math.pi)
        for col, k in enumerate(indices):
            l = 0
            while (l + 1) ** 2 <= k:
                l += 1
            r = k - l ** 2          # position inside the degree-l block
            if r == 0:
                out[:, col] = scale * _real_sph_harm(l, 0, "cos", cos_theta, phi)
            else:
                m = (r + 1) // 2
                kind = "cos" if r % 2 == 1 else "sin"
                out[:, col] = scale * _real_sph_harm(l, m, kind, cos_theta, phi)
        return out

    def quadrature(self, size=None):
        # Gauss-Legendre levels in z crossed with a uniform azimuth grid:
        # exact for spherical harmonics far past the degrees used here.
        # (An equal-weight Fibonacci lattice at this size bottoms out near
        # 2e-5 on the low-degree Gram, which is not good enough.)
        q = 4096 if size is None else size
        side = max(2, int(math.ceil(math.sqrt(q))))
        z, wz = np.polynomial.legendre.leggauss(side)
        phi = TWO_PI * np.arange(side) / side
        zz = np.repeat(z, side)
        ww = np.repeat(wz, side) / (2.0 * side)
        pp = np.tile(phi, side)
        s = np.sqrt(np.clip(1.0 - zz ** 2, 0.0, None))
        pts = self.radius * np.column_stack([s * np.cos(pp), s * np.sin(pp), zz])
        return QuadratureGrid(pts, ww / ww.sum())

    def as_config(self):
        return {"kind": "sphere2", "radius": self.radius}


class FlatTorus2(Manifold):
    """Flat 2-torus with side lengths (L1, L2), embedded isometrically in R^4."""

    def __init__(self, lengths=(TWO_PI, TWO_PI)):
        l1, l2 = float(lengths[0]), float(lengths[1])
        if l1 <= 0 or l2 <= 0:
            raise ValueError("torus side lengths must be positive")
        self.lengths = (l1, l2)
        self.radii = (l1 / TWO_PI, l2 / TWO_PI)
        self.kind = "flat_torus2"
        self.ambient_dim = 4
        self.intrinsic_dim = 2
        self.volume = l1 * l2
        self.curvature_bound = 0.0
        self.reach = min(self.radii)
        self.injectivity_radius = min(l1, l2) / 2.0

    def embed(self, xy: np.ndarray) -> np.ndarray:
        """Map intrinsic coordinates (x, y) in [0,L1)x[0,L2) to R^4."""
        xy = np.atleast_2d(xy)
        t1 = TWO_PI * xy[:, 0] / self.lengths[0]
        t2 = TWO_PI * xy[:, 1] / self.lengths[1]
        r1, r2 = self.radii
        return np.column_stack([r1 * np.cos(t1), r1 * np.sin(t1),
                                r2 * np.cos(t2), r2 * np.sin(t2)])

    def intrinsic(self, points: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`embed`; accepts intrinsic input unchanged."""
        pts = np.atleast_2d(points)
        if pts.shape[1] == 2:
            return pts
        t1 = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        t2 = np.mod(np.arctan2(pts[:, 3], pts[:, 2]), TWO_PI)
        return np.column_stack([t1 * self.lengths[0] / TWO_PI,
                                t2 * self.lengths[1] / TWO_PI])

    def sample(self, n, rng):
        xy = rng.uniform(0.0, 1.0, size=(n, 2)) * np.asarray(self.lengths)
        return self.embed(xy)

    def _wrapped_delta(self, a, b):
        d = np.abs(a - b)
        lengths = np.asarray(self.lengths)
        return np.minimum(d, lengths - d)

    def geodesic(self, x, y):
        xa = self.intrinsic(np.asarray(x))[0]
        ya = self.intrinsic(np.asarray(y))[0]
        d = self._wrapped_delta(xa, ya)
        return float(np.hypot(d[0], d[1]))

    def geodesic_to_points(self, x, pts):
        xa = self.intrinsic(np.asarray(x))[0]
        qs = self.intrinsic(np.asarray(pts))
        d = self._wrapped_delta(qs, xa[None, :])
        return np.hypot(d[:, 0], d[:, 1])

    def geodesic_paired(self, xs, ys):
        xa = self.intrinsic(np.asarray(xs))
        ya = self.intrinsic(np.asarray(ys))
        d = self._wrapped_delta(xa, ya)
        return np.hypot(d[:, 0], d[:, 1])

    def geodesic_matrix(self, pts):
        xy = self.intrinsic(np.asarray(pts))
        d = np.abs(xy[:, None, :] - xy[None, :, :])
        d = np.minimum(d, np.asarray(self.lengths) - d)
        return np.hypot(d[..., 0], d[..., 1])

    def geodesic_cross(self, xs, ys):
        xa = self.intrinsic(np.asarray(xs))
        ya = self.intrinsic(np.asarray(ys))
        d = np.abs(xa[:, None, :] - ya[None, :, :])
        d = np.minimum(d, np.asarray(self.lengths) - d)
        return np.hypot(d[..., 0], d[..., 1])

    def chord_radius(self, geodesic_radius):
        # per-factor chord <= arc, so the Euclidean ball of the same radius
        # contains the geodesic ball
        return geodesic_radius

    def constraint_residual(self, points):
        pts = np.atleast_2d(points)
        if pts.shape[1] == 2:
            return np.zeros(len(pts))
        r1 = np.abs(np.hypot(pts[:, 0], pts[:, 1]) - self.radii[0])
        r2 = np.abs(np.hypot(pts[:, 2], pts[:, 3]) - self.radii[1])
        return np.maximum(r1, r2)

    def _lattice(self, count):
        """Eigenvalue lattice enumeration: raw value (2 pi p / L1)^2 +
        (2 pi q / L2)^2 sorted ascending, with deterministic tie order."""
        bound = 4.0
        while True:
            pmax = int(math.ceil(math.sqrt(bound) * self.lengths[0] / TWO_PI))
            qmax = int(math.ceil(math.sqrt(bound) * self.lengths[1] / TWO_PI))
            p, q = np.meshgrid(np.arange(-pmax, pmax + 1),
                               np.arange(-qmax, qmax + 1), indexing="ij")
            raw = (TWO_PI * p / self.lengths[0]) ** 2 \
                + (TWO_PI * q / self.lengths[1]) ** 2
            keep = raw <= bound
            if keep.sum() >= count:
                p, q, raw = p[keep], q[keep], raw[keep]
                order = np.lexsort((q, p, raw))
                return p[order], q[order], raw[order]
            bound *= 2.0

    def _enumerate_eigenvalues(self, count):
        _, _, raw = self._lattice(count)
        return raw[:count] / self.volume

    def _mode_list(self, upto):
        """First `upto` real eigenfunctions as (p, q, kind) descriptors.

        Each half-lattice representative (p > 0, or p = 0 and q > 0)
        contributes a cosine and a sine mode; (0,0) is the constant.
        """
        # over-enumerate: a value-tied block may be clipped rep-unevenly
        p, q, raw = self._lattice(4 * upto + 32)
        modes = []
        for pi, qi, ri in zip(p, q, raw):
            if pi == 0 and qi == 0:
                modes.append((0, 0, "const", ri))
            elif pi > 0 or (pi == 0 and qi > 0):
                modes.append((pi, qi, "cos", ri))
                modes.append((pi, qi, "sin", ri))
        modes.sort(key=lambda t: (t[3], t[0], t[1], t[2]))
        return modes[:upto]

    def eigenfunctions(self, indices, points):
        xy = self.intrinsic(np.asarray(points))
        t1 = TWO_PI * xy[:, 0] / self.lengths[0]
        t2 = TWO_PI * xy[:, 1] / self.lengths[1]
        upto = max(indices) + 1
        modes = self._mode_list(upto)
        out = np.empty((len(xy), len(indices)))
        for col, k in enumerate(indices):
            p, q, kind, _ = modes[k]
            if kind == "const":
                out[:, col] = 1.0
            elif kind == "cos":
                out[:, col] = math.sqrt(2.0) * np.cos(p * t1 + q * t2)
            else:
                out[:, col] = math.sqrt(2.0) * np.sin(p * t1 + q * t2)
        return out

    def quadrature(self, size=None):
        q = 4096 if size is None else size
        side = max(2, int(round(math.sqrt(q))))
        x = self.lengths[0] * np.arange(side) / side
        y = self.lengths[1] * np.arange(side) / side
        xx, yy = np.meshgrid(x, y, indexing="ij")
        pts = self.embed(np.column_stack([xx.ravel(), yy.ravel()]))
        m = side * side
        return QuadratureGrid(pts, np.full(m, 1.0 / m))

    def as_config(self):
        return {"kind": "flat_torus2", "lengths": list(self.lengths)}


def manifold_from_config(cfg: dict) -> Manifold:
    """Build a manifold from its JSON description."""
    kind = cfg.get("kind")
    if kind == "circle":
        return Circle(cfg.get("radius", 1.0))
    if kind == "sphere2":
        return Sphere2(cfg.get("radius", 1.0))
    if kind == "flat_torus2":
        return FlatTorus2(cfg.get("lengths", (TWO_PI, TWO_PI)))
    raise ValueError(f"unknown manifold kind: {kind!r}")


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def sample_points(manifold: Manifold, n: int, seed: int) -> PointCloud:
    """Draw n i.i.d. uniform points; deterministic given the seed."""
    if n < 2:
        raise ValueError("need at least 2 sample points")
    rng = np.random.default_rng(seed)
    pts = manifold.sample(n, rng)
    return PointCloud(points=pts, manifold=manifold, seed=seed)


def continuum_spectrum(manifold: Manifold, count: int) -> SpectrumTable:
    """First `count` eigenvalues (volume-normalized) with blocks and gaps."""
    return manifold.spectrum(count)


def eval_eigenfunctions(manifold: Manifold, indices, points) -> np.ndarray:
    """Evaluate reference eigenfunctions (0-based indices) at points."""
    indices = list(indices)
    if min(indices, default=0) < 0:
        raise IndexError("eigenfunction index must be nonnegative")
    return manifold.eigenfunctions(indices, np.asarray(points))


def geodesic_distance(manifold: Manifold, x, y, tol: float = 1e-8) -> float:
    """Closed-form geodesic distance; rejects off-manifold input."""
    for p in (x, y):
        res = manifold.constraint_residual(np.asarray(p, dtype=float))
        if float(np.max(res)) > tol:
            raise OffManifoldError(
                f"point {p!r} violates the manifold constraint by {float(np.max(res)):.2e}")
    return manifold.geodesic(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def counting_limit_constant(manifold: Manifold) -> float:
    """Limit of N(lambda) * lambda^{-m/2} for the volume-normalized spectrum.

    For the standard operator the constant is omega_m Vol / (2 pi)^m; the
    1/Vol normalization rescales it by Vol^{m/2}.
    """
    m = manifold.intrinsic_dim
    return UNIT_BALL_VOLUME[m] * manifold.volume ** ((m + 2) / 2.0) / TWO_PI ** m


# ---------------------------------------------------------------------------
# product-sphere gap arithmetic (raw, un-normalized eigenvalues)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapScanReport:
    """Minimum-gap scan of the combined spectrum of a product of two spheres.

    Combined raw eigenvalues are i(i+1) + a_sq_inv * j(j+1); this report uses
    the raw (un-normalized) convention, tagged explicitly, unlike every other
    spectrum in the package.
    """

    a_sq_inv: float
    lambda_max: float
    min_gap: float                       # min positive gap, sorted spectrum
    lower_pair: tuple[int, int]          # (i, j) of the lower value
    upper_pair: tuple[int, int]
    cross_min_gap: float                 # min over the |2i - 2j a^{-2}| family
    cross_pair: tuple[int, int]
    values_scanned: int
    normalization: str = "raw"


def cross_block_gap(i: int, j: int, a_sq_inv: float) -> float:
    """|2i - 2 j a^{-2}|: the gap between the adjacent combined eigenvalues
    i(i+1) + a^{-2}(j-1)j and (i-1)i + a^{-2}j(j+1)."""
    return abs(2.0 * i - 2.0 * j * a_sq_inv)


def product_sphere_gap_scan(a_sq_inv: float, lambda_max: float,
                            max_index: int = 100) -> GapScanReport:
    """Brute-force scan of combined product-sphere eigenvalue gaps.

    Enumerates s_i + a_sq_inv * s_j (s_i = i(i+1)) up to lambda_max, reports
    the minimum positive gap between distinct sorted values and, separately,
    the minimum of the adjacent cross-block family |2i - 2j a^{-2}| over
    index pairs whose two crossing values stay below lambda_max.
    """
    if a_sq_inv <= 0 or lambda_max <= 0:
        raise ValueError("a_sq_inv and lambda_max must be positive")

    imax = 0
    while (imax + 1) * (imax + 2) <= lambda_max and imax < max_index:
        imax += 1
    s = np.arange(imax + 1) * (np.arange(imax + 1) + 1.0)

    vals = s[:, None] + a_sq_inv * s[None, :]
    ii, jj = np.meshgrid(np.arange(imax + 1), np.arange(imax + 1), indexing="ij")
    keep = vals <= lambda_max
    flat = vals[keep]
    fi, fj = ii[keep], jj[keep]
    order = np.argsort(flat, kind="stable")
    flat, fi, fj = flat[order], fi[order], fj[order]

    # deduplicate exactly equal values, keep first index pair per value
    distinct_mask = np.concatenate([[True], np.diff(flat) > 0.0])
    dv = flat[distinct_mask]
    di, dj = fi[distinct_mask], fj[distinct_mask]
    diffs = np.diff(dv)
    a = int(np.argmin(diffs))
    min_gap = float(diffs[a])
    lower_pair = (int(di[a]), int(dj[a]))
    upper_pair = (int(di[a + 1]), int(dj[a + 1]))

    # cross-block family: value constraint applies to both crossing values
    cross_best = math.inf
    cross_pair = (0, 0)
    for i in range(1, imax + 1):
        for j in range(1, imax + 1):
            v1 = s[i] + a_sq_inv * s[j - 1]
            v2 = s[i - 1] + a_sq_inv * s[j]
            if v1 > lambda_max or v2 > lambda_max:
                continue
            g = cross_block_gap(i, j, a_sq_inv)
            if 0.0 < g < cross_best:
                cross_best = g
                cross_pair = (i, j)

    return GapScanReport(
        a_sq_inv=float(a_sq_inv),
        lambda_max=float(lambda_max),
        min_gap=min_gap,
        lower_pair=lower_pair,
        upper_pair=upper_pair,
        cross_min_gap=float(cross_best),
        cross_pair=cross_pair,
        values_scanned=int(len(flat)),
    )
