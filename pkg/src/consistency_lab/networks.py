"""Shallow graph-convolutional network responses.

A single neuron evaluates psi(u, (a, b, c)) = <a, sigma(b * u + c)>, where
the convolution multiplies coefficients in the Laplacian eigenbasis and the
activation acts pointwise on function values.  The discrete response
synthesizes nodal values through an aligned spectral frame and integrates
under the empirical measure (1/n) sum; the continuum response synthesizes
eigenfunctions on a quadrature grid.  A network is a finite signed measure
over parameter triples, evaluated atom by atom.
"""

from __future__ import annotations

import json

import numpy as np

from dataclasses import dataclass
from scipy.special import expit

from .spectral_ops import (
    CONTINUUM,
    DISCRETE,
    ParameterTriple,
    SpectralSignal,
    project_to_ball,
    spectral_discretize,
)
from .transport import spatial_discretize


class Activation:
    """Pointwise nonlinearity with recorded Lipschitz and growth constants.

    ``lipschitz`` bounds |sigma(x) - sigma(y)| / |x - y|; ``growth`` is a
    constant C with ||sigma(v)|| <= C (||v|| + 1) in any (probability-)
    weighted L2 norm.  Convergence constants downstream depend on both, so
    they are carried alongside the callable instead of being hard-coded.
    """

    __slots__ = ("kind", "lipschitz", "growth", "_fn", "_grad")

    def __init__(self, kind, fn, lipschitz, growth, grad=None):
        self.kind = kind
        self._fn = fn
        self.lipschitz = float(lipschitz)
        self.growth = float(growth)
        self._grad = grad

    def __call__(self, x):
        return self._fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        """Pointwise derivative (a subgradient selection where kinked)."""
        if self._grad is None:
            raise ValueError(f"no derivative registered for {self.kind}")
        return self._grad(np.asarray(x, dtype=float))

    def __repr__(self):
        return f"Activation({self.kind!r})"


RELU = Activation("ReLU", lambda x: np.maximum(x, 0.0), 1.0, 1.0,
                  grad=lambda x: (x > 0.0).astype(float))
TANH = Activation("Tanh", np.tanh, 1.0, 1.0,
                  grad=lambda x: 1.0 - np.tanh(x) ** 2)
# max slope 1, sigma(0) = log 2 < 1, so growth constant 1 still works
SOFTPLUS = Activation("Softplus", lambda x: np.logaddexp(0.0, x), 1.0, 1.0,
                      grad=expit)

_BUILTIN = {a.kind.lower(): a for a in (RELU, TANH, SOFTPLUS)}


def activation(kind: str) -> Activation:
    """Look up a built-in activation by name (case-insensitive)."""
    try:
        return _BUILTIN[str(kind).lower()]
    except KeyError:
        names = sorted(a.kind for a in _BUILTIN.values())
        raise ValueError(f"unknown activation {kind!r}; expected one of {names}")


# ---------------------------------------------------------------------------
# continuum synthesis grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSynthesis:
    """Eigenfunctions tabulated on a fixed quadrature grid.

    ``values[q, k]`` holds phi_k at node q, so coefficient vectors
    synthesize to nodal samples by one matmul and inner products reduce to
    weighted sums.  Build one per (manifold, window) and reuse it across
    response evaluations.
    """

    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    @property
    def k_max(self) -> int:
        return self.values.shape[1]

    def synthesize(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        if c.shape[0] > self.k_max:
            raise ValueError(
                f"{c.shape[0]} coefficients but only {self.k_max} tabulated "
                "eigenfunctions")
        return self.values[:, :c.shape[0]] @ c

    def integrate(self, nodal) -> float:
        return float(self.weights @ np.asarray(nodal, dtype=float))


def quadrature_synthesis(manifold, k_max: int, size: int | None = None):
    """Tabulate the first ``k_max`` eigenfunctions on the manifold's grid."""
    grid = manifold.quadrature(size)
    values = manifold.eigenfunctions(range(k_max), grid.points)
    return QuadratureSynthesis(grid.points, grid.weights, values)


def aux_synthesis(plan, k_max: int) -> QuadratureSynthesis:
    """Tabulate eigenfunctions on a transport plan's auxiliary cloud.

    The auxiliary points carry equal weights; integrating against them uses
    the same empirical measure that the plan's cell averages do, which makes
    discrete-vs-continuum comparisons share one measure approximation.
    """
    n_aux = len(plan.aux_points)
    values = plan.manifold.eigenfunctions(range(k_max), plan.aux_points)
    return QuadratureSynthesis(plan.aux_points, np.full(n_aux, 1.0 / n_aux),
                               values)


# ---------------------------------------------------------------------------
# single-neuron responses
# ---------------------------------------------------------------------------

def _pad_to(coeffs, k: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return np.pad(c, (0, k - c.shape[0])) if c.shape[0] < k else c


def _window_coefficients(u, frame) -> np.ndarray:
    """Window coefficients of a discrete signal (spectral or nodal form)."""
    n, k_n = frame.discrete.n, frame.k_n
    if isinstance(u, SpectralSignal):
        if u.basis != DISCRETE or u.n != n:
            raise ValueError("signal does not live on this frame's graph")
        if u.k > k_n:
            raise ValueError(f"signal has {u.k} coefficients; window is {k_n}")
        return _pad_to(u.coeffs, k_n)
    nodal = np.asarray(u, dtype=float)
    if nodal.shape != (n,):
        raise ValueError(f"nodal signal must have shape ({n},), "
                         f"got {nodal.shape}")
    return frame.basis.T @ nodal / n


def _window_triple(theta: ParameterTriple, frame):
    if theta.basis != DISCRETE or theta.a.n != frame.discrete.n:
        raise ValueError("parameters do not live on this frame's graph")
    if theta.a.k > frame.k_n:
        raise ValueError(f"parameters have {theta.a.k} coefficients; "
                         f"window is {frame.k_n}")
    return tuple(_pad_to(s.coeffs, frame.k_n)
                 for s in (theta.a, theta.b, theta.c))


def response_discrete(u, theta: ParameterTriple, frame, act: Activation):
    """psi_n(u, theta): neuron output under the empirical node measure.

    ``u`` may be a discrete SpectralSignal (window coefficients) or a nodal
    array of length n; nodal content orthogonal to the window is invisible
    to both the filter and the outer weight, matching the truncation in the
    parameter space.
    """
    u_hat = _window_coefficients(u, frame)
    a_hat, b_hat, c_hat = _window_triple(theta, frame)
    z = frame.basis @ (b_hat * u_hat + c_hat)
    a_vals = frame.basis @ a_hat
    return float(a_vals @ act(z)) / frame.discrete.n


def response_lifted(u, theta: ParameterTriple, frame, act: Activation):
    """psi_n evaluated through cell-constant lifts onto the auxiliary cloud.

    Lifting nodal values to step functions commutes with the pointwise
    activation, so with balanced transport cells this agrees with
    ``response_discrete`` to rounding error; it exists to check exactly that.
    """
    u_hat = _window_coefficients(u, frame)
    a_hat, b_hat, c_hat = _window_triple(theta, frame)
    z = (frame.basis @ (b_hat * u_hat + c_hat))[frame.plan.assignment]
    a_vals = (frame.basis @ a_hat)[frame.plan.assignment]
    return float(np.mean(a_vals * act(z)))


def _aligned_convolution(b_hat, u_hat, frame) -> np.ndarray:
    """Coefficientwise product taken in the frame-aligned eigenbasis.

    The spectral convolution is basis-dependent inside degenerate eigenvalue
    blocks, and the spectral projections pair coefficients against the
    aligned basis, not the reference one.  Comparing a discrete response to
    a continuum one therefore has to take the product in the aligned basis
    (conjugate by the block mixers) inside the window; above the window the
    reference basis is untouched.  Returns reference-basis coefficients.
    """
    out = b_hat * u_hat
    for (lo, hi), mixer in zip(frame.partition.blocks, frame.mixers):
        if hi > lo:
            out[lo:hi + 1] = mixer @ ((mixer.T @ b_hat[lo:hi + 1])
                                      * (mixer.T @ u_hat[lo:hi + 1]))
    return out


def response_continuum(u: SpectralSignal, theta: ParameterTriple,
                       synth: QuadratureSynthesis, act: Activation,
                       frame=None):
    """psi(u, theta) = <a, sigma(b * u + c)> by quadrature on the manifold.

    With ``frame`` given, the convolution is taken in that frame's aligned
    eigenbasis, which is the right reference when the value is compared
    against a discrete response built on the same frame.
    """
    if not isinstance(u, SpectralSignal) or u.basis != CONTINUUM:
        raise ValueError("continuum response needs a continuum signal")
    if theta.basis != CONTINUUM:
        raise ValueError("continuum response needs continuum parameters")
    k = max(u.k, theta.a.k, frame.k_n if frame is not None else 1)
    if k > synth.k_max:
        raise ValueError(f"synthesis grid tabulates {synth.k_max} modes, "
                         f"need {k}")
    u_hat = _pad_to(u.coeffs, k)
    b_hat = _pad_to(theta.b.coeffs, k)
    if frame is None:
        conv = b_hat * u_hat
    else:
        conv = _aligned_convolution(b_hat, u_hat, frame)
    z = synth.synthesize(conv + _pad_to(theta.c.coeffs, k))
    a_vals = synth.synthesize(_pad_to(theta.a.coeffs, k))
    return synth.integrate(a_vals * act(z))


def baseline_response(theta: ParameterTriple, synth: QuadratureSynthesis,
                      act: Activation):
    """psi(0, theta) = <a, sigma(c)>: the neuron's high-frequency limit."""
    return response_continuum(SpectralSignal([0.0]), theta, synth, act)


def high_frequency_gap(theta: ParameterTriple, synth: QuadratureSynthesis,
                       act: Activation, k: int):
    """Measured |psi(phi_k, theta) - <a, sigma(c)>| and its filter bound.

    A neuron sees the k-th eigenfunction only through the k-th filter
    coefficient, so the gap is at most L_sigma ||a|| |<b, phi_k>|.  Returns
    ``(gap, bound)``.
    """
    if not 0 <= k < synth.k_max:
        raise ValueError(f"mode {k} outside the tabulated window")
    coeffs = np.zeros(k + 1)
    coeffs[k] = 1.0
    gap = abs(response_continuum(SpectralSignal(coeffs), theta, synth, act)
              - baseline_response(theta, synth, act))
    b_k = float(theta.b.coeffs[k]) if k < theta.b.k else 0.0
    bound = act.lipschitz * theta.a.l2_norm() * abs(b_k)
    return gap, bound


def response_bound(u: SpectralSignal, theta: ParameterTriple,
                   act: Activation) -> float:
    """A priori bound C_sigma ||a|| (||b * u|| + ||c|| + 1) on |psi(u, theta)|."""
    k = max(u.k, theta.b.k)
    conv = _pad_to(theta.b.coeffs, k) * _pad_to(u.coeffs, k)
    return (act.growth * theta.a.l2_norm()
            * (float(np.linalg.norm(conv)) + theta.c.l2_norm() + 1.0))


def perturbation_bound(u: SpectralSignal, theta: ParameterTriple,
                       other: ParameterTriple, act: Activation) -> float:
    """Lipschitz bound on |psi(u, theta) - psi(u, other)| for a fixed signal.

    All norms are exact coefficient sums (Parseval in either basis):
    ||a - a'|| C_sigma (1 + ||b*u|| + ||c||)
        + ||a'|| L_sigma (||b*u - b'*u|| + ||c - c'||).
    """
    if theta.basis != other.basis or theta.a.n != other.a.n:
        raise ValueError("parameter triples live in different bases")
    if not isinstance(u, SpectralSignal) or u.basis != theta.basis:
        raise ValueError("signal and parameters live in different bases")
    k = max(u.k, theta.a.k, other.a.k)
    u_hat = _pad_to(u.coeffs, k)
    conv = _pad_to(theta.b.coeffs, k) * u_hat
    conv_other = _pad_to(other.b.coeffs, k) * u_hat
    da = np.linalg.norm(_pad_to(theta.a.coeffs, k) - _pad_to(other.a.coeffs, k))
    dc = np.linalg.norm(_pad_to(theta.c.coeffs, k) - _pad_to(other.c.coeffs, k))
    return float(act.growth * da
                 * (1.0 + np.linalg.norm(conv) + theta.c.l2_norm())
                 + act.lipschitz * other.a.l2_norm()
                 * (np.linalg.norm(conv - conv_other) + dc))


# ---------------------------------------------------------------------------
# finite signed-measure networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureNetwork:
    """A weighted sum of neurons: finitely many (omega, theta) atoms.

    The basis tag and regularity index are stored once and every atom must
    agree with them, so a network is unambiguously a discrete or a continuum
    object.
    """

    atoms: tuple
    alpha: float
    basis: str = CONTINUUM
    n: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms",
                           tuple((float(w), theta) for w, theta in self.atoms))
        if self.basis not in (CONTINUUM, DISCRETE):
            raise ValueError(f"unknown basis tag {self.basis!r}")
        if (self.n is None) != (self.basis == CONTINUUM):
            raise ValueError("discrete networks need n; continuum ones do not")
        for omega, theta in self.atoms:
            if not np.isfinite(omega):
                raise ValueError("atom weights must be finite")
            if (theta.basis != self.basis or theta.a.n != self.n
                    or theta.alpha != self.alpha):
                raise ValueError("atom parameters disagree with network tags")

    @property
    def tv_mass(self) -> float:
        return float(sum(abs(w) for w, _ in self.atoms))

    @property
    def support_size(self) -> int:
        return sum(1 for w, _ in self.atoms if w != 0.0)


def network_eval(net: MeasureNetwork, u, act: Activation, *,
                 frame=None, synth: QuadratureSynthesis | None = None):
    """f(u) = sum_j omega_j psi(u, theta_j) over the network's atoms."""
    if net.basis == DISCRETE:
        if frame is None:
            raise ValueError("evaluating a discrete network needs a frame")
        return float(sum((w * response_discrete(u, theta, frame, act)
                          for w, theta in net.atoms if w != 0.0), 0.0))
    if synth is None:
        raise ValueError("evaluating a continuum network needs a "
                         "synthesis grid")
    return float(sum((w * response_continuum(u, theta, synth, act)
                      for w, theta in net.atoms if w != 0.0), 0.0))


def network_to_json(net: MeasureNetwork) -> str:
    doc = {
        "basis": net.basis,
        "alpha": net.alpha,
        "atoms": [{"omega": w,
                   "a": list(theta.a.coeffs),
                   "b": list(theta.b.coeffs),
                   "c": list(theta.c.coeffs)} for w, theta in net.atoms],
    }
    if net.n is not None:
        doc["n"] = net.n
    return json.dumps(doc)


def network_from_json(text: str) -> MeasureNetwork:
    doc = json.loads(text)
    basis, n, alpha = doc["basis"], doc.get("n"), float(doc["alpha"])

    def signal(values):
        return SpectralSignal(values, basis=basis, n=n)

    atoms = tuple(
        (float(atom["omega"]),
         ParameterTriple(a=signal(atom["a"]), b=signal(atom["b"]),
                         c=signal(atom["c"]), alpha=alpha))
        for atom in doc["atoms"])
    return MeasureNetwork(atoms=atoms, alpha=alpha, basis=basis, n=n)


def sample_parameters(eigenvalues, alpha: float, count: int, seed, *,
                      decay: float = 1.0, basis: str = CONTINUUM,
                      n: int | None = None):
    """Draw a dictionary of ``count`` random parameter triples.

    Coefficients are independent Gaussians with per-mode scale
    (1 + sqrt(lambda_k))^(-decay), then projected into the parameter ball:
    H^alpha for the outer weight and bias, plain L2 for the filter.
    Deterministic in ``seed``.
    """
    if count < 1:
        raise ValueError("dictionary needs at least one atom")
    lam = np.asarray(eigenvalues, dtype=float)
    scales = (1.0 + np.sqrt(np.maximum(lam, 0.0))) ** (-float(decay))
    rng = np.random.default_rng(seed)
    triples = []
    for _ in range(count):
        draws = rng.standard_normal((3, lam.size)) * scales
        a, b, c = (SpectralSignal(row, basis=basis, n=n) for row in draws)
        triples.append(ParameterTriple(a=project_to_ball(a, alpha, lam),
                                       b=project_to_ball(b, 0.0, lam),
                                       c=project_to_ball(c, alpha, lam),
                                       alpha=alpha))
    return triples


def convolution_commutator(b: SpectralSignal, u_nodal, frame) -> float:
    """Defect of swapping lift and convolution, in the auxiliary L2 norm.

    Compares the cell-constant lift of the discrete convolution (S_n b) *_n v
    against the continuum convolution of the round-tripped filter with the
    lifted signal, both sampled on the plan's auxiliary cloud and both taken
    in the frame-aligned eigenbasis.  The filter is band-limited, so every
    continuum coefficient involved reduces to a cell average and no
    quadrature beyond the plan's own measure enters.  Assumes balanced cells
    (equal auxiliary counts), which ``balanced_cells`` yields.
    """
    if not isinstance(b, SpectralSignal) or b.basis != CONTINUUM:
        raise ValueError("the filter must be a continuum signal")
    plan, n = frame.plan, frame.discrete.n
    v = np.asarray(u_nodal, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"nodal signal must have shape ({n},)")
    b_window = spectral_discretize(b, 0.0, frame).coeffs
    u_hat = frame.basis.T @ v / n
    lifted = (frame.basis @ (b_window * u_hat))[plan.assignment]
    phi_aligned = frame.aligned_eigenfunctions(plan.aux_points)
    lift_coeffs = spatial_discretize(plan, phi_aligned).T @ v / n
    smooth = phi_aligned @ (b_window * lift_coeffs)
    return float(np.sqrt(np.mean((lifted - smooth) ** 2)))
