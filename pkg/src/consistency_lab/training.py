"""Regularized empirical risk over dictionary-supported measure networks.

The training problems live on finite signed measures nu = sum_j omega_j
delta_{theta_j} with atoms drawn from a shared parameter dictionary; the
objective is the mean loss of the network's predictions plus a total-variation
penalty, which on this class is the l1 norm of the atom weights.  Restricting
to a fixed dictionary keeps the discrete and continuum programs on the same
atoms (projected per resolution), so their minima can be compared directly
along a graph ladder.  The restriction error is shared by every level and is
reported as a caveat in ladder reports rather than silently absorbed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .networks import (
    TANH,
    Activation,
    MeasureNetwork,
    QuadratureSynthesis,
    network_eval,
    response_continuum,
    response_discrete,
    sample_parameters,
)
from .seeding import mix_seed
from .spectral_ops import (
    CONTINUUM,
    DISCRETE,
    ParameterTriple,
    SpectralSignal,
    project_to_ball,
    spectral_discretize,
    spectral_extend,
)
from .transport import spatial_discretize

LOSSES = ("squared", "logistic")
RESTRICTIONS = ("spectral", "spatial")

# weights below this fraction of the largest one do not count as support
SUPPORT_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# training data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingSet:
    """Continuum signals with labels and a note on how they were produced."""

    signals: tuple
    labels: np.ndarray
    teacher: str

    def __post_init__(self):
        object.__setattr__(self, "signals", tuple(self.signals))
        object.__setattr__(self, "labels",
                          np.asarray(self.labels, dtype=float))
        if len(self.signals) < 1:
            raise ValueError("a training set needs at least one pair")
        if self.labels.shape != (len(self.signals),):
            raise ValueError("one label per signal required")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels must be finite")
        for u in self.signals:
            if not isinstance(u, SpectralSignal) or u.basis != CONTINUUM:
                raise ValueError("training signals must be continuum signals")

    @property
    def l(self) -> int:
        return len(self.signals)


def sample_signals(eigenvalues, count: int, seed, *, decay: float = 1.0):
    """Random band-limited signals with per-mode decay (1+sqrt(lambda))^-s."""
    if count < 1:
        raise ValueError("need at least one signal")
    lam = np.asarray(eigenvalues, dtype=float)
    scales = (1.0 + np.sqrt(np.maximum(lam, 0.0))) ** (-float(decay))
    rng = np.random.default_rng(seed)
    return [SpectralSignal(rng.standard_normal(lam.size) * scales)
            for _ in range(count)]


def make_training_set(teacher, eigenvalues, synth: QuadratureSynthesis,
                      l: int, seed, act: Activation = TANH, *,
                      decay: float = 1.0) -> TrainingSet:
    """Draw ``l`` signals and label them with a teacher network or functional."""
    signals = sample_signals(eigenvalues, l, seed, decay=decay)
    if isinstance(teacher, MeasureNetwork):
        labels = [network_eval(teacher, u, act, synth=synth) for u in signals]
        descriptor = f"measure network ({teacher.support_size} atoms)"
    elif callable(teacher):
        labels = [float(teacher(u)) for u in signals]
        descriptor = getattr(teacher, "__name__", "functional")
    else:
        raise TypeError("teacher must be a MeasureNetwork or a callable")
    return TrainingSet(signals=tuple(signals), labels=np.asarray(labels),
                       teacher=descriptor)


def sample_dictionary(table, k: int, alpha: float, count: int, seed, *,
                      decay: float = 1.0):
    """Parameter dictionary whose filters are constant on eigenvalue blocks.

    Averaging the filter coefficients over each multiplicity block makes
    every filter a function of the eigenvalue alone, so convolution responses
    do not depend on how a degenerate eigenspace happens to be rotated at a
    given resolution.  With that invariance the continuum objective is a
    single resolution-independent number that the discrete ladder can be
    compared against.  The averaging is an orthogonal projection, so atoms
    stay inside the parameter ball.
    """
    triples = sample_parameters(table.eigenvalues[:k], alpha, count, seed,
                                decay=decay)
    blocks = table.blocks(upto=k)
    out = []
    for t in triples:
        b = t.b.coeffs.copy()
        for lo, hi in blocks:
            b[lo:hi + 1] = b[lo:hi + 1].mean()
        out.append(ParameterTriple(a=t.a, b=SpectralSignal(b), c=t.c,
                                   alpha=t.alpha))
    return out


# ---------------------------------------------------------------------------
# assembled problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErmProblem:
    """Finite-dictionary empirical risk data: rows are signals, columns atoms."""

    features: np.ndarray
    labels: np.ndarray
    zeta: float
    loss: str = "squared"
    level: str = "continuum"

    def __post_init__(self):
        object.__setattr__(self, "features",
                          np.asarray(self.features, dtype=float))
        object.__setattr__(self, "labels",
                          np.asarray(self.labels, dtype=float))
        if self.features.ndim != 2:
            raise ValueError("features must be a matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per feature row required")
        if not (np.all(np.isfinite(self.features))
                and np.all(np.isfinite(self.labels))):
            raise ValueError("features and labels must be finite")
        if not self.zeta >= 0.0:
            raise ValueError("the penalty weight must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")

    @property
    def l(self) -> int:
        return self.features.shape[0]

    @property
    def dictionary_size(self) -> int:
        return self.features.shape[1]


def restrict_signal(u: SpectralSignal, frame, how: str = "spectral"):
    """Discretize a continuum signal: spectral window map or cell averages."""
    if how == "spectral":
        return spectral_discretize(u, 0.0, frame)
    if how == "spatial":
        plan = frame.plan
        values = plan.manifold.eigenfunctions(range(u.k),
                                              plan.aux_points) @ u.coeffs
        return spatial_discretize(plan, values)
    raise ValueError(f"restriction must be one of {RESTRICTIONS}")


def multiplier_project(theta: ParameterTriple, frame) -> ParameterTriple:
    """Discretize an atom whose filter is a spectral multiplier.

    The outer weight and bias are functions and go through the aligned
    spectral maps.  The filter, by contrast, is a multiplier sequence indexed
    by eigenvalue: it is truncated to the window with its values untouched,
    so that it scales the aligned mode of the same index.  For filters that
    are constant on multiplicity blocks — the only kind this module's
    dictionaries produce — the resulting discrete convolution matches the
    continuum convolution of the reference basis exactly, because a blockwise
    scalar commutes with whatever rotation the frame introduces inside each
    degenerate eigenspace.
    """
    if theta.basis != CONTINUUM:
        raise ValueError("multiplier_project expects a continuum triple")
    k_n, n = frame.k_n, frame.discrete.n
    b = theta.b.coeffs[:k_n]
    b = np.pad(b, (0, k_n - b.size))
    return ParameterTriple(
        a=spectral_discretize(theta.a, theta.alpha, frame),
        b=SpectralSignal(b, basis=DISCRETE, n=n),
        c=spectral_discretize(theta.c, theta.alpha, frame),
        alpha=theta.alpha)


def multiplier_extend(theta: ParameterTriple, frame) -> ParameterTriple:
    """Lift a discrete multiplier-filter atom back to the continuum.

    Inverse convention of :func:`multiplier_project`: functions go through
    the aligned extension maps, the filter keeps its values.  Projecting then
    extending a window-limited atom is exactly the identity.
    """
    if theta.basis != DISCRETE:
        raise ValueError("multiplier_extend expects a discrete triple")
    return ParameterTriple(
        a=spectral_extend(theta.a, theta.alpha, frame),
        b=SpectralSignal(theta.b.coeffs.copy()),
        c=spectral_extend(theta.c, theta.alpha, frame),
        alpha=theta.alpha)


def assemble_features(tset: TrainingSet, dictionary, zeta: float, *,
                      level: str = "continuum",
                      synth: QuadratureSynthesis | None = None,
                      frame=None, restriction: str = "spectral",
                      act: Activation = TANH,
                      loss: str = "squared") -> ErmProblem:
    """Tabulate responses of every training signal against every atom."""
    if len(dictionary) < 1:
        raise ValueError("the dictionary must be non-empty")
    if level == "continuum":
        if synth is None:
            raise ValueError("continuum features need a synthesis grid")
        psi = np.array([[response_continuum(u, theta, synth, act, frame=frame)
                         for theta in dictionary] for u in tset.signals])
        tag = "continuum"
    elif level == "discrete":
        if frame is None:
            raise ValueError("discrete features need a spectral frame")
        atoms = [multiplier_project(theta, frame) for theta in dictionary]
        restricted = [restrict_signal(u, frame, restriction)
                      for u in tset.signals]
        psi = np.array([[response_discrete(u, theta, frame, act)
                         for theta in atoms] for u in restricted])
        tag = f"discrete(n={frame.discrete.n})"
    else:
        raise ValueError("level must be 'continuum' or 'discrete'")
    return ErmProblem(features=psi, labels=tset.labels, zeta=zeta, loss=loss,
                      level=tag)


def _data_term(predictions, labels, loss):
    if loss == "squared":
        return float(np.mean((predictions - labels) ** 2))
    # logistic, labels in {-1, +1}
    return float(np.mean(np.logaddexp(0.0, -labels * predictions)))


def _data_gradient(problem: ErmProblem, omega):
    residual = problem.features @ omega
    if problem.loss == "squared":
        residual = residual - problem.labels
        value = float(np.mean(residual ** 2))
        grad = (2.0 / problem.l) * (problem.features.T @ residual)
    else:
        margins = -problem.labels * residual
        value = float(np.mean(np.logaddexp(0.0, margins)))
        sig = 1.0 / (1.0 + np.exp(-margins))
        grad = problem.features.T @ (-problem.labels * sig) / problem.l
    return value, grad


def erm_objective(problem: ErmProblem, omega) -> float:
    """Mean loss of the dictionary combination plus the l1 penalty."""
    omega = np.asarray(omega, dtype=float)
    return (_data_term(problem.features @ omega, problem.labels, problem.loss)
            + problem.zeta * float(np.sum(np.abs(omega))))


def zeta_ceiling(problem: ErmProblem) -> float:
    """Smallest penalty weight at which the zero measure is optimal."""
    _, grad = _data_gradient(problem, np.zeros(problem.dictionary_size))
    return float(np.max(np.abs(grad)))


def erm_value(net: MeasureNetwork, signals, labels, zeta: float,
              act: Activation, *, synth: QuadratureSynthesis | None = None,
              frame=None, loss: str = "squared") -> float:
    """Objective of an explicit network on given (signal, label) pairs."""
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (len(signals),):
        raise ValueError("one label per signal required")
    preds = np.array([network_eval(net, u, act, synth=synth, frame=frame)
                      for u in signals])
    return _data_term(preds, labels, loss) + zeta * net.tv_mass


def dictionary_network(weights, dictionary, *, alpha=None) -> MeasureNetwork:
    """Bundle solver weights and their atoms into a measure network."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(dictionary),):
        raise ValueError("one weight per dictionary atom required")
    if alpha is None:
        alpha = dictionary[0].alpha
    first = dictionary[0].a
    atoms = tuple((float(w), theta) for w, theta in zip(weights, dictionary)
                  if w != 0.0)
    return MeasureNetwork(atoms=atoms, alpha=alpha, basis=first.basis,
                          n=first.n)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def soft_threshold(x, tau: float):
    """Proximal map of tau * |.|_1."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def simplex_projection(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.max(idx[u - css / idx > 0.0])
    return np.maximum(v - css[rho - 1] / rho, 0.0)


@dataclass(frozen=True)
class ErmSolution:
    """Solver output with its own convergence diagnostics."""

    weights: np.ndarray
    value: float
    iterations: int
    certificate: float
    converged: bool
    history: np.ndarray = field(repr=False)
    restarts: tuple = ()

    @property
    def support(self) -> np.ndarray:
        w = np.abs(self.weights)
        if w.size == 0 or w.max() == 0.0:
            return np.array([], dtype=int)
        return np.flatnonzero(w > SUPPORT_FLOOR * w.max())


def optimality_residual(problem: ErmProblem, omega) -> float:
    """l1 subgradient optimality defect: zero exactly at a minimizer."""
    omega = np.asarray(omega, dtype=float)
    _, grad = _data_gradient(problem, omega)
    on = omega != 0.0
    defect = np.where(on, np.abs(grad + problem.zeta * np.sign(omega)),
                      np.maximum(np.abs(grad) - problem.zeta, 0.0))
    return float(defect.max())


def _smooth_lipschitz(problem: ErmProblem) -> float:
    top = np.linalg.norm(problem.features, 2) ** 2
    if problem.loss == "squared":
        return 2.0 * top / problem.l
    return 0.25 * top / problem.l


def _accelerated_prox(problem, prox, penalty_of, max_iter, rel_tol,
                      settled=None, start=None):
    """FISTA with a monotone restart; shared by the l1 and simplex solvers.

    A momentum step that would increase the objective is discarded: momentum
    is reset and a plain proximal-gradient step from the current iterate is
    taken instead, which cannot increase the objective at step 1/L.  The
    recorded objective history is therefore non-increasing throughout.
    ``settled``, if given, is an extra predicate on the iterate that must
    hold before the relative-objective stop is honored; it is only evaluated
    once the objective has flattened.
    """
    lip = _smooth_lipschitz(problem)
    if not np.isfinite(lip):
        raise RuntimeError("could not set a step size: features are "
                           "ill-scaled")
    step = 1.0 / lip if lip > 0.0 else 1.0

    def objective(w):
        value, _ = _data_gradient(problem, w)
        return value + penalty_of(w)

    if start is None:
        x = np.zeros(problem.dictionary_size)
    else:
        x = np.asarray(start, dtype=float).copy()
        if x.shape != (problem.dictionary_size,):
            raise ValueError("warm start must have one weight per atom")
    z = x.copy()
    t = 1.0
    f_x = objective(x)
    history = [f_x]
    restarts = []
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        _, grad = _data_gradient(problem, z)
        candidate = prox(z - step * grad, step)
        f_cand = objective(candidate)
        if f_cand > f_x:
            restarts.append(it)
            t = 1.0
            _, grad = _data_gradient(problem, x)
            candidate = prox(x - step * grad, step)
            f_cand = objective(candidate)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = candidate + ((t - 1.0) / t_next) * (candidate - x)
        t = t_next
        x, f_prev, f_x = candidate, f_x, f_cand
        history.append(f_x)
        if abs(f_prev - f_x) <= rel_tol * max(1.0, abs(f_x)):
            if settled is None or settled(x):
                converged = True
                break
    return x, f_x, iterations, converged, np.array(history), tuple(restarts)


def solve_l1(problem: ErmProblem, *, max_iter: int = 50_000,
             rel_tol: float = 1e-10, start=None) -> ErmSolution:
    """Minimize the l1-penalized risk over signed dictionary weights.

    Stops once the relative objective change falls below ``rel_tol`` and, for
    a positive penalty, the subgradient optimality defect is below
    1e-6 * |features' labels|_inf — the flat-objective stop alone can leave
    the defect an order of magnitude larger.  ``start`` warm-starts the
    iteration; when minimizers are not unique this picks out the one nearest
    the starting basin, which makes solutions of nearby problems comparable.
    """
    gauge = float(np.max(np.abs(problem.features.T @ problem.labels)))
    settled = None
    if problem.zeta > 0.0 and gauge > 0.0:
        settled = (lambda w:
                   optimality_residual(problem, w) <= 1e-6 * gauge)
    x, f_x, iterations, converged, history, restarts = _accelerated_prox(
        problem,
        prox=lambda w, s: soft_threshold(w, s * problem.zeta),
        penalty_of=lambda w: problem.zeta * float(np.sum(np.abs(w))),
        max_iter=max_iter, rel_tol=rel_tol, settled=settled, start=start)
    if problem.zeta > 0.0:
        # a coordinate whose data gradient sits strictly inside the penalty
        # band is zero at any exact minimizer; drop stragglers the iteration
        # was still shrinking, provided that does not raise the objective
        _, grad = _data_gradient(problem, x)
        inactive = np.abs(grad) < problem.zeta - 10.0 * max(
            optimality_residual(problem, x), 1e-15)
        if np.any(inactive & (x != 0.0)):
            trial = np.where(inactive, 0.0, x)
            f_trial = (_data_gradient(problem, trial)[0]
                       + problem.zeta * float(np.sum(np.abs(trial))))
            if f_trial <= f_x * (1.0 + 1e-12) + 1e-15:
                x, f_x = trial, f_trial
    x, f_x = _face_vertex(problem, x, f_x)
    return ErmSolution(weights=x, value=f_x, iterations=iterations,
                       certificate=optimality_residual(problem, x),
                       converged=converged, history=history,
                       restarts=restarts)


def _face_vertex(problem, x, f_x):
    """Walk the optimal face down to a minimizer with at most l atoms.

    When the solver lands inside a face of the solution set with more active
    atoms than training pairs, the active columns have a null direction;
    moving along it keeps predictions (hence the data term, and at an optimal
    face the penalty) unchanged until a coordinate hits zero.  This is the
    constructive half of the representer bound.  Any step that would raise
    the objective is rejected, so the walk only ever moves within the face.
    """
    x = x.copy()
    for _ in range(problem.dictionary_size):
        active = np.flatnonzero(x)
        if active.size <= problem.l:
            break
        sub = problem.features[:, active]
        null = np.linalg.svd(sub, full_matrices=True)[2][problem.l:]
        direction = null[0]
        # the data term is exactly constant along the null line, but at a
        # finite certificate the penalty has a small slope there; orient the
        # step downhill so the walk never leaves the near-optimal face
        if float(np.sign(x[active]) @ direction) > 0.0:
            direction = -direction
        moving = direction != 0.0
        if not np.any(moving):
            break
        steps = -x[active][moving] / direction[moving]
        forward = steps > 0.0
        if np.any(forward):
            pick = np.flatnonzero(forward)[np.argmin(steps[forward])]
        else:
            pick = int(np.argmin(np.abs(steps)))
        t = steps[pick]
        trial = x.copy()
        trial[active] = x[active] + t * direction
        trial[active[moving][pick]] = 0.0
        f_trial = (_data_gradient(problem, trial)[0]
                   + problem.zeta * float(np.sum(np.abs(trial))))
        if f_trial > f_x * (1.0 + 1e-10) + 1e-15:
            break
        x, f_x = trial, f_trial
    return x, f_x


def solve_simplex(problem: ErmProblem, *, max_iter: int = 50_000,
                  rel_tol: float = 1e-12) -> ErmSolution:
    """Minimize the risk over probability weights (non-negative, total 1).

    The total-variation mass is pinned at one, so the penalty contributes a
    constant; the certificate reported is the step-scaled fixed-point defect
    of the projected gradient map.
    """
    x, f_x, iterations, converged, history, restarts = _accelerated_prox(
        problem,
        prox=lambda w, s: simplex_projection(w),
        penalty_of=lambda w: problem.zeta,
        max_iter=max_iter, rel_tol=rel_tol)
    lip = _smooth_lipschitz(problem)
    step = 1.0 / lip if lip > 0.0 else 1.0
    _, grad = _data_gradient(problem, x)
    fixed_point = np.max(np.abs(x - simplex_projection(x - step * grad)))
    return ErmSolution(weights=x, value=f_x, iterations=iterations,
                       certificate=float(fixed_point / step),
                       converged=converged, history=history,
                       restarts=restarts)


# ---------------------------------------------------------------------------
# particle descent (exploration mode, excluded from acceptance paths)
# ---------------------------------------------------------------------------


def particle_descent(tset: TrainingSet, net: MeasureNetwork, zeta: float,
                     act: Activation, synth: QuadratureSynthesis,
                     eigenvalues, *, steps: int = 200, lr: float = 0.05):
    """Joint gradient descent on atom weights and positions.

    Weights take a proximal step for the l1 penalty; atom coefficients take
    a gradient step and are projected back into the parameter ball.  The
    problem is nonconvex, so only the recorded objective trace — not any
    optimality — is meaningful.  Returns the final network and the trace.
    """
    if net.basis != CONTINUUM:
        raise ValueError("particle descent runs on continuum networks")
    if not net.atoms:
        raise ValueError("particle descent needs at least one atom")
    lam = np.asarray(eigenvalues, dtype=float)
    alpha = net.alpha
    k = net.atoms[0][1].a.k
    if lam.size < k:
        raise ValueError("eigenvalue table shorter than atom coefficients")
    lam = lam[:k]
    grid = synth.values[:, :k]
    weights_q = synth.weights

    omegas = np.array([w for w, _ in net.atoms])
    a_mat = np.array([t.a.coeffs for _, t in net.atoms])
    b_mat = np.array([t.b.coeffs for _, t in net.atoms])
    c_mat = np.array([t.c.coeffs for _, t in net.atoms])
    u_hat = np.array([np.pad(u.coeffs[:k], (0, max(0, k - u.k)))
                      for u in tset.signals])
    y = tset.labels
    l = tset.l

    def build(omegas, a_mat, b_mat, c_mat):
        atoms = tuple(
            (float(w), ParameterTriple(a=SpectralSignal(a),
                                       b=SpectralSignal(b),
                                       c=SpectralSignal(c), alpha=alpha))
            for w, a, b, c in zip(omegas, a_mat, b_mat, c_mat))
        return MeasureNetwork(atoms=atoms, alpha=alpha)

    trace = []
    for _ in range(steps):
        # responses and per-atom gradients, vectorized over the grid
        psi = np.empty((len(omegas), l))
        grad_a = np.empty_like(a_mat)
        grad_b = np.empty_like(b_mat)
        grad_c = np.empty_like(c_mat)
        da = np.zeros_like(a_mat)
        db = np.zeros_like(b_mat)
        dc = np.zeros_like(c_mat)
        for j in range(len(omegas)):
            av = grid @ a_mat[j]
            z = grid @ (b_mat[j][:, None] * u_hat.T + c_mat[j][:, None])
            sz = act(z)
            psi[j] = weights_q @ (av[:, None] * sz)
        preds = omegas @ psi
        residual = (2.0 / l) * (preds - y)
        value = float(np.mean((preds - y) ** 2)) \
            + zeta * float(np.sum(np.abs(omegas)))
        trace.append(value)
        for j in range(len(omegas)):
            av = grid @ a_mat[j]
            z = grid @ (b_mat[j][:, None] * u_hat.T + c_mat[j][:, None])
            sz = act(z)
            dz = act.gradient(z)
            pull = weights_q[:, None] * (av[:, None] * dz)
            grad_a[j] = grid.T @ (weights_q[:, None] * sz) @ residual
            grad_c[j] = (grid.T @ pull) @ residual
            grad_b[j] = ((grid.T @ pull) * u_hat.T) @ residual
            da[j] = omegas[j] * grad_a[j]
            db[j] = omegas[j] * grad_b[j]
            dc[j] = omegas[j] * grad_c[j]
        omegas = soft_threshold(omegas - lr * (psi @ residual), lr * zeta)
        a_mat = a_mat - lr * da
        b_mat = b_mat - lr * db
        c_mat = c_mat - lr * dc
        for j in range(len(omegas)):
            a_mat[j] = project_to_ball(SpectralSignal(a_mat[j]), alpha,
                                       lam).coeffs
            b_mat[j] = project_to_ball(SpectralSignal(b_mat[j]), 0.0,
                                       lam).coeffs
            c_mat[j] = project_to_ball(SpectralSignal(c_mat[j]), alpha,
                                       lam).coeffs
    final = build(omegas, a_mat, b_mat, c_mat)
    trace.append(erm_value(final, tset.signals, y, zeta, act, synth=synth))
    return final, np.array(trace)


# ---------------------------------------------------------------------------
# ladder orchestration
# ---------------------------------------------------------------------------

DICTIONARY_CAVEAT = ("objectives are restricted to a shared finite dictionary;"
                     " reported gaps compare dictionary-constrained minima,"
                     " not minima over all measures")


def _default_teacher(dictionary, seed) -> MeasureNetwork:
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(dictionary), size=min(3, len(dictionary)),
                       replace=False)
    weights = rng.standard_normal(picks.size)
    atoms = tuple((float(w), dictionary[i]) for w, i in zip(weights, picks))
    return MeasureNetwork(atoms=atoms, alpha=dictionary[0].alpha)


def train_ladder(frames, table, synth: QuadratureSynthesis, *, seed: int = 0,
                 dictionary_size: int = 256, l: int = 16, heldout: int = 8,
                 zeta_rel: float = 1e-3, alpha: float = 0.5,
                 act: Activation = TANH, restriction: str = "spatial",
                 teacher=None, decay: float = 1.0, solver: str = "l1",
                 max_iter: int = 50_000) -> dict:
    """Minimize the shared-dictionary risk at every level of a graph ladder.

    The dictionary is sampled once in the continuum on the common spectral
    window of the frames, the continuum problem fixes the penalty weight as
    ``zeta_rel`` times the smallest weight that zeroes it out, and each
    discrete problem reuses that weight with per-resolution projected atoms.
    Discrete minimizers are lifted back to continuum networks and compared
    with the continuum minimizer on held-out signals.

    The default signal restriction is the cell-average one: its
    discretization error decays smoothly with resolution, so objective and
    prediction gaps show their convergence trend well above solver noise,
    whereas the spectral restriction starts so accurate that the gaps sit at
    the solver tolerance from the first rung.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("the ladder needs at least one frame")
    k_w = frames[0].k_n
    if any(f.k_n != k_w for f in frames):
        raise ValueError("ladder frames must share one spectral window")
    solve = {"l1": solve_l1, "simplex": solve_simplex}.get(solver)
    if solve is None:
        raise ValueError("solver must be 'l1' or 'simplex'")

    dictionary = sample_dictionary(table, k_w, alpha, dictionary_size,
                                   mix_seed(seed, "erm-dictionary"))
    if teacher is None:
        teacher = _default_teacher(dictionary, mix_seed(seed, "erm-teacher"))
    tset = make_training_set(teacher, table.eigenvalues, synth, l,
                             mix_seed(seed, "erm-signals"), act, decay=decay)
    label_scale = float(np.max(np.abs(tset.labels)))

    base = assemble_features(tset, dictionary, 0.0, level="continuum",
                             synth=synth, act=act)
    zeta_max = zeta_ceiling(base)
    zeta = zeta_rel * zeta_max
    continuum_problem = dataclasses.replace(base, zeta=zeta)
    continuum_sol = solve(continuum_problem, max_iter=max_iter)

    heldout_signals = sample_signals(table.eigenvalues, heldout,
                                     mix_seed(seed, "erm-heldout"),
                                     decay=decay)
    heldout_features = np.array([[response_continuum(u, theta, synth, act)
                                  for theta in dictionary]
                                 for u in heldout_signals])
    continuum_preds = heldout_features @ continuum_sol.weights

    report = {
        "seed": seed,
        "zeta": float(zeta),
        "zeta_max": float(zeta_max),
        "label_scale": label_scale,
        "teacher": tset.teacher,
        "solver": solver,
        "restriction": restriction,
        "caveat": DICTIONARY_CAVEAT,
        "continuum": {
            "objective": float(continuum_sol.value),
            "support": int(continuum_sol.support.size),
            "iterations": int(continuum_sol.iterations),
            "certificate": float(continuum_sol.certificate),
        },
        "levels": [],
    }
    for frame in frames:
        problem = assemble_features(tset, dictionary, zeta, level="discrete",
                                    frame=frame, restriction=restriction,
                                    act=act)
        if solver == "l1":
            # start each discrete solve from the continuum minimizer so that
            # near-degenerate optima resolve the same way at every level
            sol = solve(problem, max_iter=max_iter,
                        start=continuum_sol.weights)
        else:
            sol = solve(problem, max_iter=max_iter)
        lifted = [multiplier_extend(multiplier_project(theta, frame), frame)
                  for theta in dictionary]
        lifted_features = np.array([[response_continuum(u, theta, synth, act)
                                     for theta in lifted]
                                    for u in heldout_signals])
        gaps = np.abs(lifted_features @ sol.weights - continuum_preds)
        report["levels"].append({
            "n": int(frame.discrete.n),
            "k_n": int(frame.k_n),
            "objective": float(sol.value),
            "objective_gap": float(abs(sol.value - continuum_sol.value)),
            "support": int(sol.support.size),
            "iterations": int(sol.iterations),
            "certificate": float(sol.certificate),
            "heldout_gaps": [float(g) for g in gaps],
            "zeta": float(zeta),
        })
    return report
