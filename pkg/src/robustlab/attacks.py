"""Projected gradient descent attacks and nearest-error distance search.

The attack ascends a margin-violation loss (how far the best wrong logit
is above the label logit; for targeted attacks, how far the target logit
is below the best other logit), projecting each iterate back onto the
epsilon-ball of the configured norm. The nearest-error search bisects on
the ball radius and finishes with a line search along the segment from
the clean point to the best witness, so on linear models it recovers the
analytic boundary distance almost exactly.

Attacks on distinct points are independent; the batch entry points run
them in lockstep as vectorized numpy, which is the parallel evaluation
order the per-point RNG keying makes safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import Classifier
from .rng import substream

__all__ = [
    "PgdConfig",
    "PgdTemplate",
    "NearestErrorSearch",
    "AttackResult",
    "BoundaryDistanceEstimate",
    "NonFiniteGradientError",
    "pgd",
    "pgd_batch",
    "nearest_error",
    "nearest_error_batch",
    "nearest_error_csv",
    "robustness_curve",
    "robustness_curve_csv",
]

NORMS = ("l2", "linf")


class NonFiniteGradientError(RuntimeError):
    """The model produced a NaN/inf input gradient during an attack."""


@dataclass(frozen=True)
class PgdConfig:
    """One attack run: ball radius, norm, steps, and step size.

    ``step_size`` defaults to ``epsilon / 25``. ``targeted`` switches the
    loss to pulling the target class on top. ``random_start`` draws the
    initial iterate uniformly from the epsilon-ball (off by default so
    attacks are deterministic without any seed bookkeeping).
    """

    epsilon: float
    norm: str = "l2"
    steps: int = 100
    step_size: float | None = None
    targeted: int | None = None
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None:
            if self.step_size <= 0:
                raise ValueError("step_size must be > 0")
            if self.step_size > self.epsilon:
                raise ValueError("step_size must not exceed epsilon")

    def resolved_step(self) -> float:
        return self.epsilon / 25.0 if self.step_size is None else self.step_size


@dataclass(frozen=True)
class PgdTemplate:
    """Attack settings without a radius, for searches that sweep epsilon."""

    norm: str = "l2"
    steps: int = 200
    step_fraction: float = 1.0 / 25.0
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.step_fraction <= 1:
            raise ValueError("step_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class NearestErrorSearch:
    """Bisection protocol for the nearest-error distance.

    ``eps_hi`` doubles as the reporting cutoff: if no error is found at
    the largest radius, the distance is reported as ``eps_hi`` with
    ``converged=False``.
    """

    eps_lo: float = 0.0
    eps_hi: float = 1.0
    bisection_iters: int = 12
    refine_iters: int = 20
    pgd: PgdTemplate = PgdTemplate()

    def __post_init__(self):
        if not self.eps_lo < self.eps_hi:
            raise ValueError("need eps_lo < eps_hi")
        if self.eps_lo < 0:
            raise ValueError("eps_lo must be >= 0")
        if self.bisection_iters < 1 or self.refine_iters < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass(frozen=True)
class AttackResult:
    adversarial_point: np.ndarray
    success: bool
    distance: float
    predicted: int


@dataclass(frozen=True)
class BoundaryDistanceEstimate:
    """L2 distance to the nearest found error, with the misclassified witness.

    ``witness`` is None exactly when no error was found below the search
    cutoff (``converged=False``, distance pinned to the cutoff).
    """

    distance: float
    witness: np.ndarray | None
    converged: bool


def _margins_and_delta(model, X, labels, targets):
    """Attack margin per point and the logit-space gradient of its violation.

    Untargeted margin: z_label - max_{j != label} z_j  (negative once
    misclassified). Targeted: max_{j != target} z_j - z_target (negative
    once the target class wins). The returned delta ascends the
    violation, i.e. drives the margin down.
    """
    z = model.logits_batch(X)
    m = X.shape[0]
    rows = np.arange(m)
    if targets is None:
        anchor = labels
    else:
        anchor = targets
    masked = z.copy()
    masked[rows, anchor] = -np.inf
    rival = np.argmax(masked, axis=1)
    if targets is None:
        margins = z[rows, anchor] - z[rows, rival]
        delta = np.zeros_like(z)
        delta[rows, rival] = 1.0
        delta[rows, anchor] -= 1.0
    else:
        margins = z[rows, rival] - z[rows, anchor]
        delta = np.zeros_like(z)
        delta[rows, anchor] = 1.0
        delta[rows, rival] -= 1.0
    return margins, delta


def _project(delta: np.ndarray, eps: np.ndarray, norm: str) -> np.ndarray:
    if norm == "linf":
        return np.clip(delta, -eps[:, None], eps[:, None])
    norms = np.linalg.norm(delta, axis=1)
    too_big = norms > eps
    if np.any(too_big):
        delta = delta.copy()
        delta[too_big] *= (eps[too_big] / norms[too_big])[:, None]
    return delta


def _random_start(rng: np.random.Generator, n: int, eps: float, norm: str) -> np.ndarray:
    if norm == "linf":
        return rng.uniform(-eps, eps, size=n)
    direction = rng.standard_normal(n)
    direction /= max(np.linalg.norm(direction), 1e-300)
    radius = eps * rng.uniform(0.0, 1.0) ** (1.0 / n)
    return direction * radius


def _pgd_core(
    model: Classifier,
    X: np.ndarray,
    labels: np.ndarray,
    eps: np.ndarray,
    steps: int,
    step_sizes: np.ndarray,
    norm: str,
    targets: np.ndarray | None,
    random_start: bool,
    seed: int,
    point_ids: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched PGD; returns (best adversarial points, success mask).

    The returned point is the lowest-margin misclassified iterate seen
    for each input, or the final iterate where no iterate misclassified.
    """
    m, n = X.shape
    if random_start:
        ids = point_ids if point_ids is not None else np.arange(m)
        delta = np.stack(
            [_random_start(substream(seed, "pgd.start", int(i)), n, float(e), norm)
             for i, e in zip(ids, eps)]
        )
    else:
        delta = np.zeros_like(X)

    adv = X + delta
    best_adv = adv.copy()
    best_margin = np.full(m, np.inf)

    for _ in range(steps):
        margins, logit_delta = _margins_and_delta(model, adv, labels, targets)
        hit = margins < 0
        improve = hit & (margins < best_margin)
        if np.any(improve):
            best_adv[improve] = adv[improve]
            best_margin[improve] = margins[improve]

        grad = model.backprop_input(adv, logit_delta)
        if not np.all(np.isfinite(grad)):
            bad = int(np.argwhere(~np.all(np.isfinite(grad), axis=1))[0, 0])
            raise NonFiniteGradientError(
                f"non-finite attack gradient for batch element {bad}"
            )
        if norm == "linf":
            step = np.sign(grad) * step_sizes[:, None]
        else:
            norms = np.linalg.norm(grad, axis=1)
            scale = np.divide(
                step_sizes, norms, out=np.zeros_like(norms), where=norms > 0
            )
            step = grad * scale[:, None]
        delta = _project(adv + step - X, eps, norm)
        adv = X + delta

    margins, _ = _margins_and_delta(model, adv, labels, targets)
    hit = margins < 0
    improve = hit & (margins < best_margin)
    if np.any(improve):
        best_adv[improve] = adv[improve]
        best_margin[improve] = margins[improve]

    success = np.isfinite(best_margin)
    out = np.where(success[:, None], best_adv, adv)
    return out, success


def pgd_batch(
    model: Classifier, X: np.ndarray, labels: np.ndarray, config: PgdConfig
) -> list[AttackResult]:
    """Run the configured attack independently on each row of ``X``."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m = X.shape[0]
    targets = None
    if config.targeted is not None:
        targets = np.full(m, int(config.targeted))

    preds_clean = model.predict_batch(X)
    if config.targeted is None:
        done = preds_clean != labels
    else:
        done = preds_clean == targets
    results: list[AttackResult | None] = [None] * m
    for i in np.nonzero(done)[0]:
        results[i] = AttackResult(X[i].copy(), True, 0.0, int(preds_clean[i]))

    todo = np.nonzero(~done)[0]
    if len(todo):
        eps = np.full(len(todo), config.epsilon)
        steps = np.full(len(todo), config.resolved_step())
        adv, _ = _pgd_core(
            model,
            X[todo],
            labels[todo],
            eps,
            config.steps,
            steps,
            config.norm,
            targets[todo] if targets is not None else None,
            config.random_start,
            config.seed,
            point_ids=todo,
        )
        preds = model.predict_batch(adv)
        for k, i in enumerate(todo):
            diff = adv[k] - X[i]
            dist = (
                float(np.max(np.abs(diff)))
                if config.norm == "linf"
                else float(np.linalg.norm(diff))
            )
            if config.targeted is None:
                ok = int(preds[k]) != int(labels[i])
            else:
                ok = int(preds[k]) == int(targets[k])
            results[i] = AttackResult(adv[k], bool(ok), dist, int(preds[k]))
    return results  # type: ignore[return-value]


def pgd(model: Classifier, x, label: int, config: PgdConfig) -> AttackResult:
    """Attack a single point; see :func:`pgd_batch`."""
    x = np.asarray(x, dtype=float)
    return pgd_batch(model, x[None, :], np.asarray([label]), config)[0]


def _refine_crossing(model, X, labels, witnesses, iters):
    """Binary search along clean->witness segments for the boundary crossing.

    Maintains t_lo (correctly classified) and t_hi (misclassified);
    returns the witness at t_hi after ``iters`` halvings.
    """
    t_lo = np.zeros(len(X))
    t_hi = np.ones(len(X))
    for _ in range(iters):
        t_mid = 0.5 * (t_lo + t_hi)
        candidates = X + t_mid[:, None] * (witnesses - X)
        wrong = model.predict_batch(candidates) != labels
        t_hi = np.where(wrong, t_mid, t_hi)
        t_lo = np.where(wrong, t_lo, t_mid)
    return X + t_hi[:, None] * (witnesses - X)


def nearest_error_batch(
    model: Classifier,
    X: np.ndarray,
    labels: np.ndarray,
    search: NearestErrorSearch = NearestErrorSearch(),
) -> list[BoundaryDistanceEstimate]:
    """Estimate each point's L2 distance to the nearest error.

    Protocol: one attack at ``eps_hi`` decides convergence; bisection on
    the radius shrinks toward the smallest successful attack; a final
    line search pins the boundary crossing. Already-misclassified points
    report distance 0. Points with no error found below ``eps_hi``
    report ``distance = eps_hi`` and ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m = X.shape[0]
    tmpl = search.pgd

    results: list[BoundaryDistanceEstimate | None] = [None] * m
    clean_wrong = model.predict_batch(X) != labels
    for i in np.nonzero(clean_wrong)[0]:
        results[i] = BoundaryDistanceEstimate(0.0, X[i].copy(), True)

    active = np.nonzero(~clean_wrong)[0]
    if len(active) == 0:
        return results  # type: ignore[return-value]

    def attack(idx, eps_vec):
        return _pgd_core(
            model,
            X[idx],
            labels[idx],
            eps_vec,
            tmpl.steps,
            eps_vec * tmpl.step_fraction,
            tmpl.norm,
            None,
            tmpl.random_start,
            tmpl.seed,
            point_ids=idx,
        )

    # cutoff attack at eps_hi
    eps_hi_vec = np.full(len(active), search.eps_hi)
    adv, success = attack(active, eps_hi_vec)
    for k, i in enumerate(active):
        if not success[k]:
            results[i] = BoundaryDistanceEstimate(float(search.eps_hi), None, False)

    found = active[success]
    if len(found) == 0:
        return results  # type: ignore[return-value]

    witnesses = adv[success]
    best_norm = np.linalg.norm(witnesses - X[found], axis=1)
    lo = np.full(len(found), search.eps_lo)
    hi = np.minimum(best_norm, search.eps_hi)

    for _ in range(search.bisection_iters):
        mid = 0.5 * (lo + hi)
        adv, success = attack(found, mid)
        norms = np.linalg.norm(adv - X[found], axis=1)
        better = success & (norms < best_norm)
        witnesses[better] = adv[better]
        best_norm[better] = norms[better]
        hi = np.where(success, np.minimum(mid, best_norm), hi)
        lo = np.where(success, lo, mid)

    refined = _refine_crossing(model, X[found], labels[found], witnesses, search.refine_iters)
    dists = np.linalg.norm(refined - X[found], axis=1)
    for k, i in enumerate(found):
        results[i] = BoundaryDistanceEstimate(float(dists[k]), refined[k], True)
    return results  # type: ignore[return-value]


def nearest_error(
    model: Classifier, x, label: int, search: NearestErrorSearch = NearestErrorSearch()
) -> BoundaryDistanceEstimate:
    """Single-point form of :func:`nearest_error_batch`."""
    x = np.asarray(x, dtype=float)
    return nearest_error_batch(model, x[None, :], np.asarray([label]), search)[0]


def nearest_error_csv(estimates) -> str:
    """CSV with header ``point_id,distance,converged``."""
    lines = ["point_id,distance,converged"]
    lines.extend(
        f"{i},{e.distance:.12g},{str(bool(e.converged)).lower()}"
        for i, e in enumerate(estimates)
    )
    return "\n".join(lines) + "\n"


def robustness_curve(
    model: Classifier,
    dataset: Dataset,
    eps_grid,
    template: PgdTemplate = PgdTemplate(steps=100),
    warm_start: bool = True,
) -> list[tuple[float, float]]:
    """Adversarial accuracy at each radius of an ascending epsilon grid.

    Accuracy at ``eps`` is the fraction of points that are correctly
    classified and for which the attack finds no error within ``eps``.
    With ``warm_start`` (default) each radius reuses witnesses found at
    smaller radii, which makes the curve monotone by construction:
    ``eps = 0`` rows report clean accuracy.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b < a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps_grid must be ascending")
    X = dataset.inputs
    y = dataset.labels
    m = len(dataset)

    broken = model.predict_batch(X) != y  # clean errors stay broken at every radius
    curve: list[tuple[float, float]] = []
    for eps in eps_grid:
        if eps > 0:
            alive = np.nonzero(~broken)[0]
            if len(alive):
                eps_vec = np.full(len(alive), eps)
                _, success = _pgd_core(
                    model,
                    X[alive],
                    y[alive],
                    eps_vec,
                    template.steps,
                    eps_vec * template.step_fraction,
                    template.norm,
                    None,
                    template.random_start,
                    template.seed,
                    point_ids=alive,
                )
                newly = alive[success]
                if warm_start:
                    broken[newly] = True
                    acc = 1.0 - float(np.mean(broken))
                else:
                    acc = 1.0 - float(np.mean(broken)) - len(newly) / m
            else:
                acc = 1.0 - float(np.mean(broken))
        else:
            acc = 1.0 - float(np.mean(broken))
        curve.append((eps, acc))
    return curve


def robustness_curve_csv(curve) -> str:
    """CSV with header ``epsilon,adversarial_accuracy``."""
    lines = ["epsilon,adversarial_accuracy"]
    lines.extend(f"{e:.12g},{a:.12g}" for e, a in curve)
    return "\n".join(lines) + "\n"
