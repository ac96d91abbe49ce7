"""Black-box classifier handles: a batch scorer plus a prediction rule.

A handle wraps an opaque scorer mapping a (B, V, T) value array to a (B, C)
score matrix with entries in [0, 1]. Rows need not sum to one, so multi-output
sigmoid models fit the contract. Labels are derived from scores by a
prediction rule: plain argmax, or per-class thresholds with a background
class that wins when no other class clears its threshold.

Three built-in reference classifiers (nearest-centroid, interval rules,
logistic over per-variable means) keep the engine and its tests runnable
without any external model process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import MultivariateSeries


class ScoringError(Exception):
    """Model scoring failed: bad shapes, bad scores, or transport trouble."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# Reproducible logistic for the linear_means reference model. Built only from
# exactly rounded IEEE-754 operations (no libm exp), so an out-of-process
# reimplementation (e.g. the bridge adapter's demo model) produces the same
# doubles bit for bit and bridged runs can be compared exactly against the
# built-in. Accuracy is a few ulp; tails saturate at |x| = 40.
_INV_LN2 = 1.4426950408889634074
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_EXP_COEFFS = (
    2.08767569878681e-09, 2.505210838544172e-08, 2.755731922398589e-07,
    2.7557319223985893e-06, 2.48015873015873e-05, 0.0001984126984126984,
    0.001388888888888889, 0.008333333333333333, 0.041666666666666664,
    0.16666666666666666, 0.5, 1.0, 1.0,
)


def _portable_exp(y: np.ndarray) -> np.ndarray:
    """exp(y) for y in [-40, 0] via Cody-Waite reduction and a fixed Taylor
    polynomial; every step is an exactly rounded primitive, so any faithful
    reimplementation returns identical bits."""
    k = np.floor(y * _INV_LN2 + 0.5)
    r = (y - k * _LN2_HI) - k * _LN2_LO
    p = np.full_like(y, _EXP_COEFFS[0])
    for c in _EXP_COEFFS[1:]:
        p = p * r + c
    return np.ldexp(p, k.astype(np.int64))


def portable_logistic(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x >= 40.0
    lo = x <= -40.0
    out[hi] = 1.0
    out[lo] = 0.0
    mid = ~(hi | lo)
    xm = x[mid]
    e = _portable_exp(-np.abs(xm))
    out[mid] = np.where(xm >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out


@dataclass(frozen=True)
class PredictionRule:
    """Maps a score vector to one label.

    kind "argmax": index of the maximum score, ties to the lowest index.
    kind "thresholded": among non-background classes with score >= threshold,
    the one maximizing (score - threshold), ties to the lowest index; the
    background class when none qualifies.
    """

    kind: str = "argmax"
    thresholds: tuple[float, ...] | None = None
    background_class: int | None = None

    def __post_init__(self):
        if self.kind not in ("argmax", "thresholded"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind == "argmax":
            if self.thresholds is not None or self.background_class is not None:
                raise ValueError("argmax rule takes no thresholds or background class")
            return
        if self.thresholds is None:
            raise ValueError("thresholded rule needs per-class thresholds")
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        for t in self.thresholds:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")
        if self.background_class is None or not 0 <= self.background_class < len(self.thresholds):
            raise ValueError(f"invalid background class {self.background_class!r}")


def decide_label(rule: PredictionRule, scores: np.ndarray) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if rule.kind == "argmax":
        return int(np.argmax(scores))
    if len(rule.thresholds) != len(scores):
        raise ScoringError(
            f"rule has {len(rule.thresholds)} thresholds for {len(scores)} classes"
        )
    best = None
    best_margin = -np.inf
    for c, score in enumerate(scores):
        if c == rule.background_class:
            continue
        margin = score - rule.thresholds[c]
        if margin >= 0 and margin > best_margin:
            best, best_margin = c, margin
    return rule.background_class if best is None else best


class ClassifierHandle:
    """Deterministic batch scorer plus prediction rule.

    ``scorer(batch)`` receives a (B, V, T) float64 array and must return a
    (B, class_count) array. Outputs are validated on every call: wrong shape,
    non-finite entries, and entries outside [0, 1] all raise ScoringError
    rather than being clamped. Handles are stateless and safe to share
    between concurrent callers.
    """

    def __init__(self, scorer, class_count: int, rule: PredictionRule | None = None,
                 variables: int | None = None, timesteps: int | None = None,
                 name: str = "scorer"):
        if class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {class_count}")
        self._scorer = scorer
        self.class_count = int(class_count)
        self.rule = rule if rule is not None else PredictionRule()
        if self.rule.kind == "thresholded" and len(self.rule.thresholds) != self.class_count:
            raise ValueError(
                f"rule has {len(self.rule.thresholds)} thresholds for {self.class_count} classes"
            )
        self.variables = variables
        self.timesteps = timesteps
        self.name = name

    def with_rule(self, rule: PredictionRule) -> "ClassifierHandle":
        return ClassifierHandle(self._scorer, self.class_count, rule,
                                self.variables, self.timesteps, self.name)

    def score_matrix(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3:
            raise ScoringError(f"expected a (B, V, T) batch, got shape {batch.shape}")
        n, v, t = batch.shape
        if self.variables is not None and v != self.variables:
            raise ScoringError(f"shape mismatch: expected V={self.variables}, got V={v}")
        if self.timesteps is not None and t != self.timesteps:
            raise ScoringError(f"shape mismatch: expected T={self.timesteps}, got T={t}")
        if n == 0:
            return np.zeros((0, self.class_count))
        out = np.asarray(self._scorer(batch), dtype=np.float64)
        if out.shape != (n, self.class_count):
            raise ScoringError(
                f"scorer returned shape {out.shape}, expected ({n}, {self.class_count})"
            )
        if not np.isfinite(out).all():
            raise ScoringError("non-finite score from model")
        if (out < 0.0).any() or (out > 1.0).any():
            raise ScoringError("score outside [0, 1] from model")
        return out

    def close(self):
        """Release resources; no-op for in-process scorers."""


def predict_scores(clf: ClassifierHandle, batch: list[MultivariateSeries]) -> list[np.ndarray]:
    """Score a batch, one score vector per input, preserving order."""
    if not batch:
        return []
    shapes = {s.values.shape for s in batch}
    if len(shapes) > 1:
        raise ScoringError(f"mixed sample shapes in batch: {sorted(shapes)}")
    out = clf.score_matrix(np.stack([s.values for s in batch]))
    return [out[i] for i in range(len(batch))]


def predict_label(clf: ClassifierHandle, sample: MultivariateSeries) -> int:
    scores = clf.score_matrix(sample.values[np.newaxis])[0]
    return decide_label(clf.rule, scores)


def _centroid_handle(spec, rule, expected_shape):
    centroids = np.asarray(spec["centroids"], dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[0] < 1:
        raise ValueError("nearest_centroid needs a nonempty list of equal-length centroids")
    if not np.isfinite(centroids).all():
        raise ValueError("non-finite centroid values")
    if expected_shape is not None:
        v, t = expected_shape
        if centroids.shape[1] != v * t:
            raise ValueError(
                f"centroid length {centroids.shape[1]} does not match V*T = {v * t}"
            )

    def scorer(batch):
        flat = batch.reshape(len(batch), -1)
        if flat.shape[1] != centroids.shape[1]:
            raise ScoringError(
                f"shape mismatch: centroids have length {centroids.shape[1]}, "
                f"samples flatten to {flat.shape[1]}"
            )
        d = np.sqrt(((flat[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=2))
        e = np.exp(-(d - d.min(axis=1, keepdims=True)))
        return e / e.sum(axis=1, keepdims=True)

    v, t = expected_shape if expected_shape is not None else (None, None)
    return ClassifierHandle(scorer, len(centroids), rule, v, t, name="nearest_centroid")


def _interval_handle(spec, rule, expected_shape):
    raw_rules = spec.get("rules")
    if not raw_rules:
        raise ValueError("interval_rule needs a nonempty rules list")
    rules = []
    for r in raw_rules:
        var = int(r["variable"])
        t0, t1 = (int(x) for x in r["window"])
        theta = float(r["threshold"])
        gain = float(r["gain"])
        if var < 0:
            raise ValueError(f"negative variable index {var}")
        if not 0 <= t0 < t1:
            raise ValueError(f"invalid window [{t0}, {t1})")
        if expected_shape is not None:
            v, t = expected_shape
            if var >= v:
                raise ValueError(f"rule variable {var} out of range for V={v}")
            if t1 > t:
                raise ValueError(f"rule window [{t0}, {t1}) out of range for T={t}")
        rules.append((var, t0, t1, theta, gain))
    positive = int(spec.get("positive_class", 1))
    if positive not in (0, 1):
        raise ValueError(f"positive_class must be 0 or 1, got {positive}")

    def scorer(batch):
        _, v, t = batch.shape
        p = None
        for var, t0, t1, theta, gain in rules:
            if var >= v or t1 > t:
                raise ScoringError(
                    f"shape mismatch: rule on variable {var} window [{t0}, {t1}) "
                    f"does not fit samples of shape ({v}, {t})"
                )
            s = _sigmoid(gain * (batch[:, var, t0:t1].mean(axis=1) - theta))
            p = s if p is None else np.minimum(p, s)
        out = np.empty((len(batch), 2))
        out[:, positive] = p
        out[:, 1 - positive] = 1.0 - p
        return out

    v, t = expected_shape if expected_shape is not None else (None, None)
    return ClassifierHandle(scorer, 2, rule, v, t, name="interval_rule")


def _linear_means_handle(spec, rule, expected_shape):
    weights = np.asarray(spec["weights"], dtype=np.float64)
    bias = float(spec.get("bias", 0.0))
    if weights.ndim != 1 or len(weights) < 1:
        raise ValueError("linear_means needs a nonempty 1-D weight vector")
    if not np.isfinite(weights).all() or not np.isfinite(bias):
        raise ValueError("non-finite linear_means parameters")
    if expected_shape is not None and len(weights) != expected_shape[0]:
        raise ValueError(f"{len(weights)} weights for V={expected_shape[0]} variables")

    def scorer(batch):
        if batch.shape[1] != len(weights):
            raise ScoringError(
                f"shape mismatch: {len(weights)} weights for V={batch.shape[1]}"
            )
        p = portable_logistic(batch.mean(axis=2) @ weights + bias)
        return np.stack([1.0 - p, p], axis=1)

    v, t = expected_shape if expected_shape is not None else (None, None)
    return ClassifierHandle(scorer, 2, rule, v, t, name="linear_means")


_BUILTIN_KINDS = {
    "nearest_centroid": _centroid_handle,
    "interval_rule": _interval_handle,
    "linear_means": _linear_means_handle,
}


def make_builtin(spec: dict, rule: PredictionRule | None = None,
                 expected_shape: tuple[int, int] | None = None) -> ClassifierHandle:
    """Build a reference classifier from its JSON-style description.

    ``spec["kind"]`` selects one of nearest_centroid, interval_rule, or
    linear_means; the remaining keys are that kind's parameters. Passing the
    dataset shape as ``expected_shape`` turns silent inconsistencies (window
    out of range, wrong vector lengths) into errors at build time.
    """
    if not isinstance(spec, dict):
        raise ValueError("builtin spec must be a JSON object")
    kind = spec.get("kind")
    if kind not in _BUILTIN_KINDS:
        raise ValueError(
            f"unknown builtin kind {kind!r}; expected one of {sorted(_BUILTIN_KINDS)}"
        )
    try:
        return _BUILTIN_KINDS[kind](spec, rule, expected_shape)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed {kind} spec: {exc}") from None


def load_builtin(path: str, rule: PredictionRule | None = None,
                 expected_shape: tuple[int, int] | None = None) -> ClassifierHandle:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    return make_builtin(spec, rule, expected_shape)
