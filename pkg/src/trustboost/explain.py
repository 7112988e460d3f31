"""Decision explainers and the canonical explanation artifact they feed.

Three families are provided:

* relevance propagation through the network's own layers, pushing the
  target-class logit backward with one of four redistribution rules
  (plain proportional, epsilon-stabilized, positive-boosted, or
  asymmetric positive/negative);
* Shapley attribution treating each attribute's one-hot group as one
  player, with absent players replaced by a background vector (exact
  enumeration for small attribute counts, permutation sampling otherwise);
* a local linear surrogate fit on mask perturbations with an exponential
  kernel on mask Hamming distance.

All methods are pure functions of an immutable model snapshot and a seed.
The resulting artifact is serialized canonically; its digest is what gets
anchored, and everything a viewer renders is derived from these bytes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .canonical import canonical_serialize
from .model import LABELS, LoanModel, Schema
from .nn import Conv1D, Dense, Dropout, Flatten, LeakyReLU, MaxPool1D, scatter_patches

__all__ = [
    "LrpVariant",
    "LrpParams",
    "RelevanceMap",
    "ExplanationArtifact",
    "lrp",
    "shap_attr",
    "lime",
    "build_artifact",
    "UnknownVariantError",
    "TooManyAttributesForExactError",
    "DegeneratePerturbationsError",
    "EmptyMapsError",
]

HIGH_IMPORTANCE_THRESHOLD = 0.50
_EXACT_SHAP_MAX_ATTRIBUTES = 12


class UnknownVariantError(ValueError):
    pass


class TooManyAttributesForExactError(ValueError):
    pass


class DegeneratePerturbationsError(ValueError):
    """All perturbed predictions identical; no local surface to fit."""


class EmptyMapsError(ValueError):
    pass


LRP_VARIANTS = ("lrp0", "lrp_epsilon", "lrp_gamma", "lrp_alphabeta")


# Variant names kept as a simple tuple rather than an enum so params stay
# trivially canonical-serializable.
LrpVariant = str


@dataclass(frozen=True)
class LrpParams:
    variant: LrpVariant = "lrp0"
    epsilon: float = 0.01
    gamma: float = 0.25
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in LRP_VARIANTS:
            raise UnknownVariantError(self.variant)
        if self.variant == "lrp_epsilon" and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.variant == "lrp_alphabeta":
            if abs(self.alpha - self.beta - 1.0) > 1e-12 or self.alpha < 1.0:
                raise ValueError("alphabeta requires alpha - beta = 1 and alpha >= 1")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"variant": self.variant}
        if self.variant == "lrp_epsilon":
            d["epsilon"] = self.epsilon
        elif self.variant == "lrp_gamma":
            d["gamma"] = self.gamma
        elif self.variant == "lrp_alphabeta":
            d["alpha"] = self.alpha
            d["beta"] = self.beta
        return d


@dataclass
class RelevanceMap:
    method: str
    params: dict[str, Any]
    target: str
    feature_relevances: list[float]
    attribute_relevances: list[float]
    stats: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "params": self.params,
            "target": self.target,
            "feature_relevances": self.feature_relevances,
            "attribute_relevances": self.attribute_relevances,
            "stats": self.stats,
        }


def _group_sums(feature_values: np.ndarray, schema: Schema) -> list[float]:
    return [float(feature_values[sl].sum()) for sl in schema.group_slices()]


def _spread_to_features(attr_values: np.ndarray, x: np.ndarray, schema: Schema) -> np.ndarray:
    """Place each attribute's value on its active one-hot feature."""
    out = np.zeros(schema.feature_count)
    for value, sl in zip(attr_values, schema.group_slices()):
        group = x[sl]
        if group.max() > 0:
            out[sl.start + int(group.argmax())] = value
        else:
            out[sl] = value / (sl.stop - sl.start)
    return out


# ---------------------------------------------------------------------------
# Relevance propagation
# ---------------------------------------------------------------------------


def _safe_div(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.zeros_like(numer)
    np.divide(numer, denom, out=out, where=denom != 0)
    return out


def _linear_relevance(
    a: np.ndarray, w: np.ndarray, b: np.ndarray, relevance: np.ndarray, params: LrpParams
) -> np.ndarray:
    """Redistribute output relevance of a linear map y = aW + b to its inputs.

    a: (n, d_in); w: (d_in, d_out); relevance: (n, d_out) -> (n, d_in).
    Biases absorb their share; with zero biases each rule conserves the sum
    (scaled by alpha - beta = 1 for the asymmetric rule).
    """
    if params.variant == "lrp0":
        z = a @ w + b
        return a * (_safe_div(relevance, z) @ w.T)
    if params.variant == "lrp_epsilon":
        z = a @ w + b
        z = z + params.epsilon * np.where(z >= 0, 1.0, -1.0)
        return a * ((relevance / z) @ w.T)
    if params.variant == "lrp_gamma":
        wg = w + params.gamma * np.clip(w, 0, None)
        bg = b + params.gamma * np.clip(b, 0, None)
        z = a @ wg + bg
        return a * (_safe_div(relevance, z) @ wg.T)
    if params.variant == "lrp_alphabeta":
        contrib = a[:, :, None] * w[None, :, :]  # (n, d_in, d_out)
        pos = np.clip(contrib, 0, None)
        neg = np.clip(contrib, None, 0)
        z_pos = pos.sum(axis=1) + np.clip(b, 0, None)
        z_neg = neg.sum(axis=1) + np.clip(b, None, 0)
        s_pos = _safe_div(relevance, z_pos)
        s_neg = _safe_div(relevance, z_neg)
        return (params.alpha * pos * s_pos[:, None, :] + params.beta * neg * s_neg[:, None, :]).sum(axis=2)
    raise UnknownVariantError(params.variant)


def _conv_relevance(
    layer: Conv1D, x: np.ndarray, relevance: np.ndarray, params: LrpParams
) -> np.ndarray:
    """Convolution as a linear map over patches, then scatter back to inputs."""
    n, length, _ = x.shape
    out_len, pad_left, padded_len = layer.geometry(length)
    patches = layer.extract_patches(x).reshape(n * out_len, layer.kernel * layer.in_channels)
    rel_out = relevance.reshape(n * out_len, layer.out_channels)
    rel_patches = _linear_relevance(patches, layer.W, layer.b, rel_out, params)
    rel_patches = rel_patches.reshape(n, out_len, layer.kernel, layer.in_channels)
    rel_padded = scatter_patches(rel_patches, layer.stride, padded_len)
    return rel_padded[:, pad_left : pad_left + length, :]


def _pool_relevance(layer: MaxPool1D, x: np.ndarray, relevance: np.ndarray) -> np.ndarray:
    """Winner-take-all: the window maximum inherits the window's relevance."""
    n, length, channels = x.shape
    out_len = relevance.shape[1]
    windows = x[:, : out_len * layer.width, :].reshape(n, out_len, layer.width, channels)
    argmax = windows.argmax(axis=2)
    rel_windows = np.zeros_like(windows)
    np.put_along_axis(rel_windows, argmax[:, :, None, :], relevance[:, :, None, :], axis=2)
    out = np.zeros((n, length, channels))
    out[:, : out_len * layer.width, :] = rel_windows.reshape(n, out_len * layer.width, channels)
    return out


def lrp(
    model: LoanModel,
    feature_vector: np.ndarray,
    target: str,
    params: LrpParams | None = None,
    schema: Schema | None = None,
) -> RelevanceMap:
    """Propagate the target-class logit back to the 88 input features."""
    params = params or LrpParams()
    schema = schema or _schema_for(model)
    target_idx = LABELS.index(target)

    x = np.asarray(feature_vector, dtype=float)[None, :, None]
    logits, trace = model.network.forward_trace(x)
    relevance = np.zeros_like(logits)
    relevance[0, target_idx] = logits[0, target_idx]

    for layer, layer_input in reversed(trace):
        if isinstance(layer, Dense):
            relevance = _linear_relevance(layer_input, layer.W, layer.b, relevance, params)
        elif isinstance(layer, Conv1D):
            relevance = _conv_relevance(layer, layer_input, relevance, params)
        elif isinstance(layer, MaxPool1D):
            relevance = _pool_relevance(layer, layer_input, relevance)
        elif isinstance(layer, Flatten):
            relevance = relevance.reshape(layer_input.shape)
        elif isinstance(layer, (LeakyReLU, Dropout)):
            pass  # relevance passes through activations and inference-mode dropout
        else:  # pragma: no cover - closed layer set
            raise UnknownVariantError(f"no relevance rule for {type(layer).__name__}")

    per_feature = relevance[0, :, 0]
    return RelevanceMap(
        method="lrp",
        params=params.to_dict(),
        target=target,
        feature_relevances=[float(v) for v in per_feature],
        attribute_relevances=_group_sums(per_feature, schema),
        stats={"target_logit": float(logits[0, target_idx])},
    )


def _schema_for(model: LoanModel) -> Schema:
    from .model import DEFAULT_SCHEMA

    if model.hyper.input_features != DEFAULT_SCHEMA.feature_count:
        raise ValueError("schema required for non-default feature layouts")
    return DEFAULT_SCHEMA


# ---------------------------------------------------------------------------
# Shapley attribution over attribute groups
# ---------------------------------------------------------------------------


def _compose(masks: np.ndarray, x: np.ndarray, background: np.ndarray, schema: Schema) -> np.ndarray:
    """Blend instance and background per attribute group according to masks."""
    n = masks.shape[0]
    out = np.tile(background, (n, 1))
    for q, sl in enumerate(schema.group_slices()):
        rows = masks[:, q].astype(bool)
        out[np.ix_(rows, range(sl.start, sl.stop))] = x[sl]
    return out


def _predict_target(model, composed: np.ndarray, target_idx: int) -> np.ndarray:
    return model.predict_proba(composed)[:, target_idx]


def shap_attr(
    model,
    feature_vector: np.ndarray,
    background: np.ndarray,
    schema: Schema,
    target: str = LABELS[1],
    mode: str = "exact",
    n_samples: int = 200,
    seed: int = 0,
) -> RelevanceMap:
    """Shapley values with whole one-hot attribute groups as players."""
    x = np.asarray(feature_vector, dtype=float)
    background = np.asarray(background, dtype=float)
    q_count = schema.attribute_count
    target_idx = LABELS.index(target)

    if mode == "exact":
        if q_count > _EXACT_SHAP_MAX_ATTRIBUTES:
            raise TooManyAttributesForExactError(
                f"{q_count} attributes exceeds exact-mode limit {_EXACT_SHAP_MAX_ATTRIBUTES}"
            )
        masks = np.array(list(itertools.product((0, 1), repeat=q_count)), dtype=int)
        values = _predict_target(model, _compose(masks, x, background, schema), target_idx)
        value_of = {tuple(m): v for m, v in zip(masks.tolist(), values)}
        factorial = [math.factorial(i) for i in range(q_count + 1)]
        phi = np.zeros(q_count)
        for mask in masks:
            if mask.sum() == q_count:
                continue
            s = int(mask.sum())
            weight = factorial[s] * factorial[q_count - s - 1] / factorial[q_count]
            base = value_of[tuple(mask.tolist())]
            for q in range(q_count):
                if mask[q]:
                    continue
                with_q = mask.copy()
                with_q[q] = 1
                phi[q] += weight * (value_of[tuple(with_q.tolist())] - base)
        stats = {
            "full_value": float(value_of[tuple([1] * q_count)]),
            "background_value": float(value_of[tuple([0] * q_count)]),
        }
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        perms = np.array([rng.permutation(q_count) for _ in range(n_samples)])
        # one mask per prefix of each permutation, empty prefix included
        masks = np.zeros((n_samples * (q_count + 1), q_count), dtype=int)
        for p in range(n_samples):
            row = p * (q_count + 1)
            for step, attr in enumerate(perms[p]):
                masks[row + step + 1] = masks[row + step]
                masks[row + step + 1, attr] = 1
        values = _predict_target(model, _compose(masks, x, background, schema), target_idx)
        phi = np.zeros(q_count)
        for p in range(n_samples):
            row = p * (q_count + 1)
            for step, attr in enumerate(perms[p]):
                phi[attr] += values[row + step + 1] - values[row + step]
        phi /= n_samples
        stats = {
            "full_value": float(values[q_count]),
            "background_value": float(values[0]),
            "n_samples": float(n_samples),
        }
    else:
        raise ValueError(f"unknown mode: {mode}")

    return RelevanceMap(
        method="shap",
        params={"mode": mode, **({"n_samples": n_samples, "seed": seed} if mode == "sampled" else {})},
        target=target,
        feature_relevances=[float(v) for v in _spread_to_features(phi, x, schema)],
        attribute_relevances=[float(v) for v in phi],
        stats=stats,
    )


# ---------------------------------------------------------------------------
# Local linear surrogate
# ---------------------------------------------------------------------------


def lime(
    model,
    feature_vector: np.ndarray,
    background: np.ndarray,
    schema: Schema,
    target: str = LABELS[1],
    n_perturbations: int = 500,
    kernel_width: float | None = None,
    seed: int = 0,
) -> RelevanceMap:
    """Weighted least-squares surrogate over present/absent attribute masks."""
    if n_perturbations < 50:
        raise ValueError("n_perturbations must be at least 50")
    x = np.asarray(feature_vector, dtype=float)
    background = np.asarray(background, dtype=float)
    q_count = schema.attribute_count
    if kernel_width is None:
        kernel_width = 0.75 * math.sqrt(q_count)
    target_idx = LABELS.index(target)

    rng = np.random.default_rng(seed)
    masks = rng.integers(0, 2, size=(n_perturbations, q_count))
    y = _predict_target(model, _compose(masks, x, background, schema), target_idx)
    if np.ptp(y) == 0.0:
        raise DegeneratePerturbationsError("all perturbed predictions identical")

    hamming = q_count - masks.sum(axis=1)  # distance from the all-present mask
    weights = np.exp(-(hamming.astype(float) ** 2) / kernel_width**2)
    design = np.hstack([np.ones((n_perturbations, 1)), masks.astype(float)])
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)

    fitted = design @ coef
    y_bar = float(np.average(y, weights=weights))
    ss_res = float(np.average((y - fitted) ** 2, weights=weights))
    ss_tot = float(np.average((y - y_bar) ** 2, weights=weights))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0

    attr_weights = coef[1:]
    return RelevanceMap(
        method="lime",
        params={
            "n_perturbations": n_perturbations,
            "kernel_width": kernel_width,
            "seed": seed,
        },
        target=target,
        feature_relevances=[float(v) for v in _spread_to_features(attr_weights, x, schema)],
        attribute_relevances=[float(v) for v in attr_weights],
        stats={"r_squared": r_squared, "intercept": float(coef[0])},
    )


# ---------------------------------------------------------------------------
# Canonical artifact assembly
# ---------------------------------------------------------------------------

ARTIFACT_SCHEMA_VERSION = 1


@dataclass
class ExplanationArtifact:
    """Hashable record of one decision: probabilities, routing, relevances."""

    customer_id: str
    timestamp_ms: int
    decision: dict[str, Any]
    entropy: float
    route: str
    attribute_names: list[str]
    relevance_maps: list[dict[str, Any]]
    schema_version: int = ARTIFACT_SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "customer_id": self.customer_id,
            "timestamp_ms": self.timestamp_ms,
            "decision": self.decision,
            "entropy": self.entropy,
            "route": self.route,
            "attribute_names": self.attribute_names,
            "relevance_maps": self.relevance_maps,
        }


def normalized_magnitudes(attr_values: list[float]) -> list[float]:
    """Scale absolute attribute relevances into [0, 1] by the largest one."""
    mags = [abs(v) for v in attr_values]
    top = max(mags) if mags else 0.0
    if top == 0.0:
        return [0.0 for _ in mags]
    return [m / top for m in mags]


def build_artifact(
    customer_id: str,
    timestamp_ms: int,
    decision: dict[str, Any],
    entropy: float,
    route: str,
    maps: list[RelevanceMap],
    schema: Schema,
) -> tuple[ExplanationArtifact, bytes]:
    """Assemble the canonical artifact; returns it with its exact bytes.

    High-importance flags apply strictly above the 0.50 normalized level:
    an attribute sitting exactly at 0.50 is not flagged.
    """
    if not maps:
        raise EmptyMapsError("at least one relevance map required")
    rendered = []
    for m in maps:
        normalized = normalized_magnitudes(m.attribute_relevances)
        rendered.append(
            {
                **m.to_dict(),
                "normalized_attribute_relevances": normalized,
                "high_importance": [v > HIGH_IMPORTANCE_THRESHOLD for v in normalized],
            }
        )
    artifact = ExplanationArtifact(
        customer_id=customer_id,
        timestamp_ms=timestamp_ms,
        decision=decision,
        entropy=entropy,
        route=route,
        attribute_names=[a.name for a in schema.attributes],
        relevance_maps=rendered,
    )
    return artifact, canonical_serialize(artifact.to_dict())
