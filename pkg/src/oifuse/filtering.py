"""Per-pixel optimal-interpolation filter for monthly reflectance series.

Each month is treated on its own: a climatology belief and (when a coarse
scene exists) a cross-sensor fusion belief are combined by inverse-variance
weighting, and the combined prediction is corrected toward the month's fine
observation with a Kalman gain. There is no state carried between months,
so a series is just a sequence of independent steps.

The scalar functions here are the reference implementation. filter_grid is
their array twin for whole-scene work; it is written expression-for-expression
against the scalar path so the two produce bit-identical float64 results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import LengthMismatchError

# Smallest variance any belief may carry. Keeps precisions finite without
# distorting any realistic reflectance uncertainty (reflectance sd >= 1e-4).
VAR_FLOOR = 1e-8

# Smallest admissible observation-noise variance.
R_FLOOR = 1e-10

MONTHS_PER_YEAR = 12


@dataclass(frozen=True)
class GaussianBelief:
    """A scalar Gaussian state estimate.

    The constructor enforces the package-wide variance floor, so any belief
    you can hold in hand has ``variance >= VAR_FLOOR`` and a finite mean.
    """

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ValueError(f"belief mean must be finite, got {self.mean!r}")
        if not math.isfinite(self.variance):
            raise ValueError(f"belief variance must be finite, got {self.variance!r}")
        if self.variance < VAR_FLOOR:
            object.__setattr__(self, "variance", VAR_FLOOR)

    @property
    def precision(self) -> float:
        return 1.0 / self.variance


@dataclass(frozen=True)
class ObservationModel:
    """Linear observation operator ``y = h * x + noise(0, r)``.

    ``h`` is dimensionless and must be nonzero; ``r`` is clamped up to
    R_FLOOR so the gain denominator never collapses.
    """

    h: float = 1.0
    r: float = 1e-4

    def __post_init__(self) -> None:
        if not math.isfinite(self.h) or self.h == 0.0:
            raise ValueError(f"observation factor h must be finite and nonzero, got {self.h!r}")
        if not math.isfinite(self.r) or self.r < 0.0:
            raise ValueError(f"observation variance r must be finite and >= 0, got {self.r!r}")
        if self.r < R_FLOOR:
            object.__setattr__(self, "r", R_FLOOR)


@dataclass(frozen=True)
class Observation:
    """One monthly reading; ``valid=False`` marks a gap (value is ignored)."""

    value: float
    valid: bool = True

    def __post_init__(self) -> None:
        if self.valid and not math.isfinite(self.value):
            raise ValueError("a valid observation needs a finite value")

    @classmethod
    def missing(cls) -> "Observation":
        return cls(float("nan"), valid=False)


@dataclass(frozen=True)
class FilteredStep:
    """Everything the filter knew and concluded for one month."""

    prior_climatology: GaussianBelief
    prior_fusion: Optional[GaussianBelief]
    predicted: GaussianBelief
    posterior: GaussianBelief
    gain: float
    observed: bool


def predict(prior_clim: GaussianBelief, prior_fusion: GaussianBelief) -> GaussianBelief:
    """Combine two independent priors by inverse-variance weighting.

    The result has the precision sum of its inputs (variance no larger than
    either input) and a mean pulled toward whichever prior is tighter. The
    operation is symmetric in its arguments.
    """
    p1 = prior_clim.variance
    p2 = prior_fusion.variance
    denom = p1 + p2
    mean = prior_clim.mean * p2 / denom + prior_fusion.mean * p1 / denom
    variance = 1.0 / (1.0 / p1 + 1.0 / p2)
    return GaussianBelief(mean, variance)


def kalman_gain(predicted_variance: float, obs: ObservationModel) -> float:
    """Gain applied to the innovation; ``gain * h`` always lies in (0, 1)."""
    return (obs.h * predicted_variance) / (obs.h * obs.h * predicted_variance + obs.r)


def update(
    predicted: GaussianBelief, y: Observation, obs: ObservationModel
) -> tuple[GaussianBelief, float]:
    """Correct a prediction with one observation.

    Returns the posterior belief and the gain used. An invalid observation
    leaves the prediction untouched and reports a gain of exactly 0.0; a
    valid one strictly reduces the variance (down to the floor).
    """
    if not y.valid:
        return predicted, 0.0
    k = kalman_gain(predicted.variance, obs)
    mean = predicted.mean + k * (y.value - obs.h * predicted.mean)
    variance = (1.0 - k * obs.h) * predicted.variance
    return GaussianBelief(mean, variance), k


def filter_step(
    prior_clim: GaussianBelief,
    prior_fusion: Optional[GaussianBelief],
    y: Observation,
    obs: ObservationModel,
) -> FilteredStep:
    """Run one month end to end: combine priors, then apply the observation.

    With no fusion prior the prediction falls back to the climatology belief
    alone; with no valid observation the posterior is the prediction itself.
    """
    if prior_fusion is None:
        predicted = prior_clim
    else:
        predicted = predict(prior_clim, prior_fusion)
    posterior, gain = update(predicted, y, obs)
    return FilteredStep(
        prior_climatology=prior_clim,
        prior_fusion=prior_fusion,
        predicted=predicted,
        posterior=posterior,
        gain=gain,
        observed=y.valid,
    )


def filter_series(
    clim_by_month: Sequence[GaussianBelief],
    fusion_by_step: Sequence[Optional[GaussianBelief]],
    observations: Sequence[Observation],
    obs: ObservationModel,
    start_month: int = 1,
) -> list[FilteredStep]:
    """Filter a whole series of monthly steps for one pixel.

    ``clim_by_month`` holds one belief per calendar month (January first);
    step ``k`` of the series looks up calendar month ``start_month + k``
    (wrapping at December). Steps are mutually independent, so reordering
    or splitting the series cannot change any individual result.
    """
    if len(clim_by_month) != MONTHS_PER_YEAR:
        raise LengthMismatchError(
            f"need one climatology belief per calendar month, got {len(clim_by_month)}"
        )
    if len(fusion_by_step) != len(observations):
        raise LengthMismatchError(
            f"fusion priors ({len(fusion_by_step)}) and observations "
            f"({len(observations)}) must align"
        )
    if not 1 <= start_month <= MONTHS_PER_YEAR:
        raise ValueError(f"start_month must be in 1..12, got {start_month}")
    steps = []
    for k, (fusion, y) in enumerate(zip(fusion_by_step, observations)):
        month_index = (start_month - 1 + k) % MONTHS_PER_YEAR
        steps.append(filter_step(clim_by_month[month_index], fusion, y, obs))
    return steps


@dataclass
class FilterInputs:
    """Array-shaped inputs for whole-scene filtering.

    All arrays are float64 with shape (n_steps, n_pixels); validity is
    carried by the boolean masks rather than NaN so the arithmetic never
    touches invalid lanes. ``month_index`` maps each step to 0..11 for
    climatology lookup done by the caller (the belief arrays here are
    already expanded per step).
    """

    clim_mean: np.ndarray
    clim_var: np.ndarray
    fusion_mean: np.ndarray
    fusion_var: np.ndarray
    has_fusion: np.ndarray
    obs_value: np.ndarray
    obs_valid: np.ndarray

    def __post_init__(self) -> None:
        shapes = {
            a.shape
            for a in (
                self.clim_mean,
                self.clim_var,
                self.fusion_mean,
                self.fusion_var,
                self.has_fusion,
                self.obs_value,
                self.obs_valid,
            )
        }
        if len(shapes) != 1:
            raise LengthMismatchError(f"filter input arrays disagree on shape: {shapes}")

    @property
    def n_steps(self) -> int:
        return self.clim_mean.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.clim_mean.shape[1]

    def with_step_masked(self, step: int) -> "FilterInputs":
        """Copy of the inputs with every observation at ``step`` marked invalid."""
        masked = self.obs_valid.copy()
        masked[step, :] = False
        return FilterInputs(
            clim_mean=self.clim_mean,
            clim_var=self.clim_var,
            fusion_mean=self.fusion_mean,
            fusion_var=self.fusion_var,
            has_fusion=self.has_fusion,
            obs_value=self.obs_value,
            obs_valid=masked,
        )


@dataclass
class FilteredGrid:
    """Array-shaped filter output; same layout as FilterInputs."""

    predicted_mean: np.ndarray
    predicted_var: np.ndarray
    posterior_mean: np.ndarray
    posterior_var: np.ndarray
    gain: np.ndarray
    observed: np.ndarray


def filter_grid(inputs: FilterInputs, obs: ObservationModel) -> FilteredGrid:
    """Vectorised twin of filter_step over (n_steps, n_pixels) arrays.

    Expression order mirrors the scalar path exactly, so a lane here and a
    filter_step call fed the same float64 values give bit-identical output.
    """
    p1 = np.maximum(inputs.clim_var, VAR_FLOOR)
    u1 = inputs.clim_mean
    p2 = np.maximum(inputs.fusion_var, VAR_FLOOR)
    u2 = inputs.fusion_mean

    with np.errstate(invalid="ignore", divide="ignore"):
        denom = p1 + p2
        comb_mean = u1 * p2 / denom + u2 * p1 / denom
        comb_var = 1.0 / (1.0 / p1 + 1.0 / p2)
    pred_mean = np.where(inputs.has_fusion, comb_mean, u1)
    pred_var = np.maximum(np.where(inputs.has_fusion, comb_var, p1), VAR_FLOOR)

    k = (obs.h * pred_var) / (obs.h * obs.h * pred_var + obs.r)
    with np.errstate(invalid="ignore"):
        upd_mean = pred_mean + k * (inputs.obs_value - obs.h * pred_mean)
    upd_var = np.maximum((1.0 - k * obs.h) * pred_var, VAR_FLOOR)

    post_mean = np.where(inputs.obs_valid, upd_mean, pred_mean)
    post_var = np.where(inputs.obs_valid, upd_var, pred_var)
    gain = np.where(inputs.obs_valid, k, 0.0)

    return FilteredGrid(
        predicted_mean=pred_mean,
        predicted_var=pred_var,
        posterior_mean=post_mean,
        posterior_var=post_var,
        gain=gain,
        observed=inputs.obs_valid.copy(),
    )
