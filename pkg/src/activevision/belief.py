"""Gaussian pose belief, unscented measurement updates and entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, CameraPosition, VisibilityThresholds, visible_mask
from .errors import ConfigurationError, NumericalError
from .field import FieldModel, Landmark
from .geometry import Pose2D, wrap_angle

__all__ = [
    "GaussianBelief", "LandmarkObservation", "UkfParams", "RangeBearingNoise", "Pose2D",
    "expected_observations", "ukf_update", "unscented_update", "entropy", "predict",
    "range_bearing", "fold_observations",
]


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        n = len(mean)
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {n}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-9):
            raise NumericalError("covariance not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NumericalError("covariance not positive definite", _cond(cov)) from None
        if n == 3:
            mean[2] = wrap_angle(mean[2])
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def pose(self) -> Pose2D:
        return Pose2D.from_array(self.mean)

    @classmethod
    def around(cls, pose: Pose2D, sigma_xy, sigma_theta):
        return cls(pose.as_array(), np.diag([sigma_xy ** 2, sigma_xy ** 2, sigma_theta ** 2]))


@dataclass(frozen=True)
class LandmarkObservation:
    landmark_id: int
    distance: float
    bearing: float
    noise: np.ndarray

    def as_vector(self):
        return np.array([self.distance, self.bearing])


@dataclass(frozen=True)
class UkfParams:
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def validate(self, n=3):
        if not 0 < self.alpha <= 1:
            raise ConfigurationError("ukf_alpha", "must be in (0, 1]")
        if n + self.lam(n) <= 0:
            raise ConfigurationError("ukf_kappa", "sigma-point spread n + lambda must be > 0")

    def lam(self, n):
        return self.alpha ** 2 * (n + self.kappa) - n

    def weights(self, n):
        lam = self.lam(n)
        wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1 - self.alpha ** 2 + self.beta)
        return wm, wc


@dataclass(frozen=True)
class RangeBearingNoise:
    """R = diag((range_fraction * d)^2, bearing_sigma^2), range sigma floored."""

    range_fraction: float = 0.1
    bearing_sigma: float = math.radians(2.0)
    min_range_sigma: float = 0.01

    def covariance(self, distance):
        sr = max(self.range_fraction * distance, self.min_range_sigma)
        return np.diag([sr * sr, self.bearing_sigma ** 2])


def _cond(m):
    try:
        return float(np.linalg.cond(m))
    except np.linalg.LinAlgError:
        return float("inf")


def range_bearing(states, landmark_xy):
    """h(pose) for an (N, 3) array of poses: (N, 2) of (range, bearing)."""
    states = np.atleast_2d(states)
    dx = landmark_xy[0] - states[:, 0]
    dy = landmark_xy[1] - states[:, 1]
    return np.column_stack([np.hypot(dx, dy), wrap_angle(np.arctan2(dy, dx) - states[:, 2])])


def _wrap_cols(d, angular):
    if angular is not None and len(angular):
        d = d.copy()
        d[..., angular] = wrap_angle(d[..., angular])
    return d


def _unscented_core(mu, P, z, h, R, params, angular_state, angular_meas):
    n = len(mu)
    lam = params.lam(n)
    wm, wc = params.weights(n)
    try:
        L = np.linalg.cholesky((n + lam) * P)
    except np.linalg.LinAlgError:
        raise NumericalError("prior covariance not positive definite", _cond(P)) from None
    sigma = np.vstack([mu, mu + L.T, mu - L.T])
    Z = np.atleast_2d(h(sigma))
    z0 = Z[0]
    z_hat = z0 + wm @ _wrap_cols(Z - z0, angular_meas)
    dZ = _wrap_cols(Z - z_hat, angular_meas)
    dX = _wrap_cols(sigma - mu, angular_state)
    S = (dZ * wc[:, None]).T @ dZ + R
    C = (dX * wc[:, None]).T @ dZ
    try:
        Ls = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericalError("innovation covariance not invertible", _cond(S)) from None
    # K = C S^-1 via two triangular solves
    K = np.linalg.solve(Ls.T, np.linalg.solve(Ls, C.T)).T
    nu = _wrap_cols(np.asarray(z, dtype=float) - z_hat, angular_meas)
    new_mu = _wrap_cols(mu + K @ nu, angular_state)
    new_P = P - K @ S @ K.T
    return new_mu, (new_P + new_P.T) / 2


def unscented_update(belief: GaussianBelief, z, h, R, params: UkfParams,
                     angular_state=(2,), angular_meas=()):
    """Unscented measurement update for an arbitrary measurement function.

    ``h`` maps an (N, n) array of states to an (N, m) array of predictions.
    Residuals on the listed angular components are wrapped to (-pi, pi].
    """
    n = len(belief.mean)
    mu, P = _unscented_core(belief.mean, belief.cov, z, h, np.asarray(R, dtype=float), params,
                            [i for i in angular_state if i < n], list(angular_meas))
    return GaussianBelief(mu, P)


def fold_observations(belief: GaussianBelief, observations, field: FieldModel,
                      params: UkfParams | None = None) -> GaussianBelief:
    """Apply ``ukf_update`` for each observation in order."""
    params = UkfParams() if params is None else params
    mu, P = belief.mean, belief.cov
    for z in observations:
        lxy = field.positions[field.index_of(z.landmark_id)]
        mu, P = _unscented_core(mu, P, z.as_vector(), lambda s, lxy=lxy: range_bearing(s, lxy),
                                z.noise, params, [2], [1])
    return GaussianBelief(mu, P) if observations else belief


def ukf_update(belief: GaussianBelief, z: LandmarkObservation, landmark: Landmark,
               params: UkfParams | None = None) -> GaussianBelief:
    """Fuse one (range, bearing) observation of a known landmark."""
    if z.landmark_id != landmark.id:
        raise ValueError(f"observation of landmark {z.landmark_id} paired with landmark {landmark.id}")
    params = UkfParams() if params is None else params
    lxy = np.asarray(landmark.position, dtype=float)
    return unscented_update(belief, z.as_vector(), lambda s: range_bearing(s, lxy), z.noise,
                            params, angular_state=(2,), angular_meas=(1,))


def expected_observations(belief: GaussianBelief, cam: CameraPosition, field: FieldModel,
                          thr: VisibilityThresholds, intr: CameraIntrinsics | None = None,
                          noise: RangeBearingNoise | None = None) -> list[LandmarkObservation]:
    """Noiseless observations of every landmark visible from the belief mean, by id."""
    intr = CameraIntrinsics() if intr is None else intr
    noise = RangeBearingNoise() if noise is None else noise
    pose = belief.pose
    mask = visible_mask(pose, cam, intr, field, thr)
    if not mask.any():
        return []
    idx = np.flatnonzero(mask)
    out = []
    for i in idx:
        lm = field.landmarks[i]
        d, b = range_bearing(belief.mean, field.positions[i])[0]
        out.append(LandmarkObservation(lm.id, float(d), float(b), noise.covariance(d)))
    out.sort(key=lambda o: o.landmark_id)
    return out


def entropy(belief_or_cov) -> float:
    """Differential entropy 0.5 * ln det(2 pi e Sigma), in nats."""
    cov = belief_or_cov.cov if isinstance(belief_or_cov, GaussianBelief) else np.asarray(belief_or_cov, float)
    n = cov.shape[0]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite", _cond(cov)) from None
    return 0.5 * n * math.log(2 * math.pi * math.e) + float(np.sum(np.log(np.diag(L))))


def predict(belief: GaussianBelief, inflation) -> GaussianBelief:
    """Age a belief by adding diagonal process noise (robot base is static)."""
    q = np.broadcast_to(np.asarray(inflation, dtype=float), belief.mean.shape)
    return GaussianBelief(belief.mean, belief.cov + np.diag(q))
