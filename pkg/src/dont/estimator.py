"""Estimator-style wrapper around the flow training loop."""

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .costs import CostSpec
from .discrepancy import DiscrepancySpec
from .exceptions import ValidationError
from .flow import exact_inverse, forward, init, interpolate, reverse
from .measures import EmpiricalMeasure
from .numerics import Rng
from .training import LambdaSchedule, TrainConfig, train


class DynamicTranslator(BaseEstimator, TransformerMixin):
    """Learns a velocity-field flow pushing one point cloud onto another.

    fit(X, Y) trains the K-step flow on source X and target Y; transform
    maps new source points forward, inverse_transform maps target points
    back (explicit first-order reverse by default, Newton solve of the
    forward steps with exact=True).
    """

    def __init__(
        self,
        n_steps: int = 8,
        hidden: int = 64,
        gain: float = 0.01,
        power: float = 2.0,
        cost_weights=None,
        discrepancy: str = "mmd",
        bandwidths=None,
        epsilon: Optional[float] = None,
        iterations: int = 5000,
        batch_size: int = 256,
        learning_rate: float = 1e-3,
        lambda0: float = 1.0,
        lambda_floor: float = 1e-3,
        eval_every: int = 250,
        random_state: int = 0,
    ):
        self.n_steps = n_steps
        self.hidden = hidden
        self.gain = gain
        self.power = power
        self.cost_weights = cost_weights
        self.discrepancy = discrepancy
        self.bandwidths = bandwidths
        self.epsilon = epsilon
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lambda0 = lambda0
        self.lambda_floor = lambda_floor
        self.eval_every = eval_every
        self.random_state = random_state

    def _as_measure(self, data) -> EmpiricalMeasure:
        if isinstance(data, EmpiricalMeasure):
            return data
        return EmpiricalMeasure(np.asarray(data, dtype=np.float64))

    def fit(self, X, Y):
        alpha = self._as_measure(X)
        beta = self._as_measure(Y)
        self.cost_spec_ = CostSpec(p=self.power, weights=self.cost_weights)
        disc = DiscrepancySpec(
            kind=self.discrepancy, bandwidths=self.bandwidths, epsilon=self.epsilon
        )
        sched = LambdaSchedule(lambda0=self.lambda0, floor=self.lambda_floor)
        cfg = TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            eval_every=self.eval_every,
        )
        model = init(
            alpha.dim, self.n_steps, self.hidden, self.gain,
            Rng(self.random_state, stream=1),
        )
        self.model_, self.report_ = train(
            model, alpha, beta, self.cost_spec_, disc, sched, cfg
        )
        self.n_features_in_ = alpha.dim
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using the learned map")

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return forward(self.model_, self._as_measure(X)).points

    def inverse_transform(self, Y, exact: bool = False) -> np.ndarray:
        self._check_fitted()
        beta = self._as_measure(Y)
        back = exact_inverse(self.model_, beta) if exact else reverse(self.model_, beta)
        return back.points

    def interpolate(self, X, k: int) -> np.ndarray:
        """Source points advanced k of the n_steps flow steps."""
        self._check_fitted()
        return interpolate(self.model_, self._as_measure(X), k).points

    def fit_transform(self, X, Y=None, **fit_params):
        if Y is None:
            raise ValidationError("fit_transform needs both source X and target Y")
        return self.fit(X, Y).transform(X)
