"""scikit-learn style wrappers around the chain drivers.

``GGMCSampler`` draws posterior samples for any :class:`~ggmc.targets.TargetModel`
(or for a logistic-regression posterior built from ``X, y``) and exposes them
through the usual ``fit`` / ``transform`` / ``get_params`` surface.
``BayesianLogisticRegression`` adds ``predict_proba`` / ``predict`` by
averaging over the retained posterior samples.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import type_of_target
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import ContractViolation, MassMatrix, SamplerConfig, kinetic_energy
from .diagnostics import kinetic_temperature, summarize
from .hyperparams import SGDParams, sgd_to_em_sampler, sgd_to_sampler
from .integrators import IntegratorKind
from .sampler import Correction, check_pairing, run_chains
from .targets import TargetModel, make_logistic_regression


class GGMCSampler(BaseEstimator):
    """Langevin-dynamics MCMC with optional Metropolis-Hastings correction.

    Parameters
    ----------
    step_size, friction, temperature : float
        Integrator time step ``h``, friction ``gamma`` and temperature ``T``.
        Ignored in favour of ``learning_rate``/``momentum`` when those are set.
    learning_rate, momentum : float or None
        SGD-style parameterization, converted with the data size of the target.
    mass : array-like or None
        Diagonal of the mass matrix; identity when None.
    integrator : {"obabo", "leapfrog", "euler_maruyama", "sgld"}
    correction : {"per_step", "multi_step", "none"}
    multi_step_n : int
        Steps per MH test in multi-step mode.
    n_steps, n_chains, burn_in, thin : int
        Chain length in integrator steps, number of independent chains,
        retained samples discarded per chain, and thinning interval.
    batch_size : int or None
        Minibatch size for stochastic gradients; full data when None.
    refresh : {"partial", "full"}
    target : TargetModel or None
        Used by :meth:`fit` when ``X`` is None.
    prior_precision : float
        Gaussian prior precision when fitting a logistic-regression posterior.
    random_state : int
    """

    def __init__(
        self,
        step_size=0.1,
        friction=1.0,
        temperature=1.0,
        learning_rate=None,
        momentum=None,
        mass=None,
        integrator="obabo",
        correction="per_step",
        multi_step_n=10,
        n_steps=1000,
        n_chains=1,
        burn_in=0,
        thin=1,
        batch_size=None,
        refresh="partial",
        target=None,
        prior_precision=1.0,
        random_state=0,
    ):
        self.step_size = step_size
        self.friction = friction
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.mass = mass
        self.integrator = integrator
        self.correction = correction
        self.multi_step_n = multi_step_n
        self.n_steps = n_steps
        self.n_chains = n_chains
        self.burn_in = burn_in
        self.thin = thin
        self.batch_size = batch_size
        self.refresh = refresh
        self.target = target
        self.prior_precision = prior_precision
        self.random_state = random_state

    def _resolve_config(self, target):
        integrator = IntegratorKind.parse(self.integrator)
        h, gamma = self.step_size, self.friction
        if (self.learning_rate is None) != (self.momentum is None):
            raise ContractViolation("learning_rate and momentum must be given together")
        if self.learning_rate is not None:
            p = SGDParams(self.learning_rate, self.momentum, target.data_size)
            if integrator is IntegratorKind.EULER_MARUYAMA:
                h, gamma, _ = sgd_to_em_sampler(p)
            else:
                h, gamma, routed = sgd_to_sampler(p)
                if routed is IntegratorKind.SGLD:
                    integrator, gamma = routed, 0.0
        check_pairing(integrator, self.correction)
        mass = None if self.mass is None else MassMatrix(self.mass)
        return integrator, SamplerConfig(h, gamma, self.temperature, mass)

    def _build_target(self, X, y):
        if X is None:
            if not isinstance(self.target, TargetModel):
                raise ContractViolation("pass X, y or set target to a TargetModel")
            return self.target
        X, y = check_X_y(X, y)
        return make_logistic_regression(X, y, self.prior_precision)

    def fit(self, X=None, y=None):
        """Run the chains and store the retained samples.

        Fitted attributes: ``samples_`` (n_chains, n_kept, d), ``momenta_``,
        ``log_alpha_`` and ``accepted_`` (all MH rounds, per chain),
        ``acceptance_rate_``, ``config_``, ``integrator_``, ``target_``,
        ``summary_`` (pooled over chains) and ``n_features_in_``.
        """
        target = self._build_target(X, y)
        integrator, config = self._resolve_config(target)
        results = run_chains(
            target,
            config,
            int(self.n_steps),
            n_chains=int(self.n_chains),
            seed=int(self.random_state),
            integrator=integrator,
            correction=Correction.parse(self.correction),
            multi_step_n=int(self.multi_step_n),
            batch_size=self.batch_size,
            refresh=self.refresh,
            thin=self.thin,
        )
        failed = [r.error for r in results if r.error]
        if failed:
            raise FloatingPointError(f"chain diverged: {failed[0]}")
        b = int(self.burn_in)
        self.samples_ = np.stack([r.theta[b:] for r in results])
        self.momenta_ = np.stack([r.momentum[b:] for r in results])
        self.potential_ = np.stack([r.potential[b:] for r in results])
        self.log_alpha_ = np.stack([r.all_log_alpha for r in results])
        self.accepted_ = np.stack([r.all_accepted for r in results])
        self.acceptance_rate_ = float(np.mean(self.accepted_))
        self.config_ = config
        self.integrator_ = integrator
        self.target_ = target
        self.n_features_in_ = target.dim
        if len(results) == 1:
            self.summary_ = _trimmed_summary(results[0], b)
        else:
            self.summary_ = [_trimmed_summary(r, b) for r in results]
        return self

    @property
    def posterior_mean_(self):
        check_is_fitted(self, "samples_")
        return self.samples_.reshape(-1, self.samples_.shape[-1]).mean(axis=0)

    def kinetic_temperature(self):
        """Temperature estimated from the retained momenta (OBABO/leapfrog/EM only)."""
        check_is_fitted(self, "momenta_")
        m = self.momenta_.reshape(-1, self.momenta_.shape[-1])
        return kinetic_temperature(m, self.config_.mass_for(m.shape[1]))

    def transform(self, X=None):
        """Return the pooled posterior samples as an ``(n_samples, d)`` array."""
        check_is_fitted(self, "samples_")
        return self.samples_.reshape(-1, self.samples_.shape[-1])

    def energies(self):
        """Potential and kinetic energy of every retained sample."""
        check_is_fitted(self, "samples_")
        mass = self.config_.mass_for(self.target_.dim)
        return self.potential_, kinetic_energy(self.momenta_, mass)


def _trimmed_summary(result, burn_in):
    s = summarize(result.theta[burn_in:], result.all_accepted,
                  result.potential[burn_in:], result.kinetic[burn_in:])
    return replace(s, mean_accept_prob=result.mean_accept_prob)


class BayesianLogisticRegression(ClassifierMixin, GGMCSampler):
    """Binary logistic regression with a Gaussian prior, sampled by GGMC.

    Predictions average the class-1 probability over all retained samples.
    With ``fit_intercept`` a constant column is appended to ``X``.
    """

    def __init__(
        self,
        step_size=0.02,
        friction=1.0,
        temperature=1.0,
        learning_rate=None,
        momentum=None,
        mass=None,
        integrator="obabo",
        correction="per_step",
        multi_step_n=10,
        n_steps=2000,
        n_chains=1,
        burn_in=0,
        thin=1,
        batch_size=None,
        refresh="partial",
        prior_precision=1.0,
        fit_intercept=True,
        random_state=0,
    ):
        super().__init__(
            step_size=step_size,
            friction=friction,
            temperature=temperature,
            learning_rate=learning_rate,
            momentum=momentum,
            mass=mass,
            integrator=integrator,
            correction=correction,
            multi_step_n=multi_step_n,
            n_steps=n_steps,
            n_chains=n_chains,
            burn_in=burn_in,
            thin=thin,
            batch_size=batch_size,
            refresh=refresh,
            prior_precision=prior_precision,
            random_state=random_state,
        )
        self.fit_intercept = fit_intercept

    def _design(self, X):
        if self.fit_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if type_of_target(y) != "binary":
            raise ValueError("BayesianLogisticRegression supports binary targets only")
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        super().fit(self._design(X), self._encoder.transform(y))
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "samples_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the model was fitted with {self.n_features_in_}"
            )
        thetas = self.transform()
        logits = self._design(X) @ thetas.T
        p1 = np.mean(1.0 / (1.0 + np.exp(-logits)), axis=1)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        check_is_fitted(self, "samples_")
        return self.classes_[(self.predict_proba(X)[:, 1] > 0.5).astype(int)]

    def decision_function(self, X):
        p = self.predict_proba(X)[:, 1]
        return np.log(p) - np.log1p(-p)
