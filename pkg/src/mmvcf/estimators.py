"""scikit-learn estimators around the filter trainers.

Samples are ``(N, K, H, W)`` arrays of multi-channel feature maps. Labels
may be any two classes; the second of the sorted classes is the target
(true) class. ``decision_function`` returns ``<f, x> + b`` and
``predict`` thresholds it at zero.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._exceptions import TrainingError
from ._validation import check_stack
from .detect import psr
from .spectral import cross_correlate
from .trainers import FilterBank, fit_linear_svm, fit_mmvcf, solve_vcf


class _CorrelationFilterClassifier(ClassifierMixin, BaseEstimator):

    def _encode(self, y):
        y = np.asarray(y).ravel()
        classes = np.unique(y)
        if len(classes) > 2:
            raise TrainingError(f"expected two classes, got {len(classes)}")
        if len(classes) == 2:
            self.classes_ = classes
            return np.where(y == classes[1], 1.0, -1.0)
        # one class is only allowed when it is +/-1 (VCF may train on positives alone)
        if classes[0] not in (-1, 1):
            raise TrainingError("training data must contain both classes")
        self.classes_ = np.array([-1, 1])
        return y.astype(np.float64)

    def _validate_X(self, X):
        X = check_stack(X, "X", ndim=4)
        if hasattr(self, "filter_") and X.shape[1:] != self.filter_.dims:
            raise ValueError(f"X has sample shape {X.shape[1:]}, model expects {self.filter_.dims}")
        return X

    @property
    def coef_(self):
        check_is_fitted(self, "filter_")
        return self.filter_.taps

    @property
    def intercept_(self):
        check_is_fitted(self, "filter_")
        return self.filter_.bias

    def decision_function(self, X):
        check_is_fitted(self, "filter_")
        X = self._validate_X(X)
        return self.filter_.score(X)

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores > 0, self.classes_[-1], self.classes_[0])

    def correlation_planes(self, X):
        """Circular correlation planes (bias added), shape ``(N, H, W)``."""
        check_is_fitted(self, "filter_")
        X = self._validate_X(X)
        return np.stack([cross_correlate(x, self.filter_).values for x in X]) + self.filter_.bias

    def peak_scores(self, X):
        """Maximum of each sample's correlation plane."""
        planes = self.correlation_planes(X)
        return planes.reshape(len(planes), -1).max(axis=1)

    def psr_scores(self, X, mask_radius=5):
        """Peak-to-sidelobe ratio of each sample's correlation plane."""
        return np.array([psr(p, mask_radius) for p in self.correlation_planes(X)])


class VCF(_CorrelationFilterClassifier):
    """Multi-channel ridge-regression correlation filter.

    Parameters
    ----------
    lam : float, default=1.0
        Ridge penalty on the filter energy.
    sigma : float, default=2.0
        Width (cells) of the Gaussian desired output of positives.
    q_positive : float, default=1.0
        Peak height of the desired output when ``fit`` gets no targets.
    """

    def __init__(self, lam=1.0, sigma=2.0, q_positive=1.0):
        self.lam = lam
        self.sigma = sigma
        self.q_positive = q_positive

    def fit(self, X, y, centers=None, targets=None):
        """Fit the filter.

        ``centers`` optionally gives each positive's object location
        ``(row, col)`` in cells; the desired output peaks there.
        """
        X = check_stack(X, "X", ndim=4)
        yy = self._encode(y)
        q = np.where(yy > 0, float(self.q_positive), 1.0) if targets is None else targets
        taps = solve_vcf(X, yy, q, centers, self.lam, self.sigma)
        self.filter_ = FilterBank(taps, 0.0, "vcf", lam=float(self.lam), sigma=float(self.sigma))
        return self


class LinearSVMFilter(_CorrelationFilterClassifier):
    """Linear SVM on the flattened feature maps, solved with SMO.

    Parameters
    ----------
    C : float, default=1.0
    tol : float, default=1e-6
        Stop when the maximal KKT violation falls below this.
    max_passes : int or None
        Sweep budget for SMO (``None`` means ``10 * N``).
    q_positive, q_negative : float, default=1.0
        Margin targets of the two classes.
    """

    def __init__(self, C=1.0, tol=1e-6, max_passes=None, q_positive=1.0, q_negative=1.0):
        self.C = C
        self.tol = tol
        self.max_passes = max_passes
        self.q_positive = q_positive
        self.q_negative = q_negative

    def fit(self, X, y, targets=None):
        X = check_stack(X, "X", ndim=4)
        yy = self._encode(y)
        q = np.where(yy > 0, self.q_positive, self.q_negative) if targets is None else targets
        self.filter_, self.dual_ = fit_linear_svm(X, yy, q, self.C, self.tol, self.max_passes)
        self.support_ = self.dual_.support
        return self


class MMVCF(_CorrelationFilterClassifier):
    """Maximum-margin vector correlation filter.

    A linear SVM under the metric of the localisation matrix
    ``S = (1 - gamma) D + gamma I``, where ``D`` is the per-frequency
    channel cross-power of the training set. ``gamma=1`` is exactly the
    linear SVM; small ``gamma`` (0.01 to 0.1) sharpens correlation peaks.

    Parameters
    ----------
    gamma : float in (0, 1], default=0.1
    C : float, default=1.0
    tol : float, default=1e-6
    max_passes : int or None
    solver : {"dual", "primal"}, default="dual"
        ``"dual"`` uses the ``S^-1`` kernel; ``"primal"`` pre-whitens the
        samples by ``S^-1/2`` and solves a plain linear SVM.
    q_positive, q_negative : float, default=1.0
    """

    def __init__(self, gamma=0.1, C=1.0, tol=1e-6, max_passes=None, solver="dual",
                 q_positive=1.0, q_negative=1.0):
        self.gamma = gamma
        self.C = C
        self.tol = tol
        self.max_passes = max_passes
        self.solver = solver
        self.q_positive = q_positive
        self.q_negative = q_negative

    def fit(self, X, y, targets=None):
        X = check_stack(X, "X", ndim=4)
        yy = self._encode(y)
        q = np.where(yy > 0, self.q_positive, self.q_negative) if targets is None else targets
        self.filter_, self.dual_ = fit_mmvcf(X, yy, q, self.gamma, self.C, self.tol,
                                             self.max_passes, self.solver)
        self.support_ = self.dual_.support
        return self


def estimator_for(filter_bank):
    """An unfitted estimator configured like the trainer that produced ``filter_bank``."""
    fb = filter_bank
    if fb.trainer == "vcf":
        return VCF(lam=fb.lam if fb.lam is not None else 1.0,
                   sigma=fb.sigma if fb.sigma is not None else 2.0)
    if fb.trainer == "svm":
        return LinearSVMFilter(C=fb.C if fb.C is not None else 1.0)
    solver = "primal" if fb.trainer == "mmvcf-primal" else "dual"
    return MMVCF(gamma=fb.gamma, C=fb.C if fb.C is not None else 1.0, solver=solver)
