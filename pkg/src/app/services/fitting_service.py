"""
Fitting service: straight-line fits in linear, log and log-log coordinates
"""

import numpy as np
from scipy import stats

from src.app.exceptions import NumericalContractError
from src.app.models.fit_model import FitResult


class InsufficientStatisticsError(NumericalContractError):
    """Too few usable points for the requested statistic."""


class FittingService:
    """Thin wrappers around scipy.stats.linregress"""

    @staticmethod
    def _line(kind: str, x, y) -> FitResult:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        keep = np.isfinite(x) & np.isfinite(y)
        x, y = x[keep], y[keep]
        if x.size < 2 or np.ptp(x) == 0.0:
            raise InsufficientStatisticsError(f"{kind} fit needs two distinct x values")
        if x.size == 2 or np.ptp(y) == 0.0:
            slope, intercept = np.polyfit(x, y, 1)
            return FitResult(kind=kind, slope=float(slope), intercept=float(intercept), r_squared=1.0, n_points=int(x.size))
        res = stats.linregress(x, y)
        return FitResult(
            kind=kind,
            slope=float(res.slope),
            intercept=float(res.intercept),
            r_squared=float(res.rvalue**2),
            n_points=int(x.size),
        )

    def linear_fit(self, x, y) -> FitResult:
        """y = a + b x"""
        return self._line("linear", x, y)

    def log_fit(self, x, y) -> FitResult:
        """y = a + b ln x"""
        x = np.asarray(x, dtype=np.float64)
        positive = x > 0
        return self._line("log", np.log(x[positive]), np.asarray(y, dtype=np.float64)[positive])

    def power_fit(self, x, y) -> FitResult:
        """ln y = a + b ln x, so y ~ x^b"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        positive = (x > 0) & (y > 0)
        return self._line("power", np.log(x[positive]), np.log(y[positive]))

    def exp_fit(self, x, y) -> FitResult:
        """ln y = a + b x"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        positive = y > 0
        return self._line("exp", x[positive], np.log(y[positive]))

    @staticmethod
    def residual_sse(x, y, fit: FitResult) -> float:
        """Sum of squared residuals of ``fit`` evaluated in its own coordinates."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return float(np.sum((y - (fit.intercept + fit.slope * x)) ** 2))
