from pydantic import BaseModel


class FitResult(BaseModel):
    """Least-squares line y = intercept + slope * x in the fit's own coordinates."""

    kind: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int
