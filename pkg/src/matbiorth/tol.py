"""Default numerical tolerances, overridable through an environment variable.

MATBIORTH_TOL holds a JSON object, e.g. '{"fac": 1e-8, "route": 1e-6}'.
"""

import json
import os

import numpy as np

DEFAULTS = {
    "id": 1e-10,       # monic detection
    "res": 1e-10,      # polynomial identities and remainders
    "clust": 1e-7,     # eigenvalue clustering radius
    "sing": 1e-12,     # reciprocal condition threshold
    "fac": 1e-9,       # factorization reconstruction
    "route": 1e-7,     # agreement between transformation routes
    "quad": 1e-10,     # quadrature convergence
    "round": 1e-12,    # relative cutoff for interpolated coefficients
}

ENV_VAR = "MATBIORTH_TOL"


def get(name):
    raw = os.environ.get(ENV_VAR)
    if raw:
        try:
            over = json.loads(raw)
        except ValueError:
            over = {}
        if isinstance(over, dict) and name in over:
            return float(over[name])
    return DEFAULTS[name]


def rcond(M):
    """Reciprocal 2-norm condition number, 0 for singular or empty input."""
    M = np.asarray(M)
    if M.size == 0:
        return 1.0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0 or not np.all(np.isfinite(s)):
        return 0.0
    return float(s[-1] / s[0])

