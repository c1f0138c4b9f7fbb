"""Pure-numpy ADMM iteration loop; fallback twin of the compiled kernel."""

import numpy as np
from scipy.linalg import cho_solve


def run_admm(P_diag, q, A, L, rho, sigma, alpha, l, u, x, z, y,
             max_iter, check_every, eps_abs, eps_rel):
    """Operator-splitting iterations on min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.

    L is the Cholesky factor of P + sigma*I + A' diag(rho) A.  x, z, y are
    updated in place.  Returns (converged, iterations, primal_res, dual_res).
    """
    rho_inv = 1.0 / rho
    it = 0
    rp = rd = np.inf
    while it < max_iter:
        it += 1
        rhs = A.T @ (rho * z - y) + sigma * x - q
        xt = cho_solve((L, True), rhs, check_finite=False)
        zt = A @ xt
        x[:] = alpha * xt + (1.0 - alpha) * x
        w = alpha * zt + (1.0 - alpha) * z + rho_inv * y
        np.clip(w, l, u, out=z)
        y[:] = rho * (w - z)
        if it % check_every == 0 or it == max_iter:
            ax = A @ x
            aty = A.T @ y
            px = P_diag * x
            rp = np.max(np.abs(ax - z)) if len(z) else 0.0
            rd = np.max(np.abs(px + q + aty))
            eps_p = eps_abs + eps_rel * max(np.max(np.abs(ax), initial=0.0),
                                            np.max(np.abs(z), initial=0.0))
            eps_d = eps_abs + eps_rel * max(np.max(np.abs(px), initial=0.0),
                                            np.max(np.abs(q), initial=0.0),
                                            np.max(np.abs(aty), initial=0.0))
            if rp <= eps_p and rd <= eps_d:
                return 1, it, rp, rd
    return 0, it, rp, rd
