import math
import os
from dataclasses import dataclass, field
import numpy as np
from scipy.sparse.linalg import eigs

from errors import NumericError

VERSION = "0.1.0"

# dense eigvals is cheaper than ARPACK below this size
_DENSE_EIG_DIM = 600


def make_generator(seed):
    r"""Counter-based generator; every chain owns its own stream."""
    return np.random.Generator(np.random.Philox(int(seed)))


def get_writer(log_dir, *run_parts):
    """TensorBoard writer under ``log_dir/run_parts...`` or None when logging is off."""
    if not log_dir:
        return None
    from torch.utils.tensorboard import SummaryWriter
    return SummaryWriter(os.path.join(log_dir, *[str(p) for p in run_parts]))


@dataclass
class SpectralReport:
    principal_eigenvalue: float
    residual: float
    gap: float
    iterations: int
    eigenvector: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.residual < 0 or self.gap < 0:
            raise NumericError(f"invalid spectral report: residual={self.residual} gap={self.gap}")

    def as_dict(self):
        return {"principal_eigenvalue": self.principal_eigenvalue,
                "residual": self.residual,
                "gap": self.gap,
                "iterations": self.iterations}


def _as_matvec(A):
    if callable(A):
        return A
    A = np.asarray(A, dtype=float)
    return lambda x: A @ x


def power_iteration(A, dim=None, tol=1e-13, max_iter=100_000, writer=None, tag="power_iteration"):
    """
    Principal eigenpair of a nonnegative operator.

    ``A`` is a dense matrix or a matvec callable (then ``dim`` is required).
    Starts from the all-ones vector and stops once the relative change of
    the eigenvalue estimate drops to ``tol``. The returned vector has unit
    Euclidean norm and nonnegative entries.
    """
    matvec = _as_matvec(A)
    if dim is None:
        dim = np.asarray(A).shape[0]
    x = np.ones(dim) / math.sqrt(dim)
    lam = 0.0
    change = math.inf
    for it in range(1, max_iter + 1):
        y = matvec(x)
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0.0 or not math.isfinite(lam_new):
            raise NumericError(f"power iteration hit a degenerate iterate at step {it} (norm={lam_new})")
        x = y / lam_new
        change = abs(lam_new - lam) / lam_new
        if writer is not None:
            writer.add_scalar(f"{tag}/eigenvalue", lam_new, it)
            writer.add_scalar(f"{tag}/relative_change", change, it)
        lam = lam_new
        if change <= tol:
            return lam, x, it
    raise NumericError(f"power iteration did not converge in {max_iter} iterations "
                       f"(last relative change {change:.3e}, estimate {lam:.12g})")


def second_eigenvalue_modulus(A):
    A = np.asarray(A, dtype=float)
    if A.shape[0] < 2:
        return 0.0
    if A.shape[0] <= _DENSE_EIG_DIM:
        moduli = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    else:
        moduli = np.sort(np.abs(eigs(A, k=2, which="LM", return_eigenvectors=False)))[::-1]
    return float(moduli[1])


def spectral_report(A, tol=1e-13, max_iter=100_000, writer=None, tag="power_iteration"):
    A = np.asarray(A, dtype=float)
    lam, vec, iters = power_iteration(A, tol=tol, max_iter=max_iter, writer=writer, tag=tag)
    residual = float(np.linalg.norm(A @ vec - lam * vec) / np.linalg.norm(vec))
    gap = max(lam - second_eigenvalue_modulus(A), 0.0)
    return SpectralReport(principal_eigenvalue=lam, residual=residual, gap=gap,
                          iterations=iters, eigenvector=vec)


def _normalize_pow2(M):
    # power-of-two rescaling is exact, so traces keep full precision
    peak = float(np.abs(M).max())
    if peak == 0.0:
        return M, 0
    _, e = math.frexp(peak)
    return np.ldexp(M, -e), e


def scaled_matrix_power(A, N):
    """Return ``(P, log_scale)`` with ``A**N == P * exp(log_scale)``."""
    if N < 1:
        raise ValueError(f"matrix power needs N >= 1, got {N}")
    base, e_base = _normalize_pow2(np.array(A, dtype=float))
    log2_base = float(e_base)
    result, log2_result = None, 0.0
    k = int(N)
    while k:
        if k & 1:
            if result is None:
                result, log2_result = base.copy(), log2_base
            else:
                result, e = _normalize_pow2(result @ base)
                log2_result += log2_base + e
        k >>= 1
        if k:
            base, e = _normalize_pow2(base @ base)
            log2_base = 2.0 * log2_base + e
    return result, log2_result * math.log(2.0)


def log_trace_power(A, N):
    P, log_scale = scaled_matrix_power(A, N)
    tr = float(np.trace(P))
    if not tr > 0.0:
        raise NumericError(f"trace of matrix power is not positive ({tr}); entries must be nonnegative")
    return log_scale + math.log(tr)


def fmt(x):
    """Locale independent 12-significant-digit rendering used in CSV output."""
    return format(float(x), ".12g")
