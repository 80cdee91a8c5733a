"""Classical two-stage baselines: estimate the environment, then optimize.

The learned precoder is judged against the textbook pipeline it replaces:

1. least-squares channel estimates from the compressed pilots,
2. angle estimation by scanning the matched-filtered echo snapshot with a
   steering-vector spectrum (Bartlett scan) and picking spectrum peaks,
3. least-squares target-coefficient fit on the picked angles,
4. direct maximization of the worst-case illumination subject to per-user
   SINR constraints, via penalty ascent with projection onto the power
   sphere, from multiple starts.

Stage 4 run on the true channels gives the perfect-CSI reference; run on
stages 1-3's outputs it gives the estimated-CSI baseline.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, InvalidArgumentError, ShapeError
from .linalg import RngStream
from .metrics import Precoder
from .scene import pathloss_gain, steering_vector
from .sounding import SoundingData, SoundingConfig
from .training import adam_update


def ls_channel_estimate(pilots_compressed: np.ndarray, pu_w: float, lp: int) -> np.ndarray:
    """Least-squares downlink channel estimate from Ytil, shape K x M.

    Ytil = sqrt(P_u) L_p H^T + noise, so Hhat = (Ytil / (sqrt(P_u) L_p))^T.
    Exact in the noiseless limit; error variance shrinks as 1/L_p.
    """
    if pu_w <= 0 or lp < 1:
        raise InvalidArgumentError("need positive pilot power and length")
    return (pilots_compressed / (math.sqrt(pu_w) * lp)).T


def default_angle_grid(step_deg: float = 0.25) -> np.ndarray:
    """Uniform scan grid over [-90, 90] degrees, in radians."""
    if step_deg <= 0 or step_deg > 0.5:
        raise InvalidArgumentError(f"grid step must be in (0, 0.5] degrees, got {step_deg}")
    n = int(round(180.0 / step_deg))
    return np.radians(np.linspace(-90.0, 90.0, n + 1))


def bartlett_spectrum(echoes_filtered: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Steering spectrum |a(theta)^H Ztil a(theta)*| over the grid.

    For the echo model Ztil ~ sum_m c_m a(theta_m) a(theta_m)^T this peaks at
    the target angles with value |c_m| M^2 for isolated targets.
    """
    m = echoes_filtered.shape[0]
    if echoes_filtered.shape != (m, m):
        raise ShapeError(f"echo snapshot must be square, got {echoes_filtered.shape}")
    idx = np.arange(m)[:, None]
    a = np.exp(-1j * np.pi * idx * np.sin(grid))      # M x G steering matrix
    b = echoes_filtered @ np.conj(a)
    return np.abs(np.sum(np.conj(a) * b, axis=0))


def bartlett_doa(echoes_filtered: np.ndarray, t: int, grid: np.ndarray = None):
    """Pick T angles from the echo spectrum; returns (angles, low_confidence).

    Angles are the T largest strict local maxima (grid endpoints count
    against their single neighbor), sorted ascending. If the spectrum has
    fewer than T local maxima the T largest spectrum values stand in and the
    low-confidence flag is set.
    """
    if t < 1:
        raise InvalidArgumentError(f"need at least one target, got t={t}")
    if grid is None:
        grid = default_angle_grid()
    if grid.size < 3:
        raise InvalidArgumentError("angle grid too coarse to find peaks")
    s = bartlett_spectrum(echoes_filtered, grid)

    inner = (s[1:-1] > s[:-2]) & (s[1:-1] > s[2:])
    peaks = list(np.nonzero(inner)[0] + 1)
    if s[0] > s[1]:
        peaks.append(0)
    if s[-1] > s[-2]:
        peaks.append(s.size - 1)

    if len(peaks) >= t:
        peaks = np.asarray(peaks)
        chosen = peaks[np.argsort(s[peaks])[-t:]]
        return np.sort(grid[chosen]), False
    chosen = np.argsort(s)[-t:]
    return np.sort(grid[chosen]), True


def coeff_ls(echoes_filtered: np.ndarray, angles: np.ndarray, pr_w: float, lr: int):
    """Least-squares fit of per-angle echo coefficients; returns (coeffs, residual).

    Models Ztil ~ sqrt(P_r) (L_r / M) sum_i c_i a(theta_i) a(theta_i)^T; c_i
    absorbs the cross-section and the squared two-way gain. The angles must
    be distinct: coincident atoms make the dictionary rank-deficient.
    """
    m = echoes_filtered.shape[0]
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.size < 1:
        raise InvalidArgumentError("need at least one angle")
    atoms = []
    for th in angles:
        a = steering_vector(th, m)
        atoms.append((math.sqrt(pr_w) * lr / m * np.outer(a, a)).ravel())
    d = np.stack(atoms, axis=1)                       # M^2 x T dictionary
    sv = np.linalg.svd(d, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > 1e10:
        raise IllConditionedError("echo dictionary is rank deficient (coincident angles?)")
    coeffs, *_ = np.linalg.lstsq(d, echoes_filtered.ravel(), rcond=None)
    residual = float(np.linalg.norm(d @ coeffs - echoes_filtered.ravel()))
    return coeffs, residual


def reconstruct_target_channels(angles: np.ndarray, m: int, radar_pathloss_db,
                                known_range_m: float) -> np.ndarray:
    """Target channels ghat from estimated angles, shape T x M.

    Two-way amplitude comes from the pathloss model at the presumed-known
    range (its phase is irrelevant to illumination and is left at zero).
    """
    amp = math.sqrt(float(pathloss_gain(known_range_m, *radar_pathloss_db)))
    return np.stack([amp * np.conj(steering_vector(th, m)) for th in np.atleast_1d(angles)])


@dataclass
class EstimatedScene:
    """Everything the estimated-CSI pipeline extracted from one sounding."""

    h_hat: np.ndarray          # K x M channel estimates
    angles: np.ndarray         # T estimated angles, radians, ascending
    coeffs: np.ndarray         # T fitted echo coefficients
    g_hat: np.ndarray          # T x M reconstructed target channels
    low_confidence: bool       # Bartlett peak picking fell back to raw maxima
    fit_residual: float        # coefficient-fit residual norm


def estimate_scene(data: SoundingData, snd: SoundingConfig, t: int,
                   radar_pathloss_db, known_range_m: float,
                   grid: np.ndarray = None) -> EstimatedScene:
    """Run the full estimation pipeline on one sounding snapshot."""
    h_hat = ls_channel_estimate(data.pilots, snd.pu_w, snd.lp)
    angles, lowconf = bartlett_doa(data.echoes, t, grid)
    coeffs, residual = coeff_ls(data.echoes, angles, snd.pr_w, snd.lr)
    g_hat = reconstruct_target_channels(angles, data.echoes.shape[0],
                                        radar_pathloss_db, known_range_m)
    return EstimatedScene(h_hat=h_hat, angles=angles, coeffs=coeffs, g_hat=g_hat,
                          low_confidence=lowconf, fit_residual=residual)


@dataclass
class OptimizeReport:
    """Outcome of one optimize_precoder call."""

    feasible: bool             # all reported slacks >= -tolerance
    slack: np.ndarray          # per-user gamma_k - gamma_target at the solution
    q: float                   # worst-case illumination at the solution
    restarts: int
    best_restart: int


def _ascent_eval(w, h_conj, g_conj, gamma_opt, sigma2_w, q_scale, rho, kappa):
    """Objective and complex gradient of the penalty ascent at W."""
    t = g_conj.shape[0]
    r = g_conj @ w                                    # T x (M+K) target amplitudes
    q_all = (r.real ** 2 + r.imag ** 2).sum(axis=1)
    i_min = int(np.argmin(q_all))
    obj = q_all[i_min] / q_scale
    grad = (2.0 / q_scale) * np.outer(np.conj(g_conj[i_min]), r[i_min])

    k = h_conj.shape[0]
    if k > 0:
        u = h_conj @ w                                # K x (M+K) stream amplitudes
        p = u.real ** 2 + u.imag ** 2
        num = p[np.arange(k), np.arange(k)]
        den = p.sum(axis=1) - num + sigma2_w
        gam = num / den
        slack = gam - gamma_opt
        viol = slack < 0
        pen = np.where(viol, -slack * slack ** kappa, 0.0)
        obj += rho * float(pen.sum())
        dpen = np.where(viol, -(kappa + 1) * slack ** kappa, 0.0)   # d pen / d gamma
        # d gamma_k / d p_kj: 1/den_k at j = k, -gamma_k/den_k elsewhere
        coef = (rho * dpen / den)[:, None] * np.where(
            np.arange(k + w.shape[0])[None, :] == np.arange(k)[:, None], 1.0, -gam[:, None])
        grad += 2.0 * np.conj(h_conj).T @ (coef * u)
        return obj, grad, slack
    return obj, grad, np.zeros(0)


def optimize_precoder(h_mat: np.ndarray, g_mat: np.ndarray, gamma_db: float,
                      pd_w: float, sigma2_w: float, *, restarts: int = 4,
                      iters_per_phase: int = 150,
                      rho_schedule=(1.0, 1e2, 1e4, 1e6),
                      margin_frac: float = 0.02, feas_tol: float = 1e-6,
                      seed: int = 0):
    """Maximize worst-case illumination under SINR constraints on the power sphere.

    Projected Adam ascent on the penalized objective
    min_m Q_m / scale + rho * sum_k max(-h_k, 0) h_k^kappa, re-normalized to
    ||W||_F^2 = P_d after every step, with rho escalating through
    `rho_schedule` and `restarts` independent starts (structured splits plus
    random draws). The working SINR threshold carries a small margin so the
    flat penalty settles strictly feasible; reported slacks use the true
    threshold. Returns (Precoder, OptimizeReport) for the best start,
    preferring feasible solutions by worst-case illumination, otherwise the
    least-violating one.
    """
    h_mat = np.atleast_2d(np.asarray(h_mat, dtype=np.complex128))
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=np.complex128))
    if h_mat.size == 0:
        h_mat = h_mat.reshape(0, g_mat.shape[1])
    k, m = h_mat.shape
    if g_mat.shape[0] < 1:
        raise InvalidArgumentError("need at least one target channel")
    if g_mat.shape[1] != m and k > 0:
        raise ShapeError(f"channel/target antenna mismatch: {h_mat.shape} vs {g_mat.shape}")
    m = g_mat.shape[1]
    if pd_w <= 0 or sigma2_w <= 0:
        raise InvalidArgumentError("powers must be positive (watts)")
    if restarts < 1:
        raise InvalidArgumentError("need at least one restart")

    n_cols = m + k
    gamma_lin = 10.0 ** (gamma_db / 10.0)
    gamma_opt = gamma_lin * (1.0 + margin_frac)
    q_scale = pd_w * float(np.max(np.sum(np.abs(g_mat) ** 2, axis=1)))
    h_conj, g_conj = np.conj(h_mat), np.conj(g_mat)
    kappa = 3
    lr = 0.05 * math.sqrt(pd_w / (2 * m * n_cols))
    gen = RngStream(seed, 0).gen

    def project(w):
        return w * math.sqrt(pd_w / float(np.sum(w.real ** 2 + w.imag ** 2)))

    def structured(comm_frac):
        w = np.zeros((m, n_cols), dtype=np.complex128)
        if k > 0:
            for j in range(k):
                h = h_mat[j]
                nrm = np.linalg.norm(h)
                w[:, j] = h / nrm if nrm > 0 else 0.0
            w[:, :k] *= math.sqrt(comm_frac * pd_w / k)
        t = g_mat.shape[0]
        for j in range(m):
            g = g_mat[j % t]
            w[:, k + j] = g / np.linalg.norm(g)
        w[:, k:] *= math.sqrt((1.0 - comm_frac if k > 0 else 1.0) * pd_w / m)
        return project(w)

    def true_slack(w):
        if k == 0:
            return np.zeros(0)
        u = h_conj @ w
        p = u.real ** 2 + u.imag ** 2
        num = p[np.arange(k), np.arange(k)]
        den = p.sum(axis=1) - num + sigma2_w
        return num / den - gamma_lin

    best = None
    for r_i in range(restarts):
        if r_i == 0:
            w = structured(0.5 if k > 0 else 0.0)
        elif r_i == 1:
            w = structured(0.9 if k > 0 else 0.0)
        else:
            w = project(gen.standard_normal((m, n_cols)) +
                        1j * gen.standard_normal((m, n_cols)))
        wf = w.view(np.float64)                     # interleaved re/im view
        m1 = np.zeros_like(wf)
        v1 = np.zeros_like(wf)
        step = 0
        for rho in rho_schedule:
            for _ in range(iters_per_phase):
                _, grad, _ = _ascent_eval(w, h_conj, g_conj, gamma_opt,
                                          sigma2_w, q_scale, rho, kappa)
                # Drop the radial component so steps move along the power
                # sphere; otherwise the per-coordinate scaling below turns
                # pure radial gradients into tangential drift that never
                # settles at an optimum.
                grad -= (np.sum(grad.view(np.float64) * wf) / pd_w) * w
                step += 1
                adam_update([wf], [-grad.view(np.float64)], [m1], [v1], step, lr)
                w *= math.sqrt(pd_w / float(np.sum(wf * wf)))

        sl = true_slack(w)
        feas = bool(sl.size == 0 or float(sl.min()) >= -feas_tol)
        r = g_conj @ w
        q_val = float((r.real ** 2 + r.imag ** 2).sum(axis=1).min())
        cand = (feas, q_val if feas else float(sl.min()) if sl.size else q_val,
                w.copy(), sl, q_val, r_i)
        if best is None or cand[:2] > best[:2]:
            best = cand

    _, _, w, sl, q_val, r_i = best
    report = OptimizeReport(
        feasible=bool(sl.size == 0 or float(sl.min()) >= -feas_tol),
        slack=sl, q=q_val, restarts=restarts, best_restart=r_i)
    return Precoder(w=w, p_d_w=pd_w, k=k), report
