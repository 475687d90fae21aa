"""
Ratcheting plasticity with combined kinematic and isotropic hardening.

Free energy
    psi = 1/2 (eps - eps_p - eps_r) : C : (eps - eps_p - eps_r)
          + 1/2 H_kin eps_p : eps_p + 1/2 H_iso kappa^2
Yield function
    f = ||dev(sigma - H_kin eps_p)|| - sqrt(2/3) (sigma_p + H_iso kappa)
Flow
    d eps_p = dlam n,  d kappa = sqrt(2/3) dlam,  d eps_r = beta dlam dev(sigma)/||dev(sigma)||

Integration is backward Euler. The local problem is written in Mandel
notation for the unknowns (n, dlam) and solved by Newton with an analytic
Jacobian; the consistent tangent follows from the implicit function theorem
on the same residual. All functions work on batches of quadrature points.

The module also hosts the scalar specialization used by Winkler springs.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from app import config
from app.errors import InvalidInput, LocalConvergenceError
from app.models import tensor as T

logger = logging.getLogger(__name__)

_ONES = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
_I6 = np.eye(6)
_P_DEV = _I6 - np.outer(_ONES, _ONES) / 3.0

RATCHET_DIRECTIONS = ("implicit", "trial")


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants (MPa for moduli and stresses)."""

    E: float
    nu: float
    sigma_p: float
    H_iso: float = 0.0
    H_kin: float = 0.0
    beta: float = 0.0
    ratchet_direction: str = "implicit"

    def __post_init__(self):
        values = [self.E, self.nu, self.sigma_p, self.H_iso, self.H_kin, self.beta]
        if not all(np.isfinite(v) for v in values):
            raise InvalidInput("material parameters must be finite")
        if self.E <= 0:
            raise InvalidInput(f"E must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise InvalidInput(f"nu must lie in (-1, 0.5), got {self.nu}")
        if self.sigma_p <= 0:
            raise InvalidInput(f"sigma_p must be positive, got {self.sigma_p}")
        if self.H_iso < 0 or self.H_kin < 0:
            raise InvalidInput("hardening moduli must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidInput(f"beta must lie in [0, 1], got {self.beta}")
        if self.ratchet_direction not in RATCHET_DIRECTIONS:
            raise InvalidInput(f"ratchet_direction must be one of {RATCHET_DIRECTIONS}")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def bulk(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def a_modulus(self) -> float:
        """Slope of the yield residual in the plastic multiplier."""
        return 2.0 * self.mu + self.H_kin + 2.0 / 3.0 * self.H_iso

    def with_beta(self, beta: float) -> "MaterialParams":
        return MaterialParams(
            self.E, self.nu, self.sigma_p, self.H_iso, self.H_kin, beta, self.ratchet_direction
        )


@dataclass
class InternalState:
    """Internal variables of one or many quadrature points.

    Fields carry a common leading batch shape; tensors have a trailing
    axis of length 6.
    """

    eps_p: np.ndarray
    kappa: np.ndarray
    eps_r: np.ndarray
    lambda_cum: np.ndarray
    dissipation_cum: np.ndarray

    @classmethod
    def virgin(cls, shape=()) -> "InternalState":
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        return cls(
            eps_p=np.zeros(shape + (6,)),
            kappa=np.zeros(shape),
            eps_r=np.zeros(shape + (6,)),
            lambda_cum=np.zeros(shape),
            dissipation_cum=np.zeros(shape),
        )

    @property
    def shape(self):
        return self.kappa.shape

    def copy(self) -> "InternalState":
        return InternalState(
            self.eps_p.copy(),
            self.kappa.copy(),
            self.eps_r.copy(),
            self.lambda_cum.copy(),
            self.dissipation_cum.copy(),
        )

    def reshape(self, shape) -> "InternalState":
        shape = tuple(shape)
        return InternalState(
            self.eps_p.reshape(shape + (6,)),
            self.kappa.reshape(shape),
            self.eps_r.reshape(shape + (6,)),
            self.lambda_cum.reshape(shape),
            self.dissipation_cum.reshape(shape),
        )

    def point(self, index) -> "InternalState":
        """State of a single point (or sub-batch) as an independent copy."""
        return InternalState(
            np.array(self.eps_p[index]),
            np.array(self.kappa[index]),
            np.array(self.eps_r[index]),
            np.array(self.lambda_cum[index]),
            np.array(self.dissipation_cum[index]),
        )

    def to_arrays(self) -> dict:
        return {
            "eps_p": self.eps_p,
            "kappa": self.kappa,
            "eps_r": self.eps_r,
            "lambda_cum": self.lambda_cum,
            "dissipation_cum": self.dissipation_cum,
        }

    @classmethod
    def from_arrays(cls, data) -> "InternalState":
        return cls(**{k: np.array(data[k]) for k in ("eps_p", "kappa", "eps_r", "lambda_cum", "dissipation_cum")})


@dataclass
class ReturnMapData:
    """Converged local unknowns of the plastic points, kept for the tangent."""

    n: np.ndarray  # (m, 6) Mandel flow direction
    dlam: np.ndarray  # (m,)
    beta: np.ndarray  # (m,) effective ratcheting constant
    xtr: np.ndarray  # (m, 6) Mandel trial stress deviator
    z: np.ndarray  # (m, 6) Mandel unnormalized flow vector
    direction: str = "implicit"


@dataclass
class StressResult:
    sigma: np.ndarray
    new_state: InternalState
    d_tan: np.ndarray
    plastic_active: np.ndarray
    delta_lambda: np.ndarray
    data: Optional[ReturnMapData] = field(default=None, repr=False)


def elastic_moduli(p: MaterialParams) -> np.ndarray:
    """6x6 isotropic moduli acting on engineering strain vectors."""
    lam, mu = p.lame, p.mu
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[[0, 1, 2], [0, 1, 2]] = lam + 2.0 * mu
    d[[3, 4, 5], [3, 4, 5]] = mu
    return d


def _elastic_mandel(p: MaterialParams) -> np.ndarray:
    return 2.0 * p.mu * _I6 + p.lame * np.outer(_ONES, _ONES)


def elastic_stress(eps_e: np.ndarray, p: MaterialParams) -> np.ndarray:
    eps_e = np.asarray(eps_e, dtype=float)
    return p.lame * T.trace(eps_e)[..., None] * T.IDENTITY + 2.0 * p.mu * eps_e


def yield_function(sigma: np.ndarray, state: InternalState, p: MaterialParams) -> np.ndarray:
    xi = T.deviator(sigma) - p.H_kin * state.eps_p
    return T.frobenius_norm(xi) - T.SQRT23 * (p.sigma_p + p.H_iso * state.kappa)


def hardening_energy(state: InternalState, p: MaterialParams) -> np.ndarray:
    return 0.5 * p.H_kin * T.contract(state.eps_p, state.eps_p) + 0.5 * p.H_iso * state.kappa ** 2


def elastic_energy(eps: np.ndarray, state: InternalState, p: MaterialParams) -> np.ndarray:
    eps_e = np.asarray(eps) - state.eps_p - state.eps_r
    return 0.5 * T.contract(elastic_stress(eps_e, p), eps_e)


def dissipation_increment(
    state_old: InternalState, state_new: InternalState, sigma: np.ndarray, p: MaterialParams
) -> np.ndarray:
    """sigma_{n+1} : (d eps_p + d eps_r) minus the hardening energy increment."""
    d_inelastic = (state_new.eps_p - state_old.eps_p) + (state_new.eps_r - state_old.eps_r)
    work = T.contract(sigma, d_inelastic)
    return work - (hardening_energy(state_new, p) - hardening_energy(state_old, p))


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def _flow_terms(n, dlam, beta, xtr, xi_tr, two_mu, direction):
    """Flow vector Z and its derivatives w.r.t. n and dlam."""
    if direction == "trial":
        xh = xtr / _norm(xtr)[:, None]
        z = xi_tr - (two_mu * beta * dlam)[:, None] * xh
        dz_dn = np.zeros(n.shape + (6,))
        dz_ddl = -(two_mu * beta)[:, None] * xh
        return z, dz_dn, dz_ddl
    y = xtr - (two_mu * dlam)[:, None] * n
    ny = _norm(y)
    ny_safe = np.where(ny > 0, ny, 1.0)
    yh = y / ny_safe[:, None]
    p_y = _I6 - yh[:, :, None] * yh[:, None, :]
    z = xi_tr - (two_mu * beta * dlam)[:, None] * yh
    dz_dn = (two_mu ** 2 * beta * dlam ** 2 / ny_safe)[:, None, None] * p_y
    dz_ddl = -(two_mu * beta)[:, None] * yh + (two_mu ** 2 * beta * dlam / ny_safe)[:, None] * np.einsum(
        "mij,mj->mi", p_y, n
    )
    return z, dz_dn, dz_ddl


def _solve_local(xtr, xi_tr, r0, beta, p: MaterialParams, direction: str):
    """Newton on r1 = n - Z/|Z|, r2 = |Z| - a dlam - R0 for a batch of points."""
    two_mu = 2.0 * p.mu
    a = p.a_modulus
    nxi = _norm(xi_tr)
    n = xi_tr / nxi[:, None]
    dlam = (nxi - r0) / a

    closed = beta == 0.0
    if np.all(closed):
        return n, dlam, xi_tr.copy()

    tol = config.LOCAL_TOL * p.sigma_p
    for it in range(config.MAX_LOCAL_ITERS + 1):
        z, dz_dn, dz_ddl = _flow_terms(n, dlam, beta, xtr, xi_tr, two_mu, direction)
        nz = _norm(z)
        zh = z / nz[:, None]
        r1 = n - zh
        r2 = nz - a * dlam - r0
        res = np.maximum(np.abs(r2) / p.sigma_p, _norm(r1))
        if np.all((np.abs(r2) <= tol) & (_norm(r1) <= config.LOCAL_TOL)):
            logger.debug(f"local Newton converged in {it} iterations for {len(dlam)} points")
            return n, dlam, z
        if it == config.MAX_LOCAL_ITERS:
            raise LocalConvergenceError(float(res.max()), it)

        m = len(dlam)
        pz = (_I6 - zh[:, :, None] * zh[:, None, :]) / nz[:, None, None]
        jac = np.zeros((m, 7, 7))
        jac[:, :6, :6] = _I6 - pz @ dz_dn
        jac[:, :6, 6] = -np.einsum("mij,mj->mi", pz, dz_ddl)
        jac[:, 6, :6] = np.einsum("mi,mij->mj", zh, dz_dn)
        jac[:, 6, 6] = np.sum(zh * dz_ddl, axis=1) - a
        rhs = -np.concatenate([r1, r2[:, None]], axis=1)
        delta = np.linalg.solve(jac, rhs[..., None])[..., 0]
        n = T.deviator(n + delta[:, :6])
        trial = dlam + delta[:, 6]
        dlam = np.where(trial > 0.0, trial, 0.5 * dlam)
    raise LocalConvergenceError(float("nan"), config.MAX_LOCAL_ITERS)


def return_map(
    eps_new: np.ndarray,
    state_old: InternalState,
    p: MaterialParams,
    compute_tangent: bool = True,
) -> StressResult:
    """Backward-Euler stress update for one point (shape (6,)) or a batch (..., 6)."""
    eps_new = np.asarray(eps_new, dtype=float)
    if not np.all(np.isfinite(eps_new)):
        raise InvalidInput("strain contains NaN or infinite entries")
    batch_shape = eps_new.shape[:-1]
    eps = eps_new.reshape(-1, 6)
    old = state_old.reshape((-1,))
    npts = eps.shape[0]

    sigma = elastic_stress(eps - old.eps_p - old.eps_r, p)
    xtr = T.to_mandel(T.deviator(sigma))
    xi_tr = xtr - p.H_kin * T.to_mandel(old.eps_p)
    r0 = T.SQRT23 * (p.sigma_p + p.H_iso * old.kappa)
    f_tr = _norm(xi_tr) - r0
    plastic = f_tr > config.LOCAL_TOL * p.sigma_p

    new = old.copy()
    dlam_all = np.zeros(npts)
    d_tan = np.broadcast_to(elastic_moduli(p), (npts, 6, 6)).copy()
    data = None

    idx = np.flatnonzero(plastic)
    if idx.size:
        direction = p.ratchet_direction
        two_mu = 2.0 * p.mu
        x_p, xi_p, r0_p = xtr[idx], xi_tr[idx], r0[idx]
        beta = np.full(idx.size, p.beta)
        if direction == "trial":
            beta[_norm(x_p) <= 1e-14 * p.sigma_p] = 0.0
        n, dlam, z = _solve_local(x_p, xi_p, r0_p, beta, p, direction)

        if direction == "trial":
            nx = _norm(x_p)
            rhat = x_p / np.where(nx > 0, nx, 1.0)[:, None]
        else:
            y = x_p - (two_mu * dlam)[:, None] * n
            ny = _norm(y)
            degenerate = (beta > 0) & (ny - two_mu * beta * dlam <= 1e-14 * p.sigma_p)
            if np.any(degenerate):
                logger.debug(f"zero stress deviator at {int(degenerate.sum())} points, ratcheting suppressed")
                beta[degenerate] = 0.0
                sub = np.flatnonzero(degenerate)
                n_s, dl_s, z_s = _solve_local(x_p[sub], xi_p[sub], r0_p[sub], beta[sub], p, direction)
                n[sub], dlam[sub], z[sub] = n_s, dl_s, z_s
                y = x_p - (two_mu * dlam)[:, None] * n
                ny = _norm(y)
            rhat = y / np.where(ny > 0, ny, 1.0)[:, None]

        d_eps_p = T.from_mandel(dlam[:, None] * n)
        d_eps_r = T.from_mandel((beta * dlam)[:, None] * rhat)
        new.eps_p[idx] = old.eps_p[idx] + d_eps_p
        new.eps_r[idx] = old.eps_r[idx] + d_eps_r
        new.kappa[idx] = old.kappa[idx] + T.SQRT23 * dlam
        new.lambda_cum[idx] = old.lambda_cum[idx] + dlam
        sigma[idx] = sigma[idx] - two_mu * (d_eps_p + d_eps_r)
        dlam_all[idx] = dlam

        data = ReturnMapData(n=n, dlam=dlam, beta=beta, xtr=x_p, z=z, direction=direction)
        if compute_tangent:
            d_tan[idx] = consistent_tangent(data, p)

        dd = dissipation_increment(old.point(idx), new.point(idx), sigma[idx], p)
        new.dissipation_cum[idx] = old.dissipation_cum[idx] + dd

    return StressResult(
        sigma=sigma.reshape(batch_shape + (6,)),
        new_state=new.reshape(batch_shape),
        d_tan=d_tan.reshape(batch_shape + (6, 6)),
        plastic_active=plastic.reshape(batch_shape),
        delta_lambda=dlam_all.reshape(batch_shape),
        data=data,
    )


def consistent_tangent(data: ReturnMapData, p: MaterialParams) -> np.ndarray:
    """Algorithmic moduli d sigma / d eps of converged plastic points.

    Returns (m, 6, 6) moduli acting on engineering strain vectors.
    """
    two_mu = 2.0 * p.mu
    a = p.a_modulus
    n, dlam, beta, xtr = data.n, data.dlam, data.beta, data.xtr
    m = len(dlam)
    de_dev = two_mu * _P_DEV

    if data.direction == "trial":
        nx = _norm(xtr)
        nx_safe = np.where(nx > 0, nx, 1.0)
        rhat = xtr / nx_safe[:, None]
        p_r = (_I6 - rhat[:, :, None] * rhat[:, None, :]) / nx_safe[:, None, None]
        dz_dn = np.zeros((m, 6, 6))
        dz_ddl = -(two_mu * beta)[:, None] * rhat
    else:
        y = xtr - (two_mu * dlam)[:, None] * n
        ny = _norm(y)
        ny_safe = np.where(ny > 0, ny, 1.0)
        rhat = y / ny_safe[:, None]
        p_r = (_I6 - rhat[:, :, None] * rhat[:, None, :]) / ny_safe[:, None, None]
        dz_dn = (two_mu ** 2 * beta * dlam ** 2)[:, None, None] * p_r
        dz_ddl = -(two_mu * beta)[:, None] * rhat + (two_mu ** 2 * beta * dlam)[:, None] * np.einsum(
            "mij,mj->mi", p_r, n
        )
    dz_de = de_dev - (two_mu * beta * dlam)[:, None, None] * (p_r @ de_dev)

    z = data.z
    nz = _norm(z)
    zh = z / nz[:, None]
    pz = (_I6 - zh[:, :, None] * zh[:, None, :]) / nz[:, None, None]

    jac = np.zeros((m, 7, 7))
    jac[:, :6, :6] = _I6 - pz @ dz_dn
    jac[:, :6, 6] = -np.einsum("mij,mj->mi", pz, dz_ddl)
    jac[:, 6, :6] = np.einsum("mi,mij->mj", zh, dz_dn)
    jac[:, 6, 6] = np.sum(zh * dz_ddl, axis=1) - a
    dr_de = np.zeros((m, 7, 6))
    dr_de[:, :6, :] = -(pz @ dz_de)
    dr_de[:, 6, :] = np.einsum("mi,mij->mj", zh, dz_de)

    dy = -np.linalg.solve(jac, dr_de)
    dn = dy[:, :6, :]
    ddl = dy[:, 6, :]

    if data.direction == "trial":
        drhat = p_r @ de_dev
    else:
        dy_de = de_dev - two_mu * (n[:, :, None] * ddl[:, None, :] + dlam[:, None, None] * dn)
        drhat = p_r @ dy_de

    flow = n + beta[:, None] * rhat
    c_mandel = _elastic_mandel(p) - two_mu * (
        flow[:, :, None] * ddl[:, None, :]
        + dlam[:, None, None] * dn
        + (beta * dlam)[:, None, None] * drhat
    )
    return T.mandel_to_voigt_moduli(c_mandel)


# ---------------------------------------------------------------------------
# Scalar specialization for Winkler springs
# ---------------------------------------------------------------------------


@dataclass
class SpringParams:
    """Per-spring constants; every field has shape (n_springs,)."""

    E: np.ndarray
    sigma_p: np.ndarray
    H_iso: np.ndarray
    H_kin: np.ndarray
    beta: np.ndarray

    @classmethod
    def from_materials(cls, materials: Iterable[MaterialParams]) -> "SpringParams":
        mats = list(materials)
        return cls(
            E=np.array([m.E for m in mats], dtype=float),
            sigma_p=np.array([m.sigma_p for m in mats], dtype=float),
            H_iso=np.array([m.H_iso for m in mats], dtype=float),
            H_kin=np.array([m.H_kin for m in mats], dtype=float),
            beta=np.array([m.beta for m in mats], dtype=float),
        )

    def scaled(self, factor: np.ndarray) -> "SpringParams":
        """Multiply every modulus and strength by a per-spring factor."""
        return SpringParams(
            self.E * factor, self.sigma_p * factor, self.H_iso * factor, self.H_kin * factor, self.beta.copy()
        )


@dataclass
class SpringState:
    eps_p: np.ndarray
    kappa: np.ndarray
    eps_r: np.ndarray
    lambda_cum: np.ndarray
    dissipation_cum: np.ndarray

    @classmethod
    def virgin(cls, n: int) -> "SpringState":
        return cls(*(np.zeros(n) for _ in range(5)))

    def copy(self) -> "SpringState":
        return SpringState(
            self.eps_p.copy(), self.kappa.copy(), self.eps_r.copy(), self.lambda_cum.copy(), self.dissipation_cum.copy()
        )

    def to_arrays(self) -> dict:
        return {
            "eps_p": self.eps_p,
            "kappa": self.kappa,
            "eps_r": self.eps_r,
            "lambda_cum": self.lambda_cum,
            "dissipation_cum": self.dissipation_cum,
        }


@dataclass
class SpringResult:
    sigma: np.ndarray
    new_state: SpringState
    tangent: np.ndarray
    plastic_active: np.ndarray
    delta_lambda: np.ndarray


def spring_hardening_energy(state: SpringState, p: SpringParams) -> np.ndarray:
    return 0.5 * p.H_kin * state.eps_p ** 2 + 0.5 * p.H_iso * state.kappa ** 2


def spring_return_map(eps_new: np.ndarray, state_old: SpringState, p: SpringParams) -> SpringResult:
    """Closed-form return map of f = |sigma - H_kin eps_p| - (sigma_p + H_iso kappa)."""
    eps = np.asarray(eps_new, dtype=float)
    if not np.all(np.isfinite(eps)):
        raise InvalidInput("spring strain contains NaN or infinite entries")
    sig_tr = p.E * (eps - state_old.eps_p - state_old.eps_r)
    xi_tr = sig_tr - p.H_kin * state_old.eps_p
    f_tr = np.abs(xi_tr) - (p.sigma_p + p.H_iso * state_old.kappa)
    plastic = f_tr > config.LOCAL_TOL * p.sigma_p

    sigma = sig_tr.copy()
    tangent = p.E.copy()
    dlam = np.zeros_like(eps)
    new = state_old.copy()
    if np.any(plastic):
        i = np.flatnonzero(plastic)
        E, Hk, Hi, b = p.E[i], p.H_kin[i], p.H_iso[i], p.beta[i]
        n = np.sign(xi_tr[i])
        base = E + Hk + Hi
        r = np.where(sig_tr[i] != 0.0, np.sign(sig_tr[i]), n)

        def attempt(r_try):
            denom = base + E * b * n * r_try
            dl = f_tr[i] / denom
            s = sig_tr[i] - E * dl * (n + b * r_try)
            return dl, s, denom

        dl, s, denom = attempt(r)
        bad = np.sign(s) != r
        if np.any(bad):
            r_alt = np.where(bad, -r, r)
            dl2, s2, denom2 = attempt(r_alt)
            ok2 = bad & (np.sign(s2) == r_alt)
            r = np.where(ok2, r_alt, r)
            dl, s, denom = np.where(ok2, dl2, dl), np.where(ok2, s2, s), np.where(ok2, denom2, denom)
            still = bad & ~ok2
            if np.any(still):
                r = np.where(still, 0.0, r)
                dl0, s0, denom0 = attempt(r)
                dl, s, denom = np.where(still, dl0, dl), np.where(still, s0, s), np.where(still, denom0, denom)

        sigma[i] = s
        dlam[i] = dl
        tangent[i] = E - E ** 2 * (1.0 + b * n * r) / denom
        new.eps_p[i] = state_old.eps_p[i] + dl * n
        new.eps_r[i] = state_old.eps_r[i] + b * dl * r
        new.kappa[i] = state_old.kappa[i] + dl
        new.lambda_cum[i] = state_old.lambda_cum[i] + dl

    dd = spring_dissipation_increment(state_old, new, sigma, p)
    new.dissipation_cum = state_old.dissipation_cum + np.where(plastic, dd, 0.0)
    return SpringResult(sigma=sigma, new_state=new, tangent=tangent, plastic_active=plastic, delta_lambda=dlam)


def spring_dissipation_increment(
    state_old: SpringState, state_new: SpringState, sigma: np.ndarray, p: SpringParams
) -> np.ndarray:
    work = sigma * ((state_new.eps_p - state_old.eps_p) + (state_new.eps_r - state_old.eps_r))
    return work - (spring_hardening_energy(state_new, p) - spring_hardening_energy(state_old, p))
