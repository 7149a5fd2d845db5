"""Penalty-splitting registration driver.

Alternates (a) a linear Euler-Lagrange solve for the smoothed auxiliary
coefficient nu given the current map's Beltrami coefficient, (b) an energy-
guarded map reconstruction from nu, (c) a backtracked gradient step on mu
combining intensity, fidelity, and coupling descent directions converted to
Beltrami increments, and (d) reconstruction of the updated map. A second phase
refines intensities with smoothed demon forces. Both phases keep their
monitored energies non-increasing by construction and keep every recorded
nu strictly inside the unit disk.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .beltrami import QCMap, compute_mu, identity_map, interpolate_map, truncate_mu
from .errors import (
    DegeneratePerturbationError,
    FieldShapeError,
    InvalidDimensionError,
    SolverFailureError,
)
from .features import build_correlation, extract_features, partition_patches
from .fidelity import (
    correspondence_matrix,
    fidelity_descent,
    fidelity_energy,
    gaussian_smooth_field,
    make_correspondence_state,
    rasterize_descent,
)
from .intensity import intensity_descent, warp_image
from .lbs import solve_lbs
from .mesh import (
    build_grid_mesh,
    cotangent_laplacian,
    face_to_vertex,
    signed_areas,
    vertex_to_face,
)
from .metrics import e_sim

_PERTURB_TOL = 1e-9
_MONO_SLACK = 1e-9


def _n_flipped(mesh, positions):
    return int(np.count_nonzero(signed_areas(mesh, positions) <= 0.0))


def _defold(nu, mesh, max_rounds=8):
    """Reconstruct from nu, locally damping it until no face is folded.

    The solve follows smooth coefficient fields faithfully, but a saturated
    or rough patch can fold a handful of faces. Halving nu on those faces
    and their one-ring neighborhood, then re-solving, removes the folds
    while keeping the motion elsewhere. Returns (map, nu_used, n_flipped);
    n_flipped > 0 means the repair did not converge within max_rounds.
    """
    f = solve_lbs(nu, mesh)
    for _ in range(max_rounds):
        bad = signed_areas(mesh, f.positions) <= 0.0
        if not bad.any():
            return f, nu, 0
        vmask = np.zeros(mesh.n_vertices, dtype=bool)
        vmask[mesh.faces[bad].ravel()] = True
        grow = vmask[mesh.faces].any(axis=1)
        nu = np.where(grow, 0.5 * nu, nu)
        f = solve_lbs(nu, mesh)
    return f, nu, _n_flipped(mesh, f.positions)


def _cap_faces(dmu, cap):
    """Scale down per-face increments whose modulus exceeds `cap`.

    Increments are quotients by the map derivative and blow up on nearly
    degenerate faces; uncapped they saturate the truncation bound with
    grid-scale oscillation that the reconstruction cannot follow.
    """
    mag = np.abs(dmu)
    scale = np.minimum(1.0, cap / np.maximum(mag, 1e-300))
    return dmu * scale


@dataclass
class RegistrationConfig:
    """Knobs of the registration energy and its minimization."""

    alpha: float = 5.0
    rho: float = 50.0
    beta: Optional[float] = None    # default 25 * rho
    gamma: Optional[float] = None   # default 5 * rho
    sigma: float = 1.0              # correspondence width, patch-spacing units
    patches_per_side: int = 10
    sparsify_k: int = 20
    base_step: float = 0.1
    t1: Optional[float] = None      # intensity step, default base_step * beta / rho
    t2: Optional[float] = None      # fidelity step, default base_step * gamma / rho
    t3: Optional[float] = None      # coupling step, default base_step
    epsilon: float = 1e-3
    n_max: int = 100
    max_backtracks: int = 8
    truncation_bound: float = 0.95
    levels: int = 3
    descriptor: str = "hog"
    demon_alpha: float = 1.0
    demons_steps: int = 3
    refine_step: float = 0.5
    max_face_step: float = 1.0      # per-face cap on Beltrami increments

    def __post_init__(self):
        if self.beta is None:
            self.beta = 25.0 * self.rho
        if self.gamma is None:
            self.gamma = 5.0 * self.rho
        for name in ("alpha", "rho", "sigma", "base_step", "epsilon",
                     "demon_alpha", "refine_step", "max_face_step"):
            if getattr(self, name) <= 0:
                raise InvalidDimensionError(f"{name} must be positive")
        for name in ("beta", "gamma"):
            if getattr(self, name) < 0:
                raise InvalidDimensionError(f"{name} must be >= 0")
        if self.n_max < 1 or self.demons_steps < 1 or self.max_backtracks < 0:
            raise InvalidDimensionError("iteration counts must be >= 1")
        if not 0.0 < self.truncation_bound < 1.0:
            raise InvalidDimensionError("truncation bound must lie in (0, 1)")
        if self.patches_per_side < 2 or self.sparsify_k < 1:
            raise InvalidDimensionError("patch/sparsify parameters out of range")
        if self.levels < 0:
            raise InvalidDimensionError("levels must be >= 0")

    def steps(self):
        t1 = self.t1 if self.t1 is not None else self.base_step * self.beta / self.rho
        t2 = self.t2 if self.t2 is not None else self.base_step * self.gamma / self.rho
        t3 = self.t3 if self.t3 is not None else self.base_step
        return t1, t2, t3


@dataclass
class TraceRow:
    """One energy record; splitting rows carry the five energy terms
    (coupling/intensity/fidelity including their rho/beta/gamma weights),
    refinement rows carry e_sim."""

    phase: str
    level: int
    iteration: int
    grad_nu_sq: Optional[float] = None
    nu_sq: Optional[float] = None
    coupling: Optional[float] = None
    intensity: Optional[float] = None
    fidelity: Optional[float] = None
    total: Optional[float] = None
    e_sim: Optional[float] = None
    nu_sup: Optional[float] = None

    def to_record(self):
        rec = {"phase": self.phase, "level": self.level, "iteration": self.iteration}
        for key in ("grad_nu_sq", "nu_sq", "coupling", "intensity", "fidelity",
                    "total", "e_sim", "nu_sup"):
            value = getattr(self, key)
            if value is not None:
                rec[key] = value
        return rec


def write_trace(path, rows):
    """Serialize trace rows as line-delimited JSON records."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_record()) + "\n")


@dataclass(eq=False)
class RegistrationState:
    """Mutable snapshot of a registration run."""

    mesh: object
    moving: np.ndarray
    map: QCMap
    mu: np.ndarray        # per-face Beltrami coefficient of `map`
    nu: np.ndarray        # per-face auxiliary coefficient
    iteration: int
    trace: list = field(default_factory=list)
    level: int = 0


def solve_el(mu_vertex, laplacian, alpha, rho):
    """Solve (-Delta + 2 alpha I + 2 rho I) nu = 2 rho mu at the vertices.

    `laplacian` is the negated cotangent operator (SparseSPDSystem); the
    right-hand side is complex and the two parts share one factorization.
    """
    mu_vertex = np.asarray(mu_vertex, dtype=np.complex128)
    L = laplacian.matrix
    if mu_vertex.shape != (L.shape[0],):
        raise FieldShapeError(f"mu shape {mu_vertex.shape} != ({L.shape[0]},)")
    system = (L + (2.0 * alpha + 2.0 * rho) * sp.identity(L.shape[0], format="csr")).tocsc()
    rhs = 2.0 * rho * mu_vertex
    lu = spla.splu(system)
    nu = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    if not np.all(np.isfinite(nu)):
        raise SolverFailureError("non-finite EL solution")
    return nu


def descent_to_dmu(df, qcmap, mu, mesh):
    """Convert a per-vertex map perturbation into a per-face Beltrami increment.

    dmu = (d(df)/dzbar - mu d(df)/dz) / (d(f + df)/dz), exact per face for
    piecewise-linear fields.
    """
    df = np.asarray(df, dtype=np.float64)
    if df.shape != (mesh.n_vertices, 2):
        raise FieldShapeError(f"perturbation shape {df.shape} != ({mesh.n_vertices}, 2)")
    zf = qcmap.positions[:, 0] + 1j * qcmap.positions[:, 1]
    zd = df[:, 0] + 1j * df[:, 1]
    fx, fy = mesh.grad_x @ zf, mesh.grad_y @ zf
    dx, dy = mesh.grad_x @ zd, mesh.grad_y @ zd
    fz = 0.5 * (fx - 1j * fy)
    dfz = 0.5 * (dx - 1j * dy)
    dfzbar = 0.5 * (dx + 1j * dy)
    den = fz + dfz
    bad = np.abs(den) < _PERTURB_TOL
    if np.any(bad):
        raise DegeneratePerturbationError(int(np.argmax(bad)))
    return (dfzbar - np.asarray(mu) * dfz) / den


def update_mu(mu, nu_face, dmu_I, dmu_W, t1, t2, t3, bound=0.95):
    """One combined gradient step on mu, truncated to the bound.

    The coupling direction 2 (nu - mu) is computed internally; it decreases
    the coupling term when added with a positive step.
    """
    mu = np.asarray(mu, dtype=np.complex128)
    dmu_D = 2.0 * (np.asarray(nu_face) - mu)
    return truncate_mu(mu + t1 * np.asarray(dmu_I) + t2 * np.asarray(dmu_W) + t3 * dmu_D, bound)


class _Energy:
    """Discrete splitting-energy evaluator shared by guard and backtracking.

    total = 0.5 * nu' L nu + alpha ||nu||^2 + rho ||nu - mu(f)||^2 (at vertices)
            + beta sum (I_M - I_S(f))^2 + gamma sum C^2 (D - 1)^2;
    the EL solve is the exact minimizer of the nu-terms, so the nu-step can
    never increase the total.
    """

    def __init__(self, mesh, L, moving, static, C, moving_centers, static_centers,
                 sigma_px, config):
        self.mesh = mesh
        self.L = L
        self.moving = moving
        self.static = static
        self.C2 = None if C is None else _cvalues(C) ** 2
        self.moving_centers = moving_centers
        self.static_centers = static_centers
        self.sigma_px = sigma_px
        self.cfg = config

    def terms(self, nu_vertex, qcmap, mu_face):
        cfg = self.cfg
        re, im = nu_vertex.real, nu_vertex.imag
        grad = float(re @ (self.L @ re) + im @ (self.L @ im))
        nusq = float(np.sum(np.abs(nu_vertex) ** 2))
        mu_v = face_to_vertex(self.mesh, mu_face)
        coupling = cfg.rho * float(np.sum(np.abs(nu_vertex - mu_v) ** 2))
        resid = self.moving - warp_image(qcmap, self.static)
        intensity = cfg.beta * float(np.sum(resid * resid))
        if self.C2 is None:
            fid = 0.0
        else:
            state = make_correspondence_state(
                qcmap, self.moving_centers, self.static_centers, self.sigma_px
            )
            D = correspondence_matrix(state)
            fid = cfg.gamma * float(np.sum(self.C2 * (D - 1.0) ** 2))
        total = 0.5 * grad + cfg.alpha * nusq + coupling + intensity + fid
        return {
            "grad_nu_sq": grad,
            "nu_sq": nusq,
            "coupling": coupling,
            "intensity": intensity,
            "fidelity": fid,
            "total": total,
        }


def _cvalues(C):
    return C.values if hasattr(C, "values") else np.asarray(C, dtype=np.float64)


def _smooth_vertex_field(field, mesh):
    side = max(mesh.height, mesh.width)
    grid = field.reshape(mesh.height + 1, mesh.width + 1, 2)
    return gaussian_smooth_field(grid, side).reshape(-1, 2)


def register(moving, static, C, config=None, init_map=None, level=0):
    """Splitting-phase registration of `moving` onto `static` guided by C.

    Returns a RegistrationState whose map fixes the rectangle boundary, whose
    energy trace is non-increasing, and whose nu stays strictly inside the
    unit disk. `init_map` (default identity) lets resolution levels chain.
    """
    config = config or RegistrationConfig()
    moving = np.asarray(moving, dtype=np.float64)
    static = np.asarray(static, dtype=np.float64)
    if moving.shape != static.shape or moving.ndim != 2:
        raise FieldShapeError(f"image shapes {moving.shape} vs {static.shape}")
    h, w = moving.shape
    mesh = build_grid_mesh(h, w)
    L = cotangent_laplacian(mesh).matrix
    el_lu = spla.splu(
        (L + (2.0 * config.alpha + 2.0 * config.rho)
         * sp.identity(L.shape[0], format="csr")).tocsc()
    )

    grid_m = partition_patches(moving, config.patches_per_side)
    grid_s = partition_patches(static, config.patches_per_side)
    sigma_px = config.sigma * grid_m.spacing
    energy = _Energy(mesh, L, moving, static, C, grid_m.centers, grid_s.centers,
                     sigma_px, config)

    bound = config.truncation_bound
    f = init_map.copy() if init_map is not None else identity_map(mesh)
    mu = compute_mu(f)
    nu_f = truncate_mu(mu.copy(), bound)
    nu_v = face_to_vertex(mesh, nu_f)
    t1, t2, t3 = config.steps()

    state = RegistrationState(mesh=mesh, moving=moving, map=f, mu=mu, nu=nu_f,
                              iteration=0, level=level)
    e0 = energy.terms(nu_v, f, mu)
    state.trace.append(TraceRow(phase="split", level=level, iteration=0,
                                nu_sup=float(np.max(np.abs(nu_f))), **e0))

    def solve_nu(mu_vertex):
        rhs = 2.0 * config.rho * mu_vertex
        return el_lu.solve(rhs.real) + 1j * el_lu.solve(rhs.imag)

    flips_cur = _n_flipped(mesh, f.positions)
    for n in range(1, config.n_max + 1):
        nu_v = solve_nu(face_to_vertex(mesh, mu))
        nu_new = truncate_mu(vertex_to_face(mesh, nu_v), bound)
        e_cur = energy.terms(nu_v, f, mu)

        # map reconstruction from nu, kept only if it neither raises the
        # energy nor folds more faces than the current map
        f_nu, _, flips_nu = _defold(nu_new, mesh)
        mu_nu = compute_mu(f_nu)
        e_recon = energy.terms(nu_v, f_nu, mu_nu)
        if (e_recon["total"] <= e_cur["total"] + _MONO_SLACK * max(1.0, abs(e_cur["total"]))
                and flips_nu <= flips_cur):
            f, mu, e_cur, flips_cur = f_nu, mu_nu, e_recon, flips_nu

        # combined data/coupling gradient step on mu, backtracked on the energy
        df_i = _smooth_vertex_field(intensity_descent(moving, static, f), mesh)
        corr = make_correspondence_state(f, grid_m.centers, grid_s.centers, sigma_px)
        df_w = _smooth_vertex_field(
            rasterize_descent(fidelity_descent(C, corr), grid_m, mesh), mesh
        )
        try:
            dmu_i = descent_to_dmu(df_i, f, mu, mesh)
            dmu_w = descent_to_dmu(df_w, f, mu, mesh)
        except DegeneratePerturbationError:
            dmu_i = dmu_w = np.zeros(mesh.n_faces, dtype=np.complex128)
        direction = _cap_faces(t1 * dmu_i + t2 * dmu_w + t3 * 2.0 * (nu_new - mu),
                               config.max_face_step)
        if np.max(np.abs(direction)) > 1e-15:
            scale = 1.0
            slack = _MONO_SLACK * max(1.0, abs(e_cur["total"]))
            for _ in range(config.max_backtracks + 1):
                mu_trial = truncate_mu(mu + scale * direction, bound)
                f_trial, _, flips_trial = _defold(mu_trial, mesh)
                mu_rec = compute_mu(f_trial)
                e_trial = energy.terms(nu_v, f_trial, mu_rec)
                if (e_trial["total"] <= e_cur["total"] + slack
                        and flips_trial <= flips_cur):
                    f, mu, e_cur, flips_cur = f_trial, mu_rec, e_trial, flips_trial
                    break
                scale *= 0.5

        state.trace.append(TraceRow(phase="split", level=level, iteration=n,
                                    nu_sup=float(np.max(np.abs(nu_new))), **e_cur))
        state.map, state.mu, state.iteration = f, mu, n
        shift = float(np.max(np.abs(nu_new - state.nu)))
        state.nu = nu_new
        if shift <= config.epsilon:
            break
    return state


def refine_intensity(state, static, config=None):
    """Demons refinement phase: smoothed intensity forces as nu updates.

    Each outer iteration accumulates `demons_steps` smoothed demon sub-steps
    on provisional positions, converts the displacement to a Beltrami
    increment, and backtracks the step on e_sim. Stops when nu stalls, the
    step cannot decrease e_sim, or n_max is reached.
    """
    from .intensity import _to_vertex_grid, demon_force, sample_image

    config = config or RegistrationConfig()
    static = np.asarray(static, dtype=np.float64)
    mesh = state.mesh
    moving = state.moving
    bound = config.truncation_bound
    side = max(mesh.height, mesh.width)

    f = state.map
    nu_f = truncate_mu(compute_mu(f), bound)
    e_prev = e_sim(moving, static, f)
    state.trace.append(TraceRow(phase="refine", level=state.level, iteration=0,
                                e_sim=e_prev, nu_sup=float(np.max(np.abs(nu_f)))))
    im_v = _to_vertex_grid(moving, mesh)

    flips_cur = _n_flipped(mesh, f.positions)
    for n in range(1, config.n_max + 1):
        provisional = f.positions.copy()
        for _ in range(config.demons_steps):
            warped_v = sample_image(static, provisional).reshape(
                mesh.height + 1, mesh.width + 1
            )
            force = demon_force(im_v, warped_v, config.demon_alpha)
            provisional += gaussian_smooth_field(force, side).reshape(-1, 2)
        df = provisional - f.positions
        try:
            dnu = _cap_faces(descent_to_dmu(df, f, compute_mu(f), mesh),
                             config.max_face_step)
        except DegeneratePerturbationError:
            break

        accepted = False
        t = config.refine_step
        for _ in range(config.max_backtracks + 1):
            nu_trial = truncate_mu(nu_f + t * dnu, bound)
            f_trial, nu_trial, flips_trial = _defold(nu_trial, mesh)
            e_trial = e_sim(moving, static, f_trial)
            if e_trial <= e_prev + _MONO_SLACK and flips_trial <= flips_cur:
                accepted = True
                flips_cur = flips_trial
                break
            t *= 0.5
        if not accepted:
            break

        shift = float(np.max(np.abs(nu_trial - nu_f)))
        f, nu_f, e_prev = f_trial, nu_trial, e_trial
        state.trace.append(TraceRow(phase="refine", level=state.level, iteration=n,
                                    e_sim=e_prev, nu_sup=float(np.max(np.abs(nu_f)))))
        if shift <= config.epsilon:
            break

    state.map = f
    state.mu = compute_mu(f)
    state.nu = nu_f
    return state


def _downsample(image):
    h, w = image.shape
    return image.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample_map(qcmap):
    """Double a map's resolution: bilinear sample vertex positions, scale 2x."""
    mesh = qcmap.mesh
    fine = build_grid_mesh(2 * mesh.height, 2 * mesh.width)
    pts = fine.vertices * 0.5
    return QCMap(mesh=fine, positions=2.0 * interpolate_map(qcmap, pts))


def effective_levels(height, width, config):
    """Largest feasible level count <= config.levels for this image size."""
    k = config.levels
    p = config.patches_per_side
    while k > 0:
        div = 2**k
        if height % div == 0 and width % div == 0 and min(height, width) // div >= max(2, p):
            break
        k -= 1
    return k


def register_multires(moving, static, config=None, feature_banks=None):
    """Full pipeline: coarse-to-fine splitting + refinement at every level.

    The correlation matrix is built once from finest-level descriptors (or the
    supplied feature banks) and reused across levels. Returns the final state;
    its trace concatenates all levels' rows (level index = coarsening steps).
    """
    config = config or RegistrationConfig()
    moving = np.asarray(moving, dtype=np.float64)
    static = np.asarray(static, dtype=np.float64)
    if moving.shape != static.shape or moving.ndim != 2:
        raise FieldShapeError(f"image shapes {moving.shape} vs {static.shape}")

    if feature_banks is None:
        grid_m = partition_patches(moving, config.patches_per_side)
        grid_s = partition_patches(static, config.patches_per_side)
        bank_m = extract_features(moving, grid_m, config.descriptor)
        bank_s = extract_features(static, grid_s, config.descriptor)
    else:
        bank_m, bank_s = feature_banks
    C = build_correlation(bank_m, bank_s, min(config.sparsify_k, bank_m.m))

    levels = effective_levels(*moving.shape, config)
    pyramid = [(moving, static)]
    for _ in range(levels):
        pyramid.append((_downsample(pyramid[-1][0]), _downsample(pyramid[-1][1])))

    rows = []
    init = None
    state = None
    for lvl in range(levels, -1, -1):
        img_m, img_s = pyramid[lvl]
        state = register(img_m, img_s, C, config, init_map=init, level=lvl)
        state = refine_intensity(state, img_s, config)
        rows.extend(state.trace)
        if lvl > 0:
            init = _upsample_map(state.map)
    state.trace = rows
    return state
