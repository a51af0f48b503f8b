"""Geometric diagnostics for adapter maps.

Measures what each parameterization does to distances (distortion
probes), what decay on coordinates means in weight space, the Jacobian
structure and symmetries of the bilinear low-rank map, dev-loss surfaces
over random two-dimensional slices of coordinate space, and dev accuracy
as a function of the trainable dimension. Everything is seeded and
returns plain data; rendering is left to external tools.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import adapters, partition, trainer
from .errors import GPartError, NumericError, ValidationError

JACOBIAN_MAX_RANK = 4
JACOBIAN_MAX_SIDE = 16
GAUGE_CONDITION_LIMIT = 100.0
SYMMETRY_TOL = 1e-10
PROBE_KINDS = ("gpart_iso", "gpart_noniso", "lora", "unilora")


def random_directions(seed, theta_star):
    """Two seeded Gaussian directions, each rescaled to the reference norm.

    The reference is the norm of theta_star, or 1 when theta_star is zero
    (an untrained adapter gives no scale to normalize against).
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    target = float(np.linalg.norm(theta_star))
    if target == 0.0:
        target = 1.0
    rng = np.random.default_rng(seed)
    d1 = rng.normal(size=theta_star.shape[0])
    d2 = rng.normal(size=theta_star.shape[0])
    d1 *= target / np.linalg.norm(d1)
    d2 *= target / np.linalg.norm(d2)
    return d1, d2


@dataclass(frozen=True)
class LandscapeSpec:
    grid_size: int = 30
    alpha_range: tuple = (-0.5, 0.5)
    beta_range: tuple = (-0.5, 0.5)
    direction_seeds: tuple = (101, 202, 303)

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValidationError(f"grid size must be at least 2, got {self.grid_size}")
        for lo, hi in (self.alpha_range, self.beta_range):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValidationError(f"bad perturbation range ({lo}, {hi})")
        if not self.direction_seeds:
            raise ValidationError("need at least one direction seed")


@dataclass
class LandscapeGrid:
    spec: LandscapeSpec
    theta_star: np.ndarray
    base_loss: float
    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray  # (seeds, grid, grid)
    mean: np.ndarray
    flagged: np.ndarray


def grid_axis(count, lo, hi):
    """count evenly spaced points inside [lo, hi] anchored on the midpoint.

    Index count // 2 lands on (lo + hi) / 2 with no rounding, so a
    symmetric range always contains the unperturbed point, whatever the
    parity of count. The top endpoint is sacrificed when count is even."""
    mid = (lo + hi) / 2.0
    step = (hi - lo) / count
    return mid + (np.arange(count) - count // 2) * step


def loss_landscape(adapter, w0, config, task, spec=None, parallel=False):
    """Dev-loss grid at theta* + alpha d1 + beta d2, one sheet per seed.

    Cells where evaluation blows up are flagged and left as nan rather
    than aborting the grid. adapter state and w0 are not modified.
    """
    if spec is None:
        spec = LandscapeSpec()
    w0 = np.asarray(w0, dtype=np.float64)
    full = trainer.network_manifest(config)
    if w0.shape != (full.total,):
        raise ValidationError(f"w0 has shape {w0.shape}, network total is {full.total}")
    theta_star = np.array(adapter.theta, dtype=np.float64, copy=True)
    alphas = grid_axis(spec.grid_size, *spec.alpha_range)
    betas = grid_axis(spec.grid_size, *spec.beta_range)
    n_seeds = len(spec.direction_seeds)
    values = np.full((n_seeds, spec.grid_size, spec.grid_size), np.nan)
    flagged = np.zeros((n_seeds, spec.grid_size, spec.grid_size), dtype=bool)

    def dev_loss(theta):
        w = trainer.apply_delta(adapter, w0, full, theta)
        loss, _ = trainer.evaluate(config, w, task.x_dev, task.y_dev)
        return loss

    base_loss = dev_loss(theta_star)
    directions = [random_directions(s, theta_star) for s in spec.direction_seeds]

    def fill(cell):
        s, i, j = cell
        d1, d2 = directions[s]
        theta = theta_star + alphas[i] * d1 + betas[j] * d2
        try:
            values[s, i, j] = dev_loss(theta)
        except NumericError:
            flagged[s, i, j] = True

    cells = [(s, i, j)
             for s in range(n_seeds)
             for i in range(spec.grid_size)
             for j in range(spec.grid_size)]
    if parallel:
        with ThreadPoolExecutor() as pool:
            list(pool.map(fill, cells))
    else:
        for cell in cells:
            fill(cell)
    return LandscapeGrid(spec, theta_star, base_loss, alphas, betas, values,
                         values.mean(axis=0), flagged)


def landscape_csv(grid):
    """One row per cell per seed, then the seed-averaged block."""
    lines = ["seed,alpha,beta,loss"]
    for s, seed in enumerate(grid.spec.direction_seeds):
        for i, a in enumerate(grid.alphas):
            for j, b in enumerate(grid.betas):
                lines.append(f"{seed},{a:.10g},{b:.10g},{grid.values[s, i, j]:.10g}")
    for i, a in enumerate(grid.alphas):
        for j, b in enumerate(grid.betas):
            lines.append(f"mean,{a:.10g},{b:.10g},{grid.mean[i, j]:.10g}")
    return "\n".join(lines) + "\n"


def lora_jacobian_blocks(A, B):
    """Dense Jacobians of (A, B) -> vec(BA) under column-major vec.

    J_A = I_n kron B acts on vec(A); J_B = A^T kron I_m acts on vec(B).
    Guarded to small shapes; this exists as an oracle, not a training path.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    m, r = B.shape
    r2, n = A.shape
    if r != r2:
        raise ValidationError(f"factor shapes {B.shape} and {A.shape} do not chain")
    if r > JACOBIAN_MAX_RANK or m > JACOBIAN_MAX_SIDE or n > JACOBIAN_MAX_SIDE:
        raise ValidationError(
            f"dense Jacobians limited to rank {JACOBIAN_MAX_RANK} and side "
            f"{JACOBIAN_MAX_SIDE}, got m={m}, n={n}, r={r}"
        )
    return np.kron(np.eye(n), B), np.kron(A.T, np.eye(m))


@dataclass(frozen=True)
class DistortionReport:
    kind: str
    ratios: np.ndarray
    min_ratio: float
    max_ratio: float
    spread: float  # max over min


def distortion_probe(map_kind, adapter, num_pairs=1000, seed=0):
    """Distance ratios of the coordinates-to-delta map over random pairs."""
    if map_kind not in PROBE_KINDS:
        raise ValidationError(f"map kind must be one of {PROBE_KINDS}, got {map_kind!r}")
    if adapter.kind != map_kind:
        raise ValidationError(f"adapter is {adapter.kind!r}, probe asked for {map_kind!r}")
    if num_pairs < 10:
        raise ValidationError(f"need at least 10 pairs, got {num_pairs}")
    rng = np.random.default_rng(seed)
    dim = adapter.count_trainable()
    ratios = np.empty(num_pairs)
    done = 0
    while done < num_pairs:
        x = rng.normal(size=dim)
        y = rng.normal(size=dim)
        gap = float(np.linalg.norm(x - y))
        if gap == 0.0:
            continue
        ratios[done] = float(np.linalg.norm(adapter.delta_at(x) - adapter.delta_at(y))) / gap
        done += 1
    lo = float(ratios.min())
    hi = float(ratios.max())
    return DistortionReport(map_kind, ratios, lo, hi, hi / lo)


def weight_decay_audit(adapter):
    """Squared coordinate and delta norms plus their ratio.

    Isometric adapters sit at ratio 1; the unscaled variant inflates the
    ratio by roughly total/dim, which is exactly the decay miscalibration
    seen by an optimizer regularizing coordinates.
    """
    if not isinstance(adapter, adapters.GPartAdapter):
        raise ValidationError(f"audit applies to partition adapters, got {type(adapter).__name__}")
    theta_sq = float(adapter.theta @ adapter.theta)
    delta = adapter.delta()
    delta_sq = float(delta @ delta)
    ratio = 1.0 if theta_sq == 0.0 else delta_sq / theta_sq
    return theta_sq, delta_sq, ratio


@dataclass(frozen=True)
class SymmetryCheck:
    name: str
    seed: int
    value: float
    ok: bool


@dataclass(frozen=True)
class SymmetryReport:
    checks: tuple
    passed: bool


def symmetry_suite(A, B, seeds, pm=None):
    """Gauge and scale invariance of BA, plus partition-map injectivity.

    For each seed: a random invertible gauge G (resampled until its
    condition number is acceptable) must leave the product unchanged, and
    so must the scale family (lam B, A / lam). The partition check draws
    coordinate pairs and requires the delta gap to match the coordinate
    gap, which is injectivity with margin.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    r = B.shape[1]
    if A.shape[0] != r:
        raise ValidationError(f"factor shapes {B.shape} and {A.shape} do not chain")
    if pm is None:
        pm = partition.build_partition(int(seeds[0]), 64, 16)
    base = B @ A
    base_norm = float(np.linalg.norm(base))
    if base_norm == 0.0:
        raise ValidationError("zero product; symmetry residuals would be meaningless")
    checks = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(100):
            gauge = rng.normal(size=(r, r))
            if np.linalg.cond(gauge) <= GAUGE_CONDITION_LIMIT:
                break
        else:
            raise ValidationError("could not sample a well-conditioned gauge")
        residual = np.linalg.norm((B @ np.linalg.inv(gauge)) @ (gauge @ A) - base) / base_norm
        checks.append(SymmetryCheck("gauge", seed, float(residual), residual <= SYMMETRY_TOL))
        for lam in (0.1, 10.0):
            residual = np.linalg.norm((lam * B) @ (A / lam) - base) / base_norm
            checks.append(SymmetryCheck(f"scale[{lam}]", seed, float(residual),
                                        residual <= SYMMETRY_TOL))
        t1 = rng.normal(size=pm.dim)
        t2 = rng.normal(size=pm.dim)
        ref = float(np.linalg.norm(t1 - t2))
        gap = float(np.linalg.norm(partition.project(pm, t1) - partition.project(pm, t2)))
        checks.append(SymmetryCheck("injectivity", seed, gap / ref,
                                    gap >= (1.0 - 1e-12) * ref))
    return SymmetryReport(tuple(checks), all(c.ok for c in checks))


@dataclass(frozen=True)
class SweepRow:
    dim: int
    mean: float
    std: float
    failures: int


def dim_sweep(d_values, w0, config, task, repeats, *, epochs, batch_size, lr,
              weight_decay, partition_seed, train_seed, schedule="linear",
              warmup_ratio=0.06, mode="isometric", manifest=None):
    """Best dev accuracy per trainable dimension, aggregated over repeats.

    Per-cell training failures are counted and the sweep continues; a row
    with no surviving repeats reports nan.
    """
    if manifest is None:
        manifest = trainer.network_manifest(config)
    if repeats < 1:
        raise ValidationError(f"repeats must be positive, got {repeats}")
    for d in d_values:
        if not 1 <= d <= manifest.total:
            raise ValidationError(f"dim {d} outside [1, {manifest.total}]")
    rows = []
    for d in d_values:
        accs = []
        failures = 0
        for rep in range(repeats):
            try:
                adapter = adapters.GPartAdapter(manifest, partition_seed + rep, d, mode)
                _, record = trainer.finetune(adapter, w0, config, task, epochs, batch_size,
                                             lr, weight_decay, train_seed + rep,
                                             schedule, warmup_ratio)
                accs.append(record.best_dev_acc)
            except GPartError:
                failures += 1
        if accs:
            arr = np.asarray(accs)
            rows.append(SweepRow(int(d), float(arr.mean()), float(arr.std()), failures))
        else:
            rows.append(SweepRow(int(d), float("nan"), float("nan"), failures))
    return rows


def sweep_csv(rows):
    lines = ["d,dev_acc_mean,dev_acc_std,failures"]
    for row in rows:
        lines.append(f"{row.dim},{row.mean:.10g},{row.std:.10g},{row.failures}")
    return "\n".join(lines) + "\n"
