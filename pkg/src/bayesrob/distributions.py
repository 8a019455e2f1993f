"""Grid-discretised joint distributions p(x, y).

Densities are stored per class at cell centres of a regular rectangular
grid; every integral in the toolkit is a midpoint sum over these cells.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import DomainTooSmall, EmptyClass, InvalidSpec, NonFiniteDensity

SPEC_VERSION = 1
GRID_FORMAT = "bayesrob.grid"
GRID_VERSION = 1

MASS_TOL = 1e-6
# fraction of analytic mass allowed to fall outside the domain
CLIP_LIMIT = 0.01

KINDS = ("truncated_normal_mixture", "moons", "kde_samples", "piecewise_uniform")


@dataclass(frozen=True, eq=False)
class GridDistribution:
    domain: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]
    densities: np.ndarray  # (K, *shape)

    def __post_init__(self):
        dom = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        shape = tuple(int(s) for s in self.shape)
        dens = np.asarray(self.densities, dtype=float)
        if len(dom) != len(shape):
            raise InvalidSpec("domain and shape have different dimensionality")
        if dens.shape[1:] != shape:
            raise InvalidSpec(f"density grid shape {dens.shape[1:]} != {shape}")
        if dens.shape[0] < 2:
            raise InvalidSpec("need at least two classes")
        for lo, hi in dom:
            if not lo < hi:
                raise InvalidSpec(f"empty interval [{lo}, {hi}]")
        if any(s < 1 for s in shape):
            raise InvalidSpec(f"bad shape {shape}")
        if not np.all(np.isfinite(dens)):
            raise NonFiniteDensity("density grid contains NaN or inf")
        if np.any(dens < 0):
            raise InvalidSpec("negative density")
        dens.setflags(write=False)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "densities", dens)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def num_classes(self) -> int:
        return self.densities.shape[0]

    @cached_property
    def cell_sizes(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.domain, self.shape))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_sizes))

    def axis_centers(self, axis: int) -> np.ndarray:
        lo, _ = self.domain[axis]
        h = self.cell_sizes[axis]
        return lo + (np.arange(self.shape[axis]) + 0.5) * h

    def centers(self) -> np.ndarray:
        """Cell centres, shape (*shape, dim)."""
        mesh = np.meshgrid(*(self.axis_centers(i) for i in range(self.dim)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_center(self, index) -> np.ndarray:
        return np.array([self.axis_centers(i)[j] for i, j in enumerate(index)])

    def locate(self, points) -> tuple[np.ndarray, ...]:
        """Index arrays of the cells containing ``points`` (clamped to the grid)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.dim == 1 and pts.shape != (1,):
            pts = pts[:, None]
        pts = np.atleast_2d(pts)
        idx = []
        for i, ((lo, _), h, n) in enumerate(zip(self.domain, self.cell_sizes, self.shape)):
            j = np.floor((pts[..., i] - lo) / h).astype(np.int64)
            idx.append(np.clip(j, 0, n - 1))
        return tuple(idx)

    @cached_property
    def marginal_grid(self) -> np.ndarray:
        m = self.densities.sum(axis=0)
        m.setflags(write=False)
        return m

    @cached_property
    def _posterior(self) -> tuple[np.ndarray, np.ndarray]:
        marg = self.marginal_grid
        zero = marg <= 0
        with np.errstate(invalid="ignore", divide="ignore"):
            post = self.densities / np.where(zero, 1.0, marg)
        post[:, zero] = 1.0 / self.num_classes
        post.setflags(write=False)
        zero.setflags(write=False)
        return post, zero

    @property
    def posterior_grid(self) -> np.ndarray:
        """(K, *shape); zero-marginal cells carry the uniform vector."""
        return self._posterior[0]

    @property
    def zero_marginal(self) -> np.ndarray:
        return self._posterior[1]

    @cached_property
    def argmax_grid(self) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.densities, axis=0)

    def total_mass(self) -> float:
        return float(self.densities.sum() * self.cell_volume)

    def class_masses(self) -> np.ndarray:
        return self.densities.reshape(self.num_classes, -1).sum(axis=1) * self.cell_volume

    def with_densities(self, densities, domain=None) -> "GridDistribution":
        densities = np.asarray(densities)
        return GridDistribution(domain or self.domain, densities.shape[1:], densities)


def posterior(dist: GridDistribution, cell_index, return_flag: bool = False):
    """p(y=k | x) at one cell; uniform when the marginal vanishes."""
    idx = (slice(None),) + tuple(int(i) for i in np.atleast_1d(cell_index))
    vec = np.array(dist.posterior_grid[idx])
    if return_flag:
        return vec, bool(dist.zero_marginal[idx[1:]])
    return vec


def marginal(dist: GridDistribution, cell_index) -> float:
    idx = tuple(int(i) for i in np.atleast_1d(cell_index))
    return float(dist.marginal_grid[idx])


# ---------------------------------------------------------------------------
# Specs


@dataclass
class DistributionSpec:
    kind: str
    domain: list
    shape: list
    priors: list
    params: dict = field(default_factory=dict)
    spec_version: int = SPEC_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        self.domain = [[float(lo), float(hi)] for lo, hi in self.domain]
        self.shape = [int(s) for s in self.shape]
        self.priors = [float(p) for p in self.priors]
        if len(self.domain) != len(self.shape):
            raise InvalidSpec("domain and shape have different dimensionality")
        for lo, hi in self.domain:
            if not lo < hi:
                raise InvalidSpec(f"empty interval [{lo}, {hi}]")
        if any(s < 2 for s in self.shape):
            raise InvalidSpec(f"every shape entry must be >= 2, got {self.shape}")
        if len(self.priors) < 2:
            raise InvalidSpec("need priors for at least two classes")
        if any(p <= 0 for p in self.priors):
            raise InvalidSpec(f"priors must be positive, got {self.priors}")
        if abs(sum(self.priors) - 1.0) > 1e-12:
            raise InvalidSpec(f"priors sum to {sum(self.priors)!r}, not 1")

    @property
    def num_classes(self) -> int:
        return len(self.priors)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "DistributionSpec":
        data = dict(data)
        version = data.pop("spec_version", SPEC_VERSION)
        if version != SPEC_VERSION:
            raise InvalidSpec(f"unsupported spec_version {version}")
        missing = {"kind", "domain", "shape", "priors"} - set(data)
        if missing:
            raise InvalidSpec(f"spec is missing {sorted(missing)}")
        params = dict(data.get("params", {}))
        if data["kind"] == "kde_samples" and isinstance(params.get("samples"), str):
            path = Path(params["samples"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            params["samples"] = str(path)
        return cls(
            kind=data["kind"],
            domain=data["domain"],
            shape=data["shape"],
            priors=data["priors"],
            params=params,
            spec_version=version,
        )

    def to_dict(self) -> dict:
        return {
            "spec_version": self.spec_version,
            "kind": self.kind,
            "params": self.params,
            "priors": self.priors,
            "domain": self.domain,
            "shape": self.shape,
        }

    def with_shape(self, shape) -> "DistributionSpec":
        d = self.to_dict()
        d["shape"] = list(shape)
        return DistributionSpec.from_dict(d)


def load_spec(path) -> DistributionSpec:
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return DistributionSpec.from_dict(data, base_dir=path.parent)


def save_spec(spec: DistributionSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """Delimited text: one row per sample, last column an integer label."""
    rows = []
    with open(path, newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t ")
        except csv.Error:
            dialect = csv.excel
        for row in csv.reader(fh, dialect):
            row = [c for c in row if c.strip() != ""]
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if rows:
                    raise InvalidSpec(f"non-numeric row in {path}: {row}")
                continue  # header
    if not rows:
        raise InvalidSpec(f"no samples in {path}")
    arr = np.asarray(rows)
    labels = arr[:, -1]
    if not np.all(labels == np.round(labels)):
        raise InvalidSpec("labels (last column) must be integers")
    return arr[:, :-1], labels.astype(int)


# ---------------------------------------------------------------------------
# Builders


def _spec_grid(spec: DistributionSpec) -> GridDistribution:
    """Empty GridDistribution carrying the spec's geometry (for centre lookups)."""
    return GridDistribution(
        spec.domain, spec.shape, np.zeros((spec.num_classes,) + tuple(spec.shape))
    )


def _axis_centers(spec: DistributionSpec) -> list[np.ndarray]:
    out = []
    for (lo, hi), n in zip(spec.domain, spec.shape):
        h = (hi - lo) / n
        out.append(lo + (np.arange(n) + 0.5) * h)
    return out


def _gauss_outer(axis_values: list[np.ndarray]) -> np.ndarray:
    out = axis_values[0]
    for a in axis_values[1:]:
        out = np.multiply.outer(out, a)
    return out


def _normal_pdf(x, mean, scale):
    z = (x - mean) / scale
    return np.exp(-0.5 * z * z) / (scale * math.sqrt(2.0 * math.pi))


def _box_mass(domain, mean, scale) -> float:
    mass = 1.0
    for (lo, hi), m, s in zip(domain, mean, scale):
        mass *= ndtr((hi - m) / s) - ndtr((lo - m) / s)
    return float(mass)


def _normal_components(spec: DistributionSpec, k: int) -> list[tuple[float, np.ndarray, np.ndarray]]:
    classes = spec.params.get("classes")
    if not isinstance(classes, list) or len(classes) != spec.num_classes:
        raise InvalidSpec("truncated_normal_mixture needs params.classes with one entry per prior")
    comps = classes[k].get("components") if isinstance(classes[k], dict) else None
    if not comps:
        raise InvalidSpec(f"class {k} has no components")
    out = []
    for c in comps:
        mean = np.broadcast_to(np.asarray(c["mean"], dtype=float), (spec.dim,))
        scale = np.broadcast_to(np.asarray(c.get("scale", 1.0), dtype=float), (spec.dim,))
        if np.any(scale <= 0):
            raise InvalidSpec("component scales must be positive")
        out.append((float(c.get("weight", 1.0)), mean, scale))
    total = sum(w for w, _, _ in out)
    if total <= 0:
        raise InvalidSpec(f"class {k} component weights sum to {total}")
    return [(w / total, m, s) for w, m, s in out]


def _build_normal_mixture(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray]:
    axes = _axis_centers(spec)
    dens, inside = [], []
    for k in range(spec.num_classes):
        pdf = np.zeros(tuple(spec.shape))
        mass = 0.0
        for w, mean, scale in _normal_components(spec, k):
            pdf += w * _gauss_outer([_normal_pdf(a, m, s) for a, m, s in zip(axes, mean, scale)])
            mass += w * _box_mass(spec.domain, mean, scale)
        dens.append(pdf)
        inside.append(mass)
    return np.stack(dens), np.asarray(inside)


MOONS_NOISE = 0.1
MOONS_ARC_NODES = 256


def moons_centres(k: int, theta: np.ndarray) -> np.ndarray:
    """Arc centre lines: class 0 the upper unit semicircle, class 1 the lower one
    centred at (1, 0.5)."""
    if k == 0:
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=-1)


def _build_moons(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.dim != 2 or spec.num_classes != 2:
        raise InvalidSpec("moons is a 2-D, two-class distribution")
    sigma = float(spec.params.get("noise", MOONS_NOISE))
    if sigma <= 0:
        raise InvalidSpec("moons noise must be positive")
    nodes = int(spec.params.get("arc_nodes", MOONS_ARC_NODES))
    t, wq = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * math.pi * (t + 1.0)
    wq = 0.5 * wq  # averages over theta in [0, pi]: (1/pi) * (pi/2) * w
    xs, ys = _axis_centers(spec)
    dens, inside = [], []
    for k in range(2):
        c = moons_centres(k, theta)
        gx = _normal_pdf(xs[:, None], c[None, :, 0], sigma)  # (nx, nodes)
        gy = _normal_pdf(ys[:, None], c[None, :, 1], sigma)  # (ny, nodes)
        dens.append((gx * wq[None, :]) @ gy.T)
        (xlo, xhi), (ylo, yhi) = spec.domain
        mx = ndtr((xhi - c[:, 0]) / sigma) - ndtr((xlo - c[:, 0]) / sigma)
        my = ndtr((yhi - c[:, 1]) / sigma) - ndtr((ylo - c[:, 1]) / sigma)
        inside.append(float(np.sum(wq * mx * my)))
    return np.stack(dens), np.asarray(inside)


def _build_piecewise_uniform(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Each class is uniform on a union of disjoint axis-aligned boxes; cells get
    their exact fractional overlap."""
    classes = spec.params.get("classes")
    if not isinstance(classes, list) or len(classes) != spec.num_classes:
        raise InvalidSpec("piecewise_uniform needs params.classes with one entry per prior")
    edges = []
    for (lo, hi), n in zip(spec.domain, spec.shape):
        e = np.linspace(lo, hi, n + 1)
        edges.append((e[:-1], e[1:]))
    cell_vol = float(np.prod([(hi - lo) / n for (lo, hi), n in zip(spec.domain, spec.shape)]))
    dens, inside = [], []
    for k, entry in enumerate(classes):
        boxes = entry.get("boxes") if isinstance(entry, dict) else None
        if not boxes:
            raise InvalidSpec(f"class {k} has no boxes")
        frac = np.zeros(tuple(spec.shape))
        total_vol, vol_in = 0.0, 0.0
        for box in boxes:
            box = np.asarray(box, dtype=float).reshape(spec.dim, 2)
            if np.any(box[:, 1] <= box[:, 0]):
                raise InvalidSpec(f"degenerate box {box.tolist()}")
            total_vol += float(np.prod(box[:, 1] - box[:, 0]))
            per_axis = []
            for (clo, chi), (blo, bhi) in zip(edges, box):
                per_axis.append(np.clip(np.minimum(chi, bhi) - np.maximum(clo, blo), 0.0, None))
            overlap = _gauss_outer(per_axis)
            frac += overlap
            vol_in += float(overlap.sum())
        dens.append(frac / cell_vol / total_vol)
        inside.append(vol_in / total_vol)
    return np.stack(dens), np.asarray(inside)


def scott_bandwidth(samples: np.ndarray) -> np.ndarray:
    """Scott's rule per dimension: std * n**(-1/(d+4))."""
    n, d = samples.shape
    std = samples.std(axis=0, ddof=1)
    return std * n ** (-1.0 / (d + 4))


def _build_kde(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray]:
    src = spec.params.get("samples")
    if src is None:
        raise InvalidSpec("kde_samples needs params.samples (path or inline rows)")
    if isinstance(src, str):
        X, y = read_samples(src)
    else:
        arr = np.asarray(src, dtype=float)
        X, y = arr[:, :-1], arr[:, -1].astype(int)
    if X.shape[1] != spec.dim:
        raise InvalidSpec(f"samples have {X.shape[1]} coordinates, grid has {spec.dim}")
    if spec.dim > 4:
        raise InvalidSpec("KDE ingestion supports at most 4 dimensions")
    rule = spec.params.get("bandwidth", "scott")
    axes = _axis_centers(spec)
    dens = []
    for k in range(spec.num_classes):
        pts = X[y == k]
        if len(pts) < 2:
            raise InvalidSpec(f"class {k} has {len(pts)} samples; KDE needs at least 2")
        if rule == "scott":
            bw = scott_bandwidth(pts)
        else:
            bw = np.broadcast_to(np.asarray(rule, dtype=float), (spec.dim,))
        if np.any(~np.isfinite(bw)) or np.any(bw <= 0):
            raise InvalidSpec(f"class {k}: degenerate bandwidth {bw}")
        pdf = np.zeros(tuple(spec.shape))
        for start in range(0, len(pts), 256):
            chunk = pts[start:start + 256]
            per_axis = [_normal_pdf(a[None, :], chunk[:, i, None], bw[i]) for i, a in enumerate(axes)]
            # sum over samples of the outer product of per-axis kernels
            letters = "abcd"[: spec.dim]
            expr = ",".join(f"s{c}" for c in letters) + "->" + letters
            pdf += np.einsum(expr, *per_axis)
        pdf /= len(pts)
        # truncate to the domain: renormalise the class-conditional on the grid
        mass = pdf.sum() * float(np.prod([a[1] - a[0] for a in axes]))
        if mass <= 0:
            raise EmptyClass(f"class {k} has zero mass on the domain")
        dens.append(pdf / mass)
    return np.stack(dens), np.ones(spec.num_classes)


_BUILDERS = {
    "truncated_normal_mixture": _build_normal_mixture,
    "moons": _build_moons,
    "kde_samples": _build_kde,
    "piecewise_uniform": _build_piecewise_uniform,
}


def build_distribution(spec: DistributionSpec) -> GridDistribution:
    """Evaluate class-conditional densities at cell centres, weight by priors and
    normalise total mass to one."""
    cond, inside = _BUILDERS[spec.kind](spec)
    if not np.all(np.isfinite(cond)):
        raise NonFiniteDensity(f"{spec.kind} spec produced non-finite densities")
    clipped = 1.0 - inside
    worst = int(np.argmax(clipped))
    if clipped[worst] >= CLIP_LIMIT:
        raise DomainTooSmall(
            f"{100 * clipped[worst]:.2f}% of class {worst} mass lies outside the domain",
            float(clipped[worst]),
        )
    joint = cond * np.asarray(spec.priors).reshape((-1,) + (1,) * spec.dim)
    cell_vol = float(np.prod([(hi - lo) / n for (lo, hi), n in zip(spec.domain, spec.shape)]))
    per_class = joint.reshape(spec.num_classes, -1).sum(axis=1) * cell_vol
    for k, m in enumerate(per_class):
        if not m > 0:
            raise EmptyClass(f"class {k} has zero mass on the domain")
    total = float(per_class.sum())
    return GridDistribution(spec.domain, spec.shape, joint / total)


# ---------------------------------------------------------------------------
# Persistence


def grid_to_dict(dist: GridDistribution) -> dict:
    return {
        "format": GRID_FORMAT,
        "version": GRID_VERSION,
        "domain": [list(d) for d in dist.domain],
        "shape": list(dist.shape),
        "num_classes": dist.num_classes,
        "order": "row-major",
        "densities": [dist.densities[k].ravel(order="C").tolist() for k in range(dist.num_classes)],
    }


def grid_from_dict(data: dict) -> GridDistribution:
    if data.get("format") != GRID_FORMAT:
        raise InvalidSpec(f"not a {GRID_FORMAT} document")
    if data.get("version") != GRID_VERSION:
        raise InvalidSpec(f"unsupported grid version {data.get('version')}")
    shape = tuple(data["shape"])
    dens = np.asarray(data["densities"], dtype=float)
    if dens.shape != (int(data["num_classes"]), int(np.prod(shape))):
        raise InvalidSpec("density array size does not match shape and num_classes")
    return GridDistribution(data["domain"], shape, dens.reshape((-1,) + shape))


def save_grid(dist: GridDistribution, path) -> None:
    with open(path, "w") as fh:
        json.dump(grid_to_dict(dist), fh)
        fh.write("\n")


def load_grid(path) -> GridDistribution:
    with open(path) as fh:
        return grid_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Shipped specs

DATA_DIR = Path(__file__).parent / "data"
SHIPPED = ("normals_1d", "step_1d", "moons_2d")


def shipped_spec(name: str) -> DistributionSpec:
    if name not in SHIPPED:
        raise KeyError(f"unknown shipped distribution {name!r}; choose from {SHIPPED}")
    return load_spec(DATA_DIR / f"{name}.json")


def shipped_distribution(name: str) -> GridDistribution:
    return build_distribution(shipped_spec(name))
