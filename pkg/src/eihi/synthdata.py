"""Synthetic class/domain raster datasets and domain-shift splits.

Every sample is a glyph (the class signal) drawn over a colored, striped
background whose appearance is a smooth function of a scalar background
factor; the factor is pinned to the domain label plus per-sample jitter.
Because the foreground/background factorization is known exactly, pruning
and saliency can be scored against ground truth.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .diffcore.backbone import make_rng
from .errors import ConfigError, IngestionError, ShiftConfigError
from .ppm import read_ppm, write_ppm

GLYPH_CONTRAST = 0.45  # paint sits this far above/below the local base brightness
GLYPH_OPACITY = 0.70  # translucent overlay: glyph pixels blend with the scene
MAX_CLASSES = 12
_BRIGHT_LO, _BRIGHT_SPAN = 0.18, 0.66  # background brightness ramp over bf
_TINT_AMP = 0.28
_STRIPE_AMP = 0.22


_SPOT_AMP = 0.34


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 8
    num_domains: int = 10
    samples_per_cell: int = 60
    height: int = 32
    width: int = 32
    channels: int = 3
    noise_sigma: float = 0.02
    seed: int = 0
    background_contrast: float = 0.3

    def __post_init__(self):
        if self.num_classes < 2 or self.num_classes > MAX_CLASSES:
            raise ConfigError(f"num_classes must be in [2, {MAX_CLASSES}], got {self.num_classes}")
        if self.num_domains < 2:
            raise ConfigError(f"num_domains must be >= 2, got {self.num_domains}")
        if self.samples_per_cell < 1:
            raise ConfigError("samples_per_cell must be >= 1")
        if self.channels != 3:
            raise ConfigError("only 3-channel rasters are supported")
        if self.height < 16 or self.width < 16:
            raise ConfigError(
                f"rasters below 16x16 cannot carry the class glyph, got "
                f"{self.height}x{self.width}"
            )
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 < self.background_contrast <= 0.55:
            raise ConfigError("background_contrast must be in (0, 0.55]")

    def to_json_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "num_domains": self.num_domains,
            "samples_per_cell": self.samples_per_cell,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "background_contrast": self.background_contrast,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "DatasetSpec":
        return DatasetSpec(**d)


@dataclass
class Sample:
    image: np.ndarray  # (c, h, w) float64 in [0, 1]
    class_label: int
    domain_label: int
    background_factor: float | None
    sample_id: str
    foreground_mask: np.ndarray | None = None  # (h, w) bool, generator truth


@dataclass(frozen=True)
class ShiftConfig:
    source_domains: frozenset[int]
    target_domains: frozenset[int]
    primary_domain: int | None = None
    secondary_ratio: Fraction | None = None

    def __post_init__(self):
        src, tgt = self.source_domains, self.target_domains
        if not src or not tgt:
            raise ShiftConfigError("source and target domain sets must both be non-empty")
        if src & tgt:
            raise ShiftConfigError(f"source/target domains overlap: {sorted(src & tgt)}")
        if self.secondary_ratio is not None:
            if self.primary_domain is None:
                raise ShiftConfigError("secondary_ratio requires a primary_domain")
            if self.secondary_ratio <= 0:
                raise ShiftConfigError("secondary_ratio must be positive")
            if self.primary_domain not in src:
                raise ShiftConfigError(
                    f"primary_domain {self.primary_domain} is not a source domain"
                )

    @staticmethod
    def make(source, target, primary=None, ratio=None) -> "ShiftConfig":
        frac = None
        if ratio is not None:
            frac = Fraction(ratio) if not isinstance(ratio, Fraction) else ratio
        return ShiftConfig(frozenset(source), frozenset(target), primary, frac)


@dataclass
class SplitResult:
    train: list[Sample]
    validation: list[Sample]
    test: list[Sample]


# --------------------------------------------------------------------------
# rendering

def _zigzag(num_domains: int) -> list[int]:
    """Map domain labels to alternating low/high background-factor ranks
    (0 -> 0, 1 -> D-1, 2 -> 1, ...), so label-adjacent domains look very
    different while the factor itself stays a smooth rendering parameter."""
    d = num_domains
    return [dm // 2 if dm % 2 == 0 else d - 1 - dm // 2 for dm in range(d)]


def glyph_mask(class_label: int, h: int, w: int, center: tuple[float, float]) -> np.ndarray:
    """Boolean (h, w) mask of the class glyph centered at `center`."""
    r = 0.30 * min(h, w)
    ys = (np.arange(h)[:, None] - center[0]) / r
    xs = (np.arange(w)[None, :] - center[1]) / r
    u = np.broadcast_to(xs, (h, w))
    v = np.broadcast_to(ys, (h, w))
    rad = np.sqrt(u * u + v * v)
    box = (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)

    if class_label == 0:  # disc
        return rad <= 0.85
    if class_label == 1:  # ring
        return (rad >= 0.5) & (rad <= 0.95)
    if class_label == 2:  # plus
        return box & ((np.abs(u) <= 0.3) | (np.abs(v) <= 0.3))
    if class_label == 3:  # X
        return box & ((np.abs(u - v) <= 0.4) | (np.abs(u + v) <= 0.4))
    if class_label == 4:  # two horizontal bars
        return box & (np.abs(np.abs(v) - 0.5) <= 0.25)
    if class_label == 5:  # two vertical bars
        return box & (np.abs(np.abs(u) - 0.5) <= 0.25)
    if class_label == 6:  # filled triangle
        return (v >= -0.75) & (v <= 0.85 - 1.6 * np.abs(u))
    if class_label == 7:  # square frame
        return (np.maximum(np.abs(u), np.abs(v)) >= 0.5) & box
    if class_label == 8:  # diamond frame
        taxi = np.abs(u) + np.abs(v)
        return (taxi >= 0.55) & (taxi <= 1.0)
    if class_label == 9:  # checker quadrants
        return box & ((u * v) > 0)
    if class_label == 10:  # H
        return box & ((np.abs(u) >= 0.55) | (np.abs(v) <= 0.25))
    if class_label == 11:  # T
        return box & ((v <= -0.45) | (np.abs(u) <= 0.28))
    raise ConfigError(f"no glyph defined for class {class_label}")


def _background(bf: float, h: int, w: int, stripe_phase: float,
                rng: np.random.Generator) -> np.ndarray:
    """(3, h, w) background field; statistics are a smooth function of bf.

    Three layers: a brightness/tint base ramping linearly in bf, oriented
    stripes whose frequency and angle follow bf, and glyph-like clutter
    spots whose size and density follow bf. Spot positions are per-sample
    randomness; their distribution is the domain signature.
    """
    v = _BRIGHT_LO + _BRIGHT_SPAN * bf
    phases = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0])
    tint = 1.0 + _TINT_AMP * np.cos(2.0 * np.pi * (0.75 * bf + phases))
    base = (v * tint)[:, None, None] * np.ones((3, h, w))

    freq = 2.0 + 5.0 * bf
    theta = np.pi * bf
    ys = np.arange(h)[:, None] / max(h, 1)
    xs = np.arange(w)[None, :] / max(w, 1)
    stripes = _STRIPE_AMP * np.sin(
        2.0 * np.pi * freq * (np.cos(theta) * ys + np.sin(theta) * xs) + stripe_phase
    )
    img = base + stripes[None, :, :]

    # two clutter families with complementary densities: family A dominates
    # at extreme bf, family B at mid-range bf. The total count is flat, so
    # intrinsic difficulty stays even while the clutter style tracks bf
    # non-monotonically (mid-range styles are not blends of the extremes).
    scale = min(h, w) / 16.0
    weight_a = float(np.cos(np.pi * bf) ** 2)
    count_a = 2 + int(round(10 * weight_a))
    count_b = 2 + int(round(10 * (1.0 - weight_a)))
    yy = np.arange(h)[:, None]
    xx = np.arange(w)[None, :]
    for j in range(count_a + count_b):
        family_a = j < count_a
        cy, cx, u_kind = rng.random(3)
        cy, cx = cy * h, cx * w
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        if family_a:
            radius = (1.0 + 1.2 * bf) * scale
            if u_kind < 0.5:  # disc
                spot = d2 <= radius ** 2
            else:  # wide bar
                spot = (np.abs(yy - cy) <= 0.6 * radius) & (np.abs(xx - cx) <= 1.9 * radius)
        else:
            radius = (1.8 - 0.8 * bf) * scale
            if u_kind < 0.5:  # ring
                spot = (d2 <= (1.45 * radius) ** 2) & (d2 >= (0.75 * radius) ** 2)
            else:  # diagonal cross
                du, dv = np.abs(yy - cy + (xx - cx)), np.abs(yy - cy - (xx - cx))
                spot = ((du <= 0.8 * scale) | (dv <= 0.8 * scale)) & (d2 <= (1.6 * radius) ** 2)
        delta = _SPOT_AMP if j % 2 == 0 else -_SPOT_AMP
        img[:, spot] += delta
    return img


def _render_sample(spec: DatasetSpec, rank: list[int], c: int, dm: int, i: int) -> Sample:
    rng = make_rng(spec.seed, 0xDA7A, c * spec.num_domains * spec.samples_per_cell
                   + dm * spec.samples_per_cell + i)
    u_bf, u_phase, u_jy, u_jx = rng.random(4)

    bf = (rank[dm] + 0.5 + 0.7 * (u_bf - 0.5)) / spec.num_domains
    img = _background(bf, spec.height, spec.width, 2.0 * np.pi * u_phase, rng)

    jitter = 0.06 * spec.height  # within the <= 10% placement-jitter budget
    center = (
        spec.height / 2.0 + jitter * (2.0 * u_jy - 1.0),
        spec.width / 2.0 + jitter * (2.0 * u_jx - 1.0),
    )
    # polarity-adaptive paint keeps glyph contrast flat across domains:
    # bright paint over dark backgrounds, dark paint over bright ones
    mask = glyph_mask(c, spec.height, spec.width, center)
    base_v = _BRIGHT_LO + _BRIGHT_SPAN * bf
    paint = base_v + GLYPH_CONTRAST if base_v < 0.5 else base_v - GLYPH_CONTRAST
    img[:, mask] = (1.0 - GLYPH_OPACITY) * img[:, mask] + GLYPH_OPACITY * paint

    if spec.noise_sigma > 0:
        img = img + spec.noise_sigma * rng.standard_normal(img.shape)
    img = np.clip(img, 0.0, 1.0)

    return Sample(
        image=img,
        class_label=c,
        domain_label=dm,
        background_factor=float(bf),
        sample_id=f"c{c}_d{dm}_{i:03d}",
        foreground_mask=mask,
    )


def generate_dataset(spec: DatasetSpec) -> list[Sample]:
    """Render the full C x D x samples_per_cell grid, deterministic in seed."""
    rank = _zigzag(spec.num_domains)
    samples = [
        _render_sample(spec, rank, c, dm, i)
        for c in range(spec.num_classes)
        for dm in range(spec.num_domains)
        for i in range(spec.samples_per_cell)
    ]
    return samples


# --------------------------------------------------------------------------
# splits

def _sort_key(split_seed: int, sample_id: str) -> int:
    digest = hashlib.blake2b(
        f"{split_seed}:{sample_id}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def _cells(samples: list[Sample]) -> dict[tuple[int, int], list[Sample]]:
    cells: dict[tuple[int, int], list[Sample]] = {}
    for s in samples:
        cells.setdefault((s.class_label, s.domain_label), []).append(s)
    return cells


def split_domains(
    samples: list[Sample],
    shift: ShiftConfig,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> SplitResult:
    """Hold out the target domains as the test set; stratify the source
    domains into train/validation; optionally thin every non-primary source
    domain to floor(primary_count * ratio) samples per class first."""
    domains = {s.domain_label for s in samples}
    declared = shift.source_domains | shift.target_domains
    if domains != declared:
        raise ShiftConfigError(
            f"shift domains {sorted(declared)} do not cover the dataset domains {sorted(domains)}"
        )

    test = [s for s in samples if s.domain_label in shift.target_domains]
    cells = _cells([s for s in samples if s.domain_label in shift.source_domains])
    for dm in shift.source_domains:
        classes = {c for c, d in cells if d == dm}
        missing = {s.class_label for s in samples} - classes
        if missing:
            raise ShiftConfigError(f"empty cell (class {sorted(missing)[0]}, domain {dm})")

    if shift.secondary_ratio is not None:
        primary = shift.primary_domain
        for (c, dm), members in sorted(cells.items()):
            if dm == primary:
                continue
            primary_count = len(cells[(c, primary)])
            keep = int(primary_count * shift.secondary_ratio)  # Fraction floor
            if keep < 1:
                raise ShiftConfigError(
                    f"subsampling empties cell (class {c}, domain {dm}): "
                    f"floor({primary_count} * {shift.secondary_ratio}) = 0"
                )
            members.sort(key=lambda s: _sort_key(seed, s.sample_id))
            cells[(c, dm)] = members[:keep]

    train: list[Sample] = []
    validation: list[Sample] = []
    for (c, dm), members in sorted(cells.items()):
        members = sorted(members, key=lambda s: _sort_key(seed, s.sample_id))
        n_val = int(len(members) * val_fraction)
        validation.extend(members[:n_val])
        train.extend(members[n_val:])
    if not train:
        raise ShiftConfigError("split produced an empty training set")
    return SplitResult(train=train, validation=validation, test=test)


def split_mixed(
    samples: list[Sample],
    test_fraction: float,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> SplitResult:
    """Domain-mixing baseline split: every (class, domain) cell contributes
    the same fraction to the test set, so train and test share all domains."""
    if not 0 < test_fraction < 1:
        raise ShiftConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    train: list[Sample] = []
    validation: list[Sample] = []
    test: list[Sample] = []
    for (c, dm), members in sorted(_cells(samples).items()):
        members = sorted(members, key=lambda s: _sort_key(seed, s.sample_id))
        n_test = int(len(members) * test_fraction)
        rest = members[n_test:]
        n_val = int(len(rest) * val_fraction)
        test.extend(members[:n_test])
        validation.extend(rest[:n_val])
        train.extend(rest[n_val:])
    if not test or not train:
        raise ShiftConfigError("mixed split produced an empty train or test set")
    return SplitResult(train=train, validation=validation, test=test)


# --------------------------------------------------------------------------
# folder ingestion

def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def load_image_folder(root: str | Path, height: int, width: int) -> list[Sample]:
    """Ingest root/<class>/<domain>/<file>.ppm with labels in sorted
    directory order; rasters are resized bilinearly to (height, width)."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"{root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise IngestionError(f"{root} contains no class directories")

    samples: list[Sample] = []
    for ci, cdir in enumerate(class_dirs):
        domain_dirs = sorted(p for p in cdir.iterdir() if p.is_dir())
        if not domain_dirs:
            raise IngestionError(f"class directory {cdir} has no domain directories")
        for di, ddir in enumerate(domain_dirs):
            files = sorted(ddir.glob("*.ppm"))
            if not files:
                raise IngestionError(f"domain directory {ddir} has no .ppm files")
            for f in files:
                img = read_ppm(f)  # raises PpmParseError with the path
                samples.append(
                    Sample(
                        image=_bilinear_resize(img, height, width),
                        class_label=ci,
                        domain_label=di,
                        background_factor=None,
                        sample_id=str(f.relative_to(root)),
                        foreground_mask=None,
                    )
                )
    return samples


# --------------------------------------------------------------------------
# manifest

def write_dataset(out_dir: str | Path, spec: DatasetSpec, samples: list[Sample]) -> Path:
    out_dir = Path(out_dir)
    raster_dir = out_dir / "rasters"
    raster_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        rel = f"rasters/{s.sample_id}.ppm"
        write_ppm(out_dir / rel, s.image)
        entries.append(
            {
                "id": s.sample_id,
                "class": s.class_label,
                "domain": s.domain_label,
                "background_factor": s.background_factor,
                "raster": rel,
            }
        )
    manifest = {
        "format": "eihi-dataset",
        "version": 1,
        "spec": spec.to_json_dict(),
        "seed": spec.seed,
        "samples": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def load_dataset(dataset_dir: str | Path) -> tuple[DatasetSpec, list[Sample]]:
    """Read a manifest directory back; rasters come back 8-bit quantized."""
    dataset_dir = Path(dataset_dir)
    manifest = json.loads((dataset_dir / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != "eihi-dataset":
        raise IngestionError(f"{dataset_dir}: not a dataset manifest")
    spec = DatasetSpec.from_json_dict(manifest["spec"])
    samples = [
        Sample(
            image=read_ppm(dataset_dir / e["raster"]),
            class_label=int(e["class"]),
            domain_label=int(e["domain"]),
            background_factor=e["background_factor"],
            sample_id=e["id"],
            foreground_mask=None,
        )
        for e in manifest["samples"]
    ]
    return spec, samples
