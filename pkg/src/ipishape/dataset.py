"""Mass production of (speckle, mask) training pairs with full provenance.

Every sample is a pure function of the dataset config, the master seed and
its index: per-sample seeds are derived with splitmix64, so generation
parallelizes across processes with byte-identical output regardless of
worker count. The manifest records everything needed to regenerate any pair
bit-exactly, plus content digests for corruption detection.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pngio
from .errors import CorruptDatasetError
from .rng import derive_seed
from .shapes import ALL_FAMILIES, Family, GridSpec, default_object_grid, sample_shape, sample_valid_pose
from .speckle import NoiseConfig, OpticsConfig, add_noise, sample_asperities, synthesize_speckle

MANIFEST_NAME = "manifest.jsonl"
HEADER_NAME = "manifest.header.json"
INCOMPLETE_MARKER = "INCOMPLETE"
FORMAT_VERSION = 1

# tags separating the independent per-sample seed streams
_SEED_SHAPE, _SEED_POSE, _SEED_ASPERITY, _SEED_NOISE, _SEED_SPLIT = range(1, 6)


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 2000
    families: tuple[Family, ...] = ALL_FAMILIES
    size_range_um: tuple[float, float] = (370.0, 1500.0)
    density: float = 0.5
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    master_seed: int = 0
    split_ratio: float = 0.9
    grid: GridSpec | None = None
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    workers: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.families:
            raise ValueError("at least one family required")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must be in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.grid is None:
            object.__setattr__(self, "grid", default_object_grid(self.size_range_um[1], n=self.optics.object_n))
        # the speckle frame must hold the full autocorrelation of the
        # largest particle: image extent >= twice the maximum Feret diameter
        if self.optics.image_n * self.grid.cell_um < 2 * self.size_range_um[1]:
            raise ValueError(
                "image frame too small for alias-free autocorrelations: "
                f"{self.optics.image_n} x {self.grid.cell_um} um < 2 x {self.size_range_um[1]} um"
            )


@dataclass
class SampleRecord:
    id: int
    family: str
    feret_um: float
    quaternion: tuple[float, float, float, float]
    asperity_count: int
    density: float
    seeds: dict
    noise: dict
    png_scale: float
    split: str
    digest_speckle: str
    digest_mask: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        d["quaternion"] = tuple(d["quaternion"])
        return cls(**d)


@dataclass
class DatasetManifest:
    version: int
    config: DatasetConfig
    records: list[SampleRecord]

    @property
    def count(self) -> int:
        return len(self.records)

    def record(self, sample_id: int) -> SampleRecord:
        for rec in self.records:
            if rec.id == sample_id:
                return rec
        raise KeyError(f"sample id {sample_id} not in manifest")

    def ids(self, split: str | None = None) -> list[int]:
        return [r.id for r in self.records if split is None or r.split == split]


def sample_seeds(master_seed: int, index: int) -> dict:
    """Independent shape/pose/asperity/noise seeds for one sample."""
    return {
        "shape": derive_seed(master_seed, index, _SEED_SHAPE),
        "pose": derive_seed(master_seed, index, _SEED_POSE),
        "asperity": derive_seed(master_seed, index, _SEED_ASPERITY),
        "noise": derive_seed(master_seed, index, _SEED_NOISE),
    }


def family_for_index(config: DatasetConfig, index: int) -> Family:
    """Families cycle, so counts per family are as equal as possible."""
    return config.families[index % len(config.families)]


def build_sample(config: DatasetConfig, index: int):
    """Generate one (record-core, speckle, mask) triple; pure and seed-driven."""
    seeds = sample_seeds(config.master_seed, index)
    family = family_for_index(config, index)
    spec = sample_shape(family, config.size_range_um, seeds["shape"])
    pose, mask = sample_valid_pose(spec, config.grid, seeds["pose"])
    asp = sample_asperities(mask, config.density, seeds["asperity"])
    img = synthesize_speckle(asp, config.optics)
    noise = replace(config.noise, seed=seeds["noise"])
    img = add_noise(img, noise)
    core = {
        "id": index,
        "family": family.value,
        "feret_um": spec.feret_um,
        "quaternion": pose.quaternion,
        "asperity_count": asp.count,
        "density": config.density,
        "seeds": seeds,
        "noise": {
            "gaussian_sigma_rel": noise.gaussian_sigma_rel,
            "shot_scale": noise.shot_scale,
            "quantize_bits": noise.quantize_bits,
        },
        "png_scale": pngio.speckle_scale(img),
    }
    return core, img, mask


def sample_paths(out_dir: str | Path, sample_id: int) -> tuple[Path, Path]:
    out = Path(out_dir)
    return out / "speckle" / f"{sample_id:06d}.png", out / "mask" / f"{sample_id:06d}.png"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_sample(config: DatasetConfig, out_dir: str, index: int) -> dict:
    core, img, mask = build_sample(config, index)
    speckle_bytes = pngio.speckle_to_png_bytes(img, core["png_scale"])
    mask_bytes = pngio.mask_to_png_bytes(mask)
    speckle_path, mask_path = sample_paths(out_dir, index)
    speckle_path.write_bytes(speckle_bytes)
    mask_path.write_bytes(mask_bytes)
    core["digest_speckle"] = _sha256(speckle_bytes)
    core["digest_mask"] = _sha256(mask_bytes)
    return core


def _split_counts(sizes: dict[str, int], ratio: float, total_train: int) -> dict[str, int]:
    """Largest-remainder apportionment of train slots across families."""
    exact = {fam: ratio * n for fam, n in sizes.items()}
    counts = {fam: min(math.floor(e), sizes[fam]) for fam, e in exact.items()}
    leftover = total_train - sum(counts.values())
    order = sorted(sizes, key=lambda f: (-(exact[f] - counts[f]), f))
    for fam in order:
        if leftover <= 0:
            break
        if counts[fam] < sizes[fam]:
            counts[fam] += 1
            leftover -= 1
    return counts


def assign_splits(records: list[SampleRecord], ratio: float, seed: int) -> None:
    """Stratified train/test split, exact overall size floor(ratio * count).

    Within each family the ids are shuffled with the given seed; per-family
    train counts follow largest-remainder apportionment so family
    proportions in each split stay within one sample of the global ratio.
    """
    if not 0 < ratio < 1:
        raise ValueError("split ratio must be in (0, 1)")
    by_family: dict[str, list[SampleRecord]] = {}
    for rec in records:
        by_family.setdefault(rec.family, []).append(rec)
    total_train = math.floor(ratio * len(records))
    counts = _split_counts({f: len(v) for f, v in by_family.items()}, ratio, total_train)
    rng = np.random.default_rng(seed)
    for family in sorted(by_family):
        members = by_family[family]
        order = rng.permutation(len(members))
        for rank, idx in enumerate(order):
            members[idx].split = "train" if rank < counts[family] else "test"


def split_manifest(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Re-split a manifest; returns the same manifest with labels replaced."""
    assign_splits(manifest.records, ratio, seed)
    manifest.config = replace(manifest.config, split_ratio=ratio)
    return manifest


def _config_to_json(config: DatasetConfig) -> dict:
    return {
        "version": FORMAT_VERSION,
        "count": config.count,
        "families": [f.value for f in config.families],
        "size_range_um": list(config.size_range_um),
        "density": config.density,
        "noise": {
            "gaussian_sigma_rel": config.noise.gaussian_sigma_rel,
            "shot_scale": config.noise.shot_scale,
            "quantize_bits": config.noise.quantize_bits,
        },
        "master_seed": config.master_seed,
        "split_ratio": config.split_ratio,
        "grid": {"n": config.grid.n, "cell_um": config.grid.cell_um},
        "optics": {
            "image_n": config.optics.image_n,
            "object_n": config.optics.object_n,
            "sensor_px": list(config.optics.sensor_px),
            "pixel_pitch_um": config.optics.pixel_pitch_um,
            "objective_focal_mm": config.optics.objective_focal_mm,
        },
    }


def _config_from_json(d: dict) -> DatasetConfig:
    return DatasetConfig(
        count=d["count"],
        families=tuple(Family(f) for f in d["families"]),
        size_range_um=tuple(d["size_range_um"]),
        density=d["density"],
        noise=NoiseConfig(**d["noise"]),
        master_seed=d["master_seed"],
        split_ratio=d["split_ratio"],
        grid=GridSpec(**d["grid"]),
        optics=OpticsConfig(
            image_n=d["optics"]["image_n"],
            object_n=d["optics"]["object_n"],
            sensor_px=tuple(d["optics"]["sensor_px"]),
            pixel_pitch_um=d["optics"]["pixel_pitch_um"],
            objective_focal_mm=d["optics"]["objective_focal_mm"],
        ),
    )


def write_manifest(manifest: DatasetManifest, out_dir: str | Path) -> None:
    """Write header and records; the records file is replaced atomically."""
    out = Path(out_dir)
    header_tmp = out / (HEADER_NAME + ".tmp")
    header_tmp.write_text(json.dumps(_config_to_json(manifest.config), indent=2) + "\n")
    os.replace(header_tmp, out / HEADER_NAME)
    tmp = out / (MANIFEST_NAME + ".tmp")
    with open(tmp, "w") as fh:
        for rec in manifest.records:
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, out / MANIFEST_NAME)


def load_manifest(dataset_dir: str | Path) -> DatasetManifest:
    dataset_dir = Path(dataset_dir)
    if (dataset_dir / INCOMPLETE_MARKER).exists():
        raise CorruptDatasetError(f"dataset at {dataset_dir} is marked incomplete")
    try:
        header = json.loads((dataset_dir / HEADER_NAME).read_text())
        lines = (dataset_dir / MANIFEST_NAME).read_text().splitlines()
    except FileNotFoundError as exc:
        raise CorruptDatasetError(f"missing manifest file: {exc.filename}") from exc
    records = [SampleRecord.from_json(line) for line in lines if line.strip()]
    return DatasetManifest(version=header["version"], config=_config_from_json(header), records=records)


def generate_dataset(config: DatasetConfig, out_dir: str | Path) -> DatasetManifest:
    """Generate `config.count` pairs plus the manifest under `out_dir`.

    Sample i is written to speckle/{i:06d}.png and mask/{i:06d}.png. Workers
    only shard the index range; output bytes are identical for any worker
    count. On failure an INCOMPLETE marker file is left next to the partial
    output.
    """
    out = Path(out_dir)
    (out / "speckle").mkdir(parents=True, exist_ok=True)
    (out / "mask").mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE_MARKER
    marker.write_text("generation in progress\n")
    try:
        indices = range(config.count)
        if config.workers == 1:
            cores = [_write_sample(config, str(out), i) for i in indices]
        else:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                chunk = max(1, config.count // (config.workers * 8))
                cores = list(
                    pool.map(_write_sample, *zip(*((config, str(out), i) for i in indices)), chunksize=chunk)
                )
    except BaseException as exc:
        marker.write_text(f"generation failed: {exc!r}\n")
        raise
    cores.sort(key=lambda c: c["id"])
    records = [SampleRecord(split="", **core) for core in cores]
    assign_splits(records, config.split_ratio, derive_seed(config.master_seed, _SEED_SPLIT))
    manifest = DatasetManifest(version=FORMAT_VERSION, config=config, records=records)
    write_manifest(manifest, out)
    marker.unlink()
    return manifest


def read_pair(dataset_dir: str | Path, sample_id: int, manifest: DatasetManifest | None = None):
    """Load and digest-check one (speckle, mask) pair, descaled to floats."""
    if manifest is None:
        manifest = load_manifest(dataset_dir)
    rec = manifest.record(sample_id)
    speckle_path, mask_path = sample_paths(dataset_dir, sample_id)
    for path, digest, kind in ((speckle_path, rec.digest_speckle, "speckle"), (mask_path, rec.digest_mask, "mask")):
        try:
            data = path.read_bytes()
        except FileNotFoundError as exc:
            raise CorruptDatasetError(f"missing {kind} file for sample {sample_id}: {path}") from exc
        if _sha256(data) != digest:
            raise CorruptDatasetError(f"{kind} file for sample {sample_id} fails its digest: {path}")
    img = pngio.read_speckle_png(speckle_path, rec.png_scale)
    mask = pngio.read_mask_png(mask_path)
    return img, mask


def regenerate_pair_bytes(config: DatasetConfig, sample_id: int) -> tuple[bytes, bytes]:
    """Regenerate the exact PNG bytes of one sample from config + id."""
    core, img, mask = build_sample(config, sample_id)
    return (
        pngio.speckle_to_png_bytes(img, core["png_scale"]),
        pngio.mask_to_png_bytes(mask),
    )
