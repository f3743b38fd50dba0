"""Synthetic patch data: site profiles, shard generation, manifest I/O.

Real slide patches are replaced by procedurally generated ones: a light
textured background (histology-stain pastel) with dark round blobs standing
in for lymphocytes. A patch is positive when it carries two or more blobs.
Site heterogeneity comes from per-site channel offsets (covariate shift)
and per-site label priors (prior shift), scaled down from the production
cohort's patient/patch counts.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .seeding import derive_seed

MANIFEST_VERSION = 1
TENSOR_MAGIC = b"FSHT"
TENSOR_VERSION = 1

# Per-site (train_patients, train_patches, val_patients, val_patches) for
# the 8-site reference cohort; scaled by the `scale` argument below.
SITE_COHORT_COUNTS = (
    (89, 10542, 22, 2602),
    (174, 20517, 43, 5107),
    (3, 11039, 1, 237),
    (32, 3793, 8, 950),
    (156, 18505, 40, 4753),
    (19, 1938, 5, 500),
    (8, 16265, 2, 7091),
    (48, 39665, 12, 11857),
)

DEGENERATE_SITE_ID = 6  # all-negative site, 1-based

_BASE_COLOR = (0.82, 0.69, 0.78)   # pastel pink background
_BLOB_COLOR = (0.18, 0.12, 0.38)   # dark blue-purple nucleus


class ManifestError(ValueError):
    """Malformed manifest or tensor file."""


@dataclass(frozen=True)
class SiteProfile:
    site_id: int
    n_patients_train: int
    n_patches_train: int
    n_patients_validation: int
    n_patches_validation: int
    positive_rate_train: float
    positive_rate_validation: float
    texture_shift: tuple  # per-channel additive offset, each in [-0.2, 0.2]
    blob_intensity: float
    seed: int
    patch_side: int = 32
    channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "texture_shift",
                           tuple(float(t) for t in self.texture_shift))
        for r in (self.positive_rate_train, self.positive_rate_validation):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"positive rate {r} outside [0, 1]")
        for t in self.texture_shift:
            if not -0.2 <= t <= 0.2:
                raise ValueError(f"texture shift {t} outside [-0.2, 0.2]")
        if min(self.n_patients_train, self.n_patches_train,
               self.n_patients_validation, self.n_patches_validation) < 0:
            raise ValueError("counts must be >= 0")


@dataclass
class PatchSample:
    pixels: np.ndarray  # (side, side, channels), values in [0, 1]
    label: int
    patient_id: str
    site_id: int


@dataclass
class PatchSet:
    """Stacked view of many patches; the unit the training loop consumes."""

    pixels: np.ndarray          # (n, side, side, channels) float32 in [0, 1]
    labels: np.ndarray          # (n,) uint8 in {0, 1}
    patient_ids: list = field(default_factory=list)
    site_ids: np.ndarray = None  # (n,) int16

    def __post_init__(self):
        if self.site_ids is None:
            self.site_ids = np.zeros(len(self.labels), dtype=np.int16)

    def __len__(self):
        return self.pixels.shape[0]

    def __getitem__(self, i) -> PatchSample:
        return PatchSample(self.pixels[i], int(self.labels[i]),
                           self.patient_ids[i], int(self.site_ids[i]))


@dataclass
class SiteShard:
    site_id: int
    train: PatchSet
    validation: PatchSet
    profile: SiteProfile

    def __post_init__(self):
        if len(self.train) == 0:
            raise ValueError(f"site {self.site_id}: empty training set")
        overlap = set(self.train.patient_ids) & set(self.validation.patient_ids)
        if overlap:
            raise ValueError(
                f"site {self.site_id}: patients {sorted(overlap)[:3]} appear "
                f"in both train and validation")


def _draw_blobs(rng, pixels, n_blobs, blob_intensity, side):
    """Stamp non-overlapping dark round blobs, 8-12% of the side each."""
    placed = []
    yy, xx = np.mgrid[0:side, 0:side]
    attempts = 0
    while len(placed) < n_blobs and attempts < 200:
        attempts += 1
        r = rng.uniform(0.05, 0.06) * side
        cx = rng.uniform(r + 1, side - r - 1)
        cy = rng.uniform(r + 1, side - r - 1)
        if any((cx - px) ** 2 + (cy - py) ** 2 < (r + pr + 2.0) ** 2
               for px, py, pr in placed):
            continue
        placed.append((cx, cy, r))
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        alpha = np.clip(r - dist + 0.5, 0.0, 1.0) * blob_intensity
        for ch in range(pixels.shape[2]):
            target = _BLOB_COLOR[ch % 3]
            pixels[:, :, ch] = (1 - alpha) * pixels[:, :, ch] + alpha * target
    return len(placed)


def render_patch(rng, side, channels, positive, texture_shift, blob_intensity):
    """One synthetic patch; returns (pixels float32, n_blobs_drawn)."""
    pixels = np.empty((side, side, channels), dtype=np.float64)
    for ch in range(channels):
        base = _BASE_COLOR[ch % 3]
        pixels[:, :, ch] = base + rng.normal(0.0, 0.02, size=(side, side))
    # gentle large-scale gradient so backgrounds are not i.i.d. noise
    slope = rng.uniform(-0.04, 0.04, size=2)
    ramp = (slope[0] * np.linspace(-1, 1, side)[:, None]
            + slope[1] * np.linspace(-1, 1, side)[None, :])
    pixels += ramp[:, :, None]

    # positives carry 2-4 blobs; negatives usually none, sometimes one
    n_blobs = int(rng.integers(2, 5)) if positive else int(rng.random() < 0.3)
    drawn = _draw_blobs(rng, pixels, n_blobs, blob_intensity, side)

    pixels += np.asarray(texture_shift)[None, None, :channels]
    np.clip(pixels, 0.0, 1.0, out=pixels)
    return pixels.astype(np.float32), drawn


def count_blobs(pixels, darkness=0.25, min_size=2):
    """Brute-force blob counter used as the generator's label oracle.

    Marks pixels at least `darkness` below the patch's median brightness
    and counts connected components, so the count is insensitive to the
    per-site channel offsets.
    """
    from scipy import ndimage

    gray = pixels.mean(axis=2)
    mask = gray < np.median(gray) - darkness
    labeled, n = ndimage.label(mask)
    sizes = ndimage.sum(mask, labeled, index=range(1, n + 1))
    return int(np.sum(np.asarray(sizes) >= min_size))


def _generate_split(profile: SiteProfile, split: str, n_patients: int,
                    n_patches: int, positive_rate: float) -> PatchSet:
    if n_patches < n_patients:
        raise ValueError(
            f"site {profile.site_id} {split}: {n_patches} patches cannot "
            f"cover {n_patients} patients")
    rng = np.random.default_rng(derive_seed(profile.seed, split))
    n_pos = int(round(positive_rate * n_patches))
    labels = np.zeros(n_patches, dtype=np.uint8)
    labels[:n_pos] = 1
    rng.shuffle(labels)

    side, channels = profile.patch_side, profile.channels
    pixels = np.empty((n_patches, side, side, channels), dtype=np.float32)
    for i in range(n_patches):
        pixels[i], _ = render_patch(rng, side, channels, bool(labels[i]),
                                    profile.texture_shift,
                                    profile.blob_intensity)
    tag = "P" if split == "train" else "VP"
    patient_ids = [f"S{profile.site_id}_{tag}{i % n_patients}"
                   for i in range(n_patches)] if n_patients else []
    return PatchSet(pixels, labels, patient_ids,
                    np.full(n_patches, profile.site_id, dtype=np.int16))


def generate_site(profile: SiteProfile) -> SiteShard:
    """Deterministically generate one site's train/validation shard."""
    train = _generate_split(profile, "train", profile.n_patients_train,
                            profile.n_patches_train,
                            profile.positive_rate_train)
    validation = _generate_split(profile, "validation",
                                 profile.n_patients_validation,
                                 profile.n_patches_validation,
                                 profile.positive_rate_validation)
    return SiteShard(profile.site_id, train, validation, profile)


def default_eight_sites(scale: float, master_seed: int,
                        patch_side: int = 32, channels: int = 3):
    """Eight profiles mirroring the reference cohort's count ratios.

    Site 6 is the degenerate site: both its splits carry only negative
    patches, so its local model learns to predict the negative class.
    """
    if not 0 < scale <= 1:
        raise ValueError("scale must be in (0, 1]")
    rng = np.random.default_rng(derive_seed(master_seed, "profiles"))
    profiles = []
    for i, (tr_pat, tr_patch, va_pat, va_patch) in enumerate(SITE_COHORT_COUNTS):
        site_id = i + 1
        pr_train = float(rng.uniform(0.2, 0.5))
        pr_val = float(rng.uniform(0.2, 0.5))
        # shift directions take the 8 sign corners of the channel cube, so
        # every pair of sites is well separated in at least one channel
        magnitude = rng.uniform(0.12, 0.18, size=channels)
        signs = np.array([1.0 if (i >> b) & 1 else -1.0 for b in range(channels)])
        shift = tuple(float(s) for s in magnitude * signs)
        blob_intensity = float(rng.uniform(0.9, 1.0))
        if site_id == DEGENERATE_SITE_ID:
            pr_train = 0.0
            pr_val = 0.0
        n_tr_pat = max(1, round(tr_pat * scale))
        n_va_pat = max(1, round(va_pat * scale))
        profiles.append(SiteProfile(
            site_id=site_id,
            n_patients_train=n_tr_pat,
            n_patches_train=max(n_tr_pat, round(tr_patch * scale)),
            n_patients_validation=n_va_pat,
            n_patches_validation=max(n_va_pat, round(va_patch * scale)),
            positive_rate_train=pr_train,
            positive_rate_validation=pr_val,
            texture_shift=shift,
            blob_intensity=blob_intensity,
            seed=derive_seed(master_seed, "site-data", site_id),
            patch_side=patch_side,
            channels=channels,
        ))
    return profiles


def pool_shards(shards):
    """Concatenate shards (by site, then original order) into one pool."""
    if not shards:
        raise ValueError("need at least one shard")
    ordered = sorted(shards, key=lambda s: s.site_id)

    def cat(sets):
        return PatchSet(
            np.concatenate([s.pixels for s in sets]),
            np.concatenate([s.labels for s in sets]),
            [p for s in sets for p in s.patient_ids],
            np.concatenate([s.site_ids for s in sets]),
        )

    return cat([s.train for s in ordered]), cat([s.validation for s in ordered])


# ---------------------------------------------------------------------------
# Manifest I/O: a directory with index.json + one raw tensor file per split.
# ---------------------------------------------------------------------------

def write_tensor(path, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<H", TENSOR_VERSION))
        f.write(struct.pack("<I", array.ndim))
        f.write(struct.pack(f"<{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def read_tensor(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 10:
        raise ManifestError(f"{path}: tensor file shorter than header (at byte 0)")
    if blob[:4] != TENSOR_MAGIC:
        raise ManifestError(f"{path}: bad magic {blob[:4]!r} (at byte 0)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != TENSOR_VERSION:
        raise ManifestError(f"{path}: unsupported tensor version {version} (at byte 4)")
    (rank,) = struct.unpack_from("<I", blob, 6)
    pos = 10
    if rank > 8:
        raise ManifestError(f"{path}: implausible rank {rank} (at byte 6)")
    if pos + 4 * rank > len(blob):
        raise ManifestError(f"{path}: truncated dims (at byte {pos})")
    dims = struct.unpack_from(f"<{rank}I", blob, pos)
    pos += 4 * rank
    n_bytes = 4 * int(np.prod(dims)) if rank else 4
    if pos + n_bytes != len(blob):
        raise ManifestError(
            f"{path}: expected {n_bytes} value bytes, file has "
            f"{len(blob) - pos} (at byte {pos})")
    return np.frombuffer(blob[pos:], dtype="<f4").reshape(dims).copy()


def write_manifest(shard: SiteShard, directory):
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    splits = []
    for name, pset in (("train", shard.train), ("validation", shard.validation)):
        tensor_file = f"{name}.fsht"
        write_tensor(directory / tensor_file, pset.pixels)
        splits.append({
            "name": name,
            "tensor_file": tensor_file,
            "shape": list(pset.pixels.shape),
            "labels": pset.labels.tolist(),
            "patient_ids": list(pset.patient_ids),
        })
    index = {
        "format_version": MANIFEST_VERSION,
        "site_id": shard.site_id,
        "profile": asdict(shard.profile),
        "splits": splits,
    }
    with open(directory / "index.json", "w") as f:
        json.dump(index, f, indent=1)


def read_manifest(directory) -> SiteShard:
    from pathlib import Path

    directory = Path(directory)
    index_path = directory / "index.json"
    try:
        with open(index_path) as f:
            index = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"{index_path}: no such manifest")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{index_path}: invalid JSON (at byte {exc.pos})")

    version = index.get("format_version")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"{index_path}: unsupported manifest version {version}")

    profile_fields = dict(index["profile"])
    profile_fields["texture_shift"] = tuple(profile_fields["texture_shift"])
    profile = SiteProfile(**profile_fields)
    site_id = int(index["site_id"])

    sets = {}
    for split in index["splits"]:
        pixels = read_tensor(directory / split["tensor_file"])
        shape = tuple(split["shape"])
        if pixels.shape != shape:
            raise ManifestError(
                f"{directory}: split {split['name']} tensor shape "
                f"{pixels.shape} != index shape {shape}")
        labels = np.asarray(split["labels"], dtype=np.uint8)
        if len(labels) != pixels.shape[0]:
            raise ManifestError(
                f"{directory}: split {split['name']} has {len(labels)} labels "
                f"for {pixels.shape[0]} patches")
        if not set(np.unique(labels)) <= {0, 1}:
            raise ManifestError(f"{directory}: non-binary labels in {split['name']}")
        sets[split["name"]] = PatchSet(
            pixels, labels, list(split["patient_ids"]),
            np.full(pixels.shape[0], site_id, dtype=np.int16))
    if "train" not in sets or "validation" not in sets:
        raise ManifestError(f"{directory}: manifest must carry train and validation")
    try:
        return SiteShard(site_id, sets["train"], sets["validation"], profile)
    except ValueError as exc:
        raise ManifestError(f"{directory}: {exc}")
