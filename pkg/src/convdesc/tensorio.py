"""Binary containers for feature-map tensors and descriptors, plus dataset manifests.

File formats (all little-endian):

  .fmap  "FMAP" | version u8 | dtype u8 (1 = float32) | 2 reserved zero bytes
         | K u32 | H u32 | W u32 | K*H*W float32, channel-major
  .desc  "DESC" | version u8 | N u32 | D u32
         | N x [id length u16, UTF-8 id bytes] | N*D float32 in record order

The manifest is a JSON document; see read_manifest.
"""

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, TensorFormatError

FMAP_MAGIC = b"FMAP"
DESC_MAGIC = b"DESC"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1

_FMAP_HEADER = struct.Struct("<4sBBHIII")
_DESC_HEADER = struct.Struct("<4sBII")

PROTOCOLS = ("oxford_map", "ukb_top4")


@dataclass
class FeatureMaps:
    """One image's K x H x W activation tensor for a single layer."""

    image_id: str
    layer: str
    data: np.ndarray  # shape (K, H, W), float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"feature maps must be 3-d, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {self.data.shape}")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


@dataclass
class DescriptorSet:
    """An ordered set of equal-length descriptor vectors, one per image."""

    layer: str
    ids: list
    vectors: np.ndarray  # shape (N, dim), float32

    def __post_init__(self):
        self.ids = list(self.ids)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"need one vector per id: {len(self.ids)} ids, matrix {self.vectors.shape}"
            )
        if self.vectors.shape[1] < 1:
            raise ValueError("descriptor dimensionality must be >= 1")
        seen = set()
        for image_id in self.ids:
            if image_id in seen:
                raise ValueError(f"duplicate image_id in descriptor set: {image_id!r}")
            seen.add(image_id)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)

    def vector_for(self, image_id):
        return self.vectors[self.ids.index(image_id)]


@dataclass
class QueryGroundTruth:
    """One query with Oxford-style relevance lists."""

    query_id: str
    image_id: str
    bbox: tuple | None  # (x1, y1, x2, y2) in image pixels
    good: list
    ok: list
    junk: list
    external: bool = False  # ids need not appear in the manifest image list

    def __post_init__(self):
        if self.bbox is not None:
            x1, y1, x2, y2 = self.bbox
            if not (0 <= x1 < x2 and 0 <= y1 < y2):
                raise ValueError(f"invalid bbox for query {self.query_id!r}: {self.bbox}")


@dataclass
class ManifestImage:
    image_id: str
    layers: dict  # layer name -> feature file path


@dataclass
class DatasetManifest:
    protocol: str
    images: list
    queries: list
    root: Path = field(default_factory=Path)

    def feature_path(self, image_id, layer):
        for img in self.images:
            if img.image_id == image_id:
                return self.root / img.layers[layer]
        raise KeyError(image_id)

    def image_ids(self):
        return [img.image_id for img in self.images]


def write_feature_maps(fm: FeatureMaps, path):
    """Write a tensor as a .fmap file."""
    k, h, w = fm.data.shape
    header = _FMAP_HEADER.pack(FMAP_MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, 0, k, h, w)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(fm.data.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"writing feature maps to {path}: {exc}") from exc


def read_feature_maps(path, image_id="", layer=""):
    """Read a .fmap file. Negative values trigger a warning, not an error."""
    with open(path, "rb") as fh:
        header = fh.read(_FMAP_HEADER.size)
        if len(header) < _FMAP_HEADER.size:
            raise TensorFormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, dtype, _reserved, k, h, w = _FMAP_HEADER.unpack(header)
        if magic != FMAP_MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        if dtype != DTYPE_FLOAT32:
            raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
        if min(k, h, w) < 1:
            raise TensorFormatError(f"{path}: zero dimension in K={k} H={h} W={w}")
        nbytes = k * h * w * 4
        payload = fh.read(nbytes)
        if len(payload) < nbytes:
            raise TensorFormatError(
                f"{path}: truncated payload, expected {nbytes} bytes got {len(payload)}"
            )
    data = np.frombuffer(payload, dtype="<f4").reshape(k, h, w)
    if data.size and float(data.min()) < 0:
        warnings.warn(f"{path}: negative activations (pre-ReLU dump?)", stacklevel=2)
    return FeatureMaps(image_id=image_id, layer=layer, data=data.copy())


def write_descriptor_set(ds: DescriptorSet, path):
    """Write a descriptor set as a .desc file."""
    try:
        with open(path, "wb") as fh:
            fh.write(_DESC_HEADER.pack(DESC_MAGIC, FORMAT_VERSION, len(ds), ds.dim))
            for image_id in ds.ids:
                raw = image_id.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
            fh.write(ds.vectors.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"writing descriptors to {path}: {exc}") from exc


def read_descriptor_set(path, layer=""):
    """Read a .desc file."""
    with open(path, "rb") as fh:
        header = fh.read(_DESC_HEADER.size)
        if len(header) < _DESC_HEADER.size:
            raise TensorFormatError(f"{path}: truncated header")
        magic, version, count, dim = _DESC_HEADER.unpack(header)
        if magic != DESC_MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        ids = []
        for _ in range(count):
            raw_len = fh.read(2)
            if len(raw_len) < 2:
                raise TensorFormatError(f"{path}: truncated id table")
            (n,) = struct.unpack("<H", raw_len)
            raw = fh.read(n)
            if len(raw) < n:
                raise TensorFormatError(f"{path}: truncated id table")
            ids.append(raw.decode("utf-8"))
        nbytes = count * dim * 4
        payload = fh.read(nbytes)
        if len(payload) < nbytes:
            raise TensorFormatError(
                f"{path}: truncated payload, expected {nbytes} bytes got {len(payload)}"
            )
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    return DescriptorSet(layer=layer, ids=ids, vectors=vectors)


def _parse_query(obj, idx, violations):
    required = {"id", "image", "good", "ok", "junk"}
    missing = required - set(obj)
    if missing:
        violations.append(f"query #{idx}: missing keys {sorted(missing)}")
        return None
    bbox = tuple(obj["bbox"]) if obj.get("bbox") is not None else None
    try:
        return QueryGroundTruth(
            query_id=obj["id"],
            image_id=obj["image"],
            bbox=bbox,
            good=list(obj["good"]),
            ok=list(obj["ok"]),
            junk=list(obj["junk"]),
            external=bool(obj.get("external", False)),
        )
    except ValueError as exc:
        violations.append(str(exc))
        return None


def read_manifest(path):
    """Read and validate a JSON dataset manifest.

    Validation is total: every violation is collected and reported in one
    ManifestError rather than stopping at the first.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    violations = []
    protocol = doc.get("protocol")
    if protocol not in PROTOCOLS:
        violations.append(f"unknown protocol {protocol!r} (expected one of {PROTOCOLS})")

    images = []
    seen_ids = set()
    for obj in doc.get("images", []):
        image_id = obj.get("id")
        if image_id in seen_ids:
            violations.append(f"duplicate image_id {image_id!r}")
        seen_ids.add(image_id)
        images.append(ManifestImage(image_id=image_id, layers=dict(obj.get("layers", {}))))

    queries = []
    for idx, obj in enumerate(doc.get("queries", [])):
        q = _parse_query(obj, idx, violations)
        if q is None:
            continue
        queries.append(q)
        good, ok, junk = set(q.good), set(q.ok), set(q.junk)
        for a, b, names in ((good, ok, "good/ok"), (good, junk, "good/junk"), (ok, junk, "ok/junk")):
            overlap = a & b
            if overlap:
                violations.append(
                    f"query {q.query_id!r}: disjointness violated between {names}: {sorted(overlap)}"
                )
        if not q.external:
            for image_id in sorted({q.image_id} | good | ok | junk):
                if image_id not in seen_ids:
                    violations.append(
                        f"query {q.query_id!r} references unknown image {image_id!r}"
                    )

    if violations:
        raise ManifestError(violations)
    return DatasetManifest(protocol=protocol, images=images, queries=queries, root=path.parent)


def write_manifest(manifest: DatasetManifest, path):
    """Write a manifest back out as JSON (paths stay as stored)."""
    doc = {
        "protocol": manifest.protocol,
        "images": [{"id": img.image_id, "layers": img.layers} for img in manifest.images],
        "queries": [
            {
                "id": q.query_id,
                "image": q.image_id,
                **({"bbox": list(q.bbox)} if q.bbox is not None else {}),
                "good": q.good,
                "ok": q.ok,
                "junk": q.junk,
                **({"external": True} if q.external else {}),
            }
            for q in manifest.queries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def import_oxford_ground_truth(gt_dir):
    """Parse classic per-query ground-truth text files into QueryGroundTruth records.

    Expects <name>_query.txt (image tag + 4 bbox floats) next to
    <name>_good.txt, <name>_ok.txt, <name>_junk.txt. The "oxc1_" prefix on
    query tags is stripped.
    """
    gt_dir = Path(gt_dir)
    queries = []
    for query_file in sorted(gt_dir.glob("*_query.txt")):
        name = query_file.name[: -len("_query.txt")]
        line = query_file.read_text(encoding="utf-8").strip()
        parts = line.split()
        if len(parts) != 5:
            raise TensorFormatError(f"{query_file}: expected 'tag x1 y1 x2 y2', got {line!r}")
        tag = parts[0]
        if tag.startswith("oxc1_"):
            tag = tag[len("oxc1_"):]
        bbox = tuple(float(p) for p in parts[1:])
        lists = {}
        for kind in ("good", "ok", "junk"):
            list_file = gt_dir / f"{name}_{kind}.txt"
            if list_file.exists():
                lists[kind] = list_file.read_text(encoding="utf-8").split()
            else:
                lists[kind] = []
        queries.append(
            QueryGroundTruth(
                query_id=name,
                image_id=tag,
                bbox=bbox,
                good=lists["good"],
                ok=lists["ok"],
                junk=lists["junk"],
            )
        )
    return queries
