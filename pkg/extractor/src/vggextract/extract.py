"""Batch activation dumping: image files in, .fmap files out."""

from pathlib import Path

import torch
from PIL import Image

from .fmap import write_fmap
from .model import FC_LAYERS, MIN_FC_INPUT
from .preprocess import ensure_min_side, resize_image, to_network_input

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp")


def find_image(images_dir, image_id):
    """Locate <id>.<ext> under the image directory."""
    images_dir = Path(images_dir)
    for ext in IMAGE_EXTENSIONS:
        candidate = images_dir / f"{image_id}{ext}"
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no image file for id {image_id!r} in {images_dir}")


def dump_activations(model, img, layers, policy, out_dir, name, log=None):
    """Run one image through the network and write one .fmap per layer."""
    img = resize_image(img, policy)
    if set(layers) & set(FC_LAYERS):
        img = ensure_min_side(img, MIN_FC_INPUT)
    x = torch.from_numpy(to_network_input(img))
    with torch.no_grad():
        outputs = model(x, layers)
    out_dir = Path(out_dir)
    written = []
    for layer in layers:
        data = outputs[layer][0].numpy()
        path = out_dir / f"{name}.{layer}.fmap"
        write_fmap(data, path)
        written.append(path)
        if log:
            log(f"{name} {layer}: {data.shape[0]}x{data.shape[1]}x{data.shape[2]} -> {path}")
    return written


def extract_batch(model, jobs, layers, policy, out_dir, log=None):
    """Process (name, image_path, bbox) jobs; returns the list of failed names.

    bbox is an optional (x1, y1, x2, y2) pixel crop applied before resizing.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    failures = []
    for name, image_path, bbox in jobs:
        try:
            img = Image.open(image_path)
            img.load()
        except OSError as exc:
            failures.append(name)
            if log:
                log(f"error: cannot read {image_path}: {exc}")
            continue
        if bbox is not None:
            x1, y1, x2, y2 = (round(v) for v in bbox)
            img = img.crop((x1, y1, x2, y2))
        dump_activations(model, img, layers, policy, out_dir, name, log=log)
    return failures
