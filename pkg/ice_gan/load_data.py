"""Utility to load micro-expression corpora of different origins."""
from dataclasses import dataclass
import hashlib
import os
import h5py
import numpy as np
import pandas as pd
from scipy.linalg import lstsq
from scipy.ndimage import gaussian_filter
from .utils import (check_kwargs_and_set_defaults, debug_message, get_rng,
                    raise_exception_if_none)

CLASS_NAMES = ["positive", "negative", "surprise"]
DATASETS = ["toy", "smic", "casme2", "samm"]
IMAGE_SIZE = 128
NEIGHBOR_INDICES = [-2, -1, 1, 2]
# relative amplitude change of the toy neighbor frames, per neighbor index
NEIGHBOR_JITTER = {-2: -0.10, -1: -0.05, 1: 0.05, 2: 0.10}
MANIFEST_COLUMNS = ["subject", "dataset", "class", "onset_path", "apex_path"]

# Emotion tags of the source corpora mapped to the 3-class scheme.
LABEL_MAP = {
    "positive": "positive",
    "happiness": "positive",
    "happy": "positive",
    "negative": "negative",
    "anger": "negative",
    "contempt": "negative",
    "disgust": "negative",
    "fear": "negative",
    "sadness": "negative",
    "repression": "negative",
    "surprise": "surprise",
}


@dataclass(frozen=True, eq=False)
class Sample:
    """One onset/apex pair.

    Images are float arrays of shape (1, H, W) in [-1, 1].
    apex_neighbor_index is 0 for the apex frame itself and in
    {-2, -1, 1, 2} for neighboring frames used as extra apex samples.
    patch_mask, when known (toy corpus), marks the pixels of the
    class-specific deformation.
    """
    sample_id: str
    subject_id: str
    dataset_id: str
    label: str
    onset: np.ndarray
    apex: np.ndarray
    apex_neighbor_index: int = 0
    neighbor_frames: tuple = ()
    patch_mask: np.ndarray = None

    def __post_init__(self):
        problems = []
        if self.dataset_id not in DATASETS:
            problems.append(f"unknown dataset {self.dataset_id!r}")
        if self.label not in CLASS_NAMES:
            problems.append(f"unknown class {self.label!r}")
        if not -2 <= self.apex_neighbor_index <= 2:
            problems.append("apex_neighbor_index "
                            f"{self.apex_neighbor_index} not in [-2, 2]")
        if np.shape(self.onset) != np.shape(self.apex):
            problems.append(f"onset shape {np.shape(self.onset)} differs "
                            f"from apex shape {np.shape(self.apex)}")
        if problems:
            raise ValueError(f"Invalid sample {self.sample_id}: "
                             + "; ".join(problems))

    @property
    def class_index(self):
        return CLASS_NAMES.index(self.label)

    @property
    def subject_key(self):
        """Subject identifier unique across datasets."""
        return f"{self.dataset_id}:{self.subject_id}"


def to_memory(image01):
    """Map disk intensities [0, 1] to [-1, 1]."""
    return 2.0 * np.asarray(image01, dtype=np.float64) - 1.0


def to_disk(image):
    """Map [-1, 1] to [0, 1], clipping values outside the range."""
    return np.clip((np.asarray(image, dtype=np.float64) + 1.0) / 2.0,
                   0.0, 1.0)


def stack_samples(samples):
    """Arrays (onsets, apexes, class indices) of a list of samples."""
    onsets = np.stack([s.onset for s in samples])
    apexes = np.stack([s.apex for s in samples])
    labels = np.array([s.class_index for s in samples], dtype=int)
    return onsets, apexes, labels


# PGM (binary P5) images
def write_pgm(fname, image01):
    """Write an image in [0, 1] as 8-bit binary PGM."""
    image = np.squeeze(np.asarray(image01, dtype=np.float64))
    if image.ndim != 2:
        raise ValueError(f"PGM images must be 2d, got shape {image.shape}")
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    height, width = pixels.shape
    with open(fname, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return fname


def read_pgm(fname):
    """Read a binary PGM (P5) image into a float array in [0, 1]."""
    with open(fname, "rb") as f:
        content = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(content) and content[pos:pos + 1].isspace():
            pos += 1
        if content[pos:pos + 1] == b"#":
            while pos < len(content) and content[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(content) and not content[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{fname}: truncated PGM header")
        tokens.append(content[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{fname}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if maxval < 256 else ">u2"
    count = width * height
    data = np.frombuffer(content, dtype=dtype, count=count, offset=pos)
    return data.reshape(height, width).astype(np.float64) / maxval


# Toy faces
@dataclass(frozen=True)
class ToyFaceSpec:
    """Geometry and texture seed of one toy subject."""
    subject_index: int
    texture_seed: int
    cx: float
    eye_y: float
    mouth_y: float
    mouth_half: float
    eye_dx: float = 22.0
    face_rx: float = 44.0
    face_ry: float = 56.0
    blob_sigma: float = 4.0
    image_size: int = IMAGE_SIZE

    def _grid(self):
        return np.mgrid[0:self.image_size, 0:self.image_size].astype(float)

    def _blob(self, y, x, sigma):
        yy, xx = self._grid()
        return np.exp(-((yy - y)**2 + (xx - x)**2) / (2 * sigma**2))

    def base_face(self):
        """Neutral face in [0, 1], shape (H, W)."""
        yy, xx = self._grid()
        cy = (self.eye_y + self.mouth_y) / 2
        radius = np.sqrt(((xx - self.cx) / self.face_rx)**2
                         + ((yy - cy) / self.face_ry)**2)
        face = 0.15 + 0.4 / (1.0 + np.exp((radius - 1.0) * 12.0))
        for side in (-1, 1):
            face -= 0.2 * self._blob(self.eye_y, self.cx + side * self.eye_dx,
                                     3.0)
        mouth = np.exp(-((yy - self.mouth_y)**2 / (2 * 2.0**2)
                         + (xx - self.cx)**2 / (2 * self.mouth_half**2)))
        face -= 0.15 * mouth
        texture = get_rng(self.texture_seed).normal(0.0, 0.03, face.shape)
        face += gaussian_filter(texture, 2.0)
        return np.clip(face, 0.0, 1.0)

    def class_anchors(self, label):
        """Blob centers (y, x) of the deformation of class `label`."""
        if label == "positive":
            return [(self.mouth_y, self.cx - self.mouth_half),
                    (self.mouth_y, self.cx + self.mouth_half)]
        if label == "surprise":
            return [(self.eye_y - 12.0, self.cx - self.eye_dx - 4.0),
                    (self.eye_y - 12.0, self.cx + self.eye_dx + 4.0)]
        if label == "negative":
            return [(self.eye_y - 6.0, self.cx)]
        raise ValueError(f"Unknown class {label!r}. Must be one of "
                         f"{CLASS_NAMES}")

    def class_patch(self, label, amplitude):
        """Additive deformation of class `label` with peak `amplitude`."""
        patch = np.zeros((self.image_size, self.image_size))
        for y, x in self.class_anchors(label):
            patch += self._blob(y, x, self.blob_sigma)
        return amplitude * patch

    def class_patch_mask(self, label, threshold=0.05):
        """Pixels where the unit-amplitude patch exceeds `threshold`."""
        return self.class_patch(label, 1.0) > threshold


def toy_face_specs(n_subjects, seed=0, image_size=IMAGE_SIZE):
    """Deterministic geometry of the toy subjects generated from `seed`."""
    rng = get_rng(seed)
    specs = []
    for index in range(n_subjects):
        center = image_size / 2
        specs.append(ToyFaceSpec(
            subject_index=index,
            texture_seed=int(rng.integers(0, 2**31 - 1)),
            cx=center + rng.uniform(-3, 3),
            eye_y=50.0 * image_size / IMAGE_SIZE + rng.uniform(-3, 3),
            mouth_y=92.0 * image_size / IMAGE_SIZE + rng.uniform(-3, 3),
            mouth_half=16.0 + rng.uniform(-2, 2),
            image_size=image_size))
    return specs


def generate_toy_corpus(n_subjects=20, samples_per_subject=9, seed=0,
                        image_size=IMAGE_SIZE, min_amplitude=0.1,
                        max_amplitude=0.3):
    """Generate the procedural toy corpus.

    Each subject has its own face geometry and texture. Its samples are
    split over the three classes as evenly as possible (counts differ by at
    most one); the onset is the neutral face and the apex adds the
    class-specific Gaussian-blob patch with an amplitude drawn from
    [min_amplitude, max_amplitude].

    parameters:
    -----------
    n_subjects: int
        At least 3.
    samples_per_subject: int
        At least 3.
    seed: int
        The corpus is a pure function of its arguments.
    image_size: int
        Side of the square images.

    returns:
    --------
    List of Sample with dataset_id "toy".
    """
    if n_subjects < 3:
        raise ValueError(f"n_subjects must be >= 3, got {n_subjects}")
    if samples_per_subject < 3:
        raise ValueError("samples_per_subject must be >= 3, got "
                         f"{samples_per_subject}")
    if not 0 < min_amplitude <= max_amplitude:
        raise ValueError(f"Invalid amplitude range [{min_amplitude}, "
                         f"{max_amplitude}]")
    rng = get_rng(seed)
    samples = []
    for spec in toy_face_specs(n_subjects, seed, image_size):
        base = spec.base_face()
        onset = to_memory(base)[None]
        labels = [CLASS_NAMES[k % 3] for k in range(samples_per_subject)]
        labels = [labels[i] for i in rng.permutation(len(labels))]
        subject_id = f"s{spec.subject_index:02d}"
        for k, label in enumerate(labels):
            amplitude = rng.uniform(min_amplitude, max_amplitude)
            apex = np.clip(base + spec.class_patch(label, amplitude), 0.0,
                           1.0)
            samples.append(Sample(
                sample_id=f"toy_{subject_id}_{k:02d}",
                subject_id=subject_id,
                dataset_id="toy",
                label=label,
                onset=onset.copy(),
                apex=to_memory(apex)[None],
                patch_mask=spec.class_patch_mask(label)))
    return samples


def augment_neighbors(sample):
    """The apex sample plus its four neighbor samples.

    Neighbors come from `sample.neighbor_frames` when available (real
    corpora); otherwise they are synthesized by scaling the apex-onset
    difference by 1 + jitter with jitter in [-10%, 10%].
    All five share subject, class and onset.
    """
    if sample.apex_neighbor_index != 0:
        raise ValueError(f"{sample.sample_id} is already a neighbor sample.")
    out = [sample]
    if sample.neighbor_frames:
        if len(sample.neighbor_frames) != len(NEIGHBOR_INDICES):
            raise ValueError(f"{sample.sample_id} needs 4 neighbor frames, "
                             f"got {len(sample.neighbor_frames)}")
        frames = list(sample.neighbor_frames)
    else:
        delta = sample.apex - sample.onset
        frames = [np.clip(sample.onset + delta * (1.0 + NEIGHBOR_JITTER[k]),
                          -1.0, 1.0) for k in NEIGHBOR_INDICES]
    for k, frame in zip(NEIGHBOR_INDICES, frames):
        out.append(Sample(
            sample_id=f"{sample.sample_id}_n{k:+d}",
            subject_id=sample.subject_id,
            dataset_id=sample.dataset_id,
            label=sample.label,
            onset=sample.onset,
            apex=frame,
            apex_neighbor_index=k,
            patch_mask=sample.patch_mask))
    return out


def augment_corpus(samples):
    """`augment_neighbors` applied to every sample."""
    return [s for sample in samples for s in augment_neighbors(sample)]


def map_label(tag):
    """Map an emotion tag of a source corpus to the 3-class scheme."""
    key = str(tag).strip().lower()
    if key not in LABEL_MAP:
        raise ValueError(f"unknown class label {tag!r}")
    return LABEL_MAP[key]


def _load_frame(path, base_dir, image_size, problems, what):
    full = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(full):
        problems.append(f"{what}: missing file {full}")
        return None
    try:
        image = read_pgm(full)
    except ValueError as err:
        problems.append(f"{what}: {err}")
        return None
    if image.shape != (image_size, image_size):
        problems.append(f"{what}: geometry {image.shape[1]}x"
                        f"{image.shape[0]} in {full}, expected "
                        f"{image_size}x{image_size}")
        return None
    return to_memory(image)[None]


def ingest_real(manifest_path, image_size=IMAGE_SIZE, debug_level=0):
    """Load a pre-cropped corpus described by a CSV manifest.

    The manifest has the header subject,dataset,class,onset_path,apex_path
    and optionally neighbor_paths (4 paths separated by ";"). Paths are
    relative to the manifest directory unless absolute. Images must be
    binary PGM grayscale of image_size x image_size.

    Raises
    ------
    FileNotFoundError if the manifest does not exist. ValueError listing
    every problem (missing files, unknown labels, wrong geometry, missing
    columns) if any row is invalid.
    """
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"Manifest {manifest_path} not found.")
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    try:
        table = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        table = pd.DataFrame(columns=MANIFEST_COLUMNS)
    missing_columns = [c for c in MANIFEST_COLUMNS if c not in table.columns]
    if missing_columns:
        raise ValueError(f"Manifest {manifest_path} lacks columns "
                         f"{missing_columns}")
    if len(table) == 0:
        debug_message(f"Manifest {manifest_path} lists no samples.",
                      debug_level)
        return []
    problems = []
    samples = []
    counters = {}
    for row_number, row in enumerate(table.to_dict("records"), start=2):
        what = f"row {row_number}"
        row_problems = []
        try:
            label = map_label(row["class"])
        except ValueError as err:
            row_problems.append(f"{what}: {err}")
            label = None
        dataset = str(row["dataset"]).strip().lower()
        if dataset not in DATASETS:
            row_problems.append(f"{what}: unknown dataset {row['dataset']!r}")
        onset = _load_frame(row["onset_path"], base_dir, image_size,
                            row_problems, f"{what} onset")
        apex = _load_frame(row["apex_path"], base_dir, image_size,
                           row_problems, f"{what} apex")
        neighbors = ()
        neighbor_field = str(row.get("neighbor_paths", "") or "").strip()
        if neighbor_field:
            paths = [p.strip() for p in neighbor_field.split(";")]
            if len(paths) != len(NEIGHBOR_INDICES):
                row_problems.append(f"{what}: expected 4 neighbor paths, got"
                                    f" {len(paths)}")
            else:
                neighbors = tuple(_load_frame(p, base_dir, image_size,
                                              row_problems,
                                              f"{what} neighbor {k:+d}")
                                  for k, p in zip(NEIGHBOR_INDICES, paths))
        if row_problems:
            problems.extend(row_problems)
            continue
        subject = str(row["subject"]).strip()
        key = (dataset, subject)
        counters[key] = counters.get(key, 0) + 1
        samples.append(Sample(
            sample_id=f"{dataset}_{subject}_{counters[key] - 1:02d}",
            subject_id=subject,
            dataset_id=dataset,
            label=label,
            onset=onset,
            apex=apex,
            neighbor_frames=neighbors))
    if problems:
        raise ValueError(f"Invalid manifest {manifest_path}:\n  "
                         + "\n  ".join(problems))
    return samples


# HDF5 cache
def save_corpus_h5(samples, fname):
    """Save a corpus to HDF5, one group per sample."""
    with h5py.File(fname, "w") as f:
        for index, sample in enumerate(samples):
            group = f.create_group(f"{index:06d}")
            for key in ["sample_id", "subject_id", "dataset_id", "label"]:
                group.attrs[key] = getattr(sample, key)
            group.attrs["apex_neighbor_index"] = sample.apex_neighbor_index
            group.create_dataset("onset", data=sample.onset)
            group.create_dataset("apex", data=sample.apex)
            if sample.neighbor_frames:
                group.create_dataset("neighbor_frames",
                                     data=np.stack(sample.neighbor_frames))
            if sample.patch_mask is not None:
                group.create_dataset("patch_mask", data=sample.patch_mask)
    print(f"Corpus of {len(samples)} samples saved to {fname}")
    return fname


def load_corpus_h5(fname):
    """Load a corpus saved by `save_corpus_h5`."""
    if not os.path.exists(fname):
        raise FileNotFoundError(f"Corpus file {fname} not found.")
    samples = []
    with h5py.File(fname, "r") as f:
        for name in sorted(f.keys()):
            group = f[name]
            neighbors = (tuple(np.array(group["neighbor_frames"]))
                         if "neighbor_frames" in group else ())
            samples.append(Sample(
                sample_id=str(group.attrs["sample_id"]),
                subject_id=str(group.attrs["subject_id"]),
                dataset_id=str(group.attrs["dataset_id"]),
                label=str(group.attrs["label"]),
                onset=np.array(group["onset"]),
                apex=np.array(group["apex"]),
                apex_neighbor_index=int(group.attrs["apex_neighbor_index"]),
                neighbor_frames=neighbors,
                patch_mask=(np.array(group["patch_mask"])
                            if "patch_mask" in group else None)))
    return samples


def corpus_hash(samples):
    """SHA-256 hex digest of sample metadata and image bytes."""
    digest = hashlib.sha256()
    for sample in samples:
        meta = "|".join([sample.sample_id, sample.subject_id,
                         sample.dataset_id, sample.label,
                         str(sample.apex_neighbor_index)])
        digest.update(meta.encode("utf-8"))
        for image in (sample.onset, sample.apex, *sample.neighbor_frames):
            digest.update(np.ascontiguousarray(image, dtype="<f8").tobytes())
    return digest.hexdigest()


def separability_accuracy(samples, pool=8):
    """Training accuracy of a least-squares linear classifier on apex pixels.

    Apex images are block-averaged by `pool` before fitting one-hot targets
    with an intercept.
    """
    _, apexes, labels = stack_samples(samples)
    n, _, h, w = apexes.shape
    pooled = apexes.reshape(n, h // pool, pool, w // pool, pool).mean(
        axis=(2, 4)).reshape(n, -1)
    design = np.hstack([pooled, np.ones((n, 1))])
    targets = np.eye(len(CLASS_NAMES))[labels]
    coef, *_ = lstsq(design, targets)
    return float(np.mean(np.argmax(design @ coef, axis=1) == labels))


def get_available_corpus_origins(return_dict=False):
    """Get available origins of corpora that could be loaded.

    parameters:
    -----------
    return_dict: bool
        If True, returns a dictionary of origins and corresponding loading
        functions, otherwise just the list of origins.
        Default is False.
    """
    origin_dict = {
        "toy": generate_toy_corpus,
        "manifest": ingest_real,
        "h5": load_corpus_h5}

    return origin_dict if return_dict else list(origin_dict.keys())


def get_load_corpus_defaults(origin="toy"):
    """Get the dictionary of default kwargs for the given corpus origin."""
    if origin == "toy":
        return {"n_subjects": 20,
                "samples_per_subject": 9,
                "seed": 0,
                "image_size": IMAGE_SIZE,
                "min_amplitude": 0.1,
                "max_amplitude": 0.3}
    elif origin == "manifest":
        return {"manifest_path": None,
                "image_size": IMAGE_SIZE,
                "debug_level": 0}
    elif origin == "h5":
        return {"fname": None}
    else:
        raise ValueError(f"Unknown origin {origin}. Must be one of "
                         f"{get_available_corpus_origins()}.")


def load_corpus(origin="toy", **kwargs):
    """Load a corpus.

    Parameters
    ----------
    origin: str
        - "toy": generate the procedural toy corpus.
        - "manifest": ingest a pre-cropped corpus through a CSV manifest.
        - "h5": read a corpus cached with `save_corpus_h5`.
    kwargs:
        Allowed kwargs depend on origin. Run
        `load_data.get_load_corpus_defaults(origin)` to see allowed keys and
        defaults.

    Returns
    -------
    List of Sample.
    """
    available_origins = get_available_corpus_origins(return_dict=True)
    if origin not in available_origins:
        raise ValueError(f"Unknown origin {origin}. "
                         f"Should be one of {list(available_origins.keys())}")
    kwargs = check_kwargs_and_set_defaults(
        kwargs, get_load_corpus_defaults(origin), f"{origin} corpus kwargs",
        "load_data.get_load_corpus_defaults()")
    raise_exception_if_none(
        kwargs, [k for k in ["manifest_path", "fname"] if k in kwargs],
        f"{origin} corpus", "load_data.get_load_corpus_defaults()")
    return available_origins[origin](**kwargs)
