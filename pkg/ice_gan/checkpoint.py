"""
Checkpoint files.

Layout (little-endian):
    b"ICEG", u32 format version,
    then until end of file: u32 byte length, UTF-8 entry name, serialized
    tensor (see `tensor.tensor_to_bytes`).

Entry names are parameter paths. Names prefixed with "generator:" or
"discriminator:" separate the two models of a run; Adam moments and run
metadata use the suffix conventions of `ParamRegistry.state_dict`.
"""
from collections import OrderedDict
import os
import numpy as np
from .tensor import tensor_to_bytes, tensor_from_bytes

MAGIC = b"ICEG"
FORMAT_VERSION = 1


def save_checkpoint(path, entries):
    """Write `entries` (name -> array) to `path`.

    The file is first written to a temporary name and moved into place, so
    an interrupted save never replaces a good checkpoint.
    """
    chunks = [MAGIC, np.array([FORMAT_VERSION], dtype="<u4").tobytes()]
    for name, value in entries.items():
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype="<u4").tobytes())
        chunks.append(encoded)
        chunks.append(tensor_to_bytes(np.asarray(value, dtype=np.float64)))
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp_path, path)
    return path


def load_checkpoint(path):
    """Read a checkpoint file into an ordered dict of arrays.

    Raises
    ------
    FileNotFoundError if `path` does not exist. ValueError listing every
    problem found if the file is not a valid checkpoint.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint {path} not found.")
    with open(path, "rb") as f:
        buffer = f.read()
    problems = []
    if buffer[:4] != MAGIC:
        problems.append(f"bad magic bytes {buffer[:4]!r}, expected {MAGIC!r}")
    if len(buffer) < 8:
        problems.append("file too short for a header")
    else:
        version = int(np.frombuffer(buffer, dtype="<u4", count=1,
                                    offset=4)[0])
        if version != FORMAT_VERSION:
            problems.append(f"unsupported format version {version}, "
                            f"expected {FORMAT_VERSION}")
    if problems:
        raise ValueError(f"Invalid checkpoint {path}:\n  "
                         + "\n  ".join(problems))

    entries = OrderedDict()
    offset = 8
    while offset < len(buffer):
        try:
            if len(buffer) < offset + 4:
                raise ValueError("truncated entry name length")
            name_len = int(np.frombuffer(buffer, dtype="<u4", count=1,
                                         offset=offset)[0])
            offset += 4
            if len(buffer) < offset + name_len:
                raise ValueError("truncated entry name")
            name = buffer[offset:offset + name_len].decode("utf-8")
            offset += name_len
            tensor, offset = tensor_from_bytes(buffer, offset)
        except (ValueError, UnicodeDecodeError) as err:
            problems.append(f"entry {len(entries)} at byte {offset}: {err}")
            break
        if name in entries:
            problems.append(f"duplicate entry {name}")
        entries[name] = tensor.data
    if problems:
        raise ValueError(f"Invalid checkpoint {path}:\n  "
                         + "\n  ".join(problems))
    return entries


def registry_entries(registry, prefix):
    """State of `registry` as checkpoint entries under `prefix`."""
    return OrderedDict((f"{prefix}:{key}", value)
                       for key, value in registry.state_dict().items())


def entries_for_prefix(entries, prefix):
    """Select the entries written by `registry_entries` with `prefix`."""
    head = f"{prefix}:"
    return OrderedDict((key[len(head):], value)
                       for key, value in entries.items()
                       if key.startswith(head))
