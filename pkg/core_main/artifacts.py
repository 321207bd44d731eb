"""
Atomic artifact writes and checksums.

Every stage writes through these helpers so an interrupted run never leaves
a half-written file or directory behind: content goes to a temporary sibling
first and is renamed into place once complete.
"""
import contextlib
import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


def canonical_json(payload):
    """Serialize to JSON with sorted keys and no incidental whitespace"""
    return json.dumps(payload, sort_keys=True, separators=(',', ':'), default=json_default)


def json_default(value):
    if isinstance(value, Path):
        return str(value)
    # numpy scalars and arrays
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def config_hash(payload):
    return hashlib.sha256(canonical_json(payload).encode('utf-8')).hexdigest()


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_tree(path):
    """
    Checksum of a file, or of a directory as the hash over its sorted relative
    paths and file digests
    """
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    digest = hashlib.sha256()
    for child in sorted(p for p in path.rglob('*') if p.is_file()):
        digest.update(child.relative_to(path).as_posix().encode('utf-8'))
        digest.update(sha256_file(child).encode('ascii'))
    return digest.hexdigest()


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp_name)
        raise
    logger.debug("wrote %s (%d bytes)", path, len(data))
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode('utf-8'))


@contextlib.contextmanager
def atomic_directory(path):
    """
    Yield a temporary directory that replaces ``path`` when the block exits
    cleanly; on error the temporary directory is removed and ``path`` is left
    untouched
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_dir = Path(tempfile.mkdtemp(prefix=f".{path.name}.", suffix='.tmp', dir=path.parent))
    try:
        yield tmp_dir
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp_dir, path)
    logger.debug("published directory %s", path)
