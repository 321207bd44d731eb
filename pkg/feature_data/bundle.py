"""
Model bundles: a human-readable manifest plus a binary tensor payload.

Layout of one bundle directory::

    manifest.json   format_version, kind, metadata, tensor index, payload_sha256
    tensors.bin     per tensor: <u4 rank, <u4 shape..., <f4 row-major data

A bundle root written by the pipeline holds one sub-bundle per producing
stage (``appearance/``, ``temporal/``, ``inference/``).
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from core_main.artifacts import atomic_directory, sha256_bytes, json_default
from core_main.exceptions import BundleCorruptionError, BundleVersionError, FormatError, MissingArtifactError

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
PAYLOAD_NAME = 'tensors.bin'
BUNDLE_ROLES = ('appearance', 'temporal', 'inference')


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """
    Named float32 tensors plus JSON metadata

    Tensors keep their insertion order, which is also their payload order.
    """

    kind: str
    metadata: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        tensors = {}
        for name, value in self.tensors.items():
            array = np.array(value, dtype='<f4', copy=True)
            array.setflags(write=False)
            tensors[str(name)] = array
        object.__setattr__(self, 'tensors', tensors)

    def tensor(self, name):
        try:
            return self.tensors[name]
        except KeyError:
            raise BundleCorruptionError(f"{self.kind} bundle has no tensor {name!r}") from None


def _encode_tensor(array):
    header = np.array([array.ndim, *array.shape], dtype='<u4').tobytes()
    return header + np.ascontiguousarray(array, dtype='<f4').tobytes()


class BundleServices:

    @staticmethod
    def encode_payload(bundle):
        """Payload bytes and the tensor index written into the manifest"""
        chunks, index, offset = [], [], 0
        for name, array in bundle.tensors.items():
            chunk = _encode_tensor(array)
            index.append({'name': name, 'shape': list(array.shape), 'offset': offset, 'nbytes': len(chunk)})
            chunks.append(chunk)
            offset += len(chunk)
        return b''.join(chunks), index

    @staticmethod
    def save(bundle, path):
        """
        Write ``bundle`` to directory ``path`` atomically

        PHASE 1: Encode tensors and build the index
        PHASE 2: Write manifest and payload into a temporary sibling, then rename
        """
        # PHASE 1: Encode
        payload, index = BundleServices.encode_payload(bundle)
        manifest = {
            'format_version': settings.BUNDLE_FORMAT_VERSION,
            'kind': bundle.kind,
            'metadata': bundle.metadata,
            'tensors': index,
            'payload_sha256': sha256_bytes(payload),
        }

        # PHASE 2: Publish
        with atomic_directory(path) as tmp_dir:
            (tmp_dir / PAYLOAD_NAME).write_bytes(payload)
            (tmp_dir / MANIFEST_NAME).write_text(
                json.dumps(manifest, indent=2, sort_keys=True, default=json_default) + '\n', encoding='utf-8'
            )
        logger.info("saved %s bundle to %s (%d tensors, sha256 %s)",
                    bundle.kind, path, len(index), manifest['payload_sha256'][:12])
        return Path(path)

    @staticmethod
    def load(path, kind=None):
        """
        Read a bundle directory

        PHASE 1: Read the manifest and check the format version (and kind)
        PHASE 2: Verify the payload checksum
        PHASE 3: Decode tensors against the index
        """
        path = Path(path)
        manifest_path = path / MANIFEST_NAME
        payload_path = path / PAYLOAD_NAME
        if not manifest_path.is_file() or not payload_path.is_file():
            raise MissingArtifactError(path)

        # PHASE 1: Manifest
        try:
            manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as exc:
            raise BundleCorruptionError(f"{manifest_path}: unreadable manifest ({exc.msg})") from exc
        version = manifest.get('format_version')
        if version != settings.BUNDLE_FORMAT_VERSION:
            raise BundleVersionError(
                f"{path}: bundle format {version!r} is not supported (expected {settings.BUNDLE_FORMAT_VERSION!r})"
            )
        if kind is not None and manifest.get('kind') != kind:
            raise FormatError(f"{path}: expected a {kind!r} bundle, found {manifest.get('kind')!r}")

        # PHASE 2: Checksum
        payload = payload_path.read_bytes()
        if sha256_bytes(payload) != manifest.get('payload_sha256'):
            raise BundleCorruptionError(f"{payload_path}: payload checksum mismatch")

        # PHASE 3: Decode
        tensors = {}
        for entry in manifest.get('tensors', []):
            tensors[entry['name']] = BundleServices._decode_tensor(payload, entry, payload_path)
        return ModelBundle(kind=manifest['kind'], metadata=manifest.get('metadata', {}), tensors=tensors)

    @staticmethod
    def _decode_tensor(payload, entry, source):
        offset, nbytes = entry['offset'], entry['nbytes']
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes or nbytes < 4:
            raise BundleCorruptionError(f"{source}: tensor {entry['name']!r} is truncated")
        rank = int(np.frombuffer(chunk, dtype='<u4', count=1)[0])
        header_size = 4 * (1 + rank)
        if header_size > nbytes:
            raise BundleCorruptionError(f"{source}: tensor {entry['name']!r} has a bad rank header")
        shape = tuple(int(n) for n in np.frombuffer(chunk, dtype='<u4', count=rank, offset=4))
        if list(shape) != list(entry['shape']) or nbytes - header_size != 4 * int(np.prod(shape, dtype=np.int64)):
            raise BundleCorruptionError(f"{source}: tensor {entry['name']!r} header disagrees with the index")
        return np.frombuffer(chunk, dtype='<f4', offset=header_size).reshape(shape)

    @staticmethod
    def roundtrip(bundle, path):
        BundleServices.save(bundle, path)
        return BundleServices.load(path, kind=bundle.kind)

    @staticmethod
    def role_path(root, role):
        if role not in BUNDLE_ROLES:
            raise ValueError(f"unknown bundle role {role!r}")
        return Path(root) / role

    @staticmethod
    def load_role(root, role, stage=None):
        path = BundleServices.role_path(root, role)
        if not (path / MANIFEST_NAME).is_file():
            raise MissingArtifactError(path, stage=stage)
        return BundleServices.load(path, kind=role)
