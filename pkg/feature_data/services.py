"""
Loaders and writers for every on-disk format of the pipeline.

Loaders are pure: the same bytes always produce the same value and no state
is kept between calls. Writers go through the atomic helpers of core_main.
"""
import io
import json
import logging

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from core_main.artifacts import atomic_write_bytes, atomic_write_text
from core_main.exceptions import FormatError, RecordParseError, RecordValidationError
from core_main.validation import flatten_errors
from feature_data.domain import (
    DESCRIPTOR_COLUMNS,
    BoundingBox,
    ClassMask,
    DetectionRecord,
    FlowField,
    FrameAnnotation,
    ImagePatch,
)
from feature_data.serializers import DetectionRecordSerializer, FrameAnnotationSerializer, ObjectLabelSerializer

logger = logging.getLogger(__name__)

FLO_TAG = b'PIEH'
KEY_COLUMNS = ['video', 'frame', 'id']
OBJECT_LABEL_COLUMNS = KEY_COLUMNS + ['label', 'split']
SCORE_COLUMNS = ['video', 'frame', 'score', 'verdict']


class RecordIOServices:
    """Text record formats: detections, annotations, label/feature/score tables"""

    @staticmethod
    def load_detections(path, image_size=None):
        """
        Load JSON Lines detections

        PHASE 1: Parse each non-blank line as JSON
        PHASE 2: Validate fields with DetectionRecordSerializer
        PHASE 3: Check key uniqueness (and image intersection when a size is given)
        PHASE 4: Return records sorted by (frame, object id)
        """
        records = []
        seen = set()
        with open(path, 'r', encoding='utf-8') as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue

                # PHASE 1: Parse JSON
                try:
                    payload = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordParseError(f"malformed JSON ({exc.msg})", line_number) from exc
                if not isinstance(payload, dict):
                    raise RecordParseError("record must be a JSON object", line_number)

                # PHASE 2: Validate fields
                serializer = DetectionRecordSerializer(data=payload)
                if not serializer.is_valid():
                    raise RecordValidationError(f"line {line_number}: {flatten_errors(serializer.errors)}")
                data = serializer.validated_data
                record = DetectionRecord(
                    video_id=data['video'],
                    frame_index=data['frame'],
                    object_id=data['id'],
                    object_class=data['class'],
                    bbox=BoundingBox(*data['bbox']),
                )

                # PHASE 3: Dataset-level invariants
                if record.key in seen:
                    raise RecordValidationError(f"line {line_number}: duplicate detection key {record.key}")
                if image_size is not None and not record.bbox.intersects(*image_size):
                    raise RecordValidationError(f"line {line_number}: bounding box lies outside the image")
                seen.add(record.key)
                records.append(record)

        # PHASE 4: Sort
        records.sort(key=lambda r: (r.frame_index, r.object_id, r.video_id))
        return records

    @staticmethod
    def write_detections(path, records):
        lines = []
        for record in sorted(records, key=lambda r: (r.video_id, r.frame_index, r.object_id)):
            lines.append(json.dumps({
                'video': record.video_id,
                'frame': record.frame_index,
                'id': record.object_id,
                'class': record.object_class,
                'bbox': record.bbox.as_list(),
            }, separators=(',', ':')))
        atomic_write_text(path, ''.join(f"{line}\n" for line in lines))

    @staticmethod
    def load_frame_annotations(path):
        """
        Load a `frame,label` CSV

        PHASE 1: Read the table and check the header
        PHASE 2: Validate rows with FrameAnnotationSerializer
        PHASE 3: Reject duplicate frames, return in increasing frame order
        """
        # PHASE 1: Read table
        try:
            table = pd.read_csv(path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError as exc:
            raise RecordParseError(f"{path}: empty annotation file") from exc
        if list(table.columns) != ['frame', 'label']:
            raise RecordParseError(f"{path}: expected header 'frame,label', got {','.join(table.columns)}")

        # PHASE 2: Validate rows
        serializer = FrameAnnotationSerializer(data=table.to_dict(orient='records'), many=True)
        if not serializer.is_valid():
            for row_number, errors in enumerate(serializer.errors, start=2):
                if errors:
                    raise RecordValidationError(f"{path} line {row_number}: {flatten_errors(errors)}")
        annotations = [FrameAnnotation(row['frame'], row['label']) for row in serializer.validated_data]

        # PHASE 3: Uniqueness and ordering
        frames = [a.frame_index for a in annotations]
        if len(set(frames)) != len(frames):
            duplicates = sorted({f for f in frames if frames.count(f) > 1})
            raise RecordValidationError(f"{path}: duplicate frame index {duplicates[0]}")
        return sorted(annotations, key=lambda a: a.frame_index)

    @staticmethod
    def write_frame_annotations(path, annotations):
        table = pd.DataFrame(
            [(a.frame_index, a.label) for a in annotations], columns=['frame', 'label']
        )
        atomic_write_text(path, table.to_csv(index=False))

    @staticmethod
    def load_object_labels(path):
        table = pd.read_csv(path, dtype=str, keep_default_na=False)
        if list(table.columns) != OBJECT_LABEL_COLUMNS:
            raise RecordParseError(f"{path}: expected header {','.join(OBJECT_LABEL_COLUMNS)}")
        serializer = ObjectLabelSerializer(data=table.to_dict(orient='records'), many=True)
        if not serializer.is_valid():
            for row_number, errors in enumerate(serializer.errors, start=2):
                if errors:
                    raise RecordValidationError(f"{path} line {row_number}: {flatten_errors(errors)}")
        labels = pd.DataFrame(serializer.validated_data, columns=OBJECT_LABEL_COLUMNS)
        if labels.duplicated(KEY_COLUMNS).any():
            raise RecordValidationError(f"{path}: duplicate (video, frame, id) rows")
        return labels.astype({'frame': np.int64, 'id': np.int64, 'label': np.int64})

    @staticmethod
    def write_object_labels(path, table):
        ordered = table[OBJECT_LABEL_COLUMNS].sort_values(KEY_COLUMNS, kind='mergesort')
        return atomic_write_text(path, ordered.to_csv(index=False))

    @staticmethod
    def load_feature_table(path, columns=DESCRIPTOR_COLUMNS):
        """Feature CSV: video, frame, id, then descriptor columns (exact float round trip)"""
        table = pd.read_csv(path, dtype={'video': str}, float_precision='round_trip')
        expected = KEY_COLUMNS + list(columns)
        if list(table.columns) != expected:
            raise RecordParseError(f"{path}: unexpected feature columns {list(table.columns)}")
        values = table[list(columns)].to_numpy(dtype=np.float64)
        if not np.isfinite(values).all():
            raise RecordValidationError(f"{path}: feature table contains non-finite values")
        if table.duplicated(KEY_COLUMNS).any():
            raise RecordValidationError(f"{path}: duplicate (video, frame, id) rows")
        return table.astype({'frame': np.int64, 'id': np.int64})

    @staticmethod
    def write_feature_table(path, table):
        ordered = table.sort_values(KEY_COLUMNS, kind='mergesort')
        return atomic_write_text(path, ordered.to_csv(index=False))

    @staticmethod
    def write_scores(path, frames):
        """Frame scores as `video,frame,score,verdict` with 6-decimal scores"""
        table = pd.DataFrame(
            [(f.video_id, f.frame_index, f.score, f.verdict) for f in frames], columns=SCORE_COLUMNS
        )
        return atomic_write_text(path, table.to_csv(index=False, float_format='%.6f'))

    @staticmethod
    def load_scores(path):
        table = pd.read_csv(path, dtype={'video': str, 'verdict': str})
        if list(table.columns) != SCORE_COLUMNS:
            raise RecordParseError(f"{path}: expected header {','.join(SCORE_COLUMNS)}")
        return table.astype({'frame': np.int64, 'score': np.float64})


class RasterIOServices:
    """Netpbm rasters: P5 class masks and P6 frames, through Pillow"""

    @staticmethod
    def _open_netpbm(path, expected_mode, magic):
        with open(path, 'rb') as handle:
            if handle.read(2) != magic.encode('ascii'):
                raise FormatError(f"{path}: expected {magic} magic")
        try:
            with Image.open(path) as image:
                image_format, mode = image.format, image.mode
                image.load()
                pixels = np.array(image)
        except UnidentifiedImageError as exc:
            raise FormatError(f"{path}: not a netpbm file") from exc
        except (OSError, ValueError) as exc:
            raise FormatError(f"{path}: unreadable raster ({exc})") from exc
        if image_format != 'PPM' or mode != expected_mode:
            raise FormatError(f"{path}: expected a binary {magic} netpbm file with maxval 255")
        return pixels

    @staticmethod
    def load_class_mask(path):
        pixels = RasterIOServices._open_netpbm(path, 'L', 'P5')
        if pixels.max(initial=0) > 3:
            raise RecordValidationError(f"{path}: class index {int(pixels.max())} outside 0..3")
        return ClassMask(pixels)

    @staticmethod
    def write_class_mask(path, mask):
        buffer = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(mask.labels), mode='L').save(buffer, format='PPM')
        atomic_write_bytes(path, buffer.getvalue())

    @staticmethod
    def load_frame(path):
        return ImagePatch.from_uint8(RasterIOServices._open_netpbm(path, 'RGB', 'P6'))

    @staticmethod
    def write_frame(path, patch):
        buffer = io.BytesIO()
        Image.fromarray(patch.to_uint8(), mode='RGB').save(buffer, format='PPM')
        atomic_write_bytes(path, buffer.getvalue())


class FlowIOServices:
    """Middlebury .flo dense flow files"""

    @staticmethod
    def decode_flow(data, source='<bytes>'):
        """
        Decode .flo bytes

        PHASE 1: Check tag and header length
        PHASE 2: Check the payload size against the declared dimensions
        PHASE 3: De-interleave (u, v)
        """
        # PHASE 1: Tag and header
        if len(data) < 12:
            raise FormatError(f"{source}: truncated .flo header")
        if data[:4] != FLO_TAG:
            raise FormatError(f"{source}: bad .flo tag {data[:4]!r}")
        width, height = (int(n) for n in np.frombuffer(data, dtype='<i4', count=2, offset=4))
        if width < 1 or height < 1:
            raise FormatError(f"{source}: invalid .flo dimensions {width}x{height}")

        # PHASE 2: Payload size
        expected = 8 * width * height
        if len(data) - 12 != expected:
            raise FormatError(
                f"{source}: .flo payload has {len(data) - 12} bytes, {width}x{height} needs {expected}"
            )

        # PHASE 3: De-interleave
        payload = np.frombuffer(data, dtype='<f4', offset=12).reshape(height, width, 2)
        return FlowField(payload[..., 0].astype(np.float64), payload[..., 1].astype(np.float64))

    @staticmethod
    def encode_flow(flow):
        header = FLO_TAG + np.array([flow.width, flow.height], dtype='<i4').tobytes()
        payload = np.stack([flow.u, flow.v], axis=-1).astype('<f4')
        return header + payload.tobytes()

    @staticmethod
    def load_flow_field(path):
        with open(path, 'rb') as handle:
            return FlowIOServices.decode_flow(handle.read(), source=str(path))

    @staticmethod
    def write_flow_field(path, flow):
        atomic_write_bytes(path, FlowIOServices.encode_flow(flow))
