import json
import struct
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, override_settings

from core_main.exceptions import (
    BundleCorruptionError,
    BundleVersionError,
    DimensionMismatchError,
    FormatError,
    MissingArtifactError,
    RecordParseError,
    RecordValidationError,
)
from feature_data.bundle import BundleServices, ModelBundle
from feature_data.dataset import DATASET_FORMAT, DatasetLayout, VideoDataset
from feature_data.domain import (
    DESCRIPTOR_COLUMNS,
    BoundingBox,
    ClassMask,
    FeatureDescriptor,
    FlowField,
    FrameAnnotation,
    ImagePatch,
)
from feature_data.services import FlowIOServices, RasterIOServices, RecordIOServices


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, data):
        path = self.tmp / name
        if isinstance(data, str):
            path.write_text(data, encoding='utf-8')
        else:
            path.write_bytes(data)
        return path


class DomainTypeTests(SimpleTestCase):

    def test_bounding_box_rejects_empty_extent(self):
        with self.assertRaises(RecordValidationError):
            BoundingBox(0, 0, 0, 5)

    def test_bounding_box_clipping(self):
        box = BoundingBox(-3, 2, 10, 4)
        self.assertEqual(box.clipped(5, 5), BoundingBox(0, 2, 5, 3))
        self.assertIsNone(BoundingBox(10, 10, 2, 2).clipped(5, 5))

    def test_class_mask_rejects_unknown_class(self):
        with self.assertRaises(RecordValidationError):
            ClassMask(np.array([[0, 4]]))

    def test_image_patch_range(self):
        with self.assertRaises(RecordValidationError):
            ImagePatch(np.full((2, 2, 3), 1.5))

    def test_values_are_read_only(self):
        flow = FlowField.zeros(3, 2)
        with self.assertRaises(ValueError):
            flow.u[0, 0] = 1.0

    def test_descriptor_layout(self):
        descriptor = FeatureDescriptor(np.arange(4), np.arange(9) + 4, np.arange(9) + 13)
        self.assertEqual(len(descriptor), 22)
        np.testing.assert_array_equal(descriptor.as_array(), np.arange(22))
        self.assertEqual(len(DESCRIPTOR_COLUMNS), 22)

    def test_descriptor_rejects_nan(self):
        temporal = np.zeros(9)
        temporal[3] = np.nan
        with self.assertRaises(RecordValidationError):
            FeatureDescriptor(np.zeros(4), temporal, np.zeros(9))


class DetectionIOTests(TempDirMixin, SimpleTestCase):

    def test_single_record(self):
        path = self.write('d.jsonl', '{"video":"v1","frame":0,"id":3,"class":"vehicle","bbox":[10,20,30,40]}\n')
        [record] = RecordIOServices.load_detections(path)
        self.assertEqual(record.video_id, 'v1')
        self.assertEqual(record.object_id, 3)
        self.assertEqual(record.object_class, 'vehicle')
        self.assertEqual(record.bbox, BoundingBox(10, 20, 30, 40))

    def test_empty_file(self):
        self.assertEqual(RecordIOServices.load_detections(self.write('d.jsonl', '')), [])

    def test_zero_width_box(self):
        path = self.write('d.jsonl', '{"video":"v1","frame":0,"id":3,"class":"vehicle","bbox":[10,20,0,40]}\n')
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_detections(path)

    def test_unknown_class(self):
        path = self.write('d.jsonl', '{"video":"v1","frame":0,"id":3,"class":"boat","bbox":[1,1,2,2]}\n')
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_detections(path)

    def test_malformed_line_reports_line_number(self):
        path = self.write('d.jsonl', '{"video":"v1","frame":0,"id":3,"class":"human","bbox":[1,1,2,2]}\n{"video":\n')
        with self.assertRaises(RecordParseError) as ctx:
            RecordIOServices.load_detections(path)
        self.assertEqual(ctx.exception.line_number, 2)

    def test_duplicate_key(self):
        line = '{"video":"v1","frame":0,"id":3,"class":"human","bbox":[1,1,2,2]}\n'
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_detections(self.write('d.jsonl', line * 2))

    def test_sorted_by_frame_then_id(self):
        lines = [
            '{"video":"v","frame":2,"id":0,"class":"human","bbox":[1,1,2,2]}',
            '{"video":"v","frame":1,"id":5,"class":"human","bbox":[1,1,2,2]}',
            '{"video":"v","frame":1,"id":2,"class":"vehicle","bbox":[1,1,2,2]}',
        ]
        records = RecordIOServices.load_detections(self.write('d.jsonl', '\n'.join(lines)))
        self.assertEqual([(r.frame_index, r.object_id) for r in records], [(1, 2), (1, 5), (2, 0)])

    def test_write_then_load(self):
        path = self.write('d.jsonl', '{"video":"v","frame":4,"id":1,"class":"human","bbox":[3,1,2,9]}\n')
        records = RecordIOServices.load_detections(path)
        out = self.tmp / 'out.jsonl'
        RecordIOServices.write_detections(out, records)
        self.assertEqual(out.read_text(), path.read_text())


class RasterIOTests(TempDirMixin, SimpleTestCase):

    def test_class_mask(self):
        path = self.write('m.pgm', b'P5\n2 2\n255\n' + bytes([0, 1, 2, 3]))
        mask = RasterIOServices.load_class_mask(path)
        np.testing.assert_array_equal(mask.labels, [[0, 1], [2, 3]])

    def test_class_mask_value_out_of_range(self):
        path = self.write('m.pgm', b'P5\n2 2\n255\n' + bytes([0, 1, 7, 3]))
        with self.assertRaises(RecordValidationError):
            RasterIOServices.load_class_mask(path)

    def test_class_mask_wrong_magic(self):
        path = self.write('m.pgm', b'P6\n1 1\n255\n' + bytes([0, 1, 2]))
        with self.assertRaises(FormatError):
            RasterIOServices.load_class_mask(path)

    def test_garbage_raster(self):
        with self.assertRaises(FormatError):
            RasterIOServices.load_frame(self.write('f.ppm', b'XX\n1 1\n255\n\x00\x00\x00'))

    def test_truncated_frame(self):
        with self.assertRaises(FormatError):
            RasterIOServices.load_frame(self.write('f.ppm', b'P6\n4 4\n255\n' + bytes(10)))

    def test_mask_roundtrip(self):
        labels = np.random.default_rng(0).integers(0, 4, size=(5, 7))
        path = self.tmp / 'm.pgm'
        RasterIOServices.write_class_mask(path, ClassMask(labels))
        np.testing.assert_array_equal(RasterIOServices.load_class_mask(path).labels, labels)

    def test_frame_roundtrip(self):
        pixels = np.random.default_rng(1).integers(0, 256, size=(6, 4, 3), dtype=np.uint8)
        path = self.tmp / 'f.ppm'
        RasterIOServices.write_frame(path, ImagePatch.from_uint8(pixels))
        loaded = RasterIOServices.load_frame(path)
        np.testing.assert_array_equal(loaded.to_uint8(), pixels)
        self.assertLessEqual(loaded.values.max(), 1.0)


class DatasetTests(TempDirMixin, SimpleTestCase):

    def dataset(self, mask_shape):
        layout = DatasetLayout(self.tmp)
        manifest = {
            'format': DATASET_FORMAT,
            'videos': [{'id': 'v', 'split': 'test', 'width': 32, 'height': 24, 'frames': 1}],
        }
        layout.manifest.write_text(json.dumps(manifest), encoding='utf-8')
        RasterIOServices.write_frame(layout.frame('v', 0), ImagePatch(np.zeros((24, 32, 3))))
        RasterIOServices.write_class_mask(layout.mask('v'), ClassMask(np.zeros(mask_shape, dtype=np.uint8)))
        return VideoDataset(self.tmp)

    def test_rasters_match_the_manifest(self):
        dataset = self.dataset((24, 32))
        self.assertEqual((dataset.frame('v', 0).width, dataset.frame('v', 0).height), (32, 24))
        self.assertEqual((dataset.mask('v').width, dataset.mask('v').height), (32, 24))

    def test_mask_of_another_size(self):
        dataset = self.dataset((16, 16))
        dataset.frame('v', 0)
        with self.assertRaisesMessage(DimensionMismatchError, 'manifest says 32x24'):
            dataset.mask('v')


class FlowIOTests(TempDirMixin, SimpleTestCase):

    def test_single_pixel(self):
        path = self.write('f.flo', b'PIEH' + struct.pack('<ii', 1, 1) + struct.pack('<ff', 2.0, -1.0))
        flow = FlowIOServices.load_flow_field(path)
        self.assertEqual(flow.u[0, 0], 2.0)
        self.assertEqual(flow.v[0, 0], -1.0)

    def test_bad_tag(self):
        path = self.write('f.flo', b'XXXX' + struct.pack('<ii', 1, 1) + struct.pack('<ff', 2.0, -1.0))
        with self.assertRaises(FormatError):
            FlowIOServices.load_flow_field(path)

    def test_short_payload(self):
        path = self.write('f.flo', b'PIEH' + struct.pack('<ii', 4, 4) + bytes(8 * 12))
        with self.assertRaises(FormatError):
            FlowIOServices.load_flow_field(path)

    def test_row_major_interleaving(self):
        u = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
        data = FlowIOServices.encode_flow(FlowField(u, -u))
        self.assertEqual(struct.unpack('<ii', data[4:12]), (3, 2))
        self.assertEqual(struct.unpack('<ff', data[12 + 8:12 + 16]), (1.0, -1.0))
        decoded = FlowIOServices.decode_flow(data)
        np.testing.assert_array_equal(decoded.u, u)


class AnnotationIOTests(TempDirMixin, SimpleTestCase):

    def test_two_rows(self):
        annotations = RecordIOServices.load_frame_annotations(self.write('a.csv', 'frame,label\n0,0\n1,1\n'))
        self.assertEqual(annotations, [FrameAnnotation(0, 0), FrameAnnotation(1, 1)])

    def test_non_binary_label(self):
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_frame_annotations(self.write('a.csv', 'frame,label\n0,2\n'))

    def test_duplicate_frame(self):
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_frame_annotations(self.write('a.csv', 'frame,label\n5,0\n5,1\n'))

    def test_bad_header(self):
        with self.assertRaises(RecordParseError):
            RecordIOServices.load_frame_annotations(self.write('a.csv', 'idx,label\n0,0\n'))

    def test_rows_returned_in_frame_order(self):
        annotations = RecordIOServices.load_frame_annotations(self.write('a.csv', 'frame,label\n3,1\n1,0\n'))
        self.assertEqual([a.frame_index for a in annotations], [1, 3])


class TableIOTests(TempDirMixin, SimpleTestCase):

    def test_feature_table_floats_roundtrip_exactly(self):
        rng = np.random.default_rng(3)
        table = pd.DataFrame(rng.random((5, 22)), columns=list(DESCRIPTOR_COLUMNS))
        table.insert(0, 'id', np.arange(5))
        table.insert(0, 'frame', [0, 0, 1, 1, 2])
        table.insert(0, 'video', 'v1')
        path = self.tmp / 'features.csv'
        RecordIOServices.write_feature_table(path, table)
        loaded = RecordIOServices.load_feature_table(path)
        np.testing.assert_array_equal(
            loaded[list(DESCRIPTOR_COLUMNS)].to_numpy(), table[list(DESCRIPTOR_COLUMNS)].to_numpy()
        )

    def test_object_labels_reject_unknown_split(self):
        path = self.write('labels.csv', 'video,frame,id,label,split\nv,0,0,0,validation\n')
        with self.assertRaises(RecordValidationError):
            RecordIOServices.load_object_labels(path)


class BundleTests(TempDirMixin, SimpleTestCase):

    def make_bundle(self):
        rng = np.random.default_rng(11)
        return ModelBundle(
            kind='inference',
            metadata={'k1': 2, 'note': 'test'},
            tensors={'matrix': rng.normal(size=(3, 4)), 'vector': rng.normal(size=5), 'scalar': 0.25},
        )

    def test_roundtrip_is_exact(self):
        bundle = self.make_bundle()
        loaded = BundleServices.roundtrip(bundle, self.tmp / 'b')
        self.assertEqual(list(loaded.tensors), ['matrix', 'vector', 'scalar'])
        for name, array in bundle.tensors.items():
            self.assertEqual(loaded.tensors[name].tobytes(), array.tobytes())
            self.assertEqual(loaded.tensors[name].shape, array.shape)
        self.assertEqual(loaded.metadata, bundle.metadata)

    def test_payload_bytes_stable_across_saves(self):
        bundle = self.make_bundle()
        BundleServices.save(bundle, self.tmp / 'a')
        BundleServices.save(BundleServices.load(self.tmp / 'a'), self.tmp / 'b')
        self.assertEqual((self.tmp / 'a' / 'tensors.bin').read_bytes(), (self.tmp / 'b' / 'tensors.bin').read_bytes())

    def test_version_mismatch(self):
        BundleServices.save(self.make_bundle(), self.tmp / 'b')
        manifest_path = self.tmp / 'b' / 'manifest.json'
        manifest = json.loads(manifest_path.read_text())
        manifest['format_version'] = 'v999'
        manifest_path.write_text(json.dumps(manifest))
        with self.assertRaises(BundleVersionError):
            BundleServices.load(self.tmp / 'b')

    @override_settings(BUNDLE_FORMAT_VERSION='vad-bundle/2')
    def test_reader_version_is_authoritative(self):
        with override_settings(BUNDLE_FORMAT_VERSION='vad-bundle/1'):
            BundleServices.save(self.make_bundle(), self.tmp / 'b')
        with self.assertRaises(BundleVersionError):
            BundleServices.load(self.tmp / 'b')

    def test_flipped_payload_byte(self):
        BundleServices.save(self.make_bundle(), self.tmp / 'b')
        payload_path = self.tmp / 'b' / 'tensors.bin'
        payload = bytearray(payload_path.read_bytes())
        payload[20] ^= 0x01
        payload_path.write_bytes(bytes(payload))
        with self.assertRaises(BundleCorruptionError):
            BundleServices.load(self.tmp / 'b')

    def test_missing_role(self):
        with self.assertRaises(MissingArtifactError) as ctx:
            BundleServices.load_role(self.tmp, 'inference', stage='score')
        self.assertIn(str(self.tmp / 'inference'), str(ctx.exception))
