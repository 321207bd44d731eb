"""
On-disk dataset layout shared by the generator and by ingested perception
outputs::

    manifest.json                   format, videos (id, split, size, frame count), extras
    detections.jsonl                all detections of all videos
    object_labels.csv               video,frame,id,label,split
    videos/<id>/frames/000000.ppm   P6 frames
    videos/<id>/mask.pgm            P5 class mask (static per video)
    videos/<id>/annotations.csv     frame,label
    videos/<id>/flow/000000.flo     optional precomputed flow (frame t from pair t-1, t)
    videos/<id>/flow_gt/000000.flo  ground-truth flow written by the generator
"""
import json
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

from core_main.exceptions import DimensionMismatchError, MissingArtifactError, RecordValidationError
from feature_data.services import FlowIOServices, RasterIOServices, RecordIOServices

logger = logging.getLogger(__name__)

DATASET_FORMAT = 'vad-dataset/1'
FLOW_DIRECTORIES = {'ingested': 'flow', 'ground_truth': 'flow_gt'}


@dataclass(frozen=True)
class VideoInfo:
    video_id: str
    split: str
    width: int
    height: int
    frame_count: int


class DatasetLayout:
    """Path arithmetic only; nothing here touches the filesystem"""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest(self):
        return self.root / 'manifest.json'

    @property
    def detections(self):
        return self.root / 'detections.jsonl'

    @property
    def object_labels(self):
        return self.root / 'object_labels.csv'

    def video_dir(self, video_id):
        return self.root / 'videos' / video_id

    def frame(self, video_id, frame_index):
        return self.video_dir(video_id) / 'frames' / f'{frame_index:06d}.ppm'

    def mask(self, video_id):
        return self.video_dir(video_id) / 'mask.pgm'

    def annotations(self, video_id):
        return self.video_dir(video_id) / 'annotations.csv'

    def flow(self, video_id, frame_index, source):
        return self.video_dir(video_id) / FLOW_DIRECTORIES[source] / f'{frame_index:06d}.flo'


class VideoDataset:
    """
    Read-only view over a dataset directory

    Frames, masks and flow files are loaded lazily and memoised per instance.
    """

    def __init__(self, root, stage=None):
        self.layout = DatasetLayout(root)
        self.stage = stage
        self._require(self.layout.manifest)
        self.manifest = json.loads(self.layout.manifest.read_text(encoding='utf-8'))
        if self.manifest.get('format') != DATASET_FORMAT:
            raise RecordValidationError(f"{self.layout.manifest}: unsupported dataset format {self.manifest.get('format')!r}")
        self.videos = [
            VideoInfo(v['id'], v['split'], int(v['width']), int(v['height']), int(v['frames']))
            for v in self.manifest['videos']
        ]
        self._by_id = {video.video_id: video for video in self.videos}
        # bound per instance so the cache dies with the dataset
        self.frame = lru_cache(maxsize=64)(self._load_frame)
        self.mask = lru_cache(maxsize=None)(self._load_mask)

    def _require(self, path):
        if not Path(path).exists():
            raise MissingArtifactError(path, stage=self.stage)
        return path

    @property
    def root(self):
        return self.layout.root

    def video(self, video_id):
        try:
            return self._by_id[video_id]
        except KeyError:
            raise RecordValidationError(f"dataset has no video {video_id!r}") from None

    def videos_in_split(self, split):
        return [video for video in self.videos if video.split == split]

    @cached_property
    def detections(self):
        return RecordIOServices.load_detections(self._require(self.layout.detections))

    def detections_of(self, video_id):
        return [record for record in self.detections if record.video_id == video_id]

    @cached_property
    def object_labels(self):
        return RecordIOServices.load_object_labels(self._require(self.layout.object_labels))

    def annotations(self, video_id):
        return RecordIOServices.load_frame_annotations(self._require(self.layout.annotations(video_id)))

    def _check_size(self, video_id, raster, path):
        video = self.video(video_id)
        if (raster.width, raster.height) != (video.width, video.height):
            raise DimensionMismatchError(
                f"{path}: raster is {raster.width}x{raster.height}, manifest says {video.width}x{video.height}"
            )
        return raster

    def _load_frame(self, video_id, frame_index):
        path = self._require(self.layout.frame(video_id, frame_index))
        return self._check_size(video_id, RasterIOServices.load_frame(path), path)

    def _load_mask(self, video_id):
        path = self._require(self.layout.mask(video_id))
        return self._check_size(video_id, RasterIOServices.load_class_mask(path), path)

    def stored_flow(self, video_id, frame_index, source):
        return FlowIOServices.load_flow_field(self._require(self.layout.flow(video_id, frame_index, source)))

    @staticmethod
    def frame_pair(frame_index, frame_count):
        """Frame t pairs with t-1; frame 0 pairs with frame 1"""
        if frame_index == 0:
            return 0, min(1, frame_count - 1)
        return frame_index - 1, frame_index
