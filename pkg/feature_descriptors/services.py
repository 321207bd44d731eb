import logging
from itertools import groupby

import numpy as np
import pandas as pd

from feature_autoencoder.services import AutoencoderServices
from feature_data.domain import DESCRIPTOR_COLUMNS, FeatureDescriptor
from feature_data.services import KEY_COLUMNS
from feature_descriptors.context import contextual_histogram, contextual_region, require_matching_mask
from feature_descriptors.statistics import first_order_stats
from feature_flow.services import LUMINANCE_WEIGHTS, FlowServices

logger = logging.getLogger(__name__)


class DescriptorServices:

    @staticmethod
    def first_order_stats(patch):
        return first_order_stats(patch)

    @staticmethod
    def stats_of_reconstruction(reconstruction):
        values = getattr(reconstruction, 'values', reconstruction)
        return first_order_stats(np.asarray(values) @ LUMINANCE_WEIGHTS)

    @staticmethod
    def contextual_region(bbox, image_width, image_height, width=4):
        return contextual_region(bbox, image_width, image_height, width)

    @staticmethod
    def contextual_histogram(region, class_mask):
        return contextual_histogram(region, class_mask)

    @staticmethod
    def assemble_descriptor(f_c, f_t, f_a):
        return FeatureDescriptor(contextual=f_c, temporal=f_t, appearance=f_a)

    @staticmethod
    def autoencoder_features(errors, reconstruction):
        """Three channel errors followed by the six statistics of the reconstruction"""
        stats = DescriptorServices.stats_of_reconstruction(reconstruction)
        return np.concatenate([np.asarray(errors, dtype=np.float64), stats.as_array()])

    @staticmethod
    def extract_object_descriptor(detection, frame, class_mask, flow, ae_app, ae_temp, color_cfg, ring_width=4):
        """
        Descriptor of one detected object

        ``frame`` is the frame the detection belongs to and ``flow`` the dense
        flow of its frame pair.

        PHASE 1: Temporal part from the flow-colour crop and the temporal autoencoder
        PHASE 2: Appearance part from the image crop and the appearance autoencoder
        PHASE 3: Contextual histogram over the band around the box
        """
        require_matching_mask(class_mask, frame)

        # PHASE 1: Temporal
        flow_patch = FlowServices.flow_rgb_patch(flow, detection.bbox, color_cfg)
        f_t = DescriptorServices.autoencoder_features(*AutoencoderServices.reconstruction_errors(ae_temp, flow_patch))

        # PHASE 2: Appearance
        appearance_patch = frame.crop(detection.bbox)
        f_a = DescriptorServices.autoencoder_features(
            *AutoencoderServices.reconstruction_errors(ae_app, appearance_patch)
        )

        # PHASE 3: Context
        region = contextual_region(detection.bbox, class_mask.width, class_mask.height, ring_width)
        f_c = contextual_histogram(region, class_mask)

        return DescriptorServices.assemble_descriptor(f_c, f_t, f_a)

    @staticmethod
    def _batched_features(state, patches, batch_size):
        rows = []
        for start in range(0, len(patches), batch_size):
            errors, reconstructions = AutoencoderServices.reconstruction_errors_batch(
                state, patches[start:start + batch_size]
            )
            rows.extend(
                DescriptorServices.autoencoder_features(e, r) for e, r in zip(errors, reconstructions)
            )
        return rows

    @staticmethod
    def extract_dataset(dataset, ae_app, ae_temp, flow_cfg, features_cfg):
        """
        Feature table (video, frame, id, 22 descriptor columns) for every detection

        PHASE 1: Per frame, resolve the flow once and crop appearance and flow patches
        PHASE 2: Run both autoencoders over the collected patches in batches
        PHASE 3: Assemble descriptors into a table sorted by (video, frame, id)
        """
        keys, contexts, appearance_patches, flow_patches = [], [], [], []

        # PHASE 1: Crop
        records = sorted(dataset.detections, key=lambda r: r.key)
        for (video_id, frame_index), group in groupby(records, key=lambda r: (r.video_id, r.frame_index)):
            class_mask = dataset.mask(video_id)
            frame = dataset.frame(video_id, frame_index)
            require_matching_mask(class_mask, frame)
            flow = FlowServices.flow_for_frame(dataset, video_id, frame_index, flow_cfg)
            for record in group:
                region = contextual_region(record.bbox, class_mask.width, class_mask.height, features_cfg.ring_width)
                keys.append(record.key)
                contexts.append(contextual_histogram(region, class_mask))
                appearance_patches.append(frame.crop(record.bbox))
                flow_patches.append(FlowServices.flow_rgb_patch(flow, record.bbox, flow_cfg.color))
        logger.info("cropped %d objects from %s", len(keys), dataset.root)

        # PHASE 2: Autoencoders
        temporal = DescriptorServices._batched_features(ae_temp, flow_patches, features_cfg.batch_size)
        appearance = DescriptorServices._batched_features(ae_app, appearance_patches, features_cfg.batch_size)

        # PHASE 3: Assemble
        descriptors = [
            DescriptorServices.assemble_descriptor(f_c, f_t, f_a).as_array()
            for f_c, f_t, f_a in zip(contexts, temporal, appearance)
        ]
        table = pd.DataFrame(
            np.array(descriptors).reshape(len(descriptors), len(DESCRIPTOR_COLUMNS)), columns=list(DESCRIPTOR_COLUMNS)
        )
        key_table = pd.DataFrame(keys, columns=KEY_COLUMNS)
        return pd.concat([key_table, table], axis=1)
