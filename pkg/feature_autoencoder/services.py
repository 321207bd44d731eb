import copy
import logging

import numpy as np
import torch
import torch.nn.functional as F

from core_main.exceptions import RecordValidationError, TrainingDivergedError
from feature_autoencoder.augmentation import augment_patch
from feature_autoencoder.domain import AutoencoderSpec, AutoencoderState
from feature_autoencoder.network import ConvAutoencoder, init_weights
from feature_data.bundle import ModelBundle
from feature_data.domain import ImagePatch
from feature_flow.services import FlowServices

logger = logging.getLogger(__name__)


def _to_tensor(values):
    """(n, h, w, 3) array -> (n, 3, h, w) float32 tensor"""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(values, dtype=np.float32).transpose(0, 3, 1, 2)))


def _to_array(tensor):
    return tensor.detach().cpu().numpy().transpose(0, 2, 3, 1).astype(np.float64)


class AutoencoderServices:

    @staticmethod
    def ae_init(spec, seed):
        model = init_weights(ConvAutoencoder(spec), seed)
        model.eval()
        return AutoencoderState(spec=spec, model=model)

    @staticmethod
    def resize_patch(patch, size):
        """Bilinear resize of an ImagePatch to ``size`` x ``size``"""
        if patch.width == size and patch.height == size:
            return patch
        resized = F.interpolate(_to_tensor(patch.values[None]), size=(size, size), mode='bilinear', align_corners=False)
        return ImagePatch(np.clip(_to_array(resized)[0], 0.0, 1.0))

    @staticmethod
    def _check_finite(state):
        for name, tensor in state.model.state_dict().items():
            if tensor.is_floating_point() and not torch.isfinite(tensor).all():
                raise RecordValidationError(f"autoencoder parameter {name} contains non-finite values")

    @staticmethod
    def forward_batch(state, values):
        """Reconstructions of an (n, s, s, 3) batch in inference mode"""
        AutoencoderServices._check_finite(state)
        state.model.eval()
        with torch.inference_mode():
            return _to_array(state.model(_to_tensor(values)))

    @staticmethod
    def ae_forward(state, patch):
        patch = AutoencoderServices.resize_patch(patch, state.spec.input_size)
        return ImagePatch(AutoencoderServices.forward_batch(state, patch.values[None])[0])

    @staticmethod
    def channel_errors(inputs, reconstructions):
        """Per-channel mean absolute difference over pixels; works on single patches or batches"""
        inputs = np.asarray(inputs, dtype=np.float64)
        reconstructions = np.asarray(reconstructions, dtype=np.float64)
        return np.abs(inputs - reconstructions).mean(axis=(-3, -2))

    @staticmethod
    def reconstruction_errors(state, patch):
        patch = AutoencoderServices.resize_patch(patch, state.spec.input_size)
        reconstruction = AutoencoderServices.ae_forward(state, patch)
        errors = AutoencoderServices.channel_errors(patch.values, reconstruction.values)
        return errors, reconstruction

    @staticmethod
    def reconstruction_errors_batch(state, patches):
        """(errors (n, 3), reconstructions (n, s, s, 3)) for a list of patches"""
        size = state.spec.input_size
        if not patches:
            return np.zeros((0, 3)), np.zeros((0, size, size, 3))
        inputs = np.stack([AutoencoderServices.resize_patch(p, size).values for p in patches])
        reconstructions = AutoencoderServices.forward_batch(state, inputs)
        return AutoencoderServices.channel_errors(inputs, reconstructions), reconstructions

    @staticmethod
    def ae_train(state, patches, cfg):
        """
        Train a copy of ``state`` with per-pixel binary cross-entropy and Adam

        PHASE 1: Stack patches into a float32 tensor
        PHASE 2: Seeded mini-batch epochs, abort on a non-finite loss
        PHASE 3: Return a new state with the per-epoch loss history
        """
        if not patches:
            raise RecordValidationError("autoencoder training needs at least one patch")

        # PHASE 1: Data
        size = state.spec.input_size
        data = _to_tensor(np.stack([AutoencoderServices.resize_patch(p, size).values for p in patches]))
        n = data.shape[0]

        # PHASE 2: Optimise
        model = copy.deepcopy(state.model)
        model.train()
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps
        )
        generator = torch.Generator().manual_seed(int(cfg.seed))
        history = list(state.loss_history)
        for epoch in range(cfg.epochs):
            order = torch.randperm(n, generator=generator)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = data[order[start:start + cfg.batch_size]]
                optimizer.zero_grad()
                loss = F.binary_cross_entropy(model(batch), batch)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite training loss at epoch {epoch + 1}, batch starting at sample {start}"
                    )
                loss.backward()
                optimizer.step()
                total += loss.item() * batch.shape[0]
            history.append(total / n)
            logger.debug("autoencoder epoch %d/%d: loss %.6f", epoch + 1, cfg.epochs, history[-1])

        # PHASE 3: Freeze
        model.eval()
        logger.info("trained autoencoder on %d patches for %d epochs, final loss %.6f", n, cfg.epochs, history[-1])
        return AutoencoderState(spec=state.spec, model=model, loss_history=tuple(history))

    @staticmethod
    def gradient_check(spec, seed=0, batch_size=3, epsilon=1e-5):
        """
        Largest relative error between autograd gradients and central
        differences of the training loss, in float64

        Relative error is |a - n| / max(|a|, |n|, 1e-4); near-zero gradients
        are therefore judged on absolute error.
        """
        model = init_weights(ConvAutoencoder(spec), seed).double()
        model.train()
        generator = torch.Generator().manual_seed(int(seed) + 1)
        x = torch.rand(batch_size, 3, spec.input_size, spec.input_size, generator=generator, dtype=torch.float64)

        def loss_value():
            return F.binary_cross_entropy(model(x), x)

        model.zero_grad()
        loss_value().backward()
        worst = 0.0
        with torch.no_grad():
            for parameter in model.parameters():
                analytic = parameter.grad.detach().clone().reshape(-1)
                flat = parameter.data.view(-1)
                for index in range(flat.numel()):
                    original = flat[index].item()
                    flat[index] = original + epsilon
                    plus = loss_value().item()
                    flat[index] = original - epsilon
                    minus = loss_value().item()
                    flat[index] = original
                    numeric = (plus - minus) / (2 * epsilon)
                    a = analytic[index].item()
                    worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-4))
        return worst

    @staticmethod
    def training_patches(dataset, role, flow_cfg, cfg):
        """
        Crops of normal objects from the training videos

        PHASE 1: Pick label-0 detections of train-split videos, capped at max_patches by seeded sampling
        PHASE 2: Crop appearance patches or flow-colour patches and resize
        PHASE 3: Augment each patch
        """
        # PHASE 1: Select detections
        labels = dataset.object_labels
        normal_keys = set(
            labels[(labels['split'] == 'train') & (labels['label'] == 0)][['video', 'frame', 'id']]
            .itertuples(index=False, name=None)
        )
        train_videos = {video.video_id for video in dataset.videos_in_split('train')}
        records = [r for r in dataset.detections if r.video_id in train_videos and r.key in normal_keys]
        if not records:
            raise RecordValidationError(f"{dataset.root}: no normal training objects for the {role} autoencoder")
        rng = np.random.default_rng(cfg.seed)
        if len(records) > cfg.max_patches:
            chosen = np.sort(rng.choice(len(records), size=cfg.max_patches, replace=False))
            records = [records[i] for i in chosen]

        # PHASE 2: Crop
        patches = []
        flows = {}
        for record in sorted(records, key=lambda r: r.key):
            if role == 'appearance':
                patch = dataset.frame(record.video_id, record.frame_index).crop(record.bbox)
            else:
                frame_key = (record.video_id, record.frame_index)
                if frame_key not in flows:
                    flows.clear()
                    flows[frame_key] = FlowServices.flow_for_frame(dataset, *frame_key, flow_cfg)
                patch = FlowServices.flow_rgb_patch(flows[frame_key], record.bbox, flow_cfg.color)
            patches.append(patch)

        # PHASE 3: Augment
        if not cfg.augmentation.enabled:
            return patches
        seeds = rng.integers(0, 2 ** 32, size=len(patches))
        augmented = []
        for patch, seed in zip(patches, seeds):
            augmented.extend(augment_patch(patch, int(seed), cfg.augmentation))
        logger.info("%s training set: %d objects, %d patches after augmentation", role, len(patches), len(augmented))
        return augmented

    @staticmethod
    def to_bundle(state, role, extra=None):
        tensors = {}
        for name, tensor in state.model.state_dict().items():
            tensors[name] = tensor.detach().cpu().numpy().astype(np.float32)
        metadata = {
            'role': role,
            'spec': state.spec.as_dict(),
            'loss_history': [float(np.float32(loss)) for loss in state.loss_history],
        }
        metadata.update(extra or {})
        return ModelBundle(kind=role, metadata=metadata, tensors=tensors)

    @staticmethod
    def from_bundle(bundle):
        spec = AutoencoderSpec(
            input_size=bundle.metadata['spec']['input_size'],
            encoder_widths=tuple(bundle.metadata['spec']['encoder_widths']),
            decoder_widths=tuple(bundle.metadata['spec']['decoder_widths']),
        )
        model = ConvAutoencoder(spec)
        reference = model.state_dict()
        state_dict = {}
        for name, target in reference.items():
            state_dict[name] = torch.from_numpy(np.array(bundle.tensor(name))).to(target.dtype).reshape(target.shape)
        model.load_state_dict(state_dict)
        model.eval()
        return AutoencoderState(spec=spec, model=model, loss_history=tuple(bundle.metadata.get('loss_history', ())))
