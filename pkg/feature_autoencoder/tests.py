import math
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from core_main.exceptions import ConfigError
from core_main.validation import build_from
from feature_autoencoder.augmentation import (
    augment_patch,
    flip_horizontal,
    rotate_quarter_turns,
    translate_patch,
)
from feature_autoencoder.domain import AugmentationConfig, AutoencoderSpec, TrainConfig
from feature_autoencoder.serializers import AutoencoderConfigSerializer
from feature_autoencoder.services import AutoencoderServices
from feature_data.bundle import BundleServices
from feature_data.domain import ImagePatch

TINY = AutoencoderSpec(input_size=16, encoder_widths=(4, 4, 4, 4), decoder_widths=(4, 4, 4))


def random_patches(count, size, seed, tint=(0.2, 0.3, 0.8), spread=0.1):
    rng = np.random.default_rng(seed)
    base = np.asarray(tint)[None, None, None, :]
    values = np.clip(base + spread * rng.standard_normal((count, size, size, 3)), 0, 1)
    return [ImagePatch(v) for v in values]


class ArchitectureTests(SimpleTestCase):

    def test_same_seed_same_weights(self):
        a = AutoencoderServices.ae_init(AutoencoderSpec(), seed=3).model.state_dict()
        b = AutoencoderServices.ae_init(AutoencoderSpec(), seed=3).model.state_dict()
        for name in a:
            self.assertTrue(torch.equal(a[name], b[name]), name)

    def test_different_seed_different_weights(self):
        a = AutoencoderServices.ae_init(AutoencoderSpec(), seed=3).model.state_dict()
        b = AutoencoderServices.ae_init(AutoencoderSpec(), seed=4).model.state_dict()
        self.assertTrue(any(not torch.equal(a[name], b[name]) for name in a))

    def test_batch_norm_starts_as_identity_affine(self):
        state = AutoencoderServices.ae_init(AutoencoderSpec(), seed=0)
        for name, tensor in state.model.state_dict().items():
            if name.endswith('1.weight') and tensor.ndim == 1:
                self.assertTrue(torch.all(tensor == 1))

    def test_output_shape(self):
        state = AutoencoderServices.ae_init(AutoencoderSpec(), seed=0)
        reconstruction = AutoencoderServices.ae_forward(state, random_patches(1, 32, 0)[0])
        self.assertEqual(reconstruction.values.shape, (32, 32, 3))

    def test_small_patch_is_resized(self):
        state = AutoencoderServices.ae_init(AutoencoderSpec(), seed=0)
        patch = ImagePatch(np.full((7, 11, 3), 0.4))
        self.assertEqual(AutoencoderServices.ae_forward(state, patch).values.shape, (32, 32, 3))

    def test_zero_head_outputs_half(self):
        state = AutoencoderServices.ae_init(AutoencoderSpec(), seed=0)
        with torch.no_grad():
            state.model.head.weight.zero_()
            state.model.head.bias.zero_()
        reconstruction = AutoencoderServices.ae_forward(state, random_patches(1, 32, 1)[0])
        np.testing.assert_array_equal(reconstruction.values, 0.5)

    def test_identical_inputs_identical_outputs(self):
        state = AutoencoderServices.ae_init(AutoencoderSpec(), seed=0)
        patch = random_patches(1, 32, 2)[0]
        out = AutoencoderServices.forward_batch(state, np.stack([patch.values, patch.values]))
        np.testing.assert_array_equal(out[0], out[1])

    def test_spec_rejects_mismatched_decoder(self):
        with self.assertRaises(ConfigError):
            AutoencoderSpec(input_size=32, encoder_widths=(16, 32, 64, 128), decoder_widths=(64, 32))

    def test_gradient_check(self):
        spec = AutoencoderSpec(input_size=8, encoder_widths=(2, 2, 2, 2), decoder_widths=(2, 2, 2))
        self.assertLess(AutoencoderServices.gradient_check(spec, seed=0), 1e-4)


class ReconstructionErrorTests(SimpleTestCase):

    def test_perfect_reconstruction(self):
        values = np.random.default_rng(0).random((4, 4, 3))
        np.testing.assert_array_equal(AutoencoderServices.channel_errors(values, values), [0, 0, 0])

    def test_constant_difference(self):
        errors = AutoencoderServices.channel_errors(np.ones((5, 5, 3)), np.full((5, 5, 3), 0.5))
        np.testing.assert_allclose(errors, [0.5, 0.5, 0.5])

    def test_matches_pixel_loop(self):
        rng = np.random.default_rng(4)
        inputs, outputs = rng.random((4, 4, 3)), rng.random((4, 4, 3))
        expected = []
        for c in range(3):
            total = 0.0
            for y in range(4):
                for x in range(4):
                    total += abs(inputs[y, x, c] - outputs[y, x, c])
            expected.append(total / 16)
        np.testing.assert_allclose(AutoencoderServices.channel_errors(inputs, outputs), expected, atol=1e-12)

    def test_batch_matches_single(self):
        state = AutoencoderServices.ae_init(TINY, seed=5)
        patches = random_patches(3, 16, 5)
        batch_errors, _ = AutoencoderServices.reconstruction_errors_batch(state, patches)
        single_errors, _ = AutoencoderServices.reconstruction_errors(state, patches[1])
        np.testing.assert_allclose(batch_errors[1], single_errors, atol=1e-5)


class TrainingTests(SimpleTestCase):

    def test_zero_epochs_rejected(self):
        with self.assertRaises(ConfigError):
            TrainConfig(epochs=0)

    def test_constant_patch_reaches_entropy_floor(self):
        target = 0.6
        cfg = TrainConfig(learning_rate=1e-2, epochs=200, batch_size=1, augmentation=AugmentationConfig(enabled=False))
        state = AutoencoderServices.ae_init(TINY, seed=0)
        trained = AutoencoderServices.ae_train(state, [ImagePatch(np.full((16, 16, 3), target))], cfg)
        floor = -(target * math.log(target) + (1 - target) * math.log(1 - target))
        self.assertLess(abs(trained.loss_history[-1] - floor), 1e-2)

    def test_same_seed_same_weights(self):
        cfg = TrainConfig(epochs=2, batch_size=4, seed=9)
        patches = random_patches(10, 16, 6)
        first = AutoencoderServices.ae_train(AutoencoderServices.ae_init(TINY, 1), patches, cfg)
        second = AutoencoderServices.ae_train(AutoencoderServices.ae_init(TINY, 1), patches, cfg)
        a, b = first.model.state_dict(), second.model.state_dict()
        for name in a:
            self.assertTrue(torch.equal(a[name], b[name]), name)
        self.assertEqual(first.loss_history, second.loss_history)

    def test_training_does_not_touch_input_state(self):
        state = AutoencoderServices.ae_init(TINY, 1)
        before = {k: v.clone() for k, v in state.model.state_dict().items()}
        AutoencoderServices.ae_train(state, random_patches(4, 16, 7), TrainConfig(epochs=1, batch_size=2))
        for name, tensor in state.model.state_dict().items():
            self.assertTrue(torch.equal(tensor, before[name]), name)

    def test_loss_trend_and_novelty_signal(self):
        spec = AutoencoderSpec(input_size=16, encoder_widths=(8, 16, 16, 16), decoder_widths=(16, 16, 8))
        cfg = TrainConfig(learning_rate=5e-3, epochs=30, batch_size=16, seed=2)
        normal = random_patches(64, 16, 10)
        trained = AutoencoderServices.ae_train(AutoencoderServices.ae_init(spec, 0), normal, cfg)

        history = trained.loss_history
        for previous, current in zip(history, history[1:]):
            self.assertLessEqual(current, previous * 1.05)

        held_out = random_patches(16, 16, 11)
        novel = random_patches(16, 16, 12, tint=(0.95, 0.85, 0.05))
        normal_error = AutoencoderServices.reconstruction_errors_batch(trained, held_out)[0].mean()
        novel_error = AutoencoderServices.reconstruction_errors_batch(trained, novel)[0].mean()
        self.assertLess(normal_error, novel_error)


class AugmentationTests(SimpleTestCase):

    def half_pattern(self):
        values = np.zeros((4, 4, 3))
        values[:, :2] = 1.0
        return ImagePatch(values)

    def test_horizontal_flip_swaps_halves(self):
        flipped = flip_horizontal(self.half_pattern()).values
        np.testing.assert_array_equal(flipped[:, :2], 0.0)
        np.testing.assert_array_equal(flipped[:, 2:], 1.0)

    def test_half_turn_is_involution(self):
        patch = random_patches(1, 6, 3)[0]
        twice = rotate_quarter_turns(rotate_quarter_turns(patch, 2), 2)
        np.testing.assert_array_equal(twice.values, patch.values)

    def test_zero_translation_is_identity(self):
        patch = random_patches(1, 6, 3)[0]
        np.testing.assert_array_equal(translate_patch(patch, 0, 0).values, patch.values)

    def test_translation_pads_with_edge(self):
        shifted = translate_patch(self.half_pattern(), 1, 0).values
        np.testing.assert_array_equal(shifted[:, :3], 1.0)
        np.testing.assert_array_equal(shifted[:, 3], 0.0)

    def test_augment_is_seeded_and_bounded(self):
        patch = random_patches(1, 8, 4)[0]
        cfg = AugmentationConfig()
        first = augment_patch(patch, 17, cfg)
        second = augment_patch(patch, 17, cfg)
        self.assertEqual(len(first), 9)
        self.assertIs(first[0], patch)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.values, b.values)
            self.assertTrue(a.values.min() >= 0.0 and a.values.max() <= 1.0)

    def test_non_square_patch_gets_all_quarter_turns(self):
        patch = ImagePatch(np.random.default_rng(5).random((6, 10, 3)))
        outputs = augment_patch(patch, 17, AugmentationConfig())
        self.assertEqual(len(outputs), 9)
        self.assertEqual([o.values.shape for o in outputs[3:6]], [(10, 6, 3), (6, 10, 3), (10, 6, 3)])
        np.testing.assert_array_equal(outputs[4].values, patch.values[::-1, ::-1])
        for other in outputs[6:]:
            self.assertEqual(other.values.shape, (6, 10, 3))


class PersistenceTests(SimpleTestCase):

    def test_bundle_roundtrip_preserves_reconstructions(self):
        state = AutoencoderServices.ae_train(
            AutoencoderServices.ae_init(TINY, 0), random_patches(6, 16, 8), TrainConfig(epochs=1, batch_size=3)
        )
        with tempfile.TemporaryDirectory() as tmp:
            bundle = BundleServices.roundtrip(AutoencoderServices.to_bundle(state, 'appearance'), Path(tmp) / 'appearance')
        restored = AutoencoderServices.from_bundle(bundle)
        probe = np.stack([p.values for p in random_patches(4, 16, 9)])
        np.testing.assert_array_equal(
            AutoencoderServices.forward_batch(restored, probe), AutoencoderServices.forward_batch(state, probe)
        )

    def test_config_serializer_defaults(self):
        cfg = build_from(AutoencoderConfigSerializer, {'epochs': 3}, 'autoencoder')
        self.assertEqual(cfg.spec.encoder_widths, (16, 32, 64, 128))
        self.assertEqual(cfg.train.epochs, 3)
        self.assertTrue(cfg.train.augmentation.enabled)

    def test_config_serializer_rejects_zero_epochs(self):
        with self.assertRaises(ConfigError):
            build_from(AutoencoderConfigSerializer, {'epochs': 0}, 'autoencoder')
