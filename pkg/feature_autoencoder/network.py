import math

import torch
from torch import nn

# torch momentum is the weight of the new batch statistic: running = 0.9 * running + 0.1 * batch
BATCH_NORM_MOMENTUM = 0.1


def conv_block(in_channels, out_channels, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_channels, momentum=BATCH_NORM_MOMENTUM),
        nn.ReLU(),
    )


class ConvAutoencoder(nn.Module):

    def __init__(self, spec):
        super().__init__()
        encoder, channels = [], 3
        for index, width in enumerate(spec.encoder_widths):
            encoder.append(conv_block(channels, width, stride=1 if index == 0 else 2))
            channels = width
        decoder = []
        for width in spec.decoder_widths:
            decoder.append(nn.Sequential(nn.Upsample(scale_factor=2, mode='nearest'), conv_block(channels, width)))
            channels = width
        self.encoder = nn.Sequential(*encoder)
        self.decoder = nn.Sequential(*decoder)
        self.head = nn.Conv2d(channels, 3, kernel_size=3, padding=1)

    def forward(self, x):
        return torch.sigmoid(self.head(self.decoder(self.encoder(x))))


@torch.no_grad()
def init_weights(model, seed):
    """
    Fan-in scaled uniform weights from a private generator; batch norm
    scale 1 and shift 0
    """
    generator = torch.Generator().manual_seed(int(seed))
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            gain = 3.0 if module is model.head else 6.0
            bound = math.sqrt(gain / fan_in)
            module.weight.uniform_(-bound, bound, generator=generator)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.BatchNorm2d):
            module.reset_parameters()
    return model
