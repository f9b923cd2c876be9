"""VGG-19 with its fully-connected layers rewritten as convolutions.

The transformed network accepts inputs of any size >= 32x32 for the
convolutional layers; fc6-conv and above need a minimum side of 224 (the fc6
kernel covers the whole 7x7 pool5 grid of a 224x224 input).
"""

import torch
import torch.nn as nn
import torchvision

# ReLU output index in vgg19().features for each named layer
CONV_LAYERS = {
    "conv1_1": 1, "conv1_2": 3,
    "conv2_1": 6, "conv2_2": 8,
    "conv3_1": 11, "conv3_2": 13, "conv3_3": 15, "conv3_4": 17,
    "conv4_1": 20, "conv4_2": 22, "conv4_3": 24, "conv4_4": 26,
    "conv5_1": 29, "conv5_2": 31, "conv5_3": 33, "conv5_4": 35,
}
FC_LAYERS = ("fc6-conv", "fc7-conv", "fc8-conv")
LAYERS = tuple(CONV_LAYERS) + FC_LAYERS

# layers at or above fc6-conv need the full 7x7 pool5 grid
MIN_FC_INPUT = 224


class FullyConvVGG(nn.Module):
    """VGG-19 features plus fc6/fc7/fc8 as convolutions (7x7, 1x1, 1x1)."""

    def __init__(self, features, fc6, fc7, fc8):
        super().__init__()
        self.features = features
        self.fc6 = fc6
        self.fc7 = fc7
        self.fc8 = fc8
        self.pool5 = nn.MaxPool2d(kernel_size=2, stride=2)

    def forward(self, x, layers):
        """Return a dict of requested layer outputs for one NCHW batch."""
        wanted = set(layers)
        unknown = wanted - set(LAYERS)
        if unknown:
            raise ValueError(f"unknown layers: {sorted(unknown)}")
        out = {}
        # features[:-1] stops before pool5, which belongs to the fc path
        for idx, module in enumerate(self.features[:-1]):
            x = module(x)
            for name, position in CONV_LAYERS.items():
                if position == idx and name in wanted:
                    out[name] = x
        if wanted & set(FC_LAYERS):
            h = torch.relu(self.fc6(self.pool5(x)))
            if "fc6-conv" in wanted:
                out["fc6-conv"] = h
            if wanted & {"fc7-conv", "fc8-conv"}:
                h = torch.relu(self.fc7(h))
                if "fc7-conv" in wanted:
                    out["fc7-conv"] = h
                if "fc8-conv" in wanted:
                    out["fc8-conv"] = self.fc8(h)
        return out


def _linear_to_conv(linear, in_channels, kernel):
    conv = nn.Conv2d(in_channels, linear.out_features, kernel_size=kernel)
    expected = in_channels * kernel * kernel
    if linear.in_features != expected:
        raise ValueError(
            f"fc weight shape mismatch: {linear.in_features} inputs, expected {expected}")
    with torch.no_grad():
        conv.weight.copy_(
            linear.weight.view(linear.out_features, in_channels, kernel, kernel))
        conv.bias.copy_(linear.bias)
    return conv


def transform_network(vgg=None, state_dict=None):
    """Turn a (pretrained) torchvision VGG-19 into its fully-convolutional form.

    fc6 becomes a 7x7 convolution over pool5, fc7/fc8 become 1x1 convolutions;
    on a 224x224 input the outputs match the original fc activations.
    """
    if vgg is None:
        vgg = torchvision.models.vgg19()
        if state_dict is not None:
            vgg.load_state_dict(state_dict)
    fc6_lin, fc7_lin, fc8_lin = (m for m in vgg.classifier if isinstance(m, nn.Linear))
    model = FullyConvVGG(
        features=vgg.features,
        fc6=_linear_to_conv(fc6_lin, 512, 7),
        fc7=_linear_to_conv(fc7_lin, 4096, 1),
        fc8=_linear_to_conv(fc8_lin, 4096, 1),
    )
    model.eval()
    return model


def load_model(weights_path=None, seed=None):
    """Build the transformed network from a state-dict file or random init."""
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        return transform_network(state_dict=state)
    if seed is not None:
        torch.manual_seed(seed)
    return transform_network()
