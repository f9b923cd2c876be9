import pytest
import torch
import torchvision


@pytest.fixture(scope="session")
def vgg():
    torch.manual_seed(0)
    model = torchvision.models.vgg19()
    model.eval()
    return model


@pytest.fixture(scope="session")
def fcn(vgg):
    from vggextract.model import transform_network

    return transform_network(vgg)
