"""Registry of the exportable torchvision classification models."""

from __future__ import annotations

from torchvision import models as tv


class ModelNotFoundError(KeyError):
    pass


#: the 34 classification models exported by default
MODEL_IDS = (
    "alexnet",
    "densenet121",
    "densenet161",
    "densenet169",
    "densenet201",
    "googlenet",
    "mnasnet0_5",
    "mnasnet0_75",
    "mnasnet1_0",
    "mnasnet1_3",
    "mobilenet_v2",
    "resnet18",
    "resnet34",
    "resnet50",
    "resnet101",
    "resnet152",
    "resnext50_32x4d",
    "resnext101_32x8d",
    "shufflenet_v2_x0_5",
    "shufflenet_v2_x1_0",
    "shufflenet_v2_x1_5",
    "shufflenet_v2_x2_0",
    "squeezenet1_0",
    "squeezenet1_1",
    "vgg11",
    "vgg11_bn",
    "vgg13",
    "vgg13_bn",
    "vgg16",
    "vgg16_bn",
    "vgg19",
    "vgg19_bn",
    "wide_resnet50_2",
    "wide_resnet101_2",
)


def build_model(model_id: str):
    """Instantiate a zoo model (architecture only, no weight download)."""
    if model_id not in MODEL_IDS:
        raise ModelNotFoundError(f"unknown model id {model_id!r}")
    factory = getattr(tv, model_id, None)
    if factory is None:
        raise ModelNotFoundError(f"torchvision does not provide {model_id!r}")
    kwargs = {"weights": None}
    if model_id == "googlenet":
        # keep the auxiliary towers out of the traced forward pass
        kwargs.update(aux_logits=False, init_weights=False)
    return factory(**kwargs)
