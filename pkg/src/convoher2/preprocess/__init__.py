from convoher2.preprocess.augment import AugmentPolicy, augment
from convoher2.preprocess.batches import (
    DEFAULT_BATCH_SIZE,
    Batch,
    batch_slices,
    epoch_order,
    make_batches,
)
from convoher2.preprocess.image import (
    IMAGE_SIDE_PX,
    ImageTensor,
    decode_resize,
    denormalize,
    load_image,
    normalize,
)
from convoher2.preprocess.labels import one_hot, one_hot_batch

__all__ = [
    "AugmentPolicy",
    "Batch",
    "DEFAULT_BATCH_SIZE",
    "IMAGE_SIDE_PX",
    "ImageTensor",
    "augment",
    "batch_slices",
    "decode_resize",
    "denormalize",
    "epoch_order",
    "load_image",
    "make_batches",
    "normalize",
    "one_hot",
    "one_hot_batch",
]
