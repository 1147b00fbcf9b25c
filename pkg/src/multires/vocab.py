"""The fixed PASCAL VOC category vocabulary."""

VOC_CLASSES = (
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
)

CLASS_INDEX = {name: i for i, name in enumerate(VOC_CLASSES)}


def is_voc_class(name):
    return name in CLASS_INDEX
