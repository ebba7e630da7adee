"""Canonical semantic class sets shared by rendering, datasets, and masks.

Portrait maps use 20 classes (nose split into left/right halves, no
accessory classes); accessory maps use 5. Index 0 is always background
("none" for accessories).
"""

from __future__ import annotations

PORTRAIT_CLASSES: tuple[str, ...] = (
    "background", "skin",
    "left_brow", "right_brow",
    "left_eye", "right_eye",
    "left_ear", "right_ear",
    "left_nose", "right_nose",
    "upper_lip", "lower_lip", "mouth_interior", "teeth", "tongue",
    "beard", "hair", "neck", "cloth", "body",
)

ACCESSORY_CLASSES: tuple[str, ...] = (
    "none", "eyewear", "earring", "headwear", "necklace",
)

# lateral pairs swapped when a label map is mirrored
MIRROR_PAIRS: tuple[tuple[str, str], ...] = (
    ("left_brow", "right_brow"),
    ("left_eye", "right_eye"),
    ("left_ear", "right_ear"),
    ("left_nose", "right_nose"),
)

# portrait regions that may receive the secondary texture style
DECORATIVE_CLASSES: tuple[str, ...] = ("hair", "cloth")

PORTRAIT_INDEX = {name: i for i, name in enumerate(PORTRAIT_CLASSES)}
ACCESSORY_INDEX = {name: i for i, name in enumerate(ACCESSORY_CLASSES)}

assert len(PORTRAIT_CLASSES) == 20
assert len(ACCESSORY_CLASSES) == 5
