"""Semantic class vocabulary for label masks.

The first eleven ids coincide with the Helen / LaPa face-parsing classes.
The remaining ids cover procedural asset proxies and fold back onto that
vocabulary through :data:`DOWN_MAP`.
"""

from enum import IntEnum

import numpy as np


class SemanticClass(IntEnum):
    BACKGROUND = 0
    SKIN = 1
    LEFT_BROW = 2
    RIGHT_BROW = 3
    LEFT_EYE = 4
    RIGHT_EYE = 5
    NOSE = 6
    UPPER_LIP = 7
    INNER_MOUTH = 8
    LOWER_LIP = 9
    HAIR = 10
    CLOTHING = 11
    HEADWEAR = 12
    FACEWEAR = 13
    EYEWEAR = 14


NUM_CLASSES = len(SemanticClass)
FACIAL_CLASSES = tuple(SemanticClass(i) for i in range(1, 10))

# Extra classes -> Helen/LaPa ids. Headwear reads as hair in those datasets,
# the rest as background.
DOWN_MAP = np.array(
    list(range(11))
    + [SemanticClass.BACKGROUND, SemanticClass.HAIR, SemanticClass.BACKGROUND, SemanticClass.BACKGROUND],
    dtype=np.uint8,
)

# Super-classes used for the Helen "overall" score.
HELEN_MERGE = {
    "skin": (SemanticClass.SKIN,),
    "brows": (SemanticClass.LEFT_BROW, SemanticClass.RIGHT_BROW),
    "eyes": (SemanticClass.LEFT_EYE, SemanticClass.RIGHT_EYE),
    "nose": (SemanticClass.NOSE,),
    "mouth": (SemanticClass.UPPER_LIP, SemanticClass.INNER_MOUTH, SemanticClass.LOWER_LIP),
}


def down_map(mask):
    """Map a mask with extended ids onto the 11-class Helen/LaPa vocabulary."""
    return DOWN_MAP[np.asarray(mask)]
