"""Open-set object detection against a user-supplied image gallery."""

from galdet._galdet import *  # noqa: F401,F403
from galdet._galdet import UNKNOWN, AUGMENTATIONS  # noqa: F401
