"""Multi-contact whole-body IK and keyframe trajectory authoring workbench."""

__version__ = "0.1.0"
